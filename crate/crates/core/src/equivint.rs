//! Exponential equivariant intersection numbers as Duistermaat–Heckman
//! integrals over the moment polytope.
//!
//! Sign ledger, fixed once for the whole crate:
//! - the DH measure is Lebesgue measure `dμ` on `P` (pushforward by minus
//!   the moment map);
//! - the exponent is `-⟨x, ℏξ⟩`, so only `ξ_eff = ℏξ` enters any integral;
//! - `(κ.e^L; ξ) = -∫_{∂P} e^{-⟨x, ℏξ⟩} dσ`.
//!
//! At `ξ = 0` these reproduce `(Lⁿ)/n!` and `(K_X.L^{n-1})/(n-1)!`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expint::{self, dot, CellKernel, ExpIntError};
use crate::polytope::Polytope;

/// `(λ, ℏ, ξ)`; every integral depends on `ℏ` and `ξ` only through `ℏξ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub lambda: f64,
    pub hbar: f64,
    pub xi: Vec<f64>,
}

impl Params {
    pub fn new(lambda: f64, hbar: f64, xi: Vec<f64>) -> Result<Self> {
        if hbar == 0.0 || !hbar.is_finite() {
            return Err(Error::invalid("hbar must be a nonzero finite number"));
        }
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("xi must have finite entries"));
        }
        Ok(Self { lambda, hbar, xi })
    }

    /// `ξ = 0` with the given `λ`, `ℏ`.
    pub fn at_origin(lambda: f64, hbar: f64, n: usize) -> Result<Self> {
        Self::new(lambda, hbar, vec![0.0; n])
    }

    pub fn xi_eff(&self) -> Vec<f64> {
        self.xi.iter().map(|x| self.hbar * x).collect()
    }

    pub fn with_xi(&self, xi: Vec<f64>) -> Self {
        Self { xi, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    /// Same `ξ_eff` expressed with another `ℏ'`: `ξ' = (ℏ/ℏ') ξ`.
    pub fn rescaled(&self, hbar_prime: f64) -> Result<Self> {
        let r = self.hbar / hbar_prime;
        Self::new(self.lambda, hbar_prime, self.xi.iter().map(|x| r * x).collect())
    }

    fn check_dim(&self, p: &Polytope) -> Result<()> {
        if self.xi.len() != p.dim() {
            return Err(Error::invalid(format!(
                "xi has {} entries but the polytope has dimension {}",
                self.xi.len(),
                p.dim()
            )));
        }
        Ok(())
    }
}

/// `∫_P Π ℓ · e^{-⟨x, η⟩} dμ` for each request (a list of linear forms),
/// sharing one kernel per simplex. Sums run in simplex order.
pub(crate) fn interior_moments(p: &Polytope, eta: &[f64], requests: &[Vec<Vec<f64>>]) -> std::result::Result<Vec<f64>, ExpIntError> {
    let mut out = vec![0.0; requests.len()];
    for s in p.simplices() {
        let mut k = CellKernel::new(s.points_f64(), s.volume_f64(), eta)?;
        for (o, r) in out.iter_mut().zip(requests) {
            let forms: Vec<&[f64]> = r.iter().map(|f| f.as_slice()).collect();
            *o += k.linear_moment(&forms)?;
        }
    }
    Ok(out)
}

/// Boundary analogue of [`interior_moments`] with respect to `dσ`.
pub(crate) fn boundary_moments(p: &Polytope, eta: &[f64], requests: &[Vec<Vec<f64>>]) -> std::result::Result<Vec<f64>, ExpIntError> {
    let mut out = vec![0.0; requests.len()];
    for c in p.boundary_cells() {
        let mut k = CellKernel::new(c.points_f64(), c.mass_f64(), eta)?;
        for (o, r) in out.iter_mut().zip(requests) {
            let forms: Vec<&[f64]> = r.iter().map(|f| f.as_slice()).collect();
            *o += k.linear_moment(&forms)?;
        }
    }
    Ok(out)
}

pub(crate) fn basis(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

/// The DH integrals from which every invariant is assembled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSet {
    pub xi_eff: Vec<f64>,
    /// `∫_P e^{-⟨x, ξ_eff⟩} dμ`
    pub i0: f64,
    /// `∫_P ⟨x, ξ_eff⟩ e^{-⟨x, ξ_eff⟩} dμ`
    pub i1_xi: f64,
    /// `∫_P ⟨x, ζ⟩ e^{-⟨x, ξ_eff⟩} dμ` for each requested `ζ`
    pub i1: Vec<f64>,
    /// `∫_{∂P} e^{-⟨x, ξ_eff⟩} dσ`
    pub b0: f64,
}

impl MomentSet {
    pub fn compute(p: &Polytope, params: &Params, zetas: &[Vec<f64>]) -> Result<Self> {
        params.check_dim(p)?;
        let eta = params.xi_eff();
        let mut reqs = vec![vec![], vec![eta.clone()]];
        reqs.extend(zetas.iter().map(|z| vec![z.clone()]));
        let interior = interior_moments(p, &eta, &reqs)?;
        let b0 = expint::boundary_exp(p, &eta)?;
        Ok(Self { xi_eff: eta, i0: interior[0], i1_xi: interior[1], i1: interior[2..].to_vec(), b0 })
    }
}

/// `⁽ℏ⁾(e^{L_T}; ξ) = ∫_P e^{-⟨x, ℏξ⟩} dμ`.
pub fn exp_intersection(p: &Polytope, params: &Params) -> Result<f64> {
    params.check_dim(p)?;
    Ok(expint::polytope_exp(p, &params.xi_eff())?)
}

/// Largest `k` accepted by [`power_intersection`].
pub const MAX_POWER: usize = 6;

/// `⁽ℏ⁾(L^{·n+k}; ξ) = ((n+k)!/k!) ∫_P (-⟨x, ℏξ⟩)^k dμ`.
pub fn power_intersection(p: &Polytope, params: &Params, k: usize) -> Result<f64> {
    params.check_dim(p)?;
    if k > MAX_POWER {
        return Err(Error::invalid(format!("power k = {k} exceeds {MAX_POWER}")));
    }
    let n = p.dim();
    let eta: Vec<f64> = params.xi_eff().iter().map(|x| -x).collect();
    let ratio: f64 = (1..=n).map(|j| (k + j) as f64).product();
    Ok(ratio * expint::polytope_power_moment(p, &eta, k)?)
}

/// `⁽ℏ⁾(L_T.e^{L_T}; ξ) = ∫_P (n - ⟨x, ℏξ⟩) e^{-⟨x, ℏξ⟩} dμ`.
pub fn l_exp_intersection(p: &Polytope, params: &Params) -> Result<f64> {
    let m = MomentSet::compute(p, params, &[])?;
    Ok(p.dim() as f64 * m.i0 - m.i1_xi)
}

/// `⁽ℏ⁾(κ_X^T.e^{L_T}; ξ) = -∫_{∂P} e^{-⟨x, ℏξ⟩} dσ`.
pub fn kappa_exp_intersection(p: &Polytope, params: &Params) -> Result<f64> {
    params.check_dim(p)?;
    Ok(-expint::boundary_exp(p, &params.xi_eff())?)
}

/// The exponential intersection evaluated with `(ℏ, ξ)` and with
/// `(ℏ', (ℏ/ℏ') ξ)`.
pub fn rescale_check(p: &Polytope, params: &Params, hbar_prime: f64) -> Result<(f64, f64)> {
    let other = params.rescaled(hbar_prime)?;
    Ok((exp_intersection(p, params)?, exp_intersection(p, &other)?))
}

/// Partial sums of `Σ_k (1/k!) ∫_P (-⟨x, ℏξ⟩)^k dμ`, i.e. of the series
/// `Σ_k (L^{·n+k}; ξ)/(n+k)!` whose limit is `(e^L; ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub partial_sums: Vec<f64>,
    pub integral: f64,
    /// `vol(P) · r^{K+1} e^r / (K+1)!` with `r = max_P |⟨x, ℏξ⟩|`, a bound on
    /// the remainder after each partial sum.
    pub tail_bounds: Vec<f64>,
}

impl SeriesReport {
    pub fn final_error(&self) -> f64 {
        (self.partial_sums.last().unwrap() - self.integral).abs()
    }
}

pub fn exp_series(p: &Polytope, params: &Params, max_k: usize) -> Result<SeriesReport> {
    params.check_dim(p)?;
    let eta = params.xi_eff();
    let neg: Vec<f64> = eta.iter().map(|x| -x).collect();
    let n = p.dim();
    let fact_n: f64 = (1..=n).map(|j| j as f64).product();
    let mut terms = vec![0.0; max_k + 1];
    // term_k = Σ_S n! vol(S) h_k(-⟨v_i, η⟩) / (n+k)!
    for s in p.simplices() {
        let vals: Vec<f64> = s.points_f64().iter().map(|v| dot(v, &neg)).collect();
        let mut h = vec![0.0; max_k + 1];
        h[0] = 1.0;
        for &v in &vals {
            for j in 1..=max_k {
                h[j] += v * h[j - 1];
            }
        }
        let mut inv = 1.0 / fact_n;
        for (k, hk) in h.iter().enumerate() {
            if k > 0 {
                inv /= (n + k) as f64;
            }
            terms[k] += fact_n * s.volume_f64() * hk * inv;
        }
    }
    let mut partial_sums = Vec::with_capacity(max_k + 1);
    let mut acc = 0.0;
    for t in &terms {
        acc += t;
        partial_sums.push(acc);
    }
    let r = p
        .vertices_f64()
        .iter()
        .map(|v| dot(v, &eta).abs())
        .fold(0.0, f64::max);
    let vol = p.volume_f64();
    let mut bound = vol * r.exp();
    let mut tail_bounds = Vec::with_capacity(max_k + 1);
    for k in 0..=max_k {
        bound *= r / (k + 1) as f64;
        tail_bounds.push(bound);
    }
    Ok(SeriesReport { partial_sums, integral: expint::polytope_exp(p, &eta)?, tail_bounds })
}
