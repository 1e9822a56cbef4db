//! μ-Futaki invariants of product and toric test configurations.
//!
//! With `η = ℏξ`, `I₀ = ∫_P e^{-⟨x,η⟩}`, `B₀ = ∫_{∂P} e^{-⟨x,η⟩} dσ` and
//! `I₁ = ∫_P ⟨x,η⟩ e^{-⟨x,η⟩}`, a convex PL function `q` has
//!
//! ```text
//! F̌ut(q) = 2π Bq/I₀ + λ Iq₁/I₀ - s̄ Iq/I₀,   s̄ = 2π B₀/I₀ + λ I₁/I₀.
//! ```
//!
//! For a vector `ζ` the invariant is the η-directional derivative of `μ̌` in
//! direction `ζ`, which agrees with `F̌ut(⟨ζ, ·⟩)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::equivint::{interior_moments, MomentSet, Params};
use crate::error::{Error, Result};
use crate::exact::{rat, rat_frac, to_f64, Rational};
use crate::expint::{AffineForm, CellKernel};
use crate::io::{PlJson, SamplerSpec};
use crate::polytope::{AffinePiece, PlFunction, Polytope};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    /// `2π (Bq/I₀ - B₀ Iq/I₀²)`
    pub kappa_term: f64,
    /// `Iq₁/I₀ - I₁ Iq/I₀²`, the coefficient of `λ`
    pub lambda_sigma_term: f64,
    pub mean_s: f64,
    pub i0: f64,
    pub b0: f64,
    pub i1: f64,
    pub iq: f64,
    pub bq: f64,
    pub iq1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Configuration {
    Vector { zeta: Vec<f64> },
    Toric { q: PlJson },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FutakiReport {
    pub value: f64,
    /// `ℏ · value`, the normalization in which the invariant is read as a
    /// ξ-derivative rather than an η-derivative.
    pub hbar_scaled: f64,
    pub breakdown: Breakdown,
    pub params: Params,
    pub configuration: Configuration,
}

fn assemble(params: &Params, i0: f64, b0: f64, i1: f64, iq: f64, bq: f64, iq1: f64, configuration: Configuration) -> FutakiReport {
    let kappa_term = TWO_PI * (bq / i0 - b0 * iq / (i0 * i0));
    let lambda_sigma_term = iq1 / i0 - i1 * iq / (i0 * i0);
    let value = kappa_term + params.lambda * lambda_sigma_term;
    let mean_s = TWO_PI * b0 / i0 + params.lambda * i1 / i0;
    FutakiReport {
        value,
        hbar_scaled: params.hbar * value,
        breakdown: Breakdown { kappa_term, lambda_sigma_term, mean_s, i0, b0, i1, iq, bq, iq1 },
        params: params.clone(),
        configuration,
    }
}

/// `⁽ℏ⁾s̄^λ_ξ = 2π B₀/I₀ + λ I₁/I₀`.
pub fn mean_s(p: &Polytope, params: &Params) -> Result<f64> {
    let m = MomentSet::compute(p, params, &[])?;
    Ok(TWO_PI * m.b0 / m.i0 + params.lambda * m.i1_xi / m.i0)
}

/// `⁽ℏ⁾μ̌^λ(ξ) = -2π B₀/I₀ + λ (n - I₁/I₀ - log I₀)`.
pub fn mu_character(p: &Polytope, params: &Params) -> Result<f64> {
    let m = MomentSet::compute(p, params, &[])?;
    let n = p.dim() as f64;
    Ok(-TWO_PI * m.b0 / m.i0 + params.lambda * (n - m.i1_xi / m.i0 - m.i0.ln()))
}

/// Product configuration generated by `ζ`: the derivative of `μ̌` along `ζ`
/// in the η = ℏξ variable, assembled from first moments.
pub fn futaki_vector(p: &Polytope, params: &Params, zeta: &[f64]) -> Result<FutakiReport> {
    if zeta.len() != p.dim() {
        return Err(Error::invalid(format!("zeta has {} entries, expected {}", zeta.len(), p.dim())));
    }
    let eta = params.xi_eff();
    if eta.len() != p.dim() {
        return Err(Error::invalid(format!("xi has {} entries, expected {}", eta.len(), p.dim())));
    }
    let z = zeta.to_vec();
    let m = interior_moments(p, &eta, &[vec![], vec![eta.clone()], vec![z.clone()], vec![z.clone(), eta.clone()]])?;
    let b = crate::equivint::boundary_moments(p, &eta, &[vec![], vec![z.clone()]])?;
    Ok(assemble(params, m[0], b[0], m[1], m[2], b[1], m[3], Configuration::Vector { zeta: z }))
}

fn piece_form(piece: &AffinePiece) -> AffineForm {
    AffineForm::new(piece.gradient_f64(), piece.constant_f64())
}

/// `(∫_P q e, ∫_P q ⟨x, w⟩ e, ∫_{∂P} q e dσ)` with `e = e^{-⟨x, η⟩}`.
fn pl_moments(p: &Polytope, eta: &[f64], w: &[f64], q: &PlFunction) -> Result<(f64, f64, f64)> {
    let lin = AffineForm::linear(w.to_vec());
    let (mut iq, mut iqw, mut bq) = (0.0, 0.0, 0.0);
    for c in p.refine_for_pl(q)? {
        let f = piece_form(&q.pieces[c.piece]);
        let mut k = CellKernel::new(c.simplex.points_f64(), c.simplex.volume_f64(), eta)?;
        iq += k.affine_moment(&[&f])?;
        iqw += k.affine_moment(&[&f, &lin])?;
    }
    for c in p.refine_boundary_for_pl(q)? {
        let f = piece_form(&q.pieces[c.piece]);
        let mut k = CellKernel::new(c.cell.points_f64(), c.cell.mass_f64(), eta)?;
        bq += k.affine_moment(&[&f])?;
    }
    Ok((iq, iqw, bq))
}

fn check_q(p: &Polytope, q: &PlFunction) -> Result<()> {
    if q.dim() != p.dim() {
        return Err(Error::invalid(format!("q has dimension {}, polytope {}", q.dim(), p.dim())));
    }
    Ok(())
}

/// Toric test configuration given by the convex PL function `q`.
pub fn futaki_toric(p: &Polytope, q: &PlFunction, params: &Params) -> Result<FutakiReport> {
    check_q(p, q)?;
    let m = MomentSet::compute(p, params, &[])?;
    let (iq, iq1, bq) = pl_moments(p, &m.xi_eff, &m.xi_eff, q)?;
    Ok(assemble(params, m.i0, m.b0, m.i1_xi, iq, bq, iq1, Configuration::Toric { q: PlJson::from_pl(q) }))
}

fn origin(p: &Polytope, lambda: f64) -> Params {
    Params::at_origin(lambda, 1.0, p.dim()).expect("unit hbar is valid")
}

/// `DF(q) = (Lⁿ)/(2π) · F̌ut^0_0(q)` with `(Lⁿ) = n! vol(P)`.
pub fn donaldson_futaki(p: &Polytope, q: &PlFunction) -> Result<f64> {
    let fut = futaki_toric(p, q, &origin(p, 0.0))?.value;
    let ln: f64 = (1..=p.dim()).map(|k| k as f64).product::<f64>() * p.volume_f64();
    Ok(ln / TWO_PI * fut)
}

/// Modified Futaki invariant of a Fano polytope, `I₀/(2π) · F̌ut^{2π}(q)`.
/// The `λ` carried by `params` is replaced by `2π`.
pub fn modified_futaki(p: &Polytope, q: &PlFunction, params: &Params) -> Result<f64> {
    if !p.is_reflexive() {
        return Err(Error::NotReflexive);
    }
    let r = futaki_toric(p, q, &params.with_lambda(TWO_PI))?;
    Ok(r.breakdown.i0 / TWO_PI * r.value)
}

/// Relative Futaki invariant with respect to `ξ_ref`:
/// `F̌ut^0_0(q) + (1/vol) ∫_P q (⟨x, ℏξ_ref⟩ - m) dμ`, where `m` is the mean
/// of `⟨x, ℏξ_ref⟩` over `P`. Centering makes it blind to constants in `q`.
pub fn relative_futaki(p: &Polytope, q: &PlFunction, hbar: f64, xi_ref: &[f64]) -> Result<f64> {
    check_q(p, q)?;
    let params = Params::new(0.0, hbar, xi_ref.to_vec())?;
    if xi_ref.len() != p.dim() {
        return Err(Error::invalid("xi_ref dimension mismatch"));
    }
    let eta_ref = params.xi_eff();
    let zero = vec![0.0; p.dim()];
    let base = futaki_toric(p, q, &origin(p, 0.0))?.value;
    let vol = p.volume_f64();
    let bary: Vec<f64> = p.barycenter().iter().map(to_f64).collect();
    let mean: f64 = bary.iter().zip(&eta_ref).map(|(b, e)| b * e).sum();
    let (iq, iq_eta, _) = pl_moments(p, &zero, &eta_ref, q)?;
    Ok(base + (iq_eta - mean * iq) / vol)
}

/// `Fut^λ_ξ = 2 F̌ut^λ_{-2.ξ}`, the normalization of the Kähler literature.
pub fn kahler_futaki(p: &Polytope, q: &PlFunction, lambda: f64, xi: &[f64]) -> Result<f64> {
    let params = Params::new(lambda, -2.0, xi.to_vec())?;
    Ok(2.0 * futaki_toric(p, q, &params)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSample {
    pub index: usize,
    pub q: PlJson,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub sampler: SamplerSpec,
    pub params: Params,
    /// Sorted by value, ties broken by sample index.
    pub samples: Vec<ScanSample>,
    pub min: f64,
    pub argmin: Option<usize>,
}

/// Draws a convex PL function with gradients and constants on the grid
/// `ℤ/4 ∩ [-B, B]`, shifted so the largest constant is 0.
pub fn sample_pl(rng: &mut ChaCha8Rng, n: usize, spec: &SamplerSpec) -> PlFunction {
    let bound = (4.0 * spec.coeff_bound).floor() as i64;
    let draw = |rng: &mut ChaCha8Rng| -> Rational { rat_frac(rng.gen_range(-bound..=bound), 4) };
    let count = rng.gen_range(1..=spec.max_pieces);
    let mut pieces: Vec<AffinePiece> = (0..count)
        .map(|_| {
            let g = (0..n).map(|_| draw(rng)).collect();
            AffinePiece::new(g, draw(rng))
        })
        .collect();
    let top = pieces.iter().map(|p| p.constant.clone()).max().unwrap_or_else(|| rat(0));
    for p in &mut pieces {
        p.constant = &p.constant - &top;
    }
    PlFunction::new(pieces).expect("at least one piece")
}

/// Evaluates `F̌ut` on `spec.count` random convex PL functions. The sample
/// stream depends only on the seed; evaluation runs in parallel.
pub fn semistability_scan(p: &Polytope, params: &Params, spec: &SamplerSpec) -> Result<ScanReport> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let qs: Vec<PlFunction> = (0..spec.count).map(|_| sample_pl(&mut rng, p.dim(), spec)).collect();
    let values: Vec<f64> = qs
        .par_iter()
        .map(|q| futaki_toric(p, q, params).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let mut samples: Vec<ScanSample> = qs
        .iter()
        .zip(values)
        .enumerate()
        .map(|(index, (q, value))| ScanSample { index, q: PlJson::from_pl(q), value })
        .collect();
    samples.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    let min = samples.first().map_or(f64::INFINITY, |s| s.value);
    let argmin = samples.first().map(|s| s.index);
    Ok(ScanReport { sampler: spec.clone(), params: params.clone(), samples, min, argmin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::by_name;
    use approx::assert_relative_eq;

    fn step() -> PlFunction {
        PlFunction::new(vec![
            AffinePiece::new(vec![rat(0)], rat(0)),
            AffinePiece::new(vec![rat(1)], rat_frac(-1, 2)),
        ])
        .unwrap()
    }

    #[test]
    fn mean_s_anchors() {
        for (name, expect) in [("interval", 4.0), ("square", 8.0), ("simplex2", 12.0)] {
            let p = by_name(name).unwrap();
            let v = mean_s(&p, &origin(&p, 0.0)).unwrap();
            assert_relative_eq!(v, expect * PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn mu_character_anchors() {
        let p = by_name("interval").unwrap();
        assert_relative_eq!(mu_character(&p, &origin(&p, 0.0)).unwrap(), -4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(mu_character(&p, &origin(&p, 1.0)).unwrap(), 1.0 - 4.0 * PI, max_relative = 1e-14);
        let s = by_name("sym_interval").unwrap();
        let a = mu_character(&s, &Params::new(0.0, 1.0, vec![0.7]).unwrap()).unwrap();
        let b = mu_character(&s, &Params::new(0.0, 1.0, vec![-0.7]).unwrap()).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn worked_step_example() {
        let p = by_name("interval").unwrap();
        let r = futaki_toric(&p, &step(), &origin(&p, 0.0)).unwrap();
        assert_relative_eq!(r.value, PI / 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.breakdown.bq, 0.5, max_relative = 1e-15);
        assert_relative_eq!(r.breakdown.iq, 0.125, max_relative = 1e-15);
        assert_relative_eq!(donaldson_futaki(&p, &step()).unwrap(), 0.25, max_relative = 1e-12);
        assert_eq!(r.value, r.breakdown.kappa_term);
    }

    #[test]
    fn vector_matches_affine() {
        let p = by_name("blp2").unwrap();
        let params = Params::new(1.3, -2.0, vec![0.2, -0.4]).unwrap();
        let v = futaki_vector(&p, &params, &[1.0, -0.5]).unwrap();
        let q = PlFunction::affine(vec![rat(1), rat_frac(-1, 2)], rat(3));
        let t = futaki_toric(&p, &q, &params).unwrap();
        assert_relative_eq!(v.value, t.value, max_relative = 1e-11);
    }

    #[test]
    fn vector_is_derivative_of_mu() {
        let p = by_name("blp2").unwrap();
        let params = Params::new(-0.7, 0.5, vec![0.3, 0.1]).unwrap();
        let zeta = [0.4, -1.0];
        let v = futaki_vector(&p, &params, &zeta).unwrap().value;
        let h = 1e-4;
        let at = |s: f64| {
            let xi = params.xi.iter().zip(&zeta).map(|(x, z)| x + s * h * z / params.hbar).collect();
            mu_character(&p, &params.with_xi(xi)).unwrap()
        };
        assert!((v - (at(1.0) - at(-1.0)) / (2.0 * h)).abs() < 1e-7);
    }

    #[test]
    fn csck_vanishing() {
        let p = by_name("simplex2").unwrap();
        for z in [[1.0, 0.0], [0.0, 1.0]] {
            assert!(futaki_vector(&p, &origin(&p, 0.0), &z).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn modified_and_relative() {
        let p = by_name("blp2").unwrap();
        let q = PlFunction::affine(vec![rat(1), rat(1)], rat(0));
        let m = modified_futaki(&p, &q, &origin(&p, 0.0)).unwrap();
        assert!(m.abs() > 1e-3);
        assert_eq!(modified_futaki(&by_name("interval").unwrap(), &step(), &origin(&p, 0.0)), Err(Error::NotReflexive));
        let s = by_name("interval").unwrap();
        assert_relative_eq!(relative_futaki(&s, &step(), -2.0, &[0.0]).unwrap(), PI / 2.0, max_relative = 1e-12);
        let a = relative_futaki(&s, &step(), -2.0, &[0.3]).unwrap();
        let b = relative_futaki(&s, &step().shifted(&rat(5)), -2.0, &[0.3]).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert_relative_eq!(kahler_futaki(&s, &step(), 0.0, &[0.0]).unwrap(), PI, max_relative = 1e-12);
    }

    #[test]
    fn scan_is_deterministic() {
        let p = by_name("interval").unwrap();
        let spec = SamplerSpec { count: 30, ..Default::default() };
        let a = semistability_scan(&p, &origin(&p, 0.0), &spec).unwrap();
        let b = semistability_scan(&p, &origin(&p, 0.0), &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.min >= -1e-10);
        assert!(a.samples.windows(2).all(|w| w[0].value <= w[1].value));
    }
}
