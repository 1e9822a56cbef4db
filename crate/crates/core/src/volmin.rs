//! Critical points of the μ̌ functional: soliton vectors, the path
//! λ ↦ ξ_λ, the extremal vector and the λ → -∞ limit.
//!
//! Everything is computed in `η = ℏξ`; derivatives in `ξ` pick up one
//! factor `ℏ` per order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::equivint::{basis, boundary_moments, interior_moments, Params};
use crate::error::{Error, Result};
use crate::exact::rat;
use crate::expint::ExpIntError;
use crate::futaki::{futaki_toric, relative_futaki};
use crate::io::PlJson;
use crate::polytope::{AffinePiece, PlFunction, Polytope};

const TWO_PI: f64 = 2.0 * PI;

/// First and second coordinate moments at one `η`.
struct Moments {
    i0: f64,
    b0: f64,
    ix: DVector<f64>,
    bx: DVector<f64>,
    ixx: DMatrix<f64>,
    bxx: DMatrix<f64>,
    /// `∫ x_j x_k ⟨x, η⟩ e`, only when third moments are requested
    ixx_eta: Option<DMatrix<f64>>,
}

impl Moments {
    fn compute(p: &Polytope, eta: &[f64], third: bool) -> std::result::Result<Self, ExpIntError> {
        let n = p.dim();
        let e: Vec<Vec<f64>> = (0..n).map(|j| basis(n, j)).collect();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect();
        let mut reqs = vec![vec![]];
        reqs.extend(e.iter().map(|x| vec![x.clone()]));
        reqs.extend(pairs.iter().map(|&(j, k)| vec![e[j].clone(), e[k].clone()]));
        let boundary = boundary_moments(p, eta, &reqs)?;
        if third {
            reqs.extend(pairs.iter().map(|&(j, k)| vec![e[j].clone(), e[k].clone(), eta.to_vec()]));
        }
        let interior = interior_moments(p, eta, &reqs)?;
        let sym = |vals: &[f64]| {
            let mut m = DMatrix::zeros(n, n);
            for (&(j, k), v) in pairs.iter().zip(vals) {
                m[(j, k)] = *v;
                m[(k, j)] = *v;
            }
            m
        };
        let np = pairs.len();
        Ok(Self {
            i0: interior[0],
            b0: boundary[0],
            ix: DVector::from_column_slice(&interior[1..=n]),
            bx: DVector::from_column_slice(&boundary[1..=n]),
            ixx: sym(&interior[n + 1..n + 1 + np]),
            bxx: sym(&boundary[n + 1..n + 1 + np]),
            ixx_eta: third.then(|| sym(&interior[n + 1 + np..])),
        })
    }

    /// Covariance of `x` under `e^{-⟨x,η⟩} dμ / I₀`.
    fn covariance(&self) -> DMatrix<f64> {
        &self.ixx / self.i0 - &self.ix * self.ix.transpose() / (self.i0 * self.i0)
    }

    /// `∇_η μ̌ = 2π (Bx/I₀ - B₀ Ix/I₀²) + λ Cov · η`.
    fn gradient(&self, lambda: f64, eta: &DVector<f64>) -> DVector<f64> {
        let i = self.i0;
        (&self.bx / i - &self.ix * (self.b0 / (i * i))) * TWO_PI + self.covariance() * eta * lambda
    }

    fn hessian(&self, lambda: f64, eta: &DVector<f64>) -> DMatrix<f64> {
        let (i, b) = (self.i0, self.b0);
        let (ix, bx) = (&self.ix, &self.bx);
        // Hessian of B₀/I₀
        let ha = &self.bxx / i - (bx * ix.transpose() + ix * bx.transpose()) / (i * i) - &self.ixx * (b / (i * i))
            + ix * ix.transpose() * (2.0 * b / (i * i * i));
        let mut h = ha * (-TWO_PI);
        if lambda != 0.0 {
            let ixx_eta = self.ixx_eta.as_ref().expect("third moments requested");
            let i1 = ix.dot(eta);
            let v = &self.ixx * eta;
            let t = -ixx_eta / i
                + (&self.ixx * i1 + &v * ix.transpose() + ix * v.transpose()) / (i * i)
                - ix * ix.transpose() * (2.0 * i1 / (i * i * i));
            h += (self.covariance() + t) * lambda;
        }
        (&h + h.transpose()) * 0.5
    }
}

/// `∇_ξ μ̌^λ`; component `j` is `ℏ · F̌ut(e_j)`.
pub fn grad_mu(p: &Polytope, params: &Params) -> Result<Vec<f64>> {
    check(p, params)?;
    let eta = DVector::from_vec(params.xi_eff());
    let m = Moments::compute(p, eta.as_slice(), false)?;
    Ok((m.gradient(params.lambda, &eta) * params.hbar).as_slice().to_vec())
}

/// Hessian of `μ̌^λ` in `ξ`, row major.
pub fn hessian_mu(p: &Polytope, params: &Params) -> Result<Vec<Vec<f64>>> {
    check(p, params)?;
    let eta = DVector::from_vec(params.xi_eff());
    let m = Moments::compute(p, eta.as_slice(), params.lambda != 0.0)?;
    Ok(rows(&(m.hessian(params.lambda, &eta) * (params.hbar * params.hbar))))
}

/// Hessian of `log I₀` in `η`: the weighted covariance of `x`.
pub fn log_volume_hessian(p: &Polytope, eta: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(rows(&Moments::compute(p, eta, false)?.covariance()))
}

/// `∫_P x e^{-⟨x,η⟩} dμ / I₀`.
pub fn weighted_barycenter(p: &Polytope, eta: &[f64]) -> Result<Vec<f64>> {
    let m = Moments::compute(p, eta, false)?;
    Ok((m.ix / m.i0).as_slice().to_vec())
}

fn check(p: &Polytope, params: &Params) -> Result<()> {
    if params.xi.len() != p.dim() {
        return Err(Error::invalid(format!("xi has {} entries, expected {}", params.xi.len(), p.dim())));
    }
    Ok(())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    /// The line search stalled where the Hessian is indefinite.
    IndefiniteHessian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub xi: Vec<f64>,
    pub lambda: f64,
    /// `‖∇_ξ μ̌‖`
    pub gradient_norm: f64,
    /// Eigenvalues of the ξ-Hessian, ascending.
    pub hessian_spectrum: Vec<f64>,
    pub newton_iters: usize,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Multistart radius in ξ for `λ > 0`; `None` means `5/|ℏ|`.
    pub radius: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 200, radius: None }
    }
}

/// Damped Newton on `φ = ½‖∇_η μ̌‖²` with Armijo backtracking; when the
/// Newton direction is unavailable the step falls back to `-H g = -∇φ`.
fn newton(p: &Polytope, lambda: f64, hbar: f64, start: &[f64], opts: &NewtonOptions) -> CriticalPoint {
    let eval = |eta: &DVector<f64>| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = Moments::compute(p, eta.as_slice(), lambda != 0.0).ok()?;
        let g = m.gradient(lambda, eta);
        let h = m.hessian(lambda, eta);
        (g.iter().all(|x| x.is_finite()) && h.iter().all(|x| x.is_finite())).then_some((g, h))
    };
    let gradient_only = |eta: &DVector<f64>| -> Option<DVector<f64>> {
        let m = Moments::compute(p, eta.as_slice(), false).ok()?;
        let g = m.gradient(lambda, eta);
        g.iter().all(|x| x.is_finite()).then_some(g)
    };
    let tol_eta = opts.tol / hbar.abs();
    let mut eta = DVector::from_iterator(start.len(), start.iter().map(|x| x * hbar));
    let (mut g, mut h) = eval(&eta).expect("start point is admissible");
    let mut iters = 0;
    let mut status = Status::MaxIters;
    while iters < opts.max_iters {
        if g.norm() < tol_eta {
            status = Status::Converged;
            break;
        }
        iters += 1;
        let phi = 0.5 * g.norm_squared();
        let grad_phi = &h * &g;
        let newton_dir = h.clone().lu().solve(&(-&g)).filter(|d| d.iter().all(|x| x.is_finite()));
        let mut moved = false;
        for dir in newton_dir.into_iter().chain(std::iter::once(-&grad_phi)) {
            let slope = grad_phi.dot(&dir);
            if !(slope < 0.0) {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let trial = &eta + &dir * t;
                if let Some(gt) = gradient_only(&trial) {
                    if 0.5 * gt.norm_squared() <= phi + 1e-4 * t * slope {
                        eta = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            status = if spectrum(&h)[0] < 0.0 && *spectrum(&h).last().unwrap() > 0.0 {
                Status::IndefiniteHessian
            } else {
                Status::MaxIters
            };
            break;
        }
        (g, h) = eval(&eta).expect("accepted step is admissible");
    }
    if status == Status::MaxIters && g.norm() < tol_eta {
        status = Status::Converged;
    }
    CriticalPoint {
        xi: eta.iter().map(|x| x / hbar).collect(),
        lambda,
        gradient_norm: g.norm() * hbar.abs(),
        hessian_spectrum: spectrum(&(h * (hbar * hbar))),
        newton_iters: iters,
        status,
    }
}

/// Critical points of `μ̌^λ`. For `λ ≤ 0` one run from `xi0` (default the
/// origin); for `λ > 0` the origin and `±r e_j` are used as well and all
/// distinct converged points are returned in start order.
pub fn find_critical(p: &Polytope, lambda: f64, hbar: f64, xi0: Option<&[f64]>, opts: &NewtonOptions) -> Result<Vec<CriticalPoint>> {
    let params = Params::at_origin(lambda, hbar, p.dim())?;
    let n = p.dim();
    let first = match xi0 {
        Some(x) => {
            check(p, &params.with_xi(x.to_vec()))?;
            x.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut starts = vec![first];
    if lambda > 0.0 {
        let r = opts.radius.unwrap_or(5.0 / hbar.abs());
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("multistart radius must be positive"));
        }
        if xi0.is_some() {
            starts.push(vec![0.0; n]);
        }
        for j in 0..n {
            for s in [1.0, -1.0] {
                starts.push(basis(n, j).iter().map(|x| s * r * x).collect());
            }
        }
    }
    let runs: Vec<CriticalPoint> = starts.par_iter().map(|s| newton(p, lambda, hbar, s, opts)).collect();
    let mut found: Vec<CriticalPoint> = Vec::new();
    for c in runs.iter().filter(|c| c.status == Status::Converged) {
        let dup = found.iter().any(|f| {
            f.xi.iter().zip(&c.xi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < 1e-6
        });
        if !dup {
            found.push(c.clone());
        }
    }
    if found.is_empty() {
        let best = runs.iter().map(|c| c.gradient_norm).fold(f64::INFINITY, f64::min);
        return Err(Error::MaxIters { iters: opts.max_iters, grad_norm: best });
    }
    Ok(found)
}

/// Soliton vector of a reflexive polytope: the minimizer `η*` of `I₀(η)`,
/// returned as `ξ* = η*/ℏ`. Only `ℏξ` matters, so either sign of `ℏ` is
/// accepted. The reported gradient and spectrum are those of `μ̌^{2π}`.
pub fn tian_zhu(p: &Polytope, hbar: f64) -> Result<CriticalPoint> {
    if !p.is_reflexive() {
        return Err(Error::NotReflexive);
    }
    let params = Params::at_origin(TWO_PI, hbar, p.dim())?;
    let n = p.dim();
    let mut eta = DVector::zeros(n);
    let mut iters = 0;
    let max_iters = 100;
    loop {
        let m = Moments::compute(p, eta.as_slice(), false)?;
        // log I₀ has gradient -Ix/I₀ and Hessian Cov ≻ 0
        if m.ix.norm() < 1e-14 * m.i0 || iters == max_iters {
            if m.ix.norm() >= 1e-8 * m.i0 {
                return Err(Error::MaxIters { iters, grad_norm: m.ix.norm() / m.i0 });
            }
            break;
        }
        iters += 1;
        let g = -&m.ix / m.i0;
        let step = m.covariance().cholesky().ok_or(Error::SingularGram)?.solve(&(-&g));
        let f0 = m.i0.ln();
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial = &eta + &step * t;
            if let Ok(i) = crate::expint::polytope_exp(p, trial.as_slice()) {
                if i.ln() <= f0 + 1e-4 * t * g.dot(&step) {
                    next = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(e) => eta = e,
            // no decrease left at machine precision
            None => {
                let m = Moments::compute(p, eta.as_slice(), false)?;
                if m.ix.norm() >= 1e-8 * m.i0 {
                    return Err(Error::MaxIters { iters, grad_norm: m.ix.norm() / m.i0 });
                }
                break;
            }
        }
    }
    let xi: Vec<f64> = eta.iter().map(|x| x / hbar).collect();
    let at = params.with_xi(xi.clone());
    let g = grad_mu(p, &at)?;
    let h = hessian_mu(p, &at)?;
    Ok(CriticalPoint {
        xi,
        lambda: TWO_PI,
        gradient_norm: g.iter().map(|x| x * x).sum::<f64>().sqrt(),
        hessian_spectrum: spectrum(&DMatrix::from_fn(n, n, |r, c| h[r][c])),
        newton_iters: iters,
        status: Status::Converged,
    })
}

/// `ξ_ext`: the vector whose relative Futaki invariant vanishes on every
/// product configuration. Solves `G η = -vol · T` where `G` is the centered
/// Gram matrix of the coordinates and `T_j = F̌ut^0_0(x_j)`, then `ξ = η/ℏ`.
pub fn extremal_vector(p: &Polytope, hbar: f64) -> Result<Vec<f64>> {
    if hbar == 0.0 || !hbar.is_finite() {
        return Err(Error::invalid("hbar must be a nonzero finite number"));
    }
    let n = p.dim();
    let m = Moments::compute(p, &vec![0.0; n], false)?;
    let vol = m.i0;
    let gram = &m.ixx - &m.ix * m.ix.transpose() / vol;
    let t = (&m.bx / vol - &m.ix * (m.b0 / (vol * vol))) * TWO_PI;
    let eta = gram.cholesky().ok_or(Error::SingularGram)?.solve(&(-t * vol));
    Ok(eta.iter().map(|x| x / hbar).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSample {
    pub lambda: f64,
    pub xi: Vec<f64>,
    pub lambda_xi: Vec<f64>,
    /// `‖λ ξ_λ - ξ_ext‖`
    pub deviation: f64,
    pub gradient_norm: f64,
    /// `F̌ut^λ_{ℏ.ξ_λ}(probe)`
    pub probe_futaki: f64,
    /// `|probe_futaki - F̌ut†_{ℏ.ξ_ext}(probe)|`
    pub probe_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitDiagnostics {
    pub hbar: f64,
    pub xi_ext: Vec<f64>,
    pub probe: PlJson,
    pub probe_relative_futaki: f64,
    pub samples: Vec<LimitSample>,
    pub deviations: Vec<f64>,
    /// Deviations nonincreasing, with 10% slack on the first step.
    pub deviations_monotone: bool,
    pub gaps_decreasing: bool,
}

/// `max(0, x_1)`, a non-affine probe available in every dimension.
pub fn default_probe(n: usize) -> PlFunction {
    let mut g = vec![rat(0); n];
    let zero = AffinePiece::new(g.clone(), rat(0));
    g[0] = rat(1);
    PlFunction::new(vec![zero, AffinePiece::new(g, rat(0))]).expect("two pieces")
}

pub const DEFAULT_SCHEDULE: [f64; 4] = [-10.0, -100.0, -1000.0, -10000.0];

pub fn limit_check(p: &Polytope, hbar: f64, schedule: &[f64], probe: Option<&PlFunction>, opts: &NewtonOptions) -> Result<LimitDiagnostics> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("lambda schedule must be nonempty and strictly decreasing"));
    }
    if schedule.iter().any(|&l| !(l < 0.0)) {
        return Err(Error::invalid("lambda schedule must be negative"));
    }
    let default = default_probe(p.dim());
    let probe = probe.unwrap_or(&default);
    let xi_ext = extremal_vector(p, hbar)?;
    let rel = relative_futaki(p, probe, hbar, &xi_ext)?;
    let mut samples = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let cp = find_critical(p, lambda, hbar, None, opts)?.remove(0);
        let lambda_xi: Vec<f64> = cp.xi.iter().map(|x| lambda * x).collect();
        let deviation = lambda_xi.iter().zip(&xi_ext).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let fut = futaki_toric(p, probe, &Params::new(lambda, hbar, cp.xi.clone())?)?.value;
        samples.push(LimitSample {
            lambda,
            xi: cp.xi,
            lambda_xi,
            deviation,
            gradient_norm: cp.gradient_norm,
            probe_futaki: fut,
            probe_gap: (fut - rel).abs(),
        });
    }
    let deviations: Vec<f64> = samples.iter().map(|s| s.deviation).collect();
    let deviations_monotone = deviations.windows(2).enumerate().all(|(i, w)| {
        let slack = if i == 0 { 1.1 } else { 1.0 };
        w[1] <= w[0] * slack + 1e-12
    });
    let gaps_decreasing = samples.windows(2).all(|w| w[1].probe_gap <= w[0].probe_gap + 1e-12);
    Ok(LimitDiagnostics {
        hbar,
        xi_ext,
        probe: PlJson::from_pl(probe),
        probe_relative_futaki: rel,
        samples,
        deviations,
        deviations_monotone,
        gaps_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::by_name;
    use crate::futaki::{futaki_vector, mu_character};

    fn fd_gradient(p: &Polytope, params: &Params, h: f64) -> Vec<f64> {
        (0..p.dim())
            .map(|j| {
                let shift = |s: f64| {
                    let mut xi = params.xi.clone();
                    xi[j] += s * h;
                    mu_character(p, &params.with_xi(xi)).unwrap()
                };
                (shift(1.0) - shift(-1.0)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_differences_and_futaki() {
        let p = by_name("blp2").unwrap();
        let params = Params::new(2.5, -2.0, vec![0.4, -0.3]).unwrap();
        let g = grad_mu(&p, &params).unwrap();
        let fd = fd_gradient(&p, &params, 1e-4);
        for j in 0..2 {
            assert!((g[j] - fd[j]).abs() < 1e-6, "{g:?} {fd:?}");
            let f = futaki_vector(&p, &params, &basis(2, j)).unwrap().value;
            assert!((g[j] - params.hbar * f).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_matches_differences() {
        let p = by_name("blp2").unwrap();
        let params = Params::new(-1.5, 0.7, vec![0.5, 0.2]).unwrap();
        let h = hessian_mu(&p, &params).unwrap();
        let step = 1e-3;
        for k in 0..2 {
            let mut plus = params.xi.clone();
            plus[k] += step;
            let mut minus = params.xi.clone();
            minus[k] -= step;
            let gp = grad_mu(&p, &params.with_xi(plus)).unwrap();
            let gm = grad_mu(&p, &params.with_xi(minus)).unwrap();
            for j in 0..2 {
                assert!((h[j][k] - (gp[j] - gm[j]) / (2.0 * step)).abs() < 1e-6);
            }
        }
        assert_eq!(h[0][1], h[1][0]);
    }

    #[test]
    fn symmetric_fixtures_have_zero_critical_point() {
        let p = by_name("cube").unwrap();
        let cps = find_critical(&p, -3.0, -2.0, None, &NewtonOptions::default()).unwrap();
        assert_eq!(cps.len(), 1);
        assert!(cps[0].xi.iter().all(|x| x.abs() < 1e-12));
        assert!(extremal_vector(&p, -2.0).unwrap().iter().all(|x| x.abs() < 1e-12));
        assert!(tian_zhu(&p, 1.0).unwrap().xi.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn soliton_agrees_with_critical_point() {
        let p = by_name("blp2").unwrap();
        let tz = tian_zhu(&p, 1.0).unwrap();
        assert!(tz.xi[0] > 0.0);
        assert!((tz.xi[0] - tz.xi[1]).abs() < 1e-12);
        let cps = find_critical(&p, TWO_PI, 1.0, None, &NewtonOptions::default()).unwrap();
        assert_eq!(cps.len(), 1);
        for j in 0..2 {
            assert!((cps[0].xi[j] - tz.xi[j]).abs() < 1e-9);
        }
        let bary = weighted_barycenter(&p, &tz.xi).unwrap();
        assert!(bary.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn limit_converges_on_blp2() {
        let p = by_name("blp2").unwrap();
        let d = limit_check(&p, -2.0, &DEFAULT_SCHEDULE, None, &NewtonOptions::default()).unwrap();
        let norm = d.xi_ext.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-3);
        assert!(d.deviations_monotone, "{:?}", d.deviations);
        assert!(d.gaps_decreasing);
        assert!(*d.deviations.last().unwrap() < 1e-2 * (1.0 + norm));
    }
}
