//! Self-checks of the structural identities, runnable from the CLI.
//! Every suite is seeded, so its JSON report is reproducible byte for byte.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::equivint::{self, basis, Params};
use crate::error::{Error, Result};
use crate::exact::{rat, rat_frac};
use crate::expint;
use crate::fixtures;
use crate::futaki;
use crate::io::SamplerSpec;
use crate::polytope::{AffinePiece, PlFunction, Polytope};
use crate::volmin::{self, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, observed: f64, relation: Relation, bound: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => observed <= bound,
            Relation::Below => observed < bound,
            Relation::AtLeast => observed >= bound,
        };
        Self { name: name.into(), observed, relation, bound, passed }
    }

    fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed, Relation::AtMost, bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub const SUITES: [&str; 12] = [
    "anchors",
    "oracle",
    "positivity",
    "moments",
    "series",
    "gradient",
    "futaki",
    "invariance",
    "covariance",
    "vanishing",
    "soliton",
    "extremal",
];

pub fn run(suite: &str) -> Result<VerifyReport> {
    let names: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&suite) {
        vec![suite]
    } else {
        return Err(Error::invalid(format!("unknown suite {suite:?}; expected one of all, {}", SUITES.join(", "))));
    };
    let suites = names
        .into_iter()
        .map(|name| {
            let checks = run_suite(name)?;
            Ok(SuiteReport { suite: name.into(), passed: checks.iter().all(|c| c.passed), checks })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { passed: suites.iter().all(|s| s.passed), suites })
}

fn run_suite(name: &str) -> Result<Vec<Check>> {
    match name {
        "anchors" => anchors(),
        "oracle" => oracle(),
        "positivity" => positivity(),
        "moments" => moments(),
        "series" => series(),
        "gradient" => gradient(),
        "futaki" => futaki_values(),
        "invariance" => invariance(),
        "covariance" => covariance(),
        "vanishing" => vanishing(),
        "soliton" => soliton(),
        "extremal" => extremal(),
        _ => unreachable!("suite names are validated"),
    }
}

fn fixture(name: &str) -> Polytope {
    fixtures::by_name(name).expect("known fixture")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `|a - b| / max(1, |b|)`
fn mixed(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = max_norm * rng.gen_range(0.0..1.0);
    v.iter().map(|x| x * r / norm).collect()
}

fn origin(p: &Polytope, lambda: f64) -> Params {
    Params::at_origin(lambda, 1.0, p.dim()).expect("unit hbar")
}

fn step_function() -> PlFunction {
    PlFunction::new(vec![AffinePiece::new(vec![rat(0)], rat(0)), AffinePiece::new(vec![rat(1)], rat_frac(-1, 2))])
        .expect("two pieces")
}

fn anchors() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, s, k) in [("interval", 4.0, -2.0), ("square", 8.0, -4.0), ("simplex2", 12.0, -3.0)] {
        let p = fixture(name);
        let v = futaki::mean_s(&p, &origin(&p, 0.0))?;
        out.push(Check::at_most(format!("mean_s {name}"), rel(v, s * PI), 1e-12));
        let kappa = equivint::kappa_exp_intersection(&p, &origin(&p, 0.0))?;
        out.push(Check::at_most(format!("kappa {name}"), rel(kappa, k), 1e-12));
    }
    Ok(out)
}

fn oracle() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, p) in fixtures::all() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let eta = random_vector(&mut rng, p.dim(), 10.0);
            let a = expint::polytope_exp(&p, &eta)?;
            let b = expint::brion_exp(&p, &eta)?;
            worst = worst.max(rel(b, a));
        }
        out.push(Check::at_most(format!("brion vs triangulation {name}"), worst, 1e-9));
    }
    Ok(out)
}

fn positivity() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, p) in fixtures::all() {
        let mut smallest = f64::INFINITY;
        for _ in 0..20 {
            let xi = random_vector(&mut rng, p.dim(), 25.0);
            smallest = smallest.min(equivint::exp_intersection(&p, &Params::new(0.0, -2.0, xi)?)?);
        }
        out.push(Check::new(format!("exp_intersection > 0 {name}"), smallest, Relation::AtLeast, f64::MIN_POSITIVE));
    }
    Ok(out)
}

/// Central difference of order `k` (1 to 3) with step `h`.
fn central(f: &dyn Fn(f64) -> f64, k: usize, h: f64) -> f64 {
    match k {
        1 => (f(h) - f(-h)) / (2.0 * h),
        2 => (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h),
        3 => (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h),
        _ => unreachable!(),
    }
}

fn moments() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (name, p) in fixtures::all() {
        let n = p.dim();
        let mut dir = random_vector(&mut rng, n, 1.0);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x *= 0.5 / norm);
        let params = Params::new(0.0, -2.0, dir.iter().map(|x| x / -2.0).collect())?;
        let f = |t: f64| {
            equivint::exp_intersection(&p, &params.with_xi(params.xi.iter().map(|x| t * x).collect())).unwrap()
        };
        let mut worst: f64 = 0.0;
        let mut min_order = f64::INFINITY;
        for k in 1..=3usize {
            let ratio: f64 = (1..=n).map(|j| 1.0 / (k + j) as f64).product();
            let exact = ratio * equivint::power_intersection(&p, &params, k)?;
            let h = 1e-2;
            let (d1, d2) = (central(&f, k, h), central(&f, k, h / 2.0));
            let extrapolated = (4.0 * d2 - d1) / 3.0;
            worst = worst.max(mixed(extrapolated, exact));
            let (e1, e2) = ((central(&f, k, 0.04) - exact).abs(), (central(&f, k, 0.02) - exact).abs());
            // odd derivatives vanish identically on centrally symmetric fixtures
            if e1 > 1e-10 {
                min_order = min_order.min((e1 / e2).log2());
            }
        }
        out.push(Check::at_most(format!("t-derivatives vs powers {name}"), worst, 1e-6));
        if min_order.is_finite() {
            out.push(Check::new(format!("difference order {name}"), min_order, Relation::AtLeast, 1.9));
        }
    }
    Ok(out)
}

fn series() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (name, p) in fixtures::all() {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let mut xi = random_vector(&mut rng, p.dim(), 1.0);
            let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            xi.iter_mut().for_each(|x| *x *= 5.0 / norm);
            let r = equivint::exp_series(&p, &Params::new(0.0, 1.0, xi)?, 60)?;
            worst = worst.max(r.final_error() / r.integral.abs().max(1.0));
        }
        out.push(Check::at_most(format!("series K=60 {name}"), worst, 1e-10));
    }
    Ok(out)
}

fn gradient() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (name, p) in fixtures::all() {
        let n = p.dim();
        let (mut g_err, mut h_err, mut asym): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for _ in 0..5 {
            let params = Params::new(rng.gen_range(-5.0..5.0), 1.0, random_vector(&mut rng, n, 3.0))?;
            let mu = |xi: Vec<f64>| futaki::mu_character(&p, &params.with_xi(xi)).unwrap();
            let g = volmin::grad_mu(&p, &params)?;
            let hess = volmin::hessian_mu(&p, &params)?;
            let h = 1e-4;
            for j in 0..n {
                let shift = |s: f64| {
                    let mut xi = params.xi.clone();
                    xi[j] += s;
                    xi
                };
                g_err = g_err.max((g[j] - (mu(shift(h)) - mu(shift(-h))) / (2.0 * h)).abs());
            }
            let s = 1e-3;
            for j in 0..n {
                for k in 0..n {
                    asym = asym.max((hess[j][k] - hess[k][j]).abs());
                    let at = |a: f64, b: f64| {
                        let mut xi = params.xi.clone();
                        xi[j] += a;
                        xi[k] += b;
                        mu(xi)
                    };
                    let fd = (at(s, s) - at(s, -s) - at(-s, s) + at(-s, -s)) / (4.0 * s * s);
                    h_err = h_err.max((hess[j][k] - fd).abs());
                }
            }
        }
        out.push(Check::at_most(format!("gradient vs differences {name}"), g_err, 1e-6));
        out.push(Check::at_most(format!("hessian vs differences {name}"), h_err, 1e-4));
        out.push(Check::at_most(format!("hessian symmetry {name}"), asym, 1e-12));
    }
    Ok(out)
}

fn futaki_values() -> Result<Vec<Check>> {
    let p = fixture("interval");
    let v = futaki::futaki_toric(&p, &step_function(), &origin(&p, 0.0))?.value;
    let df = futaki::donaldson_futaki(&p, &step_function())?;
    Ok(vec![
        Check::at_most("futaki_toric interval step", rel(v, PI / 2.0), 1e-12),
        Check::at_most("donaldson_futaki interval step", rel(df, 0.25), 1e-12),
    ])
}

/// Random convex PL function with small rational data.
fn random_pl(rng: &mut ChaCha8Rng, n: usize) -> PlFunction {
    let spec = SamplerSpec { count: 1, max_pieces: 3, coeff_bound: 2.0, seed: 0 };
    futaki::sample_pl(rng, n, &spec)
}

fn random_params(rng: &mut ChaCha8Rng, n: usize) -> Result<Params> {
    let hbar = [-2.0, 1.0, 0.5, 3.0][rng.gen_range(0..4)];
    let eta = random_vector(rng, n, 3.0);
    Params::new(rng.gen_range(-10.0..10.0), hbar, eta.iter().map(|x| x / hbar).collect())
}

fn invariance() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for (name, p) in fixtures::all() {
        let n = p.dim();
        let (mut shift_err, mut affine_err): (f64, f64) = (0.0, 0.0);
        for _ in 0..50 {
            let params = random_params(&mut rng, n)?;
            let q = random_pl(&mut rng, n);
            let c = rat_frac(rng.gen_range(-40..=40), 4);
            let a = futaki::futaki_toric(&p, &q, &params)?.value;
            let b = futaki::futaki_toric(&p, &q.shifted(&c), &params)?.value;
            shift_err = shift_err.max(mixed(b, a));
            let grad: Vec<_> = (0..n).map(|_| rat_frac(rng.gen_range(-8..=8), 4)).collect();
            let zeta: Vec<f64> = grad.iter().map(crate::exact::to_f64).collect();
            let affine = PlFunction::affine(grad, rat_frac(rng.gen_range(-8..=8), 4));
            let t = futaki::futaki_toric(&p, &affine, &params)?.value;
            let v = futaki::futaki_vector(&p, &params, &zeta)?.value;
            affine_err = affine_err.max(mixed(t, v));
        }
        out.push(Check::at_most(format!("shift invariance {name}"), shift_err, 1e-9));
        out.push(Check::at_most(format!("affine = vector {name}"), affine_err, 1e-9));
    }
    Ok(out)
}

fn covariance() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (name, p) in fixtures::all() {
        let n = p.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let params = random_params(&mut rng, n)?;
            let q = random_pl(&mut rng, n);
            let zeta = random_vector(&mut rng, n, 2.0);
            let base = (
                equivint::exp_intersection(&p, &params)?,
                futaki::mu_character(&p, &params)?,
                futaki::futaki_vector(&p, &params, &zeta)?.value,
                futaki::futaki_toric(&p, &q, &params)?.value,
            );
            for hp in [1.0, -2.0, 3.7] {
                let other = params.rescaled(hp)?;
                let v = (
                    equivint::exp_intersection(&p, &other)?,
                    futaki::mu_character(&p, &other)?,
                    futaki::futaki_vector(&p, &other, &zeta)?.value,
                    futaki::futaki_toric(&p, &q, &other)?.value,
                );
                worst = worst
                    .max(mixed(v.0, base.0))
                    .max(mixed(v.1, base.1))
                    .max(mixed(v.2, base.2))
                    .max(mixed(v.3, base.3));
            }
        }
        out.push(Check::at_most(format!("hbar rescaling {name}"), worst, 1e-12));
    }
    Ok(out)
}

fn vanishing() -> Result<Vec<Check>> {
    let p = fixture("simplex2");
    let mut out = Vec::new();
    for j in 0..2 {
        let v = futaki::futaki_vector(&p, &origin(&p, 0.0), &basis(2, j))?.value;
        out.push(Check::at_most(format!("simplex2 futaki_vector e{}", j + 1), v.abs(), 1e-10));
    }
    let interval = fixture("interval");
    let spec = SamplerSpec { count: 100, max_pieces: 3, coeff_bound: 2.0, seed: 2024 };
    let scan = futaki::semistability_scan(&interval, &origin(&interval, 0.0), &spec)?;
    out.push(Check::new("interval scan min", scan.min, Relation::AtLeast, -1e-10));
    Ok(out)
}

fn soliton() -> Result<Vec<Check>> {
    let p = fixture("blp2");
    let hbar = 1.0;
    let tz = volmin::tian_zhu(&p, hbar)?;
    let cps = volmin::find_critical(&p, 2.0 * PI, hbar, None, &NewtonOptions::default())?;
    let dist = cps
        .iter()
        .map(|c| c.xi.iter().zip(&tz.xi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min);
    let eta: Vec<f64> = tz.xi.iter().map(|x| x * hbar).collect();
    let bary = volmin::weighted_barycenter(&p, &eta)?;
    let params = Params::new(2.0 * PI, hbar, tz.xi.clone())?;
    let mut mfut: f64 = 0.0;
    for j in 0..2 {
        let mut g = vec![rat(0); 2];
        g[j] = rat(1);
        mfut = mfut.max(futaki::modified_futaki(&p, &PlFunction::affine(g, rat(0)), &params)?.abs());
    }
    let spec = SamplerSpec { count: 100, max_pieces: 3, coeff_bound: 2.0, seed: 2024 };
    let at_soliton = futaki::semistability_scan(&p, &params, &spec)?;
    let at_zero = futaki::semistability_scan(&p, &params.with_xi(vec![0.0; 2]), &spec)?;
    Ok(vec![
        Check::at_most("tian_zhu vs find_critical", dist, 1e-7),
        Check::at_most("weighted barycenter", bary.iter().map(|x| x * x).sum::<f64>().sqrt(), 1e-8),
        Check::at_most("modified futaki of coordinates", mfut, 1e-8),
        Check::new("scan min at soliton", at_soliton.min, Relation::AtLeast, -1e-8),
        Check::new("scan min at zero", at_zero.min, Relation::Below, 0.0),
    ])
}

fn extremal() -> Result<Vec<Check>> {
    let p = fixture("blp2");
    let d = volmin::limit_check(&p, -2.0, &volmin::DEFAULT_SCHEDULE, None, &NewtonOptions::default())?;
    let norm = d.xi_ext.iter().map(|x| x * x).sum::<f64>().sqrt();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(vec![
        Check::at_most("deviation at lambda=-1e4", *d.deviations.last().unwrap(), 1e-2 * (1.0 + norm)),
        Check::new("deviations nonincreasing", flag(d.deviations_monotone), Relation::AtLeast, 1.0),
        Check::new("probe gaps decreasing", flag(d.gaps_decreasing), Relation::AtLeast, 1.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run("bogus").is_err());
    }

    #[test]
    fn cheap_suites_pass() {
        for s in ["anchors", "futaki", "vanishing"] {
            let r = run(s).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }
}
