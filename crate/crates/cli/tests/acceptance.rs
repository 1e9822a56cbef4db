//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mukstab::equivint::{self, Params};
use mukstab::exact::{rat, rat_frac};
use mukstab::expint;
use mukstab::fixtures::{self, by_name};
use mukstab::futaki;
use mukstab::io::SamplerSpec;
use mukstab::polytope::{AffinePiece, PlFunction, Polytope};
use mukstab::volmin::{self, NewtonOptions};

type Outcome = Result<String, String>;

fn zero(p: &Polytope, lambda: f64, hbar: f64) -> Params {
    Params::at_origin(lambda, hbar, p.dim()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn mixed(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = radius * rng.gen_range(0.0..1.0) / norm(&v).max(1e-300);
    v.iter().map(|x| x * r).collect()
}

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn step() -> PlFunction {
    PlFunction::new(vec![AffinePiece::new(vec![rat(0)], rat(0)), AffinePiece::new(vec![rat(1)], rat_frac(-1, 2))]).unwrap()
}

fn random_pl(rng: &mut ChaCha8Rng, n: usize) -> PlFunction {
    let pieces = (0..rng.gen_range(1..=3))
        .map(|_| {
            let g = (0..n).map(|_| rat_frac(rng.gen_range(-8..=8), 4)).collect();
            AffinePiece::new(g, rat_frac(rng.gen_range(-8..=0), 4))
        })
        .collect();
    PlFunction::new(pieces).unwrap()
}

fn anchors() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, s, k) in [("interval", 4.0, -2.0), ("square", 8.0, -4.0), ("simplex2", 12.0, -3.0)] {
        let p = by_name(name).unwrap();
        worst = worst.max(rel(futaki::mean_s(&p, &zero(&p, 0.0, -2.0)).map_err(|e| e.to_string())?, s * PI));
        worst = worst.max(rel(equivint::kappa_exp_intersection(&p, &zero(&p, 0.0, -2.0)).unwrap(), k));
    }
    require(worst <= 1e-12, format!("max relative error {worst:.2e} (tol 1e-12)"))
}

fn brion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, p) in fixtures::all() {
        if !p.check_delzant() {
            continue;
        }
        count += 1;
        for _ in 0..100 {
            let eta = ball(&mut rng, p.dim(), 10.0);
            let a = expint::polytope_exp(&p, &eta).unwrap();
            let b = expint::brion_exp(&p, &eta).map_err(|e| e.to_string())?;
            worst = worst.max(rel(b, a));
        }
    }
    require(count >= 5 && worst < 1e-9, format!("{count} Delzant fixtures x 100 covectors, max relative error {worst:.2e} (tol 1e-9)"))
}

fn moment_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for (_, p) in fixtures::all() {
        let n = p.dim();
        let hbar = -2.0;
        let xi: Vec<f64> = ball(&mut rng, n, 0.4);
        let params = Params::new(0.0, hbar, xi.clone()).unwrap();
        let f = |t: f64| equivint::exp_intersection(&p, &params.with_xi(xi.iter().map(|x| t * x).collect())).unwrap();
        let d = |k: usize, h: f64| match k {
            1 => (f(h) - f(-h)) / (2.0 * h),
            2 => (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h),
            _ => (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h.powi(3)),
        };
        for k in 1..=3 {
            // k!/(n+k)! · (L^{n+k}; ξ)
            let scale: f64 = (1..=n).map(|j| 1.0 / (k + j) as f64).product();
            let exact = scale * equivint::power_intersection(&p, &params, k).unwrap();
            let h = 1e-2;
            let fd = (4.0 * d(k, h / 2.0) - d(k, h)) / 3.0;
            worst = worst.max(mixed(fd, exact));
        }
    }
    require(worst < 1e-6, format!("k <= 3, all fixtures, max error {worst:.2e} (tol 1e-6)"))
}

fn gradient_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut g_err, mut h_err, mut asym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (_, p) in fixtures::all() {
        let n = p.dim();
        for _ in 0..6 {
            let params = Params::new(rng.gen_range(-6.0..6.0), 1.0, ball(&mut rng, n, 3.0)).unwrap();
            let mu = |xi: &[f64]| futaki::mu_character(&p, &params.with_xi(xi.to_vec())).unwrap();
            let g = volmin::grad_mu(&p, &params).unwrap();
            let hess = volmin::hessian_mu(&p, &params).unwrap();
            let shifted = |pairs: &[(usize, f64)]| {
                let mut x = params.xi.clone();
                for &(j, s) in pairs {
                    x[j] += s;
                }
                x
            };
            let h = 1e-4;
            for j in 0..n {
                let fd = (mu(&shifted(&[(j, h)])) - mu(&shifted(&[(j, -h)]))) / (2.0 * h);
                g_err = g_err.max((g[j] - fd).abs());
            }
            let s = 1e-3;
            for j in 0..n {
                for k in 0..n {
                    asym = asym.max((hess[j][k] - hess[k][j]).abs());
                    let fd = (mu(&shifted(&[(j, s), (k, s)])) - mu(&shifted(&[(j, s), (k, -s)]))
                        - mu(&shifted(&[(j, -s), (k, s)]))
                        + mu(&shifted(&[(j, -s), (k, -s)])))
                        / (4.0 * s * s);
                    h_err = h_err.max((hess[j][k] - fd).abs());
                }
            }
        }
    }
    require(
        g_err < 1e-6 && h_err < 1e-4 && asym <= 1e-12,
        format!("gradient error {g_err:.2e} (tol 1e-6), hessian error {h_err:.2e} (tol 1e-4), asymmetry {asym:.1e}"),
    )
}

fn worked_futaki() -> Outcome {
    let p = by_name("interval").unwrap();
    let v = futaki::futaki_toric(&p, &step(), &zero(&p, 0.0, 1.0)).unwrap().value;
    let df = futaki::donaldson_futaki(&p, &step()).unwrap();
    let (e1, e2) = (rel(v, PI / 2.0), rel(df, 0.25));
    require(e1 <= 1e-12 && e2 <= 1e-12, format!("Fut = {v:.15} (pi/2, err {e1:.1e}), DF = {df} (1/4, err {e2:.1e})"))
}

fn invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut shift, mut affine): (f64, f64) = (0.0, 0.0);
    for (_, p) in fixtures::all() {
        let n = p.dim();
        for _ in 0..50 {
            let hbar = [1.0, -2.0, 0.5][rng.gen_range(0..3)];
            let xi: Vec<f64> = ball(&mut rng, n, 3.0).iter().map(|x| x / hbar).collect();
            let params = Params::new(rng.gen_range(-10.0..10.0), hbar, xi).unwrap();
            let q = random_pl(&mut rng, n);
            let c = rat_frac(rng.gen_range(-40..=40), 4);
            let a = futaki::futaki_toric(&p, &q, &params).unwrap().value;
            let b = futaki::futaki_toric(&p, &q.shifted(&c), &params).unwrap().value;
            shift = shift.max(mixed(b, a));
            let g: Vec<_> = (0..n).map(|_| rat_frac(rng.gen_range(-8..=8), 4)).collect();
            let zeta: Vec<f64> = g.iter().map(mukstab::exact::to_f64).collect();
            let t = futaki::futaki_toric(&p, &PlFunction::affine(g, rat_frac(rng.gen_range(-8..=8), 4)), &params).unwrap().value;
            let v = futaki::futaki_vector(&p, &params, &zeta).unwrap().value;
            affine = affine.max(mixed(t, v));
        }
    }
    require(shift <= 1e-9 && affine <= 1e-9, format!("shift error {shift:.2e}, affine-vs-vector error {affine:.2e} (tol 1e-9)"))
}

fn covariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst: f64 = 0.0;
    for (_, p) in fixtures::all() {
        let n = p.dim();
        for _ in 0..5 {
            let params = Params::new(rng.gen_range(-5.0..5.0), -2.0, ball(&mut rng, n, 1.5)).unwrap();
            let q = random_pl(&mut rng, n);
            let zeta = ball(&mut rng, n, 2.0);
            let eval = |prm: &Params| {
                [
                    equivint::exp_intersection(&p, prm).unwrap(),
                    futaki::mu_character(&p, prm).unwrap(),
                    futaki::futaki_vector(&p, prm, &zeta).unwrap().value,
                    futaki::futaki_toric(&p, &q, prm).unwrap().value,
                ]
            };
            let base = eval(&params);
            for hp in [1.0, -2.0, 3.7] {
                let other = Params::new(params.lambda, hp, params.xi.iter().map(|x| params.hbar / hp * x).collect()).unwrap();
                for (a, b) in eval(&other).iter().zip(&base) {
                    worst = worst.max(mixed(*a, *b));
                }
            }
        }
    }
    require(worst <= 1e-12, format!("hbar' in {{1, -2, 3.7}}, max error {worst:.2e} (tol 1e-12)"))
}

fn csck_vanishing() -> Outcome {
    let p = by_name("simplex2").unwrap();
    let v: f64 = [[1.0, 0.0], [0.0, 1.0]]
        .iter()
        .map(|z| futaki::futaki_vector(&p, &zero(&p, 0.0, -2.0), z).unwrap().value.abs())
        .fold(0.0, f64::max);
    let interval = by_name("interval").unwrap();
    let spec = SamplerSpec { count: 100, max_pieces: 4, coeff_bound: 2.0, seed: 42 };
    let scan = futaki::semistability_scan(&interval, &zero(&interval, 0.0, -2.0), &spec).unwrap();
    require(v <= 1e-10 && scan.min >= -1e-10, format!("simplex2 |Fut(e_j)| <= {v:.1e}, interval scan min {:.2e}", scan.min))
}

fn soliton() -> Outcome {
    let p = by_name("blp2").unwrap();
    let hbar = 1.0;
    let tz = volmin::tian_zhu(&p, hbar).map_err(|e| e.to_string())?;
    let cps = volmin::find_critical(&p, 2.0 * PI, hbar, None, &NewtonOptions::default()).map_err(|e| e.to_string())?;
    let dist = cps
        .iter()
        .map(|c| norm(&c.xi.iter().zip(&tz.xi).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .fold(f64::INFINITY, f64::min);
    let bary = norm(&volmin::weighted_barycenter(&p, &tz.xi.iter().map(|x| x * hbar).collect::<Vec<_>>()).unwrap());
    let at = Params::new(2.0 * PI, hbar, tz.xi.clone()).unwrap();
    let mfut = (0..2)
        .map(|j| {
            let mut g = vec![rat(0); 2];
            g[j] = rat(1);
            futaki::modified_futaki(&p, &PlFunction::affine(g, rat(0)), &at).unwrap().abs()
        })
        .fold(0.0, f64::max);
    let spec = SamplerSpec { count: 100, max_pieces: 3, coeff_bound: 2.0, seed: 42 };
    let s_star = futaki::semistability_scan(&p, &at, &spec).unwrap().min;
    let s_zero = futaki::semistability_scan(&p, &at.with_xi(vec![0.0, 0.0]), &spec).unwrap().min;
    require(
        dist < 1e-7 && bary < 1e-8 && mfut < 1e-8 && s_star >= -1e-8 && s_zero < 0.0,
        format!(
            "xi* = ({:.6}, {:.6}), |tz - crit| {dist:.1e}, barycenter {bary:.1e}, MFut {mfut:.1e}, scan min at xi* {s_star:.1e}, at 0 {s_zero:.3}",
            tz.xi[0], tz.xi[1]
        ),
    )
}

fn extremal_limit() -> Outcome {
    let p = by_name("blp2").unwrap();
    let schedule = [-10.0, -100.0, -1000.0, -10000.0];
    let d = volmin::limit_check(&p, -2.0, &schedule, None, &NewtonOptions::default()).map_err(|e| e.to_string())?;
    let bound = 1e-2 * (1.0 + norm(&d.xi_ext));
    let last = *d.deviations.last().unwrap();
    let monotone = d.deviations.windows(2).enumerate().all(|(i, w)| w[1] <= w[0] * if i == 0 { 1.1 } else { 1.0 });
    let gaps: Vec<f64> = d.samples.iter().map(|s| s.probe_gap).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    require(
        last < bound && monotone && decreasing,
        format!("deviations {:?}, bound {bound:.3e}, probe gaps {:?}", d.deviations.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>(), gaps.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>()),
    )
}

fn series() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst: f64 = 0.0;
    for (_, p) in fixtures::all() {
        for radius in [1.0, 3.0, 5.0] {
            let dir = ball(&mut rng, p.dim(), 1.0);
            let xi: Vec<f64> = dir.iter().map(|x| x * radius / norm(&dir)).collect();
            let r = equivint::exp_series(&p, &Params::new(0.0, 1.0, xi).unwrap(), 60).unwrap();
            worst = worst.max(mixed(*r.partial_sums.last().unwrap(), r.integral));
        }
    }
    require(worst < 1e-10, format!("K = 60, |xi_eff| <= 5, all fixtures, max error {worst:.2e} (tol 1e-10)"))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mukstab");
    let run = || {
        Command::new(bin)
            .args(["verify", "--suite", "all"])
            .output()
            .map_err(|e| format!("cannot run {bin}: {e}"))
    };
    let (a, b) = (run()?, run()?);
    let ok = a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty();
    require(ok, format!("two runs: {} bytes each, identical = {}, exit codes {:?}/{:?}", a.stdout.len(), a.stdout == b.stdout, a.status.code(), b.status.code()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("anchor values", anchors),
        ("Brion oracle equivalence", brion),
        ("moment identity", moment_identity),
        ("gradient law and Hessian", gradient_law),
        ("worked Futaki value", worked_futaki),
        ("shift and affine invariance", invariances),
        ("hbar covariance", covariance),
        ("Futaki vanishing on cscK fixtures", csck_vanishing),
        ("soliton pipeline", soliton),
        ("extremal limit", extremal_limit),
        ("series convergence", series),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
