use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mukstab::equivint::{self, MomentSet, Params};
use mukstab::expint;
use mukstab::fixtures;
use mukstab::futaki;
use mukstab::io::{PlJson, PolytopeJson, SamplerSpec};
use mukstab::polytope::{PlFunction, Polytope};
use mukstab::verify;
use mukstab::volmin::{self, NewtonOptions};
use mukstab::Error;

#[derive(Parser)]
#[command(name = "mukstab", version, about = "muK-stability invariants of polarized toric varieties")]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Include the moment breakdown and conditioning.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Clone)]
struct PolytopeArgs {
    /// Polytope JSON file, or inline JSON.
    #[arg(long, conflicts_with = "fixture")]
    polytope: Option<String>,
    /// Built-in polytope: interval, sym_interval, square, simplex2, blp2, cube.
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    hbar: f64,
    /// Comma separated; defaults to the zero vector.
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
}

#[derive(Args, Clone)]
struct NewtonArgs {
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Multistart radius in xi for lambda > 0 (default 5/|hbar|).
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exponential, power, L and kappa intersections.
    Intersect {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Largest power k reported by power_intersection.
        #[arg(long, default_value_t = 3)]
        max_k: usize,
    },
    /// Futaki invariant of the product configuration generated by zeta.
    FutakiVector {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, allow_hyphen_values = true)]
        zeta: String,
    },
    /// Futaki invariant of the toric test configuration given by q.
    FutakiToric {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// PL function JSON file, or inline JSON.
        #[arg(long)]
        q: String,
    },
    /// Critical points of the muK volume functional.
    Minimize {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        newton: NewtonArgs,
    },
    /// Soliton vector of a reflexive polytope.
    TianZhu {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        hbar: f64,
    },
    /// Extremal vector.
    Extremal {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        hbar: f64,
    },
    /// Follows lambda * xi_lambda towards the extremal vector.
    LimitCheck {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        hbar: f64,
        #[arg(long, default_value = "-10,-100,-1000,-10000", allow_hyphen_values = true)]
        schedule: String,
        /// Probe PL function (default max(0, x_1)).
        #[arg(long)]
        q: Option<String>,
        #[command(flatten)]
        newton: NewtonArgs,
    },
    /// Futaki invariants of random convex PL functions.
    Scan {
        #[command(flatten)]
        poly: PolytopeArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Sampler JSON file or inline JSON; overrides the flags below.
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        max_pieces: usize,
        #[arg(long, default_value_t = 2.0)]
        coeff_bound: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Runs the verification suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Polytope(_) | Error::InvalidParams(_) | Error::NotReflexive => 2,
            Error::Integration(_) | Error::MaxIters { .. } | Error::SingularGram => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type Outcome<T> = Result<T, Failure>;

fn context<T>(field: &str, r: mukstab::Result<T>) -> Outcome<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{field}: {}", f.message);
        f
    })
}

/// File contents, or the argument itself when it is inline JSON.
fn read_source(field: &str, arg: &str) -> Outcome<String> {
    if arg.trim_start().starts_with('{') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(arg).map_err(|e| Failure::validation(format!("{field}: cannot read {arg}: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(field: &str, arg: &str) -> Outcome<T> {
    let text = read_source(field, arg)?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{field}: {e}")))
}

fn load_polytope(args: &PolytopeArgs) -> Outcome<(String, Polytope)> {
    match (&args.polytope, &args.fixture) {
        (Some(src), None) => {
            let j: PolytopeJson = parse_json("--polytope", src)?;
            Ok((src.clone(), context("--polytope", j.to_polytope())?))
        }
        (None, Some(name)) => fixtures::by_name(name)
            .map(|p| (name.clone(), p))
            .ok_or_else(|| Failure::validation(format!("--fixture: unknown fixture {name:?} (known: {})", fixtures::NAMES.join(", ")))),
        _ => Err(Failure::validation("--polytope or --fixture is required")),
    }
}

fn load_pl(field: &str, src: &str) -> Outcome<PlFunction> {
    let j: PlJson = parse_json(field, src)?;
    context(field, j.to_pl())
}

fn parse_vector(field: &str, s: &str, n: usize) -> Outcome<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::validation(format!("{field}: {e}")))?;
    if v.len() != n {
        return Err(Failure::validation(format!("{field}: expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Failure::validation(format!("{field}: entries must be finite")));
    }
    Ok(v)
}

fn build_params(args: &ParamArgs, n: usize) -> Outcome<Params> {
    let xi = match &args.xi {
        Some(s) => parse_vector("--xi", s, n)?,
        None => vec![0.0; n],
    };
    if args.hbar == 0.0 {
        return Err(Failure::validation("--hbar: must be nonzero"));
    }
    context("--lambda/--hbar/--xi", Params::new(args.lambda, args.hbar, xi))
}

fn newton_options(a: &NewtonArgs) -> Outcome<NewtonOptions> {
    if !(a.tol > 0.0) {
        return Err(Failure::validation("--tol: must be positive"));
    }
    Ok(NewtonOptions { tol: a.tol, max_iters: a.max_iters, radius: a.radius })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn moment_breakdown(p: &Polytope, params: &Params) -> Outcome<Value> {
    let m = context("moments", MomentSet::compute(p, params, &[]))?;
    let detail = context("moments", expint::polytope_exp_detailed(p, &m.xi_eff).map_err(Error::from))?;
    Ok(json!({ "moments": to_value(&m), "integration": to_value(&detail) }))
}

fn run(cli: &Cli) -> Outcome<Value> {
    let mut report = match &cli.command {
        Command::Intersect { poly, params, max_k } => {
            let (source, p) = load_polytope(poly)?;
            let params = build_params(params, p.dim())?;
            if *max_k > equivint::MAX_POWER {
                return Err(Failure::validation(format!("--max-k: at most {}", equivint::MAX_POWER)));
            }
            let powers = (0..=*max_k)
                .map(|k| context("power_intersection", equivint::power_intersection(&p, &params, k)))
                .collect::<Outcome<Vec<_>>>()?;
            let mut r = json!({
                "command": "intersect",
                "polytope": source,
                "params": to_value(&params),
                "exp_intersection": context("exp_intersection", equivint::exp_intersection(&p, &params))?,
                "l_exp_intersection": context("l_exp_intersection", equivint::l_exp_intersection(&p, &params))?,
                "kappa_exp_intersection": context("kappa_exp_intersection", equivint::kappa_exp_intersection(&p, &params))?,
                "power_intersections": powers,
                "mean_s": context("mean_s", futaki::mean_s(&p, &params))?,
                "mu_character": context("mu_character", futaki::mu_character(&p, &params))?,
            });
            if cli.verbose {
                r["breakdown"] = moment_breakdown(&p, &params)?;
            }
            r
        }
        Command::FutakiVector { poly, params, zeta } => {
            let (source, p) = load_polytope(poly)?;
            let params = build_params(params, p.dim())?;
            let zeta = parse_vector("--zeta", zeta, p.dim())?;
            let r = context("futaki_vector", futaki::futaki_vector(&p, &params, &zeta))?;
            json!({ "command": "futaki-vector", "polytope": source, "report": to_value(&r), "value": r.value })
        }
        Command::FutakiToric { poly, params, q } => {
            let (source, p) = load_polytope(poly)?;
            let params = build_params(params, p.dim())?;
            let q = load_pl("--q", q)?;
            if q.dim() != p.dim() {
                return Err(Failure::validation(format!("--q: dimension {} does not match polytope {}", q.dim(), p.dim())));
            }
            let r = context("futaki_toric", futaki::futaki_toric(&p, &q, &params))?;
            let mut out = json!({
                "command": "futaki-toric",
                "polytope": source,
                "report": to_value(&r),
                "value": r.value,
                "donaldson_futaki": context("donaldson_futaki", futaki::donaldson_futaki(&p, &q))?,
            });
            if p.is_reflexive() {
                out["modified_futaki"] = json!(context("modified_futaki", futaki::modified_futaki(&p, &q, &params))?);
            }
            out
        }
        Command::Minimize { poly, params, newton } => {
            let (source, p) = load_polytope(poly)?;
            let params = build_params(params, p.dim())?;
            let opts = newton_options(newton)?;
            let start = params.xi.iter().any(|x| *x != 0.0).then_some(params.xi.as_slice());
            let cps = context("find_critical", volmin::find_critical(&p, params.lambda, params.hbar, start, &opts))?;
            json!({ "command": "minimize", "polytope": source, "params": to_value(&params), "critical_points": to_value(&cps) })
        }
        Command::TianZhu { poly, hbar } => {
            let (source, p) = load_polytope(poly)?;
            let cp = context("tian_zhu", volmin::tian_zhu(&p, *hbar))?;
            let eta: Vec<f64> = cp.xi.iter().map(|x| x * hbar).collect();
            let bary = context("weighted_barycenter", volmin::weighted_barycenter(&p, &eta))?;
            json!({ "command": "tian-zhu", "polytope": source, "hbar": hbar, "soliton": to_value(&cp), "weighted_barycenter": bary })
        }
        Command::Extremal { poly, hbar } => {
            let (source, p) = load_polytope(poly)?;
            let xi = context("extremal_vector", volmin::extremal_vector(&p, *hbar))?;
            json!({ "command": "extremal", "polytope": source, "hbar": hbar, "xi_ext": xi })
        }
        Command::LimitCheck { poly, hbar, schedule, q, newton } => {
            let (source, p) = load_polytope(poly)?;
            let sched = schedule
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::validation(format!("--schedule: {e}")))?;
            let probe = q.as_deref().map(|s| load_pl("--q", s)).transpose()?;
            let opts = newton_options(newton)?;
            let d = context("limit_check", volmin::limit_check(&p, *hbar, &sched, probe.as_ref(), &opts))?;
            json!({ "command": "limit-check", "polytope": source, "diagnostics": to_value(&d) })
        }
        Command::Scan { poly, params, sampler, count, max_pieces, coeff_bound, seed } => {
            let (source, p) = load_polytope(poly)?;
            let params = build_params(params, p.dim())?;
            let spec = match sampler {
                Some(s) => parse_json::<SamplerSpec>("--sampler", s)?,
                None => SamplerSpec { count: *count, max_pieces: *max_pieces, coeff_bound: *coeff_bound, seed: *seed },
            };
            let r = context("semistability_scan", futaki::semistability_scan(&p, &params, &spec))?;
            json!({ "command": "scan", "polytope": source, "scan": to_value(&r) })
        }
        Command::Verify { suite } => {
            let r = context("--suite", verify::run(suite))?;
            json!({ "command": "verify", "suite": suite, "report": to_value(&r) })
        }
    };
    if cli.verbose {
        if let Some(obj) = report.as_object_mut() {
            obj.entry("threads").or_insert(json!(rayon::current_num_threads()));
        }
    }
    Ok(report)
}

/// `path = value` lines for every scalar in the report.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn render_table(v: &Value) -> String {
    let mut s = String::new();
    if v["command"] == "verify" {
        for suite in v["report"]["suites"].as_array().into_iter().flatten() {
            for c in suite["checks"].as_array().into_iter().flatten() {
                let status = if c["passed"] == true { "PASS" } else { "FAIL" };
                s += &format!(
                    "{status}  {:<12} {:<40} {:>12} {} {}\n",
                    suite["suite"].as_str().unwrap_or(""),
                    c["name"].as_str().unwrap_or(""),
                    format_num(&c["observed"]),
                    c["relation"].as_str().unwrap_or(""),
                    format_num(&c["bound"]),
                );
            }
        }
        s += &format!("overall: {}\n", if v["report"]["passed"] == true { "PASS" } else { "FAIL" });
        return s;
    }
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, x) in rows {
        s += &format!("{k:<width$}  {x}\n");
    }
    s
}

fn format_num(v: &Value) -> String {
    v.as_f64().map_or_else(|| v.to_string(), |x| format!("{x:.3e}"))
}

fn configure_threads() -> Outcome<()> {
    let Ok(raw) = std::env::var("MUKSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::validation(format!("MUKSTAB_THREADS: expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: 3, message: format!("thread pool: {e}") })
}

fn emit(cli: &Cli, report: &Value) -> Outcome<()> {
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(report).expect("json") + "\n",
        Format::Table => render_table(report),
    };
    match &cli.output {
        Some(path) => fs::write(path, text).map_err(|e| Failure { code: 3, message: format!("--output: {e}") }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure { code: 3, message: format!("stdout: {e}") }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(&cli)).and_then(|report| {
        emit(&cli, &report)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            if report["command"] == "verify" && report["report"]["passed"] != true {
                eprintln!("error: verification failed");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
