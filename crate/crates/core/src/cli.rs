//! Batch command-line runner.
//!
//! Every subcommand reads the config, computes everything in memory and
//! only then writes its artifacts into `--out`, each through a temporary
//! file and a rename. Exit codes: 0 success, 1 error, 2 failed check.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::ergodic::{
    find_stationary, lyapunov_ensemble, stable_directions, stable_rate_probe, unstable_rate_probe, ProbeReport,
};
use crate::field::VectorFieldBundle;
use crate::io::{parse_rough_path, rough_path_to_string, write_atomic};
use crate::noise::sample_brownian;
use crate::roughpath::{exponent_condition_lhs, lift, lift_ito, lift_stratonovich, validate_exponents, Convention};
use crate::solve::Trajectory;

/// Chen and Itô–Stratonovich checks must hold to this absolute level.
pub const LIFT_TOL: f64 = 1e-10;
/// Largest accepted relative error of the analytic field partials.
pub const PARTIALS_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "roughdelay", version, about = "Rough-path experiments for stochastic delay equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed, overriding the config and ROUGHDELAY_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Chen and Itô–Stratonovich identities on random lifts; writes one lift.
    LiftCheck,
    /// Solution trajectory from the constant initial segment.
    Solve,
    /// Top Lyapunov exponents over the seed ensemble.
    Lyapunov,
    /// Stationary trajectory of dY = C Y dt + σ(Y, Y(−r)) dB.
    Stationary,
    /// Decay of a perturbation orthogonal to the unstable subspace.
    ProbeStable,
    /// Backward decay along a seeded past orbit.
    ProbeUnstable,
    /// Exponent triple and field checks.
    Validate,
}

impl Command {
    fn stem(self) -> &'static str {
        match self {
            Command::LiftCheck => "lift-check",
            Command::Solve => "solve",
            Command::Lyapunov => "lyapunov",
            Command::Stationary => "stationary",
            Command::ProbeStable => "probe-stable",
            Command::ProbeUnstable => "probe-unstable",
            Command::Validate => "validate",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    passed: bool,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let Some(path) = &cli.config else { bail!("--config is required") };
    let mut cfg = Config::from_path(path)?;
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the thread pool")?;
    let outcome = pool.install(|| compute(cli.command, cli.format, &cfg))?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    for (name, bytes) in &outcome.files {
        let target = cli.out.join(name);
        write_atomic(&target, bytes).with_context(|| format!("writing {}", target.display()))?;
        println!("wrote {}", target.display());
    }
    if !outcome.passed {
        eprintln!("{}: check failed, see {}", cli.command.stem(), report_path(&cli.out, cli.command, cli.format).display());
    }
    Ok(outcome.passed)
}

fn report_path(out: &Path, cmd: Command, fmt: Format) -> PathBuf {
    out.join(format!("{}.{}", cmd.stem(), fmt.ext()))
}

fn json_bytes<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn compute(cmd: Command, fmt: Format, cfg: &Config) -> anyhow::Result<Outcome> {
    let name = format!("{}.{}", cmd.stem(), fmt.ext());
    let single = |body: Vec<u8>, passed: bool| Outcome { files: vec![(name.clone(), body)], passed };
    match cmd {
        Command::LiftCheck => lift_check(cfg, fmt, name.clone()),
        Command::Solve => {
            let (_, traj) = cfg.system()?.base_orbit(cfg.seed, 0, cfg.segments as i64)?;
            let body = match fmt {
                Format::Csv => traj.to_csv().into_bytes(),
                Format::Json => json_bytes(&trajectory_json(&traj, cfg.seed))?,
            };
            Ok(single(body, true))
        }
        Command::Lyapunov => {
            let rep = lyapunov_ensemble(&cfg.system()?, &cfg.seed_list(), &cfg.lyapunov)?;
            let body = match fmt {
                Format::Json => json_bytes(&rep)?,
                Format::Csv => {
                    let mut s = String::from("seed,block");
                    for i in 0..cfg.lyapunov.k {
                        let _ = write!(s, ",mu{i}");
                    }
                    s.push('\n');
                    for r in &rep.reports {
                        for b in 0..r.running.first().map_or(0, Vec::len) {
                            let _ = write!(s, "{},{b}", r.seed);
                            for run in &r.running {
                                let _ = write!(s, ",{:e}", run[b]);
                            }
                            s.push('\n');
                        }
                    }
                    s.into_bytes()
                }
            };
            Ok(single(body, true))
        }
        Command::Stationary => stationary(cfg, fmt, name.clone()),
        Command::ProbeStable => {
            let sys = cfg.system()?;
            let dirs = stable_directions(&sys, cfg.seed, cfg.pullback, cfg.k0, 1)?;
            let base = sys.constant_segment(0, &sys.initial);
            let rep = stable_rate_probe(&sys, cfg.seed, &base, &dirs[0], cfg.upsilon, cfg.epsilon, cfg.segments)?;
            Ok(single(probe_body(&rep, fmt)?, true))
        }
        Command::ProbeUnstable => {
            let sys = cfg.system()?;
            let rep = unstable_rate_probe(&sys, cfg.seed, cfg.upsilon, cfg.epsilon, cfg.segments, cfg.probe_mode)?;
            Ok(single(probe_body(&rep, fmt)?, true))
        }
        Command::Validate => {
            let ordered = 1.0 / 3.0 < cfg.alpha && cfg.alpha < cfg.beta && cfg.beta < cfg.gamma && cfg.gamma < 0.5;
            let lhs = exponent_condition_lhs(cfg.alpha, cfg.beta);
            let exponents_ok = validate_exponents(cfg.alpha, cfg.beta, cfg.gamma);
            let partials = cfg.field.bundle()?.partials_check(64, 1e-5, cfg.seed);
            let passed = exponents_ok && partials <= PARTIALS_TOL;
            let rep = json!({
                "alpha": cfg.alpha,
                "beta": cfg.beta,
                "gamma": cfg.gamma,
                "ordered": ordered,
                "condition_lhs": lhs,
                "condition_rhs": cfg.beta - cfg.alpha,
                "exponents_ok": exponents_ok,
                "partials_error": partials,
                "partials_tol": PARTIALS_TOL,
                "passed": passed,
            });
            let body = match fmt {
                Format::Json => json_bytes(&rep)?,
                Format::Csv => format!(
                    "alpha,beta,gamma,condition_lhs,condition_rhs,exponents_ok,partials_error,passed\n{:e},{:e},{:e},{:e},{:e},{},{:e},{}\n",
                    cfg.alpha,
                    cfg.beta,
                    cfg.gamma,
                    lhs,
                    cfg.beta - cfg.alpha,
                    exponents_ok,
                    partials,
                    passed
                )
                .into_bytes(),
            };
            Ok(single(body, passed))
        }
    }
}

fn trajectory_json(traj: &Trajectory, seed: u64) -> Value {
    let segs: Vec<Value> = traj
        .segments
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let t: Vec<f64> = (0..=s.steps()).map(|j| s.time(j)).collect();
            let y: Vec<&[f64]> = (0..=s.steps()).map(|j| s.value(j)).collect();
            let dy: Vec<&[f64]> = (0..=s.steps()).map(|j| s.zeta0(j)).collect();
            json!({ "segment": k, "t": t, "y": y, "dy": dy })
        })
        .collect();
    json!({ "seed": seed, "segments": segs })
}

fn probe_body(rep: &ProbeReport, fmt: Format) -> anyhow::Result<Vec<u8>> {
    Ok(match fmt {
        Format::Json => {
            let mut v = serde_json::to_value(rep)?;
            v["stable_fiber_estimate"] = json!("orthogonal complement of the pullback unstable basis");
            json_bytes(&v)?
        }
        Format::Csv => {
            let mut s = String::from("k,distance\n");
            for (k, d) in rep.distances.iter().enumerate() {
                let _ = writeln!(s, "{k},{d:e}");
            }
            s.into_bytes()
        }
    })
}

#[derive(Serialize)]
struct LiftRow {
    seed: u64,
    chen_ito: f64,
    chen_stratonovich: f64,
    ito_stratonovich_defect: f64,
    delayed_areas_identical: bool,
}

fn lift_check(cfg: &Config, fmt: Format, name: String) -> anyhow::Result<Outcome> {
    let (h, r) = (cfg.delay / cfg.steps as f64, cfg.delay);
    let d = cfg.field.bundle()?.noise_dim().max(2);
    let t_end = cfg.segments as f64 * r;
    let mut rows = Vec::with_capacity(cfg.lifts);
    let mut written = None;
    for i in 0..cfg.lifts as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let path = sample_brownian(d, -r, t_end, h / cfg.refine as f64, seed)?;
        let ito = lift_ito(&path, h, r, cfg.gamma)?;
        let strat = lift_stratonovich(&path, h, r, cfg.gamma)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (ito.first_node(), ito.last_node());
        let triples: Vec<(i64, i64, i64)> = (0..cfg.triples)
            .map(|_| {
                let mut v = [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
                v.sort_unstable();
                (v[0], v[1], v[2])
            })
            .collect();
        let mut defect: f64 = 0.0;
        let mut identical = true;
        for node in lo..hi {
            let (a, b) = (ito.interval_area(node), strat.interval_area(node));
            for (idx, (x, y)) in a.iter().zip(b).enumerate() {
                let shift = if idx % (d + 1) == 0 { h / 2.0 } else { 0.0 };
                defect = defect.max((y - x - shift).abs());
            }
            identical &= ito.interval_delayed_area(node) == strat.interval_delayed_area(node);
        }
        rows.push(LiftRow {
            seed,
            chen_ito: ito.chen_residual(&triples),
            chen_stratonovich: strat.chen_residual(&triples),
            ito_stratonovich_defect: defect,
            delayed_areas_identical: identical,
        });
        if i == 0 {
            let text = rough_path_to_string(&lift(&path, h, r, cfg.gamma, cfg.convention)?);
            written = Some(text);
        }
    }
    let mut files = Vec::new();
    let mut round_trip = true;
    if let Some(text) = written {
        let back = parse_rough_path(text.as_bytes())?;
        round_trip = rough_path_to_string(&back) == text;
        files.push(("roughpath.txt".to_string(), text.into_bytes()));
    }
    let passed = round_trip
        && rows.iter().all(|r| {
            r.chen_ito < LIFT_TOL && r.chen_stratonovich < LIFT_TOL && r.ito_stratonovich_defect < LIFT_TOL && r.delayed_areas_identical
        });
    let body = match fmt {
        Format::Json => json_bytes(&json!({
            "dim": d,
            "step": h,
            "delay": r,
            "triples": cfg.triples,
            "tolerance": LIFT_TOL,
            "lifts": rows,
            "round_trip_exact": round_trip,
            "passed": passed,
        }))?,
        Format::Csv => {
            let mut s = String::from("seed,chen_ito,chen_stratonovich,ito_stratonovich_defect,delayed_areas_identical\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{:e},{:e},{:e},{}",
                    r.seed, r.chen_ito, r.chen_stratonovich, r.ito_stratonovich_defect, r.delayed_areas_identical
                );
            }
            s.into_bytes()
        }
    };
    files.insert(0, (name, body));
    Ok(Outcome { files, passed })
}

fn stationary(cfg: &Config, fmt: Format, name: String) -> anyhow::Result<Outcome> {
    if cfg.field.drift_delay != 0.0 {
        bail!("stationary runs need field.drift_delay = 0; the drift enters as C = field.drift_state");
    }
    if cfg.convention != Convention::Ito {
        bail!("stationary runs use the Itô lift");
    }
    let c = DMatrix::from_element(1, 1, cfg.field.drift_state);
    let sigma = VectorFieldBundle::new(cfg.field.sigma());
    let (h, r) = (cfg.delay / cfg.steps as f64, cfg.delay);
    let sys = cfg.system()?;
    let path = sys.sample(cfg.seed, 0, cfg.segments as i64)?;
    let rp = lift(&path, h, r, cfg.gamma, cfg.convention)?;
    let st = find_stationary(&c, &sigma, &rp, &cfg.stationary)?;
    let relation = st.relation_residuals(&c, &sigma, &rp)?;
    let relation_max = relation.iter().copied().fold(0.0, f64::max);
    let body = match fmt {
        Format::Csv => Trajectory { segments: st.segments.clone() }.to_csv().into_bytes(),
        Format::Json => {
            let mut v = serde_json::to_value(st.summary())?;
            v["seed"] = json!(cfg.seed);
            v["relation_max"] = json!(relation_max);
            json_bytes(&v)?
        }
    };
    Ok(Outcome { files: vec![(name, body)], passed: true })
}
