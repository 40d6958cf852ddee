//! Experiment configuration.
//!
//! A TOML file with four sections. Every key is optional; unknown keys are
//! collected and reported together.
//!
//! ```toml
//! [noise]
//! kind = "brownian"      # or "zero"
//! convention = "ito"     # or "stratonovich"
//! seed = 1
//! seeds = 8              # ensemble: seed, seed + 1, ...
//! delay = 1.0
//! steps = 16             # coarse steps per delay
//! refine = 32            # fine steps per coarse step
//!
//! [exponents]
//! alpha = 0.34
//! beta = 0.49
//! gamma = 0.495
//!
//! [field]
//! kind = "linear"        # linear | pure-delay | quadratic | sine | sine-product | ou-additive
//! offset = 0.0
//! state = 1.0
//! delayed = 0.0
//! scale = 1.0            # sine-product only
//! drift_state = 0.0      # linear drift B(x, y) = drift_state x + drift_delay y
//! drift_delay = 0.0
//! initial = 1.0          # constant initial segment
//!
//! [run]
//! segments = 200
//! k = 1
//! transient = 20
//! reortho_every = 1
//! tol = 0.05
//! pullback = 20
//! k0 = 1
//! upsilon = 0.1
//! epsilon = 1e-3
//! probe_mode = "unstable"  # or "orthogonal"
//! truncation = 20.0        # stationary history length, default 20/λ
//! lifts = 10
//! triples = 100
//! ```
//!
//! Field kinds, all scalar (`σ: ℝ × ℝ → ℝ`, one noise):
//!
//! | kind           | σ(x, y)                              |
//! |----------------|--------------------------------------|
//! | `linear`       | `offset + state·x + delayed·y`       |
//! | `pure-delay`   | `delayed·y`                          |
//! | `quadratic`    | `state·x² + delayed·y²`              |
//! | `sine`         | `offset + state·sin x + delayed·sin y` |
//! | `sine-product` | `scale·sin(x)·y`                     |
//! | `ou-additive`  | `offset` (default 1)                 |

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use toml::{Table, Value};

use crate::ergodic::{DelaySystem, LyapunovOptions, NoiseKind, ProbeMode, StationaryOptions};
use crate::error::{Error, Result};
use crate::field::{DiagonalField, Field, LinearField, ScalarMap, VectorFieldBundle};
use crate::roughpath::Convention;

pub const SEED_ENV: &str = "ROUGHDELAY_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Linear,
    PureDelay,
    Quadratic,
    Sine,
    SineProduct,
    OuAdditive,
}

impl FieldKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => FieldKind::Linear,
            "pure-delay" => FieldKind::PureDelay,
            "quadratic" => FieldKind::Quadratic,
            "sine" => FieldKind::Sine,
            "sine-product" => FieldKind::SineProduct,
            "ou-additive" => FieldKind::OuAdditive,
            _ => return Err(Error::Config(format!("unknown field kind `{s}`"))),
        })
    }

    /// Coefficient keys the kind reads.
    fn keys(self) -> &'static [&'static str] {
        match self {
            FieldKind::Linear | FieldKind::Sine => &["offset", "state", "delayed"],
            FieldKind::PureDelay => &["delayed"],
            FieldKind::Quadratic => &["state", "delayed"],
            FieldKind::SineProduct => &["scale"],
            FieldKind::OuAdditive => &["offset"],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub kind: FieldKind,
    pub offset: f64,
    pub state: f64,
    pub delayed: f64,
    pub scale: f64,
    pub drift_state: f64,
    pub drift_delay: f64,
    pub initial: f64,
}

impl FieldConfig {
    /// The noise coefficient alone.
    pub fn sigma(&self) -> Arc<dyn Field> {
        let map = |m| Arc::new(DiagonalField::scalar(m)) as Arc<dyn Field>;
        match self.kind {
            FieldKind::Linear => Arc::new(LinearField::scalar(self.offset, self.state, self.delayed)),
            FieldKind::PureDelay => Arc::new(LinearField::scalar(0.0, 0.0, self.delayed)),
            FieldKind::OuAdditive => Arc::new(LinearField::scalar(self.offset, 0.0, 0.0)),
            FieldKind::Quadratic => map(ScalarMap::Polynomial(vec![(2, 0, self.state), (0, 2, self.delayed)])),
            FieldKind::Sine => map(ScalarMap::Sine { offset: self.offset, a: self.state, b: self.delayed }),
            FieldKind::SineProduct => map(ScalarMap::SineProduct { c: self.scale }),
        }
    }

    pub fn has_drift(&self) -> bool {
        self.drift_state != 0.0 || self.drift_delay != 0.0
    }

    /// Noise coefficient plus the linear drift, if any.
    pub fn bundle(&self) -> Result<VectorFieldBundle> {
        let vf = VectorFieldBundle::new(self.sigma());
        if !self.has_drift() {
            return Ok(vf);
        }
        let one = |v| DMatrix::from_element(1, 1, v);
        vf.with_linear_drift(one(self.drift_state), one(self.drift_delay))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub noise: NoiseKind,
    pub convention: Convention,
    pub seed: u64,
    pub seeds: usize,
    pub delay: f64,
    pub steps: usize,
    pub refine: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub field: FieldConfig,
    pub segments: usize,
    pub lyapunov: LyapunovOptions,
    pub pullback: usize,
    pub k0: usize,
    pub upsilon: f64,
    pub epsilon: f64,
    pub probe_mode: ProbeMode,
    pub stationary: StationaryOptions,
    pub lifts: usize,
    pub triples: usize,
}

/// Reads keys out of one section and remembers which ones were used.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::Config(format!("`{name}` must be a section"))),
        };
        Ok(Section { name, table, used: BTreeSet::new() })
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&self, key: &str, want: &str) -> Error {
        Error::Config(format!("{}.{key} must be {want}", self.name))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(*v),
            Some(Value::Integer(v)) => Ok(*v as f64),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    fn int(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
            Some(_) => Err(self.bad(key, "a nonnegative integer")),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        self.int(key, default as u64).map(|v| v as usize)
    }

    fn str(&mut self, key: &str, default: &'a str) -> Result<&'a str> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(self.bad(key, "a string")),
        }
    }

    fn unknown(&self, out: &mut Vec<String>) {
        if let Some(t) = self.table {
            out.extend(t.keys().filter(|k| !self.used.contains(*k)).map(|k| format!("{}.{k}", self.name)));
        }
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let mut unknown: Vec<String> = root
            .keys()
            .filter(|k| !["noise", "exponents", "field", "run"].contains(&k.as_str()))
            .cloned()
            .collect();

        let mut noise = Section::new(&root, "noise")?;
        let noise_kind = match noise.str("kind", "brownian")? {
            "brownian" => NoiseKind::Brownian,
            "zero" => NoiseKind::Zero,
            other => return Err(Error::Config(format!("unknown noise kind `{other}`"))),
        };
        let convention = Convention::parse(noise.str("convention", "ito")?)?;
        let seed = noise.int("seed", 0)?;
        let seeds = noise.usize("seeds", 1)?;
        let delay = noise.f64("delay", 1.0)?;
        let steps = noise.usize("steps", 16)?;
        let refine = noise.usize("refine", 32)?;

        let mut exps = Section::new(&root, "exponents")?;
        let alpha = exps.f64("alpha", 0.34)?;
        let beta = exps.f64("beta", 0.49)?;
        let gamma = exps.f64("gamma", 0.495)?;

        let mut fs = Section::new(&root, "field")?;
        let kind = FieldKind::parse(fs.str("kind", "linear")?)?;
        let coef = |fs: &mut Section, key: &'static str, default: f64| -> Result<f64> {
            if kind.keys().contains(&key) {
                fs.f64(key, default)
            } else {
                Ok(default)
            }
        };
        let field = FieldConfig {
            kind,
            offset: coef(&mut fs, "offset", if kind == FieldKind::OuAdditive { 1.0 } else { 0.0 })?,
            state: coef(&mut fs, "state", 0.0)?,
            delayed: coef(&mut fs, "delayed", 0.0)?,
            scale: coef(&mut fs, "scale", 1.0)?,
            drift_state: fs.f64("drift_state", 0.0)?,
            drift_delay: fs.f64("drift_delay", 0.0)?,
            initial: fs.f64("initial", 1.0)?,
        };

        let mut run = Section::new(&root, "run")?;
        let defaults = LyapunovOptions::default();
        let lyapunov = LyapunovOptions {
            k: run.usize("k", defaults.k)?,
            n_steps: 0,
            transient: run.usize("transient", defaults.transient)?,
            reortho_every: run.usize("reortho_every", defaults.reortho_every)?,
            tol: run.f64("tol", defaults.tol)?,
            floor: defaults.floor,
        };
        let segments = run.usize("segments", defaults.n_steps)?;
        let pullback = run.usize("pullback", 20)?;
        let k0 = run.usize("k0", 1)?;
        let upsilon = run.f64("upsilon", 0.1)?;
        let epsilon = run.f64("epsilon", 1e-3)?;
        let probe_mode = match run.str("probe_mode", "unstable")? {
            "unstable" => ProbeMode::Unstable,
            "orthogonal" => ProbeMode::Orthogonal,
            other => return Err(Error::Config(format!("unknown probe mode `{other}`"))),
        };
        let truncation = match run.raw("truncation") {
            None => None,
            Some(_) => Some(run.f64("truncation", 0.0)?),
        };
        let stationary = StationaryOptions { truncation, ..StationaryOptions::default() };
        let lifts = run.usize("lifts", 10)?;
        let triples = run.usize("triples", 100)?;

        for s in [&noise, &exps, &fs, &run] {
            s.unknown(&mut unknown);
        }
        if !unknown.is_empty() {
            unknown.sort();
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }

        let cfg = Config {
            noise: noise_kind,
            convention,
            seed,
            seeds,
            delay,
            steps,
            refine,
            alpha,
            beta,
            gamma,
            field,
            segments,
            lyapunov: LyapunovOptions { n_steps: segments, ..lyapunov },
            pullback,
            k0,
            upsilon,
            epsilon,
            probe_mode,
            stationary,
            lifts,
            triples,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let positive = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::Config(format!("{what} must be positive"))) };
        positive(self.delay > 0.0, "noise.delay")?;
        positive(self.steps > 0, "noise.steps")?;
        positive(self.refine > 0, "noise.refine")?;
        positive(self.seeds > 0, "noise.seeds")?;
        positive(self.segments > 0, "run.segments")?;
        positive(self.lyapunov.reortho_every > 0, "run.reortho_every")?;
        positive(self.epsilon > 0.0, "run.epsilon")?;
        if !(self.gamma > 1.0 / 3.0 && self.gamma <= 0.5) {
            return Err(Error::Config("exponents.gamma must lie in (1/3, 1/2]".into()));
        }
        Ok(())
    }

    /// Applies `ROUGHDELAY_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn system(&self) -> Result<DelaySystem> {
        let mut sys = DelaySystem::new(self.field.bundle()?, self.delay, self.steps)?;
        sys.refine = self.refine;
        sys.gamma = self.gamma;
        sys.convention = self.convention;
        sys.noise = self.noise;
        sys.initial = vec![self.field.initial];
        Ok(sys)
    }
}
