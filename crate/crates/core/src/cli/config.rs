//! Scenario configuration: parsing, defaults and validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::ADJOINT_TOL;
use crate::integrator::Tolerances;
use crate::matrixkit::{c, C64};
use crate::problems::{FlowProfile, RealFn, ScalarFn, ScalarProblemSpec, Variant};
use crate::resolvent::Profile;
use crate::timescale::TimeScale;
use crate::weylsims::DISK_TOL;

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| format!("invalid number {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexObject {
    re: Number,
    #[serde(default)]
    im: Option<Number>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ComplexRepr {
    Real(Number),
    Pair([Number; 2]),
    Object(ComplexObject),
}

/// A complex number written as `1.5`, `"1.5"`, `[re, im]` or
/// `{"re": .., "im": ..}`. Strings keep full decimal precision.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(try_from = "ComplexRepr", into = "[f64; 2]")]
pub struct Complex(pub C64);

impl TryFrom<ComplexRepr> for Complex {
    type Error = String;

    fn try_from(r: ComplexRepr) -> std::result::Result<Self, String> {
        let (re, im) = match r {
            ComplexRepr::Real(x) => (x.value()?, 0.0),
            ComplexRepr::Pair([a, b]) => (a.value()?, b.value()?),
            ComplexRepr::Object(o) => (
                o.re.value()?,
                o.im.map(|v| v.value()).transpose()?.unwrap_or(0.0),
            ),
        };
        Ok(Complex(C64::new(re, im)))
    }
}

impl From<Complex> for [f64; 2] {
    fn from(z: Complex) -> Self {
        [z.0.re, z.0.im]
    }
}

/// Closed-form coefficient functions of `t`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    /// `Σ c_k t^k`.
    Polynomial { coeffs: Vec<Complex> },
    /// `mean + amplitude·cos(frequency·t + phase)`.
    Cosine {
        mean: Complex,
        amplitude: Complex,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `scale·e^{rate·t}`.
    Exponential { scale: Complex, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(Complex),
    Expr(Expr),
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Coefficient::Constant(z) => z.0,
            Coefficient::Expr(Expr::Polynomial { coeffs }) => {
                coeffs.iter().rev().fold(c(0.0), |acc, a| acc * t + a.0)
            }
            Coefficient::Expr(Expr::Cosine {
                mean,
                amplitude,
                frequency,
                phase,
            }) => mean.0 + amplitude.0 * (frequency * t + phase).cos(),
            Coefficient::Expr(Expr::Exponential { scale, rate }) => scale.0 * (rate * t).exp(),
        }
    }

    fn is_real(&self) -> bool {
        match self {
            Coefficient::Constant(z) => z.0.im == 0.0,
            Coefficient::Expr(Expr::Polynomial { coeffs }) => coeffs.iter().all(|z| z.0.im == 0.0),
            Coefficient::Expr(Expr::Cosine {
                mean, amplitude, ..
            }) => mean.0.im == 0.0 && amplitude.0.im == 0.0,
            Coefficient::Expr(Expr::Exponential { scale, .. }) => scale.0.im == 0.0,
        }
    }

    fn function(&self) -> ScalarFn {
        let me = self.clone();
        Arc::new(move |t| me.eval(t))
    }

    fn real_function(&self, path: &str) -> Result<RealFn> {
        if !self.is_real() {
            return Err(config_error(path, "must be real"));
        }
        let me = self.clone();
        Ok(Arc::new(move |t| me.eval(t).re))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Flow {
    Named(FlowName),
    Custom(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowName {
    Poiseuille,
    Couette,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    SturmLiouville {
        p: Coefficient,
        q: Coefficient,
        w: Coefficient,
        eta: f64,
    },
    FourthOrder {
        p0: Coefficient,
        p1: Coefficient,
        p2: Coefficient,
        w: Coefficient,
        eta: f64,
    },
    EvenOrder {
        p: Vec<Coefficient>,
        w: Coefficient,
        eta: f64,
    },
    OrrSommerfeld {
        a: f64,
        #[serde(rename = "R")]
        r: f64,
        flow: Flow,
        /// Interval mapped onto `[-1, 1]` for the named flows; defaults to
        /// the whole scale.
        #[serde(default)]
        domain: Option<[f64; 2]>,
        eta: f64,
    },
}

impl ProblemConfig {
    pub fn eta(&self) -> f64 {
        match self {
            ProblemConfig::SturmLiouville { eta, .. }
            | ProblemConfig::FourthOrder { eta, .. }
            | ProblemConfig::EvenOrder { eta, .. }
            | ProblemConfig::OrrSommerfeld { eta, .. } => *eta,
        }
    }

    /// The scalar problem on `ts`, with every field checked.
    pub fn spec(&self, ts: &TimeScale) -> Result<ScalarProblemSpec> {
        let eta = self.eta();
        if !eta.is_finite() {
            return Err(config_error("problem.eta", "must be finite"));
        }
        let variant = match self {
            ProblemConfig::SturmLiouville { p, q, w, .. } => Variant::SturmLiouville {
                p: p.function(),
                q: q.function(),
                w: w.real_function("problem.w")?,
            },
            ProblemConfig::FourthOrder { p0, p1, p2, w, .. } => Variant::FourthOrder {
                p0: p0.function(),
                p1: p1.function(),
                p2: p2.function(),
                w: w.real_function("problem.w")?,
            },
            ProblemConfig::EvenOrder { p, w, .. } => {
                if p.len() < 2 {
                    return Err(config_error("problem.p", "needs at least p0 and p1"));
                }
                Variant::EvenOrder {
                    p: p.iter().map(Coefficient::function).collect(),
                    w: w.real_function("problem.w")?,
                }
            }
            ProblemConfig::OrrSommerfeld {
                a, r, flow, domain, ..
            } => {
                if !(*a > 0.0) {
                    return Err(config_error(
                        "problem.a",
                        format!("must be positive, got {a}"),
                    ));
                }
                if !(*r > 0.0) {
                    return Err(config_error(
                        "problem.R",
                        format!("must be positive, got {r}"),
                    ));
                }
                let [lo, hi] = domain.unwrap_or([ts.t0(), ts.horizon()]);
                if !(hi > lo) {
                    return Err(config_error("problem.domain", "must be increasing"));
                }
                let (v, v_dd) = match flow {
                    Flow::Named(FlowName::Poiseuille) => {
                        FlowProfile::Poiseuille.functions(lo, hi, ts)
                    }
                    Flow::Named(FlowName::Couette) => FlowProfile::Couette.functions(lo, hi, ts),
                    Flow::Custom(e) => (
                        Coefficient::Expr(e.clone()).real_function("problem.flow")?,
                        None,
                    ),
                };
                Variant::OrrSommerfeld {
                    a: *a,
                    r: *r,
                    v,
                    v_dd,
                }
            }
        };
        let spec = ScalarProblemSpec { variant, eta };
        spec.validate(ts)
            .map_err(|e| config_error("problem", e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimescaleConfig {
    Discrete {
        prepoint: f64,
        points: Vec<f64>,
    },
    Continuous {
        t0: f64,
        #[serde(rename = "T")]
        horizon: f64,
        step: f64,
    },
    /// `t0, t0+step, …` up to `T`, with prepoint `t0 - step`.
    Uniform {
        t0: f64,
        #[serde(rename = "T")]
        horizon: f64,
        step: f64,
    },
}

impl TimescaleConfig {
    pub fn build(&self) -> Result<TimeScale> {
        let wrap = |e: Error| config_error("timescale", e.to_string());
        match self {
            TimescaleConfig::Discrete { prepoint, points } => {
                TimeScale::discrete(*prepoint, points.clone()).map_err(wrap)
            }
            TimescaleConfig::Continuous { t0, horizon, step } => {
                TimeScale::continuous(*t0, *horizon, *step).map_err(wrap)
            }
            TimescaleConfig::Uniform { t0, horizon, step } => {
                if !(*step > 0.0) {
                    return Err(config_error("timescale.step", "must be positive"));
                }
                let count = ((horizon - t0) / step + 1e-9).floor() as usize + 1;
                TimeScale::uniform_discrete(*t0, *step, count).map_err(wrap)
            }
        }
    }
}

/// Overrides for integrator settings and check thresholds. Thresholds left
/// out take scale-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub disk: Option<f64>,
    pub nesting: Option<f64>,
    pub adjoint_formula: Option<f64>,
    pub greens: Option<f64>,
    pub block_form: Option<f64>,
    pub coupling: Option<f64>,
    pub resolvent: Option<f64>,
    pub boundary: Option<f64>,
    pub norm_slack: Option<f64>,
    pub m_identity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub rtol: f64,
    pub atol: f64,
    pub disk: f64,
    pub nesting: f64,
    pub adjoint_formula: f64,
    pub greens: f64,
    pub block_form: f64,
    pub coupling: f64,
    pub resolvent: f64,
    pub boundary: f64,
    pub norm_slack: f64,
    /// Asserted only when set.
    pub m_identity: Option<f64>,
}

impl Thresholds {
    fn resolve(cfg: &TolerancesConfig, discrete: bool) -> Result<Self> {
        let pick = |v: Option<f64>, d: f64, c: f64| v.unwrap_or(if discrete { d } else { c });
        let out = Self {
            rtol: pick(cfg.rtol, 1e-10, 1e-10),
            atol: pick(cfg.atol, 1e-12, 1e-12),
            disk: pick(cfg.disk, DISK_TOL, DISK_TOL),
            nesting: pick(cfg.nesting, 1e-8, 1e-8),
            adjoint_formula: pick(cfg.adjoint_formula, ADJOINT_TOL, ADJOINT_TOL),
            greens: pick(cfg.greens, 1e-10, 1e-7),
            block_form: pick(cfg.block_form, 1e-9, 1e-6),
            coupling: pick(cfg.coupling, 1e-10, 1e-6),
            resolvent: pick(cfg.resolvent, 1e-9, 1e-5),
            boundary: pick(cfg.boundary, 1e-10, 1e-10),
            norm_slack: pick(cfg.norm_slack, 1e-8, 1e-8),
            m_identity: cfg.m_identity,
        };
        let named = [
            ("rtol", out.rtol),
            ("atol", out.atol),
            ("disk", out.disk),
            ("nesting", out.nesting),
            ("adjoint_formula", out.adjoint_formula),
            ("greens", out.greens),
            ("block_form", out.block_form),
            ("coupling", out.coupling),
            ("resolvent", out.resolvent),
            ("boundary", out.boundary),
            ("norm_slack", out.norm_slack),
            ("m_identity", out.m_identity.unwrap_or(1.0)),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(
                    format!("tolerances.{name}"),
                    "must be positive",
                ));
            }
        }
        Ok(out)
    }

    pub fn integrator(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            ..Tolerances::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// The scenario file as written.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemConfig,
    pub timescale: TimescaleConfig,
    pub lambda0: Complex,
    #[serde(default)]
    pub xi: Option<Complex>,
    pub lambdas: Vec<Complex>,
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub forcings: Vec<Profile>,
    #[serde(default)]
    pub forcing_count: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated scenario with defaults filled in.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub raw: RawConfig,
    pub ts: TimeScale,
    pub spec: ScalarProblemSpec,
    pub lambda0: C64,
    /// `λ₁ + (λ₁ - λ₀)` for the first `λ` unless given.
    pub xi: C64,
    pub lambdas: Vec<C64>,
    /// Increasing; the scale horizon when none are given.
    pub horizons: Vec<f64>,
    pub thresholds: Thresholds,
    pub forcings: Vec<Profile>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

/// Forcings used when the scenario lists none: a bump a quarter of the way
/// in plus seeded random polynomials.
pub fn default_forcings(ts: &TimeScale, count: usize, seed: u64) -> Vec<Profile> {
    let span = ts.horizon() - ts.t0();
    let mut out = vec![Profile::GaussianBump {
        center: ts.t0() + 0.25 * span,
        width: (0.05 * span).max(0.5),
    }];
    for i in 1..count.max(1) {
        out.push(Profile::RandomPolynomial {
            degree: 3,
            seed: seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
        });
    }
    out
}

impl ScenarioConfig {
    pub fn from_raw(raw: RawConfig, fallback_name: &str) -> Result<Self> {
        let ts = raw.timescale.build()?;
        let spec = raw.problem.spec(&ts)?;
        if raw.lambdas.is_empty() {
            return Err(config_error("lambdas", "at least one value required"));
        }
        for (i, l) in raw.lambdas.iter().enumerate() {
            if !(l.0.re.is_finite() && l.0.im.is_finite()) {
                return Err(config_error(format!("lambdas[{i}]"), "must be finite"));
            }
        }
        let mut horizons = raw.horizons.clone();
        if horizons.is_empty() {
            horizons.push(ts.horizon());
        }
        for (i, &h) in horizons.iter().enumerate() {
            if !(h > ts.t0() && h <= ts.horizon() * (1.0 + 1e-12) + 1e-12) {
                return Err(config_error(
                    format!("horizons[{i}]"),
                    format!("{h} outside ({}, {}]", ts.t0(), ts.horizon()),
                ));
            }
        }
        if horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("horizons", "must be strictly increasing"));
        }
        let thresholds = Thresholds::resolve(&raw.tolerances, ts.is_discrete())?;
        let lambda0 = raw.lambda0.0;
        let lambdas: Vec<C64> = raw.lambdas.iter().map(|z| z.0).collect();
        let xi = raw.xi.map(|z| z.0).unwrap_or(lambdas[0] * 2.0 - lambda0);
        let forcings = if raw.forcings.is_empty() {
            default_forcings(&ts, raw.forcing_count.unwrap_or(3), raw.seed)
        } else {
            raw.forcings.clone()
        };
        for (i, f) in forcings.iter().enumerate() {
            if let Profile::GaussianBump { width, .. } = f {
                if !(*width > 0.0) {
                    return Err(config_error(
                        format!("forcings[{i}].width"),
                        "must be positive",
                    ));
                }
            }
        }
        Ok(Self {
            name: raw
                .name
                .clone()
                .unwrap_or_else(|| fallback_name.to_string()),
            ts,
            spec,
            lambda0,
            xi,
            lambdas,
            horizons,
            thresholds,
            forcings,
            seed: raw.seed,
            output_dir: raw.output.dir.clone(),
            raw,
        })
    }

    /// Parses a JSON document; errors carry the path of the offending field.
    pub fn from_json(text: &str, fallback_name: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(
                if path == "." { "<root>".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        Self::from_raw(raw, fallback_name)
    }

    /// The scenario with `seed` replaced, regenerating default forcings.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if self.raw.forcings.is_empty() {
            self.forcings = default_forcings(&self.ts, self.raw.forcing_count.unwrap_or(3), seed);
        }
        self.raw.seed = seed;
        self.seed = seed;
        self
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    ScenarioConfig::from_json(&text, stem)
}
