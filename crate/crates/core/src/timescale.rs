//! Truncated Sturmian time scales.
//!
//! A time scale unbounded above satisfies `σ(ρ(t)) = ρ(σ(t)) = t` at every
//! point only if it is either a half-line or a strictly increasing sequence of
//! isolated points; an interval endpoint that borders a gap is dense on one
//! side and scattered on the other. This characterization is the one used
//! here: [`TimeScale`] is either `Continuous` (the half-line, sampled on an
//! output grid) or `Discrete` (isolated points with an explicit prepoint
//! `ρ(t₀)`). Both are truncated at a finite horizon.
//!
//! Discrete scales continue past the horizon with the last spacing repeated,
//! so `σ` and `μ` are defined at every stored point.

use crate::error::{Error, Result};
use crate::matrixkit::CMat;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    kind: ScaleKind,
    points: Vec<f64>,
    prepoint: f64,
    base_step: f64,
}

/// Index into the grid of a [`TimeScale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridIndex(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jumps {
    pub sigma: f64,
    pub rho: f64,
    pub mu: f64,
    pub nu: f64,
}

impl TimeScale {
    /// Isolated points `t₀ < t₁ < …` with `ρ(t₀) = prepoint`.
    pub fn discrete(prepoint: f64, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::IndexOutOfRange { index: 0, len: 0 });
        }
        if !(prepoint < points[0]) {
            return Err(Error::MissingPrepoint {
                prepoint,
                first: points[0],
            });
        }
        for (i, w) in points.windows(2).enumerate() {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return Err(Error::NonMonotone { index: i + 1, step });
            }
        }
        Ok(Self {
            kind: ScaleKind::Discrete,
            points,
            prepoint,
            base_step: 0.0,
        })
    }

    /// Uniform lattice `t₀, t₀+h, …` with `count` points and prepoint `t₀-h`.
    pub fn uniform_discrete(t0: f64, h: f64, count: usize) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidStep(h));
        }
        let points = (0..count).map(|k| t0 + h * k as f64).collect();
        Self::discrete(t0 - h, points)
    }

    /// The half-line `[t0, ∞)` truncated at `horizon`, sampled every `base_step`.
    /// The final step is shortened so that `horizon` is a grid point.
    pub fn continuous(t0: f64, horizon: f64, base_step: f64) -> Result<Self> {
        if !(horizon > t0) {
            return Err(Error::EmptyInterval { t0, horizon });
        }
        if !(base_step > 0.0) {
            return Err(Error::InvalidStep(base_step));
        }
        let span = horizon - t0;
        let mut count = (span / base_step).floor() as usize;
        if t0 + count as f64 * base_step < horizon - 1e-9 * base_step {
            count += 1;
        }
        let mut points: Vec<f64> = (0..count).map(|k| t0 + k as f64 * base_step).collect();
        points.push(horizon);
        Ok(Self {
            kind: ScaleKind::Continuous,
            points,
            prepoint: t0,
            base_step,
        })
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn is_discrete(&self) -> bool {
        self.kind == ScaleKind::Discrete
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.points[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    /// The same scale cut at `horizon`: dense scales end exactly there,
    /// scattered scales keep the points not exceeding it.
    pub fn truncate(&self, horizon: f64) -> Result<Self> {
        match self.kind {
            ScaleKind::Continuous => Self::continuous(self.t0(), horizon, self.base_step),
            ScaleKind::Discrete => {
                let slack = 1e-12 * horizon.abs().max(1.0);
                let points: Vec<f64> = self
                    .points
                    .iter()
                    .copied()
                    .filter(|&t| t <= horizon + slack)
                    .collect();
                if points.len() < 2 {
                    return Err(Error::EmptyInterval {
                        t0: self.t0(),
                        horizon,
                    });
                }
                Self::discrete(self.prepoint, points)
            }
        }
    }

    /// `ρ(t₀)`; equals `t₀` on continuous scales.
    pub fn prepoint(&self) -> f64 {
        self.prepoint
    }

    pub fn t(&self, k: usize) -> f64 {
        self.points[k]
    }

    fn check(&self, k: usize) -> Result<()> {
        if k < self.points.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.points.len(),
            })
        }
    }

    /// Forward graininess at grid index `k` (zero on continuous scales).
    pub fn mu(&self, k: usize) -> f64 {
        match self.kind {
            ScaleKind::Continuous => 0.0,
            ScaleKind::Discrete => {
                let p = &self.points;
                if k + 1 < p.len() {
                    p[k + 1] - p[k]
                } else if p.len() >= 2 {
                    p[k] - p[k - 1]
                } else {
                    p[0] - self.prepoint
                }
            }
        }
    }

    /// Backward graininess at grid index `k`.
    pub fn nu(&self, k: usize) -> f64 {
        match self.kind {
            ScaleKind::Continuous => 0.0,
            ScaleKind::Discrete => {
                if k == 0 {
                    self.points[0] - self.prepoint
                } else {
                    self.points[k] - self.points[k - 1]
                }
            }
        }
    }

    pub fn jumps(&self, k: GridIndex) -> Result<Jumps> {
        let k = k.0;
        self.check(k)?;
        let t = self.points[k];
        let (mu, nu) = (self.mu(k), self.nu(k));
        Ok(Jumps {
            sigma: t + mu,
            rho: t - nu,
            mu,
            nu,
        })
    }

    /// Grid index of the point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        match self
            .points
            .binary_search_by(|p| p.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.points.len() {
                    self.points.len() - 1
                } else if (self.points[i] - t).abs() < (t - self.points[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }

    /// `σ(ρ(t_k))` and `ρ(σ(t_k))`; both equal `t_k` on a valid scale.
    pub fn sturm_compositions(&self, k: usize) -> (f64, f64) {
        let t = self.points[k];
        match self.kind {
            ScaleKind::Continuous => (t, t),
            ScaleKind::Discrete => {
                // ρ(t_k) is t_{k-1} (the prepoint at k=0) and σ of that is the
                // next stored point; symmetrically for ρ(σ(t_k)).
                let rho_idx = k.checked_sub(1);
                let sig_of_rho = match rho_idx {
                    None => self.points[0],
                    Some(i) => self.points[i + 1],
                };
                let rho_of_sigma = if k + 1 < self.points.len() {
                    self.points[k + 1 - 1]
                } else {
                    t
                };
                (sig_of_rho, rho_of_sigma)
            }
        }
    }

    /// Delta integral of sampled matrices over `[t_a, t_b)`.
    ///
    /// Discrete: `Σ_{k=a}^{b-1} μ(t_k) f(t_k)`, exact. Continuous: composite
    /// Simpson over the grid points `a..=b`.
    pub fn delta_integral(&self, samples: &[CMat], a: GridIndex, b: GridIndex) -> Result<CMat> {
        let (a, b) = (a.0, b.0);
        self.check(b)?;
        if samples.len() < self.points.len() && b >= samples.len() {
            return Err(Error::IndexOutOfRange {
                index: b,
                len: samples.len(),
            });
        }
        if a > b {
            return Err(Error::IndexOutOfRange {
                index: a,
                len: b + 1,
            });
        }
        let shape = samples[a].shape();
        let mut acc = CMat::zeros(shape.0, shape.1);
        if a == b {
            return Ok(acc);
        }
        match self.kind {
            ScaleKind::Discrete => {
                for k in a..b {
                    acc += &samples[k] * crate::matrixkit::c(self.mu(k));
                }
            }
            ScaleKind::Continuous => {
                let x = &self.points[a..=b];
                let f = &samples[a..=b];
                acc = simpson(x, f);
            }
        }
        Ok(acc)
    }

    /// `∫_{t_{k-1}}^{t_k} f Δt` for `k = 1..len`, each computed from local
    /// samples only.
    pub fn interval_integrals(&self, samples: &[CMat]) -> Vec<CMat> {
        let n = samples.len().min(self.points.len());
        let shape = samples[0].shape();
        let c = crate::matrixkit::c;
        match self.kind {
            ScaleKind::Discrete => (1..n)
                .map(|k| &samples[k - 1] * c(self.mu(k - 1)))
                .collect(),
            ScaleKind::Continuous => {
                // Exact integrals of the local cubic interpolant over each
                // interval, nodes centred on the interval where possible.
                let x = &self.points;
                (1..n)
                    .map(|k| {
                        if n < 4 {
                            return (&samples[k - 1] + &samples[k]) * c(0.5 * (x[k] - x[k - 1]));
                        }
                        let start = (k as isize - 2).clamp(0, n as isize - 4) as usize;
                        let w = lagrange_interval_weights(&x[start..start + 4], x[k - 1], x[k]);
                        let mut p = CMat::zeros(shape.0, shape.1);
                        for (i, wi) in w.iter().enumerate() {
                            p += &samples[start + i] * c(*wi);
                        }
                        p
                    })
                    .collect()
            }
        }
    }

    /// Running delta integral `F_k = ∫_{t_0}^{t_k} f Δt` for every grid index.
    pub fn cumulative_integral(&self, samples: &[CMat]) -> Vec<CMat> {
        let shape = samples[0].shape();
        let mut acc = CMat::zeros(shape.0, shape.1);
        let mut out = vec![acc.clone()];
        for piece in self.interval_integrals(samples) {
            acc += piece;
            out.push(acc.clone());
        }
        out
    }

    /// Tail integrals `∫_{t_k}^{t_m} f Δt`, `m` the last sampled index,
    /// summed from the right end so that small tails keep their relative
    /// accuracy.
    pub fn reverse_cumulative_integral(&self, samples: &[CMat]) -> Vec<CMat> {
        let shape = samples[0].shape();
        let pieces = self.interval_integrals(samples);
        let mut acc = CMat::zeros(shape.0, shape.1);
        let mut out = vec![acc.clone()];
        for piece in pieces.iter().rev() {
            acc += piece;
            out.push(acc.clone());
        }
        out.reverse();
        out
    }
}

/// Integrals over `[lo, hi]` of the Lagrange basis polynomials on `nodes`
/// (at most four), by three-point Gauss-Legendre which is exact here.
fn lagrange_interval_weights(nodes: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let g = (0.6f64).sqrt();
    let gauss = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)];
    let mut w = vec![0.0; nodes.len()];
    for &(s, gw) in &gauss {
        let xq = mid + half * s;
        for (i, wi) in w.iter_mut().enumerate() {
            let mut l = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j != i {
                    l *= (xq - xj) / (nodes[i] - xj);
                }
            }
            *wi += gw * half * l;
        }
    }
    w
}

/// Weights `w` with `∫_lo^hi p(x) dx = Σ w_i f(x_i)` for the quadratic `p`
/// interpolating `f` at `x0, x1, x2`.
fn quad_interval_weights(x0: f64, x1: f64, x2: f64, lo: f64, hi: f64) -> [f64; 3] {
    // ∫ of each Lagrange basis polynomial, expanded about x1 for stability.
    let (a, b) = (lo - x1, hi - x1);
    let (d0, d2) = (x0 - x1, x2 - x1);
    let m1 = b - a;
    let m2 = (b * b - a * a) / 2.0;
    let m3 = (b * b * b - a * a * a) / 3.0;
    // L0 = s(s - d2) / (d0 (d0 - d2)), L2 = s(s - d0) / (d2 (d2 - d0)), L1 = rest.
    let w0 = (m3 - d2 * m2) / (d0 * (d0 - d2));
    let w2 = (m3 - d0 * m2) / (d2 * (d2 - d0));
    let w1 = m1 - w0 - w2;
    [w0, w1, w2]
}

/// Composite Simpson on a possibly nonuniform grid. An odd number of
/// intervals is closed with the quadratic through the last three points.
fn simpson(x: &[f64], f: &[CMat]) -> CMat {
    use crate::matrixkit::c;
    let n = x.len() - 1;
    let shape = f[0].shape();
    let mut acc = CMat::zeros(shape.0, shape.1);
    if n == 1 {
        return (&f[0] + &f[1]) * c(0.5 * (x[1] - x[0]));
    }
    let pairs = n / 2;
    for p in 0..pairs {
        let i = 2 * p;
        let w = quad_interval_weights(x[i], x[i + 1], x[i + 2], x[i], x[i + 2]);
        acc += &f[i] * c(w[0]) + &f[i + 1] * c(w[1]) + &f[i + 2] * c(w[2]);
    }
    if n % 2 == 1 {
        let i = n - 2;
        let w = quad_interval_weights(x[i], x[i + 1], x[i + 2], x[i + 1], x[i + 2]);
        acc += &f[i] * c(w[0]) + &f[i + 1] * c(w[1]) + &f[i + 2] * c(w[2]);
    }
    acc
}

/// Candidate point-set component for [`validate_sturmian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Interval(f64, f64),
    Point(f64),
}

/// Points where `σ(ρ(t)) = ρ(σ(t)) = t` fails.
///
/// The minimum and maximum of the candidate set are not tested: the minimum
/// plays the role of `t₀` (its left neighbour is the prepoint) and the maximum
/// stands for the continuation to infinity.
pub fn validate_sturmian(segments: &[Segment]) -> Vec<f64> {
    let mut parts: Vec<(f64, f64)> = segments
        .iter()
        .map(|s| match *s {
            Segment::Interval(a, b) => (a.min(b), a.max(b)),
            Segment::Point(x) => (x, x),
        })
        .collect();
    parts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in parts {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let mut violations = Vec::new();
    let m = merged.len();
    for (i, &(lo, hi)) in merged.iter().enumerate() {
        if lo == hi {
            // isolated points are scattered on both sides
            continue;
        }
        if i > 0 {
            violations.push(lo);
        }
        if i + 1 < m {
            violations.push(hi);
        }
    }
    violations
}
