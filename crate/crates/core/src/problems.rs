//! Scalar equations written as Hamiltonian systems: Sturm–Liouville, fourth
//! order, general even order, and Orr–Sommerfeld.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonian::{unhat_forward, Blocks, CoefficientSystem};
use crate::matrixkit::{c, diag, diag_real, CMat, C64, I};
use crate::resolvent::derivative_weights;
use crate::timescale::TimeScale;
use crate::weylsims::{phase_rotation, RotationU};

pub type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(x: C64) -> ScalarFn {
    Arc::new(move |_| x)
}

pub fn real_constant(x: f64) -> RealFn {
    Arc::new(move |_| x)
}

#[derive(Clone)]
pub enum Variant {
    /// `-(pv^∇)^Δ + qv = λwv`.
    SturmLiouville { p: ScalarFn, q: ScalarFn, w: RealFn },
    /// `(p₂v^{Δ∇})^{∇Δ} - (p₁v^∇)^Δ + p₀v = λwv`.
    FourthOrder {
        p0: ScalarFn,
        p1: ScalarFn,
        p2: ScalarFn,
        w: RealFn,
    },
    /// `Σ_j (-1)^j (p_j v^{Δ^{j-1}∇})^{∇^{j-1}Δ} = λwv` with `p = [p₀, …, p_n]`.
    EvenOrder { p: Vec<ScalarFn>, w: RealFn },
    /// `(-D²+a²)²u + iaR[V(-D²+a²)u + uD²V] = λ(-D²+a²)u`, `D² = ∇Δ`.
    OrrSommerfeld {
        a: f64,
        r: f64,
        v: RealFn,
        /// `V^{∇Δ}`; differenced on the grid when absent.
        v_dd: Option<RealFn>,
    },
}

impl fmt::Debug for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::SturmLiouville { .. } => write!(f, "SturmLiouville"),
            Variant::FourthOrder { .. } => write!(f, "FourthOrder"),
            Variant::EvenOrder { p, .. } => write!(f, "EvenOrder({})", p.len().saturating_sub(1)),
            Variant::OrrSommerfeld { a, r, .. } => write!(f, "OrrSommerfeld(a={a}, R={r})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalarProblemSpec {
    pub variant: Variant,
    pub eta: f64,
}

fn phase(eta: f64) -> C64 {
    (I * eta).exp()
}

fn subdiag(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j + 1 { c(1.0) } else { c(0.0) })
}

/// Central or grid second difference standing in for a missing `V^{∇Δ}`.
///
/// Scattered scales use the exact `((V^σ - V)/μ - (V - V^ρ)/ν)/μ` at each
/// grid point; dense scales use a central difference with the base step,
/// accurate to `O(h²)`.
fn effective_vdd(v: &RealFn, v_dd: &Option<RealFn>, ts: &TimeScale) -> RealFn {
    if let Some(d) = v_dd {
        return d.clone();
    }
    let v = v.clone();
    if ts.is_discrete() {
        let table: Vec<f64> = (0..ts.len())
            .map(|k| {
                let (t, mu, nu) = (ts.t(k), ts.mu(k), ts.nu(k));
                ((v(t + mu) - v(t)) / mu - (v(t) - v(t - nu)) / nu) / mu
            })
            .collect();
        let grid = ts.clone();
        Arc::new(move |t| table[grid.index_of(t)])
    } else {
        let h = ts.base_step();
        Arc::new(move |t| (v(t + h) - 2.0 * v(t) + v(t - h)) / (h * h))
    }
}

impl ScalarProblemSpec {
    /// Half-size `n` of the Hamiltonian system.
    pub fn n(&self) -> usize {
        match &self.variant {
            Variant::SturmLiouville { .. } => 1,
            Variant::FourthOrder { .. } | Variant::OrrSommerfeld { .. } => 2,
            Variant::EvenOrder { p, .. } => p.len().saturating_sub(1),
        }
    }

    /// Positivity of `w`, non-vanishing leading coefficients and parameter
    /// signs on the grid.
    pub fn validate(&self, ts: &TimeScale) -> Result<()> {
        let check_w = |w: &RealFn| -> Result<()> {
            for &t in ts.points() {
                let x = w(t);
                if !(x > 0.0) {
                    return Err(Error::NonPositiveW { t, w: x });
                }
            }
            Ok(())
        };
        let check_p = |p: &ScalarFn| -> Result<()> {
            for k in 0..ts.len() {
                let t = ts.t(k);
                for s in [t, t + ts.mu(k)] {
                    if p(s).norm() == 0.0 {
                        return Err(Error::ZeroP(s));
                    }
                }
            }
            Ok(())
        };
        match &self.variant {
            Variant::SturmLiouville { p, w, .. } => {
                check_p(p)?;
                check_w(w)
            }
            Variant::FourthOrder { p2, w, .. } => {
                check_p(p2)?;
                check_w(w)
            }
            Variant::EvenOrder { p, w } => {
                if p.len() < 2 {
                    return Err(Error::LengthMismatch {
                        expected: 2,
                        got: p.len(),
                    });
                }
                check_p(&p[p.len() - 1])?;
                check_w(w)
            }
            Variant::OrrSommerfeld { a, r, .. } => {
                if !(*a > 0.0) {
                    return Err(Error::NonPositiveParams {
                        name: "a",
                        value: *a,
                    });
                }
                if !(*r > 0.0) {
                    return Err(Error::NonPositiveParams {
                        name: "R",
                        value: *r,
                    });
                }
                Ok(())
            }
        }
    }

    /// The Hamiltonian system and the rotation `U = -e^{iη}I`.
    pub fn build(&self, ts: &TimeScale) -> Result<(CoefficientSystem, RotationU)> {
        self.validate(ts)?;
        let n = self.n();
        let sys = match &self.variant {
            Variant::SturmLiouville { p, q, w } => {
                let (p, q, w) = (p.clone(), q.clone(), w.clone());
                CoefficientSystem::new(1, move |t, mu| Blocks {
                    a1: diag_real(&[w(t)]),
                    a2: diag_real(&[0.0]),
                    b1: diag(&[-q(t)]),
                    b2: diag_real(&[0.0]),
                    b3: diag_real(&[0.0]),
                    b4: diag(&[c(1.0) / p(t + mu)]),
                })
            }
            Variant::FourthOrder { p0, p1, p2, w } => {
                even_order_system(vec![p0.clone(), p1.clone(), p2.clone()], w.clone())
            }
            Variant::EvenOrder { p, w } => even_order_system(p.clone(), w.clone()),
            Variant::OrrSommerfeld { a, r, v, v_dd } => {
                let (a, r, v) = (*a, *r, v.clone());
                let vdd = effective_vdd(&v, v_dd, ts);
                CoefficientSystem::new(2, move |t, _| {
                    let iar = I * a * r;
                    Blocks {
                        a1: diag_real(&[1.0, 0.0]),
                        a2: CMat::zeros(2, 2),
                        b1: CMat::from_row_slice(
                            2,
                            2,
                            &[c(-a * a) - iar * v(t), -iar * vdd(t), c(1.0), c(-a * a)],
                        ),
                        b2: CMat::zeros(2, 2),
                        b3: CMat::zeros(2, 2),
                        b4: CMat::identity(2, 2),
                    }
                })
            }
        };
        Ok((sys, phase_rotation(n, self.eta)?))
    }

    /// `W(t,λ)` from the closed forms for each variant.
    pub fn weight_formula(&self, ts: &TimeScale, t: f64, mu: f64, lambda: C64) -> CMat {
        let e = phase(self.eta);
        let re = |z: C64| z.re;
        match &self.variant {
            Variant::SturmLiouville { p, q, w } => {
                let ps = p(t + mu);
                diag_real(&[re(e * (q(t) - lambda * w(t))), re(e * ps) / ps.norm_sqr()])
            }
            Variant::FourthOrder { p0, p1, p2, w } => {
                let p2s = p2(t + mu);
                diag_real(&[
                    re(e * (p0(t) - lambda * w(t))),
                    re(e * p1(t + mu)),
                    0.0,
                    re(e * p2s) / p2s.norm_sqr(),
                ])
            }
            Variant::EvenOrder { p, w } => {
                let n = p.len() - 1;
                let mut d = vec![0.0; 2 * n];
                d[0] = re(e * (p[0](t) - lambda * w(t)));
                for (j, pj) in p.iter().enumerate().take(n).skip(1) {
                    d[j] = re(e * pj(t + mu));
                }
                let pn = p[n](t + mu);
                d[2 * n - 1] = re(e * pn) / pn.norm_sqr();
                diag_real(&d)
            }
            Variant::OrrSommerfeld { a, r, v, v_dd } => {
                let vdd = effective_vdd(v, v_dd, ts)(t);
                let (a, r) = (*a, *r);
                let (cs, sn) = (self.eta.cos(), self.eta.sin());
                let ie = I * e;
                let w12 = (ie * (a * r * vdd) - e.conj()) * 0.5;
                let w21 = -(I * e.conj() * (a * r * vdd) + e) * 0.5;
                let mut m = CMat::zeros(4, 4);
                m[(0, 0)] = c(a * a * cs - a * r * v(t) * sn - re(lambda * e));
                m[(0, 1)] = w12;
                m[(1, 0)] = w21;
                m[(1, 1)] = c(a * a * cs);
                m[(2, 2)] = c(cs);
                m[(3, 3)] = c(cs);
                m
            }
        }
    }

    /// Admissibility of `(λ₀, U)` from the scalar conditions at every grid
    /// point, without forming `W`.
    pub fn admissible_formula(&self, ts: &TimeScale, lambda0: C64) -> bool {
        let e = phase(self.eta);
        (0..ts.len()).all(|k| {
            let (t, mu) = (ts.t(k), ts.mu(k));
            match &self.variant {
                Variant::SturmLiouville { p, q, w } => {
                    (e * (q(t) - lambda0 * w(t))).re >= 0.0 && (e * p(t + mu)).re >= 0.0
                }
                Variant::FourthOrder { p0, p1, p2, w } => {
                    (e * (p0(t) - lambda0 * w(t))).re >= 0.0
                        && (e * p1(t + mu)).re >= 0.0
                        && (e * p2(t + mu)).re >= 0.0
                }
                Variant::EvenOrder { p, w } => {
                    (e * (p[0](t) - lambda0 * w(t))).re >= 0.0
                        && p[1..].iter().all(|pj| (e * pj(t + mu)).re >= 0.0)
                }
                Variant::OrrSommerfeld { .. } => {
                    self.eta.cos() > 0.0 && (lambda0 * e).re <= self.orr_sommerfeld_bound(ts, t)
                }
            }
        })
    }

    /// Right-hand side of the Orr–Sommerfeld admissibility inequality
    /// `Re(λe^{iη}) ≤ a²cos η - aRV sin η - (1 + (aRV'')² + 2aRV'' sin 2η)/(4a²cos η)`.
    pub fn orr_sommerfeld_bound(&self, ts: &TimeScale, t: f64) -> f64 {
        match &self.variant {
            Variant::OrrSommerfeld { a, r, v, v_dd } => {
                let (a, r, eta) = (*a, *r, self.eta);
                let g = a * r * effective_vdd(v, v_dd, ts)(t);
                a * a * eta.cos()
                    - a * r * v(t) * eta.sin()
                    - (1.0 + g * g + 2.0 * g * (2.0 * eta).sin()) / (4.0 * a * a * eta.cos())
            }
            _ => f64::NAN,
        }
    }

    /// Whether `Re[(λ-λ₀)e^{iη}] < 0`.
    pub fn in_half_plane(&self, lambda: C64, lambda0: C64) -> bool {
        ((lambda - lambda0) * phase(self.eta)).re < 0.0
    }

    /// Names of the components of the unhatted `y`.
    pub fn labels(&self) -> Vec<String> {
        match &self.variant {
            Variant::SturmLiouville { .. } => vec!["v".into(), "p^σ v^Δ".into()],
            Variant::OrrSommerfeld { .. } => vec![
                "-u^∇Δ + a²u".into(),
                "u".into(),
                "(-u^∇Δ + a²u)^Δ".into(),
                "u^Δ".into(),
            ],
            _ => {
                let n = self.n();
                let mut out = vec!["v".to_string()];
                out.extend((1..n).map(|k| format!("v[{k}]")));
                out.extend((n..2 * n).rev().map(|k| format!("v[{k}]")));
                out
            }
        }
    }

    /// Row of `y` holding the scalar unknown.
    fn scalar_row(&self) -> usize {
        match self.variant {
            Variant::OrrSommerfeld { .. } => 1,
            _ => 0,
        }
    }

    /// Scalar solution, quasi-derivatives, and the defect of the scalar
    /// equation rebuilt from `v` alone by grid differences.
    pub fn reconstruct(
        &self,
        sys: &CoefficientSystem,
        ts: &TimeScale,
        lambda: C64,
        yhat: &[CMat],
    ) -> Result<ScalarReconstruction> {
        let n = self.n();
        if sys.n() != n {
            return Err(Error::VariantMismatch(format!(
                "{:?} expects n = {n}, system has n = {}",
                self.variant,
                sys.n()
            )));
        }
        if let Some(bad) = yhat.iter().find(|y| y.nrows() != 2 * n) {
            return Err(Error::VariantMismatch(format!(
                "{:?} expects {} rows, trajectory has {}",
                self.variant,
                2 * n,
                bad.nrows()
            )));
        }
        let len = yhat.len().min(ts.len());
        let row = self.scalar_row();
        let v: Vec<CMat> = yhat[..len]
            .iter()
            .map(|y| y.rows(row, 1).into_owned())
            .collect();
        let quasi = (0..len)
            .map(|k| unhat_forward(sys, ts, k, lambda, &yhat[k]))
            .collect::<Result<Vec<_>>>()?;
        let cols = yhat.first().map_or(0, |y| y.ncols());
        let ops = GridOps { ts, len };
        let mut defect = vec![None; len];
        let mut worst: f64 = 0.0;
        for col in 0..cols {
            let vs: Vec<Option<C64>> = v.iter().map(|x| Some(x[(0, col)])).collect();
            let (terms, levels) = self.scalar_terms(&ops, &vs, lambda);
            let trim = if ts.is_discrete() { 0 } else { 2 * levels };
            for k in trim..len.saturating_sub(trim) {
                let vals: Option<Vec<C64>> = terms.iter().map(|t| t[k]).collect();
                if let Some(vals) = vals {
                    let sum: C64 = vals.iter().sum();
                    let scale = vals.iter().map(|z| z.norm()).fold(1.0, f64::max);
                    let r = sum.norm() / scale;
                    worst = worst.max(r);
                    let cur: f64 = defect[k].unwrap_or(0.0);
                    defect[k] = Some(cur.max(r));
                }
            }
        }
        Ok(ScalarReconstruction {
            labels: self.labels(),
            v,
            quasi,
            defect,
            residual: worst,
        })
    }

    /// Terms of the scalar equation, summing to zero for a solution, and the
    /// number of nested differentiations used.
    fn scalar_terms(
        &self,
        ops: &GridOps,
        v: &[Option<C64>],
        lambda: C64,
    ) -> (Vec<Vec<Option<C64>>>, usize) {
        let ts = ops.ts;
        match &self.variant {
            Variant::SturmLiouville { p, q, w } => {
                let flux = ops.delta(&ops.scale(p, &ops.nabla(v)));
                let w = w.clone();
                (
                    vec![
                        ops.neg(&flux),
                        ops.scale(q, v),
                        ops.scale(&(Arc::new(move |t| -lambda * w(t)) as ScalarFn), v),
                    ],
                    2,
                )
            }
            Variant::FourthOrder { p0, p1, p2, w } => {
                even_terms(ops, &[p0.clone(), p1.clone(), p2.clone()], w, v, lambda)
            }
            Variant::EvenOrder { p, w } => even_terms(ops, p, w, v, lambda),
            Variant::OrrSommerfeld { a, r, v: vel, v_dd } => {
                let (a, r) = (*a, *r);
                let vdd = effective_vdd(vel, v_dd, ts);
                let l = |u: &[Option<C64>]| {
                    let d2 = ops.delta(&ops.nabla(u));
                    ops.add(&ops.neg(&d2), &ops.scale(&constant(c(a * a)), u))
                };
                let lu = l(v);
                let llu = l(&lu);
                let vel = vel.clone();
                let iar_v: ScalarFn = Arc::new(move |t| I * a * r * vel(t));
                let iar_vdd: ScalarFn = Arc::new(move |t| I * a * r * vdd(t));
                (
                    vec![
                        llu,
                        ops.scale(&iar_v, &lu),
                        ops.scale(&iar_vdd, v),
                        ops.scale(&constant(-lambda), &lu),
                    ],
                    4,
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarReconstruction {
    pub labels: Vec<String>,
    /// Scalar unknown per grid point (one entry per trajectory column).
    pub v: Vec<CMat>,
    /// Unhatted `y` per grid point, rows named by `labels`.
    pub quasi: Vec<CMat>,
    /// Relative defect where the differences reach.
    pub defect: Vec<Option<f64>>,
    pub residual: f64,
}

fn even_order_system(p: Vec<ScalarFn>, w: RealFn) -> CoefficientSystem {
    let n = p.len() - 1;
    CoefficientSystem::new(n, move |t, mu| {
        let mut a1 = vec![0.0; n];
        a1[0] = w(t);
        let mut b1 = vec![-p[0](t)];
        b1.extend((1..n).map(|j| -p[j](t + mu)));
        let mut b4 = vec![c(0.0); n];
        b4[n - 1] = c(1.0) / p[n](t + mu);
        let sub = subdiag(n);
        Blocks {
            a1: diag_real(&a1),
            a2: CMat::zeros(n, n),
            b1: diag(&b1),
            b2: sub.clone(),
            b3: sub.transpose(),
            b4: diag(&b4),
        }
    })
}

fn even_terms(
    ops: &GridOps,
    p: &[ScalarFn],
    w: &RealFn,
    v: &[Option<C64>],
    lambda: C64,
) -> (Vec<Vec<Option<C64>>>, usize) {
    let n = p.len() - 1;
    let w = w.clone();
    let mut terms = vec![
        ops.scale(&p[0], v),
        ops.scale(&(Arc::new(move |t| -lambda * w(t)) as ScalarFn), v),
    ];
    for (j, pj) in p.iter().enumerate().skip(1) {
        let mut inner = v.to_vec();
        for _ in 0..j - 1 {
            inner = ops.delta(&inner);
        }
        inner = ops.nabla(&inner);
        let mut outer = ops.scale(pj, &inner);
        for _ in 0..j - 1 {
            outer = ops.nabla(&outer);
        }
        outer = ops.delta(&outer);
        if j % 2 == 1 {
            outer = ops.neg(&outer);
        }
        terms.push(outer);
    }
    (terms, 2 * n)
}

/// Delta and nabla derivatives of grid samples. Scattered scales use exact
/// differences and leave entries without neighbours empty; dense scales use
/// five-point Lagrange differentiation.
struct GridOps<'a> {
    ts: &'a TimeScale,
    len: usize,
}

impl GridOps<'_> {
    fn dense(&self, v: &[Option<C64>]) -> Vec<Option<C64>> {
        let last = self.len - 1;
        let width = 4.min(last);
        (0..self.len)
            .map(|k| {
                let lo = k.saturating_sub(width / 2).min(last - width);
                let x = &self.ts.points()[lo..=lo + width];
                let w = derivative_weights(x, k - lo);
                let mut acc = c(0.0);
                for (j, wj) in w.iter().enumerate() {
                    acc += v[lo + j]? * wj;
                }
                Some(acc)
            })
            .collect()
    }

    fn delta(&self, v: &[Option<C64>]) -> Vec<Option<C64>> {
        if !self.ts.is_discrete() {
            return self.dense(v);
        }
        (0..self.len)
            .map(|k| {
                let next = v.get(k + 1).copied().flatten()?;
                Some((next - v[k]?) / self.ts.mu(k))
            })
            .collect()
    }

    fn nabla(&self, v: &[Option<C64>]) -> Vec<Option<C64>> {
        if !self.ts.is_discrete() {
            return self.dense(v);
        }
        (0..self.len)
            .map(|k| {
                if k == 0 {
                    return None;
                }
                Some((v[k]? - v[k - 1]?) / self.ts.nu(k))
            })
            .collect()
    }

    fn scale(&self, f: &ScalarFn, v: &[Option<C64>]) -> Vec<Option<C64>> {
        (0..self.len)
            .map(|k| v[k].map(|x| f(self.ts.t(k)) * x))
            .collect()
    }

    fn neg(&self, v: &[Option<C64>]) -> Vec<Option<C64>> {
        v.iter().map(|x| x.map(|z| -z)).collect()
    }

    fn add(&self, a: &[Option<C64>], b: &[Option<C64>]) -> Vec<Option<C64>> {
        a.iter().zip(b).map(|(x, y)| Some((*x)? + (*y)?)).collect()
    }
}

pub fn build_sturm_liouville(
    p: ScalarFn,
    q: ScalarFn,
    w: RealFn,
    eta: f64,
    ts: &TimeScale,
) -> Result<(CoefficientSystem, RotationU)> {
    ScalarProblemSpec {
        variant: Variant::SturmLiouville { p, q, w },
        eta,
    }
    .build(ts)
}

pub fn build_fourth_order(
    p0: ScalarFn,
    p1: ScalarFn,
    p2: ScalarFn,
    w: RealFn,
    eta: f64,
    ts: &TimeScale,
) -> Result<(CoefficientSystem, RotationU)> {
    ScalarProblemSpec {
        variant: Variant::FourthOrder { p0, p1, p2, w },
        eta,
    }
    .build(ts)
}

/// `p` holds `p₀, …, p_n` and must have length `n + 1`.
pub fn build_even_order(
    p: Vec<ScalarFn>,
    w: RealFn,
    n: usize,
    eta: f64,
    ts: &TimeScale,
) -> Result<(CoefficientSystem, RotationU)> {
    if p.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: p.len(),
        });
    }
    ScalarProblemSpec {
        variant: Variant::EvenOrder { p, w },
        eta,
    }
    .build(ts)
}

pub fn build_orr_sommerfeld(
    a: f64,
    r: f64,
    v: RealFn,
    v_dd: Option<RealFn>,
    eta: f64,
    ts: &TimeScale,
) -> Result<(CoefficientSystem, RotationU)> {
    ScalarProblemSpec {
        variant: Variant::OrrSommerfeld { a, r, v, v_dd },
        eta,
    }
    .build(ts)
}

/// Built-in flow profiles, with `[lo, hi]` mapped affinely onto `x ∈ [-1, 1]`.
/// The polynomial continues unchanged outside the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowProfile {
    /// `V = 1 - x²`.
    Poiseuille,
    /// `V = x`.
    Couette,
}

impl FlowProfile {
    /// `V` and, on dense scales, its exact second derivative. On scattered
    /// scales the derivative is left to the grid difference.
    pub fn functions(self, lo: f64, hi: f64, ts: &TimeScale) -> (RealFn, Option<RealFn>) {
        let s = 2.0 / (hi - lo);
        let x = move |t: f64| s * (t - lo) - 1.0;
        let (v, dd): (RealFn, RealFn) = match self {
            FlowProfile::Poiseuille => (
                Arc::new(move |t| 1.0 - x(t).powi(2)),
                Arc::new(move |_| -2.0 * s * s),
            ),
            FlowProfile::Couette => (Arc::new(x), Arc::new(|_| 0.0)),
        };
        (v, if ts.is_discrete() { None } else { Some(dd) })
    }
}
