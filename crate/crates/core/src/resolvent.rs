//! Green's kernels, the resolvent and its adjoint, and residual checks of the
//! inhomogeneous systems they solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    fundamental_pair, n_matrix, unhat_adjoint, unhat_forward, CoefficientSystem,
    FundamentalTrajectory, HatState, Side,
};
use crate::integrator::Tolerances;
use crate::matrixkit::{c, j_matrix, psd_sqrt, split_rows, CMat, C64};
use crate::mfunction::{decaying_weyl_solutions, WeylSolutionPair};
use crate::timescale::{GridIndex, TimeScale};
use crate::weylsims::{cone_margin, weight_w, AdmissiblePair, RotationU};

/// Kernel data sampled on the grid up to the horizon index `last`.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub lambda: C64,
    pub n: usize,
    sys: CoefficientSystem,
    ts: TimeScale,
    pub traj: FundamentalTrajectory,
    pub pair: WeylSolutionPair,
    last: usize,
    psi: Vec<CMat>,
    phi: Vec<CMat>,
    chi: Vec<CMat>,
    zeta: Vec<CMat>,
    nmat: Vec<CMat>,
    a: Vec<CMat>,
}

impl GreenKernel {
    /// Kernel from a fundamental trajectory and Weyl solutions on the same grid.
    pub fn new(
        sys: &CoefficientSystem,
        ts: &TimeScale,
        traj: FundamentalTrajectory,
        pair: WeylSolutionPair,
    ) -> Result<Self> {
        let last = pair.last();
        if last >= ts.len() || last >= traj.yhat.len() {
            return Err(Error::LengthMismatch {
                expected: ts.len().min(traj.yhat.len()),
                got: last + 1,
            });
        }
        let n = traj.n;
        let lambda = traj.lambda;
        let support = if ts.is_discrete() { last } else { last + 1 };
        let mut psi = Vec::with_capacity(last + 1);
        let mut phi = Vec::with_capacity(last + 1);
        let mut nmat = Vec::with_capacity(last + 1);
        let mut a = Vec::with_capacity(last + 1);
        for k in 0..=last {
            psi.push(pair.psi(sys, ts, k)?);
            phi.push(unhat_forward(sys, ts, k, lambda, &traj.phi_hat(k))?);
            let b = sys.blocks_at(ts, k);
            let mu = ts.mu(k);
            nmat.push(if mu == 0.0 {
                CMat::zeros(2 * n, 2 * n)
            } else {
                n_matrix(&b, mu)?
            });
            a.push(b.a());
        }
        let mut chi = Vec::with_capacity(support);
        let mut zeta = Vec::with_capacity(support);
        for k in 0..support {
            chi.push(
                unhat_adjoint(sys, ts, k, lambda, &traj.zhat_direct)?
                    .columns(n, n)
                    .into_owned(),
            );
            zeta.push(pair.zeta(sys, ts, k)?);
        }
        Ok(Self {
            lambda,
            n,
            sys: sys.clone(),
            ts: ts.clone(),
            traj,
            pair,
            last,
            psi,
            phi,
            chi,
            zeta,
            nmat,
            a,
        })
    }

    /// Grid index of the horizon `T`.
    pub fn last(&self) -> usize {
        self.last
    }

    pub fn time_scale(&self) -> &TimeScale {
        &self.ts
    }

    pub fn system(&self) -> &CoefficientSystem {
        &self.sys
    }

    /// Number of grid indices carrying adjoint data: `last` on scattered
    /// scales, `last + 1` on dense ones.
    pub fn support(&self) -> usize {
        self.chi.len()
    }

    /// `N(t_k)`, zero on dense points.
    pub fn dirac(&self, k: usize) -> &CMat {
        &self.nmat[k]
    }

    fn check(&self, index: usize, len: usize) -> Result<()> {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        Ok(())
    }
}

/// Kernel for `λ` in the cone of `pair`, with Weyl solutions taken from the
/// disk center at the last grid point.
pub fn green_kernel(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    pair: &AdmissiblePair,
    lambda: C64,
    tol: &Tolerances,
) -> Result<GreenKernel> {
    let margin = cone_margin(sys, &pair.rot, ts, lambda, pair.lambda0);
    if !(margin > 0.0) {
        return Err(Error::ConeViolation {
            lambda: format!("{lambda}"),
            margin,
        });
    }
    let traj = fundamental_pair(sys, ts, lambda, tol)?;
    let weyl = decaying_weyl_solutions(sys, ts, &pair.rot, &traj, ts.last(), tol)?;
    GreenKernel::new(sys, ts, traj, weyl)
}

/// `G(t,s)`: `ψ(t)χ*(s)` for `s < t`, `φ(t)ζ*(s)` for `t ≤ s`. The Dirac
/// part `N(t)δ_{ts}` is applied by [`apply_resolvent`].
pub fn kernel_eval(kern: &GreenKernel, t: usize, s: usize) -> Result<CMat> {
    kern.check(t, kern.last + 1)?;
    if s < t {
        Ok(&kern.psi[t] * kern.chi[s].adjoint())
    } else {
        kern.check(s, kern.support())?;
        Ok(&kern.phi[t] * kern.zeta[s].adjoint())
    }
}

/// `G̃(t,s)`: `χ(t)ψ*(s)` for `t < s`, `ζ(t)φ*(s)` for `s ≤ t`.
pub fn kernel_eval_adjoint(kern: &GreenKernel, t: usize, s: usize) -> Result<CMat> {
    kern.check(s, kern.last + 1)?;
    if t < s {
        Ok(&kern.chi[t] * kern.psi[s].adjoint())
    } else {
        kern.check(t, kern.support())?;
        Ok(&kern.zeta[t] * kern.phi[s].adjoint())
    }
}

/// Largest `‖G̃(t,s) - G*(s,t)‖` over `count` random index pairs.
pub fn kernel_symmetry(kern: &GreenKernel, count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = kern.support();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let t = rng.gen_range(0..hi);
        let s = rng.gen_range(0..hi);
        let lhs = kernel_eval_adjoint(kern, t, s)?;
        let rhs = kernel_eval(kern, s, t)?.adjoint();
        worst = worst.max((&lhs - &rhs).norm() / rhs.norm().max(1.0));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Boundary {
    /// `‖(R̂f)₂(t₀)‖`, the `y₂(ρ(t₀)) = 0` condition.
    pub rho_t0_zero: f64,
    /// `‖χ̂*(t₀)J(R̂f)(t₀)‖`, or `‖φ̂*(t₀)J(R̂̃f)(t₀)‖` for the adjoint.
    pub chi_j_t0: f64,
    /// `‖ζ̂*(T)J(R̂f)(T)‖`, or `‖ψ̂*(T)J(R̂̃f)(T)‖` for the adjoint.
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventResult {
    pub lambda: C64,
    pub side: Side,
    pub f: Vec<CMat>,
    /// Unhatted `R_λf` (or `R̃_λf`) where defined.
    pub rf: Vec<CMat>,
    pub rf_hat: Vec<HatState>,
    /// Pointwise defect of the inhomogeneous system.
    pub defect: Vec<CMat>,
    /// `max ‖defect‖` relative to the size of the terms.
    pub residual_max: f64,
    /// Relative defect of the row at `t₀`.
    pub first_row: f64,
    pub boundary: Boundary,
}

/// `∫_{t₀}^{t_k}` of `samples` for `k = 0..=last`; on scattered scales the
/// sum runs over `s < k`.
fn lower_integrals(ts: &TimeScale, samples: &[CMat], last: usize) -> Vec<CMat> {
    ts.cumulative_integral(&samples[..=last])
}

/// `∫_{t_k}^{T}` of `samples` for `k = 0..=last` (`s ≥ k` on scattered
/// scales), accumulated from `T` backwards.
fn upper_integrals(ts: &TimeScale, samples: &[CMat], last: usize) -> Vec<CMat> {
    ts.reverse_cumulative_integral(&samples[..=last])
}

fn check_f(kern: &GreenKernel, f: &[CMat]) -> Result<Vec<CMat>> {
    if f.len() <= kern.last {
        return Err(Error::LengthMismatch {
            expected: kern.last + 1,
            got: f.len(),
        });
    }
    for v in f {
        if v.nrows() != 2 * kern.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * kern.n,
                got: v.nrows(),
            });
        }
    }
    Ok((0..=kern.last).map(|k| &kern.a[k] * &f[k]).collect())
}

/// `R_λf = ψ∫_{t₀}^t χ*Af + φ∫_t^T ζ*Af + NAf` with its hatted form.
pub fn apply_resolvent(kern: &GreenKernel, f: &[CMat]) -> Result<ResolventResult> {
    let af = check_f(kern, f)?;
    let last = kern.last;
    let sup = kern.support();
    let g1: Vec<CMat> = (0..sup).map(|k| kern.chi[k].adjoint() * &af[k]).collect();
    let g2: Vec<CMat> = (0..sup).map(|k| kern.zeta[k].adjoint() * &af[k]).collect();
    let i1 = lower_integrals(&kern.ts, &pad(g1, last), last);
    let i2 = upper_integrals(&kern.ts, &pad(g2, last), last);
    let mut rf = Vec::with_capacity(last + 1);
    let mut rf_hat = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let hat = &kern.pair.psi_hat[k] * &i1[k] + kern.traj.phi_hat(k) * &i2[k];
        rf_hat.push(HatState::from_stacked(&hat, kern.n));
        rf.push(&kern.psi[k] * &i1[k] + &kern.phi[k] * &i2[k] + &kern.nmat[k] * &af[k]);
    }
    finish(kern, Side::Forward, f, rf, rf_hat)
}

/// `R̃_λf = ζ∫_{t₀}^{t} φ*Af + χ∫_t^T ψ*Af + N*Af`, with scattered `s = t`
/// on the `ζφ*` branch.
pub fn apply_adjoint_resolvent(kern: &GreenKernel, f: &[CMat]) -> Result<ResolventResult> {
    let af = check_f(kern, f)?;
    let last = kern.last;
    let g1: Vec<CMat> = (0..=last).map(|k| kern.phi[k].adjoint() * &af[k]).collect();
    let g2: Vec<CMat> = (0..=last).map(|k| kern.psi[k].adjoint() * &af[k]).collect();
    let j1 = lower_integrals(&kern.ts, &g1, last);
    let j2 = upper_integrals(&kern.ts, &g2, last);
    let shift = usize::from(kern.ts.is_discrete());
    let mut rf = Vec::with_capacity(kern.support());
    let mut rf_hat = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let hat = &kern.pair.zeta_hat[k] * &j1[k] + kern.traj.chi_hat(k) * &j2[k];
        rf_hat.push(HatState::from_stacked(&hat, kern.n));
    }
    for k in 0..kern.support() {
        rf.push(
            &kern.zeta[k] * &j1[k + shift]
                + &kern.chi[k] * &j2[k + shift]
                + kern.nmat[k].adjoint() * &af[k],
        );
    }
    finish(kern, Side::Adjoint, f, rf, rf_hat)
}

fn pad(mut v: Vec<CMat>, last: usize) -> Vec<CMat> {
    while v.len() <= last {
        let z = CMat::zeros(v[0].nrows(), v[0].ncols());
        v.push(z);
    }
    v
}

fn finish(
    kern: &GreenKernel,
    side: Side,
    f: &[CMat],
    rf: Vec<CMat>,
    rf_hat: Vec<HatState>,
) -> Result<ResolventResult> {
    let mut result = ResolventResult {
        lambda: kern.lambda,
        side,
        f: f[..=kern.last].to_vec(),
        rf,
        rf_hat,
        defect: Vec::new(),
        residual_max: 0.0,
        first_row: 0.0,
        boundary: Boundary::default(),
    };
    let report = resolvent_residual(kern, &result);
    result.defect = report.defect;
    result.residual_max = report.interior;
    result.first_row = report.first_row;
    result.boundary = report.boundary;
    Ok(result)
}

/// Weights `w_j` with `Σ w_j g(x_j) ≈ g'(x[at])` from the Lagrange interpolant.
pub(crate) fn derivative_weights(x: &[f64], at: usize) -> Vec<f64> {
    let xa = x[at];
    (0..x.len())
        .map(|j| {
            if j == at {
                (0..x.len())
                    .filter(|&m| m != at)
                    .map(|m| 1.0 / (xa - x[m]))
                    .sum()
            } else {
                let num: f64 = (0..x.len())
                    .filter(|&m| m != j && m != at)
                    .map(|m| xa - x[m])
                    .product();
                let den: f64 = (0..x.len())
                    .filter(|&m| m != j)
                    .map(|m| x[j] - x[m])
                    .product();
                num / den
            }
        })
        .collect()
}

/// Derivative of sampled values by five-point Lagrange differentiation.
fn grid_derivative(ts: &TimeScale, v: &[CMat], k: usize) -> CMat {
    let last = v.len() - 1;
    let width = 4.min(last);
    let lo = k.saturating_sub(width / 2).min(last - width);
    let x = &ts.points()[lo..=lo + width];
    let w = derivative_weights(x, k - lo);
    let mut d = CMat::zeros(v[k].nrows(), v[k].ncols());
    for (j, wj) in w.iter().enumerate() {
        d += &v[lo + j] * c(*wj);
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub defect: Vec<CMat>,
    pub interior: f64,
    pub first_row: f64,
    pub boundary: Boundary,
}

/// Defect of `Jŷ^Δ = (λA+B)y + Af` (or the adjoint system with `λ̄A+B*`)
/// for the computed `y`, and the boundary diagnostics at `t₀` and `T`.
///
/// On scattered scales the row at `t₀` uses `ŷ(t₀)` whose second block is
/// `y₂(ρ(t₀))`, which the kernel makes zero. On dense scales `ŷ^Δ` comes from
/// five-point differentiation of the samples.
pub fn resolvent_residual(kern: &GreenKernel, result: &ResolventResult) -> ResidualReport {
    let ts = &kern.ts;
    let n = kern.n;
    let j = j_matrix(n);
    let hats: Vec<CMat> = result.rf_hat.iter().map(HatState::stacked).collect();
    let rows = if ts.is_discrete() {
        kern.last
    } else {
        kern.last + 1
    };
    let rows = rows.min(result.rf.len());
    let mut defect = Vec::with_capacity(rows);
    let mut scale: f64 = 1.0;
    for k in 0..rows {
        let b = kern.sys.blocks_at(ts, k);
        let pencil = match result.side {
            Side::Forward => b.pencil(kern.lambda),
            Side::Adjoint => b.adjoint_pencil(kern.lambda),
        };
        let delta = if ts.is_discrete() {
            (&hats[k + 1] - &hats[k]) * c(1.0 / ts.mu(k))
        } else {
            grid_derivative(ts, &hats, k)
        };
        let py = pencil * &result.rf[k];
        let af = &kern.a[k] * &result.f[k];
        scale = scale.max(py.norm()).max(af.norm());
        defect.push(&j * delta - py - af);
    }
    let interior = defect.iter().map(|d| d.norm()).fold(0.0, f64::max) / scale;
    let first_row = defect.first().map(|d| d.norm() / scale).unwrap_or(0.0);
    let hscale = hats.iter().map(|h| h.norm()).fold(1.0, f64::max);
    let (_, second) = split_rows(&hats[0], n);
    let (left, right) = match result.side {
        Side::Forward => (kern.traj.chi_hat(0), kern.pair.zeta_hat[kern.last].clone()),
        Side::Adjoint => (kern.traj.phi_hat(0), kern.pair.psi_hat[kern.last].clone()),
    };
    let boundary = Boundary {
        rho_t0_zero: second.norm() / hscale,
        chi_j_t0: (left.adjoint() * &j * &hats[0]).norm() / (left.norm() * hscale),
        tail: (right.adjoint() * &j * &hats[kern.last]).norm(),
    };
    ResidualReport {
        defect,
        interior,
        first_row,
        boundary,
    }
}

/// `‖ζ̂*(T)J(R̂f)(T)‖` with `ζ̂` taken from `reference`, a Weyl pair built
/// on a longer horizon of the same grid (`ψ̂` for the adjoint resolvent).
///
/// [`Boundary::tail`] uses the kernel's own pair, for which the product
/// vanishes up to rounding at every horizon.
pub fn limit_tail(reference: &WeylSolutionPair, result: &ResolventResult) -> Result<f64> {
    let k = result.rf_hat.len() - 1;
    if k > reference.last() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: reference.last() + 1,
        });
    }
    let n = reference.m.nrows();
    let left = match result.side {
        Side::Forward => &reference.zeta_hat[k],
        Side::Adjoint => &reference.psi_hat[k],
    };
    Ok((left.adjoint() * j_matrix(n) * result.rf_hat[k].stacked()).norm())
}

/// `∫ v*Mv Δt` over `[t₀, T]` with `M` sampled per index.
fn quadratic_integral(
    ts: &TimeScale,
    last: usize,
    v: &[CMat],
    weight: impl Fn(usize) -> CMat,
) -> f64 {
    let count = if ts.is_discrete() { last } else { last + 1 };
    let count = count.min(v.len());
    let mut samples: Vec<CMat> = (0..count)
        .map(|k| {
            let q = v[k].adjoint() * weight(k) * &v[k];
            CMat::from_element(1, 1, q.trace())
        })
        .collect();
    while samples.len() <= last {
        samples.push(CMat::zeros(1, 1));
    }
    ts.delta_integral(&samples, GridIndex(0), GridIndex(last))
        .map(|m| m[(0, 0)].re)
        .unwrap_or(f64::NAN)
}

/// `‖l(R_ξf) - ξA R_ξf - Af‖_A` over the grid.
pub fn operator_residual(kern: &GreenKernel, result: &ResolventResult) -> f64 {
    quadratic_integral(&kern.ts, kern.last, &result.defect, |k| kern.a[k].clone())
        .max(0.0)
        .sqrt()
}

/// `(∫ |A R f|² Δt)^{1/2}`; nonzero output for `Af ≠ 0` is necessary for
/// injectivity.
pub fn injectivity_norm(kern: &GreenKernel, result: &ResolventResult) -> f64 {
    let arf: Vec<CMat> = result
        .rf
        .iter()
        .enumerate()
        .map(|(k, v)| &kern.a[k] * v)
        .collect();
    let id = CMat::identity(2 * kern.n, 2 * kern.n);
    quadratic_integral(&kern.ts, kern.last, &arf, |_| id.clone())
        .max(0.0)
        .sqrt()
}

/// `(R_λf, g)_A` and `(f, R̃_λg)_A` with their relative gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duality {
    pub lhs: C64,
    pub rhs: C64,
    pub gap: f64,
}

pub fn duality(kern: &GreenKernel, f: &[CMat], g: &[CMat]) -> Result<Duality> {
    let rf = apply_resolvent(kern, f)?;
    let rg = apply_adjoint_resolvent(kern, g)?;
    let ts = &kern.ts;
    let last = kern.last;
    let pairing = |x: &[CMat], y: &[CMat]| -> Result<C64> {
        let count = if ts.is_discrete() { last } else { last + 1 };
        let mut s: Vec<CMat> = (0..count)
            .map(|k| CMat::from_element(1, 1, (y[k].adjoint() * &kern.a[k] * &x[k]).trace()))
            .collect();
        while s.len() <= last {
            s.push(CMat::zeros(1, 1));
        }
        Ok(ts.delta_integral(&s, GridIndex(0), GridIndex(last))?[(0, 0)])
    };
    let lhs = pairing(&rf.rf, g)?;
    let rhs = pairing(f, &rg.rf)?;
    let size = lhs.norm().max(rhs.norm());
    let gap = if size == 0.0 {
        0.0
    } else {
        (lhs - rhs).norm() / size
    };
    Ok(Duality { lhs, rhs, gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormInequalities {
    pub delta: f64,
    pub eps: f64,
    pub f_norm_sq: f64,
    pub phi_w0_sq: f64,
    pub phi_atilde_sq: f64,
    /// `‖f‖²_A/(4ε) - (‖Φ‖²_{W(λ₀)} + (δ-ε)‖Φ‖²_Ã)`.
    pub ineq1_slack: f64,
    /// `‖f‖_A/δ - ‖Φ‖²_Ã`.
    pub ineq2_slack: f64,
    /// `‖f‖²_A/δ - ‖Φ‖²_Ã`.
    pub ineq2_squared_slack: f64,
}

/// Resolvent norm bounds for `Φ = R_λf` with `δ` the cone margin of `λ`.
pub fn norm_inequalities(
    kern: &GreenKernel,
    rot: &RotationU,
    result: &ResolventResult,
    lambda0: C64,
    eps: f64,
) -> Result<NormInequalities> {
    let ts = &kern.ts;
    let delta = cone_margin(&kern.sys, rot, ts, kern.lambda, lambda0);
    if !(eps > 0.0 && eps < delta) {
        return Err(Error::EpsilonOutOfRange { eps, delta });
    }
    let last = kern.last;
    let f_norm_sq = quadratic_integral(ts, last, &result.f, |k| kern.a[k].clone());
    let phi_w0_sq = quadratic_integral(ts, last, &result.rf, |k| {
        weight_w(&kern.sys.blocks_at(ts, k), rot, lambda0)
    });
    let phi_atilde_sq = quadratic_integral(ts, last, &result.rf, |k| {
        &rot.u2n * &kern.a[k] * rot.u2n.adjoint()
    });
    let f_norm = f_norm_sq.max(0.0).sqrt();
    Ok(NormInequalities {
        delta,
        eps,
        f_norm_sq,
        phi_w0_sq,
        phi_atilde_sq,
        ineq1_slack: f_norm_sq / (4.0 * eps) - (phi_w0_sq + (delta - eps) * phi_atilde_sq),
        ineq2_slack: f_norm / delta - phi_atilde_sq,
        ineq2_squared_slack: f_norm_sq / delta - phi_atilde_sq,
    })
}

/// `‖A^{1/2}N*ANA^{1/2}‖` per grid index.
pub fn dirac_decay(kern: &GreenKernel) -> Result<Vec<f64>> {
    (0..=kern.last)
        .map(|k| {
            let s = psd_sqrt(&kern.a[k])?;
            let nm = &kern.nmat[k];
            Ok((&s * nm.adjoint() * &kern.a[k] * nm * &s).norm())
        })
        .collect()
}

/// Built-in forcing shapes, applied along the all-ones direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    GaussianBump { center: f64, width: f64 },
    Indicator { from: f64, to: f64 },
    RandomPolynomial { degree: usize, seed: u64 },
}

/// Samples a profile as `2n`-vectors at every grid point.
pub fn sample_profile(profile: &Profile, ts: &TimeScale, n: usize) -> Vec<CMat> {
    let ones = CMat::from_element(2 * n, 1, c(1.0));
    match profile {
        Profile::GaussianBump { center, width } => ts
            .points()
            .iter()
            .map(|t| &ones * c((-((t - center) / width).powi(2)).exp()))
            .collect(),
        Profile::Indicator { from, to } => ts
            .points()
            .iter()
            .map(|t| &ones * c(if (*from..=*to).contains(t) { 1.0 } else { 0.0 }))
            .collect(),
        Profile::RandomPolynomial { degree, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let coeffs: Vec<Vec<C64>> = (0..2 * n)
                .map(|_| {
                    (0..=*degree)
                        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let (t0, span) = (ts.t0(), (ts.horizon() - ts.t0()).max(f64::MIN_POSITIVE));
            ts.points()
                .iter()
                .map(|t| {
                    let x = (t - t0) / span;
                    CMat::from_fn(2 * n, 1, |i, _| {
                        coeffs[i].iter().rev().fold(c(0.0), |acc, a| acc * x + a)
                    })
                })
                .collect()
        }
    }
}
