//! M-function estimates from disk centers, Weyl solutions, and the identities
//! relating them.

use crate::error::{Error, Result};
use crate::hamiltonian::{
    fundamental_pair, propagate_between, unhat_forward, CoefficientSystem, FundamentalTrajectory,
    Side,
};
use crate::integrator::Tolerances;
use crate::matrixkit::{
    c, complement_basis, eye, j_matrix, min_eig, re_part, solve, split_rows, stack, CMat, C64,
};
use crate::timescale::{GridIndex, TimeScale};
use crate::weylsims::{cone_margin, disk, stp, weight_w, AdmissiblePair, RotationU, WeylDisk};

#[derive(Debug, Clone, PartialEq)]
pub struct MEstimate {
    pub lambda: C64,
    /// Disk center at the largest horizon.
    pub m: CMat,
    pub horizons: Vec<f64>,
    pub centers: Vec<CMat>,
    pub disks: Vec<WeylDisk>,
    /// `‖𝒞(T_i) - 𝒞(T_{i-1})‖` for consecutive horizons.
    pub cauchy_gaps: Vec<f64>,
    /// Last entry of `cauchy_gaps`, zero for a single horizon.
    pub cauchy_gap: f64,
    /// Whether `M` lies in every computed disk.
    pub nested: bool,
}

/// Disk centers at increasing horizons from one trajectory spanning them.
pub fn m_estimate_with(
    traj: &FundamentalTrajectory,
    ts: &TimeScale,
    rot: &RotationU,
    horizons: &[f64],
    tol: f64,
) -> Result<MEstimate> {
    let mut disks = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let k = ts.index_of(h);
        let d = disk(&stp(traj, rot, ts, k), rot, tol)?;
        if !d.p_positive {
            return Err(Error::DiskUndefined {
                t: d.t,
                min_eig: min_eig(&d.p),
            });
        }
        disks.push(d);
    }
    let centers: Vec<CMat> = disks.iter().map(|d| d.center.clone().unwrap()).collect();
    let m = centers.last().cloned().ok_or(Error::EmptyInterval {
        t0: ts.t0(),
        horizon: ts.t0(),
    })?;
    let cauchy_gaps: Vec<f64> = centers.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
    let mut nested = true;
    for d in &disks {
        nested &= d.contains(&m, 1e-8)?.inside;
    }
    Ok(MEstimate {
        lambda: traj.lambda,
        m,
        horizons: disks.iter().map(|d| d.t).collect(),
        centers,
        disks,
        cauchy_gap: cauchy_gaps.last().copied().unwrap_or(0.0),
        cauchy_gaps,
        nested,
    })
}

/// `M(λ)` as the disk center at the largest of `horizons`.
pub fn m_estimate(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    pair: &AdmissiblePair,
    lambda: C64,
    horizons: &[f64],
    tol: &Tolerances,
) -> Result<MEstimate> {
    let margin = cone_margin(sys, &pair.rot, ts, lambda, pair.lambda0);
    if !(margin > 0.0) {
        return Err(Error::ConeViolation {
            lambda: format!("{lambda}"),
            margin,
        });
    }
    let traj = fundamental_pair(sys, ts, lambda, tol)?;
    m_estimate_with(&traj, ts, &pair.rot, horizons, crate::weylsims::DISK_TOL)
}

/// `ψ̂ = θ̂ + φ̂M` and `ζ̂ = η̂ + χ̂M*` on grid indices `0..=last`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSolutionPair {
    pub lambda: C64,
    pub m: CMat,
    pub psi_hat: Vec<CMat>,
    pub zeta_hat: Vec<CMat>,
}

impl WeylSolutionPair {
    pub fn last(&self) -> usize {
        self.psi_hat.len() - 1
    }

    pub fn psi(&self, sys: &CoefficientSystem, ts: &TimeScale, k: usize) -> Result<CMat> {
        unhat_forward(sys, ts, k, self.lambda, &self.psi_hat[k])
    }

    /// `ζ(t_k) = H̃(t_k)ζ̂(σ(t_k))`.
    pub fn zeta(&self, sys: &CoefficientSystem, ts: &TimeScale, k: usize) -> Result<CMat> {
        crate::hamiltonian::unhat_adjoint(sys, ts, k, self.lambda, &self.zeta_hat)
    }
}

/// Grid points between re-orthonormalizations in [`propagate_span_back`].
const SPAN_CHUNK: usize = 8;

/// Backward propagation of the columns of `init` from index `k` to `0`,
/// re-orthonormalized every [`SPAN_CHUNK`] points so that the columns stay
/// independent. The result is `X_j S` for one invertible `S`, `X` being the
/// plain propagation of `init`.
fn propagate_span_back(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    lambda: C64,
    init: &CMat,
    k: usize,
    side: Side,
    tol: &Tolerances,
) -> Result<Vec<CMat>> {
    let mut chunks: Vec<(usize, Vec<CMat>, Option<CMat>)> = Vec::new();
    let (mut hi, mut start) = (k, init.clone());
    loop {
        let lo = hi.saturating_sub(SPAN_CHUNK);
        let path = propagate_between(sys, ts, lambda, &start, hi, lo, side, tol)?;
        if lo == 0 {
            chunks.push((lo, path, None));
            break;
        }
        let qr = path[0].clone().qr();
        start = qr.q();
        chunks.push((lo, path, Some(qr.r())));
        hi = lo;
    }
    let mut out = vec![CMat::zeros(0, 0); k + 1];
    let mut scale = eye(init.ncols());
    for (lo, path, r) in chunks.iter().rev() {
        if let Some(r) = r {
            scale = solve(r, &scale, "span factor")?;
        }
        for (i, v) in path.iter().enumerate() {
            out[lo + i] = v * &scale;
        }
    }
    Ok(out)
}

/// Weyl solutions by their definition from the fundamental systems.
pub fn weyl_solutions(traj: &FundamentalTrajectory, m: &CMat) -> Result<WeylSolutionPair> {
    let n = traj.n;
    if m.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    let top = stack(&eye(n), m);
    let top_adj = stack(&eye(n), &m.adjoint());
    Ok(WeylSolutionPair {
        lambda: traj.lambda,
        m: m.clone(),
        psi_hat: traj.yhat.iter().map(|y| y * &top).collect(),
        zeta_hat: traj.zhat.iter().map(|z| z * &top_adj).collect(),
    })
}

/// Weyl solutions for `M = 𝒞(t_k)` built by backward propagation from `t_k`.
///
/// At `t_k` the solution `ψ̂` spans the `G`-orthogonal complement of `φ̂`
/// and `ζ̂` the orthogonal complement of `Jψ̂`. Integrated backwards both
/// follow the dominant direction, so no cancellation between `θ` and `φM`
/// occurs. Normalizing the second blocks at `t₀` to `I` fixes `M`.
pub fn decaying_weyl_solutions(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    rot: &RotationU,
    traj: &FundamentalTrajectory,
    k: usize,
    tol: &Tolerances,
) -> Result<WeylSolutionPair> {
    let n = traj.n;
    let lambda = traj.lambda;
    let x_end = complement_basis(&(&rot.g * traj.phi_hat(k)));
    let x = propagate_span_back(sys, ts, lambda, &x_end, k, Side::Forward, tol)?;
    let (x1, x2) = split_rows(&x[0], n);
    let coef = solve(&x2, &eye(n), "psi normalization")?;
    let m = -(x1 * &coef);
    let psi_hat: Vec<CMat> = x.iter().map(|v| v * &coef).collect();
    let z_end = complement_basis(&(j_matrix(n) * &psi_hat[k]));
    let z = propagate_span_back(sys, ts, lambda, &z_end, k, Side::Adjoint, tol)?;
    let (_, z2) = split_rows(&z[0], n);
    let zc = solve(&z2, &eye(n), "zeta normalization")?;
    let zeta_hat = z.iter().map(|v| v * &zc).collect();
    Ok(WeylSolutionPair {
        lambda,
        m,
        psi_hat,
        zeta_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    /// `‖ζ̂*Jψ̂‖ / max(1, ‖ζ̂‖‖ψ̂‖)`.
    pub zj_psi: f64,
    /// `‖ζ̂*Jφ̂ + I‖ / max(1, ‖ζ̂‖‖φ̂‖)`.
    pub zj_phi_plus_i: f64,
}

pub fn coupling_identities(
    traj: &FundamentalTrajectory,
    pair: &WeylSolutionPair,
    k: usize,
) -> Coupling {
    let n = traj.n;
    let j = j_matrix(n);
    let zeta = &pair.zeta_hat[k];
    let psi = &pair.psi_hat[k];
    let phi = traj.phi_hat(k);
    let a = zeta.adjoint() * &j * psi;
    let b = zeta.adjoint() * &j * &phi + eye(n);
    Coupling {
        zj_psi: a.norm() / (zeta.norm() * psi.norm()).max(1.0),
        zj_phi_plus_i: b.norm() / (zeta.norm() * phi.norm()).max(1.0),
    }
}

/// `∫_{t₀}^{t_k} ζ*(ξ)Aψ(λ) Δt` with `ζ` from `zpair` and `ψ` from `ypair`.
pub fn coupling_integral(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    zpair: &WeylSolutionPair,
    ypair: &WeylSolutionPair,
    k: usize,
) -> Result<CMat> {
    let n = sys.n();
    let mut samples = Vec::with_capacity(k + 1);
    for i in 0..=k {
        if ts.is_discrete() && i == k {
            samples.push(CMat::zeros(n, n));
            continue;
        }
        let a = sys.blocks_at(ts, i).a();
        let z = zpair.zeta(sys, ts, i)?;
        let y = ypair.psi(sys, ts, i)?;
        samples.push(z.adjoint() * a * y);
    }
    ts.delta_integral(&samples, GridIndex(0), GridIndex(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MIdentity {
    /// `‖M(λ) - M(ξ) - (λ-ξ)∫ζ*(ξ)Aψ(λ)‖`.
    pub residual: f64,
    /// `‖M(λ) - M(ξ) - (λ-ξ)∫ζ*(λ)Aψ(ξ)‖`.
    pub swapped: f64,
    /// `‖ζ̂*(T,ξ)Jψ̂(T,λ)‖`, the boundary term the truncation drops.
    pub tail: f64,
}

pub fn identity_m_difference(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    at_lambda: &WeylSolutionPair,
    at_xi: &WeylSolutionPair,
    k: usize,
) -> Result<MIdentity> {
    let d = &at_lambda.m - &at_xi.m;
    let lx = at_lambda.lambda - at_xi.lambda;
    let forward = coupling_integral(sys, ts, at_xi, at_lambda, k)?;
    let swapped = coupling_integral(sys, ts, at_lambda, at_xi, k)?;
    Ok(MIdentity {
        residual: (&d - forward * lx).norm(),
        swapped: (&d - swapped * lx).norm(),
        tail: tail_coupling(at_xi, at_lambda, k),
    })
}

/// `‖ζ̂*(t_k, ξ) J ψ̂(t_k, λ)‖`.
pub fn tail_coupling(at_xi: &WeylSolutionPair, at_lambda: &WeylSolutionPair, k: usize) -> f64 {
    let n = at_xi.m.nrows();
    (at_xi.zeta_hat[k].adjoint() * j_matrix(n) * &at_lambda.psi_hat[k]).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WNormBound {
    /// `λ_max ∫_{t₀}^T ψ*Wψ Δt`.
    pub lhs: f64,
    /// `λ_max` of `-½ψ̂*(t₀)U₂ₙJψ̂(t₀)`.
    pub rhs: f64,
    pub ok: bool,
}

/// Bound on the `W`-norm of `ψ = θ + φl` on `[t₀, t_k]`, valid when `l` lies
/// in the disk at `t_k`.
pub fn w_norm_bound(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    rot: &RotationU,
    traj: &FundamentalTrajectory,
    l: &CMat,
    k: usize,
    tol: f64,
) -> Result<WNormBound> {
    let pair = weyl_solutions(traj, l)?;
    let samples: Vec<CMat> = (0..=k)
        .map(|i| {
            let psi = pair.psi(sys, ts, i)?;
            let w = weight_w(&sys.blocks_at(ts, i), rot, traj.lambda);
            Ok(re_part(&(psi.adjoint() * w * psi)))
        })
        .collect::<Result<_>>()?;
    let lhs_m = re_part(&ts.delta_integral(&samples, GridIndex(0), GridIndex(k))?);
    let p0 = &pair.psi_hat[0];
    let rhs_m = re_part(&(p0.adjoint() * &rot.g * p0 * c(-0.5)));
    let lmax = |m: &CMat| -min_eig(&(-m));
    let scale = lhs_m.norm().max(rhs_m.norm()).max(f64::MIN_POSITIVE);
    let ok = min_eig(&re_part(&(&rhs_m - &lhs_m))) >= -tol * scale;
    Ok(WNormBound {
        lhs: lmax(&lhs_m),
        rhs: lmax(&rhs_m),
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Blocks;
    use crate::matrixkit::I;
    use crate::weylsims::{admissible, phase_rotation, DISK_TOL};
    use std::f64::consts::PI;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    fn free_sl() -> CoefficientSystem {
        CoefficientSystem::constant(Blocks {
            a1: scalar(1.0),
            a2: scalar(0.0),
            b1: scalar(0.0),
            b2: scalar(0.0),
            b3: scalar(0.0),
            b4: scalar(1.0),
        })
    }

    fn closed_m(lam: C64) -> C64 {
        I / lam.sqrt()
    }

    fn setup(t_end: f64) -> (CoefficientSystem, TimeScale, AdmissiblePair) {
        let sys = free_sl();
        let ts = TimeScale::continuous(0.0, t_end, 0.01).unwrap();
        let rot = phase_rotation(1, PI / 2.0).unwrap();
        let pair = admissible(&sys, &rot, &ts, c(0.0), 1e-9);
        (sys, ts, pair)
    }

    #[test]
    fn continuous_free_problem_matches_closed_form() {
        let (sys, ts, pair) = setup(40.0);
        for lam in [I, C64::new(1.0, 1.0), C64::new(0.0, 4.0)] {
            let est = m_estimate(
                &sys,
                &ts,
                &pair,
                lam,
                &[10.0, 20.0, 40.0],
                &Tolerances::default(),
            )
            .unwrap();
            assert!(
                (est.m[(0, 0)] - closed_m(lam)).norm() < 1e-6,
                "{lam}: {}",
                est.m
            );
            assert!(est.nested);
        }
    }

    #[test]
    fn cone_violation_is_reported() {
        let (sys, ts, pair) = setup(2.0);
        assert!(matches!(
            m_estimate(&sys, &ts, &pair, -I, &[2.0], &Tolerances::default()),
            Err(Error::ConeViolation { .. })
        ));
    }

    #[test]
    fn solutions_at_start_and_zero_m() {
        let (sys, ts, _) = setup(3.0);
        let tr = fundamental_pair(&sys, &ts, I, &Tolerances::default()).unwrap();
        let m = CMat::from_element(1, 1, C64::new(0.3, 0.7));
        let p = weyl_solutions(&tr, &m).unwrap();
        assert_eq!(p.psi_hat[0], stack(&(-&m), &eye(1)));
        let p0 = weyl_solutions(&tr, &CMat::zeros(1, 1)).unwrap();
        assert_eq!(p0.psi_hat[5], tr.theta_hat(5));
        assert_eq!(p0.zeta_hat[5], tr.eta_hat(5));
        assert!(matches!(
            weyl_solutions(&tr, &eye(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decaying_solution_is_exponential() {
        let (sys, ts, pair) = setup(20.0);
        let tr = fundamental_pair(&sys, &ts, I, &Tolerances::default()).unwrap();
        let w =
            decaying_weyl_solutions(&sys, &ts, &pair.rot, &tr, ts.last(), &Tolerances::default())
                .unwrap();
        let k = I.sqrt();
        assert!((w.m[(0, 0)] - closed_m(I)).norm() < 1e-8);
        // ψ₁ = -(i/k) e^{ikt} for M = i/k; near the horizon the truncated
        // solution picks up the growing mode, so compare on the first half.
        for idx in (0..=ts.len() / 2).step_by(125) {
            let t = ts.t(idx);
            let expect = -I / k * (I * k * t).exp();
            assert!(
                (w.psi_hat[idx][(0, 0)] - expect).norm() < 1e-6 * expect.norm(),
                "{t}"
            );
        }
        let center = disk(&stp(&tr, &pair.rot, &ts, 1000), &pair.rot, DISK_TOL)
            .unwrap()
            .center
            .unwrap();
        let w10 = decaying_weyl_solutions(&sys, &ts, &pair.rot, &tr, 1000, &Tolerances::default())
            .unwrap();
        assert!((w10.m - center).norm() < 1e-9);
    }

    #[test]
    fn coupling_on_scattered_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = rng.gen_range(1..=2);
            let mut r = |s: f64| {
                CMat::from_fn(n, n, |_, _| {
                    C64::new(rng.gen_range(-s..s), rng.gen_range(-s..s))
                })
            };
            let (g1, g2) = (r(1.0), r(1.0));
            let sys = CoefficientSystem::constant(Blocks {
                a1: g1.adjoint() * g1,
                a2: g2.adjoint() * g2,
                b1: r(1.0),
                b2: r(0.3),
                b3: r(0.3),
                b4: r(1.0),
            });
            let ts = TimeScale::uniform_discrete(0.0, 0.25, 20).unwrap();
            let tr =
                fundamental_pair(&sys, &ts, C64::new(0.2, 0.9), &Tolerances::default()).unwrap();
            let m = r(1.0);
            let p = weyl_solutions(&tr, &m).unwrap();
            for k in 0..ts.len() {
                let cp = coupling_identities(&tr, &p, k);
                assert!(cp.zj_psi < 1e-10 && cp.zj_phi_plus_i < 1e-10, "{cp:?}");
            }
        }
    }

    #[test]
    fn coupling_continuous_and_start() {
        let (sys, ts, pair) = setup(10.0);
        let tr = fundamental_pair(&sys, &ts, I, &Tolerances::default()).unwrap();
        let w =
            decaying_weyl_solutions(&sys, &ts, &pair.rot, &tr, ts.last(), &Tolerances::default())
                .unwrap();
        let cp0 = coupling_identities(&tr, &w, 0);
        assert!(cp0.zj_phi_plus_i < 1e-12);
        for k in 0..ts.len() {
            let cp = coupling_identities(&tr, &w, k);
            assert!(cp.zj_psi < 1e-6 && cp.zj_phi_plus_i < 1e-6, "{k} {cp:?}");
        }
    }

    #[test]
    fn m_difference_identity() {
        let (sys, ts, pair) = setup(20.0);
        let tol = Tolerances::default();
        let tl = fundamental_pair(&sys, &ts, I, &tol).unwrap();
        let tx = fundamental_pair(&sys, &ts, C64::new(0.0, 2.0), &tol).unwrap();
        let wl = decaying_weyl_solutions(&sys, &ts, &pair.rot, &tl, ts.last(), &tol).unwrap();
        let wx = decaying_weyl_solutions(&sys, &ts, &pair.rot, &tx, ts.last(), &tol).unwrap();
        let same = identity_m_difference(&sys, &ts, &wl, &wl, ts.last()).unwrap();
        assert_eq!(same.residual, 0.0);
        let r = identity_m_difference(&sys, &ts, &wl, &wx, ts.last()).unwrap();
        assert!(r.residual < 1e-6 && r.swapped < 1e-6, "{r:?}");
        let k10 = ts.index_of(10.0);
        assert!(tail_coupling(&wx, &wl, ts.last()) < tail_coupling(&wx, &wl, k10));
        assert!(tail_coupling(&wl, &wl, k10) < 1e-12);
    }

    #[test]
    fn norm_bound_holds_for_center_and_fails_outside() {
        let (sys, ts, pair) = setup(6.0);
        let tr = fundamental_pair(&sys, &ts, I, &Tolerances::default()).unwrap();
        let k = ts.last();
        let d = disk(&stp(&tr, &pair.rot, &ts, k), &pair.rot, DISK_TOL).unwrap();
        let center = d.center.clone().unwrap();
        let b = w_norm_bound(&sys, &ts, &pair.rot, &tr, &center, k, 1e-8).unwrap();
        assert!(b.ok && b.lhs <= b.rhs);
        let b0 = w_norm_bound(&sys, &ts, &pair.rot, &tr, &center, 0, 1e-8).unwrap();
        assert!(b0.ok && b0.lhs == 0.0);
        let r = d.radius.unwrap()[(0, 0)].re;
        let far = &center + CMat::from_element(1, 1, c(3.0 * (r / d.p[(0, 0)].re).sqrt()));
        let bad = w_norm_bound(&sys, &ts, &pair.rot, &tr, &far, k, 1e-8).unwrap();
        assert!(!bad.ok);
    }
}
