//! Admissible pairs, the cone of admissible `λ`, and nested Weyl–Sims disks.
//!
//! With `G = U₂ₙJ` the disk at `(t, λ)` is the set of `l` for which
//! `(θ̂ + φ̂l)* G (θ̂ + φ̂l) ⪯ 0`, equivalently `(l - 𝒞)*P(l - 𝒞) ⪯ ℛ`.

use crate::error::{Error, Result};
use crate::hamiltonian::{Blocks, CoefficientSystem, FundamentalTrajectory};
use crate::matrixkit::{
    blockdiag, c, eye, herm_eigen, inverse, j_matrix, min_eig, pd_inv_sqrt, psd_sqrt, re_part,
    solve, sub_block, CMat, C64, PSD_TOL,
};
use crate::timescale::TimeScale;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct RotationU {
    pub u: CMat,
    /// `blockdiag(U, -U*)`.
    pub u2n: CMat,
    pub u2n_inv: CMat,
    /// `U₂ₙJ`, Hermitian of signature `(n, n)`.
    pub g: CMat,
}

pub fn make_rotation(u: &CMat) -> Result<RotationU> {
    let n = u.nrows();
    let u_inv = inverse(u, "U").map_err(|e| match e {
        Error::Singular { cond, .. } => Error::SingularU { cond },
        other => other,
    })?;
    let u2n = blockdiag(u, &(-u.adjoint()));
    let u2n_inv = blockdiag(&u_inv, &(-u_inv.adjoint()));
    let g = &u2n * j_matrix(n);
    let (vals, _) = herm_eigen(&g);
    let pos = vals.iter().filter(|&&v| v > 0.0).count();
    let neg = vals.iter().filter(|&&v| v < 0.0).count();
    if pos != n || neg != n {
        return Err(Error::SingularU {
            cond: f64::INFINITY,
        });
    }
    Ok(RotationU {
        u: u.clone(),
        u2n,
        u2n_inv,
        g,
    })
}

/// `U = -e^{iη} I`, the rotation used by every built-in problem.
pub fn phase_rotation(n: usize, eta: f64) -> Result<RotationU> {
    make_rotation(&(eye(n) * -C64::from_polar(1.0, eta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `Re[U₂ₙ(λA + B)]`.
    pub w: CMat,
    /// `Re[U₂ₙ⁻¹(λ̄A + B*)]`.
    pub w_tilde: CMat,
    /// `‖W - U₂ₙW̃U₂ₙ*‖`.
    pub identity_gap: f64,
}

pub fn weight_w(b: &Blocks, rot: &RotationU, lambda: C64) -> CMat {
    re_part(&(&rot.u2n * b.pencil(lambda)))
}

pub fn weights(b: &Blocks, rot: &RotationU, lambda: C64) -> Weights {
    let w = weight_w(b, rot, lambda);
    let w_tilde = re_part(&(&rot.u2n_inv * b.adjoint_pencil(lambda)));
    let identity_gap = (&w - &rot.u2n * &w_tilde * rot.u2n.adjoint()).norm();
    Weights {
        w,
        w_tilde,
        identity_gap,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissiblePair {
    pub lambda0: C64,
    pub rot: RotationU,
    pub verified: bool,
    /// Grid time with the smallest eigenvalue of `W(t, λ₀)`.
    pub worst_t: f64,
    pub min_eig: f64,
}

pub fn admissible(
    sys: &CoefficientSystem,
    rot: &RotationU,
    ts: &TimeScale,
    lambda0: C64,
    tol: f64,
) -> AdmissiblePair {
    let mut worst_t = ts.t0();
    let mut worst = f64::INFINITY;
    let mut verified = true;
    for k in 0..ts.len() {
        let w = weight_w(&sys.blocks_at(ts, k), rot, lambda0);
        let e = min_eig(&w);
        if e < worst {
            worst = e;
            worst_t = ts.t(k);
        }
        if e < -tol * w.norm().max(1.0) {
            verified = false;
        }
    }
    AdmissiblePair {
        lambda0,
        rot: rot.clone(),
        verified,
        worst_t,
        min_eig: worst,
    }
}

/// Largest `δ` with `Re[(λ-λ₀)U₂ₙA] ⪰ δ U₂ₙAU₂ₙ*` at one time, on the
/// range of `U₂ₙAU₂ₙ*`. `+∞` when `A = 0`, `-∞` when the left side has
/// components off that range.
pub fn cone_margin_at(b: &Blocks, rot: &RotationU, lambda: C64, lambda0: C64) -> f64 {
    let a = b.a();
    let y = re_part(&(&rot.u2n * &a * rot.u2n.adjoint()));
    let x = re_part(&(&rot.u2n * &a * (lambda - lambda0)));
    let (vals, vecs) = herm_eigen(&y);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return f64::INFINITY;
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-10 * top).collect();
    let basis = CMat::from_fn(y.nrows(), keep.len(), |i, j| vecs[(i, keep[j])]);
    let proj = &basis * basis.adjoint();
    let off = (&x - &proj * &x * &proj).norm();
    if off > 1e-10 * x.norm().max(top) {
        return f64::NEG_INFINITY;
    }
    let scale: Vec<C64> = keep.iter().map(|&i| c(1.0 / vals[i].sqrt())).collect();
    let d = crate::matrixkit::diag(&scale);
    let xr = &d * basis.adjoint() * &x * &basis * &d;
    min_eig(&xr)
}

/// Minimum of [`cone_margin_at`] over the grid; `λ` lies in the cone iff
/// the result is positive.
pub fn cone_margin(
    sys: &CoefficientSystem,
    rot: &RotationU,
    ts: &TimeScale,
    lambda: C64,
    lambda0: C64,
) -> f64 {
    (0..ts.len())
        .map(|k| cone_margin_at(&sys.blocks_at(ts, k), rot, lambda, lambda0))
        .fold(f64::INFINITY, f64::min)
}

/// Blocks of `Ŷ*GŶ = 2[[S, T], [T*, P]]` at one grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct StpSlice {
    pub index: usize,
    pub t: f64,
    pub lambda: C64,
    pub s: CMat,
    pub tt: CMat,
    pub p: CMat,
    pub yhat: CMat,
    pub chi_hat: CMat,
}

pub fn stp(traj: &FundamentalTrajectory, rot: &RotationU, ts: &TimeScale, k: usize) -> StpSlice {
    let n = traj.n;
    let y = &traj.yhat[k];
    let form = y.adjoint() * &rot.g * y * c(0.5);
    StpSlice {
        index: k,
        t: ts.t(k),
        lambda: traj.lambda,
        s: re_part(&sub_block(&form, n, 0, 0)),
        tt: sub_block(&form, n, 0, 1),
        p: re_part(&sub_block(&form, n, 1, 1)),
        yhat: y.clone(),
        chi_hat: traj.chi_hat(k),
    }
}

/// Relative gap between `Ŷ*GŶ(t_k) - Ŷ*GŶ(t₀)` and `2∫_{t₀}^{t_k} Y*WY Δs`
/// at every grid index.
pub fn stp_crosscheck(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    rot: &RotationU,
    traj: &FundamentalTrajectory,
) -> Result<Vec<f64>> {
    let samples: Vec<CMat> = (0..ts.len())
        .map(|k| {
            let yk = traj.y(sys, ts, k)?;
            let w = weight_w(&sys.blocks_at(ts, k), rot, traj.lambda);
            Ok(yk.adjoint() * w * yk * c(2.0))
        })
        .collect::<Result<_>>()?;
    let cum = ts.cumulative_integral(&samples);
    let y0 = &traj.yhat[0];
    let base = y0.adjoint() * &rot.g * y0;
    Ok(cum
        .iter()
        .zip(&traj.yhat)
        .map(|(integral, y)| {
            let form = y.adjoint() * &rot.g * y;
            let lhs = &form - &base;
            (&lhs - integral).norm() / form.norm().max(1.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylDisk {
    pub t: f64,
    pub index: usize,
    pub lambda: C64,
    pub s: CMat,
    pub tt: CMat,
    pub p: CMat,
    pub p_positive: bool,
    pub center: Option<CMat>,
    pub radius: Option<CMat>,
    /// `‖(TP⁻¹T* - S) - ℛ‖ / ‖ℛ‖`; the direct expression loses digits
    /// to cancellation as the disks shrink.
    pub radius_direct_gap: f64,
    yhat: CMat,
    g: CMat,
}

pub fn p_is_positive(p: &CMat, tol: f64) -> bool {
    let scale = p.norm();
    scale > 0.0 && min_eig(p) > tol * scale
}

/// Center `-P⁻¹T*` and radius of the disk. The radius is evaluated as
/// `(2χ̂*U₂ₙ⁻¹Jχ̂)⁻¹`, the Schur complement of `Ŷ*GŶ/2` read off its
/// inverse `2Ŷ⁻¹G⁻¹Ŷ⁻*` with `Ŷ⁻¹ = -JẐ*J`.
pub fn disk(slice: &StpSlice, rot: &RotationU, tol: f64) -> Result<WeylDisk> {
    let n = slice.p.nrows();
    let mut out = WeylDisk {
        t: slice.t,
        index: slice.index,
        lambda: slice.lambda,
        s: slice.s.clone(),
        tt: slice.tt.clone(),
        p: slice.p.clone(),
        p_positive: false,
        center: None,
        radius: None,
        radius_direct_gap: 0.0,
        yhat: slice.yhat.clone(),
        g: rot.g.clone(),
    };
    if !p_is_positive(&slice.p, tol) {
        return Ok(out);
    }
    let tstar = slice.tt.adjoint();
    let center = -solve(&slice.p, &tstar, "P")?;
    let chi = &slice.chi_hat;
    let inv_r = re_part(&(chi.adjoint() * &rot.u2n_inv * j_matrix(n) * chi * c(2.0)));
    let radius = re_part(&inverse(&inv_r, "inverse radius")?);
    let direct = re_part(&(&slice.tt * solve(&slice.p, &tstar, "P")? - &slice.s));
    let rn = radius.norm();
    out.radius_direct_gap = (&direct - &radius).norm() / rn.max(f64::MIN_POSITIVE);
    let e = min_eig(&radius);
    if e < -tol * rn {
        return Err(Error::NegativeRadius {
            t: slice.t,
            min_eig: e,
        });
    }
    out.p_positive = true;
    out.center = Some(center);
    out.radius = Some(radius);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    /// Verdict from `ℛ - (l-𝒞)*P(l-𝒞) ⪰ 0`.
    pub inside: bool,
    /// Verdict from the defining form evaluated on `Ŷ`.
    pub inside_defining: bool,
    /// Smallest eigenvalue of `ℛ - (l-𝒞)*P(l-𝒞)`, relative to `‖ℛ‖`.
    pub margin: f64,
    /// Smallest eigenvalue of `-(θ̂+φ̂l)*G(θ̂+φ̂l)/2`, relative to its scale.
    pub defining_margin: f64,
    /// False when the disk is smaller than the rounding resolution of its
    /// center; `inside` then compares `‖l - 𝒞‖` against that resolution.
    pub resolved: bool,
}

/// Relative size below which a disk cannot be told apart from its center.
pub const RESOLUTION: f64 = 1e-12;

impl WeylDisk {
    fn parts(&self) -> Result<(&CMat, &CMat)> {
        match (&self.center, &self.radius) {
            (Some(cn), Some(r)) => Ok((cn, r)),
            _ => Err(Error::DiskUndefined {
                t: self.t,
                min_eig: min_eig(&self.p),
            }),
        }
    }

    pub fn contains(&self, l: &CMat, tol: f64) -> Result<Containment> {
        self.contains_within(l, tol, self.center_uncertainty())
    }

    /// Containment of `l` when `l - 𝒞` is only known to within `uncertainty`.
    ///
    /// The quadratic test is widened by the largest change such an error can
    /// cause, `2‖d‖‖P‖e + ‖P‖e²`. When that exceeds `tol·‖ℛ‖` the answer is
    /// flagged as unresolved.
    pub fn contains_within(&self, l: &CMat, tol: f64, uncertainty: f64) -> Result<Containment> {
        let (center, radius) = self.parts()?;
        let n = self.p.nrows();
        let d = l - center;
        let gap = re_part(&(radius - d.adjoint() * &self.p * &d));
        let rn = radius.norm().max(f64::MIN_POSITIVE);
        let margin = min_eig(&gap) / rn;
        let top = self.yhat.columns(0, n).into_owned();
        let phi = self.yhat.columns(n, n).into_owned();
        let v = top + phi * l;
        let form = re_part(&(-(v.adjoint() * &self.g * &v) * c(0.5)));
        let scale = (v.adjoint() * &v).norm() * self.g.norm();
        let defining_margin = min_eig(&form) / scale.max(f64::MIN_POSITIVE);
        let extent = self.extent();
        let floor = RESOLUTION * center.norm().max(1.0);
        let pn = self.p.norm();
        let slack = (2.0 * d.norm() * pn * uncertainty + pn * uncertainty * uncertainty) / rn;
        let resolved = extent > floor && slack <= tol;
        let allowance = if resolved { tol } else { tol + slack };
        let inside = if extent <= floor {
            d.norm() <= floor + extent + uncertainty
        } else {
            margin >= -allowance
        };
        Ok(Containment {
            inside,
            inside_defining: defining_margin >= -tol,
            margin,
            defining_margin,
            resolved,
        })
    }

    /// Rounding-level error of the center `-P⁻¹T*`, `8ε·cond(P)·max(1, ‖𝒞‖)`.
    pub fn center_uncertainty(&self) -> f64 {
        match &self.center {
            Some(cn) => {
                let lo = min_eig(&self.p).max(f64::MIN_POSITIVE);
                8.0 * f64::EPSILON * (self.p.norm() / lo) * cn.norm().max(1.0)
            }
            None => f64::INFINITY,
        }
    }

    pub fn extent(&self) -> f64 {
        match &self.radius {
            Some(r) => (r.norm() / min_eig(&self.p)).sqrt(),
            None => 0.0,
        }
    }

    /// `𝒞 + P^{-1/2} V ℛ^{1/2}` for a contraction `V`.
    pub fn boundary_point(&self, v: &CMat) -> Result<CMat> {
        let (center, radius) = self.parts()?;
        let s = v.clone().svd(false, false).singular_values.max();
        if s > 1.0 + 1e-12 {
            return Err(Error::NotContraction(s));
        }
        Ok(center + pd_inv_sqrt(&self.p)? * v * psd_sqrt(radius)?)
    }

    /// `V = P^{1/2}(l - 𝒞)ℛ^{-1/2}`, inverse of [`WeylDisk::boundary_point`].
    pub fn contraction_of(&self, l: &CMat) -> Result<CMat> {
        let (center, radius) = self.parts()?;
        Ok(psd_sqrt(&self.p)? * (l - center) * pd_inv_sqrt(radius)?)
    }
}

/// Running `λ_min ∫_{t₀}^{t_k} φ*Wφ Δs` for every grid index.
pub fn definiteness_margins(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    rot: &RotationU,
    traj: &FundamentalTrajectory,
) -> Result<Vec<f64>> {
    let n = traj.n;
    let samples: Vec<CMat> = (0..ts.len())
        .map(|k| {
            let phi = traj.y(sys, ts, k)?.columns(n, n).into_owned();
            let w = weight_w(&sys.blocks_at(ts, k), rot, traj.lambda);
            Ok(re_part(&(phi.adjoint() * w * phi)))
        })
        .collect::<Result<_>>()?;
    Ok(ts
        .cumulative_integral(&samples)
        .iter()
        .map(|m| min_eig(&re_part(m)))
        .collect())
}

pub fn definiteness_margin(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    rot: &RotationU,
    traj: &FundamentalTrajectory,
    k: usize,
) -> Result<f64> {
    Ok(definiteness_margins(sys, ts, rot, traj)?[k])
}

/// First grid index at which `P` is positive definite.
pub fn first_positive_index(
    traj: &FundamentalTrajectory,
    rot: &RotationU,
    ts: &TimeScale,
    tol: f64,
) -> Option<usize> {
    (0..ts.len()).find(|&k| p_is_positive(&stp(traj, rot, ts, k).p, tol))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NestingReport {
    pub p_monotone: bool,
    pub radius_monotone: bool,
    pub boundary_contained: bool,
    /// Boundary-point comparisons below the resolution of the centers.
    pub unresolved: usize,
    /// `‖𝒞(t_{i+1}) - 𝒞(t_i)‖` for consecutive disks.
    pub cauchy_gaps: Vec<f64>,
    pub violations: Vec<String>,
}

/// Sample contractions: coordinate matrices plus seeded random unitaries,
/// `2n²` in total.
pub fn sample_contractions(n: usize, seed: u64) -> Vec<CMat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut e = CMat::zeros(n, n);
            e[(i, j)] = c(1.0);
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < 2 * n * n {
        let m = CMat::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        out.push(m.qr().q());
    }
    out
}

/// Nesting checks over disks ordered by increasing `t`.
pub fn nesting_report(disks: &[WeylDisk], tol: f64, seed: u64) -> NestingReport {
    let mut rep = NestingReport {
        p_monotone: true,
        radius_monotone: true,
        boundary_contained: true,
        ..Default::default()
    };
    let live: Vec<&WeylDisk> = disks.iter().filter(|d| d.p_positive).collect();
    if live.len() < 2 {
        return rep;
    }
    let n = live[0].p.nrows();
    let vs = sample_contractions(n, seed);
    for w in live.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dp = re_part(&(&b.p - &a.p));
        if min_eig(&dp) < -tol * b.p.norm() {
            rep.p_monotone = false;
            rep.violations
                .push(format!("P decreased between t={} and t={}", a.t, b.t));
        }
        let (ra, rb) = (a.radius.as_ref().unwrap(), b.radius.as_ref().unwrap());
        if min_eig(&re_part(&(ra - rb))) < -tol * ra.norm() {
            rep.radius_monotone = false;
            rep.violations
                .push(format!("radius grew between t={} and t={}", a.t, b.t));
        }
        let (ca, cb) = (a.center.as_ref().unwrap(), b.center.as_ref().unwrap());
        rep.cauchy_gaps.push((cb - ca).norm());
        let e = a.center_uncertainty() + b.center_uncertainty();
        for v in &vs {
            let verdict = b
                .boundary_point(v)
                .and_then(|l| a.contains_within(&l, tol, e));
            let inside = match verdict {
                Ok(r) => {
                    rep.unresolved += usize::from(!r.resolved);
                    r.inside
                }
                Err(_) => false,
            };
            if !inside {
                rep.boundary_contained = false;
                rep.violations
                    .push(format!("boundary of D(t={}) leaves D(t={})", b.t, a.t));
                break;
            }
        }
    }
    rep
}

/// Default tolerance for disk positivity and containment.
pub const DISK_TOL: f64 = PSD_TOL;
