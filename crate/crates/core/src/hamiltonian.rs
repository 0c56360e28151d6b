//! The Hamiltonian system `J ŷ^Δ = (λA + B) y` in hatted form, its adjoint,
//! and propagation of fundamental systems.
//!
//! A state is stored hatted, `ŷ(t) = (y₁(t), y₂(ρ(t)))`; it obeys
//! `ŷ^Δ = 𝒦 ŷ` with `𝒦 = -J(λA + B)H`. The unhatted solution is `y = Hŷ`.

use crate::error::{Error, Result};
use crate::integrator::{integrate, Tolerances};
use crate::matrixkit::{
    block2, blockdiag, c, cond, eye, inverse, j_matrix, solve, split_rows, stack, CMat, C64,
    COND_CAP, PSD_TOL,
};
use crate::timescale::TimeScale;
use std::fmt;
use std::sync::Arc;

/// Coefficient blocks at one time, `A = diag(A₁, A₂)` and
/// `B = [[B₁, B₂], [B₃, B₄]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub a1: CMat,
    pub a2: CMat,
    pub b1: CMat,
    pub b2: CMat,
    pub b3: CMat,
    pub b4: CMat,
}

impl Blocks {
    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    pub fn a(&self) -> CMat {
        blockdiag(&self.a1, &self.a2)
    }

    pub fn b(&self) -> CMat {
        block2(&self.b1, &self.b2, &self.b3, &self.b4)
    }

    /// `λA + B`.
    pub fn pencil(&self, lambda: C64) -> CMat {
        self.a() * lambda + self.b()
    }

    /// `λ̄A + B*`, the pencil of the adjoint system.
    pub fn adjoint_pencil(&self, lambda: C64) -> CMat {
        self.a() * lambda.conj() + self.b().adjoint()
    }
}

/// `(t, μ(t)) ↦ Blocks`. The graininess is passed so that builders can
/// evaluate coefficients at `σ(t) = t + μ(t)`.
pub type BlockFn = dyn Fn(f64, f64) -> Blocks + Send + Sync;

#[derive(Clone)]
pub struct CoefficientSystem {
    n: usize,
    f: Arc<BlockFn>,
}

impl fmt::Debug for CoefficientSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSystem")
            .field("n", &self.n)
            .finish()
    }
}

impl CoefficientSystem {
    pub fn new<F>(n: usize, f: F) -> Self
    where
        F: Fn(f64, f64) -> Blocks + Send + Sync + 'static,
    {
        Self { n, f: Arc::new(f) }
    }

    /// Time-independent coefficients.
    pub fn constant(blocks: Blocks) -> Self {
        let n = blocks.n();
        Self::new(n, move |_, _| blocks.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self, t: f64, mu: f64) -> Blocks {
        (self.f)(t, mu)
    }

    pub fn blocks_at(&self, ts: &TimeScale, k: usize) -> Blocks {
        self.blocks(ts.t(k), ts.mu(k))
    }

    /// Checks block shapes and `A ⪰ 0` at every grid point.
    pub fn validate(&self, ts: &TimeScale) -> Result<()> {
        let n = self.n;
        for k in 0..ts.len() {
            let b = self.blocks_at(ts, k);
            for m in [&b.a1, &b.a2, &b.b1, &b.b2, &b.b3, &b.b4] {
                if m.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: m.nrows(),
                    });
                }
            }
            let report = crate::matrixkit::psd_check(&b.a(), PSD_TOL)?;
            if !report.psd {
                return Err(Error::IndefiniteInput {
                    min_eig: report.min_eig,
                });
            }
        }
        Ok(())
    }
}

/// Which of the two systems a trajectory solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Forward,
    Adjoint,
}

/// `E₂ = (I + μB₂)⁻¹`.
pub fn e2(b: &Blocks, mu: f64) -> Result<CMat> {
    let n = b.n();
    inverse(&(eye(n) + &b.b2 * c(mu)), "I + mu B2")
}

/// `H = [[I, 0], [-μE₂(λA₁ + B₁), E₂]]`.
pub fn h_matrix(b: &Blocks, mu: f64, lambda: C64) -> Result<CMat> {
    let n = b.n();
    let e = e2(b, mu)?;
    let low = -(&e * (&b.a1 * lambda + &b.b1)) * c(mu);
    Ok(block2(&eye(n), &CMat::zeros(n, n), &low, &e))
}

/// `H̃ = [[E₂*, -μE₂*(λ̄A₂ + B₄*)], [0, I]]`.
pub fn htilde_matrix(b: &Blocks, mu: f64, lambda: C64) -> Result<CMat> {
    let n = b.n();
    let es = e2(b, mu)?.adjoint();
    let up = -(&es * (&b.a2 * lambda.conj() + b.b4.adjoint())) * c(mu);
    Ok(block2(&es, &up, &CMat::zeros(n, n), &eye(n)))
}

/// `N = [[0, 0], [-μE₂, 0]]`, the inhomogeneous correction in `y = Hŷ + NAf`.
pub fn n_matrix(b: &Blocks, mu: f64) -> Result<CMat> {
    let n = b.n();
    let e = e2(b, mu)?;
    let z = CMat::zeros(n, n);
    Ok(block2(&z, &z, &(-e * c(mu)), &z))
}

/// `𝒦 = -J(λA + B)H`.
pub fn transfer_k(b: &Blocks, mu: f64, lambda: C64) -> Result<CMat> {
    let j = j_matrix(b.n());
    Ok(-(j * b.pencil(lambda)) * h_matrix(b, mu, lambda)?)
}

/// The two block-triangular factors whose product is `I + μ𝒦`.
pub fn k_factors(b: &Blocks, mu: f64, lambda: C64) -> Result<(CMat, CMat)> {
    let n = b.n();
    let left = block2(
        &(eye(n) + &b.b3 * c(mu)),
        &((&b.a2 * lambda + &b.b4) * c(mu)),
        &CMat::zeros(n, n),
        &eye(n),
    );
    Ok((left, h_matrix(b, mu, lambda)?))
}

/// `I + μJH*(λ̄A + B*)`; maps `Ẑ(σ(t))` back to `Ẑ(t)` for the adjoint system.
pub fn adjoint_back_step(b: &Blocks, mu: f64, lambda: C64) -> Result<CMat> {
    let n = b.n();
    let j = j_matrix(n);
    let h = h_matrix(b, mu, lambda)?;
    Ok(eye(2 * n) + j * h.adjoint() * b.adjoint_pencil(lambda) * c(mu))
}

/// Generator of the hatted flow on a dense scale.
fn generator(b: &Blocks, lambda: C64, side: Side) -> CMat {
    let j = j_matrix(b.n());
    match side {
        Side::Forward => -(j * b.pencil(lambda)),
        Side::Adjoint => -(j * b.adjoint_pencil(lambda)),
    }
}

fn cond_at(m: &CMat, t: f64, factor: &'static str) -> Result<()> {
    let k = cond(m);
    if k <= COND_CAP {
        Ok(())
    } else {
        Err(Error::SingularAt { t, factor, cond: k })
    }
}

/// Invertibility of `I + μB₂`, `I + μB₃` and `I + μ𝒦` at every scattered point.
pub fn regressivity_check(sys: &CoefficientSystem, ts: &TimeScale, lambda: C64) -> Result<()> {
    if !ts.is_discrete() {
        return Ok(());
    }
    let n = sys.n();
    for k in 0..ts.len() {
        let (t, mu) = (ts.t(k), ts.mu(k));
        let b = sys.blocks(t, mu);
        cond_at(&(eye(n) + &b.b2 * c(mu)), t, "I + mu B2")?;
        cond_at(&(eye(n) + &b.b3 * c(mu)), t, "I + mu B3")?;
        let kk = transfer_k(&b, mu, lambda)?;
        cond_at(&(eye(2 * n) + kk * c(mu)), t, "I + mu K")?;
    }
    Ok(())
}

/// Propagate a hatted solution of either system from grid index `from` to
/// grid index `to` (either direction). The result is indexed by grid index
/// offset from `min(from, to)`.
pub fn propagate_between(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    lambda: C64,
    init: &CMat,
    from: usize,
    to: usize,
    side: Side,
    tol: &Tolerances,
) -> Result<Vec<CMat>> {
    let len = ts.len();
    if from >= len || to >= len {
        return Err(Error::IndexOutOfRange {
            index: from.max(to),
            len,
        });
    }
    let n = sys.n();
    let mut path: Vec<CMat> = if ts.is_discrete() {
        let mut out = vec![init.clone()];
        let mut cur = init.clone();
        if to >= from {
            for k in from..to {
                let (t, mu) = (ts.t(k), ts.mu(k));
                let b = sys.blocks(t, mu);
                cur = match side {
                    Side::Forward => {
                        let kk = transfer_k(&b, mu, lambda)?;
                        (eye(2 * n) + kk * c(mu)) * &cur
                    }
                    Side::Adjoint => {
                        let m = adjoint_back_step(&b, mu, lambda)?;
                        solve(&m, &cur, "adjoint step").map_err(|e| at(e, t))?
                    }
                };
                out.push(cur.clone());
            }
        } else {
            for k in (to..from).rev() {
                let (t, mu) = (ts.t(k), ts.mu(k));
                let b = sys.blocks(t, mu);
                cur = match side {
                    Side::Forward => {
                        let kk = transfer_k(&b, mu, lambda)?;
                        solve(&(eye(2 * n) + kk * c(mu)), &cur, "I + mu K").map_err(|e| at(e, t))?
                    }
                    Side::Adjoint => adjoint_back_step(&b, mu, lambda)? * &cur,
                };
                out.push(cur.clone());
            }
        }
        out
    } else {
        let times: Vec<f64> = if to >= from {
            ts.points()[from..=to].to_vec()
        } else {
            ts.points()[to..=from].iter().rev().copied().collect()
        };
        let rhs = |t: f64, y: &CMat| generator(&sys.blocks(t, 0.0), lambda, side) * y;
        integrate(rhs, &times, init, tol)?
    };
    if to < from {
        path.reverse();
    }
    Ok(path)
}

fn at(e: Error, t: f64) -> Error {
    match e {
        Error::Singular { what, cond } => Error::SingularAt {
            t,
            factor: what,
            cond,
        },
        other => other,
    }
}

/// Forward propagation of the hatted system from `t₀`.
pub fn propagate(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    lambda: C64,
    init: &CMat,
    tol: &Tolerances,
) -> Result<Vec<CMat>> {
    propagate_between(sys, ts, lambda, init, 0, ts.last(), Side::Forward, tol)
}

/// Columns `(θ̂ | φ̂)` of `Ŷ` and `(η̂ | χ̂)` of `Ẑ`, both starting at `J`.
#[derive(Debug, Clone)]
pub struct FundamentalTrajectory {
    pub lambda: C64,
    pub n: usize,
    pub yhat: Vec<CMat>,
    /// `-J(Ŷ⁻¹)*J` where `Ŷ` is well conditioned, the direct adjoint
    /// solution elsewhere.
    pub zhat: Vec<CMat>,
    pub zhat_direct: Vec<CMat>,
    /// Largest relative gap between the two `Ẑ` computations.
    pub adjoint_gap: f64,
    /// Grid indices where the closed formula was usable.
    pub formula_valid: Vec<bool>,
}

/// Condition number of `Ŷ` above which `Ẑ` falls back to direct propagation.
pub const FORMULA_COND: f64 = 1e8;
/// Largest tolerated relative disagreement between the two `Ẑ`.
pub const ADJOINT_TOL: f64 = 1e-6;

pub fn fundamental_pair(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    lambda: C64,
    tol: &Tolerances,
) -> Result<FundamentalTrajectory> {
    regressivity_check(sys, ts, lambda)?;
    let n = sys.n();
    let j = j_matrix(n);
    let yhat = propagate(sys, ts, lambda, &j, tol)?;
    let zhat_direct = propagate_between(sys, ts, lambda, &j, 0, ts.last(), Side::Adjoint, tol)?;
    let mut zhat = Vec::with_capacity(yhat.len());
    let mut formula_valid = Vec::with_capacity(yhat.len());
    let mut gap: f64 = 0.0;
    for (y, zd) in yhat.iter().zip(&zhat_direct) {
        let ok = cond(y) <= FORMULA_COND;
        formula_valid.push(ok);
        if ok {
            let inv = crate::matrixkit::solve_unchecked(y, &eye(2 * n)).ok_or(Error::Singular {
                what: "fundamental matrix",
                cond: f64::INFINITY,
            })?;
            let zf = -(&j * inv.adjoint() * &j);
            gap = gap.max((&zf - zd).norm() / zf.norm().max(1.0));
            zhat.push(zf);
        } else {
            zhat.push(zd.clone());
        }
    }
    if gap > ADJOINT_TOL {
        return Err(Error::AdjointMismatch { gap });
    }
    Ok(FundamentalTrajectory {
        lambda,
        n,
        yhat,
        zhat,
        zhat_direct,
        adjoint_gap: gap,
        formula_valid,
    })
}

impl FundamentalTrajectory {
    pub fn theta_hat(&self, k: usize) -> CMat {
        self.yhat[k].columns(0, self.n).into_owned()
    }

    pub fn phi_hat(&self, k: usize) -> CMat {
        self.yhat[k].columns(self.n, self.n).into_owned()
    }

    pub fn eta_hat(&self, k: usize) -> CMat {
        self.zhat[k].columns(0, self.n).into_owned()
    }

    pub fn chi_hat(&self, k: usize) -> CMat {
        self.zhat[k].columns(self.n, self.n).into_owned()
    }

    /// Unhatted `Y(t_k) = H(t_k)Ŷ(t_k)`.
    pub fn y(&self, sys: &CoefficientSystem, ts: &TimeScale, k: usize) -> Result<CMat> {
        unhat_forward(sys, ts, k, self.lambda, &self.yhat[k])
    }

    /// Unhatted `Z(t_k) = H̃(t_k)Ẑ(σ(t_k))`.
    pub fn z(&self, sys: &CoefficientSystem, ts: &TimeScale, k: usize) -> Result<CMat> {
        unhat_adjoint(sys, ts, k, self.lambda, &self.zhat)
    }
}

/// A hatted state split into `y₁(t)` and `y₂(ρ(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HatState {
    pub y1: CMat,
    pub y2rho: CMat,
}

impl HatState {
    pub fn from_stacked(v: &CMat, n: usize) -> Self {
        let (y1, y2rho) = split_rows(v, n);
        Self { y1, y2rho }
    }

    pub fn stacked(&self) -> CMat {
        stack(&self.y1, &self.y2rho)
    }
}

pub fn unhat_forward(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    k: usize,
    lambda: C64,
    yhat: &CMat,
) -> Result<CMat> {
    let (t, mu) = (ts.t(k), ts.mu(k));
    if mu == 0.0 {
        return Ok(yhat.clone());
    }
    Ok(h_matrix(&sys.blocks(t, mu), mu, lambda)? * yhat)
}

/// `z(t_k) = H̃(t_k) ẑ(σ(t_k))` from a hatted adjoint trajectory on the grid.
pub fn unhat_adjoint(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    k: usize,
    lambda: C64,
    zhat: &[CMat],
) -> Result<CMat> {
    let (t, mu) = (ts.t(k), ts.mu(k));
    if mu == 0.0 {
        return Ok(zhat[k].clone());
    }
    let next = zhat.get(k + 1).ok_or(Error::MissingSigmaSample { t })?;
    Ok(htilde_matrix(&sys.blocks(t, mu), mu, lambda)? * next)
}

/// Green's formula defect
/// `∫_a^b [z*Jŷ^Δ - (Jẑ^Δ)*y] Δt - (ẑ*(b)Jŷ(b) - ẑ*(a)Jŷ(a))`.
///
/// `y` solves the system at `lambda`, `z` the adjoint system at `xi`. On
/// scattered scales the unhatted values come from the hatted samples by
/// the shift `y(t_k) = (ŷ₁(t_k), ŷ₂(t_{k+1}))`; on dense scales the
/// derivatives are the right-hand sides of the two systems.
pub fn greens_residual(
    sys: &CoefficientSystem,
    ts: &TimeScale,
    lambda: C64,
    y: &[CMat],
    xi: C64,
    z: &[CMat],
    a: usize,
    b: usize,
) -> Result<CMat> {
    if b >= ts.len() || b >= y.len() || b >= z.len() || a > b {
        return Err(Error::IndexOutOfRange {
            index: b,
            len: ts.len().min(y.len()).min(z.len()),
        });
    }
    let n = sys.n();
    let j = j_matrix(n);
    let boundary = z[b].adjoint() * &j * &y[b] - z[a].adjoint() * &j * &y[a];
    let integral = if ts.is_discrete() {
        let mut acc = CMat::zeros(boundary.nrows(), boundary.ncols());
        for k in a..b {
            let mu = ts.mu(k);
            let shift = |v: &[CMat]| {
                let (top, _) = split_rows(&v[k], n);
                let (_, bottom) = split_rows(&v[k + 1], n);
                stack(&top, &bottom)
            };
            let yk = shift(y);
            let zk = shift(z);
            let dy = (&y[k + 1] - &y[k]) / c(mu);
            let dz = (&z[k + 1] - &z[k]) / c(mu);
            acc += (zk.adjoint() * &j * dy - (&j * dz).adjoint() * yk) * c(mu);
        }
        acc
    } else {
        let samples: Vec<CMat> = (a..=b)
            .map(|k| {
                let bl = sys.blocks(ts.t(k), 0.0);
                let dy = generator(&bl, lambda, Side::Forward) * &y[k];
                let dz = generator(&bl, xi, Side::Adjoint) * &z[k];
                z[k].adjoint() * &j * dy - (&j * dz).adjoint() * &y[k]
            })
            .collect();
        let mut padded = vec![CMat::zeros(0, 0); a];
        padded.extend(samples);
        ts.delta_integral(
            &padded,
            crate::timescale::GridIndex(a),
            crate::timescale::GridIndex(b),
        )?
    };
    Ok(integral - boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{cmat_from_real, I};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> CMat {
        cmat_from_real(1, 1, &[x])
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

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize, s: f64) -> CMat {
        CMat::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-s..s), rng.gen_range(-s..s))
        })
    }

    fn random_blocks(rng: &mut ChaCha8Rng, n: usize) -> Blocks {
        let g1 = rand_mat(rng, n, 1.0);
        let g2 = rand_mat(rng, n, 1.0);
        Blocks {
            a1: g1.adjoint() * g1,
            a2: g2.adjoint() * g2,
            b1: rand_mat(rng, n, 1.0),
            b2: rand_mat(rng, n, 0.3),
            b3: rand_mat(rng, n, 0.3),
            b4: rand_mat(rng, n, 1.0),
        }
    }

    #[test]
    fn regressivity_examples() {
        let ts = TimeScale::continuous(0.0, 5.0, 0.1).unwrap();
        assert!(regressivity_check(&free_sl(), &ts, I).is_ok());
        let zs = TimeScale::uniform_discrete(0.0, 1.0, 20).unwrap();
        for lam in [I, C64::new(3.0, -2.0), c(0.0)] {
            assert!(regressivity_check(&free_sl(), &zs, lam).is_ok());
            let b = free_sl().blocks(0.0, 1.0);
            let m = eye(2) + transfer_k(&b, 1.0, lam).unwrap();
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            assert!((det - c(1.0)).norm() < 1e-14);
        }
        let mut bad = free_sl().blocks(0.0, 1.0);
        bad.b2 = scalar(-1.0);
        let sys = CoefficientSystem::constant(bad);
        match regressivity_check(&sys, &zs, I) {
            Err(Error::SingularAt { t, factor, .. }) => {
                assert_eq!(t, 0.0);
                assert_eq!(factor, "I + mu B2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transfer_matrix_examples() {
        let b = free_sl().blocks(0.0, 0.0);
        let lam = C64::new(0.7, 1.3);
        let k0 = transfer_k(&b, 0.0, lam).unwrap();
        assert!((k0 + j_matrix(1) * b.pencil(lam)).norm() < 1e-15);
        let k1 = transfer_k(&b, 1.0, lam).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[-lam, c(1.0), -lam, c(0.0)]);
        assert!((k1 - expect).norm() < 1e-14);
        let h = h_matrix(&b, 1.0, lam).unwrap();
        let y = h * cmat_from_real(2, 1, &[1.0, 0.0]);
        assert!((y[(1, 0)] + lam).norm() < 1e-15);
        assert_eq!(y[(0, 0)], c(1.0));
    }

    #[test]
    fn factorization_and_transform_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(1..=3);
            let b = random_blocks(&mut rng, n);
            let mu = rng.gen_range(0.05..1.5);
            let lam = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let kk = transfer_k(&b, mu, lam).unwrap();
            let (l, r) = k_factors(&b, mu, lam).unwrap();
            assert!(((eye(2 * n) + kk * c(mu)) - l * r).norm() < 1e-13 * (1.0 + mu));
            let nm = n_matrix(&b, mu).unwrap();
            let ht = htilde_matrix(&b, mu, lam).unwrap();
            let lhs = b.pencil(lam) * nm + eye(2 * n);
            assert!((lhs - ht.adjoint()).norm() < 1e-13 * b.pencil(lam).norm().max(1.0));
        }
        let b = free_sl().blocks(0.0, 0.0);
        assert_eq!(h_matrix(&b, 0.0, I).unwrap(), eye(2));
        assert_eq!(htilde_matrix(&b, 0.0, I).unwrap(), eye(2));
        assert_eq!(n_matrix(&b, 0.0).unwrap(), CMat::zeros(2, 2));
    }

    #[test]
    fn zero_generator_keeps_identity() {
        let zero = Blocks {
            a1: scalar(0.0),
            a2: scalar(0.0),
            b1: scalar(0.0),
            b2: scalar(0.0),
            b3: scalar(0.0),
            b4: scalar(0.0),
        };
        let sys = CoefficientSystem::constant(zero);
        for ts in [
            TimeScale::continuous(0.0, 3.0, 0.1).unwrap(),
            TimeScale::uniform_discrete(0.0, 0.5, 7).unwrap(),
        ] {
            let path = propagate(&sys, &ts, I, &eye(2), &Tolerances::default()).unwrap();
            assert!(path.iter().all(|y| (y - eye(2)).norm() < 1e-14));
        }
    }

    /// Gaussian integers, exact.
    #[derive(Clone, Copy, Debug, PartialEq)]
    struct Gi(i64, i64);
    impl Gi {
        fn mul(self, o: Gi) -> Gi {
            Gi(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
        fn add(self, o: Gi) -> Gi {
            Gi(self.0 + o.0, self.1 + o.1)
        }
    }

    #[test]
    fn integer_lattice_matches_exact_recursion() {
        // I + K = [[1 - λ, 1], [-λ, 1]] for the free problem on the integers.
        let lam = Gi(2, 1);
        let step = [
            [Gi(1 - lam.0, -lam.1), Gi(1, 0)],
            [Gi(-lam.0, -lam.1), Gi(1, 0)],
        ];
        let mut y = [[Gi(0, 0), Gi(-1, 0)], [Gi(1, 0), Gi(0, 0)]];
        let mut exact = vec![y];
        for _ in 0..5 {
            let mut nx = [[Gi(0, 0); 2]; 2];
            for (i, row) in nx.iter_mut().enumerate() {
                for (jj, cell) in row.iter_mut().enumerate() {
                    *cell = step[i][0].mul(y[0][jj]).add(step[i][1].mul(y[1][jj]));
                }
            }
            y = nx;
            exact.push(y);
        }
        let ts = TimeScale::uniform_discrete(0.0, 1.0, 6).unwrap();
        let path = propagate(
            &free_sl(),
            &ts,
            C64::new(2.0, 1.0),
            &j_matrix(1),
            &Tolerances::default(),
        )
        .unwrap();
        for (num, ex) in path.iter().zip(&exact) {
            for i in 0..2 {
                for jj in 0..2 {
                    let e = C64::new(ex[i][jj].0 as f64, ex[i][jj].1 as f64);
                    assert!((num[(i, jj)] - e).norm() <= 1e-12 * e.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn continuous_free_problem_is_sine() {
        let ts = TimeScale::continuous(0.0, 10.0, 0.01).unwrap();
        let tr = fundamental_pair(&free_sl(), &ts, c(1.0), &Tolerances::default()).unwrap();
        for k in (0..ts.len()).step_by(37) {
            let t = ts.t(k);
            assert!((tr.yhat[k][(0, 0)] - c(t.sin())).norm() < 1e-8);
            assert!((tr.yhat[k][(0, 1)] + c(t.cos())).norm() < 1e-8);
        }
        assert!(tr.adjoint_gap < 1e-7);
    }

    #[test]
    fn initial_columns() {
        let ts = TimeScale::uniform_discrete(0.0, 1.0, 4).unwrap();
        let tr = fundamental_pair(&free_sl(), &ts, I, &Tolerances::default()).unwrap();
        assert_eq!(tr.theta_hat(0), cmat_from_real(2, 1, &[0.0, 1.0]));
        assert_eq!(tr.phi_hat(0), cmat_from_real(2, 1, &[-1.0, 0.0]));
        assert_eq!(tr.zhat[0], j_matrix(1));
    }

    #[test]
    fn adjoint_identity_on_random_scattered_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let b = random_blocks(&mut rng, 1);
            let sys = CoefficientSystem::constant(b);
            let mut pts = vec![0.0];
            for _ in 0..20 {
                let l = *pts.last().unwrap();
                pts.push(l + rng.gen_range(0.05..0.3));
            }
            let ts = TimeScale::discrete(-0.3, pts).unwrap();
            let lam = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let tr = fundamental_pair(&sys, &ts, lam, &Tolerances::default()).unwrap();
            let j = j_matrix(1);
            for (y, zd) in tr.yhat.iter().zip(&tr.zhat_direct) {
                let inv = inverse(y, "test").unwrap();
                let gap = (zd + &j * inv.adjoint() * &j).norm();
                assert!(gap <= 1e-10 * zd.norm().max(1.0), "gap {gap}");
            }
        }
    }

    #[test]
    fn continuous_direct_adjoint_matches_formula() {
        let ts = TimeScale::continuous(0.0, 8.0, 0.01).unwrap();
        let tr = fundamental_pair(&free_sl(), &ts, I, &Tolerances::default()).unwrap();
        assert!(tr.adjoint_gap < 1e-7, "{}", tr.adjoint_gap);
    }

    #[test]
    fn unhat_examples() {
        let zs = TimeScale::uniform_discrete(0.0, 1.0, 5).unwrap();
        let lam = C64::new(0.5, -1.0);
        let v = cmat_from_real(2, 1, &[1.0, 0.0]);
        let y = unhat_forward(&free_sl(), &zs, 2, lam, &v).unwrap();
        assert_eq!(y[(1, 0)], -lam);
        let rs = TimeScale::continuous(0.0, 1.0, 0.5).unwrap();
        assert_eq!(unhat_forward(&free_sl(), &rs, 1, lam, &v).unwrap(), v);
        let traj = vec![v.clone(); 3];
        assert_eq!(unhat_adjoint(&free_sl(), &rs, 1, lam, &traj).unwrap(), v);
        let traj = vec![v.clone(); 5];
        assert!(matches!(
            unhat_adjoint(&free_sl(), &zs, 4, lam, &traj),
            Err(Error::MissingSigmaSample { .. })
        ));
        let st = HatState::from_stacked(&cmat_from_real(2, 1, &[3.0, 4.0]), 1);
        assert_eq!(st.y2rho, scalar(4.0));
        assert_eq!(st.stacked(), cmat_from_real(2, 1, &[3.0, 4.0]));
    }

    #[test]
    fn unhatted_solutions_satisfy_shift_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = CoefficientSystem::constant(random_blocks(&mut rng, 2));
        let ts = TimeScale::discrete(-0.2, vec![0.0, 0.3, 0.5, 1.0, 1.2, 1.9]).unwrap();
        let lam = C64::new(0.3, 0.8);
        let tr = fundamental_pair(&sys, &ts, lam, &Tolerances::default()).unwrap();
        for k in 0..ts.last() {
            let y = tr.y(&sys, &ts, k).unwrap();
            let z = tr.z(&sys, &ts, k).unwrap();
            let (y1, y2) = split_rows(&y, 2);
            let (z1, z2) = split_rows(&z, 2);
            assert!((y1 - split_rows(&tr.yhat[k], 2).0).norm() < 1e-12);
            assert!((y2 - split_rows(&tr.yhat[k + 1], 2).1).norm() < 1e-12);
            assert!((z1 - split_rows(&tr.zhat[k], 2).0).norm() < 1e-10);
            assert!((z2 - split_rows(&tr.zhat[k + 1], 2).1).norm() < 1e-10);
        }
    }

    #[test]
    fn greens_formula_scattered() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(1..=2);
            let sys = CoefficientSystem::constant(random_blocks(&mut rng, n));
            let ts = TimeScale::uniform_discrete(0.0, rng.gen_range(0.1..0.7), 12).unwrap();
            let lam = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let xi = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let ty = fundamental_pair(&sys, &ts, lam, &Tolerances::default()).unwrap();
            let tz = fundamental_pair(&sys, &ts, xi, &Tolerances::default()).unwrap();
            let r = greens_residual(&sys, &ts, lam, &ty.yhat, xi, &tz.zhat, 0, ts.last()).unwrap();
            let scale = ty.yhat.last().unwrap().norm() * tz.zhat.last().unwrap().norm();
            assert!(r.norm() <= 1e-10 * scale.max(1.0), "{}", r.norm());
        }
        let ts = TimeScale::uniform_discrete(0.0, 1.0, 5).unwrap();
        let zeros = vec![CMat::zeros(2, 1); 5];
        let r = greens_residual(&free_sl(), &ts, I, &zeros, I, &zeros, 0, 4).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn greens_formula_dense() {
        let ts = TimeScale::continuous(0.0, 10.0, 0.01).unwrap();
        let (lam, xi) = (c(1.0), c(2.0));
        let tol = Tolerances::default();
        let ty = fundamental_pair(&free_sl(), &ts, lam, &tol).unwrap();
        let tz = fundamental_pair(&free_sl(), &ts, xi, &tol).unwrap();
        let r =
            greens_residual(&free_sl(), &ts, lam, &ty.yhat, xi, &tz.zhat, 0, ts.last()).unwrap();
        assert!(r.norm() < 1e-7, "{}", r.norm());
        let (lam, xi) = (I, C64::new(0.5, 2.0));
        let ty = fundamental_pair(&free_sl(), &ts, lam, &tol).unwrap();
        let tz = fundamental_pair(&free_sl(), &ts, xi, &tol).unwrap();
        let r =
            greens_residual(&free_sl(), &ts, lam, &ty.yhat, xi, &tz.zhat, 0, ts.last()).unwrap();
        let scale = ty.yhat.last().unwrap().norm() * tz.zhat.last().unwrap().norm();
        assert!(r.norm() < 1e-7 * scale, "{}", r.norm() / scale);
    }
}
