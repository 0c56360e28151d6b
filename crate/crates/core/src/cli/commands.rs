//! The four batch commands. Each returns tables and a summary; writing files
//! is left to the caller.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::output::{Cell, Table};
use super::RunError;
use crate::error::Error;
use crate::hamiltonian::{
    fundamental_pair, greens_residual, CoefficientSystem, FundamentalTrajectory,
};
use crate::matrixkit::{herm_eigen, min_eig, C64};
use crate::mfunction::{
    coupling_identities, decaying_weyl_solutions, identity_m_difference, m_estimate,
    WeylSolutionPair,
};
use crate::resolvent::{
    apply_resolvent, duality, green_kernel, kernel_symmetry, limit_tail, norm_inequalities,
    resolvent_residual, sample_profile, GreenKernel,
};
use crate::timescale::TimeScale;
use crate::weylsims::{
    admissible, cone_margin, disk, first_positive_index, nesting_report, stp, stp_crosscheck,
    AdmissiblePair, WeylDisk,
};

/// The scenario's system and verified admissible pair.
pub struct Prepared {
    pub sys: CoefficientSystem,
    pub pair: AdmissiblePair,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, RunError> {
    let (sys, rot) = cfg
        .spec
        .build(&cfg.ts)
        .map_err(|e| RunError::config("problem", e))?;
    let pair = admissible(&sys, &rot, &cfg.ts, cfg.lambda0, cfg.thresholds.disk);
    if !pair.verified {
        return Err(RunError::Config {
            path: "lambda0".into(),
            message: format!(
                "W(t, lambda0) is not positive semidefinite (min eigenvalue {:e} at t = {})",
                pair.min_eig, pair.worst_t
            ),
        });
    }
    Ok(Prepared { sys, pair })
}

fn lambda_context(l: C64) -> String {
    format!("lambda = {l}")
}

fn numeric(l: C64) -> impl Fn(Error) -> RunError {
    move |e| RunError::numeric(lambda_context(l), e)
}

fn require_cone(prep: &Prepared, ts: &TimeScale, l: C64) -> Result<f64, RunError> {
    let margin = cone_margin(&prep.sys, &prep.pair.rot, ts, l, prep.pair.lambda0);
    if margin > 0.0 {
        Ok(margin)
    } else {
        Err(RunError::numeric(
            lambda_context(l),
            Error::ConeViolation {
                lambda: format!("{l}"),
                margin,
            },
        ))
    }
}

fn truncated(ts: &TimeScale, h: f64) -> Result<TimeScale, RunError> {
    if h >= ts.horizon() {
        Ok(ts.clone())
    } else {
        ts.truncate(h)
            .map_err(|e| RunError::numeric(format!("horizon {h}"), e))
    }
}

fn matrix_header(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            out.push(format!("{prefix}_{}{}_re", i + 1, j + 1));
            out.push(format!("{prefix}_{}{}_im", i + 1, j + 1));
        }
    }
    out
}

fn matrix_cells(m: Option<&crate::matrixkit::CMat>, n: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let z = m.map(|m| m[(i, j)]).unwrap_or(C64::new(f64::NAN, f64::NAN));
            out.push(Cell::Num(z.re));
            out.push(Cell::Num(z.im));
        }
    }
    out
}

fn header(parts: &[&[&str]], extra: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = parts[0].iter().map(|s| s.to_string()).collect();
    out.extend(extra);
    for p in &parts[1..] {
        out.extend(p.iter().map(|s| s.to_string()));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub rows: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

pub struct Report {
    pub tables: Vec<(String, Table)>,
    pub summary: Summary,
}

impl Report {
    fn single(name: &str, table: Table) -> Self {
        let rows = table.rows.len();
        Self {
            tables: vec![(name.to_string(), table)],
            summary: Summary {
                rows,
                failed: 0,
                failures: Vec::new(),
            },
        }
    }
}

/// Disk center, radius eigenvalues and `λ_min(P)` per `(t, λ)` at the
/// configured horizons.
pub fn disks(cfg: &ScenarioConfig, prep: &Prepared) -> Result<Report, RunError> {
    let n = prep.sys.n();
    let tol = cfg.thresholds.integrator();
    let radius_cols: Vec<String> = (1..=n).map(|k| format!("r_eig_{k}")).collect();
    let mut cols = matrix_header("c", n);
    cols.extend(radius_cols);
    let mut table = Table::new(header(
        &[
            &["lambda_re", "lambda_im", "t"],
            &["p_min_eig", "p_positive"],
        ],
        cols,
    ));
    let blocks: Vec<Vec<Vec<Cell>>> = cfg
        .lambdas
        .par_iter()
        .map(|&l| {
            require_cone(prep, &cfg.ts, l)?;
            let traj = fundamental_pair(&prep.sys, &cfg.ts, l, &tol).map_err(numeric(l))?;
            let mut rows = Vec::new();
            for &h in &cfg.horizons {
                let k = cfg.ts.index_of(h);
                let d = disk(
                    &stp(&traj, &prep.pair.rot, &cfg.ts, k),
                    &prep.pair.rot,
                    cfg.thresholds.disk,
                )
                .map_err(numeric(l))?;
                let mut row = vec![Cell::Num(l.re), Cell::Num(l.im), Cell::Num(d.t)];
                row.extend(matrix_cells(d.center.as_ref(), n));
                let eig = d
                    .radius
                    .as_ref()
                    .map(|r| herm_eigen(r).0)
                    .unwrap_or_else(|| vec![f64::NAN; n]);
                row.extend(eig.into_iter().map(Cell::Num));
                row.push(Cell::Num(min_eig(&d.p)));
                row.push(Cell::Bool(d.p_positive));
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<_, RunError>>()?;
    for row in blocks.into_iter().flatten() {
        table.push(row);
    }
    Ok(Report::single("disks", table))
}

/// `M(λ)` at the largest horizon with the last Cauchy gap and cone margin.
pub fn mfun(cfg: &ScenarioConfig, prep: &Prepared) -> Result<Report, RunError> {
    let n = prep.sys.n();
    let tol = cfg.thresholds.integrator();
    let mut table = Table::new(header(
        &[
            &["lambda_re", "lambda_im", "horizon"],
            &["cauchy_gap", "delta", "nested"],
        ],
        matrix_header("m", n),
    ));
    let rows: Vec<Vec<Cell>> = cfg
        .lambdas
        .par_iter()
        .map(|&l| {
            let delta = require_cone(prep, &cfg.ts, l)?;
            let est = m_estimate(&prep.sys, &cfg.ts, &prep.pair, l, &cfg.horizons, &tol)
                .map_err(numeric(l))?;
            let mut row = vec![
                Cell::Num(l.re),
                Cell::Num(l.im),
                Cell::Num(*est.horizons.last().unwrap_or(&f64::NAN)),
            ];
            row.extend(matrix_cells(Some(&est.m), n));
            row.push(Cell::Num(est.cauchy_gap));
            row.push(Cell::Num(delta));
            row.push(Cell::Bool(est.nested));
            Ok(row)
        })
        .collect::<Result<_, RunError>>()?;
    for row in rows {
        table.push(row);
    }
    Ok(Report::single("mfun", table))
}

fn forcing_samples(cfg: &ScenarioConfig, n: usize) -> Vec<Vec<crate::matrixkit::CMat>> {
    cfg.forcings
        .iter()
        .map(|p| sample_profile(p, &cfg.ts, n))
        .collect()
}

/// Residual, boundary and norm-inequality diagnostics for every
/// `(λ, horizon, forcing)`.
pub fn resolve(cfg: &ScenarioConfig, prep: &Prepared) -> Result<Report, RunError> {
    let n = prep.sys.n();
    let tol = cfg.thresholds.integrator();
    let forcings = forcing_samples(cfg, n);
    let mut table = Table::new(header(
        &[
            &["lambda_re", "lambda_im", "horizon", "forcing"],
            &[
                "interior",
                "first_row",
                "rho_t0_zero",
                "chi_j_t0",
                "tail",
                "limit_tail",
                "delta",
                "eps",
                "ineq1_slack",
                "ineq2_slack",
                "ineq2_squared_slack",
            ],
        ],
        Vec::new(),
    ));
    let last = cfg.ts.last();
    let references: Vec<WeylSolutionPair> = cfg
        .lambdas
        .par_iter()
        .map(|&l| {
            require_cone(prep, &cfg.ts, l)?;
            let traj = fundamental_pair(&prep.sys, &cfg.ts, l, &tol).map_err(numeric(l))?;
            decaying_weyl_solutions(&prep.sys, &cfg.ts, &prep.pair.rot, &traj, last, &tol)
                .map_err(numeric(l))
        })
        .collect::<Result<_, RunError>>()?;
    let work: Vec<(usize, f64)> = (0..cfg.lambdas.len())
        .flat_map(|i| cfg.horizons.iter().map(move |&h| (i, h)))
        .collect();
    let blocks: Vec<Vec<Vec<Cell>>> = work
        .par_iter()
        .map(|&(i, h)| {
            let l = cfg.lambdas[i];
            let ts = truncated(&cfg.ts, h)?;
            let delta = require_cone(prep, &ts, l)?;
            let kern = green_kernel(&prep.sys, &ts, &prep.pair, l, &tol).map_err(numeric(l))?;
            let mut rows = Vec::new();
            for (j, f) in forcings.iter().enumerate() {
                let res = apply_resolvent(&kern, f).map_err(numeric(l))?;
                let rep = resolvent_residual(&kern, &res);
                let ineq = norm_inequalities(&kern, &prep.pair.rot, &res, cfg.lambda0, delta / 2.0)
                    .map_err(numeric(l))?;
                rows.push(vec![
                    Cell::Num(l.re),
                    Cell::Num(l.im),
                    Cell::Num(ts.horizon()),
                    Cell::Int(j as u64),
                    Cell::Num(rep.interior),
                    Cell::Num(rep.first_row),
                    Cell::Num(rep.boundary.rho_t0_zero),
                    Cell::Num(rep.boundary.chi_j_t0),
                    Cell::Num(rep.boundary.tail),
                    Cell::Num(limit_tail(&references[i], &res).map_err(numeric(l))?),
                    Cell::Num(ineq.delta),
                    Cell::Num(ineq.eps),
                    Cell::Num(ineq.ineq1_slack),
                    Cell::Num(ineq.ineq2_slack),
                    Cell::Num(ineq.ineq2_squared_slack),
                ]);
            }
            Ok(rows)
        })
        .collect::<Result<_, RunError>>()?;
    for row in blocks.into_iter().flatten() {
        table.push(row);
    }
    Ok(Report::single("resolve", table))
}

/// One asserted (or reported) quantity.
#[derive(Debug, Clone, Serialize)]
pub struct Invariant {
    pub name: String,
    pub lambda: C64,
    pub value: f64,
    /// `None` for quantities that are only reported.
    pub threshold: Option<f64>,
    /// `value ≤ threshold`, or `value ≥ -threshold` for slacks.
    pub lower_bound: bool,
    pub pass: bool,
}

impl Invariant {
    fn at_most(name: impl Into<String>, lambda: C64, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            lambda,
            value,
            threshold: Some(threshold),
            lower_bound: false,
            pass: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, lambda: C64, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            lambda,
            value,
            threshold: Some(threshold),
            lower_bound: true,
            pass: value >= -threshold,
        }
    }

    fn reported(name: impl Into<String>, lambda: C64, value: f64) -> Self {
        Self {
            name: name.into(),
            lambda,
            value,
            threshold: None,
            lower_bound: false,
            pass: true,
        }
    }
}

/// Disks at the horizons plus up to 16 evenly spaced indices from the first
/// index with `P > 0`.
fn nesting_disks(
    cfg: &ScenarioConfig,
    prep: &Prepared,
    traj: &FundamentalTrajectory,
) -> Result<Vec<WeylDisk>, Error> {
    let ts = &cfg.ts;
    let rot = &prep.pair.rot;
    let start = first_positive_index(traj, rot, ts, cfg.thresholds.disk).unwrap_or(ts.last());
    let mut idx: Vec<usize> = cfg.horizons.iter().map(|&h| ts.index_of(h)).collect();
    let span = ts.last().saturating_sub(start);
    for i in 0..=16 {
        idx.push(start + span * i / 16);
    }
    idx.retain(|&k| k >= start);
    idx.sort_unstable();
    idx.dedup();
    idx.iter()
        .map(|&k| disk(&stp(traj, rot, ts, k), rot, cfg.thresholds.disk))
        .collect()
}

fn check_lambda(
    cfg: &ScenarioConfig,
    prep: &Prepared,
    l: C64,
    xi_traj: &FundamentalTrajectory,
    forcings: &[Vec<crate::matrixkit::CMat>],
) -> Result<Vec<Invariant>, Error> {
    let ts = &cfg.ts;
    let thr = &cfg.thresholds;
    let tol = thr.integrator();
    let sys = &prep.sys;
    let rot = &prep.pair.rot;
    let last = ts.last();
    let mut out = Vec::new();

    let delta = cone_margin(sys, rot, ts, l, cfg.lambda0);
    if !(delta > 0.0) {
        return Err(Error::ConeViolation {
            lambda: format!("{l}"),
            margin: delta,
        });
    }
    out.push(Invariant::reported("cone_margin", l, delta));

    let traj = fundamental_pair(sys, ts, l, &tol)?;
    out.push(Invariant::at_most(
        "adjoint_formula",
        l,
        traj.adjoint_gap,
        thr.adjoint_formula,
    ));

    let g = greens_residual(sys, ts, l, &traj.yhat, cfg.xi, &xi_traj.zhat, 0, last)?;
    let scale = traj.yhat[last].norm() * xi_traj.zhat[last].norm();
    out.push(Invariant::at_most(
        "greens_formula",
        l,
        g.norm() / scale.max(1.0),
        thr.greens,
    ));

    let cross = stp_crosscheck(sys, ts, rot, &traj)?;
    out.push(Invariant::at_most(
        "block_form",
        l,
        cross.iter().fold(0.0, |m: f64, x| m.max(*x)),
        thr.block_form,
    ));

    let disks = nesting_disks(cfg, prep, &traj)?;
    let nest = nesting_report(&disks, thr.nesting, cfg.seed);
    out.push(Invariant::at_most(
        "nesting_violations",
        l,
        nest.violations.len() as f64,
        0.0,
    ));
    out.push(Invariant::reported(
        "nesting_cauchy_gap",
        l,
        nest.cauchy_gaps.last().copied().unwrap_or(0.0),
    ));

    let weyl = decaying_weyl_solutions(sys, ts, rot, &traj, last, &tol)?;
    let (mut zpsi, mut zphi) = (0.0f64, 0.0f64);
    for k in 0..=last {
        let cpl = coupling_identities(&traj, &weyl, k);
        zpsi = zpsi.max(cpl.zj_psi);
        zphi = zphi.max(cpl.zj_phi_plus_i);
    }
    out.push(Invariant::at_most(
        "coupling_zeta_j_psi",
        l,
        zpsi,
        thr.coupling,
    ));
    out.push(Invariant::at_most(
        "coupling_zeta_j_phi",
        l,
        zphi,
        thr.coupling,
    ));

    for &h in &cfg.horizons {
        let k = ts.index_of(h);
        let at_l = decaying_weyl_solutions(sys, ts, rot, &traj, k, &tol)?;
        let at_xi = decaying_weyl_solutions(sys, ts, rot, xi_traj, k, &tol)?;
        let id = identity_m_difference(sys, ts, &at_l, &at_xi, k)?;
        let name = format!("m_identity@{}", ts.t(k));
        out.push(match thr.m_identity {
            Some(t) => Invariant::at_most(name, l, id.residual, t),
            None => Invariant::reported(name, l, id.residual),
        });
    }

    let kern = GreenKernel::new(sys, ts, traj, weyl)?;
    out.push(Invariant::at_most(
        "kernel_symmetry",
        l,
        kernel_symmetry(&kern, 64, cfg.seed)?,
        thr.resolvent,
    ));
    for (j, f) in forcings.iter().enumerate() {
        let res = apply_resolvent(&kern, f)?;
        let rep = resolvent_residual(&kern, &res);
        out.push(Invariant::at_most(
            format!("resolvent_interior[{j}]"),
            l,
            rep.interior,
            thr.resolvent,
        ));
        out.push(Invariant::at_most(
            format!("resolvent_first_row[{j}]"),
            l,
            rep.first_row,
            thr.resolvent,
        ));
        out.push(Invariant::at_most(
            format!("boundary_rho_t0[{j}]"),
            l,
            rep.boundary.rho_t0_zero,
            thr.boundary,
        ));
        out.push(Invariant::at_most(
            format!("boundary_chi_j_t0[{j}]"),
            l,
            rep.boundary.chi_j_t0,
            thr.boundary,
        ));
        out.push(Invariant::at_most(
            format!("boundary_tail[{j}]"),
            l,
            rep.boundary.tail,
            thr.boundary,
        ));
        let ineq = norm_inequalities(&kern, rot, &res, cfg.lambda0, delta / 2.0)?;
        out.push(Invariant::at_least(
            format!("ineq1_slack[{j}]"),
            l,
            ineq.ineq1_slack,
            thr.norm_slack,
        ));
        out.push(Invariant::reported(
            format!("ineq2_slack[{j}]"),
            l,
            ineq.ineq2_slack,
        ));
        out.push(Invariant::reported(
            format!("ineq2_squared_slack[{j}]"),
            l,
            ineq.ineq2_squared_slack,
        ));
        if j + 1 < forcings.len() {
            let d = duality(&kern, f, &forcings[j + 1])?;
            out.push(Invariant::at_most(
                format!("duality[{j}]"),
                l,
                d.gap,
                thr.resolvent,
            ));
        }
    }
    Ok(out)
}

/// The invariant suite over every configured `λ`.
pub fn check(cfg: &ScenarioConfig, prep: &Prepared) -> Result<Report, RunError> {
    let n = prep.sys.n();
    let tol = cfg.thresholds.integrator();
    let xi_margin = cone_margin(&prep.sys, &prep.pair.rot, &cfg.ts, cfg.xi, cfg.lambda0);
    if !(xi_margin > 0.0) {
        return Err(RunError::Config {
            path: "xi".into(),
            message: format!("xi = {} is outside the cone (margin {xi_margin})", cfg.xi),
        });
    }
    let xi_traj = fundamental_pair(&prep.sys, &cfg.ts, cfg.xi, &tol).map_err(numeric(cfg.xi))?;
    let forcings = forcing_samples(cfg, n);
    let results: Vec<Vec<Invariant>> = cfg
        .lambdas
        .par_iter()
        .map(|&l| check_lambda(cfg, prep, l, &xi_traj, &forcings).map_err(numeric(l)))
        .collect::<Result<_, RunError>>()?;
    let mut table = Table::new(
        [
            "invariant",
            "lambda_re",
            "lambda_im",
            "value",
            "threshold",
            "pass",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    let mut failures = Vec::new();
    for inv in results.into_iter().flatten() {
        if !inv.pass {
            failures.push(format!(
                "{} at lambda = {}: {:e} (threshold {:e})",
                inv.name,
                inv.lambda,
                inv.value,
                inv.threshold.unwrap_or(f64::NAN)
            ));
        }
        let threshold = match (inv.threshold, inv.lower_bound) {
            (Some(t), true) => -t,
            (Some(t), false) => t,
            (None, _) => f64::NAN,
        };
        table.push(vec![
            Cell::Text(inv.name),
            Cell::Num(inv.lambda.re),
            Cell::Num(inv.lambda.im),
            Cell::Num(inv.value),
            Cell::Num(threshold),
            Cell::Bool(inv.pass),
        ]);
    }
    let rows = table.rows.len();
    Ok(Report {
        tables: vec![("check".into(), table)],
        summary: Summary {
            rows,
            failed: failures.len(),
            failures,
        },
    })
}
