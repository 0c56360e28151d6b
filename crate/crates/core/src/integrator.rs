//! Adaptive Dormand–Prince 5(4) for matrix-valued linear ODEs, stepping
//! exactly onto a prescribed output grid in either direction.

use crate::error::{Error, Result};
use crate::matrixkit::{c, CMat};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(acc: &CMat, terms: &[(f64, &CMat)], h: f64) -> CMat {
    let mut out = acc.clone();
    for (w, k) in terms {
        if *w != 0.0 {
            out += *k * c(h * w);
        }
    }
    out
}

fn error_norm(y: &CMat, ynew: &CMat, err: &CMat, tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    let count = err.len().max(1);
    for ((e, a), b) in err.iter().zip(y.iter()).zip(ynew.iter()) {
        let sc = tol.atol + tol.rtol * a.norm().max(b.norm());
        acc += (e.norm() / sc).powi(2);
    }
    (acc / count as f64).sqrt()
}

/// Integrate `y' = f(t, y)` from `times[0]` through every entry of `times`
/// (monotone in either direction), returning the state at each entry.
pub fn integrate<F>(f: F, times: &[f64], y0: &CMat, tol: &Tolerances) -> Result<Vec<CMat>>
where
    F: Fn(f64, &CMat) -> CMat,
{
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    if times.len() < 2 {
        return Ok(out);
    }
    let dir = if times[times.len() - 1] >= times[0] {
        1.0
    } else {
        -1.0
    };
    let mut y = y0.clone();
    let mut t = times[0];
    let mut h = (times[1] - times[0]).abs();
    let mut k1 = f(t, &y);
    let mut steps = 0usize;
    for &target in &times[1..] {
        while dir * (target - t) > 0.0 {
            let remaining = (target - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = dir * if last { remaining } else { h };
            let k2 = f(t + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
            let k3 = f(t + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = f(
                t + C4 * hs,
                &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs),
            );
            let k5 = f(
                t + C5 * hs,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
            );
            let k6 = f(
                t + hs,
                &axpy(
                    &y,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    hs,
                ),
            );
            let ynew = axpy(
                &y,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
                hs,
            );
            let tnew = if last { target } else { t + hs };
            let k7 = f(tnew, &ynew);
            let err = axpy(
                &CMat::zeros(y.nrows(), y.ncols()),
                &[
                    (E1, &k1),
                    (E3, &k3),
                    (E4, &k4),
                    (E5, &k5),
                    (E6, &k6),
                    (E7, &k7),
                ],
                hs,
            );
            let en = error_norm(&y, &ynew, &err, tol);
            if !en.is_finite() || ynew.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::IntegratorFailure {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            steps += 1;
            if steps > tol.max_steps {
                return Err(Error::IntegratorFailure {
                    t,
                    reason: format!("exceeded {} steps", tol.max_steps),
                });
            }
            let factor = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            if en <= 1.0 {
                t = tnew;
                y = ynew;
                k1 = k7;
                if !last {
                    h *= factor;
                } else {
                    h = h.max(hs.abs() * factor.min(1.0));
                }
            } else {
                h = hs.abs() * factor.min(0.9);
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::IntegratorFailure {
                        t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
