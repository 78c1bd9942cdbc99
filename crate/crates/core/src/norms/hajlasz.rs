//! The Hajłasz–Sobolev norm `inf ‖g‖_{L^p}` over `g >= 0` with
//! `|f(xi) - f(eta)| <= d(xi, eta)^s (g(xi) + g(eta))` for all pairs.
//!
//! `p = inf` has the closed form `g = max c / 2`. For `p = 1` the dual packing
//! LP is solved by a revised simplex; its prices are the optimal `g`. For
//! `1 < p < inf` coordinate ascent on the Lagrange dual (Hildreth's method)
//! produces `g` in closed form from the multipliers. Every returned `g` is
//! passed through a repair sweep that makes it feasible in floating point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lp_norm_weighted;
use crate::error::{Error, Result};
use crate::space::FiniteMetricMeasureSpace;

pub const DEFAULT_SOLVER_BUDGET: usize = 2000;

/// A feasible upper gradient: `|f(xi) - f(eta)| <= d^s (g(xi) + g(eta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HajlaszGradient {
    pub g: Vec<f64>,
    pub s_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HajlaszResult {
    /// `‖g‖_{L^p}` of the certificate.
    pub value: f64,
    pub certificate: HajlaszGradient,
    /// Best single-pair lower bound on the infimum.
    pub lower_bound: f64,
    pub iterations: usize,
    /// Largest `|f(xi) - f(eta)| - d^s (g(xi) + g(eta))` over pairs (0 when feasible).
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HajlaszOptions {
    /// Largest point count accepted.
    pub budget: usize,
    /// Relative constraint violation of the unrepaired iterate.
    pub violation_tol: f64,
    /// Relative primal-dual gap.
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for HajlaszOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_SOLVER_BUDGET,
            violation_tol: 1e-9,
            gap_tol: 1e-7,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    i: u32,
    j: u32,
    c: f64,
}

pub fn hajlasz_norm(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    s: f64,
    p: f64,
) -> Result<HajlaszResult> {
    hajlasz_norm_with(space, f, s, p, &HajlaszOptions::default())
}

fn check_inputs(space: &FiniteMetricMeasureSpace, f: &[f64], s: f64, p: f64) -> Result<()> {
    if f.len() != space.len() {
        return Err(Error::invalid(format!(
            "{} samples for a space of {} points",
            f.len(),
            space.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("exponent s = {s} must be positive")));
    }
    if p.is_nan() || p <= 0.0 {
        return Err(Error::invalid(format!("p = {p} must be positive")));
    }
    if p < 1.0 {
        return Err(Error::Unsupported(format!(
            "the Hajlasz problem with p = {p} < 1 is not convex; use the J^1_{{p,inf}} sequence norm \
             (triebel_fn_norm with s = 1, q = inf) as the equivalent quantity"
        )));
    }
    Ok(())
}

fn pairs_of(space: &FiniteMetricMeasureSpace, f: &[f64], s: f64) -> Result<Vec<Pair>> {
    let n = space.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let df = (f[i] - f[j]).abs();
            if df == 0.0 {
                continue;
            }
            let d = space.distance(i, j);
            if d == 0.0 {
                return Err(Error::invalid(format!(
                    "points {i} and {j} coincide but carry different values"
                )));
            }
            pairs.push(Pair {
                i: i as u32,
                j: j as u32,
                c: df / d.powf(s),
            });
        }
    }
    Ok(pairs)
}

fn pair_bound(c: f64, wi: f64, wj: f64, p: f64) -> f64 {
    if p.is_infinite() {
        c / 2.0
    } else if p == 1.0 {
        c * wi.min(wj)
    } else {
        let e = 1.0 / (p - 1.0);
        let a = |w: f64| if w > 0.0 { w.powf(-e) } else { f64::INFINITY };
        c * (a(wi) + a(wj)).powf(-(p - 1.0) / p)
    }
}

/// The largest lower bound implied by a single pairwise constraint.
pub fn hajlasz_lower_bound(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    s: f64,
    p: f64,
) -> Result<f64> {
    check_inputs(space, f, s, p)?;
    let w = space.weights();
    Ok(pairs_of(space, f, s)?
        .iter()
        .map(|q| pair_bound(q.c, w[q.i as usize], w[q.j as usize], p))
        .fold(0.0, f64::max))
}

/// `max (|f(xi) - f(eta)| - d^s (g(xi) + g(eta)))_+` over all pairs.
pub fn hajlasz_violation(space: &FiniteMetricMeasureSpace, f: &[f64], g: &[f64], s: f64) -> f64 {
    let n = space.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let df = (f[i] - f[j]).abs();
            if df == 0.0 {
                continue;
            }
            let ds = space.distance(i, j).powf(s);
            worst = worst.max(df - ds * (g[i] + g[j]));
        }
    }
    worst
}

/// Raises `g` on violated pairs until every constraint holds in floating point.
fn repair(space: &FiniteMetricMeasureSpace, f: &[f64], s: f64, pairs: &[Pair], g: &mut [f64]) {
    for q in pairs {
        let (i, j) = (q.i as usize, q.j as usize);
        let df = (f[i] - f[j]).abs();
        let ds = space.distance(i, j).powf(s);
        let mut step = 0.0f64;
        while ds * (g[i] + g[j]) < df {
            let deficit = (q.c - g[i] - g[j]).max(0.0) / 2.0;
            step = (deficit * (1.0 + 1e-12)).max(step * 2.0).max(f64::EPSILON * q.c);
            g[i] += step;
            g[j] += step;
        }
    }
}

pub fn hajlasz_norm_with(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    s: f64,
    p: f64,
    opts: &HajlaszOptions,
) -> Result<HajlaszResult> {
    check_inputs(space, f, s, p)?;
    let n = space.len();
    if n > opts.budget {
        return Err(Error::BudgetExceeded {
            requested: n as u128,
            budget: opts.budget,
        });
    }
    let pairs = pairs_of(space, f, s)?;
    let w = space.weights();
    let lower_bound = pairs
        .iter()
        .map(|q| pair_bound(q.c, w[q.i as usize], w[q.j as usize], p))
        .fold(0.0, f64::max);
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    if !pairs.is_empty() {
        if p.is_infinite() {
            let cmax = pairs.iter().map(|q| q.c).fold(0.0, f64::max);
            g.fill(cmax / 2.0);
        } else {
            // Points of zero mass take the largest slope they meet at no cost.
            let mut local = vec![u32::MAX; n];
            let mut active = Vec::new();
            for i in 0..n {
                if w[i] > 0.0 {
                    local[i] = active.len() as u32;
                    active.push(i);
                }
            }
            for q in &pairs {
                for k in [q.i as usize, q.j as usize] {
                    if w[k] <= 0.0 {
                        g[k] = g[k].max(q.c);
                    }
                }
            }
            let sub: Vec<Pair> = pairs
                .iter()
                .filter(|q| local[q.i as usize] != u32::MAX && local[q.j as usize] != u32::MAX)
                .map(|q| Pair {
                    i: local[q.i as usize],
                    j: local[q.j as usize],
                    c: q.c,
                })
                .collect();
            let weights: Vec<f64> = active.iter().map(|&i| w[i]).collect();
            if !sub.is_empty() {
                let (local_g, iters) = if p == 1.0 {
                    simplex_packing(&weights, &sub, opts)?
                } else {
                    hildreth(&weights, &sub, p, opts)?
                };
                iterations = iters;
                for (k, &i) in active.iter().enumerate() {
                    g[i] = local_g[k].max(0.0);
                }
            }
        }
        repair(space, f, s, &pairs, &mut g);
    }
    let value = lp_norm_weighted(w, &g, p);
    let max_violation = hajlasz_violation(space, f, &g, s).max(0.0);
    Ok(HajlaszResult {
        value,
        certificate: HajlaszGradient { g, s_exponent: s },
        lower_bound,
        iterations,
        max_violation,
    })
}

/// Revised simplex on `max sum c y` s.t. `sum_{q ∋ i} y_q + slack_i = w_i`.
/// Returns the optimal prices, which solve `min sum w g` s.t. `g_i + g_j >= c`.
fn simplex_packing(w: &[f64], pairs: &[Pair], opts: &HajlaszOptions) -> Result<(Vec<f64>, usize)> {
    const REFACTOR_EVERY: usize = 100;
    const BLAND_AFTER: usize = 50;
    let m = w.len();
    let np = pairs.len();
    let cmax = pairs.iter().map(|q| q.c).fold(0.0, f64::max);
    let rc_tol = 1e-11 * cmax.max(1e-300);
    let piv_tol = 1e-11;
    let cost = |col: usize| if col < np { pairs[col].c } else { 0.0 };

    let mut binv = vec![0.0; m * m];
    for r in 0..m {
        binv[r * m + r] = 1.0;
    }
    let mut basis: Vec<usize> = (0..m).map(|i| np + i).collect();
    let mut xb = w.to_vec();
    let mut pi = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut degenerate_run = 0usize;

    for iter in 0..opts.max_iterations {
        pi.fill(0.0);
        for r in 0..m {
            let cb = cost(basis[r]);
            if cb != 0.0 {
                let row = &binv[r * m..(r + 1) * m];
                for k in 0..m {
                    pi[k] += cb * row[k];
                }
            }
        }

        let bland = degenerate_run > BLAND_AFTER;
        let mut entering: Option<(usize, f64)> = None;
        for (col, q) in pairs.iter().enumerate() {
            let rc = q.c - pi[q.i as usize] - pi[q.j as usize];
            if rc > rc_tol {
                if bland {
                    entering = Some((col, rc));
                    break;
                }
                if entering.map_or(true, |(_, best)| rc > best) {
                    entering = Some((col, rc));
                }
            }
        }
        if entering.is_none() || !bland {
            for k in 0..m {
                let rc = -pi[k];
                if rc > rc_tol && entering.map_or(true, |(_, best)| rc > best) {
                    entering = Some((np + k, rc));
                    if bland {
                        break;
                    }
                }
            }
        }
        let Some((col, _)) = entering else {
            return Ok((pi, iter));
        };

        for r in 0..m {
            d[r] = if col < np {
                binv[r * m + pairs[col].i as usize] + binv[r * m + pairs[col].j as usize]
            } else {
                binv[r * m + (col - np)]
            };
        }
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if d[r] > piv_tol {
                let ratio = xb[r].max(0.0) / d[r];
                let better = match leave {
                    None => true,
                    Some((lr, best)) => {
                        if ratio < best - 1e-15 * best.max(1.0) {
                            true
                        } else if ratio <= best + 1e-15 * best.max(1.0) {
                            if bland {
                                basis[r] < basis[lr]
                            } else {
                                d[r] > d[lr]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((lr, theta)) = leave else {
            return Err(Error::NoConvergence(
                "packing LP reported unbounded, which indicates numerical breakdown".into(),
            ));
        };
        degenerate_run = if theta <= 1e-14 { degenerate_run + 1 } else { 0 };

        let piv = d[lr];
        for k in 0..m {
            binv[lr * m + k] /= piv;
        }
        xb[lr] = theta;
        let pivot_row: Vec<f64> = binv[lr * m..(lr + 1) * m].to_vec();
        for r in 0..m {
            if r != lr && d[r] != 0.0 {
                let factor = d[r];
                let row = &mut binv[r * m..(r + 1) * m];
                for k in 0..m {
                    row[k] -= factor * pivot_row[k];
                }
                xb[r] -= factor * theta;
            }
        }
        basis[lr] = col;

        if (iter + 1) % REFACTOR_EVERY == 0 {
            let mut b = DMatrix::<f64>::zeros(m, m);
            for (r, &bc) in basis.iter().enumerate() {
                if bc < np {
                    b[(pairs[bc].i as usize, r)] = 1.0;
                    b[(pairs[bc].j as usize, r)] = 1.0;
                } else {
                    b[(bc - np, r)] = 1.0;
                }
            }
            let inv = b
                .try_inverse()
                .ok_or_else(|| Error::NoConvergence("simplex basis became singular".into()))?;
            for r in 0..m {
                for k in 0..m {
                    binv[r * m + k] = inv[(r, k)];
                }
                xb[r] = (0..m).map(|k| inv[(r, k)] * w[k]).sum::<f64>().max(0.0);
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "packing LP did not reach optimality in {} pivots",
        opts.max_iterations
    )))
}

/// Coordinate ascent on the dual of `min sum w g^p` s.t. `g_i + g_j >= c`.
fn hildreth(w: &[f64], pairs: &[Pair], p: f64, opts: &HajlaszOptions) -> Result<(Vec<f64>, usize)> {
    let m = w.len();
    let e = 1.0 / (p - 1.0);
    let grad = |a: f64, wk: f64| if a <= 0.0 { 0.0 } else { (a / (p * wk)).powf(e) };
    let dgrad = |a: f64, wk: f64| {
        if a <= 0.0 {
            0.0
        } else {
            grad(a, wk) * e / a
        }
    };
    let cmax = pairs.iter().map(|q| q.c).fold(0.0, f64::max);
    let mut y = vec![0.0; pairs.len()];
    let mut a = vec![0.0; m];
    let mut g = vec![0.0; m];

    for sweep in 1..=opts.max_iterations {
        for (k, q) in pairs.iter().enumerate() {
            let (i, j) = (q.i as usize, q.j as usize);
            let (ai, aj) = (a[i] - y[k], a[j] - y[k]);
            let phi = |t: f64| grad(ai + t, w[i]) + grad(aj + t, w[j]) - q.c;
            let t = if phi(0.0) >= 0.0 {
                0.0
            } else {
                let cap = |ak: f64, wk: f64| p * wk * q.c.powf(p - 1.0) - ak;
                let (mut lo, mut hi) = (0.0, cap(ai, w[i]).min(cap(aj, w[j])).max(0.0));
                let mut t = y[k].clamp(lo, hi);
                for _ in 0..200 {
                    let v = phi(t);
                    if v.abs() <= 1e-15 * q.c {
                        break;
                    }
                    if v < 0.0 {
                        lo = t;
                    } else {
                        hi = t;
                    }
                    if hi - lo <= 1e-16 * hi {
                        break;
                    }
                    let slope = dgrad(ai + t, w[i]) + dgrad(aj + t, w[j]);
                    let newton = t - v / slope;
                    t = if slope > 0.0 && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                t
            };
            a[i] = ai + t;
            a[j] = aj + t;
            y[k] = t;
        }

        for k in 0..m {
            g[k] = grad(a[k], w[k]);
        }
        let violation = pairs
            .iter()
            .map(|q| q.c - g[q.i as usize] - g[q.j as usize])
            .fold(0.0, f64::max)
            / cmax;
        if violation >= opts.violation_tol {
            continue;
        }
        let dual = pairs.iter().zip(&y).map(|(q, yk)| q.c * yk).sum::<f64>()
            - (p - 1.0) / p * a.iter().zip(&g).map(|(ak, gk)| ak * gk).sum::<f64>();
        let mut feasible = g.clone();
        for q in pairs {
            let (i, j) = (q.i as usize, q.j as usize);
            let deficit = q.c - feasible[i] - feasible[j];
            if deficit > 0.0 {
                feasible[i] += deficit / 2.0;
                feasible[j] += deficit / 2.0;
            }
        }
        let primal: f64 = feasible.iter().zip(w).map(|(gk, wk)| wk * gk.powf(p)).sum();
        if primal <= 0.0 || (primal - dual) / primal < opts.gap_tol {
            return Ok((feasible, sweep));
        }
    }
    Err(Error::NoConvergence(format!(
        "dual ascent did not reach the gap tolerance in {} sweeps",
        opts.max_iterations
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{unit_cube_space, Metric};

    fn two_points() -> FiniteMetricMeasureSpace {
        FiniteMetricMeasureSpace::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.5, 0.5],
            Metric::Euclidean,
            0.25,
            1.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let space = unit_cube_space(1, 3).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            let r = hajlasz_norm(&space, &[2.0; 8], 1.0, p).unwrap();
            assert_eq!(r.value, 0.0);
            assert!(r.certificate.g.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn two_point_sup_norm() {
        let r = hajlasz_norm(&two_points(), &[0.0, 2.0], 1.0, f64::INFINITY).unwrap();
        assert_eq!(r.certificate.g, vec![1.0, 1.0]);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn two_point_finite_p_matches_the_pair_bound() {
        for p in [1.0, 1.5, 2.0, 4.0] {
            let r = hajlasz_norm(&two_points(), &[0.0, 2.0], 1.0, p).unwrap();
            assert!(r.max_violation <= 0.0);
            assert!((r.value - r.lower_bound).abs() <= 1e-6 * r.value, "{p}: {r:?}");
        }
    }

    #[test]
    fn linear_function_on_a_grid() {
        let space = unit_cube_space(1, 4).unwrap();
        let f: Vec<f64> = space.points().map(|x| x[0]).collect();
        for p in [1.0, 2.0, 3.0] {
            let r = hajlasz_norm(&space, &f, 1.0, p).unwrap();
            assert_eq!(r.max_violation, 0.0);
            assert!(r.value >= r.lower_bound * (1.0 - 1e-12));
            // g = 1/2 is feasible with norm 1/2.
            assert!(r.value <= 0.5 * (1.0 + 1e-6), "{p}: {}", r.value);
        }
    }

    #[test]
    fn sub_unit_p_is_unsupported() {
        let err = hajlasz_norm(&two_points(), &[0.0, 1.0], 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn budget_is_enforced() {
        let space = unit_cube_space(1, 4).unwrap();
        let opts = HajlaszOptions {
            budget: 8,
            ..Default::default()
        };
        let err = hajlasz_norm_with(&space, &[0.0; 16], 1.0, 2.0, &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }
}
