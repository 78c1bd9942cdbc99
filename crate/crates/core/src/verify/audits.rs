use std::collections::BTreeMap;

use rayon::prelude::*;

use super::random::{random_edge_sequence, random_lipschitz, random_noise, rng_for};
use super::{band, spread, AuditName, Cell, CellStatus, Comparison, ExperimentConfig, ExperimentReport, Verdict};
use crate::calculus::{discrete_derivative, poisson_extension, t_n};
use crate::error::{Error, Result};
use crate::filling::{build_filling, build_nested_filling, Filling, NestedFilling};
use crate::norms::{
    admissibility, fn_norm, lp_norm, nonhom_norm, triebel_seq_norm, LevelWindow, NormVariant,
    SmoothnessParams, SpaceKind, Theorem,
};
use crate::space::{default_porosity_grid, porosity_scan, FiniteMetricMeasureSpace, PorosityScan, SubsetMask};
use crate::trace::{
    extend_besov, extend_sobolev_with, extend_triebel_with, extension, nonhom_extend,
    nonhom_extend_with, nonhom_extension, nonhom_restriction, nonhom_trace, nonhom_trace_with,
    restriction, trace_besov, trace_triebel_with,
};

const WIDENING: f64 = 2.0;

fn stream(tag: u64, n: i32) -> u64 {
    (tag << 32) | u64::from(n as u32)
}

fn build_space(cfg: &ExperimentConfig) -> Result<FiniteMetricMeasureSpace> {
    Ok(cfg.space.build()?.0)
}

fn build_pair(cfg: &ExperimentConfig) -> Result<(FiniteMetricMeasureSpace, SubsetMask)> {
    let (space, mask) = cfg.space.build()?;
    let mask = mask.ok_or_else(|| Error::invalid("this audit needs a space with a subset F"))?;
    Ok((space, mask))
}

fn first_last<T: Copy>(v: &[T]) -> Option<(T, T)> {
    (v.len() >= 2).then(|| (v[0], v[v.len() - 1]))
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fmax(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn as_nonhom(params: SmoothnessParams) -> Result<SmoothnessParams> {
    let kind = match params.kind {
        SpaceKind::Besov | SpaceKind::NonhomBesov => SpaceKind::NonhomBesov,
        SpaceKind::Triebel | SpaceKind::NonhomTriebel => SpaceKind::NonhomTriebel,
        SpaceKind::Hajlasz => {
            return Err(Error::invalid("this audit needs a Besov or Triebel–Lizorkin kind"))
        }
    };
    Ok(params.with_kind(kind))
}

fn kind_name(kind: SpaceKind) -> &'static str {
    match kind {
        SpaceKind::Besov => "besov",
        SpaceKind::Triebel => "triebel",
        SpaceKind::Hajlasz => "hajlasz",
        SpaceKind::NonhomBesov => "nonhom_besov",
        SpaceKind::NonhomTriebel => "nonhom_triebel",
    }
}

fn params_label(params: &SmoothnessParams) -> String {
    format!("{} s={} p={} q={}", kind_name(params.kind), params.s, params.p, params.q)
}

/// `F`-supported sequences have a `q`-independent Triebel–Lizorkin norm on
/// porous subsets while generic sequences do not.
pub fn audit_porosity_qindependence(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.require_resolutions()?;
    let (space, mask) = build_pair(config)?;
    let params = config
        .first_params(SmoothnessParams::triebel(0.5, 2.0, 2.0)?)
        .with_kind(SpaceKind::Triebel);
    params.validate()?;
    let q_list = if config.q_list.is_empty() {
        vec![0.8, 1.0, 2.0, f64::INFINITY]
    } else {
        config.q_list.clone()
    };
    let mut report = ExperimentReport::new(AuditName::PorosityQindependence, config);

    let scan = porosity_scan(&space, &mask, &default_porosity_grid())?;
    let c = scan.largest_c.unwrap_or(0.0);
    let mut cell = Cell::measured("porosity", None)
        .metric("largest_c", c)
        .metric("balls_tested", scan.balls_tested as f64);
    if scan.largest_c.is_none() {
        cell = cell.with_status(
            CellStatus::SkippedByGate,
            Some("F is not porous for any constant of the grid 1/2..1/64".into()),
        );
    }
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "porosity_constant",
        c,
        Comparison::GreaterEq,
        0.125,
        "largest porosity constant found on the grid 1/2..1/64",
    ));
    if scan.largest_c.is_none() {
        return Ok(report);
    }

    let mut upper: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &n in &config.resolutions {
        let nested = build_nested_filling(&space, &mask, config.n_min, n)?;
        let ambient = nested.ambient();
        let flags = nested.embedded_edges();
        let window = LevelWindow::full(ambient);
        for (label, support, tag) in [("ef_support", Some(&flags[..]), 1), ("full_support", None, 2)] {
            let mut rng = rng_for(config.seed, stream(tag, n));
            let seqs: Vec<Vec<f64>> = (0..config.trials)
                .map(|_| random_edge_sequence(ambient, params.s, support, &mut rng))
                .collect();
            let ratios = seqs
                .par_iter()
                .map(|u| {
                    let norms = q_list
                        .iter()
                        .map(|&q| {
                            triebel_seq_norm(ambient, u, &params.with_q(q), NormVariant::Indicator, window)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(band(norms).map_or(1.0, |(lo, hi)| if hi == 0.0 { 1.0 } else { hi / lo }))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (lo, hi) = band(ratios).unwrap_or((1.0, 1.0));
            upper.entry(label).or_default().push(hi);
            report.cells.push(
                Cell::measured(label, Some(n))
                    .metric("band_lo", lo)
                    .metric("band_hi", hi)
                    .metric("trials", config.trials as f64),
            );
        }
    }
    if let Some((a, b)) = first_last(&upper["ef_support"]) {
        report.verdicts.push(Verdict::new(
            "ef_support_stable",
            b / a,
            Comparison::Less,
            WIDENING,
            "upper end of the max_q/min_q band on E^F sequences, finest over coarsest",
        ));
    }
    if let Some((a, b)) = first_last(&upper["full_support"]) {
        report.verdicts.push(Verdict::new(
            "full_support_widens",
            b / a,
            Comparison::Greater,
            WIDENING,
            "upper end of the max_q/min_q band on full-support sequences, finest over coarsest",
        ));
    }
    Ok(report)
}

/// The non-homogeneous norm is comparable with `‖f‖_{L^p}` plus the
/// homogeneous norm.
pub fn audit_prop52(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.require_resolutions()?;
    let space = build_space(config)?;
    let params = as_nonhom(config.first_params(SmoothnessParams::new(0.5, 2.0, 2.0, SpaceKind::NonhomBesov)?))?;
    params.validate()?;
    let hom = params.with_kind(params.kind.homogeneous());
    let centers: Vec<usize> = (0..space.len()).collect();
    let mut rng = rng_for(config.seed, stream(3, 0));
    let functions: Vec<Vec<f64>> = (0..config.trials)
        .map(|_| random_lipschitz(&space, &centers, &mut rng))
        .collect();
    let mut report = ExperimentReport::new(AuditName::Prop52, config);
    let mut widths = Vec::new();
    for &n in &config.resolutions {
        let filling = build_filling(&space, config.n_min, n)?;
        let window = LevelWindow::full(&filling);
        let ratios = functions
            .par_iter()
            .map(|f| {
                let total = nonhom_norm(&filling, f, &params, NormVariant::Indicator, window)?;
                let lp = lp_norm(&space, f, params.p);
                let h = fn_norm(&filling, f, &hom, NormVariant::Indicator, window)?;
                Ok(ratio(total, lp + h))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (lo, hi) = band(ratios).unwrap_or((1.0, 1.0));
        let width = hi / lo;
        widths.push(width);
        report.cells.push(
            Cell::measured("nonhom_over_lp_plus_hom", Some(n))
                .metric("band_lo", lo)
                .metric("band_hi", hi)
                .metric("width", width),
        );
    }
    report.verdicts.push(Verdict::new(
        "band_within_4",
        fmax(widths.iter().copied()),
        Comparison::LessEq,
        4.0,
        "largest hi/lo of the ratio band over resolutions",
    ));
    if let Some((a, b)) = first_last(&widths) {
        report.verdicts.push(Verdict::new(
            "band_stable",
            spread(a, b),
            Comparison::Less,
            WIDENING,
            "growth of the band width between the coarsest and finest resolution",
        ));
    }
    Ok(report)
}

/// `C(sigma)` of the local embedding at every level-0 vertex, one entry per
/// entry of `sigmas`, and the number of vertices with a positive left side
/// and a vanishing right side.
fn local_embedding(
    filling: &Filling,
    f: &[f64],
    p: f64,
    epsilon: f64,
    sigmas: &[f64],
) -> Result<Vec<(f64, usize)>> {
    let space = filling.space();
    let pf = poisson_extension(filling, f)?;
    let du = discrete_derivative(filling, &pf)?;
    let t0 = t_n(filling, &pf, 0)?;
    let levels: Vec<(f64, Vec<f64>)> = (0..=filling.n_max())
        .map(|k| {
            let mut h = vec![0.0; space.len()];
            for e in filling.edges_at_level(k) {
                let a = du[e].abs();
                if a > 0.0 {
                    for pt in filling.edge_ball_members(e)? {
                        h[pt] += a;
                    }
                }
            }
            Ok((2f64.powf(f64::from(k) * epsilon * p), h))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![(0.0f64, 0usize); sigmas.len()];
    for x in filling.vertices_at_level(0) {
        let members = filling.ball_members(x)?;
        let lhs = members.iter().map(|&i| space.weight(i) * f[i].abs()).sum::<f64>().powf(p);
        let base: f64 = members.iter().map(|&i| space.weight(i) * t0[i].abs().powf(p)).sum();
        let mu = filling.vertex_mass(x);
        let v = filling.vertex(x);
        for (slot, &sigma) in out.iter_mut().zip(sigmas) {
            let ball = space.ball(v.center, sigma * v.radius);
            let tail: f64 = levels
                .iter()
                .map(|(w, h)| w * ball.iter().map(|&i| space.weight(i) * h[i].powf(p)).sum::<f64>())
                .sum();
            let rhs = mu.powf(p - 1.0) * (base + tail);
            if lhs > 0.0 {
                if rhs > 0.0 {
                    slot.0 = slot.0.max(lhs / rhs);
                } else {
                    slot.0 = f64::INFINITY;
                    slot.1 += 1;
                }
            }
        }
    }
    Ok(out)
}

/// The local `L^1` embedding for `p < 1` with `epsilon = Q(1/p - 1)`.
pub fn audit_lemma53(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.require_resolutions()?;
    let space = build_space(config)?;
    let p = config.params.first().map_or(0.8, |x| x.p);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Inadmissible(format!(
            "the local L^1 embedding is stated for 0 < p < 1, got p = {p}"
        )));
    }
    if config.n_min > 0 {
        return Err(Error::invalid("the local L^1 embedding needs level 0 (n_min <= 0)"));
    }
    let epsilon = space.declared_q() * (1.0 / p - 1.0);
    let sigmas = if config.sigma_grid.is_empty() {
        vec![1.0, 2.0, 4.0, 8.0]
    } else {
        config.sigma_grid.clone()
    };
    if sigmas.iter().any(|&s| !(s >= 1.0 && s.is_finite())) {
        return Err(Error::invalid("sigma_grid entries must be finite and >= 1"));
    }
    let centers: Vec<usize> = (0..space.len()).collect();
    let mut rng = rng_for(config.seed, stream(4, 0));
    let mut functions: Vec<Vec<f64>> = (0..config.trials)
        .map(|_| random_lipschitz(&space, &centers, &mut rng))
        .collect();
    functions.push(vec![1.0; space.len()]);

    let mut report = ExperimentReport::new(AuditName::Lemma53, config);
    // constants[r][j] = C(sigma_j) at resolution r, failures likewise.
    let mut constants = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.resolutions {
        let filling = build_filling(&space, config.n_min, n)?;
        let per_f = functions
            .par_iter()
            .map(|f| local_embedding(&filling, f, p, epsilon, &sigmas))
            .collect::<Result<Vec<_>>>()?;
        let c: Vec<f64> = (0..sigmas.len()).map(|j| fmax(per_f.iter().map(|r| r[j].0))).collect();
        let bad: Vec<usize> = (0..sigmas.len()).map(|j| per_f.iter().map(|r| r[j].1).sum()).collect();
        for (j, &sigma) in sigmas.iter().enumerate() {
            report.cells.push(
                Cell::measured(format!("sigma={sigma}"), Some(n))
                    .metric("implied_constant", c[j])
                    .metric("violations", bad[j] as f64)
                    .metric("vertices", filling.vertices_at_level(0).len() as f64),
            );
        }
        let smallest = c.iter().position(|v| v.is_finite()).map_or(f64::INFINITY, |j| sigmas[j]);
        report
            .cells
            .push(Cell::measured("smallest_sigma", Some(n)).metric("sigma", smallest));
        constants.push(c);
        failures.push(bad);
    }
    let working = (0..sigmas.len()).find(|&j| constants.iter().all(|c| c[j].is_finite()));
    let j = working.unwrap_or(sigmas.len() - 1);
    report.verdicts.push(Verdict::new(
        "holds_at_every_vertex",
        failures.iter().map(|b| b[j] as f64).sum(),
        Comparison::LessEq,
        0.0,
        format!(
            "level-0 vertices with a positive left side and a zero right side at sigma = {}",
            sigmas[j]
        ),
    ));
    let cs: Vec<f64> = constants.iter().map(|c| c[j]).collect();
    if let Some((a, b)) = first_last(&cs) {
        report.verdicts.push(Verdict::new(
            "implied_constant_stable",
            spread(a, b),
            Comparison::Less,
            WIDENING,
            format!("growth of C(sigma = {}) between the coarsest and finest resolution", sigmas[j]),
        ));
    }
    Ok(report)
}

/// `d_k = ‖f - T_k(Pf)‖` in the non-homogeneous norm for `k = 0..=n_max`.
fn density_curve(filling: &Filling, f: &[f64], params: &SmoothnessParams) -> Result<Vec<f64>> {
    let pf = poisson_extension(filling, f)?;
    let window = LevelWindow::full(filling);
    (0..=filling.n_max())
        .map(|k| {
            let tk = t_n(filling, &pf, k)?;
            let diff: Vec<f64> = f.iter().zip(&tk).map(|(a, b)| a - b).collect();
            nonhom_norm(filling, &diff, params, NormVariant::Indicator, window)
        })
        .collect()
}

/// Approximation by the smoothings `T_n(Pf)` in the non-homogeneous norm.
/// The decay verdict reads the finest resolution, which carries the longest
/// sequence `d_k`; coarser runs are recorded.
pub fn audit_density54(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.require_resolutions()?;
    let space = build_space(config)?;
    let params = as_nonhom(config.first_params(SmoothnessParams::new(0.5, 2.0, 2.0, SpaceKind::NonhomBesov)?))?;
    params.validate()?;
    if !params.q.is_finite() {
        return Err(Error::invalid("density of the smoothings needs q < inf"));
    }
    if config.n_min > 0 {
        return Err(Error::invalid("density of the smoothings needs level 0 (n_min <= 0)"));
    }
    if let Some(n) = config.resolutions.iter().find(|&&n| n < 2) {
        return Err(Error::invalid(format!("resolution {n} is below 2")));
    }
    let centers: Vec<usize> = (0..space.len()).collect();
    let mut rng = rng_for(config.seed, stream(5, 0));
    let lipschitz: Vec<Vec<f64>> = (0..config.trials)
        .map(|_| random_lipschitz(&space, &centers, &mut rng))
        .collect();
    let mut rng = rng_for(config.seed, stream(6, 0));
    let noise: Vec<Vec<f64>> = (0..config.trials.div_ceil(5)).map(|_| random_noise(&space, &mut rng)).collect();
    let constant = vec![vec![1.0; space.len()]];

    let mut report = ExperimentReport::new(AuditName::Density54, config);
    let finest = *config.resolutions.iter().max().unwrap_or(&0);
    let mut finest_decay = f64::NAN;
    let mut worst_constant = 0.0f64;
    for &n in &config.resolutions {
        let filling = build_filling(&space, config.n_min, n)?;
        for (label, group) in [("lipschitz", &lipschitz), ("noise", &noise), ("constant", &constant)] {
            let curves = group
                .par_iter()
                .map(|f| density_curve(&filling, f, &params))
                .collect::<Result<Vec<_>>>()?;
            let final_k = (n - 2) as usize;
            let decay = fmax(curves.iter().map(|d| ratio(d[final_k], d[0])));
            let increases: usize = curves
                .iter()
                .map(|d| d.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-9) + 1e-14).count())
                .sum();
            let largest = fmax(curves.iter().flat_map(|d| d.iter().copied()));
            let mut cell = Cell::measured(label, Some(n))
                .metric("tail_increases", increases as f64)
                .metric("max_value", largest);
            match label {
                "lipschitz" => {
                    cell = cell.metric("max_decay", decay);
                    if n < finest {
                        cell = cell.with_status(CellStatus::Recorded, None);
                    } else {
                        finest_decay = decay;
                    }
                }
                "constant" => worst_constant = worst_constant.max(largest),
                _ => cell = cell.metric("max_decay", decay).with_status(CellStatus::Recorded, None),
            }
            report.cells.push(cell);
        }
    }
    report.verdicts.push(Verdict::new(
        "lipschitz_decay",
        finest_decay,
        Comparison::LessEq,
        0.2,
        "largest d(n_max - 2) / d(0) over Lipschitz inputs at the finest resolution",
    ));
    report.verdicts.push(Verdict::new(
        "constant_is_fixed",
        worst_constant,
        Comparison::LessEq,
        1e-12,
        "largest d(k) of a constant function",
    ));
    Ok(report)
}

/// Indicator, mass and substitute weightings of the Besov sequence norm.
pub fn audit_equiv_26(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.require_resolutions()?;
    let space = build_space(config)?;
    let params = config.first_params(SmoothnessParams::besov(0.5, 2.0, 2.0)?);
    let params = params.with_kind(SpaceKind::Besov);
    params.validate()?;
    let mut report = ExperimentReport::new(AuditName::Equiv26, config);
    let mut widths: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &n in &config.resolutions {
        let filling = build_filling(&space, config.n_min, n)?;
        let window = LevelWindow::full(&filling);
        let mut rng = rng_for(config.seed, stream(7, n));
        let seqs: Vec<Vec<f64>> = (0..config.trials)
            .map(|_| random_edge_sequence(&filling, params.s, None, &mut rng))
            .collect();
        let norm = |u: &[f64], v| crate::norms::besov_seq_norm(&filling, u, &params, v, window);
        let pairs = seqs
            .par_iter()
            .map(|u| {
                let ind = norm(u, NormVariant::Indicator)?;
                let mass = norm(u, NormVariant::Mass)?;
                let sub = norm(u, NormVariant::Substitute)?;
                Ok((ratio(ind, mass), ratio(sub, ind)))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        for (label, values) in [
            ("indicator_over_mass", pairs.iter().map(|p| p.0).collect::<Vec<_>>()),
            ("substitute_over_indicator", pairs.iter().map(|p| p.1).collect()),
        ] {
            let (lo, hi) = band(values).unwrap_or((1.0, 1.0));
            widths.entry(label).or_default().push(hi / lo);
            report.cells.push(
                Cell::measured(label, Some(n))
                    .metric("band_lo", lo)
                    .metric("band_hi", hi)
                    .metric("width", hi / lo),
            );
        }
    }
    for (label, w) in &widths {
        if let Some((a, b)) = first_last(w) {
            report.verdicts.push(Verdict::new(
                format!("{label}_stable"),
                b / a,
                Comparison::Less,
                WIDENING,
                "band width at the finest resolution over the coarsest",
            ));
        }
    }
    Ok(report)
}

fn default_theorem(kind: SpaceKind) -> Theorem {
    match kind {
        SpaceKind::Besov | SpaceKind::NonhomBesov => Theorem::Thm1,
        SpaceKind::Triebel | SpaceKind::NonhomTriebel => Theorem::Thm2,
        SpaceKind::Hajlasz => Theorem::Thm3,
    }
}

struct Run {
    trace_ratio: Option<f64>,
    ext_ratio: f64,
    round_trip: f64,
    certificate_violation: Option<f64>,
}

fn is_nonhom(kind: SpaceKind) -> bool {
    matches!(kind, SpaceKind::NonhomBesov | SpaceKind::NonhomTriebel)
}

/// `max_F |Res(Ext f) - f|` with the operators matching `kind`.
fn round_trip_error(nested: &NestedFilling, ext: &[f64], f_f: &[f64], kind: SpaceKind) -> Result<f64> {
    let back = if is_nonhom(kind) {
        nonhom_restriction(nested, ext)?
    } else {
        restriction(nested, ext)?
    };
    Ok(max_abs_diff(&back, f_f))
}

fn run_theorem(
    nested: &NestedFilling,
    f: &[f64],
    params: &SmoothnessParams,
    theorem: Theorem,
    scan: Option<&PorosityScan>,
) -> Result<Run> {
    let f_f = nested.restrict(f);
    let needs_scan = || scan.ok_or_else(|| Error::invalid("missing porosity scan"));
    let (trace_ratio, ext, certificate_violation) = if theorem == Theorem::Thm3 {
        let e = extend_sobolev_with(nested, &f_f, params.p, needs_scan()?)?;
        let v = e.certificate.as_ref().map(|c| c.max_violation);
        (None, e, v)
    } else if is_nonhom(params.kind) {
        let (t, e) = match scan {
            Some(s) => (nonhom_trace_with(nested, f, params, s)?, nonhom_extend_with(nested, &f_f, params, s)?),
            None => (nonhom_trace(nested, f, params)?, nonhom_extend(nested, &f_f, params)?),
        };
        (Some(t.operator_ratio), e, None)
    } else if theorem == Theorem::Thm1 {
        let t = trace_besov(nested, f, params)?;
        (Some(t.operator_ratio), extend_besov(nested, &f_f, params)?, None)
    } else {
        let s = needs_scan()?;
        let t = trace_triebel_with(nested, f, params, s)?;
        (Some(t.operator_ratio), extend_triebel_with(nested, &f_f, params, s)?, None)
    };
    let kind = if theorem == Theorem::Thm3 { SpaceKind::Hajlasz } else { params.kind };
    Ok(Run {
        trace_ratio,
        ext_ratio: ext.operator_ratio,
        round_trip: round_trip_error(nested, &ext.extended_samples, &f_f, kind)?,
        certificate_violation,
    })
}

/// Trace and extension over a parameter grid, gated by the admissibility
/// windows and porosity.
pub fn audit_theorem_suite(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(AuditName::TheoremSuite, config);
    if config.params.is_empty() {
        return Ok(report);
    }
    config.require_resolutions()?;
    let (space, mask) = build_pair(config)?;
    let (big_q, lambda) = (space.declared_q(), mask.lambda());
    let factor = config.round_trip_factor.unwrap_or(1.0);
    let nested: Vec<NestedFilling> = config
        .resolutions
        .iter()
        .map(|&n| build_nested_filling(&space, &mask, config.n_min, n))
        .collect::<Result<_>>()?;
    let f_points = mask.indices();
    let mut rng = rng_for(config.seed, stream(8, 0));
    let functions: Vec<Vec<f64>> = (0..config.trials)
        .map(|_| random_lipschitz(&space, &f_points, &mut rng))
        .collect();
    let mut porosity: Option<PorosityScan> = None;

    for params in &config.params {
        params.validate()?;
        let inferred = default_theorem(params.kind);
        let theorem = match config.theorem {
            Some(t) if t != inferred && t != Theorem::Thm3 => {
                return Err(Error::invalid(format!(
                    "theorem {} does not apply to kind {}",
                    t.number(),
                    kind_name(params.kind)
                )))
            }
            Some(t) => t,
            None => inferred,
        };
        let label = params_label(params);
        let adm = admissibility(big_q, lambda, params, theorem);
        if !adm.admissible {
            let only_p = adm.reasons.len() == 1 && adm.reasons[0].starts_with("need p >");
            if only_p && params.p >= 0.8 * adm.p_floor {
                let kind = if theorem == Theorem::Thm3 { SpaceKind::Hajlasz } else { params.kind };
                for (nf, &n) in nested.iter().zip(&config.resolutions) {
                    let errs = functions
                        .par_iter()
                        .map(|f| {
                            let f_f = nf.restrict(f);
                            let ext = if is_nonhom(kind) {
                                nonhom_extension(nf, &f_f)?
                            } else {
                                extension(nf, &f_f)?
                            };
                            round_trip_error(nf, &ext, &f_f, kind)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    report.cells.push(
                        Cell::measured(label.clone(), Some(n))
                            .metric("round_trip_max", fmax(errs))
                            .metric("p_floor", adm.p_floor)
                            .with_status(
                                CellStatus::Recorded,
                                Some(format!("just outside the window: {}", adm.reasons.join("; "))),
                            ),
                    );
                }
            } else {
                report.cells.push(
                    Cell::measured(label, None)
                        .metric("p_floor", adm.p_floor)
                        .with_status(CellStatus::SkippedByGate, Some(adm.reasons.join("; "))),
                );
            }
            continue;
        }
        let needs_porosity = theorem != Theorem::Thm1;
        if needs_porosity && porosity.is_none() {
            porosity = Some(porosity_scan(&space, &mask, &default_porosity_grid())?);
        }
        let scan = if needs_porosity { porosity.as_ref() } else { None };
        if let Some(s) = scan {
            if s.largest_c.is_none() {
                report.cells.push(Cell::measured(label, None).with_status(
                    CellStatus::SkippedByGate,
                    Some("F is not porous for any constant of the grid 1/2..1/64".into()),
                ));
                continue;
            }
        }

        let mut runs: Vec<Vec<Run>> = Vec::new();
        for (nf, &n) in nested.iter().zip(&config.resolutions) {
            let r = functions
                .par_iter()
                .map(|f| run_theorem(nf, f, params, theorem, scan))
                .collect::<Result<Vec<Run>>>()?;
            let mut cell = Cell::measured(label.clone(), Some(n))
                .metric("round_trip_max", fmax(r.iter().map(|x| x.round_trip)))
                .metric("sigma", adm.trace_smoothness);
            if let Some((lo, hi)) = band(r.iter().filter_map(|x| x.trace_ratio)) {
                cell = cell.metric("trace_ratio_lo", lo).metric("trace_ratio_hi", hi);
            }
            if let Some((lo, hi)) = band(r.iter().map(|x| x.ext_ratio)) {
                cell = cell.metric("ext_ratio_lo", lo).metric("ext_ratio_hi", hi);
            }
            if let Some(v) = r.iter().filter_map(|x| x.certificate_violation).reduce(f64::max) {
                cell = cell.metric("certificate_violation_max", v);
            }
            report.cells.push(cell);
            runs.push(r);
        }
        if theorem == Theorem::Thm3 {
            let worst = fmax(runs.iter().flatten().filter_map(|x| x.certificate_violation));
            report.verdicts.push(Verdict::new(
                format!("certificate_feasible[{label}]"),
                worst,
                Comparison::LessEq,
                0.0,
                "largest violation of the Hajłasz inequality by the calibrated certificate",
            ));
        }
        if let Some((first, last)) = first_last(&runs.iter().collect::<Vec<_>>()) {
            let decay = fmax(first.iter().zip(last).map(|(a, b)| ratio(b.round_trip, a.round_trip)));
            report.verdicts.push(Verdict::new(
                format!("round_trip[{label}]"),
                decay,
                Comparison::LessEq,
                factor,
                "largest err(finest) / err(coarsest) of max_F |Res Ext f - f| over functions",
            ));
            let growth = fmax(first.iter().zip(last).flat_map(|(a, b)| {
                let t = match (a.trace_ratio, b.trace_ratio) {
                    (Some(x), Some(y)) => Some(spread(x, y)),
                    _ => None,
                };
                t.into_iter().chain([spread(a.ext_ratio, b.ext_ratio)])
            }));
            report.verdicts.push(Verdict::new(
                format!("ratio_stability[{label}]"),
                growth,
                Comparison::Less,
                WIDENING,
                "largest growth of a per-function operator ratio between the coarsest and finest resolution",
            ));
        }
    }
    Ok(report)
}
