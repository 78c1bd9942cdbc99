//! Acceptance criteria 1 to 10. Runs as a plain binary so that every
//! criterion prints its line; exits non-zero when any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hyperfill_core::calculus::{discrete_derivative, i_n};
use hyperfill_core::filling::{build_filling, build_nested_filling, Filling, FillingFile};
use hyperfill_core::json;
use hyperfill_core::norms::{
    admissibility, hajlasz_norm, SmoothnessParams, SpaceKind, Theorem,
};
use hyperfill_core::space::{
    ahlfors_fit, codim_regularity_check, unit_cube_space, FiniteMetricMeasureSpace, IfsPreset,
    Metric, SpaceDescriptor, SubsetDescriptor,
};
use hyperfill_core::trace::{edge_codim_band, extend_sobolev, restriction, trace_besov};
use hyperfill_core::verify::{
    audit_density54, audit_equiv_26, audit_lemma53, audit_porosity_qindependence, audit_prop52,
    audit_theorem_suite, random_lipschitz, ExperimentConfig, ExperimentReport,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Partition of unity recomputed from the tent definition.
mod oracle {
    use hyperfill_core::filling::Filling;

    pub fn phi(d: f64, r: f64) -> f64 {
        (2.0 * (1.0 - d / r)).clamp(0.0, 1.0)
    }

    /// `(x, psi_x(p))` over the level-`n` vertices whose ball holds `p`.
    pub fn psi_row(filling: &Filling, n: i32, p: usize) -> Vec<(usize, f64)> {
        let space = filling.space();
        let mut row: Vec<(usize, f64)> = filling
            .vertices_at_level(n)
            .filter(|&x| filling.contains_point(x, p))
            .map(|x| {
                let v = filling.vertex(x);
                (x, phi(space.distance(p, v.center), v.radius))
            })
            .collect();
        let total: f64 = row.iter().map(|r| r.1).sum();
        for r in &mut row {
            r.1 /= total;
        }
        row
    }

    pub fn t(filling: &Filling, v: &[f64], n: i32) -> Vec<f64> {
        (0..filling.space().len())
            .map(|p| psi_row(filling, n, p).iter().map(|&(x, w)| v[x] * w).sum())
            .collect()
    }
}

/// `min sum_i w_i g_i` subject to `g_i + g_j >= |f_i - f_j| / d_ij^s`.
fn lp_hajlasz(space: &FiniteMetricMeasureSpace, f: &[f64], s: f64) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let g: Vec<_> = space
        .weights()
        .iter()
        .map(|&w| lp.add_var(w, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let c = (f[i] - f[j]).abs() / space.distance(i, j).powf(s);
            if c > 0.0 {
                lp.add_constraint(&[(g[i], 1.0), (g[j], 1.0)], ComparisonOp::Ge, c);
            }
        }
    }
    lp.solve().expect("oracle LP").objective()
}

fn interval(level: u32) -> FiniteMetricMeasureSpace {
    unit_cube_space(1, level).unwrap()
}

fn cantor(depth: u32) -> FiniteMetricMeasureSpace {
    SpaceDescriptor::Ifs {
        preset: Some(IfsPreset::Cantor),
        maps: None,
        depth,
        declared_q: None,
        metric: Metric::Euclidean,
        subset: None,
    }
    .build()
    .unwrap()
    .0
}

fn interval_cantor_small() -> SpaceDescriptor {
    SpaceDescriptor::Cube {
        dim: 1,
        level: 6,
        metric: Metric::Euclidean,
        subset: Some(SubsetDescriptor::Ifs {
            preset: Some(IfsPreset::Cantor),
            maps: None,
            depth: 3,
            lambda: None,
        }),
    }
}

fn verdicts_line(report: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        match report.verdict(name) {
            Some(v) => {
                ok &= v.passed;
                parts.push(format!("{name} = {:.4} ({})", v.measured, if v.passed { "ok" } else { "fails" }));
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    (ok, parts.join(", "))
}

fn telescoping_error(filling: &Filling, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = filling.level_range();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v: Vec<f64> = (0..filling.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dv = discrete_derivative(filling, &v).unwrap();
        let ts: Vec<Vec<f64>> = (lo..=hi).map(|n| oracle::t(filling, &v, n)).collect();
        for n in lo..hi {
            let lhs = i_n(filling, &dv, n).unwrap();
            let k = (n - lo) as usize;
            for p in 0..lhs.len() {
                worst = worst.max((lhs[p] - (ts[k + 1][p] - ts[k][p])).abs() / norm);
            }
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let a = telescoping_error(&build_filling(&interval(8), 0, 6).unwrap(), 100, 11);
    let b = telescoping_error(&build_filling(&cantor(8), 0, 10).unwrap(), 100, 12);
    Outcome::new(
        a <= 1e-12 && b <= 1e-12,
        format!("max relative error: interval {a:.2e}, Cantor {b:.2e}"),
    )
}

/// Largest `|psi_row sum - 1|` and largest `Lip(psi_x) 2^{-|x|}` over pairs in
/// `2B(x)`, from the oracle partition.
fn partition_measurements(filling: &Filling) -> (f64, f64) {
    let space = filling.space();
    let (lo, hi) = filling.level_range();
    let mut sum_err = 0.0f64;
    let mut lip = 0.0f64;
    for n in lo..=hi {
        let rows: Vec<Vec<(usize, f64)>> = (0..space.len()).map(|p| oracle::psi_row(filling, n, p)).collect();
        for row in &rows {
            sum_err = sum_err.max((row.iter().map(|r| r.1).sum::<f64>() - 1.0).abs());
        }
        let value = |x: usize, p: usize| rows[p].iter().find(|r| r.0 == x).map_or(0.0, |r| r.1);
        for x in filling.vertices_at_level(n) {
            let v = filling.vertex(x);
            let near: Vec<usize> = (0..space.len())
                .filter(|&p| space.distance(p, v.center) < 2.0 * v.radius)
                .collect();
            for (i, &a) in near.iter().enumerate() {
                for &b in &near[i + 1..] {
                    let q = (value(x, a) - value(x, b)).abs() / space.distance(a, b);
                    lip = lip.max(q * 2f64.powi(-n));
                }
            }
        }
    }
    (sum_err, lip)
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, filling) in [
        ("interval", build_filling(&interval(8), 0, 6).unwrap()),
        ("Cantor", build_filling(&cantor(8), 0, 10).unwrap()),
    ] {
        let (sum_err, lip) = partition_measurements(&filling);
        let k = filling.partition().unwrap().lipschitz_bound;
        ok &= sum_err <= 1e-12 && lip <= k;
        parts.push(format!("{name}: sum error {sum_err:.1e}, Lip/2^n {lip:.3} <= K {k:.3}"));
    }
    Outcome::new(ok, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        SpaceDescriptor::Cube {
            dim: 1,
            level: 10,
            metric: Metric::Euclidean,
            subset: None,
        },
        vec![6, 8],
    );
    cfg.trials = 100;
    cfg.seed = 3;
    cfg.params = vec![SmoothnessParams::besov(0.5, 2.0, 2.0).unwrap()];
    let report = audit_equiv_26(&cfg).unwrap();
    let (ok, line) = verdicts_line(&report, &["indicator_over_mass_stable"]);
    Outcome::new(ok, line)
}

fn criterion_4() -> Outcome {
    let mut cfg = ExperimentConfig::new(SpaceDescriptor::interval_cantor(), vec![6, 8]);
    cfg.trials = 50;
    cfg.seed = 4;
    cfg.params = vec![SmoothnessParams::triebel(0.5, 2.0, 2.0).unwrap()];
    cfg.q_list = vec![0.8, 1.0, 2.0, f64::INFINITY];
    let report = audit_porosity_qindependence(&cfg).unwrap();
    let (ok, line) = verdicts_line(
        &report,
        &["porosity_constant", "ef_support_stable", "full_support_widens"],
    );
    Outcome::new(ok, line)
}

fn criterion_5() -> Outcome {
    let mut cfg = ExperimentConfig::new(SpaceDescriptor::interval_cantor(), vec![6, 8]);
    cfg.trials = 20;
    cfg.seed = 5;
    cfg.round_trip_factor = Some(0.5);
    cfg.params = [SpaceKind::Besov, SpaceKind::Triebel, SpaceKind::NonhomBesov, SpaceKind::NonhomTriebel]
        .into_iter()
        .map(|k| SmoothnessParams::new(0.8, 4.0, 2.0, k).unwrap())
        .collect();
    let report = audit_theorem_suite(&cfg).unwrap();
    let names: Vec<String> = report.verdicts.iter().map(|v| v.name.clone()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let (mut ok, mut line) = verdicts_line(&report, &refs);
    ok &= report.verdicts.len() == 2 * cfg.params.len();

    let pass = admissibility(2.0, 1.0, &SmoothnessParams::besov(0.5, 4.0, 2.0).unwrap(), Theorem::Thm1);
    let reject = admissibility(2.0, 1.0, &SmoothnessParams::besov(0.5, 2.0, 2.0).unwrap(), Theorem::Thm1);
    let sigma = 0.5 - (2.0 - 1.0) / 4.0;
    let gate_ok = pass.admissible && pass.trace_smoothness == sigma && !reject.admissible;
    ok &= gate_ok;
    line += &format!(
        "; gate (Q=2, lambda=1, s=0.5): p=4 sigma {} , p=2 admissible {}",
        pass.trace_smoothness, reject.admissible
    );
    Outcome::new(ok, line)
}

fn criterion_6() -> Outcome {
    let (space, mask) = SpaceDescriptor::interval_cantor().build().unwrap();
    let nested = build_nested_filling(&space, &mask.unwrap(), 0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = random_lipschitz(&space, nested.f_points(), &mut rng);
    let ext = extend_sobolev(&nested, &nested.restrict(&f), 2.0).unwrap();
    let g = &ext.hajlasz_certificate.as_ref().unwrap().g;
    let cert = ext.certificate.as_ref().unwrap();
    let e = &ext.extended_samples;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            worst = worst.max((e[i] - e[j]).abs() - space.distance(i, j) * (g[i] + g[j]));
        }
    }
    let feasible = worst <= 0.0;

    let (small, small_mask) = interval_cantor_small().build().unwrap();
    let small_nested = build_nested_filling(&small, &small_mask.unwrap(), 0, 4).unwrap();
    let f = random_lipschitz(&small, small_nested.f_points(), &mut rng);
    let ext1 = extend_sobolev(&small_nested, &small_nested.restrict(&f), 1.0).unwrap();
    let g1 = &ext1.hajlasz_certificate.as_ref().unwrap().g;
    let g1_l1: f64 = g1.iter().zip(small.weights()).map(|(g, w)| g * w).sum();
    let lp = lp_hajlasz(&small, &ext1.extended_samples, 1.0);
    let bounded = lp <= g1_l1 * (1.0 + 1e-6);
    Outcome::new(
        feasible && bounded && small.len() == 64,
        format!(
            "p=2: {} pairs, worst slack {worst:.2e}, K {:.3}; p=1 on {} points: LP {lp:.6} <= ||g||_1 {g1_l1:.6}",
            space.len() * (space.len() - 1) / 2,
            cert.constant,
            small.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut xs: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        let space = FiniteMetricMeasureSpace::new(
            xs.iter().map(|&x| vec![x]).collect(),
            vec![1.0 / 16.0; 16],
            Metric::Euclidean,
            1e-3,
            1.0,
            None,
        )
        .unwrap();
        let f: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let solver = hajlasz_norm(&space, &f, 1.0, 1.0).unwrap().value;
        let lp = lp_hajlasz(&space, &f, 1.0);
        worst = worst.max((solver - lp).abs() / lp.abs().max(f64::MIN_POSITIVE));
    }
    Outcome::new(worst <= 1e-6, format!("max relative gap {worst:.2e} over 10 instances"))
}

fn interval_config(trials: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        SpaceDescriptor::Cube {
            dim: 1,
            level: 10,
            metric: Metric::Euclidean,
            subset: None,
        },
        vec![6, 8],
    );
    cfg.trials = trials;
    cfg.seed = seed;
    cfg
}

fn criterion_8() -> Outcome {
    let mut cfg = interval_config(20, 8);
    cfg.params = vec![SmoothnessParams::new(0.5, 2.0, 2.0, SpaceKind::NonhomBesov).unwrap()];
    let prop = audit_prop52(&cfg).unwrap();
    let (a, la) = verdicts_line(&prop, &["band_within_4", "band_stable"]);

    let mut cfg = interval_config(20, 9);
    cfg.params = vec![SmoothnessParams::new(0.5, 0.8, 0.8, SpaceKind::NonhomBesov).unwrap()];
    let lemma = audit_lemma53(&cfg).unwrap();
    let (b, lb) = verdicts_line(&lemma, &["holds_at_every_vertex", "implied_constant_stable"]);

    let mut cfg = interval_config(20, 10);
    cfg.params = vec![SmoothnessParams::new(0.5, 2.0, 2.0, SpaceKind::NonhomBesov).unwrap()];
    let density = audit_density54(&cfg).unwrap();
    let (c, lc) = verdicts_line(&density, &["lipschitz_decay", "constant_is_fixed"]);
    Outcome::new(a && b && c, format!("{la}; {lb}; {lc}"))
}

fn criterion_9() -> Outcome {
    let square = unit_cube_space(2, 6).unwrap();
    let cube_q = ahlfors_fit(&square, &[1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0]).unwrap().q_hat;
    let triadic: Vec<f64> = (1..=6).map(|k| 3f64.powi(-k)).collect();
    let cantor_q = ahlfors_fit(&cantor(8), &triadic).unwrap().q_hat;
    let lambda = 2f64.ln() / 3f64.ln();

    let (space, mask) = SpaceDescriptor::interval_cantor().build().unwrap();
    let mask = mask.unwrap();
    let codim = codim_regularity_check(&space, &mask, 1.0 - lambda, &triadic[..5]).unwrap();
    let nested = build_nested_filling(&space, &mask, 0, 8).unwrap();
    let edges = edge_codim_band(&nested).unwrap();

    let checks = [
        (cube_q - 2.0).abs() <= 0.1,
        (cantor_q - lambda).abs() <= 0.05,
        codim.width() <= 4.0,
        edges.width() <= 4.0,
    ];
    Outcome::new(
        checks.iter().all(|&c| c),
        format!(
            "Q cube {cube_q:.4}, Q Cantor {cantor_q:.4} (target {lambda:.4}), codim band width {:.3}, \
             edge band [{:.3}, {:.3}] width {:.3} over {} edges",
            codim.width(),
            edges.lo,
            edges.hi,
            edges.width(),
            edges.edges
        ),
    )
}

fn pipeline_json() -> Vec<String> {
    let desc = SpaceDescriptor::interval_cantor();
    let (space, mask) = desc.build().unwrap();
    let nested = build_nested_filling(&space, &mask.unwrap(), 0, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let f = random_lipschitz(&space, nested.f_points(), &mut rng);
    let params = SmoothnessParams::besov(0.8, 4.0, 2.0).unwrap();
    let trace = trace_besov(&nested, &f, &params).unwrap();
    let round = restriction(&nested, &f).unwrap();
    let sobolev = extend_sobolev(&nested, &nested.restrict(&f), 2.0).unwrap();
    let mut cfg = ExperimentConfig::new(desc.clone(), vec![5, 6]);
    cfg.trials = 5;
    cfg.seed = 10;
    cfg.params = vec![params];
    let suite = audit_theorem_suite(&cfg).unwrap();
    let equiv = audit_equiv_26(&cfg.clone()).unwrap();
    vec![
        json::to_string(&FillingFile::from_nested(desc, &nested)).unwrap(),
        json::to_string(&trace).unwrap(),
        json::to_string(&round).unwrap(),
        json::to_string(&sobolev).unwrap(),
        json::to_string(&suite).unwrap(),
        json::to_string(&equiv).unwrap(),
    ]
}

fn criterion_10() -> Outcome {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(pipeline_json)
    };
    let first = run(1);
    let second = run(4);
    let third = run(4);
    let same = first == second && second == third;
    let bytes: usize = first.iter().map(String::len).sum();
    Outcome::new(
        same,
        format!("{} artifacts, {bytes} bytes, identical across 3 runs (1 and 4 threads)", first.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("telescoping identity", criterion_1),
        ("partition of unity", criterion_2),
        ("norm-variant equivalence", criterion_3),
        ("porosity q-independence", criterion_4),
        ("trace-extension round trip", criterion_5),
        ("Sobolev extension certificate", criterion_6),
        ("Hajlasz solver vs LP oracle", criterion_7),
        ("non-homogeneous suite", criterion_8),
        ("geometry audits", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !filter.is_empty() && !filter.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {number:>2} {}: {name} [{:.1}s] {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
