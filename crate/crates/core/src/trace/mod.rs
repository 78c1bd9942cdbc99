//! Trace and extension operators between a space `Z` and a closed subset `F`
//! carried by a nested filling.
//!
//! `Res f = ∫^F (d(Pf)|_{E^F}) + T^F_0((Pf)|_{X^F})(xi_0)` and
//! `Ext f = ∫^Z u + T^Z_0(v)(xi_0)` where `u`, `v` are `d(P^F f)` and
//! `P^F f` extended by zero off `E^F`, `X^F`. The non-homogeneous operators
//! drop the negative levels and keep `T_0` as a function.
//!
//! Finite clouds have no null sets, so identities that hold almost
//! everywhere on `F` are checked at every trace point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{discrete_derivative, poisson_extension, t_n, telescoping_integral};
use crate::error::{Error, Result};
use crate::filling::{Filling, NestedFilling};
use crate::norms::{
    admissibility, besov_fn_norm, besov_seq_norm, lp_norm, nonhom_norm_parts, triebel_fn_norm,
    triebel_seq_norm, HajlaszGradient, LevelWindow, NonhomParts, NormVariant, SmoothnessParams,
    SpaceKind, Theorem,
};
use crate::space::{default_porosity_grid, porosity_scan, PorosityScan};

/// Largest number of point pairs on which the Sobolev certificate is checked.
pub const MAX_CERTIFICATE_PAIRS: usize = 1_000_000;
const CERTIFICATE_SEED: u64 = 0x5eed_cafe;

/// Both sides of the comparison of the restricted derivative in the trace
/// scale on `E^F` and in the source scale on `E^Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedNorms {
    pub trace_side: f64,
    pub ambient_side: f64,
}

/// `J^s_{p,q}` against `J^s_{p,p}` of a sequence supported on `E^F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QIndependence {
    pub q_norm: f64,
    pub p_norm: f64,
    pub ratio: f64,
}

/// Band of `nu(B^F(e)) 2^{-|e|(Q-lambda)} / mu(B^Z(e))` over trace edges of
/// nonnegative level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCodimBand {
    pub lo: f64,
    pub hi: f64,
    pub edges: usize,
}

impl EdgeCodimBand {
    pub fn width(&self) -> f64 {
        self.hi / self.lo
    }
}

/// The terms of the `L^p(F)` bound for the level `>= 0` trace integral:
/// the integral itself, its `nu`-weighted edge majorant and the
/// `mu`-weighted majorant obtained through the co-dimension weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonhomChain {
    pub epsilon: f64,
    pub integral_lp: f64,
    pub nu_weighted: f64,
    pub mu_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonhomDiagnostics {
    pub source_parts: NonhomParts,
    pub target_parts: NonhomParts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codim_band: Option<EdgeCodimBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<NonhomChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    /// `Res f` on `F`, indexed by trace-space point.
    pub trace_samples: Vec<f64>,
    pub trace_norm: f64,
    pub source_norm: f64,
    pub operator_ratio: f64,
    pub theorem: Theorem,
    pub source_params: SmoothnessParams,
    pub trace_params: SmoothnessParams,
    /// Edge levels entering the norms.
    pub window: LevelWindow,
    /// Levels summed by the telescoping integral.
    pub integral_window: LevelWindow,
    /// `max_F |Res f - f|`.
    pub restriction_error: f64,
    pub restricted_norms: RestrictedNorms,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_independence: Option<QIndependence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonhom: Option<NonhomDiagnostics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevCertificate {
    /// The calibrated constant `K` in `g = K G`.
    pub constant: f64,
    /// `‖G‖_{L^p} = ‖u‖_{J^1_{p,1}(E^Z)}`.
    pub sequence_norm: f64,
    pub pairs_checked: usize,
    /// Largest `|Ext f(xi) - Ext f(eta)| - d (g(xi) + g(eta))` over checked pairs.
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    /// `Ext f` on `Z`, indexed by point.
    pub extended_samples: Vec<f64>,
    pub target_norm: f64,
    pub source_norm: f64,
    pub operator_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hajlasz_certificate: Option<HajlaszGradient>,
    pub theorem: Theorem,
    pub source_params: SmoothnessParams,
    pub target_params: SmoothnessParams,
    pub window: LevelWindow,
    pub integral_window: LevelWindow,
    /// `max_F |Ext f - f|`.
    pub retraction_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<SobolevCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonhom: Option<NonhomDiagnostics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
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

fn lambda_and_q(nested: &NestedFilling) -> (f64, f64) {
    (nested.mask().lambda(), nested.ambient().space().declared_q())
}

fn require_kind(params: &SmoothnessParams, allowed: &[SpaceKind], op: &str) -> Result<()> {
    if !allowed.contains(&params.kind) {
        return Err(Error::invalid(format!(
            "{op} expects kind {allowed:?}, got {:?}",
            params.kind
        )));
    }
    Ok(())
}

fn gate(nested: &NestedFilling, params: &SmoothnessParams, theorem: Theorem) -> Result<f64> {
    params.validate()?;
    let (lambda, big_q) = lambda_and_q(nested);
    let adm = admissibility(big_q, lambda, params, theorem);
    if !adm.admissible {
        return Err(Error::Inadmissible(adm.reasons.join("; ")));
    }
    Ok(adm.trace_smoothness)
}

/// The porosity scan of `F` in `Z` with the default constant grid.
pub fn porosity_of(nested: &NestedFilling) -> Result<PorosityScan> {
    porosity_scan(nested.ambient().space(), nested.mask(), &default_porosity_grid())
}

fn porosity_gate(scan: &PorosityScan) -> Result<()> {
    if scan.largest_c.is_none() {
        return Err(Error::NotPorous {
            grid: scan.results.iter().map(|r| r.0).collect(),
        });
    }
    Ok(())
}

/// The homogeneous operators telescope from a single root down to level 0.
fn homogeneous_window(filling: &Filling, side: &str) -> Result<LevelWindow> {
    let (lo, hi) = filling.level_range();
    if lo > 0 || hi < 1 {
        return Err(Error::invalid(format!(
            "the {side} filling must contain levels 0 and 1, has {lo}..={hi}"
        )));
    }
    let roots = filling.vertices_at_level(lo).len();
    if roots != 1 {
        return Err(Error::invalid(format!(
            "the {side} filling has {roots} vertices at level {lo}; a single root is needed \
             (lower n_min)"
        )));
    }
    Ok(LevelWindow::new(lo, hi - 1))
}

fn nonnegative_window(filling: &Filling, side: &str) -> Result<LevelWindow> {
    let (lo, hi) = filling.level_range();
    if lo > 0 || hi < 1 {
        return Err(Error::invalid(format!(
            "the {side} filling must contain levels 0 and 1, has {lo}..={hi}"
        )));
    }
    Ok(LevelWindow::new(0, hi - 1))
}

fn restrict_edges(nested: &NestedFilling, u: &[f64]) -> Vec<f64> {
    nested.edge_embedding().iter().map(|&e| u[e]).collect()
}

fn restrict_vertices(nested: &NestedFilling, v: &[f64]) -> Vec<f64> {
    nested.vertex_embedding().iter().map(|&x| v[x]).collect()
}

/// Zero extension of a trace-edge sequence to all ambient edges.
pub fn zero_extend_edges(nested: &NestedFilling, u_f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nested.ambient().n_edges()];
    for (&e, &val) in nested.edge_embedding().iter().zip(u_f) {
        out[e] = val;
    }
    out
}

/// Zero extension of a trace-vertex sequence to all ambient vertices.
pub fn zero_extend_vertices(nested: &NestedFilling, v_f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nested.ambient().n_vertices()];
    for (&x, &val) in nested.vertex_embedding().iter().zip(v_f) {
        out[x] = val;
    }
    out
}

fn check_trace_samples(nested: &NestedFilling, f_f: &[f64]) -> Result<()> {
    if f_f.len() != nested.f_points().len() {
        return Err(Error::invalid(format!(
            "{} samples for a subset of {} points",
            f_f.len(),
            nested.f_points().len()
        )));
    }
    Ok(())
}

fn add_constant(mut values: Vec<f64>, c: f64) -> Vec<f64> {
    for v in &mut values {
        *v += c;
    }
    values
}

/// Restriction `(d(Pf)|_{E^F}, (Pf)|_{X^F})` of the Poisson data of `f`.
fn restricted_data(nested: &NestedFilling, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ambient = nested.ambient();
    let pf = poisson_extension(ambient, f)?;
    let du = discrete_derivative(ambient, &pf)?;
    Ok((restrict_edges(nested, &du), restrict_vertices(nested, &pf)))
}

fn res_samples(nested: &NestedFilling, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LevelWindow)> {
    let trace = nested.trace();
    let window = homogeneous_window(trace, "trace")?;
    let (u_f, v_f) = restricted_data(nested, f)?;
    let integral = telescoping_integral(trace, &u_f, 0, (window.lo, window.hi))?;
    let correction = t_n(trace, &v_f, 0)?[0];
    Ok((add_constant(integral, correction), u_f, window))
}

/// `Res f` on `F` without norm evaluation.
pub fn restriction(nested: &NestedFilling, f: &[f64]) -> Result<Vec<f64>> {
    Ok(res_samples(nested, f)?.0)
}

/// `Ext f` on `Z` without norm evaluation, together with the zero-extended
/// edge sequence.
fn ext_samples(nested: &NestedFilling, f_f: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LevelWindow)> {
    check_trace_samples(nested, f_f)?;
    let ambient = nested.ambient();
    let window = homogeneous_window(ambient, "ambient")?;
    let v_f = poisson_extension(nested.trace(), f_f)?;
    let u_f = discrete_derivative(nested.trace(), &v_f)?;
    let u = zero_extend_edges(nested, &u_f);
    let v = zero_extend_vertices(nested, &v_f);
    let xi0 = nested.basepoint().1;
    let integral = telescoping_integral(ambient, &u, xi0, (window.lo, window.hi))?;
    let correction = t_n(ambient, &v, 0)?[xi0];
    Ok((add_constant(integral, correction), u, window))
}

/// `Ext f` on `Z` without norm evaluation.
pub fn extension(nested: &NestedFilling, f_f: &[f64]) -> Result<Vec<f64>> {
    Ok(ext_samples(nested, f_f)?.0)
}

fn trace_params(params: &SmoothnessParams, sigma: f64, q: f64, kind: SpaceKind) -> Result<SmoothnessParams> {
    SmoothnessParams::new(sigma, params.p, q, kind)
}

/// Besov trace `B^s_{p,q}(Z) -> B^{s-(Q-lambda)/p}_{p,q}(F)`.
pub fn trace_besov(nested: &NestedFilling, f: &[f64], params: &SmoothnessParams) -> Result<TraceResult> {
    require_kind(params, &[SpaceKind::Besov], "trace_besov")?;
    let sigma = gate(nested, params, Theorem::Thm1)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (res, u_f, integral_window) = res_samples(nested, f)?;
    let tp = trace_params(params, sigma, params.q, SpaceKind::Besov)?;
    let v = NormVariant::Indicator;
    let trace_norm = besov_fn_norm(trace, &res, &tp, v, LevelWindow::full(trace))?;
    let source_norm = besov_fn_norm(ambient, f, params, v, LevelWindow::full(ambient))?;
    let restricted_norms = RestrictedNorms {
        trace_side: besov_seq_norm(trace, &u_f, &tp, v, LevelWindow::full(trace))?,
        ambient_side: besov_seq_norm(
            ambient,
            &zero_extend_edges(nested, &u_f),
            params,
            v,
            LevelWindow::full(ambient),
        )?,
    };
    Ok(TraceResult {
        restriction_error: max_abs_diff(&res, &nested.restrict(f)),
        trace_samples: res,
        trace_norm,
        source_norm,
        operator_ratio: ratio(trace_norm, source_norm),
        theorem: Theorem::Thm1,
        source_params: *params,
        trace_params: tp,
        window: LevelWindow::full(ambient),
        integral_window,
        restricted_norms,
        q_independence: None,
        nonhom: None,
        warnings: Vec::new(),
    })
}

/// Triebel–Lizorkin trace `F^s_{p,q}(Z) -> B^{s-(Q-lambda)/p}_{p,p}(F)`.
pub fn trace_triebel(nested: &NestedFilling, f: &[f64], params: &SmoothnessParams) -> Result<TraceResult> {
    trace_triebel_with(nested, f, params, &porosity_of(nested)?)
}

/// As [`trace_triebel`] with a precomputed porosity scan.
pub fn trace_triebel_with(
    nested: &NestedFilling,
    f: &[f64],
    params: &SmoothnessParams,
    porosity: &PorosityScan,
) -> Result<TraceResult> {
    require_kind(params, &[SpaceKind::Triebel], "trace_triebel")?;
    let sigma = gate(nested, params, Theorem::Thm2)?;
    porosity_gate(porosity)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (res, u_f, integral_window) = res_samples(nested, f)?;
    let tp = trace_params(params, sigma, params.p, SpaceKind::Besov)?;
    let v = NormVariant::Indicator;
    let full_z = LevelWindow::full(ambient);
    let trace_norm = besov_fn_norm(trace, &res, &tp, v, LevelWindow::full(trace))?;
    let source_norm = triebel_fn_norm(ambient, f, params, v, full_z)?;
    let u = zero_extend_edges(nested, &u_f);
    let q_norm = triebel_seq_norm(ambient, &u, params, v, full_z)?;
    let p_norm = triebel_seq_norm(ambient, &u, &params.with_q(params.p), v, full_z)?;
    Ok(TraceResult {
        restriction_error: max_abs_diff(&res, &nested.restrict(f)),
        trace_samples: res,
        trace_norm,
        source_norm,
        operator_ratio: ratio(trace_norm, source_norm),
        theorem: Theorem::Thm2,
        source_params: *params,
        trace_params: tp,
        window: full_z,
        integral_window,
        restricted_norms: RestrictedNorms {
            trace_side: besov_seq_norm(trace, &u_f, &tp, v, LevelWindow::full(trace))?,
            ambient_side: q_norm,
        },
        q_independence: Some(QIndependence {
            q_norm,
            p_norm,
            ratio: ratio(q_norm, p_norm),
        }),
        nonhom: None,
        warnings: Vec::new(),
    })
}

fn q_infinity_warning(params: &SmoothnessParams) -> Vec<String> {
    if params.q.is_infinite() {
        let msg = "q = inf: the extension formula is applied unchanged; boundedness is only \
                   observed empirically"
            .to_string();
        log::warn!("{msg}");
        vec![msg]
    } else {
        Vec::new()
    }
}

/// Besov extension `B^{s-(Q-lambda)/p}_{p,q}(F) -> B^s_{p,q}(Z)`.
pub fn extend_besov(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
) -> Result<ExtensionResult> {
    require_kind(params, &[SpaceKind::Besov], "extend_besov")?;
    let sigma = gate(nested, params, Theorem::Thm1)?;
    let warnings = q_infinity_warning(params);
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (ext, _, integral_window) = ext_samples(nested, f_f)?;
    let sp = trace_params(params, sigma, params.q, SpaceKind::Besov)?;
    let v = NormVariant::Indicator;
    let target_norm = besov_fn_norm(ambient, &ext, params, v, LevelWindow::full(ambient))?;
    let source_norm = besov_fn_norm(trace, f_f, &sp, v, LevelWindow::full(trace))?;
    Ok(ExtensionResult {
        retraction_error: max_abs_diff(&nested.restrict(&ext), f_f),
        extended_samples: ext,
        target_norm,
        source_norm,
        operator_ratio: ratio(target_norm, source_norm),
        hajlasz_certificate: None,
        theorem: Theorem::Thm1,
        source_params: sp,
        target_params: *params,
        window: LevelWindow::full(ambient),
        integral_window,
        certificate: None,
        nonhom: None,
        warnings,
    })
}

/// Triebel–Lizorkin extension `B^{s-(Q-lambda)/p}_{p,p}(F) -> F^s_{p,q}(Z)`.
pub fn extend_triebel(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
) -> Result<ExtensionResult> {
    extend_triebel_with(nested, f_f, params, &porosity_of(nested)?)
}

pub fn extend_triebel_with(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
    porosity: &PorosityScan,
) -> Result<ExtensionResult> {
    require_kind(params, &[SpaceKind::Triebel], "extend_triebel")?;
    let sigma = gate(nested, params, Theorem::Thm2)?;
    porosity_gate(porosity)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (ext, _, integral_window) = ext_samples(nested, f_f)?;
    let sp = trace_params(params, sigma, params.p, SpaceKind::Besov)?;
    let v = NormVariant::Indicator;
    let target_norm = triebel_fn_norm(ambient, &ext, params, v, LevelWindow::full(ambient))?;
    let source_norm = besov_fn_norm(trace, f_f, &sp, v, LevelWindow::full(trace))?;
    Ok(ExtensionResult {
        retraction_error: max_abs_diff(&nested.restrict(&ext), f_f),
        extended_samples: ext,
        target_norm,
        source_norm,
        operator_ratio: ratio(target_norm, source_norm),
        hajlasz_certificate: None,
        theorem: Theorem::Thm2,
        source_params: sp,
        target_params: *params,
        window: LevelWindow::full(ambient),
        integral_window,
        certificate: None,
        nonhom: None,
        warnings: Vec::new(),
    })
}

/// `G(xi) = sum_e 2^{|e|} |u(e)| chi_{B(e)}(xi)`.
pub fn sobolev_majorant(filling: &Filling, u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; filling.space().len()];
    for (e, edge) in filling.edges().iter().enumerate() {
        if u[e] == 0.0 {
            continue;
        }
        let a = 2f64.powi(edge.level) * u[e].abs();
        for m in filling.edge_members(e) {
            g[m] += a;
        }
    }
    g
}

fn certificate_pairs(n: usize) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    if total <= MAX_CERTIFICATE_PAIRS {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(CERTIFICATE_SEED);
        (0..MAX_CERTIFICATE_PAIRS)
            .map(|_| loop {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if i != j {
                    break (i.min(j), i.max(j));
                }
            })
            .collect()
    }
}

/// Sobolev extension `B^{1-(Q-lambda)/p}_{p,p}(F) -> M^{1,p}(Z)` with a
/// Hajłasz gradient `g = K G` calibrated on point pairs.
pub fn extend_sobolev(nested: &NestedFilling, f_f: &[f64], p: f64) -> Result<ExtensionResult> {
    extend_sobolev_with(nested, f_f, p, &porosity_of(nested)?)
}

pub fn extend_sobolev_with(
    nested: &NestedFilling,
    f_f: &[f64],
    p: f64,
    porosity: &PorosityScan,
) -> Result<ExtensionResult> {
    let params = SmoothnessParams::new(1.0, p, 1.0, SpaceKind::Hajlasz)?;
    let sigma = gate(nested, &params, Theorem::Thm3)?;
    porosity_gate(porosity)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let space = ambient.space();
    let (ext, u, integral_window) = ext_samples(nested, f_f)?;
    let big_g = sobolev_majorant(ambient, &u);

    let pairs = certificate_pairs(space.len());
    let mut k = 0.0f64;
    for &(i, j) in &pairs {
        let df = (ext[i] - ext[j]).abs();
        if df == 0.0 {
            continue;
        }
        let bound = space.distance(i, j) * (big_g[i] + big_g[j]);
        if bound == 0.0 {
            return Err(Error::CertificateInfeasible {
                first: i,
                second: j,
                inflation: f64::INFINITY,
            });
        }
        k = k.max(df / bound);
    }
    let constant = k * (1.0 + 1e-9);
    let g: Vec<f64> = big_g.iter().map(|v| constant * v).collect();
    let mut max_violation = 0.0f64;
    for &(i, j) in &pairs {
        let excess = (ext[i] - ext[j]).abs() - space.distance(i, j) * (g[i] + g[j]);
        if excess > max_violation {
            max_violation = excess;
        }
    }
    if max_violation > 0.0 {
        let (i, j) = pairs
            .iter()
            .copied()
            .max_by(|a, b| {
                let ex = |&(i, j): &(usize, usize)| {
                    (ext[i] - ext[j]).abs() - space.distance(i, j) * (g[i] + g[j])
                };
                ex(a).total_cmp(&ex(b))
            })
            .unwrap_or((0, 0));
        let need = (ext[i] - ext[j]).abs() / (space.distance(i, j) * (g[i] + g[j]));
        return Err(Error::CertificateInfeasible {
            first: i,
            second: j,
            inflation: need,
        });
    }

    let sp = trace_params(&params, sigma, p, SpaceKind::Besov)?;
    let target_norm = lp_norm(space, &g, p);
    let source_norm = besov_fn_norm(trace, f_f, &sp, NormVariant::Indicator, LevelWindow::full(trace))?;
    let sequence_norm = triebel_seq_norm(
        ambient,
        &u,
        &SmoothnessParams::new(1.0, p, 1.0, SpaceKind::Triebel)?,
        NormVariant::Indicator,
        LevelWindow::full(ambient),
    )?;
    Ok(ExtensionResult {
        retraction_error: max_abs_diff(&nested.restrict(&ext), f_f),
        extended_samples: ext,
        target_norm,
        source_norm,
        operator_ratio: ratio(target_norm, source_norm),
        hajlasz_certificate: Some(HajlaszGradient { g, s_exponent: 1.0 }),
        theorem: Theorem::Thm3,
        source_params: sp,
        target_params: params,
        window: LevelWindow::full(ambient),
        integral_window,
        certificate: Some(SobolevCertificate {
            constant,
            sequence_norm,
            pairs_checked: pairs.len(),
            max_violation: max_violation.max(0.0),
        }),
        nonhom: None,
        warnings: Vec::new(),
    })
}

fn nonhom_theorem(params: &SmoothnessParams) -> Result<Theorem> {
    match params.kind {
        SpaceKind::NonhomBesov => Ok(Theorem::Thm1),
        SpaceKind::NonhomTriebel => Ok(Theorem::Thm2),
        k => Err(Error::invalid(format!(
            "non-homogeneous operators expect nonhom_besov or nonhom_triebel, got {k:?}"
        ))),
    }
}

fn nonhom_trace_params(params: &SmoothnessParams, sigma: f64) -> Result<SmoothnessParams> {
    let q = if params.kind == SpaceKind::NonhomTriebel {
        params.p
    } else {
        params.q
    };
    trace_params(params, sigma, q, SpaceKind::NonhomBesov)
}

/// The co-dimension weight band over trace edges of nonnegative level.
pub fn edge_codim_band(nested: &NestedFilling) -> Option<EdgeCodimBand> {
    let gamma = nested.gamma();
    let (trace, ambient) = (nested.trace(), nested.ambient());
    let mut band: Option<EdgeCodimBand> = None;
    for (te, &ae) in nested.edge_embedding().iter().enumerate() {
        let level = trace.edge(te).level;
        if level < 0 {
            continue;
        }
        let r = trace.edge_mass(te) * 2f64.powf(-(level as f64) * gamma) / ambient.edge_mass(ae);
        band = Some(match band {
            None => EdgeCodimBand { lo: r, hi: r, edges: 1 },
            Some(b) => EdgeCodimBand {
                lo: b.lo.min(r),
                hi: b.hi.max(r),
                edges: b.edges + 1,
            },
        });
    }
    band
}

fn nonhom_chain(
    nested: &NestedFilling,
    integral: &[f64],
    u_f: &[f64],
    p: f64,
    sigma: f64,
) -> NonhomChain {
    let (trace, ambient) = (nested.trace(), nested.ambient());
    let gamma = nested.gamma();
    let epsilon = if p > 1.0 { sigma / 2.0 } else { 0.0 };
    let mut nu_sum = 0.0;
    let mut mu_sum = 0.0;
    for (te, &ae) in nested.edge_embedding().iter().enumerate() {
        let n = trace.edge(te).level;
        if n < 0 || u_f[te] == 0.0 {
            continue;
        }
        let a = u_f[te].abs().powf(p);
        let n = n as f64;
        nu_sum += 2f64.powf(n * epsilon * p) * trace.edge_mass(te) * a;
        mu_sum += 2f64.powf(n * (epsilon * p + gamma)) * ambient.edge_mass(ae) * a;
    }
    NonhomChain {
        epsilon,
        integral_lp: lp_norm(trace.space(), integral, p),
        nu_weighted: nu_sum.powf(1.0 / p),
        mu_weighted: mu_sum.powf(1.0 / p),
    }
}

/// Non-homogeneous trace `nRes`.
pub fn nonhom_trace(nested: &NestedFilling, f: &[f64], params: &SmoothnessParams) -> Result<TraceResult> {
    let theorem = nonhom_theorem(params)?;
    if theorem == Theorem::Thm2 {
        porosity_gate(&porosity_of(nested)?)?;
    }
    nonhom_trace_gated(nested, f, params, theorem)
}

pub fn nonhom_trace_with(
    nested: &NestedFilling,
    f: &[f64],
    params: &SmoothnessParams,
    porosity: &PorosityScan,
) -> Result<TraceResult> {
    let theorem = nonhom_theorem(params)?;
    if theorem == Theorem::Thm2 {
        porosity_gate(porosity)?;
    }
    nonhom_trace_gated(nested, f, params, theorem)
}

/// `nRes f` with the level `>= 0` integral, the restricted derivative and the
/// integral window.
fn nres_parts(
    nested: &NestedFilling,
    f: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, LevelWindow)> {
    let trace = nested.trace();
    let window = nonnegative_window(trace, "trace")?;
    let (u_f, v_f) = restricted_data(nested, f)?;
    let integral = telescoping_integral(trace, &u_f, 0, (window.lo, window.hi))?;
    let base = t_n(trace, &v_f, 0)?;
    let nres = integral.iter().zip(&base).map(|(a, b)| a + b).collect();
    Ok((nres, integral, u_f, window))
}

/// `nRes f` on `F` without norm evaluation.
pub fn nonhom_restriction(nested: &NestedFilling, f: &[f64]) -> Result<Vec<f64>> {
    Ok(nres_parts(nested, f)?.0)
}

fn next_parts(nested: &NestedFilling, f_f: &[f64]) -> Result<(Vec<f64>, LevelWindow)> {
    check_trace_samples(nested, f_f)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let window = nonnegative_window(ambient, "ambient")?;
    let v_f = poisson_extension(trace, f_f)?;
    let u_f = discrete_derivative(trace, &v_f)?;
    let u = zero_extend_edges(nested, &u_f);
    let v = zero_extend_vertices(nested, &v_f);
    let integral = telescoping_integral(ambient, &u, nested.basepoint().1, (window.lo, window.hi))?;
    let base = t_n(ambient, &v, 0)?;
    Ok((integral.iter().zip(&base).map(|(a, b)| a + b).collect(), window))
}

/// `nExt f` on `Z` without norm evaluation.
pub fn nonhom_extension(nested: &NestedFilling, f_f: &[f64]) -> Result<Vec<f64>> {
    Ok(next_parts(nested, f_f)?.0)
}

fn nonhom_trace_gated(
    nested: &NestedFilling,
    f: &[f64],
    params: &SmoothnessParams,
    theorem: Theorem,
) -> Result<TraceResult> {
    let sigma = gate(nested, params, theorem)?;
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (nres, integral, u_f, window) = nres_parts(nested, f)?;
    let tp = nonhom_trace_params(params, sigma)?;
    let v = NormVariant::Indicator;
    let target_parts = nonhom_norm_parts(trace, &nres, &tp, v, LevelWindow::full(trace))?;
    let source_parts = nonhom_norm_parts(ambient, f, params, v, LevelWindow::full(ambient))?;
    let hom_src = params.with_kind(if theorem == Theorem::Thm1 {
        SpaceKind::Besov
    } else {
        SpaceKind::Triebel
    });
    let plus = LevelWindow::new(0, ambient.n_max());
    let u = zero_extend_edges(nested, &u_f);
    let ambient_side = if theorem == Theorem::Thm1 {
        besov_seq_norm(ambient, &u, &hom_src, v, plus)?
    } else {
        triebel_seq_norm(ambient, &u, &hom_src, v, plus)?
    };
    let trace_side = besov_seq_norm(
        trace,
        &u_f,
        &tp.with_kind(SpaceKind::Besov),
        v,
        LevelWindow::new(0, trace.n_max()),
    )?;
    Ok(TraceResult {
        restriction_error: max_abs_diff(&nres, &nested.restrict(f)),
        trace_norm: target_parts.total(),
        source_norm: source_parts.total(),
        operator_ratio: ratio(target_parts.total(), source_parts.total()),
        theorem,
        source_params: *params,
        trace_params: tp,
        window: plus,
        integral_window: window,
        restricted_norms: RestrictedNorms {
            trace_side,
            ambient_side,
        },
        q_independence: None,
        nonhom: Some(NonhomDiagnostics {
            source_parts,
            target_parts,
            codim_band: edge_codim_band(nested),
            chain: Some(nonhom_chain(nested, &integral, &u_f, params.p, sigma)),
        }),
        trace_samples: nres,
        warnings: Vec::new(),
    })
}

/// Non-homogeneous extension `nExt`. The level-0 term is `T^Z_0` of `P^F f`
/// extended by zero to `X^Z`, which agrees with `T^F_0(P^F f)` on `F`.
pub fn nonhom_extend(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
) -> Result<ExtensionResult> {
    let theorem = nonhom_theorem(params)?;
    if theorem == Theorem::Thm2 {
        porosity_gate(&porosity_of(nested)?)?;
    }
    nonhom_extend_gated(nested, f_f, params, theorem)
}

pub fn nonhom_extend_with(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
    porosity: &PorosityScan,
) -> Result<ExtensionResult> {
    let theorem = nonhom_theorem(params)?;
    if theorem == Theorem::Thm2 {
        porosity_gate(porosity)?;
    }
    nonhom_extend_gated(nested, f_f, params, theorem)
}

fn nonhom_extend_gated(
    nested: &NestedFilling,
    f_f: &[f64],
    params: &SmoothnessParams,
    theorem: Theorem,
) -> Result<ExtensionResult> {
    check_trace_samples(nested, f_f)?;
    let sigma = gate(nested, params, theorem)?;
    let warnings = q_infinity_warning(params);
    let (ambient, trace) = (nested.ambient(), nested.trace());
    let (next, window) = next_parts(nested, f_f)?;
    let sp = nonhom_trace_params(params, sigma)?;
    let variant = NormVariant::Indicator;
    let target_parts = nonhom_norm_parts(ambient, &next, params, variant, LevelWindow::full(ambient))?;
    let source_parts = nonhom_norm_parts(trace, f_f, &sp, variant, LevelWindow::full(trace))?;
    Ok(ExtensionResult {
        retraction_error: max_abs_diff(&nested.restrict(&next), f_f),
        extended_samples: next,
        target_norm: target_parts.total(),
        source_norm: source_parts.total(),
        operator_ratio: ratio(target_parts.total(), source_parts.total()),
        hajlasz_certificate: None,
        theorem,
        source_params: sp,
        target_params: *params,
        window: LevelWindow::new(0, ambient.n_max()),
        integral_window: window,
        certificate: None,
        nonhom: Some(NonhomDiagnostics {
            source_parts,
            target_parts,
            codim_band: edge_codim_band(nested),
            chain: None,
        }),
        warnings,
    })
}
