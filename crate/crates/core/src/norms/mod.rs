//! Sequence quasinorms `I^s_{p,q}` (Besov) and `J^s_{p,q}` (Triebel–Lizorkin)
//! on a filling, the function quasinorms `‖d(Pf)‖`, their non-homogeneous
//! versions and the Hajłasz–Sobolev norm.
//!
//! All integrals are exact weighted sums over the point cloud; `p = ∞` and
//! `q = ∞` are maxima over the finite index sets.

mod admissibility;
mod hajlasz;

pub use admissibility::{admissibility, example_window, Admissibility, Theorem};
pub use hajlasz::{
    hajlasz_lower_bound, hajlasz_norm, hajlasz_norm_with, hajlasz_violation, HajlaszGradient,
    HajlaszOptions, HajlaszResult, DEFAULT_SOLVER_BUDGET,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{discrete_derivative, poisson_extension, t_n};
use crate::error::{Error, Result};
use crate::filling::Filling;
use crate::space::FiniteMetricMeasureSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Besov,
    Triebel,
    Hajlasz,
    NonhomBesov,
    NonhomTriebel,
}

impl SpaceKind {
    fn is_triebel(self) -> bool {
        matches!(self, SpaceKind::Triebel | SpaceKind::NonhomTriebel)
    }

    /// The homogeneous family a non-homogeneous kind is built on.
    pub fn homogeneous(self) -> Self {
        match self {
            SpaceKind::NonhomBesov => SpaceKind::Besov,
            SpaceKind::NonhomTriebel => SpaceKind::Triebel,
            k => k,
        }
    }
}

/// Which characteristic function weighs an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormVariant {
    /// `chi_{B(e)}`.
    #[default]
    Indicator,
    /// `mu(B(e)) |u(e)|^p` per edge (Besov only).
    Mass,
    /// `chi_{A_e}` with `A_e` the half ball of `e_-`.
    Substitute,
}

/// Smoothness `s`, integrability `p`, summability `q` and the space family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessParams {
    pub s: f64,
    #[serde(with = "crate::json::extended")]
    pub p: f64,
    #[serde(with = "crate::json::extended")]
    pub q: f64,
    pub kind: SpaceKind,
}

impl SmoothnessParams {
    pub fn new(s: f64, p: f64, q: f64, kind: SpaceKind) -> Result<Self> {
        let params = Self { s, p, q, kind };
        params.validate()?;
        Ok(params)
    }

    pub fn besov(s: f64, p: f64, q: f64) -> Result<Self> {
        Self::new(s, p, q, SpaceKind::Besov)
    }

    pub fn triebel(s: f64, p: f64, q: f64) -> Result<Self> {
        Self::new(s, p, q, SpaceKind::Triebel)
    }

    pub fn with_kind(self, kind: SpaceKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_s(self, s: f64) -> Self {
        Self { s, ..self }
    }

    pub fn with_q(self, q: f64) -> Self {
        Self { q, ..self }
    }

    /// Ranges independent of the ambient dimension.
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::invalid(format!("smoothness s = {} outside (0, 1]", self.s)));
        }
        if !(self.p > 0.0) || self.p.is_nan() {
            return Err(Error::invalid(format!("p = {} must be positive", self.p)));
        }
        if !(self.q > 0.0) || self.q.is_nan() {
            return Err(Error::invalid(format!("q = {} must be positive", self.q)));
        }
        Ok(())
    }

    /// The parameter windows of the sequence spaces over a `Q`-regular space.
    pub fn check_admissible(&self, big_q: f64) -> Result<()> {
        self.validate()?;
        let floor = big_q / (big_q + self.s);
        if self.p <= floor {
            return Err(Error::Inadmissible(format!(
                "p = {} must exceed Q/(Q+s) = {floor}",
                self.p
            )));
        }
        match self.kind {
            SpaceKind::Triebel | SpaceKind::NonhomTriebel => {
                if self.p.is_infinite() {
                    return Err(Error::Inadmissible("Triebel-Lizorkin needs p < inf".into()));
                }
                if self.q <= floor {
                    return Err(Error::Inadmissible(format!(
                        "q = {} must exceed Q/(Q+s) = {floor}",
                        self.q
                    )));
                }
            }
            SpaceKind::Hajlasz if self.p.is_infinite() => {
                return Err(Error::Inadmissible("Hajlasz-Sobolev needs p < inf".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// `K` with `‖u + v‖ <= K (‖u‖ + ‖v‖)`: `2^{1/r - 1}`, `r = min(1, p, q)`.
    pub fn quasi_triangle_constant(&self) -> f64 {
        let r = 1f64.min(self.p).min(self.q);
        2f64.powf(1.0 / r - 1.0)
    }
}

/// Inclusive range of edge levels entering a sequence norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelWindow {
    pub lo: i32,
    pub hi: i32,
}

impl LevelWindow {
    pub fn new(lo: i32, hi: i32) -> Self {
        Self { lo, hi }
    }

    /// Every level of `filling`.
    pub fn full(filling: &Filling) -> Self {
        Self::new(filling.n_min(), filling.n_max())
    }

    fn clip(self, filling: &Filling) -> (i32, i32) {
        (self.lo.max(filling.n_min()), self.hi.min(filling.n_max()))
    }
}

/// `‖g‖_{L^p(mu)}` of samples on a space.
pub fn lp_norm(space: &FiniteMetricMeasureSpace, g: &[f64], p: f64) -> f64 {
    lp_norm_weighted(space.weights(), g, p)
}

pub(crate) fn lp_norm_weighted(weights: &[f64], g: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return g
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max);
    }
    g.iter()
        .zip(weights)
        .map(|(v, w)| w * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn lq_sum(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

fn variant_members(filling: &Filling, e: usize, variant: NormVariant) -> Vec<usize> {
    match variant {
        NormVariant::Substitute => {
            let x = filling.edge(e).tail;
            let v = filling.vertex(x);
            let space = filling.space();
            filling
                .members_raw(x)
                .iter()
                .map(|&p| p as usize)
                .filter(|&p| space.distance(p, v.center) < v.radius / 2.0)
                .collect()
        }
        _ => filling.edge_members(e),
    }
}

fn check_sequence(filling: &Filling, u: &[f64]) -> Result<()> {
    if u.len() != filling.n_edges() {
        return Err(Error::invalid(format!(
            "edge sequence has {} values, expected {}",
            u.len(),
            filling.n_edges()
        )));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("edge sequence is not finite at {i}")));
    }
    Ok(())
}

/// Per-level terms `2^{ks} L_k` of the Besov sequence norm.
pub fn besov_level_terms(
    filling: &Filling,
    u: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<Vec<(i32, f64)>> {
    check_sequence(filling, u)?;
    if params.kind.is_triebel() {
        return Err(Error::invalid("Besov norm requested with Triebel-Lizorkin parameters"));
    }
    params.check_admissible(filling.space().declared_q())?;
    let (lo, hi) = window.clip(filling);
    let space = filling.space();
    let p = params.p;
    Ok((lo..=hi)
        .into_par_iter()
        .map(|k| {
            let edges = filling.edges_at_level(k);
            let inner = match variant {
                NormVariant::Mass => {
                    if p.is_infinite() {
                        edges.map(|e| u[e].abs()).fold(0.0, f64::max)
                    } else {
                        edges
                            .map(|e| filling.edge_mass(e) * u[e].abs().powf(p))
                            .sum::<f64>()
                            .powf(1.0 / p)
                    }
                }
                _ => {
                    let mut g = vec![0.0; space.len()];
                    for e in edges {
                        if u[e] != 0.0 {
                            for m in variant_members(filling, e, variant) {
                                g[m] += u[e].abs();
                            }
                        }
                    }
                    lp_norm(space, &g, p)
                }
            };
            (k, 2f64.powf(k as f64 * params.s) * inner)
        })
        .collect())
}

/// `‖u‖_{I^s_{p,q}}` over the edge levels in `window`.
pub fn besov_seq_norm(
    filling: &Filling,
    u: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    let terms = besov_level_terms(filling, u, params, variant, window)?;
    Ok(lq_sum(terms.into_iter().map(|t| t.1), params.q))
}

/// `‖u‖_{J^s_{p,q}}` over the edge levels in `window`.
pub fn triebel_seq_norm(
    filling: &Filling,
    u: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    check_sequence(filling, u)?;
    if variant == NormVariant::Mass {
        return Err(Error::Unsupported(
            "the mass variant is defined for Besov norms only".into(),
        ));
    }
    if !params.kind.is_triebel() && params.kind != SpaceKind::Hajlasz {
        return Err(Error::invalid("Triebel-Lizorkin norm requested with Besov parameters"));
    }
    params
        .with_kind(SpaceKind::Triebel)
        .check_admissible(filling.space().declared_q())?;
    let (lo, hi) = window.clip(filling);
    let space = filling.space();
    let q = params.q;
    let mut h = vec![0.0; space.len()];
    for k in lo..=hi {
        let scale = 2f64.powf(k as f64 * params.s);
        for e in filling.edges_at_level(k) {
            if u[e] == 0.0 {
                continue;
            }
            let a = scale * u[e].abs();
            let term = if q.is_infinite() { a } else { a.powf(q) };
            for m in variant_members(filling, e, variant) {
                if q.is_infinite() {
                    h[m] = f64::max(h[m], term);
                } else {
                    h[m] += term;
                }
            }
        }
    }
    let pointwise: Vec<f64> = if q.is_infinite() {
        h
    } else {
        h.into_iter().map(|v| v.powf(1.0 / q)).collect()
    };
    Ok(lp_norm(space, &pointwise, params.p))
}

/// Sequence norm of the family named by `params.kind`.
pub fn seq_norm(
    filling: &Filling,
    u: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    if params.kind.homogeneous() == SpaceKind::Besov {
        besov_seq_norm(filling, u, params, variant, window)
    } else {
        triebel_seq_norm(filling, u, params, variant, window)
    }
}

/// `d(Pf)`.
pub fn derivative_of(filling: &Filling, f: &[f64]) -> Result<Vec<f64>> {
    discrete_derivative(filling, &poisson_extension(filling, f)?)
}

/// `‖f‖_{B^s_{p,q}} = ‖d(Pf)‖_{I^s_{p,q}}`.
pub fn besov_fn_norm(
    filling: &Filling,
    f: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    besov_seq_norm(filling, &derivative_of(filling, f)?, params, variant, window)
}

/// `‖f‖_{F^s_{p,q}} = ‖d(Pf)‖_{J^s_{p,q}}`.
pub fn triebel_fn_norm(
    filling: &Filling,
    f: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    triebel_seq_norm(filling, &derivative_of(filling, f)?, params, variant, window)
}

/// Homogeneous function norm of the family named by `params.kind`.
pub fn fn_norm(
    filling: &Filling,
    f: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    seq_norm(filling, &derivative_of(filling, f)?, params, variant, window)
}

/// The two parts of a non-homogeneous norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonhomParts {
    /// `‖T_0(Pf)‖_{L^p}`.
    pub base: f64,
    /// Level `>= 0` part of the homogeneous norm.
    pub tail: f64,
}

impl NonhomParts {
    pub fn total(&self) -> f64 {
        self.base + self.tail
    }
}

/// `‖T_0(Pf)‖_{L^p}` plus the level `>= 0` tail of `‖d(Pf)‖`.
pub fn nonhom_norm_parts(
    filling: &Filling,
    f: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<NonhomParts> {
    if !matches!(params.kind, SpaceKind::NonhomBesov | SpaceKind::NonhomTriebel) {
        return Err(Error::invalid("non-homogeneous norm needs a nonhom_* kind"));
    }
    if !filling.has_level(0) {
        return Err(Error::invalid("non-homogeneous norms need level 0 in the filling"));
    }
    params.check_admissible(filling.space().declared_q())?;
    let pf = poisson_extension(filling, f)?;
    let base = lp_norm(filling.space(), &t_n(filling, &pf, 0)?, params.p);
    let du = discrete_derivative(filling, &pf)?;
    let tail_window = LevelWindow::new(window.lo.max(0), window.hi);
    let hom = params.with_kind(params.kind.homogeneous());
    let tail = if tail_window.lo > tail_window.hi {
        0.0
    } else {
        seq_norm(filling, &du, &hom, variant, tail_window)?
    };
    Ok(NonhomParts { base, tail })
}

pub fn nonhom_norm(
    filling: &Filling,
    f: &[f64],
    params: &SmoothnessParams,
    variant: NormVariant,
    window: LevelWindow,
) -> Result<f64> {
    Ok(nonhom_norm_parts(filling, f, params, variant, window)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filling::build_filling;
    use crate::space::unit_cube_space;

    fn setup() -> Filling {
        build_filling(&unit_cube_space(1, 8).unwrap(), 0, 6).unwrap()
    }

    #[test]
    fn zero_sequence_has_zero_norm() {
        let f = setup();
        let u = vec![0.0; f.n_edges()];
        let w = LevelWindow::full(&f);
        let b = SmoothnessParams::besov(0.5, 2.0, 2.0).unwrap();
        let t = SmoothnessParams::triebel(0.5, 2.0, 2.0).unwrap();
        for v in [NormVariant::Indicator, NormVariant::Mass, NormVariant::Substitute] {
            assert_eq!(besov_seq_norm(&f, &u, &b, v, w).unwrap(), 0.0);
        }
        assert_eq!(triebel_seq_norm(&f, &u, &t, NormVariant::Indicator, w).unwrap(), 0.0);
    }

    #[test]
    fn single_edge_closed_form() {
        let f = setup();
        let e = f.edges_at_level(3).start;
        let mut u = vec![0.0; f.n_edges()];
        u[e] = 1.0;
        let w = LevelWindow::full(&f);
        let expected = 2f64.powf(3.0 * 0.5) * f.edge_mass(e).powf(0.5);
        for q in [1.0, 2.0, f64::INFINITY] {
            let b = SmoothnessParams::besov(0.5, 2.0, q).unwrap();
            for v in [NormVariant::Indicator, NormVariant::Mass] {
                let got = besov_seq_norm(&f, &u, &b, v, w).unwrap();
                assert!((got - expected).abs() < 1e-14 * expected, "{v:?} {q}");
            }
            let t = SmoothnessParams::triebel(0.5, 2.0, q).unwrap();
            let got = triebel_seq_norm(&f, &u, &t, NormVariant::Indicator, w).unwrap();
            assert!((got - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn triebel_equals_mass_besov_when_q_is_p() {
        use rand::{Rng, SeedableRng};
        let f = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = LevelWindow::full(&f);
        for p in [0.9, 1.5, 3.0] {
            let u: Vec<f64> = (0..f.n_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = besov_seq_norm(
                &f,
                &u,
                &SmoothnessParams::besov(0.5, p, p).unwrap(),
                NormVariant::Mass,
                w,
            )
            .unwrap();
            let t = triebel_seq_norm(
                &f,
                &u,
                &SmoothnessParams::triebel(0.5, p, p).unwrap(),
                NormVariant::Indicator,
                w,
            )
            .unwrap();
            assert!((b - t).abs() <= 1e-12 * b, "{b} {t}");
        }
    }

    #[test]
    fn constants_have_zero_homogeneous_norm() {
        let f = setup();
        let c = vec![3.0; 256];
        let w = LevelWindow::full(&f);
        let b = SmoothnessParams::besov(0.5, 2.0, 2.0).unwrap();
        assert!(besov_fn_norm(&f, &c, &b, NormVariant::Indicator, w).unwrap() < 1e-12);
        let nb = b.with_kind(SpaceKind::NonhomBesov);
        let n = nonhom_norm(&f, &c, &nb, NormVariant::Indicator, w).unwrap();
        assert!((n - 3.0).abs() < 1e-12, "{n}");
    }

    #[test]
    fn inadmissible_parameters_are_gated() {
        let f = setup();
        let u = vec![0.0; f.n_edges()];
        let w = LevelWindow::full(&f);
        let b = SmoothnessParams::besov(0.5, 0.6, 2.0).unwrap();
        let err = besov_seq_norm(&f, &u, &b, NormVariant::Indicator, w).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)));
        let t = SmoothnessParams::triebel(0.5, 2.0, 0.6).unwrap();
        assert!(triebel_seq_norm(&f, &u, &t, NormVariant::Indicator, w).is_err());
        assert!(SmoothnessParams::besov(1.5, 2.0, 2.0).is_err());
    }

    #[test]
    fn quasi_triangle_constant_values() {
        let b = SmoothnessParams::besov(0.5, 0.5, 2.0).unwrap();
        assert_eq!(b.quasi_triangle_constant(), 2.0);
        let b = SmoothnessParams::besov(0.5, 2.0, f64::INFINITY).unwrap();
        assert_eq!(b.quasi_triangle_constant(), 1.0);
    }
}
