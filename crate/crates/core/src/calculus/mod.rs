//! Discrete calculus on a filling: Poisson extension `P`, edge derivative `d`,
//! tent partitions of unity `psi_x`, the level operators `T_n`, `I_n` and the
//! telescoping integral.
//!
//! Vertex sequences are indexed by vertex id, edge sequences by edge id and
//! function samples by point index of the filling's space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filling::{dyadic, overlap_audit, Filling};

/// Real value per filling vertex (`u: X -> R`, `Pf`).
pub type VertexSequence = Vec<f64>;
/// Real value per filling edge (`u: E -> R`, `du`).
pub type EdgeSequence = Vec<f64>;
/// Real value per space point (`f`, `T_n v`, `∫u`).
pub type FunctionSamples = Vec<f64>;

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{what} has {got} values, expected {want}")));
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} is not finite at index {i}")));
    }
    Ok(())
}

/// `Pf(x)`: the `mu`-mean of `f` over `B(x)`.
pub fn poisson_extension(filling: &Filling, f: &[f64]) -> Result<VertexSequence> {
    let space = filling.space();
    check_len("function", f.len(), space.len())?;
    check_finite("function", f)?;
    Ok((0..filling.n_vertices())
        .into_par_iter()
        .map(|x| {
            let mut mass = 0.0;
            let mut total = 0.0;
            for &p in filling.members_raw(x) {
                let w = space.weight(p as usize);
                mass += w;
                total += w * f[p as usize];
            }
            total / mass
        })
        .collect())
}

/// `du(e) = u(e_+) - u(e_-)`.
pub fn discrete_derivative(filling: &Filling, v: &[f64]) -> Result<EdgeSequence> {
    check_len("vertex sequence", v.len(), filling.n_vertices())?;
    Ok(filling.edges().iter().map(|e| v[e.head] - v[e.tail]).collect())
}

/// The partition of unity of one level, stored per point as the nonzero
/// `(vertex, psi_x(point))` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPartition {
    pub level: i32,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl LevelPartition {
    /// Nonzero `(vertex, psi)` pairs at `point`.
    pub fn at(&self, point: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[point]..self.offsets[point + 1]]
    }

    /// `psi_x(point)`.
    pub fn value(&self, x: usize, point: usize) -> f64 {
        self.at(point)
            .iter()
            .find(|(v, _)| *v as usize == x)
            .map_or(0.0, |(_, psi)| *psi)
    }

    pub fn n_points(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Tent bump `clamp(2 (1 - d / r), 0, 1)`: one on the half ball, zero outside
/// the ball, Lipschitz `2/r`.
pub fn tent(distance: f64, radius: f64) -> f64 {
    (2.0 * (1.0 - distance / radius)).clamp(0.0, 1.0)
}

/// `psi_x = phi_x / sum_{x'} phi_{x'}` over the vertices of level `n`.
pub fn build_partition(filling: &Filling, n: i32) -> Result<LevelPartition> {
    if !filling.has_level(n) {
        return Err(Error::invalid(format!("level {n} is outside the filling")));
    }
    let space = filling.space();
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); space.len()];
    for x in filling.vertices_at_level(n) {
        for &p in filling.members_raw(x) {
            incident[p as usize].push(x as u32);
        }
    }
    let rows: Vec<Vec<(u32, f64)>> = incident
        .par_iter()
        .enumerate()
        .map(|(p, xs)| {
            let mut row: Vec<(u32, f64)> = xs
                .iter()
                .map(|&x| {
                    let v = filling.vertex(x as usize);
                    (x, tent(space.distance(p, v.center), v.radius))
                })
                .filter(|(_, phi)| *phi > 0.0)
                .collect();
            let total: f64 = row.iter().map(|(_, phi)| phi).sum();
            if total == 0.0 {
                return Err(Error::CoveringViolation { point: p, level: n });
            }
            for (_, phi) in row.iter_mut() {
                *phi /= total;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for row in rows {
        entries.extend(row);
        offsets.push(entries.len());
    }
    Ok(LevelPartition {
        level: n,
        offsets,
        entries,
    })
}

/// Partitions of unity for every level of a filling.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    levels: Vec<LevelPartition>,
    n_min: i32,
    /// `K` with `Lip psi_x <= K 2^{|x|}` for every vertex, from the tent
    /// slopes and the level overlap: `2 (1 + M_n) / (r_min,n 2^n)`.
    pub lipschitz_bound: f64,
}

impl PartitionOfUnity {
    pub fn build(filling: &Filling) -> Result<Self> {
        let (lo, hi) = filling.level_range();
        let levels = (lo..=hi)
            .map(|n| build_partition(filling, n))
            .collect::<Result<Vec<_>>>()?;
        let overlaps = overlap_audit(filling);
        let lipschitz_bound = (lo..=hi)
            .map(|n| {
                let r_min = filling
                    .vertices_at_level(n)
                    .map(|x| filling.vertex(x).radius)
                    .fold(f64::INFINITY, f64::min);
                let m = overlaps[(n - lo) as usize].1 as f64;
                2.0 * (1.0 + m) / r_min * dyadic(n)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            levels,
            n_min: lo,
            lipschitz_bound,
        })
    }

    pub fn level(&self, n: i32) -> &LevelPartition {
        &self.levels[(n - self.n_min) as usize]
    }
}

fn level_partition(filling: &Filling, n: i32) -> Result<(std::sync::Arc<PartitionOfUnity>, i32)> {
    if !filling.has_level(n) {
        return Err(Error::invalid(format!("level {n} is outside the filling")));
    }
    Ok((filling.partition()?, n))
}

/// `T_n v = sum_{x in X_n} v(x) psi_x`.
pub fn t_n(filling: &Filling, v: &[f64], n: i32) -> Result<FunctionSamples> {
    check_len("vertex sequence", v.len(), filling.n_vertices())?;
    let (pou, n) = level_partition(filling, n)?;
    let level = pou.level(n);
    Ok((0..level.n_points())
        .into_par_iter()
        .map(|p| level.at(p).iter().map(|&(x, psi)| v[x as usize] * psi).sum())
        .collect())
}

/// `I_n u = sum u(e_{y,y'}) psi_y psi_{y'}` over neighbours `y in X_n`,
/// `y' in X_{n+1}`.
pub fn i_n(filling: &Filling, u: &[f64], n: i32) -> Result<FunctionSamples> {
    check_len("edge sequence", u.len(), filling.n_edges())?;
    if !filling.has_level(n + 1) {
        return Err(Error::invalid(format!("I_{n} needs level {} in the filling", n + 1)));
    }
    let (pou, n) = level_partition(filling, n)?;
    let (here, next) = (pou.level(n), pou.level(n + 1));
    (0..here.n_points())
        .into_par_iter()
        .map(|p| {
            let mut total = 0.0;
            for &(y, a) in here.at(p) {
                for &(z, b) in next.at(p) {
                    let e = filling
                        .edge_between(y as usize, z as usize)
                        .ok_or_else(|| Error::invalid("overlapping balls without an edge"))?;
                    total += u[e] * a * b;
                }
            }
            Ok(total)
        })
        .collect()
}

/// `sum_{n=lo}^{hi} I_n u(.) - sum_{n=lo}^{min(hi,-1)} I_n u(xi_0)`.
pub fn telescoping_integral(
    filling: &Filling,
    u: &[f64],
    basepoint: usize,
    window: (i32, i32),
) -> Result<FunctionSamples> {
    let (lo, hi) = window;
    if lo > hi || lo < filling.n_min() || hi > filling.n_max() - 1 {
        return Err(Error::invalid(format!(
            "window {lo}..={hi} must lie in {}..={}",
            filling.n_min(),
            filling.n_max() - 1
        )));
    }
    if basepoint >= filling.space().len() {
        return Err(Error::OutOfRange {
            what: "space points",
            index: basepoint,
            len: filling.space().len(),
        });
    }
    let mut out = vec![0.0; filling.space().len()];
    for n in lo..=hi {
        let term = i_n(filling, u, n)?;
        let shift = if n < 0 { term[basepoint] } else { 0.0 };
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t - shift;
        }
    }
    Ok(out)
}

/// Max over points and levels of `|sum_x psi_x - 1|`.
pub fn partition_sum_error(filling: &Filling) -> Result<f64> {
    let pou = filling.partition()?;
    let (lo, hi) = filling.level_range();
    Ok((lo..=hi)
        .map(|n| {
            let level = pou.level(n);
            (0..level.n_points())
                .map(|p| (level.at(p).iter().map(|(_, psi)| psi).sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAudit {
    /// Max of `|psi_x(a) - psi_x(b)| / (d(a,b) 2^{|x|})` over the sampled pairs.
    pub measured: f64,
    /// The partition's `lipschitz_bound`.
    pub bound: f64,
    /// Per level `(n, measured)`.
    pub levels: Vec<(i32, f64)>,
}

/// Points of `2B(x)` used per vertex by the Lipschitz audit.
const LIPSCHITZ_SAMPLE: usize = 1500;

/// Empirical Lipschitz quotients of every `psi_x` over pairs inside `2B(x)`.
pub fn lipschitz_audit(filling: &Filling) -> Result<LipschitzAudit> {
    let pou = filling.partition()?;
    let space = filling.space();
    let (lo, hi) = filling.level_range();
    let mut levels = Vec::new();
    for n in lo..=hi {
        let level = pou.level(n);
        let worst = filling
            .vertices_at_level(n)
            .into_par_iter()
            .map(|x| {
                let v = filling.vertex(x);
                let near: Vec<usize> = (0..space.len())
                    .filter(|&p| space.distance(p, v.center) < 2.0 * v.radius)
                    .collect();
                let stride = near.len().div_ceil(LIPSCHITZ_SAMPLE).max(1);
                let sample: Vec<(usize, f64)> = near
                    .iter()
                    .step_by(stride)
                    .map(|&p| (p, level.value(x, p)))
                    .collect();
                let mut q: f64 = 0.0;
                for (i, &(a, pa)) in sample.iter().enumerate() {
                    for &(b, pb) in &sample[i + 1..] {
                        let d = space.distance(a, b);
                        if d > 0.0 {
                            q = q.max((pa - pb).abs() / d);
                        }
                    }
                }
                q * dyadic(n)
            })
            .reduce(|| 0.0, f64::max);
        levels.push((n, worst));
    }
    Ok(LipschitzAudit {
        measured: levels.iter().map(|l| l.1).fold(0.0, f64::max),
        bound: pou.lipschitz_bound,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopingAudit {
    pub trials: usize,
    pub seed: u64,
    /// Per level `(n, max_v ||I_n(dv) - (T_{n+1} v - T_n v)||_inf / ||v||_inf)`.
    pub levels: Vec<(i32, f64)>,
    pub max_relative_error: f64,
}

/// Checks `I_n(dv) = T_{n+1} v - T_n v` on random vertex sequences.
pub fn telescoping_audit(filling: &Filling, trials: usize, seed: u64) -> Result<TelescopingAudit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = filling.level_range();
    let mut worst = vec![0.0f64; (hi - lo).max(0) as usize];
    for _ in 0..trials {
        let v: Vec<f64> = (0..filling.n_vertices())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dv = discrete_derivative(filling, &v)?;
        for n in lo..hi {
            let lhs = i_n(filling, &dv, n)?;
            let a = t_n(filling, &v, n + 1)?;
            let b = t_n(filling, &v, n)?;
            let err = lhs
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(l, (x, y))| (l - (x - y)).abs())
                .fold(0.0, f64::max);
            let slot = &mut worst[(n - lo) as usize];
            *slot = slot.max(err / norm);
        }
    }
    let levels: Vec<(i32, f64)> = (lo..hi).zip(worst).collect();
    Ok(TelescopingAudit {
        trials,
        seed,
        max_relative_error: levels.iter().map(|l| l.1).fold(0.0, f64::max),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filling::build_filling;
    use crate::space::{unit_cube_space, FiniteMetricMeasureSpace, Metric};

    fn interval(n: u32, hi: i32) -> Filling {
        build_filling(&unit_cube_space(1, n).unwrap(), 0, hi).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let f = interval(6, 4);
        let pf = poisson_extension(&f, &vec![2.5; 64]).unwrap();
        assert!(pf.iter().all(|&v| (v - 2.5).abs() < 1e-14));
        assert!(discrete_derivative(&f, &pf).unwrap().iter().all(|&d| d.abs() < 1e-14));
        for n in 0..=4 {
            let t = t_n(&f, &pf, n).unwrap();
            assert!(t.iter().all(|&v| (v - 2.5).abs() < 1e-14));
        }
    }

    #[test]
    fn left_half_indicator_on_root() {
        let space = unit_cube_space(1, 6).unwrap();
        let f = build_filling(&space, -1, 3).unwrap();
        let ind: Vec<f64> = space.points().map(|p| (p[0] < 0.5) as u8 as f64).collect();
        let pf = poisson_extension(&f, &ind).unwrap();
        assert_eq!(f.vertices_at_level(-1).len(), 1);
        assert!((pf[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn level_numbers_differentiate_to_crossing_indicator() {
        let f = interval(6, 4);
        let v: Vec<f64> = f.vertices().iter().map(|x| x.level as f64).collect();
        let dv = discrete_derivative(&f, &v).unwrap();
        for (e, d) in f.edges().iter().zip(dv) {
            let crossing = f.vertex(e.head).level != f.vertex(e.tail).level;
            assert_eq!(d, if crossing { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn single_vertex_partition_is_one() {
        let f = build_filling(&unit_cube_space(1, 6).unwrap(), -1, 2).unwrap();
        let level = build_partition(&f, -1).unwrap();
        for p in 0..64 {
            assert_eq!(level.at(p), &[(0, 1.0)]);
        }
    }

    #[test]
    fn disjoint_half_balls_split_cleanly() {
        let space = FiniteMetricMeasureSpace::new(
            vec![vec![0.0], vec![0.1], vec![1.0]],
            vec![1.0; 3],
            Metric::Euclidean,
            1.0 / 16.0,
            1.0,
            None,
        )
        .unwrap();
        let f = build_filling(&space, 0, 2).unwrap();
        let level = build_partition(&f, 2).unwrap();
        let ids: Vec<usize> = f.vertices_at_level(2).collect();
        assert_eq!(level.value(ids[0], 0), 1.0);
        assert_eq!(level.value(ids[1], 0), 0.0);
    }

    #[test]
    fn telescoping_identity_on_interval() {
        let audit = telescoping_audit(&interval(8, 6), 5, 7).unwrap();
        assert!(audit.max_relative_error <= 1e-12, "{audit:?}");
    }

    #[test]
    fn single_edge_product_is_at_most_one() {
        let f = interval(6, 4);
        let e = f.edges_at_level(1).find(|&e| {
            let (a, b) = (f.edge(e).tail, f.edge(e).head);
            f.vertex(a).level != f.vertex(b).level
        });
        let mut u = vec![0.0; f.n_edges()];
        u[e.unwrap()] = 1.0;
        let out = i_n(&f, &u, 1).unwrap();
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(out.iter().any(|&v| v > 0.0));
        assert!(i_n(&f, &vec![0.0; f.n_edges()], 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn telescoping_window_is_checked() {
        let f = interval(6, 4);
        let u = vec![0.0; f.n_edges()];
        assert!(telescoping_integral(&f, &u, 0, (0, 4)).is_err());
        assert!(telescoping_integral(&f, &u, 0, (2, 1)).is_err());
        let zero = telescoping_integral(&f, &u, 0, (0, 3)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn partition_sums_and_lipschitz() {
        let f = interval(8, 6);
        assert!(partition_sum_error(&f).unwrap() <= 1e-12);
        let audit = lipschitz_audit(&f).unwrap();
        assert!(audit.measured <= audit.bound, "{audit:?}");
    }
}
