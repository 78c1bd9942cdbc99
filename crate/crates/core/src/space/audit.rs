use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FiniteMetricMeasureSpace, SubsetMask};
use crate::error::{Error, Result};

/// Ball-mass scans use every point as a centre up to this many points and an
/// evenly strided subset beyond it.
pub const MAX_AUDIT_CENTERS: usize = 4096;

fn audit_centers(n: usize) -> Vec<usize> {
    if n <= MAX_AUDIT_CENTERS {
        (0..n).collect()
    } else {
        (0..MAX_AUDIT_CENTERS)
            .map(|k| k * n / MAX_AUDIT_CENTERS)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhlforsFit {
    pub q_hat: f64,
    pub c_lo: f64,
    pub c_hi: f64,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn check_radii(space: &FiniteMetricMeasureSpace, radii: &[f64], min_count: usize) -> Result<()> {
    if radii.len() < min_count {
        return Err(Error::invalid(format!("at least {min_count} radii are required")));
    }
    let floor = 4.0 * space.resolution();
    for &r in radii {
        if !(r.is_finite() && r >= floor && r <= space.declared_diam()) {
            return Err(Error::invalid(format!(
                "radius {r} lies outside [{floor}, {}]",
                space.declared_diam()
            )));
        }
    }
    Ok(())
}

/// Fits `mu(B(xi, r)) ~ r^Q` on the upper envelope `max_xi mu(B(xi, r))`.
///
/// Boundary centres of sets with a boundary lose mass to clipping, so the
/// envelope rather than the mean carries the exponent. `c_lo`/`c_hi` bound
/// `mu(B(xi,r)) r^{-Q_hat}` over all sampled centres and radii.
pub fn ahlfors_fit(space: &FiniteMetricMeasureSpace, radii: &[f64]) -> Result<AhlforsFit> {
    if space.len() < 2 {
        return Err(Error::invalid("a single-point space has no scaling exponent"));
    }
    check_radii(space, radii, 3)?;
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 3 {
        return Err(Error::invalid("at least 3 distinct radii are required"));
    }
    let centers = audit_centers(space.len());
    let masses: Vec<Vec<f64>> = sorted
        .iter()
        .map(|&r| {
            centers
                .par_iter()
                .map(|&c| space.ball_mass(c, r))
                .collect()
        })
        .collect();
    let xs: Vec<f64> = sorted.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = masses
        .iter()
        .map(|m| m.iter().copied().fold(0.0, f64::max).ln())
        .collect();
    let q_hat = least_squares_slope(&xs, &ys);
    let mut c_lo = f64::INFINITY;
    let mut c_hi: f64 = 0.0;
    for (r, m) in sorted.iter().zip(&masses) {
        let scale = r.powf(-q_hat);
        for &v in m {
            c_lo = c_lo.min(v * scale);
            c_hi = c_hi.max(v * scale);
        }
    }
    Ok(AhlforsFit { q_hat, c_lo, c_hi })
}

/// Smallest `C` with `mu(B(xi, 2r)) <= C 2^Q mu(B(xi, r))` over the sampled
/// centres and the given radii.
pub fn doubling_constant(space: &FiniteMetricMeasureSpace, radii: &[f64]) -> Result<f64> {
    check_radii(space, radii, 1)?;
    let q = space.declared_q();
    let centers = audit_centers(space.len());
    let worst = radii
        .iter()
        .map(|&r| {
            centers
                .par_iter()
                .map(|&c| space.ball_mass(c, 2.0 * r) / space.ball_mass(c, r))
                .reduce(|| 0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(worst / 2f64.powf(q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorosityScan {
    /// Largest grid value for which every tested ball had a witness.
    pub largest_c: Option<f64>,
    pub radii: Vec<f64>,
    /// `(c, passed)` for every grid value, in grid order.
    pub results: Vec<(f64, bool)>,
    pub balls_tested: usize,
}

/// Default porosity grid `1/2, 1/4, ..., 1/64`.
pub fn default_porosity_grid() -> Vec<f64> {
    (1..=6).map(|k| 0.5f64.powi(k)).collect()
}

/// Searches, for each `c` in the grid, every ball `B(xi, r)` meeting `F` with
/// `r` dyadic in `[4 resolution, diam)` for a point `eta` such that
/// `B(eta, cr)` lies in `B` and misses `F`.
pub fn porosity_scan(
    space: &FiniteMetricMeasureSpace,
    mask: &SubsetMask,
    c_grid: &[f64],
) -> Result<PorosityScan> {
    mask.check_against(space)?;
    if let Some(&c) = c_grid.iter().find(|&&c| !(c > 0.0 && c < 1.0)) {
        return Err(Error::invalid(format!("porosity constant {c} outside (0,1)")));
    }
    let dist_f = mask.distances_to(space);
    let floor = 4.0 * space.resolution();
    let diam = space.declared_diam();
    let mut radii = Vec::new();
    let mut k = (diam.log2().ceil() as i32) + 1;
    loop {
        let r = 2f64.powi(k);
        if r < floor {
            break;
        }
        if r < diam {
            radii.push(r);
        }
        k -= 1;
    }
    let centers = audit_centers(space.len());
    let n = space.len();
    let mut balls_tested = 0;
    let mut results = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let mut ok = true;
        for &r in &radii {
            let tested: Vec<usize> = centers
                .iter()
                .copied()
                .filter(|&x| dist_f[x] < r)
                .collect();
            balls_tested += tested.len();
            let all_have_witness = tested.par_iter().all(|&x| {
                (0..n).any(|eta| dist_f[eta] >= c * r && space.distance(x, eta) + c * r <= r)
            });
            if !all_have_witness {
                ok = false;
                break;
            }
        }
        results.push((c, ok));
    }
    let largest_c = results
        .iter()
        .filter(|(_, ok)| *ok)
        .map(|(c, _)| *c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    Ok(PorosityScan {
        largest_c,
        radii,
        results,
        balls_tested,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodimBand {
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

impl CodimBand {
    pub fn width(&self) -> f64 {
        self.ratio_hi / self.ratio_lo
    }
}

/// Band of `mu(B(xi,r)) / nu(B(xi,r) ∩ F) * r^{-gamma}` over centres in `F`.
pub fn codim_regularity_check(
    space: &FiniteMetricMeasureSpace,
    mask: &SubsetMask,
    gamma: f64,
    radii: &[f64],
) -> Result<CodimBand> {
    mask.check_against(space)?;
    check_radii(space, radii, 1)?;
    let members = mask.indices();
    let nu = mask.weights();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &r in radii {
        let (l, h) = members
            .par_iter()
            .map(|&c| {
                let mut mu_mass = 0.0;
                let mut nu_mass = 0.0;
                for j in 0..space.len() {
                    if space.distance(c, j) < r {
                        mu_mass += space.weight(j);
                        nu_mass += nu[j];
                    }
                }
                let ratio = mu_mass / nu_mass * r.powf(-gamma);
                (ratio, ratio)
            })
            .reduce(
                || (f64::INFINITY, 0.0),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        lo = lo.min(l);
        hi = hi.max(h);
    }
    Ok(CodimBand {
        ratio_lo: lo,
        ratio_hi: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ifs_attractor, unit_cube_space, IfsSystem, Metric};

    #[test]
    fn interval_exponent_is_one() {
        let space = unit_cube_space(1, 10).unwrap();
        let radii: Vec<f64> = (2..=8).map(|k| 0.5f64.powi(k)).collect();
        let fit = ahlfors_fit(&space, &radii).unwrap();
        assert!((0.95..=1.05).contains(&fit.q_hat), "{fit:?}");
        assert!(fit.c_lo > 0.0 && fit.c_hi < 4.0);
    }

    #[test]
    fn fit_needs_three_radii() {
        let space = unit_cube_space(1, 6).unwrap();
        assert!(ahlfors_fit(&space, &[0.25, 0.125]).is_err());
    }

    #[test]
    fn fit_rejects_single_point() {
        let space = FiniteMetricMeasureSpace::new(
            vec![vec![0.0]],
            vec![1.0],
            Metric::Euclidean,
            0.01,
            1.0,
            Some(1.0),
        )
        .unwrap();
        assert!(ahlfors_fit(&space, &[0.1, 0.2, 0.4]).is_err());
    }

    #[test]
    fn whole_space_is_not_porous() {
        let space = unit_cube_space(1, 6).unwrap();
        let mask = SubsetMask::uniform(vec![true; space.len()], 1.0).unwrap();
        let scan = porosity_scan(&space, &mask, &default_porosity_grid()).unwrap();
        assert_eq!(scan.largest_c, None);
    }

    #[test]
    fn identical_measures_give_unit_band() {
        let space = unit_cube_space(1, 8).unwrap();
        let mask = SubsetMask::new(vec![true; space.len()], 1.0, space.weights().to_vec()).unwrap();
        let band = codim_regularity_check(&space, &mask, 0.0, &[0.05, 0.1, 0.2]).unwrap();
        assert!((band.ratio_lo - 1.0).abs() < 1e-12 && (band.ratio_hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cube_doubling_constant_is_uniform() {
        let space = unit_cube_space(2, 5).unwrap();
        let c = doubling_constant(&space, &[0.125, 0.25, 0.5]).unwrap();
        assert!(c >= 0.25 && c <= 1.5, "{c}");
    }

    #[test]
    fn cantor_is_porous_in_itself_only_trivially() {
        let (space, _) = ifs_attractor(&IfsSystem::middle_thirds_cantor(5), None).unwrap();
        let mask = SubsetMask::uniform(vec![true; space.len()], space.declared_q()).unwrap();
        let scan = porosity_scan(&space, &mask, &[0.5, 0.25]).unwrap();
        assert_eq!(scan.largest_c, None);
    }
}
