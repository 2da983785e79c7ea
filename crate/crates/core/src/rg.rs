//! Block renormalization of anyon configurations.
//!
//! One step pairs up anyons inside the 2x2 blocks of the shifted tiling,
//! then replaces each block of the unshifted tiling by the parity of its
//! anyon count. Repeating this on a sample of bit-flip syndromes gives the
//! flow of the anyon density, whose fate (zero or finite) separates the
//! correctable phase from the uncorrectable one.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::lattice::{annihilate_in_place, blocks, parity_coarse_block, sample_errors_with, syndrome, AnyonConfig, Block, TorusLattice};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{crossing, fit_line, mean_stderr, percentile_interval};

/// Which 2x2 tiling is used for pair annihilation and which for
/// coarse-graining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgConvention {
    pub pairing_offset: (usize, usize),
    pub coarse_offset: (usize, usize),
}

impl Default for RgConvention {
    fn default() -> Self {
        Self {
            pairing_offset: (1, 1),
            coarse_offset: (0, 0),
        }
    }
}

impl RgConvention {
    /// The default with the roles of the two tilings exchanged.
    pub fn swapped() -> Self {
        let d = Self::default();
        Self {
            pairing_offset: d.coarse_offset,
            coarse_offset: d.pairing_offset,
        }
    }
}

fn check_rg_size(size: usize) -> Result<()> {
    if size < 4 || !size.is_power_of_two() {
        return Err(Error::InvalidLattice {
            size,
            reason: "renormalization needs a power of two of at least 4",
        });
    }
    Ok(())
}

/// One renormalization step with the default tiling convention.
pub fn rg_step(config: &AnyonConfig) -> Result<AnyonConfig> {
    rg_step_with(config, RgConvention::default())
}

pub fn rg_step_with(config: &AnyonConfig, convention: RgConvention) -> Result<AnyonConfig> {
    let lattice = config.lattice();
    check_rg_size(lattice.size())?;
    let mut paired = config.clone();
    for block in blocks(&lattice, convention.pairing_offset) {
        annihilate_in_place(&mut paired, block);
    }
    let half = lattice.size() / 2;
    let coarse_lattice = TorusLattice::new(half)?;
    let (r0, c0) = convention.coarse_offset;
    let mut sites = Vec::new();
    for i in 0..half {
        for j in 0..half {
            let block = Block {
                row: (r0 + 2 * i) % lattice.size(),
                col: (c0 + 2 * j) % lattice.size(),
            };
            if parity_coarse_block(&paired, block) {
                sites.push(coarse_lattice.plaquette(i, j));
            }
        }
    }
    AnyonConfig::from_plaquettes(coarse_lattice, &sites)
}

/// Densities along repeated renormalization, for one `p` and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgTrajectory {
    pub p: f64,
    pub seed: u64,
    /// Mean anyon density per plaquette at each level, starting with the
    /// raw syndrome.
    pub densities: Vec<f64>,
    pub stderr: Vec<f64>,
    pub sizes: Vec<usize>,
    pub samples: usize,
    /// `per_sample[i][level]`, kept for resampling.
    pub per_sample: Vec<Vec<f64>>,
}

impl RgTrajectory {
    fn from_samples(p: f64, seed: u64, sizes: Vec<usize>, per_sample: Vec<Vec<f64>>) -> Self {
        let levels = sizes.len();
        let n = per_sample.len();
        let mut densities = vec![0.0; levels];
        let mut stderr = vec![0.0; levels];
        for l in 0..levels {
            let (mean, se) = mean_stderr(per_sample.iter().map(|s| s[l]));
            densities[l] = mean;
            stderr[l] = se;
        }
        Self {
            p,
            seed,
            densities,
            stderr,
            sizes,
            samples: n,
            per_sample,
        }
    }

    fn resampled(&self, indices: &[usize]) -> Vec<f64> {
        let n = indices.len() as f64;
        (0..self.sizes.len())
            .map(|l| indices.iter().map(|&i| self.per_sample[i][l]).sum::<f64>() / n)
            .collect()
    }
}

/// Samples `samples` bit-flip syndromes at rate `p` on an `size x size`
/// torus and follows each through `levels` renormalization steps.
pub fn density_flow(p: f64, size: usize, levels: usize, samples: usize, seed: u64) -> Result<RgTrajectory> {
    density_flow_with(p, size, levels, samples, seed, RgConvention::default())
}

pub fn density_flow_with(
    p: f64,
    size: usize,
    levels: usize,
    samples: usize,
    seed: u64,
    convention: RgConvention,
) -> Result<RgTrajectory> {
    check_probability("p", p)?;
    check_rg_size(size)?;
    let max_levels = size.trailing_zeros() as usize - 1;
    if levels > max_levels {
        return Err(Error::OutOfRange {
            name: "levels",
            value: levels as f64,
            expected: "at most log2(L) - 1",
        });
    }
    if samples == 0 {
        return Err(Error::InsufficientData("zero samples requested".into()));
    }
    let lattice = TorusLattice::new(size)?;
    let sizes: Vec<usize> = (0..=levels).map(|l| size >> l).collect();
    let per_sample = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            run_one(lattice, p, levels, convention, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RgTrajectory::from_samples(p, seed, sizes, per_sample))
}

fn run_one<R: Rng>(lattice: TorusLattice, p: f64, levels: usize, convention: RgConvention, rng: &mut R) -> Result<Vec<f64>> {
    let errors = sample_errors_with(lattice, p, rng)?;
    let mut config = syndrome(&errors);
    let mut out = Vec::with_capacity(levels + 1);
    out.push(config.density());
    for _ in 0..levels {
        config = rg_step_with(&config, convention)?;
        out.push(config.density());
    }
    Ok(out)
}

/// A threshold with its bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub p_c: f64,
    pub ci: (f64, f64),
    pub method: String,
    /// `(L, p_c)` for every size scanned.
    pub per_size: Vec<(usize, f64)>,
}

pub const THRESHOLD_METHOD: &str = "crossing of terminal density with initial density, linear interpolation on the p grid, 95% bootstrap over samples";

/// Bootstrap replicas used for confidence intervals.
pub const BOOTSTRAP_REPLICAS: usize = 400;

/// Locates the `p` where renormalization stops lowering the anyon density,
/// i.e. where the density after `levels` steps equals the raw density.
///
/// The estimate reported is the one for the largest size; the interval is
/// the 2.5% to 97.5% range over bootstrap resamples of the samples at that
/// size.
pub fn estimate_threshold(sizes: &[usize], p_grid: &[f64], levels: usize, samples: usize, seed: u64) -> Result<ThresholdEstimate> {
    estimate_threshold_with(sizes, p_grid, levels, samples, seed, RgConvention::default())
}

pub fn estimate_threshold_with(
    sizes: &[usize],
    p_grid: &[f64],
    levels: usize,
    samples: usize,
    seed: u64,
    convention: RgConvention,
) -> Result<ThresholdEstimate> {
    if sizes.is_empty() || p_grid.len() < 2 {
        return Err(Error::InsufficientData("need at least one size and two grid points".into()));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut per_size = Vec::new();
    let mut last = None;
    for (si, &size) in sizes.iter().enumerate() {
        let trajectories = grid
            .iter()
            .enumerate()
            .map(|(pi, &p)| density_flow_with(p, size, levels, samples, derive_seed(seed, (si * grid.len() + pi) as u64), convention))
            .collect::<Result<Vec<_>>>()?;
        let p_c = threshold_from_trajectories(&trajectories)?;
        per_size.push((size, p_c));
        last = Some((p_c, trajectories));
    }
    let (p_c, trajectories) = last.expect("at least one size");
    let ci = bootstrap_threshold(&trajectories, p_c, derive_seed(seed, u64::MAX));
    Ok(ThresholdEstimate {
        p_c,
        ci,
        method: THRESHOLD_METHOD.to_string(),
        per_size,
    })
}

/// Crossing of `q_last - q_first` through zero along trajectories sorted by
/// `p`.
pub fn threshold_from_trajectories(trajectories: &[RgTrajectory]) -> Result<f64> {
    let points: Vec<(f64, f64)> = trajectories
        .iter()
        .map(|t| (t.p, t.densities[t.densities.len() - 1] - t.densities[0]))
        .collect();
    crossing(&points).ok_or(Error::NoCrossing)
}

fn bootstrap_threshold(trajectories: &[RgTrajectory], p_c: f64, seed: u64) -> (f64, f64) {
    let estimates: Vec<f64> = (0..BOOTSTRAP_REPLICAS as u64)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = stream_rng(seed, r);
            let points: Vec<(f64, f64)> = trajectories
                .iter()
                .map(|t| {
                    let idx: Vec<usize> = (0..t.samples).map(|_| rng.random_range(0..t.samples)).collect();
                    let q = t.resampled(&idx);
                    (t.p, q[q.len() - 1] - q[0])
                })
                .collect();
            crossing(&points)
        })
        .collect();
    percentile_interval(estimates, p_c)
}

/// Slope of `log q(l+1)` against `log q(l)` near the clean fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub intercept: f64,
    pub ci: (f64, f64),
    /// `(log q(l), log q(l+1))` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
}

/// Upper end of the density window used for the exponent fit.
pub const GAMMA_WINDOW_CAP: f64 = 0.05;
/// Minimum expected anyon count `q L^2` at the lower level of a fit point.
pub const GAMMA_MIN_ANYONS: f64 = 10.0;

/// Runs [`density_flow`] for each `p` and fits the contraction exponent.
pub fn fit_gamma(p_list: &[f64], size: usize, levels: usize, samples: usize, seed: u64) -> Result<GammaFit> {
    let trajectories = p_list
        .iter()
        .enumerate()
        .map(|(i, &p)| density_flow(p, size, levels, samples, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    fit_gamma_trajectories(&trajectories, derive_seed(seed, u64::MAX))
}

fn window_points(densities: &[f64], sizes: &[usize]) -> Vec<(f64, f64)> {
    (0..densities.len().saturating_sub(1))
        .filter(|&l| {
            let q = densities[l];
            let expected = q * (sizes[l] * sizes[l]) as f64;
            q > 0.0 && q < GAMMA_WINDOW_CAP && expected >= GAMMA_MIN_ANYONS && densities[l + 1] > 0.0
        })
        .map(|l| (densities[l].ln(), densities[l + 1].ln()))
        .collect()
}

/// Least-squares fit over all windowed level pairs of all trajectories,
/// with a bootstrap interval from resampling the samples of each one.
pub fn fit_gamma_trajectories(trajectories: &[RgTrajectory], seed: u64) -> Result<GammaFit> {
    let points: Vec<(f64, f64)> = trajectories.iter().flat_map(|t| window_points(&t.densities, &t.sizes)).collect();
    let (gamma, intercept) = fit_line(&points)?;
    let replicas: Vec<f64> = (0..BOOTSTRAP_REPLICAS as u64)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = stream_rng(seed, r);
            let pts: Vec<(f64, f64)> = trajectories
                .iter()
                .flat_map(|t| {
                    let idx: Vec<usize> = (0..t.samples).map(|_| rng.random_range(0..t.samples)).collect();
                    window_points(&t.resampled(&idx), &t.sizes)
                })
                .collect();
            fit_line(&pts).ok().map(|(g, _)| g)
        })
        .collect();
    Ok(GammaFit {
        gamma,
        intercept,
        ci: percentile_interval(replicas, gamma),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(l: usize) -> TorusLattice {
        TorusLattice::new(l).unwrap()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(rg_step(&AnyonConfig::vacuum(lat(2))).is_err());
        assert!(rg_step(&AnyonConfig::vacuum(lat(6))).is_err());
        assert!(density_flow(0.1, 8, 3, 4, 0).is_err());
    }

    #[test]
    fn empty_stays_empty() {
        let out = rg_step(&AnyonConfig::vacuum(lat(8))).unwrap();
        assert_eq!(out.lattice().size(), 4);
        assert_eq!(out.count(), 0);
    }

    #[test]
    fn pair_inside_odd_block_is_removed() {
        let l = lat(8);
        let c = AnyonConfig::from_plaquettes(l, &[l.plaquette(1, 1), l.plaquette(2, 2)]).unwrap();
        assert_eq!(rg_step(&c).unwrap().count(), 0);
    }

    // Pairing blocks cover rows and columns {1,2}, {3,4}, {5,6}, {7,0};
    // coarse blocks cover {0,1}, {2,3}, {4,5}, {6,7}.
    #[test]
    fn pair_split_across_coarse_blocks_survives() {
        let l = lat(8);
        let c = AnyonConfig::from_plaquettes(l, &[l.plaquette(0, 1), l.plaquette(1, 2)]).unwrap();
        let out = rg_step(&c).unwrap();
        let coarse = out.lattice();
        assert_eq!(out.sites().collect::<Vec<_>>(), vec![coarse.plaquette(0, 0), coarse.plaquette(0, 1)]);
    }

    #[test]
    fn pair_inside_one_coarse_block_fuses() {
        let l = lat(8);
        let c = AnyonConfig::from_plaquettes(l, &[l.plaquette(0, 0), l.plaquette(1, 1)]).unwrap();
        assert_eq!(rg_step(&c).unwrap().count(), 0);
    }

    #[test]
    fn swapped_convention_uses_the_other_tiling() {
        let l = lat(8);
        let c = AnyonConfig::from_plaquettes(l, &[l.plaquette(0, 1), l.plaquette(1, 2)]).unwrap();
        let out = rg_step_with(&c, RgConvention::swapped()).unwrap();
        assert_eq!(out.count(), 2);
        let c = AnyonConfig::from_plaquettes(l, &[l.plaquette(0, 0), l.plaquette(1, 1)]).unwrap();
        assert_eq!(rg_step_with(&c, RgConvention::swapped()).unwrap().count(), 0);
    }

    #[test]
    fn zero_noise_flow_is_flat() {
        let t = density_flow(0.0, 16, 3, 5, 1).unwrap();
        assert!(t.densities.iter().all(|&q| q == 0.0));
        assert_eq!(t.sizes, vec![16, 8, 4, 2]);
    }

    #[test]
    fn flow_is_deterministic_and_bounded() {
        let a = density_flow(0.05, 32, 4, 20, 99).unwrap();
        let b = density_flow(0.05, 32, 4, 20, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.densities.iter().all(|&q| (0.0..=1.0).contains(&q)));
    }

    #[test]
    fn gamma_needs_nonzero_densities() {
        assert!(matches!(fit_gamma(&[0.0], 32, 3, 4, 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn grids_on_one_side_have_no_crossing() {
        let low = [0.005, 0.01, 0.015];
        assert_eq!(estimate_threshold(&[32], &low, 3, 40, 3), Err(Error::NoCrossing));
        let high = [0.09, 0.12, 0.15];
        assert_eq!(estimate_threshold(&[32], &high, 3, 40, 3), Err(Error::NoCrossing));
    }
}
