//! Truncated matching: each block of the torus is decoded by a matching
//! restricted to the block plus a buffer annulus, where anyons may also
//! pair with the outer edge of the patch. Only pairs touching the block
//! are kept.
//!
//! [`agreement_probability`] measures how often this local decision agrees
//! with the global matching on the block. [`tmwpm_channel`] composes the
//! block decoders over a tiling of the torus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::lattice::{logical_coordinates, sample_errors_with, syndrome, AnyonConfig, ErrorConfig, TorusLattice};
use crate::matching::{apply_correction, solve_mwpm, Matching, MatchingProblem, Metric, Pair};
use crate::rng::stream_rng;
use crate::stats::mean_stderr;

/// A `block x block` square with top-left plaquette `origin`, surrounded by
/// a buffer of width `buffer`, on a `size x size` torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationGeometry {
    pub size: usize,
    pub origin: (usize, usize),
    pub block: usize,
    pub buffer: usize,
}

/// Default ratio of torus size to buffer width.
pub const DEFAULT_SIZE_RATIO: usize = 8;
/// Default ratio of block width to buffer width.
pub const DEFAULT_BLOCK_RATIO: usize = 2;

impl TruncationGeometry {
    pub fn new(size: usize, origin: (usize, usize), block: usize, buffer: usize) -> Result<Self> {
        TorusLattice::new(size)?;
        if block == 0 || block > size {
            return Err(Error::OutOfRange {
                name: "block",
                value: block as f64,
                expected: "between 1 and L",
            });
        }
        if origin.0 >= size || origin.1 >= size {
            return Err(Error::OutOfRange {
                name: "origin",
                value: origin.0.max(origin.1) as f64,
                expected: "below L",
            });
        }
        Ok(Self {
            size,
            origin,
            block,
            buffer,
        })
    }

    /// `L = 8a`, `b = 2a`, block centred in the torus.
    pub fn scaled(buffer: usize) -> Result<Self> {
        let size = DEFAULT_SIZE_RATIO * buffer;
        let block = DEFAULT_BLOCK_RATIO * buffer;
        Self::new(size, ((size - block) / 2, (size - block) / 2), block, buffer)
    }

    /// Side of the block plus buffer.
    pub fn patch(&self) -> usize {
        self.block + 2 * self.buffer
    }

    /// True when the patch wraps all the way round the torus, in which case
    /// the truncated problem is the global one.
    pub fn covers_torus(&self) -> bool {
        self.patch() >= self.size
    }

    pub fn in_block(&self, plaquette: usize) -> bool {
        let (r, c) = (plaquette / self.size, plaquette % self.size);
        let dr = (r + self.size - self.origin.0) % self.size;
        let dc = (c + self.size - self.origin.1) % self.size;
        dr < self.block && dc < self.block
    }

    /// Metric of the patch, `None` when it covers the torus.
    pub fn metric(&self) -> Option<Metric> {
        if self.covers_torus() {
            return None;
        }
        let l = self.size;
        let a = self.buffer % l;
        Some(Metric::Region {
            origin: ((self.origin.0 + l - a) % l, (self.origin.1 + l - a) % l),
            extent: (self.patch(), self.patch()),
        })
    }

    fn check_lattice(&self, lattice: &TorusLattice) -> Result<()> {
        if lattice.size() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "geometry is for L = {}, configuration has L = {}",
                self.size,
                lattice.size()
            )));
        }
        Ok(())
    }
}

/// The pairs a block decoder keeps, with the problem they were solved in
/// (needed to draw their strings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedMatching {
    pub problem: MatchingProblem,
    pub accepted: Matching,
}

/// Solves the matching of the anyons inside the patch, with boundary, and
/// keeps the pairs with at least one anyon in the block.
pub fn truncated_mwpm(config: &AnyonConfig, geometry: &TruncationGeometry) -> Result<TruncatedMatching> {
    let lattice = config.lattice();
    geometry.check_lattice(&lattice)?;
    let problem = match geometry.metric() {
        None => MatchingProblem::torus(config),
        Some(metric) => {
            let Metric::Region { origin, extent } = metric else { unreachable!() };
            let l = lattice.size();
            let inside: Vec<usize> = config
                .sites()
                .filter(|&p| {
                    let (r, c) = lattice.coords(p);
                    (r + l - origin.0) % l < extent.0 && (c + l - origin.1) % l < extent.1
                })
                .collect();
            MatchingProblem::new(lattice, &inside, metric, true)?
        }
    };
    let full = solve_mwpm(&problem)?;
    let mut weight = 0;
    let pairs: Vec<Pair> = full
        .pairs
        .into_iter()
        .filter(|pair| match *pair {
            Pair::Anyons(a, b) => geometry.in_block(a) || geometry.in_block(b),
            Pair::Boundary(a, _) => geometry.in_block(a),
        })
        .inspect(|pair| {
            weight += match *pair {
                Pair::Anyons(a, b) => problem.distance(a, b),
                Pair::Boundary(a, _) => problem.boundary_distance(a).map_or(0, |d| d.0),
            }
        })
        .collect();
    Ok(TruncatedMatching {
        problem,
        accepted: Matching { pairs, weight },
    })
}

/// True when every anyon of the block has the same partner in `global`
/// and in `truncated`.
pub fn agrees_on_block(global: &Matching, truncated: &Matching, geometry: &TruncationGeometry) -> bool {
    let g = global.partners();
    let t = truncated.partners();
    g.iter().filter(|(&a, _)| geometry.in_block(a)).all(|(a, partner)| t.get(a) == Some(partner))
}

/// Monte Carlo estimate of the probability that block and global
/// matchings agree on the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEstimate {
    pub p: f64,
    pub buffer: usize,
    pub block: usize,
    pub size: usize,
    pub mu: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Agreement of the truncated and global matchings on a `block` square of
/// a `size` torus, over `samples` i.i.d. bit-flip syndromes at rate `p`.
pub fn agreement_probability(p: f64, buffer: usize, block: usize, size: usize, samples: usize, seed: u64) -> Result<AgreementEstimate> {
    check_probability("p", p)?;
    if samples == 0 {
        return Err(Error::InsufficientData("zero samples requested".into()));
    }
    let corner = size.saturating_sub(block) / 2;
    let geometry = TruncationGeometry::new(size, (corner, corner), block, buffer)?;
    let lattice = TorusLattice::new(size)?;
    let hits = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let config = syndrome(&sample_errors_with(lattice, p, &mut rng)?);
            let global = solve_mwpm(&MatchingProblem::torus(&config))?;
            let local = truncated_mwpm(&config, &geometry)?;
            Ok(if agrees_on_block(&global, &local.accepted, &geometry) { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mu, stderr) = mean_stderr(hits.into_iter());
    Ok(AgreementEstimate {
        p,
        buffer,
        block,
        size,
        mu,
        stderr,
        samples,
        seed,
    })
}

/// Result of running every block decoder once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelOutcome {
    pub correction: ErrorConfig,
    /// Anyons left after the correction.
    pub residual: usize,
    /// Homology class of errors plus correction, when that chain is closed.
    pub logical: Option<(u8, u8)>,
}

/// Applies the block decoders of a `block`-wide tiling one after another in
/// row-major order. Each decoder sees the syndrome left by the previous
/// ones.
pub fn tmwpm_channel(errors: &ErrorConfig, block: usize, buffer: usize) -> Result<ChannelOutcome> {
    let lattice = errors.lattice();
    let l = lattice.size();
    if block == 0 || l % block != 0 {
        return Err(Error::OutOfRange {
            name: "block",
            value: block as f64,
            expected: "a divisor of L",
        });
    }
    let mut correction = ErrorConfig::empty(lattice);
    let mut current = syndrome(errors);
    for bi in 0..l / block {
        for bj in 0..l / block {
            let geometry = TruncationGeometry::new(l, (bi * block, bj * block), block, buffer)?;
            let local = truncated_mwpm(&current, &geometry)?;
            let step = apply_correction(&local.accepted, &local.problem);
            correction.combine(&step);
            let mut total = errors.clone();
            total.combine(&correction);
            current = syndrome(&total);
        }
    }
    let residual = current.count();
    let logical = if residual == 0 {
        Some(logical_coordinates(errors, &correction)?)
    } else {
        None
    };
    Ok(ChannelOutcome {
        correction,
        residual,
        logical,
    })
}

/// Failure statistics of the composed block decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub p: f64,
    pub size: usize,
    pub block: usize,
    pub buffer: usize,
    pub samples: usize,
    /// Samples with anyons left over.
    pub residual: usize,
    /// Samples with anyons left over or a non-trivial logical class.
    pub failures: usize,
    pub rate: f64,
    pub stderr: f64,
}

pub fn tmwpm_failure_rate(p: f64, size: usize, block: usize, buffer: usize, samples: usize, seed: u64) -> Result<ChannelEstimate> {
    check_probability("p", p)?;
    if samples == 0 {
        return Err(Error::InsufficientData("zero samples requested".into()));
    }
    let lattice = TorusLattice::new(size)?;
    let outcomes = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            tmwpm_channel(&sample_errors_with(lattice, p, &mut rng)?, block, buffer)
        })
        .collect::<Result<Vec<_>>>()?;
    let residual = outcomes.iter().filter(|o| o.residual > 0).count();
    let failures = outcomes.iter().filter(|o| o.logical != Some((0, 0))).count();
    let rate = failures as f64 / samples as f64;
    Ok(ChannelEstimate {
        p,
        size,
        block,
        buffer,
        samples,
        residual,
        failures,
        rate,
        stderr: (rate * (1.0 - rate) / samples as f64).sqrt(),
    })
}
