//! Periodic square lattice, bit-flip chains and their anyon syndromes.
//!
//! Plaquette `(row, col)` owns two edges: its north edge at index
//! `2 * (row * L + col)` and its west edge at the next index. Its south and
//! east edges are owned by the plaquettes below and to the right. A flipped
//! edge creates or annihilates an anyon on each of the two plaquettes that
//! share it.

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::rng::stream_rng;

/// An `L x L` periodic lattice. `L` is even so that 2x2 blocks tile it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusLattice {
    size: usize,
}

impl TorusLattice {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidLattice {
                size,
                reason: "size must be at least 2",
            });
        }
        if size % 2 != 0 {
            return Err(Error::InvalidLattice {
                size,
                reason: "size must be even",
            });
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_plaquettes(&self) -> usize {
        self.size * self.size
    }

    pub fn num_edges(&self) -> usize {
        2 * self.size * self.size
    }

    /// Row-major plaquette index; coordinates wrap.
    pub fn plaquette(&self, row: usize, col: usize) -> usize {
        (row % self.size) * self.size + col % self.size
    }

    pub fn coords(&self, plaquette: usize) -> (usize, usize) {
        (plaquette / self.size, plaquette % self.size)
    }

    pub fn north_edge(&self, row: usize, col: usize) -> usize {
        2 * self.plaquette(row, col)
    }

    pub fn west_edge(&self, row: usize, col: usize) -> usize {
        2 * self.plaquette(row, col) + 1
    }

    pub fn south_edge(&self, row: usize, col: usize) -> usize {
        self.north_edge(row + 1, col)
    }

    pub fn east_edge(&self, row: usize, col: usize) -> usize {
        self.west_edge(row, col + 1)
    }

    /// North, south, west, east.
    pub fn plaquette_edges(&self, row: usize, col: usize) -> [usize; 4] {
        [
            self.north_edge(row, col),
            self.south_edge(row, col),
            self.west_edge(row, col),
            self.east_edge(row, col),
        ]
    }

    /// The two plaquettes separated by `edge`.
    pub fn edge_plaquettes(&self, edge: usize) -> [usize; 2] {
        let owner = edge / 2;
        let (row, col) = self.coords(owner);
        let other = if edge % 2 == 0 {
            self.plaquette(row + self.size - 1, col)
        } else {
            self.plaquette(row, col + self.size - 1)
        };
        [owner, other]
    }

    /// Edges meeting at the north-west corner of plaquette `(row, col)`.
    pub fn vertex_star(&self, row: usize, col: usize) -> [usize; 4] {
        let l = self.size;
        [
            self.north_edge(row, col),
            self.north_edge(row, col + l - 1),
            self.west_edge(row, col),
            self.west_edge(row + l - 1, col),
        ]
    }

    /// Edge crossed when stepping from `(row, col)` one column to the right.
    pub fn step_right(&self, row: usize, col: usize) -> usize {
        self.east_edge(row, col)
    }

    /// Edge crossed when stepping from `(row, col)` one row down.
    pub fn step_down(&self, row: usize, col: usize) -> usize {
        self.south_edge(row, col)
    }
}

/// A set of flipped edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorConfig {
    lattice: TorusLattice,
    flipped: FixedBitSet,
}

impl ErrorConfig {
    pub fn empty(lattice: TorusLattice) -> Self {
        Self {
            lattice,
            flipped: FixedBitSet::with_capacity(lattice.num_edges()),
        }
    }

    pub fn from_edges(lattice: TorusLattice, edges: &[usize]) -> Result<Self> {
        let mut config = Self::empty(lattice);
        for &e in edges {
            if e >= lattice.num_edges() {
                return Err(Error::DimensionMismatch(format!(
                    "edge {e} outside a lattice with {} edges",
                    lattice.num_edges()
                )));
            }
            config.toggle(e);
        }
        Ok(config)
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn is_flipped(&self, edge: usize) -> bool {
        self.flipped.contains(edge)
    }

    pub fn toggle(&mut self, edge: usize) {
        self.flipped.toggle(edge);
    }

    pub fn weight(&self) -> usize {
        self.flipped.count_ones(..)
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.flipped.ones()
    }

    /// Adds `other` modulo 2.
    pub fn combine(&mut self, other: &ErrorConfig) {
        debug_assert_eq!(self.lattice, other.lattice);
        self.flipped.symmetric_difference_with(&other.flipped);
    }
}

/// Anyon occupation of every plaquette. The total count is always even.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnyonConfig {
    lattice: TorusLattice,
    occupied: FixedBitSet,
}

impl AnyonConfig {
    pub fn vacuum(lattice: TorusLattice) -> Self {
        Self {
            lattice,
            occupied: FixedBitSet::with_capacity(lattice.num_plaquettes()),
        }
    }

    /// Builds a configuration from occupied plaquette indices. Repeated
    /// indices cancel in pairs.
    pub fn from_plaquettes(lattice: TorusLattice, sites: &[usize]) -> Result<Self> {
        let mut config = Self::vacuum(lattice);
        for &s in sites {
            if s >= lattice.num_plaquettes() {
                return Err(Error::DimensionMismatch(format!(
                    "plaquette {s} outside a lattice with {} plaquettes",
                    lattice.num_plaquettes()
                )));
            }
            config.occupied.toggle(s);
        }
        if config.count() % 2 != 0 {
            return Err(Error::OddParity);
        }
        Ok(config)
    }

    /// Independent occupation with probability `p` per plaquette,
    /// conditioned on even total parity. This is the anyon distribution of
    /// the thermal toric code with `p = 1 / (1 + e^{2 beta})`.
    pub fn sample_thermal<R: Rng + ?Sized>(lattice: TorusLattice, p: f64, rng: &mut R) -> Result<Self> {
        check_probability("p", p)?;
        if p == 1.0 && lattice.num_plaquettes() % 2 != 0 {
            return Err(Error::OddParity);
        }
        loop {
            let mut config = Self::vacuum(lattice);
            for s in 0..lattice.num_plaquettes() {
                if rng.random::<f64>() < p {
                    config.occupied.insert(s);
                }
            }
            if config.count() % 2 == 0 {
                return Ok(config);
            }
        }
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn is_occupied(&self, plaquette: usize) -> bool {
        self.occupied.contains(plaquette)
    }

    pub fn count(&self) -> usize {
        self.occupied.count_ones(..)
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.lattice.num_plaquettes() as f64
    }

    /// Occupied plaquettes in increasing index order.
    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupied.ones()
    }

    /// Moves or fuses anyons at both ends of a flipped edge.
    pub(crate) fn toggle_edge(&mut self, edge: usize) {
        for s in self.lattice.edge_plaquettes(edge) {
            self.occupied.toggle(s);
        }
    }

    pub(crate) fn clear_site(&mut self, plaquette: usize) {
        self.occupied.set(plaquette, false);
    }
}

/// A 2x2 block addressed by its north-west plaquette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block {
    pub row: usize,
    pub col: usize,
}

impl Block {
    /// Plaquette indices in row-major order within the block.
    pub fn plaquettes(&self, lattice: &TorusLattice) -> [usize; 4] {
        let (r, c) = (self.row, self.col);
        [
            lattice.plaquette(r, c),
            lattice.plaquette(r, c + 1),
            lattice.plaquette(r + 1, c),
            lattice.plaquette(r + 1, c + 1),
        ]
    }
}

/// All 2x2 blocks of the tiling whose north-west corners sit at
/// `offset + (2i, 2j)`.
pub fn blocks(lattice: &TorusLattice, offset: (usize, usize)) -> impl Iterator<Item = Block> {
    let l = lattice.size();
    let (r0, c0) = (offset.0 % l, offset.1 % l);
    (0..l / 2).flat_map(move |i| {
        (0..l / 2).map(move |j| Block {
            row: (r0 + 2 * i) % l,
            col: (c0 + 2 * j) % l,
        })
    })
}

/// Samples every edge independently with flip probability `p`.
pub fn sample_errors(lattice: TorusLattice, p: f64, seed: u64) -> Result<ErrorConfig> {
    let mut rng = stream_rng(seed, 0);
    sample_errors_with(lattice, p, &mut rng)
}

pub fn sample_errors_with<R: Rng + ?Sized>(lattice: TorusLattice, p: f64, rng: &mut R) -> Result<ErrorConfig> {
    check_probability("p", p)?;
    let mut config = ErrorConfig::empty(lattice);
    for e in 0..lattice.num_edges() {
        if rng.random::<f64>() < p {
            config.flipped.insert(e);
        }
    }
    Ok(config)
}

/// Plaquettes bordered by an odd number of flipped edges.
pub fn syndrome(errors: &ErrorConfig) -> AnyonConfig {
    let mut anyons = AnyonConfig::vacuum(errors.lattice);
    for e in errors.edges() {
        anyons.toggle_edge(e);
    }
    anyons
}

/// Homology class of `errors + corrections` as
/// `(horizontal winding, vertical winding)` parities. The combined chain must
/// have an empty syndrome.
pub fn logical_coordinates(errors: &ErrorConfig, corrections: &ErrorConfig) -> Result<(u8, u8)> {
    if errors.lattice != corrections.lattice {
        return Err(Error::DimensionMismatch("chains live on different lattices".into()));
    }
    let mut total = errors.clone();
    total.combine(corrections);
    let remaining = syndrome(&total).count();
    if remaining != 0 {
        return Err(Error::OpenChain(remaining));
    }
    let lattice = total.lattice;
    let l = lattice.size();
    let horizontal = (0..l).filter(|&r| total.is_flipped(lattice.west_edge(r, 0))).count() % 2;
    let vertical = (0..l).filter(|&c| total.is_flipped(lattice.north_edge(0, c))).count() % 2;
    Ok((horizontal as u8, vertical as u8))
}

/// Removes all anyons of `block` when it holds an even number of them.
pub fn pair_annihilation_block(config: &AnyonConfig, block: Block) -> AnyonConfig {
    let mut out = config.clone();
    annihilate_in_place(&mut out, block);
    out
}

pub(crate) fn annihilate_in_place(config: &mut AnyonConfig, block: Block) {
    let sites = block.plaquettes(&config.lattice);
    let count = sites.iter().filter(|&&s| config.is_occupied(s)).count();
    if count % 2 == 0 {
        for s in sites {
            config.clear_site(s);
        }
    }
}

/// Parity of the anyon count inside `block`.
pub fn parity_coarse_block(config: &AnyonConfig, block: Block) -> bool {
    block
        .plaquettes(&config.lattice)
        .iter()
        .filter(|&&s| config.is_occupied(s))
        .count()
        % 2
        == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(l: usize) -> TorusLattice {
        TorusLattice::new(l).unwrap()
    }

    #[test]
    fn rejects_odd_or_tiny_sizes() {
        assert!(TorusLattice::new(0).is_err());
        assert!(TorusLattice::new(3).is_err());
        assert!(TorusLattice::new(2).is_ok());
    }

    #[test]
    fn every_edge_borders_two_distinct_plaquettes_whose_boundaries_contain_it() {
        let l = lat(4);
        for e in 0..l.num_edges() {
            let [a, b] = l.edge_plaquettes(e);
            assert_ne!(a, b);
            for s in [a, b] {
                let (r, c) = l.coords(s);
                assert!(l.plaquette_edges(r, c).contains(&e));
            }
        }
    }

    #[test]
    fn single_flip_creates_adjacent_pair() {
        let l = lat(4);
        let errs = ErrorConfig::from_edges(l, &[l.east_edge(1, 3)]).unwrap();
        let s: Vec<_> = syndrome(&errs).sites().collect();
        assert_eq!(s, vec![l.plaquette(1, 0), l.plaquette(1, 3)]);
    }

    #[test]
    fn vertex_star_has_empty_syndrome_and_trivial_class() {
        let l = lat(4);
        let star = ErrorConfig::from_edges(l, &l.vertex_star(2, 0)).unwrap();
        assert_eq!(syndrome(&star).count(), 0);
        assert_eq!(logical_coordinates(&star, &ErrorConfig::empty(l)).unwrap(), (0, 0));
    }

    #[test]
    fn plaquette_boundary_is_not_closed() {
        let l = lat(4);
        let b = ErrorConfig::from_edges(l, &l.plaquette_edges(1, 1)).unwrap();
        assert_eq!(syndrome(&b).count(), 4);
    }

    #[test]
    fn noncontractible_loops_have_unit_coordinates() {
        let l = lat(6);
        let row_loop: Vec<_> = (0..6).map(|c| l.west_edge(2, c)).collect();
        let col_loop: Vec<_> = (0..6).map(|r| l.north_edge(r, 4)).collect();
        let empty = ErrorConfig::empty(l);
        let h = ErrorConfig::from_edges(l, &row_loop).unwrap();
        let v = ErrorConfig::from_edges(l, &col_loop).unwrap();
        assert_eq!(logical_coordinates(&h, &empty).unwrap(), (1, 0));
        assert_eq!(logical_coordinates(&v, &empty).unwrap(), (0, 1));
        assert_eq!(logical_coordinates(&h, &v).unwrap(), (1, 1));
    }

    #[test]
    fn open_chain_is_an_error() {
        let l = lat(4);
        let e = ErrorConfig::from_edges(l, &[0]).unwrap();
        assert_eq!(logical_coordinates(&e, &ErrorConfig::empty(l)), Err(Error::OpenChain(2)));
    }

    // Exhaustive homology check on the 2x2 torus: every closed chain is a sum
    // of vertex stars plus one of four loop representatives, and the
    // coordinates identify the representative.
    #[test]
    fn homology_classes_match_exhaustive_enumeration_on_smallest_torus() {
        let l = lat(2);
        let mask_of = |edges: &[usize]| edges.iter().fold(0u32, |m, &e| m ^ (1 << e));
        let stars: Vec<u32> = (0..4).map(|s| {
            let (r, c) = l.coords(s);
            mask_of(&l.vertex_star(r, c))
        }).collect();
        let mut span = std::collections::HashSet::new();
        for subset in 0..16u32 {
            let m = (0..4).filter(|i| subset >> i & 1 == 1).fold(0, |m, i| m ^ stars[i]);
            span.insert(m);
        }
        assert_eq!(span.len(), 8);
        let loop_h = mask_of(&[l.west_edge(0, 0), l.west_edge(0, 1)]);
        let loop_v = mask_of(&[l.north_edge(0, 0), l.north_edge(1, 0)]);
        let reps = [(0, (0u8, 0u8)), (loop_h, (1, 0)), (loop_v, (0, 1)), (loop_h ^ loop_v, (1, 1))];
        let empty = ErrorConfig::empty(l);
        let mut closed = 0;
        for mask in 0..256u32 {
            let edges: Vec<_> = (0..8).filter(|e| mask >> e & 1 == 1).collect();
            let chain = ErrorConfig::from_edges(l, &edges).unwrap();
            if syndrome(&chain).count() != 0 {
                assert!(logical_coordinates(&chain, &empty).is_err());
                continue;
            }
            closed += 1;
            let expected = reps
                .iter()
                .find(|(r, _)| span.contains(&(mask ^ r)))
                .map(|&(_, c)| c)
                .expect("closed chain outside every class");
            assert_eq!(logical_coordinates(&chain, &empty).unwrap(), expected);
        }
        assert_eq!(closed, 32);
    }

    #[test]
    fn block_helpers() {
        let l = lat(4);
        let config = AnyonConfig::from_plaquettes(l, &[l.plaquette(1, 1), l.plaquette(2, 2)]).unwrap();
        let odd = Block { row: 1, col: 1 };
        assert!(!parity_coarse_block(&config, odd));
        assert_eq!(pair_annihilation_block(&config, odd).count(), 0);
        let even = Block { row: 0, col: 0 };
        assert!(parity_coarse_block(&config, even));
        assert_eq!(pair_annihilation_block(&config, even), config);
        let wrapped = Block { row: 3, col: 3 };
        assert_eq!(
            wrapped.plaquettes(&l),
            [l.plaquette(3, 3), l.plaquette(3, 0), l.plaquette(0, 3), l.plaquette(0, 0)]
        );
        assert_eq!(blocks(&l, (1, 1)).count(), 4);
    }

    #[test]
    fn odd_parity_rejected() {
        assert_eq!(AnyonConfig::from_plaquettes(lat(2), &[0]), Err(Error::OddParity));
    }

    #[test]
    fn sampling_extremes_and_reproducibility() {
        let l = lat(4);
        assert_eq!(sample_errors(l, 0.0, 1).unwrap().weight(), 0);
        assert_eq!(sample_errors(l, 1.0, 1).unwrap().weight(), 32);
        assert_eq!(sample_errors(l, 0.3, 9).unwrap(), sample_errors(l, 0.3, 9).unwrap());
        assert!(sample_errors(l, 1.5, 1).is_err());
    }
}
