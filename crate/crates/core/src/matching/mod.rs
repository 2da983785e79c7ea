//! Minimum-weight perfect matching of anyons.
//!
//! Distances are L1 on the plaquette grid, either on the full torus or on a
//! rectangular patch without wraparound. Patches may let any anyon pair
//! with the patch's outer boundary instead of another anyon.
//!
//! Degenerate optima are split by a fixed pseudo-random tie value attached
//! to each pair of plaquettes (and to each plaquette's boundary link), so
//! the optimum is unique with overwhelming probability and depends only on
//! plaquette identities. Global and patch solves therefore make the same
//! choice among equally short pairings.

mod blossom;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::lattice::{logical_coordinates, sample_errors_with, syndrome, AnyonConfig, ErrorConfig, TorusLattice};
use crate::rng::{mix64, stream_rng};
use blossom::{max_weight_perfect_matching, NONE};

/// How distances between plaquettes are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Torus,
    /// The `extent = (rows, cols)` patch whose top-left plaquette is
    /// `origin`. Coordinates inside the patch are taken relative to the
    /// origin, modulo the torus size.
    Region { origin: (usize, usize), extent: (usize, usize) },
}

/// Side of a patch through which a boundary string leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

/// Anyons to be paired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingProblem {
    lattice: TorusLattice,
    nodes: Vec<usize>,
    metric: Metric,
    boundary: bool,
}

/// What an anyon is matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partner {
    Anyon(usize),
    Boundary(Side),
}

/// One element of a matching, in plaquette indices. Anyon pairs are stored
/// with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pair {
    Anyons(usize, usize),
    Boundary(usize, Side),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Sorted.
    pub pairs: Vec<Pair>,
    /// Total string length.
    pub weight: usize,
}

impl Matching {
    pub fn empty() -> Self {
        Self { pairs: Vec::new(), weight: 0 }
    }

    /// Partner of every matched anyon.
    pub fn partners(&self) -> BTreeMap<usize, Partner> {
        let mut out = BTreeMap::new();
        for pair in &self.pairs {
            match *pair {
                Pair::Anyons(a, b) => {
                    out.insert(a, Partner::Anyon(b));
                    out.insert(b, Partner::Anyon(a));
                }
                Pair::Boundary(a, side) => {
                    out.insert(a, Partner::Boundary(side));
                }
            }
        }
        out
    }
}

/// `min(|dr|, L-|dr|) + min(|dc|, L-|dc|)` between plaquettes `a` and `b`.
pub fn torus_distance(lattice: &TorusLattice, a: usize, b: usize) -> usize {
    let l = lattice.size();
    let (ra, ca) = lattice.coords(a);
    let (rb, cb) = lattice.coords(b);
    let dr = ra.abs_diff(rb);
    let dc = ca.abs_diff(cb);
    dr.min(l - dr) + dc.min(l - dc)
}

impl MatchingProblem {
    /// All anyons of `config`, torus metric, no boundary.
    pub fn torus(config: &AnyonConfig) -> Self {
        Self {
            lattice: config.lattice(),
            nodes: config.sites().collect(),
            metric: Metric::Torus,
            boundary: false,
        }
    }

    pub fn new(lattice: TorusLattice, nodes: &[usize], metric: Metric, boundary: bool) -> Result<Self> {
        let l = lattice.size();
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != nodes.len() {
            return Err(Error::Infeasible("repeated anyon".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&p| p >= lattice.num_plaquettes()) {
            return Err(Error::OutOfRange {
                name: "plaquette",
                value: bad as f64,
                expected: "below L^2",
            });
        }
        match metric {
            Metric::Torus => {
                if boundary {
                    return Err(Error::Infeasible("the torus has no boundary".into()));
                }
            }
            Metric::Region { origin, extent } => {
                if origin.0 >= l || origin.1 >= l || extent.0 == 0 || extent.1 == 0 || extent.0 > l || extent.1 > l {
                    return Err(Error::Infeasible(format!("patch {extent:?} at {origin:?} does not fit an {l}x{l} torus")));
                }
            }
        }
        let problem = Self {
            lattice,
            nodes: sorted,
            metric,
            boundary,
        };
        if let Metric::Region { extent, .. } = metric {
            for &p in &problem.nodes {
                let (y, x) = problem.local(p);
                if y >= extent.0 || x >= extent.1 {
                    return Err(Error::Infeasible(format!("plaquette {p} lies outside the patch")));
                }
            }
        }
        Ok(problem)
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    /// Anyon plaquettes, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary
    }

    fn local(&self, p: usize) -> (usize, usize) {
        let (r, c) = self.lattice.coords(p);
        match self.metric {
            Metric::Torus => (r, c),
            Metric::Region { origin, .. } => {
                let l = self.lattice.size();
                ((r + l - origin.0) % l, (c + l - origin.1) % l)
            }
        }
    }

    /// String length between plaquettes `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        match self.metric {
            Metric::Torus => torus_distance(&self.lattice, a, b),
            Metric::Region { .. } => {
                let (ya, xa) = self.local(a);
                let (yb, xb) = self.local(b);
                ya.abs_diff(yb) + xa.abs_diff(xb)
            }
        }
    }

    /// Length of the shortest string from `p` out of the patch, and the
    /// side it leaves through (ties resolved top, bottom, left, right).
    pub fn boundary_distance(&self, p: usize) -> Option<(usize, Side)> {
        let Metric::Region { extent, .. } = self.metric else {
            return None;
        };
        let (y, x) = self.local(p);
        let options = [
            (y + 1, Side::Top),
            (extent.0 - y, Side::Bottom),
            (x + 1, Side::Left),
            (extent.1 - x, Side::Right),
        ];
        options.into_iter().min_by_key(|o| o.0)
    }

    fn max_distance(&self) -> usize {
        match self.metric {
            Metric::Torus => self.lattice.size(),
            Metric::Region { extent, .. } => extent.0 + extent.1,
        }
    }
}

const TIE_BITS: u32 = 20;
const BOUNDARY_KEY: u64 = u32::MAX as u64;

fn tie_between(a: usize, b: usize) -> i64 {
    let (lo, hi) = (a.min(b) as u64, a.max(b) as u64);
    (mix64((lo << 32) ^ hi ^ 0x7f4a_7c15_9e37_79b9) >> (64 - TIE_BITS)) as i64
}

fn tie_to_boundary(a: usize) -> i64 {
    tie_between(a, BOUNDARY_KEY as usize)
}

// Integer costs `distance * scale + tie`. The scale exceeds the largest
// possible sum of ties, so total distance always dominates. Also indexes
// the anyons by position for neighbourhood queries.
struct Costs<'a> {
    problem: &'a MatchingProblem,
    scale: i64,
    ceiling: i64,
    local: Vec<(usize, usize)>,
    occupant: Vec<usize>,
    extent: (usize, usize),
}

impl<'a> Costs<'a> {
    fn new(problem: &'a MatchingProblem) -> Self {
        let scale = ((problem.nodes.len() + 1) as i64) << TIE_BITS;
        let ceiling = (problem.max_distance() as i64 + 1) * scale;
        let l = problem.lattice.size();
        let extent = match problem.metric {
            Metric::Torus => (l, l),
            Metric::Region { extent, .. } => extent,
        };
        let local: Vec<(usize, usize)> = problem.nodes.iter().map(|&p| problem.local(p)).collect();
        let mut occupant = vec![NONE; extent.0 * extent.1];
        for (i, &(y, x)) in local.iter().enumerate() {
            occupant[y * extent.1 + x] = i;
        }
        Self {
            problem,
            scale,
            ceiling,
            local,
            occupant,
            extent,
        }
    }

    fn pair(&self, i: usize, j: usize) -> i64 {
        let (a, b) = (self.problem.nodes[i], self.problem.nodes[j]);
        self.problem.distance(a, b) as i64 * self.scale + tie_between(a, b)
    }

    fn boundary(&self, i: usize) -> i64 {
        let a = self.problem.nodes[i];
        let (d, _) = self.problem.boundary_distance(a).expect("patch metric");
        d as i64 * self.scale + tie_to_boundary(a)
    }

    // Calls `f` for every other anyon within distance `r` of anyon `i`.
    fn within(&self, i: usize, r: usize, mut f: impl FnMut(usize)) {
        let (h, w) = self.extent;
        let (y, x) = self.local[i];
        let r = r as isize;
        let torus = matches!(self.problem.metric, Metric::Torus);
        let span = |len: usize, at: usize| -> (isize, isize) {
            if torus {
                let half = len as isize / 2;
                ((-r).max(1 - half), r.min(half))
            } else {
                ((-r).max(-(at as isize)), r.min(len as isize - 1 - at as isize))
            }
        };
        let (y0, y1) = span(h, y);
        for dy in y0..=y1 {
            let rest = r - dy.abs();
            let (x0, x1) = span(w, x);
            let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
            for dx in x0.max(-rest)..=x1.min(rest) {
                let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                let j = self.occupant[yy * w + xx];
                if j != NONE && j != i {
                    f(j);
                }
            }
        }
    }
}

/// Candidate neighbours per anyon before certificate-driven refinement.
const INITIAL_NEIGHBOURS: usize = 8;

/// Exact minimum-weight perfect matching.
///
/// The blossom solver first runs on a sparse graph of near neighbours.
/// Its dual solution is then checked against every omitted pair; any pair
/// with negative reduced cost is added and the solve repeated. A matching
/// whose duals are feasible on the complete graph is optimal there.
pub fn solve_mwpm(problem: &MatchingProblem) -> Result<Matching> {
    solve_from(problem, INITIAL_NEIGHBOURS)
}

fn solve_from(problem: &MatchingProblem, neighbours: usize) -> Result<Matching> {
    let n = problem.nodes.len();
    if !problem.boundary && n % 2 == 1 {
        return Err(Error::Infeasible(format!("{n} anyons and no boundary")));
    }
    if n == 0 {
        return Ok(Matching::empty());
    }
    let costs = Costs::new(problem);
    let mut k = neighbours.clamp(1, n.max(2) - 1);
    let mut candidates = nearest_pairs(&costs, k);
    loop {
        let edges = build_edges(&costs, &candidates);
        let vertices = if problem.boundary { 2 * n } else { n };
        let Some(solution) = max_weight_perfect_matching(vertices, &edges) else {
            if k >= n - 1 {
                return Err(Error::Infeasible("no perfect matching on the complete graph".into()));
            }
            k = (2 * k).min(n - 1);
            candidates.extend(nearest_pairs(&costs, k));
            continue;
        };
        let violated = violated_pairs(&costs, &candidates, &solution);
        if violated.is_empty() {
            return Ok(extract(problem, &solution));
        }
        candidates.extend(violated);
    }
}

// The k cheapest partners of every anyon. Costs order by distance first,
// so it suffices to look within the smallest radius holding k others.
fn nearest_pairs(costs: &Costs, k: usize) -> HashSet<(usize, usize)> {
    let n = costs.problem.nodes.len();
    let max_r = costs.problem.max_distance();
    let mut out = HashSet::new();
    let mut row: Vec<(i64, usize)> = Vec::new();
    for i in 0..n {
        let mut r = 2;
        loop {
            row.clear();
            costs.within(i, r, |j| row.push((costs.pair(i, j), j)));
            if row.len() >= k || r >= max_r {
                break;
            }
            r *= 2;
        }
        let take = k.min(row.len());
        if take == 0 {
            continue;
        }
        if take < row.len() {
            row.select_nth_unstable(take - 1);
        }
        for &(_, j) in &row[..take] {
            out.insert((i.min(j), i.max(j)));
        }
    }
    out
}

// Vertices 0..n are anyons. With a boundary, n + i is the boundary copy of
// anyon i: the link (i, n + i) costs the boundary distance and copies pair
// among themselves for free, mirroring the anyon candidate pairs.
fn build_edges(costs: &Costs, candidates: &HashSet<(usize, usize)>) -> Vec<(usize, usize, i64)> {
    let n = costs.problem.nodes.len();
    let mut pairs: Vec<(usize, usize)> = candidates.iter().copied().collect();
    pairs.sort_unstable();
    let mut edges = Vec::with_capacity(pairs.len() * 2 + n);
    for &(i, j) in &pairs {
        edges.push((i, j, costs.ceiling - costs.pair(i, j)));
    }
    if costs.problem.boundary {
        for i in 0..n {
            edges.push((i, n + i, costs.ceiling - costs.boundary(i)));
        }
        for &(i, j) in &pairs {
            edges.push((n + i, n + j, costs.ceiling));
        }
    }
    edges
}

// Omitted pairs whose reduced cost is negative. Blossom duals only raise
// reduced costs, so a pair can be violated only if the vertex duals alone
// leave it short, which bounds how far apart its anyons can be.
fn violated_pairs(costs: &Costs, candidates: &HashSet<(usize, usize)>, solution: &blossom::Solution) -> Vec<(usize, usize)> {
    let n = costs.problem.nodes.len();
    let mut out = HashSet::new();
    // vertex_slack(i, j) = 4 cost(i, j) - reach(i) - reach(j)
    let reach: Vec<i64> = (0..n).map(|i| 2 * costs.ceiling - solution.dual[i]).collect();
    let top = reach.iter().copied().max().unwrap_or(0);
    for i in 0..n {
        let bound = reach[i] + top;
        if bound <= 0 {
            continue;
        }
        let r = (bound / (4 * costs.scale)) as usize;
        costs.within(i, r.min(costs.problem.max_distance()), |j| {
            let key = (i.min(j), i.max(j));
            let w = costs.ceiling - costs.pair(i, j);
            if solution.vertex_slack(i, j, w) < 0 && !candidates.contains(&key) && solution.slack(i, j, w) < 0 {
                out.insert(key);
            }
        });
    }
    if costs.problem.boundary {
        // Boundary copies: vertex_slack = dual(n+i) + dual(n+j) - 4 ceiling.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| solution.dual[n + i]);
        let limit = 4 * costs.ceiling;
        for (a, &i) in order.iter().enumerate() {
            for &j in &order[a + 1..] {
                if solution.dual[n + i] + solution.dual[n + j] >= limit {
                    break;
                }
                let key = (i.min(j), i.max(j));
                if !candidates.contains(&key) && solution.slack(n + i, n + j, costs.ceiling) < 0 {
                    out.insert(key);
                }
            }
        }
    }
    let mut out: Vec<_> = out.into_iter().collect();
    out.sort_unstable();
    out
}

fn extract(problem: &MatchingProblem, solution: &blossom::Solution) -> Matching {
    let n = problem.nodes.len();
    let mut pairs = Vec::with_capacity(n);
    let mut weight = 0;
    for i in 0..n {
        let m = solution.mate[i];
        let a = problem.nodes[i];
        if m < n {
            if i < m {
                let b = problem.nodes[m];
                pairs.push(Pair::Anyons(a, b));
                weight += problem.distance(a, b);
            }
        } else {
            let (d, side) = problem.boundary_distance(a).expect("patch metric");
            pairs.push(Pair::Boundary(a, side));
            weight += d;
        }
    }
    pairs.sort_unstable();
    Matching { pairs, weight }
}

/// Largest problem the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX_NODES: usize = 12;

/// Exhaustive search over all pairings (and boundary assignments), with the
/// same cost order as [`solve_mwpm`]. Intended as a test oracle.
pub fn brute_force_mwpm(problem: &MatchingProblem) -> Result<Matching> {
    let n = problem.nodes.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::OutOfRange {
            name: "nodes",
            value: n as f64,
            expected: "at most 12 for exhaustive search",
        });
    }
    if !problem.boundary && n % 2 == 1 {
        return Err(Error::Infeasible(format!("{n} anyons and no boundary")));
    }
    let costs = Costs::new(problem);
    let mut best = (i64::MAX, Vec::new());
    let mut current = Vec::new();
    search(&costs, &mut vec![false; n], &mut current, 0, &mut best);
    let mut pairs = Vec::new();
    let mut weight = 0;
    for (i, j) in best.1 {
        let a = problem.nodes[i];
        if j == NONE {
            let (d, side) = problem.boundary_distance(a).expect("patch metric");
            pairs.push(Pair::Boundary(a, side));
            weight += d;
        } else {
            let b = problem.nodes[j];
            pairs.push(Pair::Anyons(a, b));
            weight += problem.distance(a, b);
        }
    }
    pairs.sort_unstable();
    Ok(Matching { pairs, weight })
}

fn search(costs: &Costs, used: &mut [bool], current: &mut Vec<(usize, usize)>, total: i64, best: &mut (i64, Vec<(usize, usize)>)) {
    let Some(i) = used.iter().position(|&u| !u) else {
        if total < best.0 {
            *best = (total, current.clone());
        }
        return;
    };
    used[i] = true;
    if costs.problem.boundary {
        current.push((i, NONE));
        search(costs, used, current, total + costs.boundary(i), best);
        current.pop();
    }
    for j in i + 1..used.len() {
        if !used[j] {
            used[j] = true;
            current.push((i, j));
            search(costs, used, current, total + costs.pair(i, j), best);
            current.pop();
            used[j] = false;
        }
    }
    used[i] = false;
}

/// Flips the edges of one canonical string per matched pair.
///
/// Anyon pairs are joined from the smaller plaquette index: first along the
/// row to the target column, then along the column. On the torus each leg
/// takes the shorter way round, going right or down when both are equal.
/// Boundary pairs run straight out through their side and end on the first
/// plaquette outside the patch.
pub fn apply_correction(matching: &Matching, problem: &MatchingProblem) -> ErrorConfig {
    let lattice = problem.lattice;
    let l = lattice.size() as isize;
    let mut out = ErrorConfig::empty(lattice);
    for pair in &matching.pairs {
        match *pair {
            Pair::Anyons(a, b) => {
                let (ya, xa) = problem.local(a);
                let (yb, xb) = problem.local(b);
                let (dy, dx) = match problem.metric {
                    Metric::Torus => (wrap_offset(ya, yb, l), wrap_offset(xa, xb, l)),
                    Metric::Region { .. } => (yb as isize - ya as isize, xb as isize - xa as isize),
                };
                let (r, c) = lattice.coords(a);
                let c_end = walk_columns(&mut out, r, c, dx);
                walk_rows(&mut out, r, c_end, dy);
            }
            Pair::Boundary(a, side) => {
                let (d, _) = problem.boundary_distance(a).expect("patch metric");
                let (y, x) = problem.local(a);
                let Metric::Region { extent, .. } = problem.metric else { unreachable!() };
                let steps = match side {
                    Side::Top => y + 1,
                    Side::Bottom => extent.0 - y,
                    Side::Left => x + 1,
                    Side::Right => extent.1 - x,
                } as isize;
                debug_assert_eq!(steps as usize, d);
                let (r, c) = lattice.coords(a);
                match side {
                    Side::Top => walk_rows(&mut out, r, c, -steps),
                    Side::Bottom => walk_rows(&mut out, r, c, steps),
                    Side::Left => {
                        walk_columns(&mut out, r, c, -steps);
                    }
                    Side::Right => {
                        walk_columns(&mut out, r, c, steps);
                    }
                }
            }
        }
    }
    out
}

fn wrap_offset(from: usize, to: usize, l: isize) -> isize {
    let d = (to as isize - from as isize).rem_euclid(l);
    if d <= l - d {
        d
    } else {
        d - l
    }
}

fn walk_columns(out: &mut ErrorConfig, r: usize, mut c: usize, dx: isize) -> usize {
    let lattice = out.lattice();
    let l = lattice.size();
    for _ in 0..dx.unsigned_abs() {
        if dx > 0 {
            out.toggle(lattice.east_edge(r, c));
            c = (c + 1) % l;
        } else {
            out.toggle(lattice.west_edge(r, c));
            c = (c + l - 1) % l;
        }
    }
    c
}

fn walk_rows(out: &mut ErrorConfig, mut r: usize, c: usize, dy: isize) {
    let lattice = out.lattice();
    let l = lattice.size();
    for _ in 0..dy.unsigned_abs() {
        if dy > 0 {
            out.toggle(lattice.south_edge(r, c));
            r = (r + 1) % l;
        } else {
            out.toggle(lattice.north_edge(r, c));
            r = (r + l - 1) % l;
        }
    }
}

/// Logical failure statistics of the global matching decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeEstimate {
    pub p: f64,
    pub size: usize,
    pub failures: usize,
    pub samples: usize,
    pub rate: f64,
    pub stderr: f64,
}

/// Decodes the syndrome of one error sample on the whole torus and reports
/// whether the residual chain is a non-trivial cycle.
pub fn decode_sample(errors: &ErrorConfig) -> Result<bool> {
    let problem = MatchingProblem::torus(&syndrome(errors));
    let matching = solve_mwpm(&problem)?;
    let correction = apply_correction(&matching, &problem);
    Ok(logical_coordinates(errors, &correction)? != (0, 0))
}

/// Fraction of `samples` i.i.d. bit-flip patterns at rate `p` that the
/// matching decoder maps to a wrong homology class.
pub fn decode_failure_rate(p: f64, size: usize, samples: usize, seed: u64) -> Result<DecodeEstimate> {
    check_probability("p", p)?;
    if samples == 0 {
        return Err(Error::InsufficientData("zero samples requested".into()));
    }
    let lattice = TorusLattice::new(size)?;
    let outcomes = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let errors = sample_errors_with(lattice, p, &mut rng)?;
            decode_sample(&errors)
        })
        .collect::<Result<Vec<bool>>>()?;
    let failures = outcomes.iter().filter(|&&f| f).count();
    let rate = failures as f64 / samples as f64;
    Ok(DecodeEstimate {
        p,
        size,
        failures,
        samples,
        rate,
        stderr: (rate * (1.0 - rate) / samples as f64).sqrt(),
    })
}
