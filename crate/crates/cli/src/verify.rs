//! Identity and oracle check suites with a machine-readable report.

use std::fmt;
use std::str::FromStr;

use mixrg::flow::{fidelity as closed_form, ghz_x_step, FidelityModel};
use mixrg::lab::{
    apply_channel, build_state, correlation_preserving_test, fidelity, majority_vote_channel, repetition_isometry,
    superoperator_distance, thermal_tc_channels, trace_distance, x_dephasing, StateKind,
};
use mixrg::matching::{brute_force_mwpm, solve_mwpm, Matching, MatchingProblem, Metric, Pair};
use mixrg::lattice::TorusLattice;
use mixrg::rng::{derive_seed, mix64};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lab,
    MatchingOracle,
    All,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Lab => "lab",
            Suite::MatchingOracle => "matching-oracle",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Suite::Lab, Suite::MatchingOracle, Suite::All]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (lab, matching-oracle, all)"))
    }
}

/// One measured quantity against its tolerance. Passes when
/// `measured <= tolerance`; a NaN measurement fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }

    fn failed(name: impl Into<String>, tolerance: f64) -> Self {
        Self::new(name, f64::NAN, tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.name().to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// Instances drawn by the matching oracle suite.
pub const ORACLE_INSTANCES: usize = 500;
pub const ORACLE_SEED: u64 = 0x6f72_6163_6c65;

pub fn verify(suite: Suite) -> VerifyReport {
    let checks = match suite {
        Suite::Lab => lab_checks(),
        Suite::MatchingOracle => matching_oracle_checks(solve_mwpm, ORACLE_INSTANCES, ORACLE_SEED),
        Suite::All => {
            let mut c = lab_checks();
            c.extend(matching_oracle_checks(solve_mwpm, ORACLE_INSTANCES, ORACLE_SEED));
            c
        }
    };
    VerifyReport::new(suite, checks)
}

// Turns a library error into a failing check instead of aborting the suite.
fn measure(name: String, tolerance: f64, f: impl FnOnce() -> mixrg::Result<f64>) -> Check {
    match f() {
        Ok(v) => Check::new(name, v, tolerance),
        Err(_) => Check::failed(name, tolerance),
    }
}

/// Dense-state identities: the bit-flip recursion as a channel identity,
/// exact recovery after majority vote on phase-flip GHZ states, the GHZ
/// fidelity formulas and reversal of the thermal gather channel.
pub fn lab_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for b in [3usize, 5] {
        for p in [0.1, 0.3, 0.49] {
            out.push(measure(format!("lab/bit-flip-channel-identity b={b} p={p}"), 1e-10, || {
                let encoded = x_dephasing(p)?.power(b)?.compose(&repetition_isometry(b)?)?;
                let lhs = majority_vote_channel(b)?.compose(&encoded)?;
                superoperator_distance(&lhs, &x_dephasing(ghz_x_step(p, b)?)?)
            }));
        }
    }
    for p in [0.1, 0.3] {
        let state = || build_state(StateKind::GhzZ { p, sites: 6 });
        let report = (|| correlation_preserving_test(&majority_vote_channel(3)?, &state()?, &[0, 1, 2]))();
        match report {
            Ok(r) => {
                out.push(Check::new(format!("lab/majority-vote-information-loss p={p}"), r.epsilon.abs(), 1e-9));
                out.push(Check::new(format!("lab/majority-vote-petz-infidelity p={p}"), 1.0 - r.fidelity, 1e-9));
            }
            Err(_) => {
                out.push(Check::failed(format!("lab/majority-vote-information-loss p={p}"), 1e-9));
                out.push(Check::failed(format!("lab/majority-vote-petz-infidelity p={p}"), 1e-9));
            }
        }
        out.push(measure(format!("lab/majority-vote-reencode-infidelity p={p}"), 1e-9, || {
            let rho = state()?;
            let voted = apply_channel(&majority_vote_channel(3)?, &rho, &[0, 1, 2])?;
            let back = apply_channel(&repetition_isometry(3)?, &voted, &[0])?;
            Ok(1.0 - fidelity(&rho, &back)?)
        }));
    }
    for size in 2..=8 {
        out.push(measure(format!("lab/bit-flip-ghz-fidelity L={size}"), 1e-10, || {
            let pure = build_state(StateKind::GhzX { p: 0.0, sites: size })?;
            let mut worst: f64 = 0.0;
            for p in [0.1, 0.25, 0.4] {
                let f = fidelity(&pure, &build_state(StateKind::GhzX { p, sites: size })?)?;
                worst = worst.max((f * f - closed_form(FidelityModel::GhzXVsPure { p, size })?).abs());
            }
            Ok(worst)
        }));
        out.push(measure(format!("lab/phase-flip-ghz-fidelity L={size}"), 1e-10, || {
            let classical = build_state(StateKind::GhzZ { p: 0.5, sites: size })?;
            let mut worst: f64 = 0.0;
            for p in [0.1, 0.25, 0.4] {
                let f = fidelity(&classical, &build_state(StateKind::GhzZ { p, sites: size })?)?;
                worst = worst.max((f * f - closed_form(FidelityModel::GhzZVsClassical { p, size })?).abs());
            }
            Ok(worst)
        }));
    }
    let all: Vec<usize> = (0..8).collect();
    for beta in [0.3, 1.0] {
        out.push(measure(format!("lab/thermal-reversal beta={beta}"), 1e-9, || {
            let ch = thermal_tc_channels(beta)?;
            let rho = build_state(StateKind::Thermal { beta })?;
            let mid = apply_channel(&ch.gather, &rho, &all)?;
            trace_distance(&apply_channel(&ch.scatter, &mid, &all)?, &rho)
        }));
    }
    out
}

/// A small random matching problem with at most ten anyons on a torus of
/// side at most 16, half of them on a region with open boundaries.
pub fn oracle_instance(seed: u64, index: u64) -> MatchingProblem {
    let mut state = derive_seed(seed, index);
    let mut next = |n: u64| {
        state = mix64(state);
        state % n
    };
    let lattice = TorusLattice::new(2 * (2 + next(7) as usize)).expect("even size");
    let count = next(11) as usize;
    let region = next(2) == 1;
    let mut nodes = Vec::new();
    while nodes.len() < count {
        let p = next(lattice.num_plaquettes() as u64) as usize;
        if !nodes.contains(&p) {
            nodes.push(p);
        }
    }
    nodes.sort_unstable();
    if region {
        let origin = (next(lattice.size() as u64) as usize, next(lattice.size() as u64) as usize);
        let extent = (lattice.size(), lattice.size());
        MatchingProblem::new(lattice, &nodes, Metric::Region { origin, extent }, true).expect("region covers the torus")
    } else {
        nodes.truncate(count - count % 2);
        MatchingProblem::new(lattice, &nodes, Metric::Torus, false).expect("even anyon count")
    }
}

// Weight recomputed from the pairs, or None when they are not a perfect
// cover of the anyons.
fn pairing_weight(problem: &MatchingProblem, m: &Matching) -> Option<usize> {
    let mut seen = Vec::new();
    let mut weight = 0;
    for pair in &m.pairs {
        match *pair {
            Pair::Anyons(a, b) => {
                seen.extend([a, b]);
                weight += problem.distance(a, b);
            }
            Pair::Boundary(a, side) => {
                let (d, best) = problem.boundary_distance(a)?;
                if best != side {
                    return None;
                }
                seen.push(a);
                weight += d;
            }
        }
    }
    seen.sort_unstable();
    (seen == problem.nodes()).then_some(weight)
}

/// Compares `solver` with exhaustive search on `instances` random problems.
pub fn matching_oracle_checks<F>(solver: F, instances: usize, seed: u64) -> Vec<Check>
where
    F: Fn(&MatchingProblem) -> mixrg::Result<Matching>,
{
    let (mut mismatches, mut invalid, mut worst_gap) = (0usize, 0usize, 0f64);
    for i in 0..instances as u64 {
        let problem = oracle_instance(seed, i);
        let best = brute_force_mwpm(&problem).expect("oracle instances are small").weight;
        match solver(&problem) {
            Ok(m) => {
                if pairing_weight(&problem, &m) != Some(m.weight) {
                    invalid += 1;
                }
                if m.weight != best {
                    mismatches += 1;
                    worst_gap = worst_gap.max((m.weight as f64 - best as f64).abs());
                }
            }
            Err(_) => {
                invalid += 1;
                mismatches += 1;
                worst_gap = f64::INFINITY;
            }
        }
    }
    vec![
        Check::new("matching-oracle/weight-mismatches", mismatches as f64, 0.0),
        Check::new("matching-oracle/largest-weight-gap", worst_gap, 0.0),
        Check::new("matching-oracle/invalid-pairings", invalid as f64, 0.0),
    ]
}
