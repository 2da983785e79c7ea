use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid lattice size {size}: {reason}")]
    InvalidLattice { size: usize, reason: &'static str },

    #[error("block size must be an odd integer >= 3, got {0}")]
    InvalidBlock(usize),

    #[error("anyon configuration has odd total parity")]
    OddParity,

    #[error("combined chain is not closed: {0} anyons remain")]
    OpenChain(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{qubits} qubits exceeds the dense cap of {cap}")]
    TooManyQubits { qubits: usize, cap: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("exact recovery expected (epsilon = {epsilon:e}) but fidelity is {fidelity}")]
    RecoveryFailed { epsilon: f64, fidelity: f64 },

    #[error("bisection failed to converge near x = {0}")]
    NoConvergence(f64),

    #[error("x0 = {0} is not in the basin of a stable fixed point")]
    NotInBasin(f64),

    #[error("infeasible matching problem: {0}")]
    Infeasible(String),

    #[error("no crossing found in the scanned grid")]
    NoCrossing,

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: p,
            expected: "[0, 1]",
        })
    }
}
