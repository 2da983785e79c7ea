//! One-parameter renormalization recursions and their fixed points.
//!
//! Each map sends the noise parameter of a state at size `L` to the
//! parameter of the coarse-grained state at size `L / scale`. The maps are
//! exact; fidelities to the fixed-point state have closed forms, so the
//! number of steps needed to get within `epsilon` of the fixed point can be
//! computed without sampling.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Step used for finite-difference slopes at fixed points.
pub const SLOPE_STEP: f64 = 1e-6;

fn check_block(b: usize) -> Result<()> {
    if b >= 3 && b % 2 == 1 {
        Ok(())
    } else {
        Err(Error::InvalidBlock(b))
    }
}

/// `ln C(n, k)` for all `k`, built by the multiplicative recurrence.
fn ln_binomials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + ((n - k + 1) as f64 / k as f64).ln();
    }
    out
}

// Upper majority tail for p <= 1/2. Terms shrink with k, so summing from
// k = b downwards adds the smallest contributions first.
fn upper_tail_small(p: f64, b: usize) -> f64 {
    let q = 1.0 - p;
    let mut sum = 0.0;
    if b <= 51 {
        // Coefficients are exact integers in f64 up to here.
        let c = binomials(b);
        for k in ((b + 1) / 2..=b).rev() {
            sum += c[k] * p.powi(k as i32) * q.powi((b - k) as i32);
        }
    } else {
        let lnc = ln_binomials(b);
        let (lp, lq) = (p.ln(), q.ln());
        for k in ((b + 1) / 2..=b).rev() {
            let lq_part = if k == b { 0.0 } else { (b - k) as f64 * lq };
            sum += (lnc[k] + k as f64 * lp + lq_part).exp();
        }
    }
    sum
}

fn binomials(n: usize) -> Vec<f64> {
    let mut row = vec![1u64; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n - k + 1) as u64 / k as u64;
    }
    row.into_iter().map(|c| c as f64).collect()
}

/// Probability that a majority vote over `b` independently flipped bits
/// returns the wrong value.
pub fn ghz_x_step(p: f64, b: usize) -> Result<f64> {
    check_block(b)?;
    check_probability("p", p)?;
    if p <= 0.5 {
        Ok(upper_tail_small(p, b))
    } else {
        Ok(1.0 - upper_tail_small(1.0 - p, b))
    }
}

/// Phase-flip probability after merging `b` sites: `(1 - (1 - 2p)^b) / 2`.
pub fn ghz_z_step(p: f64, b: usize) -> Result<f64> {
    check_block(b)?;
    check_probability("p", p)?;
    if p <= 0.5 {
        Ok(-0.5 * (b as f64 * (-2.0 * p).ln_1p()).exp_m1())
    } else {
        Ok(0.5 * (1.0 - (1.0 - 2.0 * p).powi(b as i32)))
    }
}

/// Odd-parity probability of four independent anyon sites.
pub fn thermal_p_step(p: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            expected: "[0, 1/2]",
        });
    }
    Ok(thermal_p_raw(p))
}

fn thermal_p_raw(p: f64) -> f64 {
    let q = 1.0 - p;
    4.0 * p * q * q * q + 4.0 * p * p * p * q
}

/// `atanh(tanh^4 beta)`. Both `0` and `+inf` are fixed points.
pub fn thermal_beta_step(beta: f64) -> Result<f64> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            expected: "[0, inf]",
        });
    }
    if beta == f64::INFINITY {
        return Ok(beta);
    }
    let t = beta.tanh();
    let t4 = t * t * t * t;
    if t4 < 0.5 {
        return Ok(t4.atanh());
    }
    // 1 - tanh^4 from 1 - tanh, which stays accurate for large beta.
    let x = (-2.0 * beta).exp();
    let u = 2.0 * x / (1.0 + x);
    let one_minus = u * (2.0 - u) * (1.0 + (1.0 - u) * (1.0 - u));
    Ok(0.5 * ((1.0 + t4) / one_minus).ln())
}

/// Anyon occupation probability `e^{-beta} / (e^{beta} + e^{-beta})`.
pub fn p_of_beta(beta: f64) -> f64 {
    1.0 / (1.0 + (2.0 * beta).exp())
}

/// Inverse of [`p_of_beta`] on `[0, 1/2]`.
pub fn beta_of_p(p: f64) -> f64 {
    0.5 * ((1.0 - p) / p).ln()
}

/// Error rate of the coarse pair after merging `b` sites of a noisy
/// cluster chain. It equals the majority tail of [`ghz_x_step`].
pub fn spt_step(p: f64, b: usize) -> Result<f64> {
    ghz_x_step(p, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    GhzX,
    GhzZ,
    ThermalP,
    ThermalBeta,
    Spt,
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::GhzX => "ghz-x",
            FlowKind::GhzZ => "ghz-z",
            FlowKind::ThermalP => "thermal-p",
            FlowKind::ThermalBeta => "thermal-beta",
            FlowKind::Spt => "spt",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            FlowKind::GhzX,
            FlowKind::GhzZ,
            FlowKind::ThermalP,
            FlowKind::ThermalBeta,
            FlowKind::Spt,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// A recursion together with its block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMap {
    kind: FlowKind,
    block: usize,
}

/// A fixed point of a [`FlowMap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x: f64,
    pub slope: f64,
    pub stable: bool,
}

/// Parameter values, sizes and fidelities along a flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub values: Vec<f64>,
    pub sizes: Vec<usize>,
    pub fidelities: Vec<f64>,
}

impl FlowMap {
    /// `block` is the number of sites merged per step for the GHZ and chain
    /// maps. The thermal maps always halve the linear size and ignore it.
    pub fn new(kind: FlowKind, block: usize) -> Result<Self> {
        match kind {
            FlowKind::ThermalP | FlowKind::ThermalBeta => Ok(Self { kind, block: 2 }),
            _ => {
                check_block(block)?;
                Ok(Self { kind, block })
            }
        }
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    /// Linear size reduction per step.
    pub fn scale(&self) -> usize {
        self.block
    }

    pub fn step(&self, x: f64) -> Result<f64> {
        match self.kind {
            FlowKind::GhzX => ghz_x_step(x, self.block),
            FlowKind::GhzZ => ghz_z_step(x, self.block),
            FlowKind::ThermalP => thermal_p_step(x),
            FlowKind::ThermalBeta => thermal_beta_step(x),
            FlowKind::Spt => spt_step(x, self.block),
        }
    }

    // Polynomial form, valid slightly outside the domain for slopes.
    fn raw_step(&self, x: f64) -> f64 {
        let b = self.block;
        match self.kind {
            FlowKind::GhzX | FlowKind::Spt => {
                let lnc = ln_binomials(b);
                ((b + 1) / 2..=b)
                    .map(|k| lnc[k].exp() * x.powi(k as i32) * (1.0 - x).powi((b - k) as i32))
                    .sum::<f64>()
            }
            FlowKind::GhzZ => 0.5 * (1.0 - (1.0 - 2.0 * x).powi(b as i32)),
            FlowKind::ThermalP | FlowKind::ThermalBeta => thermal_p_raw(x),
        }
    }

    /// Fixed points on the probability domain `[0, 1/2]`.
    ///
    /// Grid points where the map is exactly stationary are reported as is;
    /// sign changes of `map(x) - x` between neighbours are refined by
    /// bisection to `1e-12`. The inverse-temperature map is analysed in the
    /// conjugate variable `p(beta)` and its fixed points are reported as
    /// `beta` values, with `p = 0` becoming `beta = inf`.
    pub fn classify_fixed_points(&self, grid: usize) -> Result<Vec<FixedPoint>> {
        let grid = grid.max(2);
        let g = |x: f64| self.raw_step(x) - x;
        let xs: Vec<f64> = (0..=grid).map(|i| 0.5 * i as f64 / grid as f64).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        let mut roots = Vec::new();
        for i in 0..xs.len() {
            if gs[i].abs() <= 1e-15 {
                roots.push(xs[i]);
                continue;
            }
            if i + 1 < xs.len() && gs[i + 1].abs() > 1e-15 && gs[i].signum() != gs[i + 1].signum() {
                roots.push(bisect(&g, xs[i], xs[i + 1])?);
            }
        }
        Ok(roots
            .into_iter()
            .map(|x| {
                let h = SLOPE_STEP;
                let slope = (self.raw_step(x + h) - self.raw_step(x - h)) / (2.0 * h);
                let x = if self.kind == FlowKind::ThermalBeta {
                    if x == 0.0 {
                        f64::INFINITY
                    } else {
                        beta_of_p(x)
                    }
                } else {
                    x
                };
                FixedPoint {
                    x,
                    slope,
                    stable: slope.abs() < 1.0,
                }
            })
            .collect())
    }

    /// Fidelity of the state with parameter `x` at linear size `size` to the
    /// attracting fixed-point state.
    pub fn fidelity(&self, x: f64, size: usize) -> Result<f64> {
        match self.kind {
            FlowKind::GhzX | FlowKind::Spt => fidelity(FidelityModel::GhzXVsPure { p: x, size }),
            FlowKind::GhzZ => fidelity(FidelityModel::GhzZVsClassical { p: x, size }),
            FlowKind::ThermalP => fidelity(FidelityModel::ThermalVsInfinite { p: x, size }),
            FlowKind::ThermalBeta => fidelity(FidelityModel::ThermalVsInfinite {
                p: p_of_beta(x),
                size,
            }),
        }
    }

    fn in_basin(&self, x0: f64) -> bool {
        match self.kind {
            FlowKind::GhzX | FlowKind::Spt => (0.0..0.5).contains(&x0),
            FlowKind::GhzZ | FlowKind::ThermalP => x0 > 0.0 && x0 <= 0.5,
            FlowKind::ThermalBeta => (0.0..f64::INFINITY).contains(&x0),
        }
    }

    /// Iterates the map `levels` times from `x0` at linear size `size`.
    /// Stops early when the size no longer divides by the scale.
    pub fn trajectory(&self, x0: f64, size: usize, levels: usize) -> Result<FlowTrajectory> {
        let mut out = FlowTrajectory {
            values: vec![x0],
            sizes: vec![size],
            fidelities: vec![self.fidelity(x0, size)?],
        };
        let (mut x, mut l) = (x0, size);
        for _ in 0..levels {
            if l % self.scale() != 0 || l / self.scale() == 0 {
                break;
            }
            x = self.step(x)?;
            l /= self.scale();
            out.values.push(x);
            out.sizes.push(l);
            out.fidelities.push(self.fidelity(x, l)?);
        }
        Ok(out)
    }

    /// Smallest number of steps after which the fidelity to the attracting
    /// fixed point is at least `1 - epsilon`.
    pub fn steps_to_converge(&self, x0: f64, size: usize, epsilon: f64) -> Result<usize> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: epsilon,
                expected: "(0, 1)",
            });
        }
        if !self.in_basin(x0) {
            return Err(Error::NotInBasin(x0));
        }
        let (mut x, mut l, mut level) = (x0, size, 0);
        loop {
            if self.fidelity(x, l)? >= 1.0 - epsilon {
                return Ok(level);
            }
            if l % self.scale() != 0 || l / self.scale() == 0 {
                return Err(Error::NoConvergence(x));
            }
            x = self.step(x)?;
            l /= self.scale();
            level += 1;
        }
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 {
            return Ok(mid);
        }
        if g(mid).signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(0.5 * (lo + hi)))
}

/// Closed-form fidelities and bounds.
///
/// The two GHZ forms are squared overlaps `||sqrt(s) sqrt(r)||_1^2`. The
/// thermal forms use the unsquared fidelity, which for these classical
/// mixtures is the Bhattacharyya coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FidelityModel {
    /// Bit-flip GHZ state against the pure GHZ state: `(1-p)^L + p^L`.
    GhzXVsPure { p: f64, size: usize },
    /// Phase-flip GHZ state against the classical mixture of all-zeros and
    /// all-ones: `1/2 + sqrt(1 - (1-2p)^{2L}) / 2`.
    GhzZVsClassical { p: f64, size: usize },
    /// Lower bound `2^{-beta L^2 - 1}` for the thermal toric code against
    /// the maximally mixed state.
    ThermalLowerBound { beta: f64, size: usize },
    /// Ground-space overlap bound `1 - L^2 q` from the anyon density.
    AnyonDensityBound { density: f64, size: usize },
    /// Exact fidelity of the thermal toric code on an `L x L` torus with
    /// anyon probability `p` against the maximally mixed state.
    ThermalVsInfinite { p: f64, size: usize },
}

pub fn fidelity(model: FidelityModel) -> Result<f64> {
    match model {
        FidelityModel::GhzXVsPure { p, size } => {
            check_probability("p", p)?;
            let n = size as f64;
            Ok((n * (-p).ln_1p()).exp() + p.powf(n))
        }
        FidelityModel::GhzZVsClassical { p, size } => {
            check_probability("p", p)?;
            let c2 = (1.0 - 2.0 * p).powi(2).powf(size as f64);
            Ok(0.5 + 0.5 * (1.0 - c2).sqrt())
        }
        FidelityModel::ThermalLowerBound { beta, size } => {
            if beta.is_nan() || beta < 0.0 {
                return Err(Error::OutOfRange {
                    name: "beta",
                    value: beta,
                    expected: "[0, inf]",
                });
            }
            Ok((-beta * (size * size) as f64 - 1.0).exp2())
        }
        FidelityModel::AnyonDensityBound { density, size } => {
            check_probability("density", density)?;
            Ok(1.0 - (size * size) as f64 * density)
        }
        FidelityModel::ThermalVsInfinite { p, size } => {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::OutOfRange {
                    name: "p",
                    value: p,
                    expected: "[0, 1/2]",
                });
            }
            Ok(thermal_vs_infinite(p, size))
        }
    }
}

// The vertex and plaquette sectors contribute equal Bhattacharyya factors.
// For one sector with N sites:
//   BC = 2^{-(N-1)/2} Z^{-1/2} [(sqrt p + sqrt q)^N + (sqrt q - sqrt p)^N] / 2
// with Z = (1 + (1-2p)^N) / 2 the even-parity weight.
fn thermal_vs_infinite(p: f64, size: usize) -> f64 {
    let n = (size * size) as f64;
    let (sp, sq) = (p.sqrt(), (1.0 - p).sqrt());
    let r = (sq - sp) / (sq + sp);
    let s = 1.0 - 2.0 * p;
    let ln_bc = -(n - 1.0) / 2.0 * std::f64::consts::LN_2 - 0.5 * ((1.0 + s.powf(n)) / 2.0).ln()
        + n * (sp + sq).ln()
        + ((1.0 + r.powf(n)) / 2.0).ln();
    (2.0 * ln_bc).exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn majority_oracle(p: f64, b: usize) -> f64 {
        (0..1u32 << b)
            .filter(|s| s.count_ones() as usize > b / 2)
            .map(|s| {
                let k = s.count_ones() as i32;
                p.powi(k) * (1.0 - p).powi(b as i32 - k)
            })
            .sum()
    }

    // Phase-flip oracle: the merged phase flips when an odd number of the
    // b sites flipped.
    fn odd_flips_oracle(p: f64, b: usize) -> f64 {
        (0..1u32 << b)
            .filter(|s| s.count_ones() % 2 == 1)
            .map(|s| {
                let k = s.count_ones() as i32;
                p.powi(k) * (1.0 - p).powi(b as i32 - k)
            })
            .sum()
    }

    // Error patterns s on a chain block are only visible through the
    // differences t_i = s_i xor s_{i+1}. MAP picks the more likely of the two
    // patterns consistent with t; the coarse error is a wrong guess of s_1.
    fn map_mismatch_oracle(p: f64, b: usize) -> f64 {
        let w = |s: u32| {
            let k = s.count_ones() as i32;
            p.powi(k) * (1.0 - p).powi(b as i32 - k)
        };
        let full = (1u32 << b) - 1;
        (0..1u32 << b)
            .map(|s| {
                let guess = if w(s) >= w(s ^ full) { s } else { s ^ full };
                if guess & 1 != s & 1 { w(s) } else { 0.0 }
            })
            .sum()
    }

    #[test]
    fn ghz_x_examples() {
        assert_eq!(ghz_x_step(0.0, 3).unwrap(), 0.0);
        assert_eq!(ghz_x_step(0.5, 3).unwrap(), 0.5);
        assert!((ghz_x_step(0.1, 3).unwrap() - 0.028).abs() < 1e-15);
        for &p in &[0.01, 0.2, 0.37, 0.5, 0.8, 0.99] {
            for b in [3, 5, 7, 9] {
                assert!((ghz_x_step(p, b).unwrap() - majority_oracle(p, b)).abs() < 1e-14);
            }
        }
        assert!(ghz_x_step(0.1, 4).is_err());
        assert!(ghz_x_step(-0.1, 3).is_err());
    }

    #[test]
    fn ghz_x_keeps_relative_precision_near_zero() {
        let p = 1e-9;
        let exact = 3.0 * p * p * (1.0 - p) + p * p * p;
        assert!((ghz_x_step(p, 3).unwrap() / exact - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ghz_z_examples() {
        assert_eq!(ghz_z_step(0.0, 3).unwrap(), 0.0);
        assert_eq!(ghz_z_step(0.5, 5).unwrap(), 0.5);
        assert!((ghz_z_step(0.1, 3).unwrap() - 0.244).abs() < 1e-15);
        for &p in &[1e-6, 0.2, 0.45, 0.7] {
            for b in [3, 5, 7] {
                assert!((ghz_z_step(p, b).unwrap() - odd_flips_oracle(p, b)).abs() < 1e-14);
            }
        }
        assert!(ghz_z_step(0.1, 2).is_err());
    }

    #[test]
    fn ghz_z_distance_to_half_contracts_as_a_power() {
        for &p in &[0.05, 0.2, 0.4, 0.49] {
            for b in [3, 5] {
                let lhs = (1.0 - 2.0 * ghz_z_step(p, b).unwrap()).abs();
                let rhs = (1.0 - 2.0 * p).abs().powi(b as i32);
                assert!((lhs - rhs).abs() <= 1e-15 * rhs.max(1e-300) + 1e-16);
            }
        }
    }

    #[test]
    fn thermal_examples() {
        assert_eq!(thermal_p_step(0.0).unwrap(), 0.0);
        assert_eq!(thermal_p_step(0.5).unwrap(), 0.5);
        assert!((thermal_p_step(0.1).unwrap() - 0.2952).abs() < 1e-15);
        assert!(thermal_p_step(0.6).is_err());
        assert_eq!(thermal_beta_step(0.0).unwrap(), 0.0);
        assert_eq!(thermal_beta_step(f64::INFINITY).unwrap(), f64::INFINITY);
        let b1 = thermal_beta_step(1.0).unwrap();
        assert!((b1 - 1.0f64.tanh().powi(4).atanh()).abs() < 1e-14);
        assert!((b1 - 0.3500).abs() < 5e-4);
        assert!(thermal_beta_step(-1.0).is_err());
    }

    #[test]
    fn beta_and_p_maps_agree_on_log_grid() {
        for i in 0..=200 {
            let beta = 10f64.powf(-3.0 + 4.0 * i as f64 / 200.0);
            let via_beta = p_of_beta(thermal_beta_step(beta).unwrap());
            let via_p = thermal_p_step(p_of_beta(beta)).unwrap();
            assert!((via_beta - via_p).abs() <= 1e-12, "beta = {beta}");
        }
    }

    #[test]
    fn large_beta_step_stays_finite() {
        let b = thermal_beta_step(30.0).unwrap();
        assert!(b.is_finite() && b > 28.0);
    }

    #[test]
    fn chain_step_matches_map_decoding() {
        assert_eq!(spt_step(0.0, 3).unwrap(), 0.0);
        assert_eq!(spt_step(0.3, 3).unwrap(), ghz_x_step(0.3, 3).unwrap());
        for &p in &[0.05, 0.2, 0.35, 0.49] {
            for b in [3, 5, 7] {
                assert!((spt_step(p, b).unwrap() - map_mismatch_oracle(p, b)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn monotone_basins() {
        for i in 1..500 {
            let p = 0.5 * i as f64 / 500.0;
            assert!(ghz_x_step(p, 3).unwrap() < p);
            assert!(ghz_z_step(p, 3).unwrap() > p);
        }
    }

    #[test]
    fn fixed_points_of_each_map() {
        let close = |fp: &FixedPoint, x: f64| (fp.x - x).abs() < 1e-12 || fp.x == x;

        let z = FlowMap::new(FlowKind::GhzZ, 3).unwrap().classify_fixed_points(1000).unwrap();
        assert_eq!(z.len(), 2);
        assert!(close(&z[0], 0.0) && !z[0].stable && (z[0].slope - 3.0).abs() < 1e-6);
        assert!(close(&z[1], 0.5) && z[1].stable && z[1].slope.abs() < 1e-6);

        let x = FlowMap::new(FlowKind::GhzX, 3).unwrap().classify_fixed_points(1000).unwrap();
        assert_eq!(x.len(), 2);
        assert!(close(&x[0], 0.0) && x[0].stable);
        assert!(close(&x[1], 0.5) && !x[1].stable && (x[1].slope - 1.5).abs() < 1e-6);

        let t = FlowMap::new(FlowKind::ThermalP, 0).unwrap().classify_fixed_points(1000).unwrap();
        assert_eq!(t.len(), 2);
        assert!(close(&t[0], 0.0) && !t[0].stable && (t[0].slope - 4.0).abs() < 1e-5);
        assert!(close(&t[1], 0.5) && t[1].stable);

        let tb = FlowMap::new(FlowKind::ThermalBeta, 0).unwrap().classify_fixed_points(1000).unwrap();
        assert_eq!(tb[0].x, f64::INFINITY);
        assert!(!tb[0].stable);
        assert!(tb[1].x.abs() < 1e-12 && tb[1].stable);
    }

    #[test]
    fn fidelity_examples() {
        let f = fidelity(FidelityModel::GhzXVsPure { p: 0.1, size: 4 }).unwrap();
        assert!((f - 0.6562).abs() < 1e-12);
        for size in [1, 5, 40] {
            assert_eq!(fidelity(FidelityModel::GhzZVsClassical { p: 0.0, size }).unwrap(), 0.5);
            assert_eq!(fidelity(FidelityModel::GhzZVsClassical { p: 0.5, size }).unwrap(), 1.0);
        }
        assert_eq!(fidelity(FidelityModel::ThermalLowerBound { beta: 0.0, size: 4 }).unwrap(), 0.5);
        assert_eq!(fidelity(FidelityModel::AnyonDensityBound { density: 0.0, size: 8 }).unwrap(), 1.0);
        assert!(fidelity(FidelityModel::GhzXVsPure { p: 2.0, size: 4 }).is_err());
    }

    // Direct sum over all even-parity anyon patterns of one sector.
    fn thermal_bc_oracle(p: f64, n: usize) -> f64 {
        let weight = |m: u32| {
            let k = m.count_ones() as i32;
            p.powi(k) * (1.0 - p).powi(n as i32 - k)
        };
        let even: Vec<u32> = (0..1u32 << n).filter(|m| m.count_ones() % 2 == 0).collect();
        let z: f64 = even.iter().map(|&m| weight(m)).sum();
        let uniform = 1.0 / even.len() as f64;
        even.iter().map(|&m| (weight(m) / z * uniform).sqrt()).sum()
    }

    #[test]
    fn thermal_exact_fidelity_matches_enumeration() {
        for &p in &[0.0, 0.05, 0.2, 0.45, 0.5] {
            for size in [2usize, 3, 4] {
                let bc = thermal_bc_oracle(p, size * size);
                let f = fidelity(FidelityModel::ThermalVsInfinite { p, size }).unwrap();
                assert!((f - bc * bc).abs() < 1e-12, "p={p} L={size}");
            }
        }
    }

    #[test]
    fn thermal_lower_bound_holds_for_exact_fidelity() {
        for &beta in &[0.1, 0.5, 1.0, 2.0] {
            for size in [2, 4, 6] {
                let exact = fidelity(FidelityModel::ThermalVsInfinite { p: p_of_beta(beta), size }).unwrap();
                let bound = fidelity(FidelityModel::ThermalLowerBound { beta, size }).unwrap();
                assert!(exact >= bound);
            }
        }
    }

    #[test]
    fn convergence_steps() {
        let x = FlowMap::new(FlowKind::GhzX, 3).unwrap();
        assert_eq!(x.steps_to_converge(0.0, 3usize.pow(10), 1e-3).unwrap(), 0);
        let short = x.steps_to_converge(0.3, 3usize.pow(10), 1e-3).unwrap();
        let long = x.steps_to_converge(0.3, 3usize.pow(20), 1e-6).unwrap();
        assert_eq!(short, 6);
        assert_eq!(long, 7);
        assert!(x.steps_to_converge(0.5, 81, 1e-3).is_err());

        let z = FlowMap::new(FlowKind::GhzZ, 3).unwrap();
        assert!(z.steps_to_converge(0.4, 3usize.pow(8), 1e-3).is_ok());
        assert!(z.steps_to_converge(0.0, 81, 1e-3).is_err());

        let t = FlowMap::new(FlowKind::ThermalBeta, 0).unwrap();
        let l = t.steps_to_converge(1.0, 1 << 12, 1e-6).unwrap();
        assert!(l > 0 && l < 12);
    }

    #[test]
    fn trajectory_shrinks_size() {
        let x = FlowMap::new(FlowKind::GhzX, 3).unwrap();
        let tr = x.trajectory(0.2, 27, 5).unwrap();
        assert_eq!(tr.sizes, vec![27, 9, 3, 1]);
        assert_eq!(tr.values.len(), 4);
        assert!(tr.fidelities.windows(2).all(|w| w[1] >= w[0]));
    }
}
