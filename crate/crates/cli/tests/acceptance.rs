//! Acceptance criteria A1 to A13, one PASS/FAIL line each.
//!
//! Pass criterion names (`A3 A10`) as arguments to run a subset. The
//! process fails when a criterion fails that is not listed in `KNOWN`.

use std::sync::OnceLock;
use std::time::Instant;

use mixrg::flow::{ghz_z_step, p_of_beta, thermal_beta_step, thermal_p_step, FixedPoint, FlowKind, FlowMap};
use mixrg::lattice::{blocks, parity_coarse_block, AnyonConfig, TorusLattice};
use mixrg::matching::{decode_failure_rate, solve_mwpm};
use mixrg::rg::{estimate_threshold, fit_gamma, fit_gamma_trajectories, RgTrajectory};
use mixrg::rng::{derive_seed, mix64, stream_rng};
use mixrg::stats::{family_crossing, mean_stderr};
use mixrg::tmwpm::{agreement_probability, DEFAULT_BLOCK_RATIO, DEFAULT_SIZE_RATIO};
use mixrg_cli::output::csv_bytes;
use mixrg_cli::verify::{lab_checks, matching_oracle_checks, Check, ORACLE_SEED};
use mixrg_cli::{run, ExperimentConfig, RawConfig};

/// Criteria whose literal statement does not hold; they print FAIL with the
/// measured discrepancy but do not fail the process.
const KNOWN: &[&str] = &["A2"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn lab_group(prefixes: &[&str]) -> Outcome {
    static ALL: OnceLock<Vec<Check>> = OnceLock::new();
    let checks: Vec<&Check> = ALL
        .get_or_init(lab_checks)
        .iter()
        .filter(|c| prefixes.iter().any(|p| c.name.starts_with(p)))
        .collect();
    let failed: Vec<&&Check> = checks.iter().filter(|c| !c.passed).collect();
    let worst = checks.iter().map(|c| c.measured).fold(0.0, f64::max);
    let detail = if failed.is_empty() {
        format!("{} checks, worst {worst:.2e}", checks.len())
    } else {
        format!("{} of {} checks failed: {:?}", failed.len(), checks.len(), failed.iter().map(|c| &c.name).collect::<Vec<_>>())
    };
    outcome(failed.is_empty() && !checks.is_empty(), detail)
}

fn a1() -> Outcome {
    let worst = (0..100)
        .map(|i| {
            let beta = 10f64.powf(-3.0 + 4.0 * i as f64 / 99.0);
            (p_of_beta(thermal_beta_step(beta).unwrap()) - thermal_p_step(p_of_beta(beta)).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} on 100 points"))
}

fn a2() -> Outcome {
    let has = |points: &[FixedPoint], x: f64, stable: bool| points.iter().any(|f| (f.x - x).abs() < 1e-9 && f.stable == stable);
    let mut structure = true;
    let mut slope_error: f64 = 0.0;
    for b in [3usize, 5, 7] {
        let x = FlowMap::new(FlowKind::GhzX, b).unwrap().classify_fixed_points(1000).unwrap();
        structure &= x.len() == 2 && has(&x, 0.0, true) && has(&x, 0.5, false);
        let z = FlowMap::new(FlowKind::GhzZ, b).unwrap().classify_fixed_points(1000).unwrap();
        structure &= z.len() == 2 && has(&z, 0.0, false) && has(&z, 0.5, true);
        if let Some(zero) = z.iter().find(|f| f.x == 0.0) {
            slope_error = slope_error.max((zero.slope - b as f64).abs());
        }
    }
    let t = FlowMap::new(FlowKind::ThermalP, 2).unwrap().classify_fixed_points(1000).unwrap();
    structure &= t.len() == 2 && has(&t, 0.0, false) && has(&t, 0.5, true);

    let (mut literal, mut corrected): (f64, f64) = (0.0, 0.0);
    for b in [3usize, 5, 7] {
        for i in 0..=100 {
            let p = 0.5 * i as f64 / 100.0;
            let lhs = (ghz_z_step(p, b).unwrap() - 0.5).abs();
            literal = literal.max((lhs - (p - 0.5).abs().powi(b as i32)).abs());
            corrected = corrected.max((lhs - 2f64.powi(b as i32 - 1) * (p - 0.5).abs().powi(b as i32)).abs());
        }
    }
    let passed = structure && slope_error <= 1e-6 && literal <= 1e-12;
    outcome(
        passed,
        format!(
            "structure {}, slope error {slope_error:.1e}; |p'-1/2| = |p-1/2|^b off by up to {literal:.3} \
             (the map gives |p'-1/2| = 2^(b-1)|p-1/2|^b, which holds to {corrected:.1e})",
            if structure { "ok" } else { "wrong" }
        ),
    )
}

fn a7() -> Outcome {
    let lattice = TorusLattice::new(100).unwrap();
    let samples = 40u64;
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for (k, p) in [0.05, 0.1, 0.3].into_iter().enumerate() {
        let parities: Vec<f64> = (0..samples)
            .flat_map(|i| {
                let mut rng = stream_rng(derive_seed(7, k as u64), i);
                let config = AnyonConfig::sample_thermal(lattice, p, &mut rng).unwrap();
                blocks(&lattice, (0, 0))
                    .map(|b| if parity_coarse_block(&config, b) { 1.0 } else { 0.0 })
                    .collect::<Vec<_>>()
            })
            .collect();
        let (mean, se) = mean_stderr(parities.iter().copied());
        let exact = 4.0 * p * (1.0 - p).powi(3) + 4.0 * p.powi(3) * (1.0 - p);
        let z = (mean - exact).abs() / se;
        worst = worst.max(z);
        passed &= parities.len() == 100_000 && z <= 3.0;
    }
    outcome(passed, format!("10^5 blocks per p, worst deviation {worst:.2} standard errors"))
}

fn a8() -> Outcome {
    let grid = [0.036, 0.039, 0.042, 0.045, 0.048, 0.051];
    match estimate_threshold(&[128], &grid, 6, 2000, 8) {
        Ok(t) => outcome(
            (0.036..=0.046).contains(&t.p_c),
            format!("p_c = {:.4}, 95% interval ({:.4}, {:.4}), L = 128, 6 levels, N = 2000", t.p_c, t.ci.0, t.ci.1),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

// Densities following q' = 2 q^2 exactly, with 5% multiplicative noise per
// sample.
fn synthetic_trajectory(q0: f64, index: u64) -> RgTrajectory {
    let sizes: Vec<usize> = (0..6).map(|l| 1024 >> l).collect();
    let mut exact = vec![q0];
    for l in 1..sizes.len() {
        exact.push(2.0 * exact[l - 1] * exact[l - 1]);
    }
    let samples = 400;
    let mut state = derive_seed(99, index);
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            exact
                .iter()
                .map(|&q| {
                    state = mix64(state);
                    let u = (state >> 11) as f64 / (1u64 << 53) as f64;
                    q * (1.0 + 0.05 * (2.0 * u - 1.0))
                })
                .collect()
        })
        .collect();
    let levels = sizes.len();
    let (densities, stderr) = (0..levels)
        .map(|l| mean_stderr(per_sample.iter().map(|s| s[l])))
        .unzip();
    RgTrajectory {
        p: q0,
        seed: index,
        densities,
        stderr,
        sizes,
        samples,
        per_sample,
    }
}

fn a9() -> Outcome {
    let fit = match fit_gamma(&[0.01, 0.02, 0.03], 256, 6, 1000, 9) {
        Ok(f) => f,
        Err(e) => return outcome(false, e.to_string()),
    };
    let synthetic: Vec<RgTrajectory> = [0.01, 0.02, 0.03, 0.04]
        .into_iter()
        .enumerate()
        .map(|(i, q)| synthetic_trajectory(q, i as u64))
        .collect();
    let check = match fit_gamma_trajectories(&synthetic, 3) {
        Ok(f) => f.gamma,
        Err(_) => f64::NAN,
    };
    outcome(
        fit.ci.0 > 1.0 && (check - 2.0).abs() <= 0.02,
        format!(
            "gamma = {:.3}, 95% interval ({:.3}, {:.3}) at L = 256; synthetic q' = 2q^2 gives {check:.4}",
            fit.gamma, fit.ci.0, fit.ci.1
        ),
    )
}

fn a10() -> Outcome {
    let checks = matching_oracle_checks(solve_mwpm, 500, ORACLE_SEED);
    outcome(
        checks.iter().all(|c| c.passed),
        format!("500 instances: {} weight mismatches, {} invalid pairings", checks[0].measured, checks[2].measured),
    )
}

fn a11() -> Outcome {
    let grid = [0.09, 0.095, 0.1, 0.105, 0.11, 0.115];
    let sizes = [8usize, 16, 24];
    let curves: Vec<Vec<(f64, f64)>> = sizes
        .iter()
        .enumerate()
        .map(|(si, &l)| {
            grid.iter()
                .enumerate()
                .map(|(pi, &p)| (p, decode_failure_rate(p, l, 5000, derive_seed(11, (si * grid.len() + pi) as u64)).unwrap().rate))
                .collect()
        })
        .collect();
    match family_crossing(&curves, true) {
        Ok(x) => outcome((0.093..=0.113).contains(&x), format!("failure-rate curves for L = 8, 16, 24 cross at p = {x:.4}")),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn a12() -> Outcome {
    let grid = [0.05, 0.08, 0.09, 0.1, 0.11, 0.12, 0.13];
    let buffers = [4usize, 6, 8];
    let samples = 500;
    let curves: Vec<Vec<(f64, f64)>> = buffers
        .iter()
        .map(|&a| {
            let (b, l) = (DEFAULT_BLOCK_RATIO * a, DEFAULT_SIZE_RATIO * a);
            grid.iter()
                .enumerate()
                .map(|(pi, &p)| (p, agreement_probability(p, a, b, l, samples, derive_seed(12, (a * 100 + pi) as u64)).unwrap().mu))
                .collect()
        })
        .collect();
    let largest = &curves[curves.len() - 1];
    let (low, high) = (largest[0].1, largest[largest.len() - 1].1);
    let crossing = family_crossing(&curves, false);
    let inside = crossing.as_ref().is_ok_and(|x| (0.09..=0.12).contains(x));
    outcome(
        low >= 0.95 && high <= 0.5 && inside,
        format!(
            "a = 8: mu(0.05) = {low:.3}, mu(0.13) = {high:.3}; crossing {}",
            crossing.map_or_else(|e| e.to_string(), |x| format!("{x:.4}"))
        ),
    )
}

fn a13() -> Outcome {
    let configs = [
        "experiment = flow\nflow.kind = thermal-beta\ngrid.beta = 0.2, 0.9\ngrid.L = 64\nlevels = 4",
        "experiment = rg-decoder\ngrid.p = 0.02, 0.05\ngrid.L = 32, 64\nlevels = 3\nsamples = 60\nseed = 13",
        "experiment = decode\ngrid.p = 0.06, 0.1\ngrid.L = 8, 12\nsamples = 80\nseed = 13",
        "experiment = tmwpm\ngrid.p = 0.05, 0.1\ngrid.a = 1, 2\nsamples = 40\nseed = 13",
    ];
    let mut identical = 0;
    for text in configs {
        let mut config = ExperimentConfig::from_raw(&RawConfig::parse(text).unwrap()).unwrap();
        let tables: Vec<Vec<u8>> = [1, 2, 4, 1]
            .into_iter()
            .map(|w| {
                config.workers = w;
                csv_bytes(&run(&config))
            })
            .collect();
        if tables.windows(2).all(|t| t[0] == t[1]) {
            identical += 1;
        }
    }
    outcome(identical == configs.len(), format!("{identical} of {} sweeps byte-identical at 1, 2, 4 and 1 workers", configs.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("A1", a1),
        ("A2", a2),
        ("A3", || lab_group(&["lab/bit-flip-channel-identity"])),
        ("A4", || lab_group(&["lab/majority-vote"])),
        ("A5", || lab_group(&["lab/bit-flip-ghz-fidelity", "lab/phase-flip-ghz-fidelity"])),
        ("A6", || lab_group(&["lab/thermal-reversal"])),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
        ("A11", a11),
        ("A12", a12),
        ("A13", a13),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut unexpected = Vec::new();
    for (name, criterion) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == name) {
            continue;
        }
        let start = Instant::now();
        let result = criterion();
        let status = match (result.passed, KNOWN.contains(&name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(name);
                "FAIL"
            }
        };
        println!("{name} {status} [{:.1} s] {}", start.elapsed().as_secs_f64(), result.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
