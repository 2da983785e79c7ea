//! Small estimators shared by the Monte Carlo drivers.

use crate::error::{Error, Result};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = values.collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// First sign change of `y` from negative to non-negative along `points`
/// (sorted by `x`), linearly interpolated.
pub fn crossing(points: &[(f64, f64)]) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 < 0.0 && y1 >= 0.0 {
            Some(x0 + (x1 - x0) * (-y0) / (y1 - y0))
        } else {
            None
        }
    })
}

/// Mean crossing point of consecutive curves in a family, each given as
/// `(x, y)` on a shared grid and ordered by system size. With `rising` the
/// larger system is expected below the smaller one at small `x` (failure
/// rates); otherwise above it (success probabilities).
pub fn family_crossing(curves: &[Vec<(f64, f64)>], rising: bool) -> Result<f64> {
    let sign = if rising { 1.0 } else { -1.0 };
    let found: Vec<f64> = curves
        .windows(2)
        .filter_map(|w| {
            let diff: Vec<(f64, f64)> = w[0].iter().zip(&w[1]).map(|(a, b)| (a.0, sign * (b.1 - a.1))).collect();
            crossing(&diff)
        })
        .collect();
    if found.is_empty() {
        return Err(Error::NoCrossing);
    }
    Ok(found.iter().sum::<f64>() / found.len() as f64)
}

/// 95% percentile interval, widened if needed so that it contains `center`.
pub fn percentile_interval(mut values: Vec<f64>, center: f64) -> (f64, f64) {
    if values.is_empty() {
        return (center, center);
    }
    values.sort_by(f64::total_cmp);
    let at = |q: f64| values[((values.len() - 1) as f64 * q).round() as usize];
    (at(0.025).min(center), at(0.975).max(center))
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!("{} points in the fit window", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("fit points share one abscissa".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
