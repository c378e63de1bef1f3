//! Small statistics toolkit for Monte Carlo summaries.

/// Sample mean and standard error of the mean (n − 1 normalization).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Pearson sample correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope propagated from per-point errors, when given.
    pub slope_stderr: f64,
}

impl LineFit {
    /// Slope in units of its standard error (0 when both vanish).
    pub fn slope_z(&self) -> f64 {
        if self.slope_stderr > 0.0 {
            self.slope / self.slope_stderr
        } else if self.slope == 0.0 {
            0.0
        } else {
            f64::INFINITY * self.slope.signum()
        }
    }
}

/// Fits `y = slope·x + intercept`; `y_err` (if any) is propagated into the
/// slope's standard error as var(b) = Σ c_i² σ_i² with c_i = (x_i − x̄)/Sxx.
pub fn line_fit(x: &[f64], y: &[f64], y_err: Option<&[f64]>) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let slope_stderr = match y_err {
        Some(err) => x
            .iter()
            .zip(err)
            .map(|(a, s)| ((a - mx) / sxx * s).powi(2))
            .sum::<f64>()
            .sqrt(),
        None => {
            let resid: f64 = x
                .iter()
                .zip(y)
                .map(|(a, b)| (b - slope * a - intercept).powi(2))
                .sum();
            if n > 2.0 {
                (resid / (n - 2.0) / sxx).sqrt()
            } else {
                0.0
            }
        }
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[3.0, 3.0, 3.0]), (3.0, 0.0));
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0];
        let fit = line_fit(&x, &[3.0, 5.0, 7.0], Some(&[0.1, 0.1, 0.1]));
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        // c = (-1/2, 0, 1/2) so σ_b = 0.1·√(1/2).
        assert!((fit.slope_stderr - 0.1 * 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&s, |x| x) - 0.005).abs() < 1e-12);
    }
}
