//! Least-squares summaries of cost curves.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Ordinary least squares `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Set when the response has zero variance; slope and r² are then 0.
    pub degenerate: bool,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return domain("line fit needs at least two paired points");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return domain("line fit needs at least two distinct abscissae");
    }
    if syy <= n * (1e-12 * my.abs().max(1.0)).powi(2) {
        return Ok(LineFit {
            slope: 0.0,
            intercept: my,
            r2: 0.0,
            degenerate: true,
        });
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2: (sxy * sxy / (sxx * syy)).min(1.0),
        degenerate: false,
    })
}

/// Growth rates of a cumulative cost curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Fit of cost against `ln t` over all points.
    pub vs_log_t: LineFit,
    /// Slope of `ln cost` against `ln ln t` over the trailing half of the
    /// points; `None` when fewer than two of them have `t > 1` and positive
    /// cost.
    pub loglog_slope: Option<f64>,
}

impl SlopeFit {
    pub fn slope_vs_logt(&self) -> f64 {
        self.vs_log_t.slope
    }

    pub fn r2(&self) -> f64 {
        self.vs_log_t.r2
    }
}

/// Fits `series` of `(t, cost)` pairs, `t` strictly increasing, at least ten
/// points.
pub fn slope_fit(series: &[(f64, f64)]) -> Result<SlopeFit> {
    if series.len() < 10 {
        return domain(format!("slope fit needs ≥ 10 points, got {}", series.len()));
    }
    if series.windows(2).any(|w| !(w[0].0 < w[1].0)) || series[0].0 <= 0.0 {
        return domain("slope fit needs positive, strictly increasing t");
    }
    let xs: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|p| p.1).collect();
    let vs_log_t = linear_fit(&xs, &ys)?;

    let tail = &series[series.len() / 2..];
    let (lx, ly): (Vec<f64>, Vec<f64>) = tail
        .iter()
        .filter(|(t, c)| *t > 1.0 && *c > 0.0)
        .map(|(t, c)| (t.ln().ln(), c.ln()))
        .unzip();
    let loglog_slope = if lx.len() >= 2 {
        let f = linear_fit(&lx, &ly)?;
        Some(f.slope)
    } else {
        None
    };
    Ok(SlopeFit {
        vs_log_t,
        loglog_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    #[test]
    fn exact_log_series() {
        let s: Vec<(f64, f64)> = grid(1.0, 1e5, 60)
            .into_iter()
            .map(|t| (t, 7.0 * t.ln()))
            .collect();
        let f = slope_fit(&s).unwrap();
        assert!((f.slope_vs_logt() - 7.0).abs() < 1e-12);
        assert!((f.r2() - 1.0).abs() < 1e-12);
        // ln(7 ln t) = ln 7 + ln ln t
        assert!((f.loglog_slope.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_log_series_has_half_slope() {
        let s: Vec<(f64, f64)> = grid(1e3, 1e5, 40)
            .into_iter()
            .map(|t| (t, 3.0 * t.ln().sqrt()))
            .collect();
        let f = slope_fit(&s).unwrap();
        assert!((f.loglog_slope.unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn constant_series_is_flagged() {
        let s: Vec<(f64, f64)> = grid(1.0, 1e3, 20).into_iter().map(|t| (t, 4.2)).collect();
        let f = slope_fit(&s).unwrap();
        assert!(f.vs_log_t.degenerate);
        assert_eq!(f.slope_vs_logt(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let short: Vec<(f64, f64)> = (1..5).map(|t| (t as f64, 1.0)).collect();
        assert!(slope_fit(&short).is_err());
        let mut s: Vec<(f64, f64)> = (1..20).map(|t| (t as f64, t as f64)).collect();
        s[5].0 = s[4].0;
        assert!(slope_fit(&s).is_err());
    }
}
