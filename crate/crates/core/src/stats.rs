//! Small statistical helpers: simple linear regression, t-tests, and
//! empirical quantiles.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Ordinary least-squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    /// Mean squared residual over the fitted points.
    pub mean_squared_residual: f64,
    pub n: usize,
}

/// Fits a line by least squares using the centered covariance form.
///
/// A constant predictor (all `x` equal) yields slope 0 and intercept
/// `mean(y)`, so the fit degrades to the best constant model instead of
/// failing.
///
/// # Errors
///
/// Returns an error when fewer than two points are given or the input
/// lengths differ.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "ols_fit got {} xs and {} ys",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(
            "ols_fit needs at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    let mut ssr = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ssr += r * r;
    }
    Ok(OlsFit {
        intercept,
        slope,
        mean_squared_residual: ssr / n,
        n: xs.len(),
    })
}

/// Slope estimate with a two-sided t-test against slope = 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SlopeTest {
    pub slope: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Tests whether the OLS slope of `ys` on `xs` differs from zero.
///
/// Degenerate inputs follow fixed conventions: a constant response or a
/// constant predictor gives slope 0 with p = 1, and a perfect fit with a
/// nonzero slope gives p = 0.
pub fn slope_t_test(xs: &[f64], ys: &[f64]) -> Result<SlopeTest> {
    if xs.len() < 3 {
        return Err(Error::InsufficientData(
            "slope test needs at least three points".into(),
        ));
    }
    let fit = ols_fit(xs, ys)?;
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mean_x) * (x - mean_x)).sum();
    let df = n - 2.0;
    let ss_res = fit.mean_squared_residual * n;
    if sxx == 0.0 || fit.slope == 0.0 {
        return Ok(SlopeTest {
            slope: 0.0,
            t_statistic: 0.0,
            p_value: 1.0,
            n: xs.len(),
        });
    }
    let se = (ss_res / df / sxx).sqrt();
    if se == 0.0 {
        // Exact linear data: infinitely significant nonzero slope.
        return Ok(SlopeTest {
            slope: fit.slope,
            t_statistic: f64::INFINITY,
            p_value: 0.0,
            n: xs.len(),
        });
    }
    let t = fit.slope / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(SlopeTest {
        slope: fit.slope,
        t_statistic: t,
        p_value: p.clamp(0.0, 1.0),
        n: xs.len(),
    })
}

/// One-sided paired t-test for `mean(diffs) > 0`.
///
/// Returns `(t, p)`. A zero-variance sample maps to p = 0 when the common
/// difference is positive and p = 1 otherwise.
pub fn paired_one_sided_t(diffs: &[f64]) -> Result<(f64, f64)> {
    if diffs.len() < 2 {
        return Err(Error::InsufficientData(
            "paired test needs at least two differences".into(),
        ));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
    Ok((t, (1.0 - dist.cdf(t)).clamp(0.0, 1.0)))
}

/// Nearest-rank empirical quantile: the smallest element with at least a
/// `q` fraction of the sample at or below it.
///
/// Returns `None` on an empty slice. `q` is clamped to `[0, 1]`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN scores"));
    let q = q.clamp(0.0, 1.0);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    /// Independent oracle: solve the 2x2 normal equations directly.
    fn normal_equations_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len();
        let mut xtx = DMatrix::zeros(2, 2);
        let mut xty = DVector::zeros(2);
        for i in 0..n {
            let row = [1.0, xs[i]];
            for a in 0..2 {
                for b in 0..2 {
                    xtx[(a, b)] += row[a] * row[b];
                }
                xty[a] += row[a] * ys[i];
            }
        }
        let sol = xtx.lu().solve(&xty).expect("well-posed system");
        (sol[0], sol[1])
    }

    #[test]
    fn ols_matches_normal_equations() {
        let xs = [0.0, 0.5, 1.1, 1.9, 2.4, 3.3, 4.1];
        let ys = [1.0, 0.8, 1.4, 0.1, 0.9, -0.2, -0.4];
        let fit = ols_fit(&xs, &ys).unwrap();
        let (b0, b1) = normal_equations_fit(&xs, &ys);
        assert_relative_eq!(fit.intercept, b0, epsilon = 1e-10);
        assert_relative_eq!(fit.slope, b1, epsilon = 1e-10);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 - 0.25 * x).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, -0.25, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert!(fit.mean_squared_residual < 1e-24);
    }

    #[test]
    fn constant_predictor_degrades_to_mean() {
        let xs = [2.0, 2.0, 2.0, 2.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = ols_fit(&xs, &ys).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_relative_eq!(fit.intercept, 4.0);
    }

    #[test]
    fn constant_response_gives_p_one() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [5.0, 5.0, 5.0, 5.0];
        let test = slope_t_test(&xs, &ys).unwrap();
        assert_eq!(test.slope, 0.0);
        assert_eq!(test.p_value, 1.0);
    }

    #[test]
    fn strong_trend_is_significant() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| -2.0 * x + if i % 2 == 0 { 0.05 } else { -0.05 })
            .collect();
        let test = slope_t_test(&xs, &ys).unwrap();
        assert!(test.slope < -1.9);
        assert!(test.p_value < 1e-10);
    }

    #[test]
    fn paired_test_detects_positive_shift() {
        let diffs = [0.11, 0.093, 0.12, 0.10, 0.085, 0.13, 0.09, 0.105];
        let (t, p) = paired_one_sided_t(&diffs).unwrap();
        assert!(t > 10.0);
        assert!(p < 1e-5);
        let negated: Vec<f64> = diffs.iter().map(|d| -d).collect();
        let (_, p_neg) = paired_one_sided_t(&negated).unwrap();
        assert!(p_neg > 0.999);
    }

    #[test]
    fn quantile_follows_nearest_rank() {
        let values = [3.0, 1.0, 2.0, 5.0, 4.0];
        // Sorted: 1 2 3 4 5. rank(0.9) = ceil(4.5) = 5 -> 5.0.
        assert_eq!(empirical_quantile(&values, 0.9), Some(5.0));
        assert_eq!(empirical_quantile(&values, 0.5), Some(3.0));
        assert_eq!(empirical_quantile(&values, 0.0), Some(1.0));
        assert_eq!(empirical_quantile(&values, 1.0), Some(5.0));
        assert_eq!(empirical_quantile(&[], 0.5), None);
    }

    #[test]
    fn quantile_of_ties_is_the_tied_value() {
        let values = [2.0; 12];
        assert_eq!(empirical_quantile(&values, 0.97), Some(2.0));
    }
}
