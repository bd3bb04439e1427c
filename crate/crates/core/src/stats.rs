//! Paired Student t-test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn students_t_sf(t: f64, df: f64) -> Result<f64> {
    if !(df >= 1.0) || !df.is_finite() {
        return Err(Error::Contract(format!(
            "degrees of freedom must be at least 1, got {df}"
        )));
    }
    if t.is_nan() {
        return Err(Error::Contract("t statistic is NaN".into()));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_reg(0.5 * df, 0.5, df / (df + t * t)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    /// Sample standard deviation of `a - b`.
    pub sd_diff: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// `mean_diff / sd_diff`.
    pub cohens_d: f64,
}

/// Paired t-test on the differences `a[i] - b[i]`.
///
/// Identical samples give `t = 0`, `d = 0` and `p = 1`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd_diff = var.sqrt();
    let ratio = |num: f64| {
        if num == 0.0 {
            0.0
        } else {
            num / sd_diff
        }
    };
    let t = ratio(mean_diff * nf.sqrt());
    let df = n - 1;
    Ok(PairedTest {
        n,
        mean_a: a.iter().sum::<f64>() / nf,
        mean_b: b.iter().sum::<f64>() / nf,
        mean_diff,
        sd_diff,
        t,
        df,
        p: students_t_sf(t, df as f64)?,
        cohens_d: ratio(mean_diff),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_point_and_limits() {
        assert_eq!(students_t_sf(0.0, 3.0).unwrap(), 1.0);
        assert!(students_t_sf(1.0, 0.5).is_err());
        let mut prev = 1.0;
        for k in 1..40 {
            let p = students_t_sf(k as f64, 4.0).unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn cauchy_closed_form() {
        // df = 1 is Cauchy: two-sided tail 1 - 2 atan(t) / pi.
        for t in [0.3, 1.0, 2.5, 12.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((students_t_sf(t, 1.0).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn identical_pairs() {
        let x = [0.1, 0.4, 0.2];
        let r = paired_t_test(&x, &x).unwrap();
        assert_eq!((r.t, r.cohens_d, r.p), (0.0, 0.0, 1.0));
        assert!(matches!(
            paired_t_test(&[1.0], &[2.0]),
            Err(Error::InsufficientData(_))
        ));
    }
}
