//! Cross-seed summary statistics and significance tests.

use serde::Serialize;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Result, SimError};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    sample_variance(xs).sqrt()
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub stars: &'static str,
    pub note: Option<String>,
}

/// Two-sided Welch t-test of `a` against `b`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(SimError::Input("welch_t needs at least two samples per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let (t, p) = if diff == 0.0 { (0.0, 1.0) } else { (diff.signum() * f64::INFINITY, 0.0) };
        return Ok(WelchResult {
            t,
            df: f64::NAN,
            p,
            stars: stars(p),
            note: Some("both samples have zero variance".into()),
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| SimError::Input(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p, stars: stars(p), note: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignTest {
    pub positive: u64,
    pub negative: u64,
    pub ties: u64,
    pub p: f64,
}

/// Two-sided exact sign test on paired differences; ties are dropped.
pub fn sign_test(diffs: &[f64]) -> Result<SignTest> {
    let positive = diffs.iter().filter(|&&d| d > 0.0).count() as u64;
    let negative = diffs.iter().filter(|&&d| d < 0.0).count() as u64;
    let ties = diffs.len() as u64 - positive - negative;
    let n = positive + negative;
    if n == 0 {
        return Ok(SignTest { positive, negative, ties, p: 1.0 });
    }
    let binom = Binomial::new(0.5, n).map_err(|e| SimError::Input(e.to_string()))?;
    let low = positive.min(negative);
    let p = (2.0 * binom.cdf(low)).min(1.0);
    Ok(SignTest { positive, negative, ties, p })
}
