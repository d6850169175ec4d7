//! Correlation coefficients with two-sided p-values.
//!
//! The analytic p-value uses the exact Student-t relation through the
//! regularized incomplete beta function; a permutation mode with a
//! configurable resample count serves as the verification oracle for it.

use rand::RngExt as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// A correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

/// Sample Pearson correlation with a two-sided Student-t p-value.
pub fn pearson<S: Scalar>(x: &[S], y: &[S]) -> Result<CorrelationResult> {
    let (x, y) = as_f64_pair(x, y)?;
    let r = pearson_coefficient(&x, &y)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: t_test_p_value(r, x.len()),
        n: x.len(),
    })
}

/// Spearman rank correlation: Pearson on average-ranked data, same p-value
/// approximation.
pub fn spearman<S: Scalar>(x: &[S], y: &[S]) -> Result<CorrelationResult> {
    let (x, y) = as_f64_pair(x, y)?;
    let rx = average_ranks(&x);
    let ry = average_ranks(&y);
    let r = pearson_coefficient(&rx, &ry)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: t_test_p_value(r, x.len()),
        n: x.len(),
    })
}

/// Two-sided permutation p-value for either method; the oracle against which
/// the analytic p-values are validated.
pub fn permutation_p_value<S: Scalar>(
    x: &[S],
    y: &[S],
    method: CorrelationMethod,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let (x, y) = as_f64_pair(x, y)?;
    let (x, y) = match method {
        CorrelationMethod::Pearson => (x, y),
        CorrelationMethod::Spearman => (average_ranks(&x), average_ranks(&y)),
    };
    let observed = pearson_coefficient(&x, &y)?.abs();

    let mut rng = rng_from_seed(seed);
    let mut permuted = y.clone();
    let mut at_least_as_extreme = 0usize;
    for _ in 0..resamples {
        for i in (1..permuted.len()).rev() {
            let j = rng.random_range(0..=i);
            permuted.swap(i, j);
        }
        // A permuted series of a non-constant input stays non-constant.
        let r = pearson_coefficient(&x, &permuted)?;
        if r.abs() >= observed - 1e-12 {
            at_least_as_extreme += 1;
        }
    }
    Ok((at_least_as_extreme + 1) as f64 / (resamples + 1) as f64)
}

fn as_f64_pair<S: Scalar>(x: &[S], y: &[S]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Parameter(format!(
            "correlation needs n >= 3, got {}",
            x.len()
        )));
    }
    let to = |s: &[S]| s.iter().map(|&v| v.as_f64()).collect::<Vec<f64>>();
    Ok((to(x), to(y)))
}

fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCorrelation("a series is constant".into()));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of r under the null, via t = r sqrt((n-2)/(1-r^2)) and
/// the Student-t distribution with n-2 degrees of freedom.
fn t_test_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t2 = r * r * df / (1.0 - r * r);
    // P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2)
    regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Average ranks (1-based); tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

// --- special functions -----------------------------------------------------

/// ln Γ(z) for z > 0 (Lanczos approximation).
fn ln_gamma(z: f64) -> f64 {
    const COEFFICIENTS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut sum = 1.000_000_000_190_015;
    for (i, &c) in COEFFICIENTS.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * sum / z).ln()
}

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // Use the symmetry relation so the continued fraction converges fast.
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_gamma(a) - ln_gamma(b) + ln_gamma(a + b);
    let front = ln_front.exp();

    const TINY: f64 = 1e-30;
    const TARGET: f64 = 1e-12;
    let mut f = 1.0;
    let mut c = 1.0;
    let mut d = 0.0;
    for m in 0..300 {
        let m_f = m as f64;
        let numerators = [
            -(a + m_f) * (a + b + m_f) * x / ((a + 2.0 * m_f) * (a + 2.0 * m_f + 1.0)),
            (m_f + 1.0) * (b - m_f - 1.0) * x / ((a + 2.0 * m_f + 1.0) * (a + 2.0 * m_f + 2.0)),
        ];
        let mut converged = false;
        for numerator in numerators {
            d = 1.0 + numerator * d;
            if d.abs() < TINY {
                d = TINY;
            }
            d = 1.0 / d;
            c = 1.0 + numerator / c;
            if c.abs() < TINY {
                c = TINY;
            }
            let delta = c * d;
            f *= delta;
            converged = (delta - 1.0).abs() < TARGET;
        }
        if converged {
            break;
        }
    }
    front / (f * a)
}
