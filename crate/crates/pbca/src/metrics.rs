//! Evaluation metrics, paired significance testing, autocorrelation and
//! averaged attention-weight extraction.

use crate::data::Example;
use crate::error::{Error, Result};
use crate::model::ForecastModel;

fn check_paired(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Contract("no examples to score".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(Error::Contract(format!(
                "example {i}: {} predicted vs {} true points",
                p.len(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// Mean over all examples and horizon points of the squared error.
pub fn mse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    check_paired(pred, truth)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            let d = a - b;
            acc += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Contract("no points to score".into()));
    }
    Ok(acc / count as f64)
}

/// Bounded symmetric error in [0, 2]: mean of `2|p - t| / (|p| + |t|)` with
/// the 0/0 term defined as 0.
pub fn smape(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    check_paired(pred, truth)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            let denom = a.abs() + b.abs();
            if denom > 0.0 {
                acc += 2.0 * (a - b).abs() / denom;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Contract("no points to score".into()));
    }
    Ok(acc / count as f64)
}

/// Per-example mean squared errors (the default t-test pairing unit).
pub fn per_example_mse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_paired(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let mut acc = 0.0;
            for (a, b) in p.iter().zip(t) {
                let d = a - b;
                acc += d * d;
            }
            acc / p.len() as f64
        })
        .collect())
}

/// Squared errors flattened over every (example, horizon) point.
pub fn per_point_squared_errors(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_paired(pred, truth)?;
    let mut out = Vec::new();
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            let d = a - b;
            out.push(d * d);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub significant: bool,
}

/// Two-sided paired t-test. Degenerate cases follow fixed conventions so
/// comparison tables never crash: all-zero differences give p = 1 (not
/// significant); zero spread with nonzero mean gives p = 0 (significant).
pub fn paired_ttest(errors_a: &[f64], errors_b: &[f64], alpha: f64) -> Result<TTestResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::Contract(format!(
            "paired test needs equal lengths, got {} and {}",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let n = errors_a.len();
    if n < 2 {
        return Err(Error::Contract(format!("paired test needs n >= 2, got {n}")));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let df = n - 1;
    if d.iter().all(|x| *x == 0.0) {
        return Ok(TTestResult { t: 0.0, df, p: 1.0, significant: false });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / df as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        let t = if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(TTestResult { t, df, p: 0.0, significant: true });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_sided_p(t, df as f64);
    Ok(TTestResult { t, df, p, significant: p < alpha })
}

/// ln Gamma(x) for x > 0 (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut series = 1.000000000190015;
    for (i, c) in COEFFS.iter().enumerate() {
        series += c / (x + i as f64 + 1.0);
    }
    let tmp = x + 5.5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    tmp + (2.5066282746310005 * series / x).ln()
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // continued fraction converges fastest below the symmetry point
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln()
        - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    let front = ln_front.exp();

    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-12;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        // even step
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        h *= d * c;
        // odd step
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    front * h / a
}

/// Two-sided p-value of a Student-t statistic with `df` degrees of freedom:
/// `P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5)
}

/// Autocorrelation `r(l)` for lags `0..=max_lag`, normalized by the total
/// centered sum of squares so `r(0) = 1`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::Contract(format!(
            "series length {n} must exceed max lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return Err(Error::Data("series has zero variance".into()));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let mut acc = 0.0;
        for t in 0..n - lag {
            acc += (series[t] - mean) * (series[t + lag] - mean);
        }
        out.push(acc / denom);
    }
    Ok(out)
}

/// Attention weights averaged per lag over a test set. For lag `l` the
/// contributing grid cells are the (output step `i`, input position
/// `j = i + T - l`) pairs that fall inside the history, i.e. `min(T', l)`
/// cells per example per head; cells at lags beyond `T` are masked to zero
/// weight and lie outside the profile.
#[derive(Clone, Debug)]
pub struct AttentionProfile {
    /// Mean weight at lag `index + 1`.
    pub mean_weights: Vec<f64>,
    pub history: usize,
    pub horizon: usize,
}

impl AttentionProfile {
    /// Lag (1-based) with the largest mean weight.
    pub fn argmax_lag(&self) -> usize {
        let mut best = 0;
        for (idx, w) in self.mean_weights.iter().enumerate() {
            if *w > self.mean_weights[best] {
                best = idx;
            }
        }
        best + 1
    }
}

/// Free-running attention weights averaged over all test examples, horizon
/// steps and heads, grouped by lag.
pub fn average_attention(model: &ForecastModel, test: &[Example]) -> Result<AttentionProfile> {
    if test.is_empty() {
        return Err(Error::Contract("empty test set".into()));
    }
    let t = model.config.t;
    let t_prime = model.config.t_prime;
    let mut sums = vec![0.0; t];
    let mut head_count = 0usize;
    for example in test {
        let out = model.forward(&example.input, None, crate::model::ForwardMode::FreeRunning)?;
        head_count = out.attention.len();
        for head in &out.attention {
            for (i0, weights) in head.iter().enumerate() {
                let i = i0 + 1;
                for (j0, w) in weights.iter().enumerate() {
                    let lag = i + t - (j0 + 1);
                    if lag <= t {
                        sums[lag - 1] += w;
                    }
                }
            }
        }
    }
    let examples = test.len() as f64;
    let mean_weights = sums
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let lag = idx + 1;
            let cells = t_prime.min(lag) as f64;
            s / (examples * cells * head_count as f64)
        })
        .collect();
    Ok(AttentionProfile { mean_weights, history: t, horizon: t_prime })
}
