//! Additive content attention and its position-based extensions.
//!
//! Scoring for output step `i` (1-based) against encoder state `h_j`
//! (`j` 1-based over a history of length `T`), with lag `i + T - j`:
//!
//! * content:      e_ij = v_a' tanh(W_a s_{i-1} + U_a h_j)
//! * pi1 (vector): e_ij = v_a' tanh(W_a s_{i-1} + pi[lag] * (U_a h_j))
//! * pi2 (matrix): e_ij = v_a' tanh(W_a s_{i-1} + U_a (pi[:,lag] . h_j))
//! * pi3:          pi2 over per-variable hidden states concatenated to 2Kn
//!
//! A lag is valid when `i + T - j <= T`, i.e. `j >= i`. The pi parameter
//! spans `T + T'` positions so the lag index is always in range, but only
//! the first `T` positions are ever selected for valid lags.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::recurrent::EncoderOutput;
use crate::rng::SplitMix64;

/// How invalid lags (`i + T - j > T`) enter the softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// Invalid lags are excluded from the softmax; their weight is exactly 0.
    Exclude,
    /// Invalid lags score a literal 0 that participates in the softmax.
    LiteralZero,
    /// No masking: the position formula applies at every lag.
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionVariant {
    A,
    Pi1,
    Pi2,
    Pi3,
}

/// Position parameter of an attention head.
#[derive(Clone, Debug)]
pub enum PiParams {
    /// Original content attention: no position term.
    None,
    /// Per-lag scalar, length `T + T'`.
    Vector(Tensor),
    /// Per-lag column, `H x (T + T')`.
    Matrix(Tensor),
}

/// One attention head.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub variant: AttentionVariant,
    /// `m x n` decoder-state projection.
    pub w_a: Tensor,
    /// `m x H` encoder-state projection (`H = 2n`, or `2Kn` for pi3).
    pub u_a: Tensor,
    /// Length `m`.
    pub v_a: Tensor,
    pub pi: PiParams,
}

impl AttentionParams {
    /// Seeded init; pi starts at all-ones so training begins exactly at the
    /// content-attention model.
    pub fn init(
        variant: AttentionVariant,
        m: usize,
        n: usize,
        h_dim: usize,
        t: usize,
        t_prime: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let wa = 1.0 / (n as f64).sqrt();
        let ua = 1.0 / (h_dim as f64).sqrt();
        let va = 1.0 / (m as f64).sqrt();
        let w_a = Tensor::matrix(m, n, (0..m * n).map(|_| rng.uniform(-wa, wa)).collect())
            .expect("init dims");
        let u_a = Tensor::matrix(m, h_dim, (0..m * h_dim).map(|_| rng.uniform(-ua, ua)).collect())
            .expect("init dims");
        let v_a = Tensor::vector((0..m).map(|_| rng.uniform(-va, va)).collect());
        let pi = match variant {
            AttentionVariant::A => PiParams::None,
            AttentionVariant::Pi1 => PiParams::Vector(Tensor::vector(vec![1.0; t + t_prime])),
            AttentionVariant::Pi2 | AttentionVariant::Pi3 => PiParams::Matrix(
                Tensor::matrix(h_dim, t + t_prime, vec![1.0; h_dim * (t + t_prime)])
                    .expect("init dims"),
            ),
        };
        AttentionParams { variant, w_a, u_a, v_a, pi }
    }

    pub fn units(&self) -> usize {
        self.w_a.rows()
    }

    pub fn encoder_dim(&self) -> usize {
        self.u_a.cols()
    }

    /// `T + T'` span of the position parameter, if any.
    pub fn pi_span(&self) -> Option<usize> {
        match &self.pi {
            PiParams::None => None,
            PiParams::Vector(v) => Some(v.len()),
            PiParams::Matrix(m) => Some(m.cols()),
        }
    }
}

/// Scores plus the per-position exclusion mask for one output step.
#[derive(Clone, Debug)]
pub struct ScoredAttention {
    pub scores: Vec<f64>,
    pub masked: Vec<bool>,
}

/// Normalized weights and the resulting context vector.
#[derive(Clone, Debug)]
pub struct AttentionResult {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

fn check_dims(s_prev: &[f64], h: &EncoderOutput, p: &AttentionParams) -> Result<()> {
    let m = p.units();
    if p.w_a.cols() != s_prev.len() {
        return Err(Error::Shape(format!(
            "attention W_a is {m}x{} but decoder state has length {}",
            p.w_a.cols(),
            s_prev.len()
        )));
    }
    if p.u_a.rows() != m || p.v_a.len() != m {
        return Err(Error::Shape(format!(
            "attention unit counts disagree: W_a {m}, U_a {}, v_a {}",
            p.u_a.rows(),
            p.v_a.len()
        )));
    }
    if p.encoder_dim() != h.state_dim() {
        return Err(Error::Shape(format!(
            "attention U_a expects encoder dim {}, got {}",
            p.encoder_dim(),
            h.state_dim()
        )));
    }
    Ok(())
}

/// `W_a s_{i-1}`, shared across the positions of one output step.
fn project_state(s_prev: &[f64], p: &AttentionParams) -> Vec<f64> {
    let m = p.units();
    let n = p.w_a.cols();
    let wv = p.w_a.values();
    let mut out = vec![0.0; m];
    for r in 0..m {
        let mut acc = 0.0;
        let row = &wv[r * n..(r + 1) * n];
        for (w, s) in row.iter().zip(s_prev) {
            acc += w * s;
        }
        out[r] = acc;
    }
    out
}

/// `U_a h` for an arbitrary encoder-side vector.
fn project_hidden(h: &[f64], p: &AttentionParams) -> Vec<f64> {
    let m = p.units();
    let hd = p.encoder_dim();
    let uv = p.u_a.values();
    let mut out = vec![0.0; m];
    for r in 0..m {
        let mut acc = 0.0;
        let row = &uv[r * hd..(r + 1) * hd];
        for (u, x) in row.iter().zip(h) {
            acc += u * x;
        }
        out[r] = acc;
    }
    out
}

fn score_from(ws: &[f64], uh: &[f64], scale: f64, v_a: &Tensor) -> f64 {
    let mut e = 0.0;
    for ((w, u), v) in ws.iter().zip(uh).zip(v_a.values()) {
        e += v * (w + scale * u).tanh();
    }
    e
}

/// Content scores (no masking).
pub fn score_content(
    s_prev: &[f64],
    h: &EncoderOutput,
    p: &AttentionParams,
) -> Result<ScoredAttention> {
    if !matches!(p.pi, PiParams::None) {
        return Err(Error::Contract(
            "score_content called with a position-parameterized attention".into(),
        ));
    }
    check_dims(s_prev, h, p)?;
    let ws = project_state(s_prev, p);
    let t = h.len();
    let mut scores = Vec::with_capacity(t);
    for j in 0..t {
        let uh = project_hidden(h.state(j), p);
        scores.push(score_from(&ws, &uh, 1.0, &p.v_a));
    }
    Ok(ScoredAttention { scores, masked: vec![false; t] })
}

fn check_output_index(i: usize, t: usize, span: usize) -> Result<()> {
    let t_prime = span.checked_sub(t).unwrap_or(0);
    if span <= t {
        return Err(Error::Shape(format!(
            "pi parameter spans {span} positions but history is {t}"
        )));
    }
    if i == 0 || i > t_prime {
        return Err(Error::Contract(format!(
            "output index {i} outside 1..={t_prime}"
        )));
    }
    Ok(())
}

/// Per-lag scalar scores for output step `i` (1-based).
pub fn score_pi1(
    i: usize,
    s_prev: &[f64],
    h: &EncoderOutput,
    p: &AttentionParams,
    mask: MaskMode,
) -> Result<ScoredAttention> {
    let pi = match &p.pi {
        PiParams::Vector(v) => v,
        _ => {
            return Err(Error::Contract(
                "score_pi1 requires a per-lag vector parameter".into(),
            ))
        }
    };
    check_dims(s_prev, h, p)?;
    let t = h.len();
    check_output_index(i, t, pi.len())?;

    let ws = project_state(s_prev, p);
    let mut scores = Vec::with_capacity(t);
    let mut masked = Vec::with_capacity(t);
    for j in 1..=t {
        let lag = i + t - j;
        if lag <= t || mask == MaskMode::Disabled {
            let uh = project_hidden(h.state(j - 1), p);
            scores.push(score_from(&ws, &uh, pi.values()[lag - 1], &p.v_a));
            masked.push(false);
        } else {
            scores.push(0.0);
            masked.push(mask == MaskMode::Exclude);
        }
    }
    Ok(ScoredAttention { scores, masked })
}

/// Per-lag column scores for output step `i` (1-based).
pub fn score_pi2(
    i: usize,
    s_prev: &[f64],
    h: &EncoderOutput,
    p: &AttentionParams,
    mask: MaskMode,
) -> Result<ScoredAttention> {
    let pi = match &p.pi {
        PiParams::Matrix(m) => m,
        _ => {
            return Err(Error::Contract(
                "score_pi2 requires a per-lag matrix parameter".into(),
            ))
        }
    };
    check_dims(s_prev, h, p)?;
    let t = h.len();
    check_output_index(i, t, pi.cols())?;
    if pi.rows() != h.state_dim() {
        return Err(Error::Shape(format!(
            "pi matrix has {} rows but encoder states have dim {}",
            pi.rows(),
            h.state_dim()
        )));
    }

    let ws = project_state(s_prev, p);
    let hd = h.state_dim();
    let mut reweighed = vec![0.0; hd];
    let mut scores = Vec::with_capacity(t);
    let mut masked = Vec::with_capacity(t);
    for j in 1..=t {
        let lag = i + t - j;
        if lag <= t || mask == MaskMode::Disabled {
            let state = h.state(j - 1);
            for (r, out) in reweighed.iter_mut().enumerate() {
                *out = pi.at(r, lag - 1) * state[r];
            }
            let uh = project_hidden(&reweighed, p);
            scores.push(score_from(&ws, &uh, 1.0, &p.v_a));
            masked.push(false);
        } else {
            scores.push(0.0);
            masked.push(mask == MaskMode::Exclude);
        }
    }
    Ok(ScoredAttention { scores, masked })
}

/// pi2 formula over per-variable hidden states concatenated to `2Kn`.
/// With `K = 1` this is score_pi2 on the same code path.
pub fn score_pi3(
    i: usize,
    s_prev: &[f64],
    h_concat: &EncoderOutput,
    p: &AttentionParams,
    mask: MaskMode,
) -> Result<ScoredAttention> {
    score_pi2(i, s_prev, h_concat, p, mask)
}

/// Masked softmax over scores plus the weighted sum of hidden states.
pub fn normalize_and_context(
    scored: &ScoredAttention,
    h: &EncoderOutput,
) -> Result<AttentionResult> {
    let t = scored.scores.len();
    if t != h.len() || t != scored.masked.len() {
        return Err(Error::Shape(format!(
            "scores ({t}), mask ({}) and hidden sequence ({}) lengths disagree",
            scored.masked.len(),
            h.len()
        )));
    }
    let mut max = f64::NEG_INFINITY;
    for (s, m) in scored.scores.iter().zip(&scored.masked) {
        if !m && *s > max {
            max = *s;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::Contract("every attention position is masked".into()));
    }
    let mut weights = vec![0.0; t];
    let mut denom = 0.0;
    for (j, (s, m)) in scored.scores.iter().zip(&scored.masked).enumerate() {
        if !m {
            let e = (s - max).exp();
            weights[j] = e;
            denom += e;
        }
    }
    for w in weights.iter_mut() {
        *w /= denom;
    }

    let hd = h.state_dim();
    let mut context = vec![0.0; hd];
    for (j, w) in weights.iter().enumerate() {
        let state = h.state(j);
        for (c, x) in context.iter_mut().zip(state) {
            *c += w * x;
        }
    }
    Ok(AttentionResult { weights, context })
}

/// `[c(1); ...; c(K)]` in variable order.
pub fn multivariate_concat_context(contexts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if contexts.is_empty() {
        return Err(Error::Contract("no context vectors to concatenate".into()));
    }
    let len = contexts[0].len();
    let mut out = Vec::with_capacity(len * contexts.len());
    for (k, c) in contexts.iter().enumerate() {
        if c.len() != len {
            return Err(Error::Shape(format!(
                "context {k} has length {}, expected {len}",
                c.len()
            )));
        }
        out.extend_from_slice(c);
    }
    Ok(out)
}
