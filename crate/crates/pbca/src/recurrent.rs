//! Peephole LSTM cell, bidirectional encoder, context-conditioned decoder
//! step and linear output projection.
//!
//! Gate equations (Gers-Schmidhuber peephole form):
//!   i_t = sigma(W_i x_t + R_i h_{t-1} + p_i . c_{t-1} + b_i)
//!   f_t = sigma(W_f x_t + R_f h_{t-1} + p_f . c_{t-1} + b_f)
//!   c_t = f_t . c_{t-1} + i_t . tanh(W_c x_t + R_c h_{t-1} + b_c)
//!   o_t = sigma(W_o x_t + R_o h_{t-1} + p_o . c_t + b_o)
//!   h_t = o_t . tanh(c_t)
//!
//! These functions are the plain-arithmetic forward path used for inference
//! and as one side of the graph-vs-straight-line equivalence tests; training
//! builds the same equations as an autodiff graph (see `model::graph`).

use crate::autodiff::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Weights for one peephole LSTM cell.
#[derive(Clone, Debug)]
pub struct PeepholeLstmParams {
    pub hidden: usize,
    pub input: usize,
    /// Gate input weights, each `hidden x input`.
    pub w_input: Tensor,
    pub w_forget: Tensor,
    pub w_output: Tensor,
    pub w_cell: Tensor,
    /// Recurrent weights, each `hidden x hidden`.
    pub r_input: Tensor,
    pub r_forget: Tensor,
    pub r_output: Tensor,
    pub r_cell: Tensor,
    /// Peephole weights, each length `hidden`.
    pub p_input: Tensor,
    pub p_forget: Tensor,
    pub p_output: Tensor,
    /// Biases, each length `hidden`.
    pub b_input: Tensor,
    pub b_forget: Tensor,
    pub b_output: Tensor,
    pub b_cell: Tensor,
}

impl PeepholeLstmParams {
    /// Seeded initialization: weights uniform in +-1/sqrt(fan-in), forget
    /// bias +1, everything else 0.
    pub fn init(hidden: usize, input: usize, rng: &mut SplitMix64) -> Self {
        let wa = 1.0 / (input as f64).sqrt();
        let ra = 1.0 / (hidden as f64).sqrt();
        let mat = |rows: usize, cols: usize, a: f64, rng: &mut SplitMix64| {
            let vals: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-a, a)).collect();
            Tensor::matrix(rows, cols, vals).expect("init dims")
        };
        let vecp = |n: usize, a: f64, rng: &mut SplitMix64| {
            Tensor::vector((0..n).map(|_| rng.uniform(-a, a)).collect())
        };
        PeepholeLstmParams {
            hidden,
            input,
            w_input: mat(hidden, input, wa, rng),
            w_forget: mat(hidden, input, wa, rng),
            w_output: mat(hidden, input, wa, rng),
            w_cell: mat(hidden, input, wa, rng),
            r_input: mat(hidden, hidden, ra, rng),
            r_forget: mat(hidden, hidden, ra, rng),
            r_output: mat(hidden, hidden, ra, rng),
            r_cell: mat(hidden, hidden, ra, rng),
            p_input: vecp(hidden, ra, rng),
            p_forget: vecp(hidden, ra, rng),
            p_output: vecp(hidden, ra, rng),
            b_input: Tensor::zeros(vec![hidden]),
            b_forget: Tensor::vector(vec![1.0; hidden]),
            b_output: Tensor::zeros(vec![hidden]),
            b_cell: Tensor::zeros(vec![hidden]),
        }
    }

    /// All-zero parameters (tests).
    pub fn zeros(hidden: usize, input: usize) -> Self {
        PeepholeLstmParams {
            hidden,
            input,
            w_input: Tensor::zeros(vec![hidden, input]),
            w_forget: Tensor::zeros(vec![hidden, input]),
            w_output: Tensor::zeros(vec![hidden, input]),
            w_cell: Tensor::zeros(vec![hidden, input]),
            r_input: Tensor::zeros(vec![hidden, hidden]),
            r_forget: Tensor::zeros(vec![hidden, hidden]),
            r_output: Tensor::zeros(vec![hidden, hidden]),
            r_cell: Tensor::zeros(vec![hidden, hidden]),
            p_input: Tensor::zeros(vec![hidden]),
            p_forget: Tensor::zeros(vec![hidden]),
            p_output: Tensor::zeros(vec![hidden]),
            b_input: Tensor::zeros(vec![hidden]),
            b_forget: Tensor::zeros(vec![hidden]),
            b_output: Tensor::zeros(vec![hidden]),
            b_cell: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hidden;
        let d = self.input;
        for (name, t, dims) in [
            ("w_input", &self.w_input, vec![n, d]),
            ("w_forget", &self.w_forget, vec![n, d]),
            ("w_output", &self.w_output, vec![n, d]),
            ("w_cell", &self.w_cell, vec![n, d]),
            ("r_input", &self.r_input, vec![n, n]),
            ("r_forget", &self.r_forget, vec![n, n]),
            ("r_output", &self.r_output, vec![n, n]),
            ("r_cell", &self.r_cell, vec![n, n]),
            ("p_input", &self.p_input, vec![n]),
            ("p_forget", &self.p_forget, vec![n]),
            ("p_output", &self.p_output, vec![n]),
            ("b_input", &self.b_input, vec![n]),
            ("b_forget", &self.b_forget, vec![n]),
            ("b_output", &self.b_output, vec![n]),
            ("b_cell", &self.b_cell, vec![n]),
        ] {
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "lstm {name}: expected dims {dims:?}, got {:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }
}

/// Hidden and cell state of one LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        LstmState { hidden: vec![0.0; n], cell: vec![0.0; n] }
    }
}

/// Hidden-state sequence of a bidirectional encoder: one `2n` vector per
/// input position (forward half then backward half).
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    states: Vec<Vec<f64>>,
}

impl EncoderOutput {
    pub fn new(states: Vec<Vec<f64>>) -> Self {
        EncoderOutput { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Hidden state for input position `j` (0-based).
    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j]
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }
}

/// Linear readout `y = W_out h + b_out` for a single predicted variable.
#[derive(Clone, Debug)]
pub struct OutputProjection {
    /// `1 x n`.
    pub w_out: Tensor,
    /// Scalar bias, stored as a `[1]` tensor.
    pub b_out: Tensor,
}

impl OutputProjection {
    pub fn init(hidden: usize, rng: &mut SplitMix64) -> Self {
        let a = 1.0 / (hidden as f64).sqrt();
        let vals: Vec<f64> = (0..hidden).map(|_| rng.uniform(-a, a)).collect();
        OutputProjection {
            w_out: Tensor::matrix(1, hidden, vals).expect("init dims"),
            b_out: Tensor::scalar(0.0),
        }
    }
}

/// One step of the peephole recurrence.
pub fn lstm_peephole_step(
    x: &[f64],
    prev: &LstmState,
    params: &PeepholeLstmParams,
) -> Result<LstmState> {
    let n = params.hidden;
    if x.len() != params.input {
        return Err(Error::Shape(format!(
            "lstm step: input length {} != d_in {}",
            x.len(),
            params.input
        )));
    }
    if prev.hidden.len() != n || prev.cell.len() != n {
        return Err(Error::Shape(format!(
            "lstm step: state lengths {}/{} != hidden size {n}",
            prev.hidden.len(),
            prev.cell.len()
        )));
    }

    let gate_pre = |w: &Tensor, r: &Tensor, b: &Tensor, row: usize| -> f64 {
        let mut acc = b.values()[row];
        let wv = w.values();
        for (j, xj) in x.iter().enumerate() {
            acc += wv[row * params.input + j] * xj;
        }
        let rv = r.values();
        for (j, hj) in prev.hidden.iter().enumerate() {
            acc += rv[row * n + j] * hj;
        }
        acc
    };

    let mut cell = vec![0.0; n];
    let mut hidden = vec![0.0; n];
    for row in 0..n {
        let i_g = sigmoid(
            gate_pre(&params.w_input, &params.r_input, &params.b_input, row)
                + params.p_input.values()[row] * prev.cell[row],
        );
        let f_g = sigmoid(
            gate_pre(&params.w_forget, &params.r_forget, &params.b_forget, row)
                + params.p_forget.values()[row] * prev.cell[row],
        );
        let cand = gate_pre(&params.w_cell, &params.r_cell, &params.b_cell, row).tanh();
        let c = f_g * prev.cell[row] + i_g * cand;
        let o_g = sigmoid(
            gate_pre(&params.w_output, &params.r_output, &params.b_output, row)
                + params.p_output.values()[row] * c,
        );
        cell[row] = c;
        hidden[row] = o_g * c.tanh();
    }
    Ok(LstmState { hidden, cell })
}

/// Run the input sequence through forward and backward cells (zero initial
/// states) and concatenate the per-position states.
pub fn encode_bidirectional(
    sequence: &[Vec<f64>],
    fwd: &PeepholeLstmParams,
    bwd: &PeepholeLstmParams,
) -> Result<EncoderOutput> {
    if sequence.is_empty() {
        return Err(Error::Contract("encoder requires a non-empty sequence".into()));
    }
    if fwd.hidden != bwd.hidden {
        return Err(Error::Shape(format!(
            "encoder halves disagree on hidden size: {} vs {}",
            fwd.hidden, bwd.hidden
        )));
    }
    let t = sequence.len();
    let n = fwd.hidden;

    let mut fwd_states = Vec::with_capacity(t);
    let mut state = LstmState::zeros(n);
    for x in sequence {
        state = lstm_peephole_step(x, &state, fwd)?;
        fwd_states.push(state.hidden.clone());
    }

    let mut bwd_states = vec![Vec::new(); t];
    let mut state = LstmState::zeros(n);
    for (j, x) in sequence.iter().enumerate().rev() {
        state = lstm_peephole_step(x, &state, bwd)?;
        bwd_states[j] = state.hidden.clone();
    }

    let states = fwd_states
        .into_iter()
        .zip(bwd_states)
        .map(|(mut f, b)| {
            f.extend_from_slice(&b);
            f
        })
        .collect();
    Ok(EncoderOutput::new(states))
}

/// Decoder recurrence: one LSTM step over the concatenation of the previous
/// output and the context vector.
pub fn decoder_step(
    y_prev: &[f64],
    s_prev: &LstmState,
    context: &[f64],
    params: &PeepholeLstmParams,
) -> Result<LstmState> {
    if params.input != y_prev.len() + context.len() {
        return Err(Error::Shape(format!(
            "decoder step: d_in {} != previous output {} + context {}",
            params.input,
            y_prev.len(),
            context.len()
        )));
    }
    let mut x = Vec::with_capacity(params.input);
    x.extend_from_slice(y_prev);
    x.extend_from_slice(context);
    lstm_peephole_step(&x, s_prev, params)
}

/// `W_out h + b_out`.
pub fn output_projection(state: &LstmState, proj: &OutputProjection) -> Result<f64> {
    if proj.w_out.cols() != state.hidden.len() {
        return Err(Error::Shape(format!(
            "projection width {} != hidden size {}",
            proj.w_out.cols(),
            state.hidden.len()
        )));
    }
    let mut acc = proj.b_out.values()[0];
    for (w, h) in proj.w_out.values().iter().zip(&state.hidden) {
        acc += w * h;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everything_gives_zero_state() {
        let p = PeepholeLstmParams::zeros(3, 2);
        let next = lstm_peephole_step(&[0.0, 0.0], &LstmState::zeros(3), &p).unwrap();
        assert_eq!(next.hidden, vec![0.0; 3]);
        assert_eq!(next.cell, vec![0.0; 3]);
    }

    #[test]
    fn saturated_gates_preserve_cell() {
        // Forget gate saturated open, input gate saturated shut: the cell
        // passes through up to sigma(+-20) rounding.
        let mut p = PeepholeLstmParams::zeros(2, 1);
        p.b_forget = Tensor::vector(vec![20.0, 20.0]);
        p.b_input = Tensor::vector(vec![-20.0, -20.0]);
        let prev = LstmState { hidden: vec![0.0, 0.0], cell: vec![0.7, -1.3] };
        let next = lstm_peephole_step(&[0.5], &prev, &p).unwrap();
        for (c_next, c_prev) in next.cell.iter().zip(&prev.cell) {
            assert!((c_next - c_prev).abs() < 1e-8, "{c_next} vs {c_prev}");
        }
    }

    #[test]
    fn matches_scalar_reference_step() {
        // Independent scalar-by-scalar recurrence with seed-47 parameters.
        let mut rng = SplitMix64::new(47);
        let p = PeepholeLstmParams::init(2, 1, &mut rng);
        let x = [0.5];
        let got = lstm_peephole_step(&x, &LstmState::zeros(2), &p).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for row in 0..2 {
            let wi = p.w_input.values()[row];
            let wf = p.w_forget.values()[row];
            let wo = p.w_output.values()[row];
            let wc = p.w_cell.values()[row];
            // previous state is zero, so recurrent and peephole-in terms drop
            let i_g = sig(wi * x[0] + p.b_input.values()[row]);
            let f_g = sig(wf * x[0] + p.b_forget.values()[row]);
            let cand = (wc * x[0] + p.b_cell.values()[row]).tanh();
            let c = f_g * 0.0 + i_g * cand;
            let o_g = sig(wo * x[0] + p.b_output.values()[row] + p.p_output.values()[row] * c);
            let h = o_g * c.tanh();
            assert!((got.cell[row] - c).abs() < 1e-12);
            assert!((got.hidden[row] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_shape_contract() {
        let mut rng = SplitMix64::new(1);
        let fwd = PeepholeLstmParams::init(3, 1, &mut rng);
        let bwd = PeepholeLstmParams::init(3, 1, &mut rng);
        let seq: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1]).collect();
        let out = encode_bidirectional(&seq, &fwd, &bwd).unwrap();
        assert_eq!(out.len(), 5);
        for j in 0..5 {
            assert_eq!(out.state(j).len(), 6);
        }
    }

    #[test]
    fn encoder_zero_params_zero_output() {
        let fwd = PeepholeLstmParams::zeros(2, 1);
        let bwd = PeepholeLstmParams::zeros(2, 1);
        let seq: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let out = encode_bidirectional(&seq, &fwd, &bwd).unwrap();
        for j in 0..4 {
            assert!(out.state(j).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn encoder_rejects_empty_sequence() {
        let p = PeepholeLstmParams::zeros(2, 1);
        assert!(matches!(
            encode_bidirectional(&[], &p, &p),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn palindrome_symmetry() {
        // With identical forward/backward parameters and a palindromic input,
        // the forward half at j equals the backward half at T+1-j.
        let mut rng = SplitMix64::new(9);
        let p = PeepholeLstmParams::init(3, 1, &mut rng);
        let seq: Vec<Vec<f64>> = [0.2, -0.5, 0.9, -0.5, 0.2]
            .iter()
            .map(|v| vec![*v])
            .collect();
        let out = encode_bidirectional(&seq, &p, &p).unwrap();
        let t = seq.len();
        let n = 3;
        for j in 0..t {
            let fwd_half = &out.state(j)[..n];
            let mirror = &out.state(t - 1 - j)[n..];
            for (a, b) in fwd_half.iter().zip(mirror) {
                assert!((a - b).abs() < 1e-12, "j={j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn directional_dependence() {
        // Forward half at j ignores inputs after j; backward half ignores
        // inputs before j. Perturb out-of-range entries and compare bits.
        let mut rng = SplitMix64::new(13);
        let fwd = PeepholeLstmParams::init(2, 1, &mut rng);
        let bwd = PeepholeLstmParams::init(2, 1, &mut rng);
        let seq: Vec<Vec<f64>> = (0..6).map(|i| vec![(i as f64 * 0.7).sin()]).collect();
        let base = encode_bidirectional(&seq, &fwd, &bwd).unwrap();

        let j = 2;
        let mut later = seq.clone();
        later[4][0] += 5.0;
        let perturbed = encode_bidirectional(&later, &fwd, &bwd).unwrap();
        assert_eq!(&base.state(j)[..2], &perturbed.state(j)[..2]);

        let mut earlier = seq.clone();
        earlier[0][0] -= 3.0;
        let perturbed = encode_bidirectional(&earlier, &fwd, &bwd).unwrap();
        assert_eq!(&base.state(j)[2..], &perturbed.state(j)[2..]);
    }

    #[test]
    fn states_stay_finite_over_long_runs() {
        let mut rng = SplitMix64::new(3);
        let p = PeepholeLstmParams::init(4, 1, &mut rng);
        let mut state = LstmState::zeros(4);
        for step in 0..1000 {
            let x = [10.0 * ((step as f64 * 0.13).sin())];
            state = lstm_peephole_step(&x, &state, &p).unwrap();
            assert!(state.hidden.iter().all(|v| v.is_finite()));
            assert!(state.cell.iter().all(|v| v.is_finite()));
            assert!(state.hidden.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn decoder_step_is_step_on_concat() {
        let mut rng = SplitMix64::new(21);
        let p = PeepholeLstmParams::init(3, 5, &mut rng);
        let s_prev = LstmState { hidden: vec![0.1, -0.2, 0.3], cell: vec![0.0, 0.5, -0.5] };
        let y_prev = [0.7];
        let context = [0.1, 0.2, 0.3, 0.4];
        let via_decoder = decoder_step(&y_prev, &s_prev, &context, &p).unwrap();
        let via_step =
            lstm_peephole_step(&[0.7, 0.1, 0.2, 0.3, 0.4], &s_prev, &p).unwrap();
        assert_eq!(via_decoder, via_step);
    }

    #[test]
    fn decoder_zero_params_zero_state() {
        let p = PeepholeLstmParams::zeros(2, 4);
        let out = decoder_step(&[1.0], &LstmState::zeros(2), &[0.5, 0.5, 0.5], &p).unwrap();
        assert_eq!(out.hidden, vec![0.0; 2]);
    }

    #[test]
    fn decoder_dim_contract() {
        // context dim 8 with a scalar y_prev needs d_in 9
        let p = PeepholeLstmParams::zeros(2, 8);
        let err = decoder_step(&[1.0], &LstmState::zeros(2), &[0.0; 8], &p);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn projection_constant_and_selector() {
        let proj = OutputProjection {
            w_out: Tensor::matrix(1, 3, vec![0.0; 3]).unwrap(),
            b_out: Tensor::scalar(1.5),
        };
        let s = LstmState { hidden: vec![0.3, 0.4, 0.5], cell: vec![0.0; 3] };
        assert_eq!(output_projection(&s, &proj).unwrap(), 1.5);

        let proj = OutputProjection {
            w_out: Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0]).unwrap(),
            b_out: Tensor::scalar(0.0),
        };
        assert_eq!(output_projection(&s, &proj).unwrap(), 0.3);
    }

    #[test]
    fn projection_matches_dot_product() {
        let mut rng = SplitMix64::new(31);
        let proj = OutputProjection::init(4, &mut rng);
        let h: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = LstmState { hidden: h.clone(), cell: vec![0.0; 4] };
        let got = output_projection(&s, &proj).unwrap();
        let want: f64 = proj
            .w_out
            .values()
            .iter()
            .zip(&h)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + proj.b_out.values()[0];
        assert!((got - want).abs() < 1e-15);
    }
}
