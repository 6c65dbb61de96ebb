//! The assembled forecaster: per-variable bidirectional encoders, an
//! attention stage, a context-fed decoder and a linear readout.
//!
//! `forward` here is the plain-arithmetic path used for validation, testing
//! and analysis. Training differentiates an equivalent autodiff graph (see
//! `graph`); the two are held together by an equivalence test.

mod checkpoint;
mod config;
mod graph;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ForecastConfig, ForwardMode, Variant};
pub use graph::ModelGraph;
pub use train::{adam_step, loss, select_pi, train, AdamState, EpochStats, TrainReport};

use crate::attention::{
    multivariate_concat_context, normalize_and_context, score_content, score_pi1, score_pi2,
    score_pi3, AttentionParams, AttentionVariant,
};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::recurrent::{
    decoder_step, encode_bidirectional, output_projection, EncoderOutput, LstmState,
    OutputProjection, PeepholeLstmParams,
};
use crate::rng::SplitMix64;

/// Role of a parameter tensor; decides L2 treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Pi,
}

/// Forward and backward cells of one variable's encoder.
#[derive(Clone, Debug)]
pub struct EncoderPair {
    pub forward: PeepholeLstmParams,
    pub backward: PeepholeLstmParams,
}

/// Predictions plus per-head attention weights (`heads x T' x T`).
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub predictions: Vec<f64>,
    pub attention: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct ForecastModel {
    pub config: ForecastConfig,
    pub encoders: Vec<EncoderPair>,
    pub attentions: Vec<AttentionParams>,
    pub decoder: PeepholeLstmParams,
    pub projection: OutputProjection,
}

fn lstm_fields(p: &PeepholeLstmParams) -> [(&'static str, &Tensor, ParamKind); 15] {
    [
        ("w_input", &p.w_input, ParamKind::Weight),
        ("w_forget", &p.w_forget, ParamKind::Weight),
        ("w_output", &p.w_output, ParamKind::Weight),
        ("w_cell", &p.w_cell, ParamKind::Weight),
        ("r_input", &p.r_input, ParamKind::Weight),
        ("r_forget", &p.r_forget, ParamKind::Weight),
        ("r_output", &p.r_output, ParamKind::Weight),
        ("r_cell", &p.r_cell, ParamKind::Weight),
        ("p_input", &p.p_input, ParamKind::Weight),
        ("p_forget", &p.p_forget, ParamKind::Weight),
        ("p_output", &p.p_output, ParamKind::Weight),
        ("b_input", &p.b_input, ParamKind::Bias),
        ("b_forget", &p.b_forget, ParamKind::Bias),
        ("b_output", &p.b_output, ParamKind::Bias),
        ("b_cell", &p.b_cell, ParamKind::Bias),
    ]
}

fn lstm_fields_mut(p: &mut PeepholeLstmParams) -> [(&'static str, &mut Tensor, ParamKind); 15] {
    [
        ("w_input", &mut p.w_input, ParamKind::Weight),
        ("w_forget", &mut p.w_forget, ParamKind::Weight),
        ("w_output", &mut p.w_output, ParamKind::Weight),
        ("w_cell", &mut p.w_cell, ParamKind::Weight),
        ("r_input", &mut p.r_input, ParamKind::Weight),
        ("r_forget", &mut p.r_forget, ParamKind::Weight),
        ("r_output", &mut p.r_output, ParamKind::Weight),
        ("r_cell", &mut p.r_cell, ParamKind::Weight),
        ("p_input", &mut p.p_input, ParamKind::Weight),
        ("p_forget", &mut p.p_forget, ParamKind::Weight),
        ("p_output", &mut p.p_output, ParamKind::Weight),
        ("b_input", &mut p.b_input, ParamKind::Bias),
        ("b_forget", &mut p.b_forget, ParamKind::Bias),
        ("b_output", &mut p.b_output, ParamKind::Bias),
        ("b_cell", &mut p.b_cell, ParamKind::Bias),
    ]
}

impl ForecastModel {
    /// Seeded construction. Parameter draws happen in visit order, so a seed
    /// pins the whole initialization.
    pub fn new(config: ForecastConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(config.seed);
        let n = config.n;

        let encoders: Vec<EncoderPair> = (0..config.k)
            .map(|_| EncoderPair {
                forward: PeepholeLstmParams::init(n, 1, &mut rng),
                backward: PeepholeLstmParams::init(n, 1, &mut rng),
            })
            .collect();

        let head_dim = config.head_input_dim();
        let attentions: Vec<AttentionParams> = (0..config.attention_heads())
            .map(|_| {
                AttentionParams::init(
                    config.variant.head_variant(),
                    config.m,
                    n,
                    head_dim,
                    config.t,
                    config.t_prime,
                    &mut rng,
                )
            })
            .collect();

        let decoder = PeepholeLstmParams::init(n, 1 + config.context_dim(), &mut rng);
        let projection = OutputProjection::init(n, &mut rng);

        Ok(ForecastModel { config, encoders, attentions, decoder, projection })
    }

    /// Visit every parameter in the fixed registry order. This order defines
    /// checkpoint layout, optimizer state alignment and graph binding slots.
    pub fn visit_params(&self, f: &mut impl FnMut(&str, &Tensor, ParamKind)) {
        for (k, enc) in self.encoders.iter().enumerate() {
            for (suffix, tensor, kind) in lstm_fields(&enc.forward) {
                f(&format!("enc{k}.fwd.{suffix}"), tensor, kind);
            }
            for (suffix, tensor, kind) in lstm_fields(&enc.backward) {
                f(&format!("enc{k}.bwd.{suffix}"), tensor, kind);
            }
        }
        for (a, att) in self.attentions.iter().enumerate() {
            f(&format!("att{a}.w_a"), &att.w_a, ParamKind::Weight);
            f(&format!("att{a}.u_a"), &att.u_a, ParamKind::Weight);
            f(&format!("att{a}.v_a"), &att.v_a, ParamKind::Weight);
            match &att.pi {
                crate::attention::PiParams::None => {}
                crate::attention::PiParams::Vector(p) => {
                    f(&format!("att{a}.pi"), p, ParamKind::Pi)
                }
                crate::attention::PiParams::Matrix(p) => {
                    f(&format!("att{a}.pi"), p, ParamKind::Pi)
                }
            }
        }
        for (suffix, tensor, kind) in lstm_fields(&self.decoder) {
            f(&format!("dec.{suffix}"), tensor, kind);
        }
        f("out.w", &self.projection.w_out, ParamKind::Weight);
        f("out.b", &self.projection.b_out, ParamKind::Bias);
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&str, &mut Tensor, ParamKind)) {
        for (k, enc) in self.encoders.iter_mut().enumerate() {
            for (suffix, tensor, kind) in lstm_fields_mut(&mut enc.forward) {
                f(&format!("enc{k}.fwd.{suffix}"), tensor, kind);
            }
            for (suffix, tensor, kind) in lstm_fields_mut(&mut enc.backward) {
                f(&format!("enc{k}.bwd.{suffix}"), tensor, kind);
            }
        }
        for (a, att) in self.attentions.iter_mut().enumerate() {
            f(&format!("att{a}.w_a"), &mut att.w_a, ParamKind::Weight);
            f(&format!("att{a}.u_a"), &mut att.u_a, ParamKind::Weight);
            f(&format!("att{a}.v_a"), &mut att.v_a, ParamKind::Weight);
            match &mut att.pi {
                crate::attention::PiParams::None => {}
                crate::attention::PiParams::Vector(p) => {
                    f(&format!("att{a}.pi"), p, ParamKind::Pi)
                }
                crate::attention::PiParams::Matrix(p) => {
                    f(&format!("att{a}.pi"), p, ParamKind::Pi)
                }
            }
        }
        for (suffix, tensor, kind) in lstm_fields_mut(&mut self.decoder) {
            f(&format!("dec.{suffix}"), tensor, kind);
        }
        f("out.w", &mut self.projection.w_out, ParamKind::Weight);
        f("out.b", &mut self.projection.b_out, ParamKind::Bias);
    }

    /// Number of parameter tensors.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.visit_params(&mut |_, _, _| count += 1);
        count
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        let mut count = 0;
        self.visit_params(&mut |_, t, _| count += t.len());
        count
    }

    fn check_window(&self, window: &[Vec<f64>]) -> Result<()> {
        if window.len() != self.config.t {
            return Err(Error::Shape(format!(
                "window has {} rows, config.t = {}",
                window.len(),
                self.config.t
            )));
        }
        for (t, row) in window.iter().enumerate() {
            if row.len() != self.config.k {
                return Err(Error::Shape(format!(
                    "window row {t} has {} variables, config.k = {}",
                    row.len(),
                    self.config.k
                )));
            }
        }
        Ok(())
    }

    /// Run the full forecaster over one window. Teacher forcing requires the
    /// true targets; free running must not receive any.
    pub fn forward(
        &self,
        window: &[Vec<f64>],
        targets: Option<&[f64]>,
        mode: ForwardMode,
    ) -> Result<ForwardOutput> {
        self.check_window(window)?;
        let cfg = &self.config;
        match (mode, targets) {
            (ForwardMode::TeacherForced, None) => {
                return Err(Error::Contract(
                    "teacher-forced forward requires targets".into(),
                ))
            }
            (ForwardMode::FreeRunning, Some(_)) => {
                return Err(Error::Contract(
                    "free-running forward must not receive targets".into(),
                ))
            }
            (ForwardMode::TeacherForced, Some(t)) if t.len() != cfg.t_prime => {
                return Err(Error::Contract(format!(
                    "expected {} targets, got {}",
                    cfg.t_prime,
                    t.len()
                )))
            }
            _ => {}
        }

        // per-variable encoders
        let mut encoded: Vec<EncoderOutput> = Vec::with_capacity(cfg.k);
        for (k, enc) in self.encoders.iter().enumerate() {
            let seq: Vec<Vec<f64>> = window.iter().map(|row| vec![row[k]]).collect();
            encoded.push(encode_bidirectional(&seq, &enc.forward, &enc.backward)?);
        }

        // attention inputs: pi3 sees the concatenated states, the other
        // variants one (per-variable) encoder output per head
        let head_states: Vec<EncoderOutput> = if matches!(cfg.variant, Variant::Pi3) {
            let concat: Vec<Vec<f64>> = (0..cfg.t)
                .map(|j| {
                    let mut state = Vec::with_capacity(cfg.head_input_dim());
                    for enc in &encoded {
                        state.extend_from_slice(enc.state(j));
                    }
                    state
                })
                .collect();
            vec![EncoderOutput::new(concat)]
        } else {
            encoded
        };

        let y0 = window[cfg.t - 1][cfg.target_variable];
        let mut state = LstmState::zeros(cfg.n);
        let mut predictions: Vec<f64> = Vec::with_capacity(cfg.t_prime);
        let mut attention: Vec<Vec<Vec<f64>>> =
            vec![Vec::with_capacity(cfg.t_prime); self.attentions.len()];

        for i in 1..=cfg.t_prime {
            let mut contexts: Vec<Vec<f64>> = Vec::with_capacity(self.attentions.len());
            for (head, att) in self.attentions.iter().enumerate() {
                let h = &head_states[head];
                let scored = match att.variant {
                    AttentionVariant::A => score_content(&state.hidden, h, att)?,
                    AttentionVariant::Pi1 => {
                        score_pi1(i, &state.hidden, h, att, cfg.mask_mode)?
                    }
                    AttentionVariant::Pi2 => {
                        score_pi2(i, &state.hidden, h, att, cfg.mask_mode)?
                    }
                    AttentionVariant::Pi3 => {
                        score_pi3(i, &state.hidden, h, att, cfg.mask_mode)?
                    }
                };
                let result = normalize_and_context(&scored, h)?;
                attention[head].push(result.weights);
                contexts.push(result.context);
            }
            let context = if contexts.len() == 1 {
                contexts.pop().expect("one context")
            } else {
                multivariate_concat_context(&contexts)?
            };

            let y_prev = if i == 1 {
                y0
            } else {
                match mode {
                    ForwardMode::TeacherForced => targets.expect("checked above")[i - 2],
                    ForwardMode::FreeRunning => predictions[i - 2],
                }
            };
            state = decoder_step(&[y_prev], &state, &context, &self.decoder)?;
            predictions.push(output_projection(&state, &self.projection)?);
        }

        Ok(ForwardOutput { predictions, attention })
    }

    /// Free-running predictions for a batch of examples.
    pub fn predict(&self, examples: &[crate::data::Example]) -> Result<Vec<Vec<f64>>> {
        examples
            .iter()
            .map(|ex| {
                Ok(self
                    .forward(&ex.input, None, ForwardMode::FreeRunning)?
                    .predictions)
            })
            .collect()
    }
}
