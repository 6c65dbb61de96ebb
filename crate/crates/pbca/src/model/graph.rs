//! Autodiff-graph construction for the forecaster.
//!
//! The graph is built once per (model shape, mode) and re-evaluated with
//! fresh input/target bindings for every example, so training never rebuilds
//! node structure inside the batch loop.

use std::collections::HashMap;

use crate::attention::{AttentionVariant, MaskMode};
use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::model::{ForecastModel, ForwardMode, ParamKind, Variant};

#[derive(Clone, Debug)]
pub struct ParamNode {
    pub name: String,
    pub node: NodeId,
    pub slot: usize,
    pub kind: ParamKind,
    pub dims: Vec<usize>,
}

/// A fully wired forecaster graph.
pub struct ModelGraph {
    pub graph: Graph,
    pub mode: ForwardMode,
    /// `x.{t}.{k}` binding slots.
    input_slots: Vec<Vec<usize>>,
    /// `y.{i}` binding slots (teacher forcing / loss), empty if unused.
    target_slots: Vec<usize>,
    pub predictions: Vec<NodeId>,
    /// Softmax nodes per head per output step.
    pub attention_nodes: Vec<Vec<NodeId>>,
    pub loss: Option<NodeId>,
    pub params: Vec<ParamNode>,
}

struct LstmNodes {
    w_input: NodeId,
    w_forget: NodeId,
    w_output: NodeId,
    w_cell: NodeId,
    r_input: NodeId,
    r_forget: NodeId,
    r_output: NodeId,
    r_cell: NodeId,
    p_input: NodeId,
    p_forget: NodeId,
    p_output: NodeId,
    b_input: NodeId,
    b_forget: NodeId,
    b_output: NodeId,
    b_cell: NodeId,
}

impl LstmNodes {
    fn from_map(map: &HashMap<String, NodeId>, prefix: &str) -> LstmNodes {
        let get = |suffix: &str| map[&format!("{prefix}.{suffix}")];
        LstmNodes {
            w_input: get("w_input"),
            w_forget: get("w_forget"),
            w_output: get("w_output"),
            w_cell: get("w_cell"),
            r_input: get("r_input"),
            r_forget: get("r_forget"),
            r_output: get("r_output"),
            r_cell: get("r_cell"),
            p_input: get("p_input"),
            p_forget: get("p_forget"),
            p_output: get("p_output"),
            b_input: get("b_input"),
            b_forget: get("b_forget"),
            b_output: get("b_output"),
            b_cell: get("b_cell"),
        }
    }
}

fn lstm_step(
    g: &mut Graph,
    p: &LstmNodes,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> (NodeId, NodeId) {
    let gate = |g: &mut Graph, w: NodeId, r: NodeId| {
        let wx = g.matmul(w, x);
        let rh = g.matmul(r, h_prev);
        g.add(wx, rh)
    };

    let i_lin = gate(g, p.w_input, p.r_input);
    let i_peep = g.hadamard(p.p_input, c_prev);
    let i_sum = g.add(i_lin, i_peep);
    let i_pre = g.add(i_sum, p.b_input);
    let i_g = g.sigmoid(i_pre);

    let f_lin = gate(g, p.w_forget, p.r_forget);
    let f_peep = g.hadamard(p.p_forget, c_prev);
    let f_sum = g.add(f_lin, f_peep);
    let f_pre = g.add(f_sum, p.b_forget);
    let f_g = g.sigmoid(f_pre);

    let c_lin = gate(g, p.w_cell, p.r_cell);
    let c_pre = g.add(c_lin, p.b_cell);
    let cand = g.tanh(c_pre);

    let keep = g.hadamard(f_g, c_prev);
    let write = g.hadamard(i_g, cand);
    let c = g.add(keep, write);

    let o_lin = gate(g, p.w_output, p.r_output);
    let o_peep = g.hadamard(p.p_output, c);
    let o_sum = g.add(o_lin, o_peep);
    let o_pre = g.add(o_sum, p.b_output);
    let o_g = g.sigmoid(o_pre);

    let c_t = g.tanh(c);
    let h = g.hadamard(o_g, c_t);
    (h, c)
}

impl ModelGraph {
    pub fn build(model: &ForecastModel, mode: ForwardMode, with_loss: bool) -> Result<ModelGraph> {
        let cfg = &model.config;
        let mut g = Graph::new();

        // parameter nodes in registry order
        let mut params: Vec<ParamNode> = Vec::new();
        let mut failed: Option<Error> = None;
        model.visit_params(&mut |name, tensor, kind| {
            if failed.is_some() {
                return;
            }
            match g.parameter(name) {
                Ok(node) => {
                    let slot = g.slot(name).expect("just created");
                    params.push(ParamNode {
                        name: name.to_string(),
                        node,
                        slot,
                        kind,
                        dims: tensor.dims().to_vec(),
                    });
                }
                Err(e) => failed = Some(e),
            }
        });
        if let Some(e) = failed {
            return Err(e);
        }
        let by_name: HashMap<String, NodeId> =
            params.iter().map(|p| (p.name.clone(), p.node)).collect();

        // input nodes
        let mut input_nodes = vec![vec![NodeId(0); cfg.k]; cfg.t];
        let mut input_slots = vec![vec![0usize; cfg.k]; cfg.t];
        for t in 0..cfg.t {
            for k in 0..cfg.k {
                let name = format!("x.{t}.{k}");
                input_nodes[t][k] = g.input(&name)?;
                input_slots[t][k] = g.slot(&name)?;
            }
        }
        let needs_targets = with_loss || mode == ForwardMode::TeacherForced;
        let mut target_nodes = Vec::new();
        let mut target_slots = Vec::new();
        if needs_targets {
            for i in 1..=cfg.t_prime {
                let name = format!("y.{i}");
                target_nodes.push(g.input(&name)?);
                target_slots.push(g.slot(&name)?);
            }
        }

        let zero_state = g.constant(Tensor::zeros(vec![cfg.n]));

        // encoders
        let mut encoded: Vec<Vec<NodeId>> = Vec::with_capacity(cfg.k);
        for k in 0..cfg.k {
            let fwd = LstmNodes::from_map(&by_name, &format!("enc{k}.fwd"));
            let bwd = LstmNodes::from_map(&by_name, &format!("enc{k}.bwd"));

            let mut fwd_states = Vec::with_capacity(cfg.t);
            let (mut h, mut c) = (zero_state, zero_state);
            for t in 0..cfg.t {
                let (nh, nc) = lstm_step(&mut g, &fwd, input_nodes[t][k], h, c);
                fwd_states.push(nh);
                h = nh;
                c = nc;
            }
            let mut bwd_states = vec![NodeId(0); cfg.t];
            let (mut h, mut c) = (zero_state, zero_state);
            for t in (0..cfg.t).rev() {
                let (nh, nc) = lstm_step(&mut g, &bwd, input_nodes[t][k], h, c);
                bwd_states[t] = nh;
                h = nh;
                c = nc;
            }
            let states: Vec<NodeId> = (0..cfg.t)
                .map(|j| g.concat(&[fwd_states[j], bwd_states[j]]))
                .collect();
            encoded.push(states);
        }

        // per-head attention inputs
        let head_states: Vec<Vec<NodeId>> = if matches!(cfg.variant, Variant::Pi3) {
            let concat: Vec<NodeId> = (0..cfg.t)
                .map(|j| {
                    let parts: Vec<NodeId> = encoded.iter().map(|e| e[j]).collect();
                    g.concat(&parts)
                })
                .collect();
            vec![concat]
        } else {
            encoded
        };

        let heads = cfg.attention_heads();
        let head_variant = cfg.variant.head_variant();
        // U_a h_j is step-independent for the content and pi1 forms
        let mut hoisted_uh: Vec<Vec<NodeId>> = Vec::with_capacity(heads);
        for head in 0..heads {
            let u_a = by_name[&format!("att{head}.u_a")];
            if matches!(head_variant, AttentionVariant::A | AttentionVariant::Pi1) {
                hoisted_uh.push(
                    head_states[head]
                        .iter()
                        .map(|&h_j| g.matmul(u_a, h_j))
                        .collect(),
                );
            } else {
                hoisted_uh.push(Vec::new());
            }
        }

        let dec = LstmNodes::from_map(&by_name, "dec");
        let out_w = by_name["out.w"];
        let out_b = by_name["out.b"];

        let y0 = input_nodes[cfg.t - 1][cfg.target_variable];
        let (mut s_h, mut s_c) = (zero_state, zero_state);
        let mut predictions: Vec<NodeId> = Vec::with_capacity(cfg.t_prime);
        let mut attention_nodes: Vec<Vec<NodeId>> = vec![Vec::new(); heads];

        for i in 1..=cfg.t_prime {
            let mut contexts = Vec::with_capacity(heads);
            for head in 0..heads {
                let w_a = by_name[&format!("att{head}.w_a")];
                let u_a = by_name[&format!("att{head}.u_a")];
                let v_a = by_name[&format!("att{head}.v_a")];
                let ws = g.matmul(w_a, s_h);

                let mut scores = Vec::with_capacity(cfg.t);
                let mut masked = Vec::with_capacity(cfg.t);
                for j in 1..=cfg.t {
                    let lag = i + cfg.t - j;
                    // content attention never masks; position variants blank
                    // invalid lags (excluded from the softmax or a literal 0)
                    let blank = lag > cfg.t
                        && !matches!(head_variant, AttentionVariant::A)
                        && cfg.mask_mode != MaskMode::Disabled;
                    if blank {
                        scores.push(g.constant(Tensor::scalar(0.0)));
                        masked.push(cfg.mask_mode == MaskMode::Exclude);
                        continue;
                    }
                    let h_j = head_states[head][j - 1];
                    let pre = match head_variant {
                        AttentionVariant::A => {
                            let uh = hoisted_uh[head][j - 1];
                            g.add(ws, uh)
                        }
                        AttentionVariant::Pi1 => {
                            let pi = by_name[&format!("att{head}.pi")];
                            let uh = hoisted_uh[head][j - 1];
                            let pi_s = g.scalar_lookup(pi, lag - 1);
                            let scaled = g.hadamard(pi_s, uh);
                            g.add(ws, scaled)
                        }
                        AttentionVariant::Pi2 | AttentionVariant::Pi3 => {
                            let pi = by_name[&format!("att{head}.pi")];
                            let col = g.column_lookup(pi, lag - 1);
                            let modulated = g.hadamard(col, h_j);
                            let uh = g.matmul(u_a, modulated);
                            g.add(ws, uh)
                        }
                    };
                    let th = g.tanh(pre);
                    let prod = g.hadamard(v_a, th);
                    scores.push(g.sum(prod));
                    masked.push(false);
                }
                let score_vec = g.concat(&scores);
                let alpha = g.softmax_masked(score_vec, masked);
                attention_nodes[head].push(alpha);

                // context: alpha-weighted sum of hidden states
                let mut acc: Option<NodeId> = None;
                for j in 0..cfg.t {
                    let w_j = g.scalar_lookup(alpha, j);
                    let wh = g.hadamard(w_j, head_states[head][j]);
                    acc = Some(match acc {
                        None => wh,
                        Some(prev) => g.add(prev, wh),
                    });
                }
                contexts.push(acc.expect("t >= 1"));
            }
            let context = if contexts.len() == 1 {
                contexts[0]
            } else {
                g.concat(&contexts)
            };

            let y_prev = if i == 1 {
                y0
            } else {
                match mode {
                    ForwardMode::TeacherForced => target_nodes[i - 2],
                    ForwardMode::FreeRunning => predictions[i - 2],
                }
            };
            let dec_in = g.concat(&[y_prev, context]);
            let (nh, nc) = lstm_step(&mut g, &dec, dec_in, s_h, s_c);
            s_h = nh;
            s_c = nc;
            let proj = g.matmul(out_w, s_h);
            predictions.push(g.add(proj, out_b));
        }

        // mean squared error plus optional L2 penalty
        let loss = if with_loss {
            let neg_one = g.constant(Tensor::scalar(-1.0));
            let diffs: Vec<NodeId> = predictions
                .iter()
                .enumerate()
                .map(|(idx, &pred)| {
                    let neg_t = g.hadamard(target_nodes[idx], neg_one);
                    g.add(pred, neg_t)
                })
                .collect();
            let cat = g.concat(&diffs);
            let sq = g.square(cat);
            let mut loss = g.mean(sq);
            if cfg.l2 > 0.0 {
                let mut reg: Option<NodeId> = None;
                for p in &params {
                    let include = cfg.regularize_all || p.kind == ParamKind::Weight;
                    if !include {
                        continue;
                    }
                    let sq = g.square(p.node);
                    let s = g.sum(sq);
                    reg = Some(match reg {
                        None => s,
                        Some(prev) => g.add(prev, s),
                    });
                }
                if let Some(total) = reg {
                    let coeff = g.constant(Tensor::scalar(cfg.l2));
                    let penalty = g.hadamard(coeff, total);
                    loss = g.add(loss, penalty);
                }
            }
            Some(loss)
        } else {
            None
        };

        Ok(ModelGraph {
            graph: g,
            mode,
            input_slots,
            target_slots,
            predictions,
            attention_nodes,
            loss,
            params,
        })
    }

    /// Root node: the loss when present, else the last prediction.
    pub fn root(&self) -> NodeId {
        self.loss
            .unwrap_or_else(|| *self.predictions.last().expect("t_prime >= 1"))
    }

    /// Copy the model's current parameter tensors into a binding table.
    pub fn bind_params(&self, model: &ForecastModel, bindings: &mut Bindings) {
        let mut idx = 0;
        model.visit_params(&mut |name, tensor, _| {
            debug_assert_eq!(self.params[idx].name, name);
            bindings.set(self.params[idx].slot, tensor.clone());
            idx += 1;
        });
    }

    /// Bind one example's window (and targets when the graph needs them).
    pub fn bind_example(
        &self,
        window: &[Vec<f64>],
        targets: Option<&[f64]>,
        bindings: &mut Bindings,
    ) -> Result<()> {
        if window.len() != self.input_slots.len() {
            return Err(Error::Shape(format!(
                "window has {} rows, graph expects {}",
                window.len(),
                self.input_slots.len()
            )));
        }
        for (row, slots) in window.iter().zip(&self.input_slots) {
            if row.len() != slots.len() {
                return Err(Error::Shape(format!(
                    "window row has {} variables, graph expects {}",
                    row.len(),
                    slots.len()
                )));
            }
            for (&value, &slot) in row.iter().zip(slots) {
                bindings.set(slot, Tensor::scalar(value));
            }
        }
        if !self.target_slots.is_empty() {
            let targets = targets.ok_or_else(|| {
                Error::Contract("graph expects targets but none were supplied".into())
            })?;
            if targets.len() != self.target_slots.len() {
                return Err(Error::Shape(format!(
                    "{} targets for {} target slots",
                    targets.len(),
                    self.target_slots.len()
                )));
            }
            for (&value, &slot) in targets.iter().zip(&self.target_slots) {
                bindings.set(slot, Tensor::scalar(value));
            }
        }
        Ok(())
    }
}
