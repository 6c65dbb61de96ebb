//! Reverse-mode differentiation over a small, closed operation set.
//!
//! A graph is append-only: operands always have smaller ids than the node
//! using them, so ascending-id traversal is a topological order and
//! descending-id traversal drives backpropagation. Evaluation and gradient
//! accumulation run in fixed sequential order; identical graphs and bindings
//! produce bit-identical results.

use std::collections::HashMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Operation kinds. The set is deliberately closed: these are exactly the
/// kernels the forecaster needs, which keeps the gradient checks exhaustive.
/// There is no general broadcasting; the only shape coercion is `Hadamard`
/// accepting a single-element operand on either side.
#[derive(Clone, Debug)]
pub enum Op {
    /// Fixed tensor (inline) or named slot bound at evaluation time.
    Constant { value: Option<Tensor>, slot: Option<usize> },
    /// Trainable tensor bound at evaluation time; receives a gradient.
    Parameter { slot: usize },
    /// `[r,c] x [c,k] -> [r,k]` or `[r,c] x [c] -> [r]`.
    MatMul,
    Add,
    /// Element-wise product; one operand may be `[1]` (scalar scaling).
    Hadamard,
    Tanh,
    Sigmoid,
    /// Softmax over a rank-1 input with `masked[j] == true` entries excluded
    /// from max, sum and output (their weight is exactly 0).
    SoftmaxMasked { masked: Vec<bool> },
    /// Concatenation of rank-1 operands.
    Concat,
    /// Contiguous sub-range of a rank-1 input.
    Slice { start: usize, len: usize },
    /// Column of a rank-2 input as a rank-1 vector.
    ColumnLookup { column: usize },
    /// Single coordinate of a rank-1 input as a `[1]` tensor.
    ScalarLookup { index: usize },
    Sum,
    Mean,
    Square,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant { .. } => "constant",
            Op::Parameter { .. } => "parameter",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Hadamard => "hadamard",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::SoftmaxMasked { .. } => "softmax-masked",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
            Op::ColumnLookup { .. } => "column-lookup",
            Op::ScalarLookup { .. } => "scalar-lookup",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Square => "square",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub operands: Vec<NodeId>,
}

/// Computation graph plus the name table for bindable nodes.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    slot_names: Vec<String>,
    slots_by_name: HashMap<String, usize>,
    params: Vec<(NodeId, usize)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn slot_count(&self) -> usize {
        self.slot_names.len()
    }

    pub fn slot(&self, name: &str) -> Result<usize> {
        self.slots_by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unknown binding name '{name}'")))
    }

    pub fn slot_name(&self, slot: usize) -> &str {
        &self.slot_names[slot]
    }

    /// Parameter nodes in creation order as `(node, slot)` pairs.
    pub fn parameters(&self) -> &[(NodeId, usize)] {
        &self.params
    }

    fn push(&mut self, op: Op, operands: Vec<NodeId>) -> NodeId {
        debug_assert!(operands.iter().all(|o| o.0 < self.nodes.len()));
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, operands });
        id
    }

    fn new_slot(&mut self, name: &str) -> Result<usize> {
        if self.slots_by_name.contains_key(name) {
            return Err(Error::Contract(format!("duplicate binding name '{name}'")));
        }
        let slot = self.slot_names.len();
        self.slot_names.push(name.to_string());
        self.slots_by_name.insert(name.to_string(), slot);
        Ok(slot)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant { value: Some(value), slot: None }, vec![])
    }

    /// Named constant bound per evaluation (model inputs, targets).
    pub fn input(&mut self, name: &str) -> Result<NodeId> {
        let slot = self.new_slot(name)?;
        Ok(self.push(Op::Constant { value: None, slot: Some(slot) }, vec![]))
    }

    pub fn parameter(&mut self, name: &str) -> Result<NodeId> {
        let slot = self.new_slot(name)?;
        let id = self.push(Op::Parameter { slot }, vec![]);
        self.params.push((id, slot));
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, vec![a, b])
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Hadamard, vec![a, b])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh, vec![x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid, vec![x])
    }

    pub fn softmax_masked(&mut self, x: NodeId, masked: Vec<bool>) -> NodeId {
        self.push(Op::SoftmaxMasked { masked }, vec![x])
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat, parts.to_vec())
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        self.push(Op::Slice { start, len }, vec![x])
    }

    pub fn column_lookup(&mut self, m: NodeId, column: usize) -> NodeId {
        self.push(Op::ColumnLookup { column }, vec![m])
    }

    pub fn scalar_lookup(&mut self, v: NodeId, index: usize) -> NodeId {
        self.push(Op::ScalarLookup { index }, vec![v])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum, vec![x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean, vec![x])
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square, vec![x])
    }
}

/// Values for the named nodes of one graph, indexed by slot.
#[derive(Clone, Debug)]
pub struct Bindings {
    values: Vec<Option<Tensor>>,
}

impl Bindings {
    pub fn for_graph(graph: &Graph) -> Self {
        Bindings { values: vec![None; graph.slot_count()] }
    }

    pub fn set(&mut self, slot: usize, value: Tensor) {
        self.values[slot] = Some(value);
    }

    pub fn set_named(&mut self, graph: &Graph, name: &str, value: Tensor) -> Result<()> {
        self.values[graph.slot(name)?] = Some(value);
        Ok(())
    }

    pub fn get(&self, slot: usize) -> Option<&Tensor> {
        self.values[slot].as_ref()
    }

    fn require(&self, graph: &Graph, slot: usize) -> Result<&Tensor> {
        self.values[slot].as_ref().ok_or_else(|| {
            Error::Contract(format!("binding '{}' not set", graph.slot_name(slot)))
        })
    }
}

/// Per-node value cache from one evaluation. Buffers are reused across
/// repeated `evaluate_into` calls to avoid reallocation.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    values: Vec<Tensor>,
    upto: usize, // exclusive bound of valid node values
}

impl Evaluation {
    pub fn new() -> Self {
        Evaluation::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        assert!(id.0 < self.upto, "node {} not evaluated", id.0);
        &self.values[id.0]
    }
}

/// Adjoints (d loss / d node) from one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of a node, `None` when the node does not influence the loss.
    pub fn adjoint(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Gradient for a parameter node; zeros when unreachable from the loss.
    pub fn param_grad(&self, id: NodeId, dims: &[usize]) -> Tensor {
        match self.adjoint(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(dims.to_vec()),
        }
    }
}

impl Graph {
    fn shape_err(&self, id: NodeId, msg: String) -> Error {
        let node = &self.nodes[id.0];
        let ops: Vec<usize> = node.operands.iter().map(|o| o.0).collect();
        Error::Shape(format!(
            "node {} ({}) with operands {:?}: {msg}",
            id.0,
            node.op.name(),
            ops
        ))
    }

    /// Evaluate every node from 0 through `root` in ascending id order.
    pub fn evaluate(&self, root: NodeId, bindings: &Bindings) -> Result<Evaluation> {
        let mut eval = Evaluation::new();
        self.evaluate_into(root, bindings, &mut eval)?;
        Ok(eval)
    }

    pub fn evaluate_into(
        &self,
        root: NodeId,
        bindings: &Bindings,
        eval: &mut Evaluation,
    ) -> Result<()> {
        if root.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("node {} not in graph", root.0)));
        }
        eval.values.resize(root.0 + 1, Tensor::scalar(0.0));
        eval.upto = 0;
        for idx in 0..=root.0 {
            let id = NodeId(idx);
            let out = self.eval_node(id, bindings, eval)?;
            if !out.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value at node {} ({})",
                    idx,
                    self.nodes[idx].op.name()
                )));
            }
            eval.values[idx] = out;
            eval.upto = idx + 1;
        }
        Ok(())
    }

    fn eval_node(&self, id: NodeId, bindings: &Bindings, eval: &Evaluation) -> Result<Tensor> {
        let node = &self.nodes[id.0];
        let val = |op: NodeId| -> &Tensor { &eval.values[op.0] };
        match &node.op {
            Op::Constant { value, slot } => match (value, slot) {
                (Some(t), _) => Ok(t.clone()),
                (None, Some(s)) => Ok(bindings.require(self, *s)?.clone()),
                (None, None) => unreachable!("constant without value or slot"),
            },
            Op::Parameter { slot } => Ok(bindings.require(self, *slot)?.clone()),
            Op::MatMul => {
                let (a, b) = (val(node.operands[0]), val(node.operands[1]));
                if a.rank() != 2 {
                    return Err(self.shape_err(id, format!("left operand rank {} != 2", a.rank())));
                }
                let (r, c) = (a.rows(), a.cols());
                match b.rank() {
                    1 => {
                        if b.len() != c {
                            return Err(self.shape_err(
                                id,
                                format!("{r}x{c} matrix times length-{} vector", b.len()),
                            ));
                        }
                        let mut out = vec![0.0; r];
                        let av = a.values();
                        let bv = b.values();
                        for i in 0..r {
                            let mut acc = 0.0;
                            let row = &av[i * c..(i + 1) * c];
                            for j in 0..c {
                                acc += row[j] * bv[j];
                            }
                            out[i] = acc;
                        }
                        Ok(Tensor::vector(out))
                    }
                    2 => {
                        if b.rows() != c {
                            return Err(self.shape_err(
                                id,
                                format!("{r}x{c} matrix times {}x{} matrix", b.rows(), b.cols()),
                            ));
                        }
                        let k = b.cols();
                        let mut out = vec![0.0; r * k];
                        for i in 0..r {
                            for j in 0..k {
                                let mut acc = 0.0;
                                for l in 0..c {
                                    acc += a.at(i, l) * b.at(l, j);
                                }
                                out[i * k + j] = acc;
                            }
                        }
                        Tensor::matrix(r, k, out)
                    }
                    other => Err(self.shape_err(id, format!("right operand rank {other}"))),
                }
            }
            Op::Add => {
                let (a, b) = (val(node.operands[0]), val(node.operands[1]));
                if a.dims() != b.dims() {
                    return Err(self.shape_err(
                        id,
                        format!("add of dims {:?} and {:?}", a.dims(), b.dims()),
                    ));
                }
                let out: Vec<f64> = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x + y)
                    .collect();
                Tensor::new(a.dims().to_vec(), out)
            }
            Op::Hadamard => {
                let (a, b) = (val(node.operands[0]), val(node.operands[1]));
                if a.len() == 1 && b.len() != 1 {
                    let s = a.values()[0];
                    let out: Vec<f64> = b.values().iter().map(|y| s * y).collect();
                    Tensor::new(b.dims().to_vec(), out)
                } else if b.len() == 1 && a.len() != 1 {
                    let s = b.values()[0];
                    let out: Vec<f64> = a.values().iter().map(|x| s * x).collect();
                    Tensor::new(a.dims().to_vec(), out)
                } else if a.dims() == b.dims() {
                    let out: Vec<f64> = a
                        .values()
                        .iter()
                        .zip(b.values())
                        .map(|(x, y)| x * y)
                        .collect();
                    Tensor::new(a.dims().to_vec(), out)
                } else {
                    Err(self.shape_err(
                        id,
                        format!("hadamard of dims {:?} and {:?}", a.dims(), b.dims()),
                    ))
                }
            }
            Op::Tanh => {
                let x = val(node.operands[0]);
                let out: Vec<f64> = x.values().iter().map(|v| v.tanh()).collect();
                Tensor::new(x.dims().to_vec(), out)
            }
            Op::Sigmoid => {
                let x = val(node.operands[0]);
                let out: Vec<f64> = x.values().iter().map(|v| sigmoid(*v)).collect();
                Tensor::new(x.dims().to_vec(), out)
            }
            Op::SoftmaxMasked { masked } => {
                let x = val(node.operands[0]);
                if x.rank() != 1 || x.len() != masked.len() {
                    return Err(self.shape_err(
                        id,
                        format!("softmax over dims {:?} with mask length {}", x.dims(), masked.len()),
                    ));
                }
                let xs = x.values();
                let mut max = f64::NEG_INFINITY;
                for (v, m) in xs.iter().zip(masked) {
                    if !m && *v > max {
                        max = *v;
                    }
                }
                if max == f64::NEG_INFINITY {
                    return Err(Error::Contract(format!(
                        "node {}: softmax with every entry masked",
                        id.0
                    )));
                }
                let mut out = vec![0.0; xs.len()];
                let mut denom = 0.0;
                for (i, (v, m)) in xs.iter().zip(masked).enumerate() {
                    if !m {
                        let e = (v - max).exp();
                        out[i] = e;
                        denom += e;
                    }
                }
                for (o, m) in out.iter_mut().zip(masked) {
                    if !m {
                        *o /= denom;
                    }
                }
                Ok(Tensor::vector(out))
            }
            Op::Concat => {
                let mut out = Vec::new();
                for &part in &node.operands {
                    let t = val(part);
                    if t.rank() != 1 {
                        return Err(self.shape_err(
                            id,
                            format!("concat operand {} has dims {:?}", part.0, t.dims()),
                        ));
                    }
                    out.extend_from_slice(t.values());
                }
                if out.is_empty() {
                    return Err(Error::Contract(format!("node {}: empty concat", id.0)));
                }
                Ok(Tensor::vector(out))
            }
            Op::Slice { start, len } => {
                let x = val(node.operands[0]);
                if x.rank() != 1 || start + len > x.len() {
                    return Err(self.shape_err(
                        id,
                        format!("slice [{start}, {start}+{len}) of dims {:?}", x.dims()),
                    ));
                }
                Ok(Tensor::vector(x.values()[*start..start + len].to_vec()))
            }
            Op::ColumnLookup { column } => {
                let m = val(node.operands[0]);
                if m.rank() != 2 || *column >= m.cols() {
                    return Err(self.shape_err(
                        id,
                        format!("column {column} of dims {:?}", m.dims()),
                    ));
                }
                let out: Vec<f64> = (0..m.rows()).map(|r| m.at(r, *column)).collect();
                Ok(Tensor::vector(out))
            }
            Op::ScalarLookup { index } => {
                let v = val(node.operands[0]);
                if v.rank() != 1 || *index >= v.len() {
                    return Err(self.shape_err(
                        id,
                        format!("index {index} of dims {:?}", v.dims()),
                    ));
                }
                Ok(Tensor::scalar(v.values()[*index]))
            }
            Op::Sum => {
                let x = val(node.operands[0]);
                let mut acc = 0.0;
                for v in x.values() {
                    acc += v;
                }
                Ok(Tensor::scalar(acc))
            }
            Op::Mean => {
                let x = val(node.operands[0]);
                let mut acc = 0.0;
                for v in x.values() {
                    acc += v;
                }
                Ok(Tensor::scalar(acc / x.len() as f64))
            }
            Op::Square => {
                let x = val(node.operands[0]);
                let out: Vec<f64> = x.values().iter().map(|v| v * v).collect();
                Tensor::new(x.dims().to_vec(), out)
            }
        }
    }

    /// Backpropagate from a scalar `loss` node through an existing evaluation.
    /// Nodes are visited in descending id order and contributions into each
    /// operand are added in the operand order of the consuming node, so the
    /// accumulation order is fixed.
    pub fn backward(&self, loss: NodeId, eval: &Evaluation) -> Result<Gradients> {
        if loss.0 >= eval.upto {
            return Err(Error::Contract(format!(
                "loss node {} has not been evaluated",
                loss.0
            )));
        }
        let loss_val = eval.value(loss);
        if !loss_val.is_scalar() {
            return Err(Error::Contract(format!(
                "loss must be scalar, node {} has dims {:?}",
                loss.0,
                loss_val.dims()
            )));
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match adj[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant { .. } | Op::Parameter { .. } => {
                    adj[idx] = Some(g);
                    continue;
                }
                _ => {}
            }
            self.backprop_node(NodeId(idx), &g, eval, &mut adj);
            adj[idx] = Some(g);
        }

        Ok(Gradients { adjoints: adj })
    }

    fn backprop_node(
        &self,
        id: NodeId,
        g: &Tensor,
        eval: &Evaluation,
        adj: &mut [Option<Tensor>],
    ) {
        let node = &self.nodes[id.0];
        let val = |op: NodeId| -> &Tensor { eval.value(op) };
        let mut accum = |target: NodeId, delta: Tensor| {
            match &mut adj[target.0] {
                Some(existing) => {
                    for (e, d) in existing.values_mut().iter_mut().zip(delta.values()) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Constant { .. } | Op::Parameter { .. } => {}
            Op::MatMul => {
                let (an, bn) = (node.operands[0], node.operands[1]);
                let (a, b) = (val(an), val(bn));
                let (r, c) = (a.rows(), a.cols());
                if b.rank() == 1 {
                    // y = A b: dA = g (outer) b, db = A^T g
                    let gv = g.values();
                    let bv = b.values();
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = gv[i] * bv[j];
                        }
                    }
                    let mut db = vec![0.0; c];
                    for j in 0..c {
                        let mut acc = 0.0;
                        for i in 0..r {
                            acc += a.at(i, j) * gv[i];
                        }
                        db[j] = acc;
                    }
                    accum(an, Tensor::new(vec![r, c], da).expect("matmul grad dims"));
                    accum(bn, Tensor::vector(db));
                } else {
                    // y = A B: dA = g B^T, dB = A^T g
                    let k = b.cols();
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        for l in 0..c {
                            let mut acc = 0.0;
                            for j in 0..k {
                                acc += g.at(i, j) * b.at(l, j);
                            }
                            da[i * c + l] = acc;
                        }
                    }
                    let mut db = vec![0.0; c * k];
                    for l in 0..c {
                        for j in 0..k {
                            let mut acc = 0.0;
                            for i in 0..r {
                                acc += a.at(i, l) * g.at(i, j);
                            }
                            db[l * k + j] = acc;
                        }
                    }
                    accum(an, Tensor::new(vec![r, c], da).expect("matmul grad dims"));
                    accum(bn, Tensor::new(vec![c, k], db).expect("matmul grad dims"));
                }
            }
            Op::Add => {
                accum(node.operands[0], g.clone());
                accum(node.operands[1], g.clone());
            }
            Op::Hadamard => {
                let (an, bn) = (node.operands[0], node.operands[1]);
                let (a, b) = (val(an), val(bn));
                if a.len() == 1 && b.len() != 1 {
                    let mut ds = 0.0;
                    for (gv, bv) in g.values().iter().zip(b.values()) {
                        ds += gv * bv;
                    }
                    accum(an, Tensor::scalar(ds));
                    let s = a.values()[0];
                    let db: Vec<f64> = g.values().iter().map(|gv| gv * s).collect();
                    accum(bn, Tensor::new(b.dims().to_vec(), db).expect("dims"));
                } else if b.len() == 1 && a.len() != 1 {
                    let s = b.values()[0];
                    let da: Vec<f64> = g.values().iter().map(|gv| gv * s).collect();
                    accum(an, Tensor::new(a.dims().to_vec(), da).expect("dims"));
                    let mut ds = 0.0;
                    for (gv, av) in g.values().iter().zip(a.values()) {
                        ds += gv * av;
                    }
                    accum(bn, Tensor::scalar(ds));
                } else {
                    let da: Vec<f64> = g
                        .values()
                        .iter()
                        .zip(b.values())
                        .map(|(gv, bv)| gv * bv)
                        .collect();
                    let db: Vec<f64> = g
                        .values()
                        .iter()
                        .zip(a.values())
                        .map(|(gv, av)| gv * av)
                        .collect();
                    accum(an, Tensor::new(a.dims().to_vec(), da).expect("dims"));
                    accum(bn, Tensor::new(b.dims().to_vec(), db).expect("dims"));
                }
            }
            Op::Tanh => {
                let y = eval.value(id);
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(y.values())
                    .map(|(gv, yv)| gv * (1.0 - yv * yv))
                    .collect();
                accum(node.operands[0], Tensor::new(y.dims().to_vec(), dx).expect("dims"));
            }
            Op::Sigmoid => {
                let y = eval.value(id);
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(y.values())
                    .map(|(gv, yv)| gv * yv * (1.0 - yv))
                    .collect();
                accum(node.operands[0], Tensor::new(y.dims().to_vec(), dx).expect("dims"));
            }
            Op::SoftmaxMasked { masked } => {
                let y = eval.value(id);
                let mut dot = 0.0;
                for ((gv, yv), m) in g.values().iter().zip(y.values()).zip(masked) {
                    if !m {
                        dot += gv * yv;
                    }
                }
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(y.values())
                    .zip(masked)
                    .map(|((gv, yv), m)| if *m { 0.0 } else { yv * (gv - dot) })
                    .collect();
                accum(node.operands[0], Tensor::vector(dx));
            }
            Op::Concat => {
                let mut offset = 0;
                for &part in &node.operands {
                    let len = val(part).len();
                    let dg = Tensor::vector(g.values()[offset..offset + len].to_vec());
                    accum(part, dg);
                    offset += len;
                }
            }
            Op::Slice { start, len } => {
                let x = val(node.operands[0]);
                let mut dx = vec![0.0; x.len()];
                dx[*start..start + len].copy_from_slice(g.values());
                accum(node.operands[0], Tensor::vector(dx));
            }
            Op::ColumnLookup { column } => {
                let m = val(node.operands[0]);
                let (r, c) = (m.rows(), m.cols());
                let mut dm = vec![0.0; r * c];
                for (i, gv) in g.values().iter().enumerate() {
                    dm[i * c + column] = *gv;
                }
                accum(node.operands[0], Tensor::new(vec![r, c], dm).expect("dims"));
            }
            Op::ScalarLookup { index } => {
                let v = val(node.operands[0]);
                let mut dv = vec![0.0; v.len()];
                dv[*index] = g.values()[0];
                accum(node.operands[0], Tensor::vector(dv));
            }
            Op::Sum => {
                let x = val(node.operands[0]);
                let gs = g.values()[0];
                accum(
                    node.operands[0],
                    Tensor::new(x.dims().to_vec(), vec![gs; x.len()]).expect("dims"),
                );
            }
            Op::Mean => {
                let x = val(node.operands[0]);
                let gs = g.values()[0] / x.len() as f64;
                accum(
                    node.operands[0],
                    Tensor::new(x.dims().to_vec(), vec![gs; x.len()]).expect("dims"),
                );
            }
            Op::Square => {
                let x = val(node.operands[0]);
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(x.values())
                    .map(|(gv, xv)| gv * 2.0 * xv)
                    .collect();
                accum(node.operands[0], Tensor::new(x.dims().to_vec(), dx).expect("dims"));
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Compare backprop against central finite differences for every parameter
/// scalar of `graph`. Returns the maximum of
/// `|backprop - central| / max(|central|, 1e-8)`.
pub fn finite_diff_check(
    graph: &Graph,
    loss: NodeId,
    point: &Bindings,
    epsilon: f64,
) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::Contract(format!("epsilon must be positive, got {epsilon}")));
    }
    let eval = graph.evaluate(loss, point)?;
    if !eval.value(loss).is_scalar() {
        return Err(Error::Contract(format!(
            "finite_diff_check requires a scalar output, got dims {:?}",
            eval.value(loss).dims()
        )));
    }
    let grads = graph.backward(loss, &eval)?;

    let mut work = point.clone();
    let mut max_rel = 0.0f64;
    for &(node, slot) in graph.parameters() {
        let base = point
            .get(slot)
            .ok_or_else(|| Error::Contract(format!("parameter '{}' not bound", graph.slot_name(slot))))?
            .clone();
        let analytic = grads.param_grad(node, base.dims());
        for i in 0..base.len() {
            let orig = base.values()[i];

            let mut plus = base.clone();
            plus.values_mut()[i] = orig + epsilon;
            work.set(slot, plus);
            let f_plus = graph.evaluate(loss, &work)?.value(loss).item()?;

            let mut minus = base.clone();
            minus.values_mut()[i] = orig - epsilon;
            work.set(slot, minus);
            let f_minus = graph.evaluate(loss, &work)?.value(loss).item()?;

            work.set(slot, base.clone());

            let central = (f_plus - f_minus) / (2.0 * epsilon);
            let rel = (analytic.values()[i] - central).abs() / central.abs().max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
