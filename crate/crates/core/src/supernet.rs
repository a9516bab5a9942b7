//! DAG supernets with shared weights.
//!
//! Edges carry a list of candidate operations. An edge with two or more
//! candidates is *searchable*; searchable edges are numbered by their
//! position ("slot") in [`SupernetSpec::searchable_edges`], and an
//! [`Architecture`] holds one choice per slot. Edges with a single candidate
//! are fixed and always evaluate it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::rng::uniform;
use crate::{EdgeVectors, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Average,
}

/// A candidate operation on an edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpKind {
    /// Valid convolution with a `[kh, kw, in, out]` kernel, optionally
    /// followed by tanh.
    Conv {
        kernel: [usize; 2],
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        #[serde(default)]
        tanh: bool,
    },
    Identity,
    /// Outputs zeros shaped like the edge's other candidates.
    Zero,
    /// Multiplies the input by a trainable scalar weight.
    Scale,
}

impl OpKind {
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            OpKind::Conv { kernel, in_channels, out_channels, .. } => {
                Some(vec![kernel[0], kernel[1], in_channels, out_channels])
            }
            OpKind::Scale => Some(vec![1]),
            OpKind::Identity | OpKind::Zero => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, OpKind::Zero)
    }

    /// Per-sample output shape; `None` for the zero op, whose shape is
    /// borrowed from its siblings.
    fn output_shape(&self, input: &[usize]) -> Result<Option<Vec<usize>>> {
        match *self {
            OpKind::Conv { kernel, in_channels, out_channels, stride, .. } => {
                let [h, w, c] = *input else {
                    return Err(Error::InvalidGraph(format!("conv needs [H,W,C] samples, got {input:?}")));
                };
                if c != in_channels || h < kernel[0] || w < kernel[1] || stride == 0 {
                    return Err(Error::InvalidGraph(format!(
                        "conv {kernel:?}/{stride} with {in_channels} input channels cannot consume {input:?}"
                    )));
                }
                Ok(Some(vec![(h - kernel[0]) / stride + 1, (w - kernel[1]) / stride + 1, out_channels]))
            }
            OpKind::Identity | OpKind::Scale => Ok(Some(input.to_vec())),
            OpKind::Zero => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub aggregation: Aggregation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub source: usize,
    pub target: usize,
    pub candidates: Vec<OpKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    input_shape: Vec<usize>,
    input: usize,
    output: usize,
    nodes: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
}

/// Validated supernet topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct SupernetSpec {
    raw: RawSpec,
    order: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    searchable: Vec<usize>,
    slot_of: Vec<Option<usize>>,
    node_shapes: Vec<Vec<usize>>,
    edge_shapes: Vec<Vec<usize>>,
}

impl From<SupernetSpec> for RawSpec {
    fn from(s: SupernetSpec) -> Self {
        s.raw
    }
}

impl TryFrom<RawSpec> for SupernetSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        SupernetSpec::new(raw.input_shape, raw.nodes, raw.edges, raw.input, raw.output)
    }
}

impl SupernetSpec {
    /// `input_shape` is the per-sample shape; batches add a leading axis.
    pub fn new(
        input_shape: Vec<usize>,
        nodes: Vec<NodeSpec>,
        edges: Vec<EdgeSpec>,
        input: usize,
        output: usize,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidGraph(m));
        let n = nodes.len();
        if input >= n || output >= n || input == output {
            return bad(format!("input {input} / output {output} invalid for {n} nodes"));
        }
        if input_shape.is_empty() || input_shape.len() > 3 || input_shape.contains(&0) {
            return bad(format!("per-sample input shape {input_shape:?} must have 1 to 3 positive extents"));
        }
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.source >= n || e.target >= n || e.source == e.target {
                return bad(format!("edge {i} has invalid endpoints {} -> {}", e.source, e.target));
            }
            if e.candidates.is_empty() {
                return bad(format!("edge {i} has no candidate operations"));
            }
            incoming[e.target].push(i);
            outgoing[e.source].push(i);
        }
        if !incoming[input].is_empty() {
            return bad("input node has incoming edges".into());
        }
        if !outgoing[output].is_empty() {
            return bad("output node has outgoing edges".into());
        }
        if let Some(v) = (0..n).find(|&v| v != input && incoming[v].is_empty()) {
            return bad(format!("node {v} has no incoming edge"));
        }

        // Kahn's algorithm, lowest index first for a stable order.
        let mut indeg: Vec<usize> = incoming.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(pos) = ready.iter().enumerate().min_by_key(|(_, v)| **v).map(|(p, _)| p) {
            let v = ready.swap_remove(pos);
            order.push(v);
            for &e in &outgoing[v] {
                let t = edges[e].target;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        if order.len() != n {
            return bad("graph contains a cycle".into());
        }

        let mut node_shapes: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut edge_shapes = vec![Vec::new(); edges.len()];
        node_shapes[input] = Some(input_shape.clone());
        for &v in &order {
            if v != input {
                let mut shape: Option<Vec<usize>> = None;
                for &e in &incoming[v] {
                    let s = &edge_shapes[e];
                    match &shape {
                        None => shape = Some(s.clone()),
                        Some(prev) if prev != s => {
                            return bad(format!("node {v} aggregates mismatched shapes {prev:?} and {s:?}"))
                        }
                        _ => {}
                    }
                }
                node_shapes[v] = shape;
            }
            let src_shape = node_shapes[v].clone().expect("topological order");
            for &e in &outgoing[v] {
                let mut out: Option<Vec<usize>> = None;
                for (j, c) in edges[e].candidates.iter().enumerate() {
                    if let Some(s) = c.output_shape(&src_shape)? {
                        match &out {
                            None => out = Some(s),
                            Some(prev) if *prev != s => {
                                return bad(format!("edge {e} candidate {j} yields {s:?}, expected {prev:?}"))
                            }
                            _ => {}
                        }
                    }
                }
                edge_shapes[e] = out.unwrap_or_else(|| src_shape.clone());
            }
        }

        let searchable: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].candidates.len() > 1).collect();
        let mut slot_of = vec![None; edges.len()];
        for (slot, &e) in searchable.iter().enumerate() {
            slot_of[e] = Some(slot);
        }
        Ok(Self {
            raw: RawSpec { input_shape, input, output, nodes, edges },
            order,
            incoming,
            searchable,
            slot_of,
            node_shapes: node_shapes.into_iter().map(|s| s.expect("every node reached")).collect(),
            edge_shapes,
        })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.raw.nodes
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.raw.edges
    }

    pub fn input_node(&self) -> usize {
        self.raw.input
    }

    pub fn output_node(&self) -> usize {
        self.raw.output
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.raw.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.node_shapes[self.raw.output]
    }

    /// Per-sample output shape of an edge.
    pub fn edge_shape(&self, edge: usize) -> &[usize] {
        &self.edge_shapes[edge]
    }

    /// Edge ids with at least two candidates, in edge order.
    pub fn searchable_edges(&self) -> &[usize] {
        &self.searchable
    }

    pub fn slot_of(&self, edge: usize) -> Option<usize> {
        self.slot_of.get(edge).copied().flatten()
    }

    /// Candidate counts of the searchable edges.
    pub fn choice_sizes(&self) -> Vec<usize> {
        self.searchable.iter().map(|&e| self.raw.edges[e].candidates.len()).collect()
    }

    /// Index of the zero candidate on each searchable edge, if any.
    pub fn zero_candidates(&self) -> Vec<Option<usize>> {
        self.searchable.iter().map(|&e| self.raw.edges[e].candidates.iter().position(OpKind::is_zero)).collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = batch.shape();
        if s.len() != self.raw.input_shape.len() + 1 || s[1..] != self.raw.input_shape[..] {
            return Err(Error::ShapeMismatch {
                op: "supernet input",
                detail: format!("batch {s:?} does not match per-sample shape {:?}", self.raw.input_shape),
            });
        }
        Ok(s[0])
    }

    fn check_arch(&self, arch: &Architecture) -> Result<()> {
        arch.validate(&self.choice_sizes())
    }

    fn candidate_for(&self, edge: usize, arch: &Architecture) -> usize {
        self.slot_of[edge].map_or(0, |slot| arch.choice(slot))
    }
}

/// One choice per searchable edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(choices: Vec<usize>) -> Self {
        Self(choices)
    }

    /// Converts one-hot vectors; anything else is rejected.
    pub fn from_one_hot(vectors: &[Vec<f64>]) -> Result<Self> {
        vectors
            .iter()
            .enumerate()
            .map(|(slot, v)| {
                let ones: Vec<usize> = v.iter().enumerate().filter(|(_, x)| **x == 1.0).map(|(j, _)| j).collect();
                let zeros = v.iter().filter(|x| **x == 0.0).count();
                if ones.len() == 1 && zeros + 1 == v.len() {
                    Ok(ones[0])
                } else {
                    Err(Error::InvalidArchitecture(format!("slot {slot} is not one-hot: {v:?}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    pub fn choice(&self, slot: usize) -> usize {
        self.0[slot]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn one_hot(&self, slot: usize, size: usize) -> Vec<f64> {
        let mut v = vec![0.0; size];
        v[self.0[slot]] = 1.0;
        v
    }

    /// Copy with `slot` switched to `choice`.
    pub fn with_choice(&self, slot: usize, choice: usize) -> Self {
        let mut c = self.0.clone();
        c[slot] = choice;
        Self(c)
    }

    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        if self.0.len() != sizes.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} choices for {} searchable edges",
                self.0.len(),
                sizes.len()
            )));
        }
        if let Some((slot, (&c, &s))) = self.0.iter().zip(sizes).enumerate().find(|(_, (c, s))| **c >= **s) {
            return Err(Error::InvalidArchitecture(format!("slot {slot} chooses {c} of {s} candidates")));
        }
        Ok(())
    }
}

/// Shared weights `w_i^j` for every (edge, candidate) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    weights: Vec<Vec<Option<Tensor>>>,
}

impl WeightStore {
    fn build(spec: &SupernetSpec, mut init: impl FnMut(&[usize]) -> Tensor) -> Self {
        let weights = spec
            .edges()
            .iter()
            .map(|e| e.candidates.iter().map(|c| c.weight_shape().map(|s| init(&s))).collect())
            .collect();
        Self { weights }
    }

    pub fn zeros(spec: &SupernetSpec) -> Self {
        Self::build(spec, |s| Tensor::zeros(s).expect("weight shapes are positive"))
    }

    /// Every weight entry i.i.d. uniform on `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(spec: &SupernetSpec, rng: &mut R, lo: f64, hi: f64) -> Self {
        Self::build(spec, |s| {
            let n = s.iter().product();
            Tensor::new(s.to_vec(), (0..n).map(|_| uniform(rng, lo, hi)).collect()).expect("shape")
        })
    }

    pub fn get(&self, edge: usize, candidate: usize) -> Option<&Tensor> {
        self.weights.get(edge)?.get(candidate)?.as_ref()
    }

    pub fn set(&mut self, edge: usize, candidate: usize, value: Tensor) -> Result<()> {
        let slot = self
            .weights
            .get_mut(edge)
            .ok_or(Error::UnknownEdge(edge))?
            .get_mut(candidate)
            .ok_or_else(|| Error::InvalidArchitecture(format!("edge {edge} has no candidate {candidate}")))?;
        match slot {
            Some(existing) if existing.shape() == value.shape() => {
                *existing = value;
                Ok(())
            }
            Some(existing) => Err(Error::ShapeMismatch {
                op: "weight store",
                detail: format!("expected {:?}, got {:?}", existing.shape(), value.shape()),
            }),
            None => Err(Error::ShapeMismatch { op: "weight store", detail: "candidate has no weights".into() }),
        }
    }

    pub(crate) fn get_mut(&mut self, edge: usize, candidate: usize) -> Option<&mut Tensor> {
        self.weights.get_mut(edge)?.get_mut(candidate)?.as_mut()
    }

    /// Checks completeness and shapes against `spec`.
    pub fn validate(&self, spec: &SupernetSpec) -> Result<()> {
        if self.weights.len() != spec.edges().len() {
            return Err(Error::InvalidGraph("weight store edge count differs from spec".into()));
        }
        for (e, (ws, es)) in self.weights.iter().zip(spec.edges()).enumerate() {
            if ws.len() != es.candidates.len() {
                return Err(Error::InvalidGraph(format!("edge {e}: weight store candidate count differs")));
            }
            for (j, (w, c)) in ws.iter().zip(&es.candidates).enumerate() {
                let ok = match (w, c.weight_shape()) {
                    (Some(t), Some(s)) => t.shape() == s.as_slice(),
                    (None, None) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidGraph(format!("edge {e} candidate {j}: weight shape mismatch")));
                }
            }
        }
        Ok(())
    }
}

/// How a forward pass produces the reward scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Negative mean squared error against targets.
    Mse,
    /// Mean of the network output; targets are ignored.
    Linear,
}

/// Negative mean loss of `output` over the minibatch.
pub fn minibatch_reward(output: &Tensor, targets: Option<&Tensor>, kind: RewardKind) -> Result<f64> {
    match kind {
        RewardKind::Mse => {
            let t = targets.ok_or_else(|| Error::ShapeMismatch { op: "reward", detail: "mse needs targets".into() })?;
            if t.shape() != output.shape() {
                return Err(Error::ShapeMismatch {
                    op: "reward",
                    detail: format!("{:?} vs {:?}", output.shape(), t.shape()),
                });
            }
            let se: f64 = output.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(-se / output.len() as f64)
        }
        RewardKind::Linear => Ok(output.sum() / output.len() as f64),
    }
}

/// Candidate-operation evaluations performed by one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    /// Evaluations on searchable edges.
    pub searchable: usize,
    /// Evaluations on fixed single-candidate edges.
    pub fixed: usize,
}

impl core::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.searchable += o.searchable;
        self.fixed += o.fixed;
    }
}

/// Edge outputs recorded by a sparse forward, and after a backward the
/// reward gradient at each of them.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EdgeTaps {
    outputs: Vec<Option<Tensor>>,
    grads: Vec<Option<Tensor>>,
}

impl EdgeTaps {
    pub fn output(&self, edge: usize) -> Option<&Tensor> {
        self.outputs.get(edge)?.as_ref()
    }

    pub fn grad(&self, edge: usize) -> Option<&Tensor> {
        self.grads.get(edge)?.as_ref()
    }

    pub fn num_edges(&self) -> usize {
        self.outputs.len()
    }

    /// Taps with the gradients removed.
    pub fn without_grads(mut self) -> Self {
        self.grads.iter_mut().for_each(|g| *g = None);
        self
    }
}

#[derive(Clone, Copy, Debug)]
enum Selection<'a> {
    Sparse { arch: &'a Architecture, edit: Option<(usize, f64)> },
    Dense { mixture: &'a EdgeVectors },
}

struct Graph {
    tape: Tape,
    output: Var,
    edge_outputs: Vec<Option<Var>>,
    weight_vars: Vec<(usize, usize, Var)>,
    mixture_vars: Vec<Vec<Var>>,
    counts: EvalCounts,
}

#[allow(clippy::too_many_arguments)]
fn eval_candidate(
    tape: &mut Tape,
    op: &OpKind,
    x: Var,
    weight: Option<&Tensor>,
    trainable: bool,
    out_shape: &[usize],
    batch: usize,
    weight_vars: &mut Vec<(usize, usize, Var)>,
    ids: (usize, usize),
) -> Result<Var> {
    let mut wvar = |tape: &mut Tape| {
        let w = weight.expect("weight store validated").clone();
        if trainable {
            let v = tape.leaf(w);
            weight_vars.push((ids.0, ids.1, v));
            v
        } else {
            tape.constant(w)
        }
    };
    Ok(match *op {
        OpKind::Conv { stride, tanh, .. } => {
            let k = wvar(tape);
            let y = tape.conv2d(x, k, stride)?;
            if tanh {
                tape.tanh(y)
            } else {
                y
            }
        }
        OpKind::Identity => x,
        OpKind::Scale => {
            let s = wvar(tape);
            tape.scale_by(x, s)?
        }
        OpKind::Zero => {
            let mut shape = vec![batch];
            shape.extend_from_slice(out_shape);
            tape.constant(Tensor::zeros(&shape)?)
        }
    })
}

fn build(
    spec: &SupernetSpec,
    weights: &WeightStore,
    selection: Selection<'_>,
    batch: &Tensor,
    taps: bool,
    trainable: bool,
) -> Result<Graph> {
    let n = spec.check_batch(batch)?;
    let edges = spec.edges();
    let mut tape = Tape::new();
    let mut node_vars: Vec<Option<Var>> = vec![None; spec.nodes().len()];
    let mut edge_outputs = vec![None; edges.len()];
    let mut weight_vars = Vec::new();
    let mut mixture_vars = Vec::new();
    let mut counts = EvalCounts::default();

    if let Selection::Dense { mixture } = selection {
        let sizes = spec.choice_sizes();
        if mixture.sizes() != sizes {
            return Err(Error::InvalidMixture { edge: 0, reason: "mixture layout does not match searchable edges" });
        }
        for (slot, mu) in mixture.edges().enumerate() {
            if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
                return Err(Error::InvalidMixture { edge: slot, reason: "entries must be finite and non-negative" });
            }
            if (mu.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMixture { edge: slot, reason: "entries must sum to 1" });
            }
            mixture_vars.push(mu.iter().map(|&m| tape.leaf(Tensor::scalar(m))).collect::<Vec<_>>());
        }
    }
    if let Selection::Sparse { arch, edit } = selection {
        spec.check_arch(arch)?;
        if let Some((e, _)) = edit {
            if e >= edges.len() {
                return Err(Error::UnknownEdge(e));
            }
        }
    }

    for &v in &spec.order {
        let var = if v == spec.input_node() {
            tape.constant(batch.clone())
        } else {
            let inputs: Vec<Var> = spec.incoming[v].iter().filter_map(|&e| edge_outputs[e]).collect();
            if inputs.is_empty() {
                return Err(Error::DanglingNode(v));
            }
            let summed = if inputs.len() == 1 { inputs[0] } else { tape.sum_n(&inputs)? };
            match spec.nodes()[v].aggregation {
                Aggregation::Average if inputs.len() > 1 => tape.scale(summed, 1.0 / inputs.len() as f64),
                _ => summed,
            }
        };
        node_vars[v] = Some(var);
        for (e, edge) in edges.iter().enumerate().filter(|(_, ed)| ed.source == v) {
            let x = var;
            let out_shape = spec.edge_shape(e);
            let searchable = spec.slot_of(e).is_some();
            let mut eval = |tape: &mut Tape, j: usize, counts: &mut EvalCounts| {
                if searchable {
                    counts.searchable += 1;
                } else {
                    counts.fixed += 1;
                }
                eval_candidate(
                    tape,
                    &edge.candidates[j],
                    x,
                    weights.get(e, j),
                    trainable,
                    out_shape,
                    n,
                    &mut weight_vars,
                    (e, j),
                )
            };
            let out = match selection {
                Selection::Sparse { arch, edit } => {
                    let j = spec.candidate_for(e, arch);
                    match edit {
                        Some((ze, factor)) if ze == e && factor == 0.0 => {
                            let mut shape = vec![n];
                            shape.extend_from_slice(out_shape);
                            tape.constant(Tensor::zeros(&shape)?)
                        }
                        Some((ze, factor)) if ze == e => {
                            let y = eval(&mut tape, j, &mut counts)?;
                            let y = if taps { tape.watch(y) } else { y };
                            let scaled = tape.scale(y, factor);
                            edge_outputs[e] = Some(scaled);
                            continue;
                        }
                        _ => {
                            let y = eval(&mut tape, j, &mut counts)?;
                            if taps {
                                tape.watch(y)
                            } else {
                                y
                            }
                        }
                    }
                }
                Selection::Dense { .. } => match spec.slot_of(e) {
                    None => eval(&mut tape, 0, &mut counts)?,
                    Some(slot) => {
                        let mut terms = Vec::with_capacity(edge.candidates.len());
                        for (j, &m) in mixture_vars[slot].iter().enumerate() {
                            let y = eval(&mut tape, j, &mut counts)?;
                            terms.push(tape.scale_by(y, m)?);
                        }
                        tape.sum_n(&terms)?
                    }
                },
            };
            edge_outputs[e] = Some(out);
        }
    }
    let output = node_vars[spec.output_node()].ok_or(Error::DanglingNode(spec.output_node()))?;
    Ok(Graph { tape, output, edge_outputs, weight_vars, mixture_vars, counts })
}

fn reward_node(tape: &mut Tape, output: Var, targets: Option<&Tensor>, kind: RewardKind) -> Result<Var> {
    match kind {
        RewardKind::Mse => {
            let t = targets.ok_or_else(|| Error::ShapeMismatch { op: "reward", detail: "mse needs targets".into() })?;
            let tv = tape.constant(t.clone());
            let l = tape.mse(output, tv)?;
            Ok(tape.scale(l, -1.0))
        }
        RewardKind::Linear => {
            let rank = tape.value(output).shape().len();
            let axes: Vec<usize> = (0..rank).collect();
            tape.mean_over(output, &axes)
        }
    }
}

fn collect_taps(g: &Graph) -> EdgeTaps {
    let outputs: Vec<Option<Tensor>> = g.edge_outputs.iter().map(|v| v.map(|v| g.tape.value(v).clone())).collect();
    EdgeTaps { grads: vec![None; outputs.len()], outputs }
}

/// Evaluates the sub-network selected by `arch`.
pub fn forward_sparse(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    batch: &Tensor,
) -> Result<(Tensor, EdgeTaps)> {
    let g = build(spec, weights, Selection::Sparse { arch, edit: None }, batch, false, false)?;
    let taps = collect_taps(&g);
    Ok((g.tape.value(g.output).clone(), taps))
}

/// Evaluates every candidate, mixing searchable edges with `mixture`.
pub fn forward_dense(
    spec: &SupernetSpec,
    weights: &WeightStore,
    mixture: &EdgeVectors,
    batch: &Tensor,
) -> Result<Tensor> {
    let g = build(spec, weights, Selection::Dense { mixture }, batch, false, false)?;
    Ok(g.tape.value(g.output).clone())
}

/// Like [`forward_sparse`] with the output of `edge` replaced by zeros.
pub fn forward_edge_zeroed(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    edge: usize,
    batch: &Tensor,
) -> Result<Tensor> {
    forward_edge_scaled(spec, weights, arch, edge, 0.0, batch)
}

/// Like [`forward_sparse`] with the output of `edge` multiplied by `factor`.
pub fn forward_edge_scaled(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    edge: usize,
    factor: f64,
    batch: &Tensor,
) -> Result<Tensor> {
    let g = build(spec, weights, Selection::Sparse { arch, edit: Some((edge, factor)) }, batch, false, false)?;
    Ok(g.tape.value(g.output).clone())
}

/// Work done by one reward evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PassCost {
    pub forwards: usize,
    pub backwards: usize,
    pub evals: EvalCounts,
}

impl core::ops::AddAssign for PassCost {
    fn add_assign(&mut self, o: Self) {
        self.forwards += o.forwards;
        self.backwards += o.backwards;
        self.evals += o.evals;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PassOptions {
    /// Backpropagate to the edge outputs and fill the tap gradients.
    pub taps: bool,
    /// Backpropagate to the weights of the selected candidates.
    pub weight_grads: bool,
}

#[derive(Clone, Debug)]
pub struct SparsePass {
    pub reward: f64,
    pub output: Tensor,
    pub taps: EdgeTaps,
    /// `(edge, candidate, d reward / d w)` for each evaluated weighted candidate.
    pub weight_grads: Vec<(usize, usize, Tensor)>,
    pub cost: PassCost,
}

/// Sparse forward, reward, and optionally one backward pass.
pub fn sparse_reward_pass(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
    opts: PassOptions,
) -> Result<SparsePass> {
    let mut g = build(spec, weights, Selection::Sparse { arch, edit: None }, batch, opts.taps, opts.weight_grads)?;
    let r = reward_node(&mut g.tape, g.output, targets, kind)?;
    let reward = g.tape.value(r).data()[0];
    let mut taps = collect_taps(&g);
    let mut weight_grads = Vec::new();
    let mut cost = PassCost { forwards: 1, backwards: 0, evals: g.counts };
    if opts.taps || opts.weight_grads {
        let grads = g.tape.backward(r)?;
        cost.backwards = 1;
        if opts.taps {
            for (e, var) in g.edge_outputs.iter().enumerate() {
                taps.grads[e] = var.map(|v| grads.get(v));
            }
        }
        weight_grads = g.weight_vars.iter().map(|&(e, j, v)| (e, j, grads.get(v))).collect();
    }
    Ok(SparsePass { reward, output: g.tape.value(g.output).clone(), taps, weight_grads, cost })
}

#[derive(Clone, Debug)]
pub struct DensePass {
    pub reward: f64,
    /// d reward / d mixture entry, per searchable slot.
    pub mixture_grads: EdgeVectors,
    pub cost: PassCost,
}

/// Dense forward, reward and backward to the mixture entries.
pub fn dense_reward_pass(
    spec: &SupernetSpec,
    weights: &WeightStore,
    mixture: &EdgeVectors,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
) -> Result<DensePass> {
    let mut g = build(spec, weights, Selection::Dense { mixture }, batch, false, false)?;
    let r = reward_node(&mut g.tape, g.output, targets, kind)?;
    let reward = g.tape.value(r).data()[0];
    let grads = g.tape.backward(r)?;
    let mut mixture_grads = mixture.zeros_like();
    for (slot, vars) in g.mixture_vars.iter().enumerate() {
        for (j, &v) in vars.iter().enumerate() {
            mixture_grads.edge_mut(slot)[j] = grads.get(v).data()[0];
        }
    }
    Ok(DensePass { reward, mixture_grads, cost: PassCost { forwards: 1, backwards: 1, evals: g.counts } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::relative_error;

    fn node(name: &str, aggregation: Aggregation) -> NodeSpec {
        NodeSpec { name: name.into(), aggregation }
    }

    /// input -> output over `factors.len()` parallel scale edges.
    fn scalar_dag(factors: &[&[f64]], aggregation: Aggregation) -> (SupernetSpec, WeightStore) {
        let edges = factors
            .iter()
            .map(|f| EdgeSpec { source: 0, target: 1, candidates: vec![OpKind::Scale; f.len()] })
            .collect();
        let spec =
            SupernetSpec::new(vec![1], vec![node("in", Aggregation::Sum), node("out", aggregation)], edges, 0, 1)
                .unwrap();
        let mut w = WeightStore::zeros(&spec);
        for (e, f) in factors.iter().enumerate() {
            for (j, &v) in f.iter().enumerate() {
                w.set(e, j, Tensor::scalar(v)).unwrap();
            }
        }
        (spec, w)
    }

    fn one() -> Tensor {
        Tensor::new(vec![1, 1], vec![1.0]).unwrap()
    }

    #[test]
    fn rejects_invalid_graphs() {
        let n = || vec![node("a", Aggregation::Sum), node("b", Aggregation::Sum), node("c", Aggregation::Sum)];
        let id = || vec![OpKind::Identity];
        let e = |s, t| EdgeSpec { source: s, target: t, candidates: id() };
        // cycle b <-> c
        assert!(SupernetSpec::new(vec![1], n(), vec![e(0, 1), e(1, 2), e(2, 1)], 0, 2).is_err());
        // node 1 unreachable
        assert!(SupernetSpec::new(vec![1], n(), vec![e(0, 2)], 0, 2).is_err());
        // output with outgoing edge
        assert!(SupernetSpec::new(vec![1], n(), vec![e(0, 1), e(1, 2), e(2, 0)], 0, 2).is_err());
        // empty candidate list
        let bad = EdgeSpec { source: 0, target: 1, candidates: vec![] };
        assert!(SupernetSpec::new(vec![1], n(), vec![bad, e(1, 2)], 0, 2).is_err());
        assert!(SupernetSpec::new(vec![1], n(), vec![e(0, 1), e(1, 2)], 0, 2).is_ok());
    }

    #[test]
    fn single_identity_edge_passes_input_through() {
        let spec = SupernetSpec::new(
            vec![3],
            vec![node("in", Aggregation::Sum), node("out", Aggregation::Sum)],
            vec![EdgeSpec { source: 0, target: 1, candidates: vec![OpKind::Identity, OpKind::Zero] }],
            0,
            1,
        )
        .unwrap();
        let w = WeightStore::zeros(&spec);
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, -1.0]).unwrap();
        let (y, taps) = forward_sparse(&spec, &w, &Architecture::new(vec![0]), &x).unwrap();
        assert_eq!(y, x);
        assert_eq!(taps.output(0), Some(&x));
        let z = forward_edge_zeroed(&spec, &w, &Architecture::new(vec![0]), 0, &x).unwrap();
        assert!(z.data().iter().all(|v| *v == 0.0));
        // zero op selected: zeroing the edge changes nothing
        let a = Architecture::new(vec![1]);
        assert_eq!(forward_edge_zeroed(&spec, &w, &a, 0, &x).unwrap(), forward_sparse(&spec, &w, &a, &x).unwrap().0);
        assert!(matches!(forward_edge_zeroed(&spec, &w, &a, 5, &x), Err(Error::UnknownEdge(5))));
    }

    #[test]
    fn two_edge_scalar_dag() {
        let (spec, w) = scalar_dag(&[&[2.0, 3.0], &[2.0, 3.0]], Aggregation::Sum);
        let arch = Architecture::new(vec![0, 1]);
        let (y, _) = forward_sparse(&spec, &w, &arch, &one()).unwrap();
        assert_eq!(y.data(), &[5.0]);
        let z = forward_edge_zeroed(&spec, &w, &arch, 0, &one()).unwrap();
        assert_eq!(z.data(), &[3.0]);
    }

    #[test]
    fn dense_convex_combination_and_validation() {
        let (spec, w) = scalar_dag(&[&[2.0, 4.0]], Aggregation::Sum);
        let mix = EdgeVectors::from_nested(vec![vec![0.5, 0.5]]);
        assert_eq!(forward_dense(&spec, &w, &mix, &one()).unwrap().data(), &[3.0]);
        let bad = EdgeVectors::from_nested(vec![vec![0.6, 0.5]]);
        assert!(matches!(forward_dense(&spec, &w, &bad, &one()), Err(Error::InvalidMixture { .. })));
        let neg = EdgeVectors::from_nested(vec![vec![1.5, -0.5]]);
        assert!(matches!(forward_dense(&spec, &w, &neg, &one()), Err(Error::InvalidMixture { .. })));
    }

    #[test]
    fn dense_one_hot_equals_sparse_bitwise() {
        let (spec, w) = scalar_dag(&[&[0.3, -1.7, 2.2], &[1.1, 0.9]], Aggregation::Average);
        let x = Tensor::new(vec![3, 1], vec![0.1, -0.7, 1.3]).unwrap();
        for a in 0..3 {
            for b in 0..2 {
                let arch = Architecture::new(vec![a, b]);
                let mix = EdgeVectors::from_nested(vec![arch.one_hot(0, 3), arch.one_hot(1, 2)]);
                let dense = forward_dense(&spec, &w, &mix, &x).unwrap();
                let sparse = forward_sparse(&spec, &w, &arch, &x).unwrap().0;
                assert_eq!(dense.data(), sparse.data());
            }
        }
    }

    #[test]
    fn dense_mixture_gradient_matches_finite_differences() {
        let (spec, w) = scalar_dag(&[&[0.3, -1.7, 2.2], &[1.1, 0.9]], Aggregation::Sum);
        let x = Tensor::new(vec![2, 1], vec![0.4, -0.9]).unwrap();
        let t = Tensor::new(vec![2, 1], vec![1.0, 0.5]).unwrap();
        let mix = EdgeVectors::from_nested(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4]]);
        let pass = dense_reward_pass(&spec, &w, &mix, &x, Some(&t), RewardKind::Mse).unwrap();
        // The mixture enters linearly per entry, so perturb entries directly
        // through a hand-rolled evaluation that skips simplex validation.
        let eval = |m: &EdgeVectors| -> f64 {
            let mut out = [0.0; 2];
            for s in 0..2 {
                for (j, &mu) in m.edge(s).iter().enumerate() {
                    let f = w.get(s, j).unwrap().data()[0];
                    for (o, xv) in out.iter_mut().zip(x.data()) {
                        *o += mu * f * xv;
                    }
                }
            }
            -out.iter().zip(t.data()).map(|(o, tv)| (o - tv) * (o - tv)).sum::<f64>() / 2.0
        };
        assert!((eval(&mix) - pass.reward).abs() < 1e-14);
        let h = 1e-5;
        let mut fd = mix.zeros_like();
        for k in 0..mix.as_flat().len() {
            let mut up = mix.clone();
            up.as_flat_mut()[k] += h;
            let mut dn = mix.clone();
            dn.as_flat_mut()[k] -= h;
            fd.as_flat_mut()[k] = (eval(&up) - eval(&dn)) / (2.0 * h);
        }
        let a = Tensor::new(vec![5], pass.mixture_grads.as_flat().to_vec()).unwrap();
        let b = Tensor::new(vec![5], fd.as_flat().to_vec()).unwrap();
        assert!(relative_error(&a, &b) <= 1e-5);
        assert_eq!(pass.cost.evals.searchable, 5);
    }

    #[test]
    fn sparse_evaluates_one_candidate_per_edge() {
        let (spec, w) = scalar_dag(&[&[1.0, 2.0, 3.0], &[1.0, 2.0], &[4.0, 5.0, 6.0, 7.0]], Aggregation::Sum);
        let arch = Architecture::new(vec![2, 0, 3]);
        let pass = sparse_reward_pass(
            &spec,
            &w,
            &arch,
            &one(),
            None,
            RewardKind::Linear,
            PassOptions { taps: true, weight_grads: false },
        )
        .unwrap();
        assert_eq!(pass.cost.evals.searchable, 3);
        assert_eq!(pass.cost.forwards, 1);
        assert_eq!(pass.cost.backwards, 1);
        assert_eq!(pass.reward, 3.0 + 1.0 + 7.0);
    }

    #[test]
    fn taps_inner_product_matches_edge_scaling_derivative() {
        let (spec, w) = scalar_dag(&[&[0.7, -1.2], &[1.5, 0.2]], Aggregation::Average);
        let x = Tensor::new(vec![3, 1], vec![0.4, -0.9, 1.2]).unwrap();
        let t = Tensor::new(vec![3, 1], vec![1.0, 0.5, -0.3]).unwrap();
        let arch = Architecture::new(vec![1, 0]);
        let pass = sparse_reward_pass(
            &spec,
            &w,
            &arch,
            &x,
            Some(&t),
            RewardKind::Mse,
            PassOptions { taps: true, weight_grads: false },
        )
        .unwrap();
        for e in 0..2 {
            let inner = pass.taps.grad(e).unwrap().dot(pass.taps.output(e).unwrap()).unwrap();
            let h = 1e-5;
            let r = |f: f64| {
                let y = forward_edge_scaled(&spec, &w, &arch, e, f, &x).unwrap();
                minibatch_reward(&y, Some(&t), RewardKind::Mse).unwrap()
            };
            let fd = (r(1.0 + h) - r(1.0 - h)) / (2.0 * h);
            assert!((inner - fd).abs() <= 1e-4 * fd.abs().max(1e-12), "edge {e}: {inner} vs {fd}");
        }
    }

    #[test]
    fn reward_values() {
        let p = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let z = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(minibatch_reward(&p, Some(&p), RewardKind::Mse).unwrap(), 0.0);
        assert_eq!(minibatch_reward(&p, Some(&z), RewardKind::Mse).unwrap(), -0.5);
        assert!(minibatch_reward(&p, None, RewardKind::Mse).is_err());
        let three = Tensor::new(vec![3], vec![0.0; 3]).unwrap();
        assert!(minibatch_reward(&p, Some(&three), RewardKind::Mse).is_err());
    }

    #[test]
    fn architecture_one_hot_roundtrip_and_rejection() {
        let a = Architecture::from_one_hot(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.choices(), &[1, 0]);
        assert!(Architecture::from_one_hot(&[vec![0.5, 0.5]]).is_err());
        assert!(Architecture::from_one_hot(&[vec![1.0, 1.0]]).is_err());
        assert!(a.validate(&[3, 2]).is_ok());
        assert!(a.validate(&[1, 2]).is_err());
        assert!(a.validate(&[3]).is_err());
    }

    #[test]
    fn weight_grads_for_selected_candidates_only() {
        let (spec, w) = scalar_dag(&[&[2.0, 3.0]], Aggregation::Sum);
        let pass = sparse_reward_pass(
            &spec,
            &w,
            &Architecture::new(vec![1]),
            &one(),
            None,
            RewardKind::Linear,
            PassOptions { taps: false, weight_grads: true },
        )
        .unwrap();
        assert_eq!(pass.weight_grads.len(), 1);
        assert_eq!(pass.weight_grads[0].0, 0);
        assert_eq!(pass.weight_grads[0].1, 1);
        assert_eq!(pass.weight_grads[0].2.data(), &[1.0]);
    }
}
