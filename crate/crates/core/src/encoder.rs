//! Two-layer message-passing encoder with sum readout and projection head.
//!
//! Layer `k` updates node `i` as
//! `v_i' = update(v_i, sum_{j -> i} message(v_i, v_j, e_ji))`, where both
//! `message` and `update` are two-layer perceptrons. The first layer sees
//! edge features, the second only node states. Node states are summed into
//! one graph vector and mapped to the embedding by a three-layer head.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{SceneGraph, EDGE_FEATURES, NODE_FEATURES};
use crate::nn::{Matrix, Mlp, MlpSpec, MlpTape, Mode, Parameters};
use crate::seed::Rng;

pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub embedding: usize,
    /// Dropout inside both message-passing layers; the head has none.
    pub gnn_dropout: f64,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 60,
            embedding: 12,
            gnn_dropout: 0.1,
            leaky_slope: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    pub message: Mlp,
    pub update: Mlp,
    pub use_edge_features: bool,
}

impl GnnLayer {
    pub fn new(state_width: usize, use_edge_features: bool, config: &EncoderConfig, rng: &mut Rng) -> Self {
        let h = config.hidden;
        let edge = if use_edge_features { EDGE_FEATURES } else { 0 };
        let spec = |w: Vec<usize>| MlpSpec {
            widths: w,
            leaky_slope: config.leaky_slope,
            dropout: config.gnn_dropout,
        };
        Self {
            message: Mlp::new(spec(vec![2 * state_width + edge, h, h]), rng),
            update: Mlp::new(spec(vec![state_width + h, h, h]), rng),
            use_edge_features,
        }
    }

    pub fn state_width(&self) -> usize {
        self.update.input_width() - self.message.output_width()
    }
}

impl Parameters for GnnLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.message.tensors();
        t.extend(self.update.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.message.tensors_mut();
        t.extend(self.update.tensors_mut());
        t
    }
}

#[derive(Debug, Clone)]
pub struct LayerTape {
    message: Option<MlpTape>,
    update: MlpTape,
}

fn edge_index(graph: &SceneGraph) -> (Vec<usize>, Vec<usize>) {
    graph.edges.iter().map(|e| (e.origin, e.target)).unzip()
}

fn edge_matrix(graph: &SceneGraph) -> Matrix {
    Matrix::from_rows(&graph.edges.iter().map(|e| e.features).collect::<Vec<_>>())
        .unwrap_or_else(|_| Matrix::zeros(0, EDGE_FEATURES))
}

/// One round of message passing. Messages along edge `j -> i` take
/// `(v_i, v_j, e_ji)`; they are summed per receiving node.
pub fn message_pass(
    layer: &GnnLayer,
    graph: &SceneGraph,
    states: &Matrix,
    mut mode: Mode<'_>,
) -> Result<(Matrix, LayerTape)> {
    let w = layer.state_width();
    if states.cols() != w || states.rows() != graph.node_count() {
        return Err(Error::shape(
            format!("{} x {w} node states", graph.node_count()),
            format!("{} x {}", states.rows(), states.cols()),
        ));
    }
    let hidden = layer.message.output_width();
    let mut aggregate = Matrix::zeros(states.rows(), hidden);
    let mut message_tape = None;
    if !graph.edges.is_empty() {
        let (origins, targets) = edge_index(graph);
        let receivers = states.gather_rows(&targets);
        let senders = states.gather_rows(&origins);
        let input = if layer.use_edge_features {
            Matrix::hcat(&[&receivers, &senders, &edge_matrix(graph)])?
        } else {
            Matrix::hcat(&[&receivers, &senders])?
        };
        let (messages, tape) = layer.message.forward(&input, mode.reborrow())?;
        messages.scatter_add_rows(&targets, &mut aggregate);
        message_tape = Some(tape);
    }
    let (out, update_tape) = layer.update.forward(&Matrix::hcat(&[states, &aggregate])?, mode)?;
    Ok((
        out,
        LayerTape {
            message: message_tape,
            update: update_tape,
        },
    ))
}

/// Backward pass of [`message_pass`]: accumulates parameter gradients into
/// `grads` and returns the gradient with respect to the input node states.
pub fn message_pass_backward(
    layer: &GnnLayer,
    graph: &SceneGraph,
    tape: &LayerTape,
    d_out: &Matrix,
    grads: &mut GnnLayer,
) -> Result<Matrix> {
    let w = layer.state_width();
    let hidden = layer.message.output_width();
    let d_in = layer.update.backward_into(&tape.update, d_out, &mut grads.update)?;
    let mut parts = d_in.hsplit(&[w, hidden])?;
    let d_aggregate = parts.pop().expect("two parts");
    let mut d_states = parts.pop().expect("two parts");
    if let Some(mt) = &tape.message {
        let (origins, targets) = edge_index(graph);
        let d_messages = d_aggregate.gather_rows(&targets);
        let d_msg_in = layer.message.backward_into(mt, &d_messages, &mut grads.message)?;
        let widths: &[usize] = if layer.use_edge_features {
            &[w, w, EDGE_FEATURES]
        } else {
            &[w, w]
        };
        let split = d_msg_in.hsplit(widths)?;
        split[0].scatter_add_rows(&targets, &mut d_states);
        split[1].scatter_add_rows(&origins, &mut d_states);
    }
    Ok(d_states)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layer1: GnnLayer,
    pub layer2: GnnLayer,
    pub head: Mlp,
}

impl EncoderParams {
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Self {
        let h = config.hidden;
        let layer1 = GnnLayer::new(NODE_FEATURES, true, &config, rng);
        let layer2 = GnnLayer::new(h, false, &config, rng);
        let head = Mlp::new(
            MlpSpec {
                widths: vec![h, h, h, config.embedding],
                leaky_slope: config.leaky_slope,
                dropout: 0.0,
            },
            rng,
        );
        Self {
            config,
            layer1,
            layer2,
            head,
        }
    }

    pub fn embedding_width(&self) -> usize {
        self.head.output_width()
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.layer1.tensors();
        t.extend(self.layer2.tensors());
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.layer1.tensors_mut();
        t.extend(self.layer2.tensors_mut());
        t.extend(self.head.tensors_mut());
        t
    }
}

/// Everything needed to backpropagate through one [`encode`] call.
#[derive(Debug, Clone)]
pub struct EncodeTape {
    nodes: usize,
    layer1: LayerTape,
    layer2: LayerTape,
    head: MlpTape,
}

fn node_matrix(graph: &SceneGraph) -> Result<Matrix> {
    Matrix::from_rows(&graph.nodes)
}

fn check_nonempty(graph: &SceneGraph, index: usize) -> Result<()> {
    if graph.nodes.is_empty() {
        return Err(Error::EmptyGraph {
            index,
            scene_id: graph.scene_id.clone(),
        });
    }
    Ok(())
}

/// Graph vector before the projection head (sum over final node states).
pub fn readout(params: &EncoderParams, graph: &SceneGraph) -> Result<Vec<f64>> {
    check_nonempty(graph, 0)?;
    let (h1, _) = message_pass(&params.layer1, graph, &node_matrix(graph)?, Mode::Eval)?;
    let (h2, _) = message_pass(&params.layer2, graph, &h1, Mode::Eval)?;
    Ok(h2.column_sums())
}

pub fn encode_with_tape(
    params: &EncoderParams,
    graph: &SceneGraph,
    mut mode: Mode<'_>,
) -> Result<(Embedding, EncodeTape)> {
    check_nonempty(graph, 0)?;
    let (h1, t1) = message_pass(&params.layer1, graph, &node_matrix(graph)?, mode.reborrow())?;
    let (h2, t2) = message_pass(&params.layer2, graph, &h1, mode.reborrow())?;
    let pooled = Matrix::row_vector(&h2.column_sums());
    let (emb, th) = params.head.forward(&pooled, mode)?;
    Ok((
        emb.into_vec(),
        EncodeTape {
            nodes: graph.node_count(),
            layer1: t1,
            layer2: t2,
            head: th,
        },
    ))
}

pub fn encode(params: &EncoderParams, graph: &SceneGraph, mode: Mode<'_>) -> Result<Embedding> {
    encode_with_tape(params, graph, mode).map(|(e, _)| e)
}

/// Accumulates `d(loss)/d(params)` into `grads` given `d(loss)/d(embedding)`.
pub fn encode_backward(
    params: &EncoderParams,
    graph: &SceneGraph,
    tape: &EncodeTape,
    d_embedding: &[f64],
    grads: &mut EncoderParams,
) -> Result<()> {
    if tape.nodes != graph.node_count() {
        return Err(Error::TapeMismatch(format!(
            "tape recorded {} nodes, graph has {}",
            tape.nodes,
            graph.node_count()
        )));
    }
    let d_pooled = params
        .head
        .backward_into(&tape.head, &Matrix::row_vector(d_embedding), &mut grads.head)?;
    // the sum readout broadcasts its gradient to every node
    let mut d_h2 = Matrix::zeros(tape.nodes, d_pooled.cols());
    for r in 0..tape.nodes {
        d_h2.row_mut(r).copy_from_slice(d_pooled.row(0));
    }
    let d_h1 = message_pass_backward(&params.layer2, graph, &tape.layer2, &d_h2, &mut grads.layer2)?;
    message_pass_backward(&params.layer1, graph, &tape.layer1, &d_h1, &mut grads.layer1)?;
    Ok(())
}

/// Evaluation-mode embeddings for many graphs, in input order.
pub fn encode_batch(params: &EncoderParams, graphs: &[SceneGraph]) -> Result<Vec<Embedding>> {
    for (i, g) in graphs.iter().enumerate() {
        check_nonempty(g, i)?;
    }
    graphs
        .par_iter()
        .map(|g| encode(params, g, Mode::Eval))
        .collect()
}
