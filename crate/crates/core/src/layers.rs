//! Reference layers built on the engine, plus readouts.
//!
//! Each catalog entry expands to a [`LayerSpec`]. In configuration files a
//! layer is an object whose `type` names the entry (`hg_two_phase`,
//! `hodge_conv`, `scone`, `mpsn`, `ccc_attention`, or `custom` for a raw
//! spec).
//!
//! Layers meant to respect orientation (`hodge_conv`, `scone`) default to
//! `tanh`; the others default to `relu` and are not orientation equivariant.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    Activation, BetweenAgg, Dims, LayerSpec, MessageSpec, MessageType, Selector, SelectorKind, Stage, UpdateSpec,
};
use crate::error::{Error, Result};
use crate::neighborhoods::Normalization;
use crate::tensor::{DenseMatrix, ParamStore, Reduce, Tape, Var};

fn relu() -> Activation {
    Activation::Relu
}

fn tanh() -> Activation {
    Activation::Tanh
}

fn sum() -> Reduce {
    Reduce::Sum
}

fn yes() -> bool {
    true
}

/// Catalog entry as written in a model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogLayer {
    HgTwoPhase {
        node_in: usize,
        edge_dim: usize,
        node_out: usize,
        #[serde(default = "sum")]
        agg: Reduce,
        #[serde(default)]
        attentional: bool,
        #[serde(default = "relu")]
        activation: Activation,
        #[serde(default)]
        recurrent: bool,
    },
    HodgeConv {
        rank: usize,
        in_dim: usize,
        out_dim: usize,
        order: u32,
        #[serde(default = "yes")]
        include_identity: bool,
        #[serde(default)]
        normalization: Normalization,
        #[serde(default = "tanh")]
        activation: Activation,
    },
    Scone {
        in_dim: usize,
        out_dim: usize,
        #[serde(default = "tanh")]
        activation: Activation,
    },
    Mpsn {
        max_rank: usize,
        dim: usize,
    },
    CccAttention {
        rank_pairs: Vec<(usize, usize)>,
        in_dims: BTreeMap<usize, usize>,
        out_dim: usize,
        #[serde(default = "relu")]
        activation: Activation,
    },
    Custom {
        stages: Vec<Stage>,
    },
}

impl CatalogLayer {
    pub fn spec(&self) -> Result<LayerSpec> {
        Ok(match self {
            CatalogLayer::HgTwoPhase {
                node_in,
                edge_dim,
                node_out,
                agg,
                attentional,
                activation,
                recurrent,
            } => {
                let mut spec = hg_two_phase(*node_in, *edge_dim, *node_out, *agg, *attentional, *activation);
                spec.stages[1].update.recurrent = *recurrent;
                spec
            }
            CatalogLayer::HodgeConv {
                rank,
                in_dim,
                out_dim,
                order,
                include_identity,
                normalization,
                activation,
            } => hodge_conv(*rank, *in_dim, *out_dim, *order, *include_identity, *normalization, *activation),
            CatalogLayer::Scone {
                in_dim,
                out_dim,
                activation,
            } => scone(*in_dim, *out_dim, *activation),
            CatalogLayer::Mpsn { max_rank, dim } => mpsn(*max_rank, *dim),
            CatalogLayer::CccAttention {
                rank_pairs,
                in_dims,
                out_dim,
                activation,
            } => ccc_attention(rank_pairs, in_dims, *out_dim, *activation)?,
            CatalogLayer::Custom { stages } => LayerSpec { stages: stages.clone() },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CatalogLayer::HgTwoPhase { .. } => "hg_two_phase",
            CatalogLayer::HodgeConv { .. } => "hodge_conv",
            CatalogLayer::Scone { .. } => "scone",
            CatalogLayer::Mpsn { .. } => "mpsn",
            CatalogLayer::CccAttention { .. } => "ccc_attention",
            CatalogLayer::Custom { .. } => "custom",
        }
    }
}

/// Nodes to hyperedges through `B_1ᵀ`, then hyperedges back to nodes
/// through `B_1`, each phase with its own `Θ` and activation.
pub fn hg_two_phase(
    node_in: usize,
    edge_dim: usize,
    node_out: usize,
    agg: Reduce,
    attentional: bool,
    activation: Activation,
) -> LayerSpec {
    let kind = if attentional {
        MessageType::Attentional
    } else {
        MessageType::Standard
    };
    let phase = |selector, i, o| {
        Stage::new(
            vec![MessageSpec::standard(selector, i, o).with_type(kind).with_agg(agg)],
            UpdateSpec::activation(activation),
        )
    };
    LayerSpec {
        stages: vec![
            phase(Selector::coboundary(1), node_in, edge_dim),
            phase(Selector::boundary(1), edge_dim, node_out),
        ],
    }
}

/// `h ← σ(Σ_{j=0..k} L↓^j h Θ↓_j + L↑^j h Θ↑_j)` on rank `r`, with a single
/// identity term for `j = 0` when `include_identity` is set.
pub fn hodge_conv(
    r: usize,
    in_dim: usize,
    out_dim: usize,
    order: u32,
    include_identity: bool,
    normalization: Normalization,
    activation: Activation,
) -> LayerSpec {
    let mut messages = Vec::new();
    if include_identity {
        messages.push(MessageSpec::standard(Selector::identity(r), in_dim, out_dim));
    }
    for j in 1..=order {
        for base in [SelectorKind::DownLaplacian, SelectorKind::UpLaplacian] {
            let selector = Selector::power(base, r, j).normalized(normalization);
            messages.push(MessageSpec::standard(selector, in_dim, out_dim));
        }
    }
    LayerSpec::single(Stage::new(messages, UpdateSpec::activation(activation)))
}

/// `h¹ ← σ(L↓ h Θ_1 + L↑ h Θ_2 + h Θ_3)` on edges.
pub fn scone(in_dim: usize, out_dim: usize, activation: Activation) -> LayerSpec {
    let messages = vec![
        MessageSpec::standard(Selector::on_rank(SelectorKind::DownLaplacian, 1), in_dim, out_dim),
        MessageSpec::standard(Selector::on_rank(SelectorKind::UpLaplacian, 1), in_dim, out_dim),
        MessageSpec::standard(Selector::identity(1), in_dim, out_dim),
    ];
    LayerSpec::single(Stage::new(messages, UpdateSpec::activation(activation)))
}

/// Boundary, coboundary, lower and upper adjacency messages into every rank
/// up to `max_rank`, summed, with a residual ReLU update.
pub fn mpsn(max_rank: usize, dim: usize) -> LayerSpec {
    let mut messages = Vec::new();
    for r in 0..=max_rank {
        if r < max_rank {
            messages.push(MessageSpec::standard(Selector::boundary(r + 1), dim, dim));
        }
        if r > 0 {
            messages.push(MessageSpec::standard(Selector::coboundary(r), dim, dim));
            messages.push(MessageSpec::standard(Selector::on_rank(SelectorKind::AdjacencyDown, r), dim, dim));
        }
        messages.push(MessageSpec::standard(Selector::on_rank(SelectorKind::AdjacencyUp, r), dim, dim));
    }
    LayerSpec::single(Stage::new(
        messages,
        UpdateSpec {
            activation: Activation::Relu,
            residual: true,
            recurrent: false,
        },
    ))
}

/// Attentional messages along containment in both directions for every
/// declared rank pair.
pub fn ccc_attention(
    rank_pairs: &[(usize, usize)],
    in_dims: &BTreeMap<usize, usize>,
    out_dim: usize,
    activation: Activation,
) -> Result<LayerSpec> {
    let mut messages = Vec::new();
    for &(a, b) in rank_pairs {
        if a == b {
            return Err(Error::Config(format!("rank pair ({a}, {b}) must join distinct ranks")));
        }
        for (s, t) in [(a, b), (b, a)] {
            let d = *in_dims
                .get(&s)
                .ok_or_else(|| Error::Config(format!("no input width for rank {s}")))?;
            messages.push(MessageSpec::standard(Selector::between(s, t), d, out_dim).with_type(MessageType::Attentional));
        }
    }
    let mut stage = Stage::new(messages, UpdateSpec::activation(activation));
    stage.between_agg = BetweenAgg::Sum;
    Ok(LayerSpec::single(stage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Node,
    Edge,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutAgg {
    Sum,
    #[default]
    Mean,
    Max,
    /// Linear head over all cells' features in canonical order. Depends on
    /// the cell order, so it is not permutation invariant.
    Flatten,
}

/// Turns cell features into predictions: one row per node or edge, or one
/// row for the whole complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Readout {
    pub level: Level,
    /// Rank pooled by complex-level readouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default)]
    pub agg: ReadoutAgg,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Readout {
    pub fn rank(&self) -> usize {
        match self.level {
            Level::Node => 0,
            Level::Edge => 1,
            Level::Complex => self.rank.unwrap_or(0),
        }
    }

    fn flattens(&self) -> bool {
        self.level == Level::Complex && self.agg == ReadoutAgg::Flatten
    }

    /// `num_cells` is the size of the pooled rank; only flatten uses it.
    pub fn init_params<R: Rng + ?Sized>(&self, num_cells: usize, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let rows = if self.flattens() {
            num_cells * self.in_dim
        } else {
            self.in_dim
        };
        let bound = (6.0 / (rows + self.out_dim).max(1) as f64).sqrt();
        store.insert("readout.weight", DenseMatrix::uniform(rows, self.out_dim, bound, rng))?;
        store.insert("readout.bias", DenseMatrix::zeros(1, self.out_dim))?;
        Ok(())
    }

    pub fn record(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        let (rows, cols) = tape.shape(h);
        if cols != self.in_dim {
            return Err(Error::shape("readout", (rows, self.in_dim), (rows, cols)));
        }
        let w = tape.param(store, store.id("readout.weight")?);
        let b = tape.param(store, store.id("readout.bias")?);
        let pooled = match (self.level, self.agg) {
            (Level::Complex, ReadoutAgg::Flatten) => tape.reshape(h, 1, rows * cols)?,
            (Level::Complex, ReadoutAgg::Sum) => tape.reduce_rows(h, Reduce::Sum)?,
            (Level::Complex, ReadoutAgg::Mean) => tape.reduce_rows(h, Reduce::Mean)?,
            (Level::Complex, ReadoutAgg::Max) => tape.reduce_rows(h, Reduce::Max)?,
            _ => h,
        };
        let logits = tape.matmul(pooled, w)?;
        tape.add_row_bias(logits, b)
    }

    /// Pools without the linear head.
    pub fn pool(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let x = tape.constant(h.clone());
        let agg = match self.agg {
            ReadoutAgg::Sum => Reduce::Sum,
            ReadoutAgg::Mean => Reduce::Mean,
            ReadoutAgg::Max => Reduce::Max,
            ReadoutAgg::Flatten => return DenseMatrix::from_vec(1, h.len(), h.as_slice().to_vec()),
        };
        let offsets = Arc::new(vec![0, h.rows()]);
        let out = tape.segment_reduce(x, offsets, agg)?;
        Ok(tape.value(out).clone())
    }
}

/// Widths after running `layers` from `input`.
pub fn chain_dims(layers: &[LayerSpec], input: &Dims) -> Result<Dims> {
    let mut dims = input.clone();
    for (i, l) in layers.iter().enumerate() {
        dims = l.output_dims(&dims).map_err(|e| e.in_layer(i, 0))?;
    }
    Ok(dims)
}
