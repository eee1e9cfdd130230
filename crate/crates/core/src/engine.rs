//! Declarative four-step message passing.
//!
//! A [`LayerSpec`] is a list of [`Stage`]s. Each stage reads the current
//! features, sends one message per [`MessageSpec`] through the matrix picked
//! by its [`Selector`], reduces messages within each neighborhood
//! (`within_agg`), combines neighborhoods that share a target rank
//! (`between_agg`) and applies the update. Ranks that no message targets
//! pass through unchanged. Most layers have a single stage; the two-phase
//! hypergraph scheme uses two so that the second phase reads the output of
//! the first.
//!
//! Parameters live in a [`ParamStore`] under names derived from the layer,
//! stage and message positions (see [`message_prefix`]).

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::neighborhoods::{self, normalize_csr, Normalization};
use crate::sparse::Csr;
use crate::tensor::{DenseMatrix, ParamStore, Reduce, Tape, Var};

/// Slope of the leaky ReLU applied to attention scores.
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Boundary,
    Coboundary,
    UpLaplacian,
    DownLaplacian,
    AdjacencyUp,
    AdjacencyDown,
    Hodge,
    Identity,
    IncidenceBetween,
    MatrixPower,
}

/// Picks the `n_target x n_source` matrix a message travels through.
///
/// `matrix_power` raises the square matrix of kind `base` (normalized
/// first) to `power`; power 0 is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    pub kind: SelectorKind,
    pub source_rank: usize,
    pub target_rank: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<SelectorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<u32>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl Selector {
    pub fn new(kind: SelectorKind, source_rank: usize, target_rank: usize) -> Self {
        Self {
            kind,
            source_rank,
            target_rank,
            normalization: Normalization::None,
            base: None,
            power: None,
        }
    }

    /// `B_r`: from rank `r` down to `r - 1`.
    pub fn boundary(r: usize) -> Self {
        Self::new(SelectorKind::Boundary, r, r.wrapping_sub(1))
    }

    /// `B_rᵀ`: from rank `r - 1` up to `r`.
    pub fn coboundary(r: usize) -> Self {
        Self::new(SelectorKind::Coboundary, r.wrapping_sub(1), r)
    }

    /// A square selector on rank `r`.
    pub fn on_rank(kind: SelectorKind, r: usize) -> Self {
        Self::new(kind, r, r)
    }

    pub fn identity(r: usize) -> Self {
        Self::on_rank(SelectorKind::Identity, r)
    }

    pub fn between(source_rank: usize, target_rank: usize) -> Self {
        Self::new(SelectorKind::IncidenceBetween, source_rank, target_rank)
    }

    pub fn power(base: SelectorKind, r: usize, k: u32) -> Self {
        let mut s = Self::on_rank(SelectorKind::MatrixPower, r);
        s.base = Some(base);
        s.power = Some(k);
        s
    }

    pub fn normalized(mut self, scheme: Normalization) -> Self {
        self.normalization = scheme;
        self
    }

    fn check_ranks(&self, kind: SelectorKind) -> Result<()> {
        let (s, t) = (self.source_rank, self.target_rank);
        let ok = match kind {
            SelectorKind::Boundary => t.checked_add(1) == Some(s),
            SelectorKind::Coboundary => s.checked_add(1) == Some(t),
            SelectorKind::IncidenceBetween => s != t,
            _ => s == t,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "selector {kind:?} cannot route rank {s} to rank {t}"
            )))
        }
    }

    /// Exact integer matrix of a non-power kind.
    fn raw(&self, c: &Complex, kind: SelectorKind) -> Result<Csr<i64>> {
        self.check_ranks(kind)?;
        let (s, t) = (self.source_rank, self.target_rank);
        let m = match kind {
            SelectorKind::Boundary => neighborhoods::incidence(c, s)?.matrix,
            SelectorKind::Coboundary => neighborhoods::coboundary(c, t)?.matrix,
            SelectorKind::UpLaplacian => neighborhoods::up_laplacian(c, s)?.matrix,
            SelectorKind::DownLaplacian => neighborhoods::down_laplacian(c, s)?.matrix,
            SelectorKind::AdjacencyUp => neighborhoods::adjacency_up(c, s)?.matrix,
            SelectorKind::AdjacencyDown => neighborhoods::adjacency_down(c, s)?.matrix,
            SelectorKind::Hodge => neighborhoods::hodge_laplacian(c, s)?.matrix,
            SelectorKind::Identity => {
                if s > c.max_rank() {
                    return Err(Error::RankOutOfRange {
                        rank: s,
                        max_rank: c.max_rank(),
                    });
                }
                Csr::identity(c.num_cells(s))
            }
            SelectorKind::IncidenceBetween if s > t => neighborhoods::incidence_between(c, t, s)?.matrix,
            SelectorKind::IncidenceBetween => neighborhoods::incidence_between(c, s, t)?.matrix.transpose(),
            SelectorKind::MatrixPower => {
                return Err(Error::Config("matrix_power cannot be its own base".into()))
            }
        };
        Ok(m)
    }

    /// The real matrix this selector denotes on `c`.
    pub fn resolve(&self, c: &Complex) -> Result<Csr<f64>> {
        if self.kind != SelectorKind::MatrixPower {
            if self.base.is_some() || self.power.is_some() {
                return Err(Error::Config("base/power only apply to matrix_power".into()));
            }
            return Ok(normalize_csr(&self.raw(c, self.kind)?.to_f64(), self.normalization));
        }
        let (Some(base), Some(k)) = (self.base, self.power) else {
            return Err(Error::Config("matrix_power needs base and power".into()));
        };
        let m = self.raw(c, base)?;
        if self.normalization == Normalization::None {
            // stay exact so the sparsity pattern is independent of cell order
            Ok(m.pow(k)?.to_f64())
        } else {
            normalize_csr(&m.to_f64(), self.normalization).pow(k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    /// `N · h · Θ`.
    #[default]
    Standard,
    /// Selector entries replaced by softmax-normalized attention scores.
    Attentional,
    /// Two-layer perceptron on `[h_x ‖ h_y]`, weighted by the selector entry.
    General,
}

fn default_reduce() -> Reduce {
    Reduce::Sum
}

fn is_sum(r: &Reduce) -> bool {
    *r == Reduce::Sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSpec {
    pub selector: Selector,
    #[serde(default, skip_serializing_if = "is_default")]
    pub message_type: MessageType,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Multiplies every message of this neighborhood.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_weight: Option<f64>,
    #[serde(default = "default_reduce", skip_serializing_if = "is_sum")]
    pub within_agg: Reduce,
    /// Hidden width of the general message perceptron (default `2 * out_dim`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Messages of one layer with the same key share their `Θ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<String>,
}

impl MessageSpec {
    pub fn standard(selector: Selector, in_dim: usize, out_dim: usize) -> Self {
        Self {
            selector,
            message_type: MessageType::Standard,
            in_dim,
            out_dim,
            fixed_weight: None,
            within_agg: Reduce::Sum,
            hidden: None,
            share: None,
        }
    }

    pub fn with_type(mut self, t: MessageType) -> Self {
        self.message_type = t;
        self
    }

    pub fn with_agg(mut self, agg: Reduce) -> Self {
        self.within_agg = agg;
        self
    }

    pub fn shared(mut self, key: impl Into<String>) -> Self {
        self.share = Some(key.into());
        self
    }

    fn hidden_width(&self) -> usize {
        self.hidden.unwrap_or(2 * self.out_dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetweenAgg {
    #[default]
    Sum,
    Mean,
    Max,
    /// Concatenate the neighborhood messages and apply one linear map.
    ConcatLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    /// True for odd functions, which commute with sign flips.
    pub fn is_odd(self) -> bool {
        matches!(self, Activation::Identity | Activation::Tanh)
    }
}

/// `h^{t+1} = σ(m [+ h^t] [+ h^0 Θ_0])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateSpec {
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub recurrent: bool,
}

impl UpdateSpec {
    pub fn activation(activation: Activation) -> Self {
        Self {
            activation,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub messages: Vec<MessageSpec>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub between_agg: BetweenAgg,
    #[serde(default)]
    pub update: UpdateSpec,
    /// Output width per target rank under `concat_linear` (default: the
    /// first message's `out_dim`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub out_dims: BTreeMap<usize, usize>,
}

impl Stage {
    pub fn new(messages: Vec<MessageSpec>, update: UpdateSpec) -> Self {
        Self {
            messages,
            between_agg: BetweenAgg::Sum,
            update,
            out_dims: BTreeMap::new(),
        }
    }

    /// Message indices grouped by target rank.
    fn targets(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, m) in self.messages.iter().enumerate() {
            groups.entry(m.selector.target_rank).or_default().push(i);
        }
        groups
    }

    fn target_width(&self, target: usize, members: &[usize]) -> Result<usize> {
        let widths: Vec<usize> = members.iter().map(|&i| self.messages[i].out_dim).collect();
        if self.between_agg == BetweenAgg::ConcatLinear {
            return Ok(self.out_dims.get(&target).copied().unwrap_or(widths[0]));
        }
        if widths.iter().any(|&w| w != widths[0]) {
            return Err(Error::Config(format!(
                "messages into rank {target} have different widths {widths:?}; use concat_linear"
            )));
        }
        Ok(widths[0])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub stages: Vec<Stage>,
}

/// Feature widths per rank.
pub type Dims = BTreeMap<usize, usize>;

pub fn message_prefix(layer: usize, stage: usize, message: usize) -> String {
    format!("layer{layer}.stage{stage}.msg{message}")
}

fn rank_prefix(layer: usize, stage: usize, rank: usize) -> String {
    format!("layer{layer}.stage{stage}.rank{rank}")
}

fn theta_name(layer: usize, stage: usize, i: usize, m: &MessageSpec) -> String {
    match &m.share {
        Some(key) => format!("layer{layer}.{key}"),
        None => format!("{}.theta", message_prefix(layer, stage, i)),
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    DenseMatrix::uniform(rows, cols, bound, rng)
}

fn insert_param<R: Rng + ?Sized>(store: &mut ParamStore, name: String, rows: usize, cols: usize, rng: &mut R) -> Result<()> {
    if let Ok(existing) = store.by_name(&name) {
        if existing.value.shape() != (rows, cols) {
            return Err(Error::Config(format!(
                "shared parameter {name} used with shapes {:?} and {:?}",
                existing.value.shape(),
                (rows, cols)
            )));
        }
        return Ok(());
    }
    store.insert(name, glorot(rows, cols, rng)).map(|_| ())
}

impl LayerSpec {
    pub fn single(stage: Stage) -> Self {
        Self { stages: vec![stage] }
    }

    /// Feature widths after the layer, given widths before it. Checks that
    /// every message reads a rank of width `in_dim` and that residual
    /// updates preserve width.
    pub fn output_dims(&self, input: &Dims) -> Result<Dims> {
        let mut dims = input.clone();
        for stage in &self.stages {
            let mut next = dims.clone();
            for (target, members) in stage.targets() {
                for &i in &members {
                    let m = &stage.messages[i];
                    m.selector.check_ranks(m.selector.base.unwrap_or(m.selector.kind))?;
                    match dims.get(&m.selector.source_rank) {
                        Some(&d) if d == m.in_dim => {}
                        Some(&d) => {
                            return Err(Error::Config(format!(
                                "message {i} reads rank {} of width {d} but in_dim is {}",
                                m.selector.source_rank, m.in_dim
                            )))
                        }
                        None => return Err(Error::MissingFeatures(m.selector.source_rank)),
                    }
                }
                let width = stage.target_width(target, &members)?;
                if stage.update.residual && dims.get(&target) != Some(&width) {
                    return Err(Error::Config(format!(
                        "residual update on rank {target} needs input width {width}"
                    )));
                }
                next.insert(target, width);
            }
            dims = next;
        }
        Ok(dims)
    }

    /// Creates every parameter of layer `layer` with Glorot-uniform values.
    /// `initial` holds the widths of the model input, read by recurrent
    /// updates.
    pub fn init_params<R: Rng + ?Sized>(
        &self,
        layer: usize,
        input: &Dims,
        initial: &Dims,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<()> {
        let mut dims = input.clone();
        for (si, stage) in self.stages.iter().enumerate() {
            let next = LayerSpec::single(stage.clone()).output_dims(&dims)?;
            for (target, members) in stage.targets() {
                for &i in &members {
                    let m = &stage.messages[i];
                    let prefix = message_prefix(layer, si, i);
                    let target_dim = dims.get(&target).copied();
                    match m.message_type {
                        MessageType::Standard => {
                            insert_param(store, theta_name(layer, si, i, m), m.in_dim, m.out_dim, rng)?;
                        }
                        MessageType::Attentional => {
                            insert_param(store, theta_name(layer, si, i, m), m.in_dim, m.out_dim, rng)?;
                            insert_param(store, format!("{prefix}.a_src"), m.out_dim, 1, rng)?;
                            if let Some(d) = target_dim {
                                let rows = if d == m.in_dim { m.out_dim } else { d };
                                insert_param(store, format!("{prefix}.a_tgt"), rows, 1, rng)?;
                            }
                        }
                        MessageType::General => {
                            let input_width = m.in_dim + target_dim.unwrap_or(0);
                            insert_param(store, format!("{prefix}.w1"), input_width, m.hidden_width(), rng)?;
                            insert_param(store, format!("{prefix}.w2"), m.hidden_width(), m.out_dim, rng)?;
                        }
                    }
                }
                let width = next[&target];
                let rp = rank_prefix(layer, si, target);
                if stage.between_agg == BetweenAgg::ConcatLinear {
                    let total: usize = members.iter().map(|&i| stage.messages[i].out_dim).sum();
                    insert_param(store, format!("{rp}.combine"), total, width, rng)?;
                }
                if stage.update.recurrent {
                    let d0 = *initial.get(&target).ok_or(Error::MissingFeatures(target))?;
                    insert_param(store, format!("{rp}.theta0"), d0, width, rng)?;
                }
            }
            dims = next;
        }
        Ok(())
    }
}

/// Features recorded on a tape, per rank.
pub type VarMap = BTreeMap<usize, Var>;

/// Selector matrices of one complex, built on first use.
pub struct Engine<'c> {
    complex: &'c Complex,
    cache: Mutex<HashMap<Selector, Arc<Csr<f64>>>>,
}

impl<'c> Engine<'c> {
    pub fn new(complex: &'c Complex) -> Self {
        Self {
            complex,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn complex(&self) -> &'c Complex {
        self.complex
    }

    pub fn matrix(&self, selector: &Selector) -> Result<Arc<Csr<f64>>> {
        if let Some(m) = self.cache.lock().expect("cache lock").get(selector) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(selector.resolve(self.complex)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(selector.clone(), Arc::clone(&m));
        Ok(m)
    }

    /// Records one layer. `h0` holds the model input for recurrent updates.
    pub fn record_layer(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        spec: &LayerSpec,
        layer: usize,
        h: &VarMap,
        h0: &VarMap,
    ) -> Result<VarMap> {
        let mut cur = h.clone();
        for (si, stage) in spec.stages.iter().enumerate() {
            let mut next = cur.clone();
            for (target, members) in stage.targets() {
                let out = self
                    .record_target(tape, store, stage, layer, si, target, &members, &cur, h0)
                    .map_err(|e| e.in_layer(layer, target))?;
                next.insert(target, out);
            }
            cur = next;
        }
        Ok(cur)
    }

    #[allow(clippy::too_many_arguments)]
    fn record_target(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        stage: &Stage,
        layer: usize,
        si: usize,
        target: usize,
        members: &[usize],
        h: &VarMap,
        h0: &VarMap,
    ) -> Result<Var> {
        let n_target = self.complex.num_cells(target);
        let mut parts = Vec::with_capacity(members.len());
        for &i in members {
            let m = &stage.messages[i];
            let theta = theta_name(layer, si, i, m);
            parts.push(self.record_message(tape, store, m, &message_prefix(layer, si, i), &theta, h)?);
        }
        let rp = rank_prefix(layer, si, target);
        let combined = match stage.between_agg {
            BetweenAgg::Sum | BetweenAgg::Mean => {
                let mut acc = parts[0];
                for &p in &parts[1..] {
                    acc = tape.add(acc, p)?;
                }
                if stage.between_agg == BetweenAgg::Mean && parts.len() > 1 {
                    acc = tape.scale(acc, 1.0 / parts.len() as f64);
                }
                acc
            }
            BetweenAgg::Max if parts.len() == 1 => parts[0],
            BetweenAgg::Max => {
                let k = parts.len();
                let stacked = tape.concat_rows(&parts)?;
                let order: Vec<usize> = (0..n_target).flat_map(|x| (0..k).map(move |j| j * n_target + x)).collect();
                let grouped = tape.gather_rows(stacked, Arc::new(order))?;
                let offsets: Vec<usize> = (0..=n_target).map(|x| x * k).collect();
                tape.segment_reduce(grouped, Arc::new(offsets), Reduce::Max)?
            }
            BetweenAgg::ConcatLinear => {
                let cat = tape.concat_cols(&parts)?;
                let w = tape.param(store, store.id(&format!("{rp}.combine"))?);
                tape.matmul(cat, w)?
            }
        };
        let mut z = combined;
        if stage.update.residual {
            let prev = *h.get(&target).ok_or(Error::MissingFeatures(target))?;
            z = tape.add(z, prev)?;
        }
        if stage.update.recurrent {
            let init = *h0.get(&target).ok_or(Error::MissingFeatures(target))?;
            let w = tape.param(store, store.id(&format!("{rp}.theta0"))?);
            let lifted = tape.matmul(init, w)?;
            z = tape.add(z, lifted)?;
        }
        Ok(stage.update.activation.record(tape, z))
    }

    fn record_message(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        m: &MessageSpec,
        prefix: &str,
        theta: &str,
        h: &VarMap,
    ) -> Result<Var> {
        let sel = &m.selector;
        let n = self.matrix(sel)?;
        let hs = *h.get(&sel.source_rank).ok_or(Error::MissingFeatures(sel.source_rank))?;
        let (rows, width) = tape.shape(hs);
        if rows != n.cols() || width != m.in_dim {
            return Err(Error::shape("message source", (n.cols(), m.in_dim), (rows, width)));
        }
        let ht = h.get(&sel.target_rank).copied();
        let offsets = Arc::new(n.row_ptr().to_vec());
        let msg = match m.message_type {
            MessageType::Standard => {
                let w = tape.param(store, store.id(theta)?);
                if m.within_agg == Reduce::Sum {
                    // (N h) Θ keeps the sparse product on the narrower side
                    let nh = tape.spmm(Arc::clone(&n), hs)?;
                    tape.matmul(nh, w)?
                } else {
                    let p = tape.matmul(hs, w)?;
                    let values = tape.constant(column(n.values()));
                    edgewise(tape, &n, p, values, offsets, m.within_agg)?
                }
            }
            MessageType::Attentional => {
                let w = tape.param(store, store.id(theta)?);
                let p = tape.matmul(hs, w)?;
                let coef = self.record_attention(tape, store, &n, prefix, p, ht, w, m.in_dim)?;
                if m.within_agg == Reduce::Sum {
                    tape.spmm_values(Arc::clone(&n), coef, p)?
                } else {
                    edgewise(tape, &n, p, coef, offsets, m.within_agg)?
                }
            }
            MessageType::General => {
                let w1 = tape.param(store, store.id(&format!("{prefix}.w1"))?);
                let w2 = tape.param(store, store.id(&format!("{prefix}.w2"))?);
                let src = tape.gather_rows(hs, Arc::new(n.col_indices().to_vec()))?;
                let input = match ht {
                    Some(ht) => {
                        let tgt = tape.gather_rows(ht, Arc::new(n.row_indices()))?;
                        tape.concat_cols(&[tgt, src])?
                    }
                    None => src,
                };
                let hidden = tape.matmul(input, w1)?;
                let hidden = tape.relu(hidden);
                let out = tape.matmul(hidden, w2)?;
                let values = tape.constant(column(n.values()));
                let weighted = tape.scale_rows(out, values)?;
                tape.segment_reduce(weighted, offsets, m.within_agg)?
            }
        };
        Ok(match m.fixed_weight {
            Some(f) => tape.scale(msg, f),
            None => msg,
        })
    }

    /// `nnz x 1` attention coefficients in the selector's storage order.
    #[allow(clippy::too_many_arguments)]
    fn record_attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        n: &Arc<Csr<f64>>,
        prefix: &str,
        p: Var,
        ht: Option<Var>,
        theta: Var,
        in_dim: usize,
    ) -> Result<Var> {
        let a_src = tape.param(store, store.id(&format!("{prefix}.a_src"))?);
        let src_score = tape.matmul(p, a_src)?;
        let mut score = tape.gather_rows(src_score, Arc::new(n.col_indices().to_vec()))?;
        if let Some(ht) = ht {
            let a_tgt = tape.param(store, store.id(&format!("{prefix}.a_tgt"))?);
            let q = if tape.shape(ht).1 == in_dim {
                tape.matmul(ht, theta)?
            } else {
                ht
            };
            let tgt_score = tape.matmul(q, a_tgt)?;
            let per_edge = tape.gather_rows(tgt_score, Arc::new(n.row_indices()))?;
            score = tape.add(score, per_edge)?;
        }
        let score = tape.leaky_relu(score, ATTENTION_SLOPE);
        let coef = tape.segment_softmax(score, Arc::new(n.row_ptr().to_vec()))?;
        if n.values().iter().all(|&v| v > 0.0) {
            return Ok(coef);
        }
        let signs = tape.constant(column(&n.values().iter().map(|v| v.signum()).collect::<Vec<_>>()));
        tape.hadamard(coef, signs)
    }

    /// Runs one layer outside of training.
    pub fn forward_layer(&self, spec: &LayerSpec, layer: usize, h: &FeatureStore, h0: &FeatureStore, params: &ParamStore) -> Result<FeatureStore> {
        h.validate(self.complex)?;
        let mut tape = Tape::new();
        let vars = constants(&mut tape, h);
        let init = constants(&mut tape, h0);
        let out = self.record_layer(&mut tape, params, spec, layer, &vars, &init)?;
        let mut result = FeatureStore::new();
        result.layer = h.layer + 1;
        for (r, v) in out {
            result.insert(r, tape.value(v).clone());
        }
        Ok(result)
    }

    /// Softmax-normalized attention coefficients of one attentional message
    /// as a matrix with the selector's sparsity pattern.
    pub fn attention_coefficients(
        &self,
        spec: &LayerSpec,
        layer: usize,
        stage: usize,
        message: usize,
        h: &FeatureStore,
        params: &ParamStore,
    ) -> Result<Csr<f64>> {
        let m = spec
            .stages
            .get(stage)
            .and_then(|s| s.messages.get(message))
            .ok_or_else(|| Error::InvalidArgument(format!("no message {message} in stage {stage}")))?;
        if m.message_type != MessageType::Attentional {
            return Err(Error::InvalidArgument("message is not attentional".into()));
        }
        let n = self.matrix(&m.selector)?;
        let mut tape = Tape::new();
        let vars = constants(&mut tape, h);
        let hs = *vars.get(&m.selector.source_rank).ok_or(Error::MissingFeatures(m.selector.source_rank))?;
        let ht = vars.get(&m.selector.target_rank).copied();
        let w = tape.param(params, params.id(&theta_name(layer, stage, message, m))?);
        let p = tape.matmul(hs, w)?;
        let prefix = message_prefix(layer, stage, message);
        let coef = self.record_attention(&mut tape, params, &n, &prefix, p, ht, w, m.in_dim)?;
        Ok(n.with_values(tape.value(coef).as_slice().to_vec()))
    }
}

fn column(values: &[f64]) -> DenseMatrix {
    DenseMatrix::from_vec(values.len(), 1, values.to_vec()).expect("column shape")
}

/// Per-nonzero messages `weight_k · p[y_k]` reduced per target row.
fn edgewise(tape: &mut Tape, n: &Csr<f64>, p: Var, weights: Var, offsets: Arc<Vec<usize>>, agg: Reduce) -> Result<Var> {
    let rows = tape.gather_rows(p, Arc::new(n.col_indices().to_vec()))?;
    let weighted = tape.scale_rows(rows, weights)?;
    tape.segment_reduce(weighted, offsets, agg)
}

pub fn constants(tape: &mut Tape, h: &FeatureStore) -> VarMap {
    h.iter().map(|(r, m)| (r, tape.constant(m.clone()))).collect()
}

/// Runs one layer with `h` doubling as the recurrent input.
pub fn forward_layer(c: &Complex, spec: &LayerSpec, layer: usize, h: &FeatureStore, params: &ParamStore) -> Result<FeatureStore> {
    Engine::new(c).forward_layer(spec, layer, h, h, params)
}
