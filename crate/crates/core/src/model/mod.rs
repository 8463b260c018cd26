//! Learnable Gamma embeddings: entity tables, a relation-conditioned
//! projection network and two attention networks, all stored in one flat
//! parameter vector.

mod checkpoint;
mod mlp;
pub(crate) mod tape;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamma::{mixture_distance, vector_distance, GammaError, GammaVector, MixtureEmbedding};
use crate::kg::{EntityId, RelationId};
use crate::query::ComputationGraph;
use mlp::{Mlp, MlpCache};
use tape::{Gv, Tape};

pub use checkpoint::{CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::EntityStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum UnionMode {
    /// Unions become Gamma mixtures.
    Mixture,
    /// Unions are moved to the last step and scored by the closest branch.
    Dnf,
    /// Unions are rewritten with De Morgan's law.
    Dm,
}

impl UnionMode {
    pub const ALL: [UnionMode; 3] = [UnionMode::Mixture, UnionMode::Dnf, UnionMode::Dm];

    pub fn as_str(self) -> &'static str {
        match self {
            UnionMode::Mixture => "mm",
            UnionMode::Dnf => "dnf",
            UnionMode::Dm => "dm",
        }
    }
}

impl fmt::Display for UnionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mm" | "mixture" => Ok(UnionMode::Mixture),
            "dnf" => Ok(UnionMode::Dnf),
            "dm" => Ok(UnionMode::Dm),
            other => Err(format!("unknown union mode `{other}` (expected mm, dnf or dm)")),
        }
    }
}

impl From<UnionMode> for String {
    fn from(m: UnionMode) -> String {
        m.as_str().to_string()
    }
}

impl TryFrom<String> for UnionMode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of Gamma dimensions `m`.
    pub dim: usize,
    pub hidden: usize,
    /// Width of each relation embedding.
    pub relation_dim: usize,
    pub elasticity: f64,
    pub union_mode: UnionMode,
    pub positivity_floor: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 32 dimensions, hidden width 64.
    pub fn desk() -> Self {
        Self::with_dim(32, 64)
    }

    /// Table-scale defaults: 800 dimensions; the hidden width of 1600 is ours.
    pub fn paper() -> Self {
        Self::with_dim(800, 1600)
    }

    pub fn with_dim(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            relation_dim: 2 * dim,
            elasticity: 0.05,
            union_mode: UnionMode::Mixture,
            positivity_floor: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.dim == 0 || self.hidden == 0 || self.relation_dim == 0 {
            return bad("dim, hidden and relation_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.elasticity) {
            return bad(format!("elasticity {} outside [0, 1)", self.elasticity));
        }
        if !(self.positivity_floor > 0.0 && self.positivity_floor <= 1e-2) {
            return bad(format!("positivity_floor {} outside (0, 0.01]", self.positivity_floor));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("entity {id} out of range (model has {count})")]
    EntityOutOfRange { id: EntityId, count: usize },
    #[error("relation {id} out of range (model has {count})")]
    RelationOutOfRange { id: RelationId, count: usize },
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
    #[error("attention needs at least one input")]
    NoInputs,
    #[error(transparent)]
    Gamma(#[from] GammaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionNet {
    Intersection,
    Union,
}

/// Embedding of a whole query.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryEmbedding {
    Single(GammaVector),
    Mixture(MixtureEmbedding),
    DnfBranches(Vec<GammaVector>),
}

impl QueryEmbedding {
    pub fn dim(&self) -> usize {
        match self {
            QueryEmbedding::Single(v) => v.dim(),
            QueryEmbedding::Mixture(m) => m.dim(),
            QueryEmbedding::DnfBranches(b) => b[0].dim(),
        }
    }

    /// Summed differential entropy over dimensions. Mixtures use θ-weighted
    /// component entropies; DNF branches are averaged.
    pub fn entropy(&self) -> f64 {
        match self {
            QueryEmbedding::Single(v) => v.entropy(),
            QueryEmbedding::Mixture(m) => m.entropy(),
            QueryEmbedding::DnfBranches(b) => b.iter().map(GammaVector::entropy).sum::<f64>() / b.len() as f64,
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    relations: usize,
    projection: Mlp,
    intersection: Mlp,
    union: Mlp,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig, entity_count: usize, relation_count: usize) -> Self {
        let m = cfg.dim;
        let relations = entity_count * 2 * m;
        let projection = Mlp::new(relations + relation_count * cfg.relation_dim, 2 * m + cfg.relation_dim, cfg.hidden, 2 * m);
        let intersection = Mlp::new(projection.offset + projection.len(), 2 * m, cfg.hidden, m);
        let union = Mlp::new(intersection.offset + intersection.len(), 2 * m, cfg.hidden, m);
        let total = union.offset + union.len();
        Self { relations, projection, intersection, union, total }
    }
}

/// Model configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    entity_count: usize,
    relation_count: usize,
    layout: Layout,
    params: Vec<f64>,
}

impl Model {
    /// Fresh model with seeded random initialisation.
    pub fn new(config: ModelConfig, entity_count: usize, relation_count: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config, entity_count, relation_count);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // softplus maps [-1, 2] to roughly [0.31, 2.13]
        for p in &mut params[..layout.relations] {
            *p = rng.gen_range(-1.0..2.0);
        }
        for p in &mut params[layout.relations..layout.projection.offset] {
            *p = rng.gen_range(-1.0..1.0);
        }
        for net in [layout.projection, layout.intersection, layout.union] {
            net.init(&mut params, &mut rng);
        }
        Ok(Self { config, entity_count, relation_count, layout, params })
    }

    /// Wraps an existing parameter vector; its length must match the layout.
    pub fn from_params(
        config: ModelConfig,
        entity_count: usize,
        relation_count: usize,
        params: Vec<f64>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config, entity_count, relation_count);
        if params.len() != layout.total {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, entity_count, relation_count, layout, params })
    }

    /// Number of scalar parameters for a vocabulary size and config.
    pub fn param_count(config: &ModelConfig, entity_count: usize, relation_count: usize) -> usize {
        Layout::new(config, entity_count, relation_count).total
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes settings that have no parameters (elasticity, union mode).
    pub fn set_elasticity(&mut self, elasticity: f64) -> Result<(), ModelError> {
        let mut cfg = self.config.clone();
        cfg.elasticity = elasticity;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    pub fn set_union_mode(&mut self, mode: UnionMode) {
        self.config.union_mode = mode;
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Range of the raw entity table inside [`Model::params`].
    pub fn entity_block(&self) -> std::ops::Range<usize> {
        0..self.layout.relations
    }

    pub(crate) fn check_entity(&self, e: EntityId) -> Result<(), ModelError> {
        if e < self.entity_count {
            Ok(())
        } else {
            Err(ModelError::EntityOutOfRange { id: e, count: self.entity_count })
        }
    }

    pub(crate) fn check_relation(&self, r: RelationId) -> Result<(), ModelError> {
        if r < self.relation_count {
            Ok(())
        } else {
            Err(ModelError::RelationOutOfRange { id: r, count: self.relation_count })
        }
    }

    pub(crate) fn entity_raw(&self, e: EntityId) -> &[f64] {
        let w = 2 * self.config.dim;
        &self.params[e * w..(e + 1) * w]
    }

    fn positive(&self, x: f64) -> f64 {
        softplus(x) + self.config.positivity_floor
    }

    pub(crate) fn decode_gv(&self, e: EntityId) -> Gv {
        let m = self.config.dim;
        let raw = self.entity_raw(e);
        Gv {
            alpha: raw[..m].iter().map(|&x| self.positive(x)).collect(),
            beta: raw[m..].iter().map(|&x| self.positive(x)).collect(),
        }
    }

    pub(crate) fn entity_backward(&self, e: EntityId, dsoft: &[f64], de: &Gv, grad: &mut [f64]) {
        let m = self.config.dim;
        let row = e * 2 * m;
        for j in 0..m {
            grad[row + j] += de.alpha[j] * dsoft[j];
            grad[row + m + j] += de.beta[j] * dsoft[m + j];
        }
    }

    fn relation_row(&self, r: RelationId) -> std::ops::Range<usize> {
        let start = self.layout.relations + r * self.config.relation_dim;
        start..start + self.config.relation_dim
    }

    pub(crate) fn project_gv(&self, input: &Gv, r: RelationId) -> (Gv, MlpCache, Vec<f64>) {
        let m = self.config.dim;
        let mut x = input.concat();
        x.extend_from_slice(&self.params[self.relation_row(r)]);
        let (pre, cache) = self.layout.projection.forward(&self.params, x);
        let out = Gv {
            alpha: pre[..m].iter().map(|&x| self.positive(x)).collect(),
            beta: pre[m..].iter().map(|&x| self.positive(x)).collect(),
        };
        (out, cache, pre)
    }

    pub(crate) fn project_backward(
        &self,
        (cache, pre): &(MlpCache, Vec<f64>),
        r: RelationId,
        dout: &Gv,
        grad: &mut [f64],
    ) -> Gv {
        let m = self.config.dim;
        let dpre: Vec<f64> = dout
            .alpha
            .iter()
            .chain(&dout.beta)
            .zip(pre)
            .map(|(d, &p)| d * sigmoid(p))
            .collect();
        let dx = self.layout.projection.backward(&self.params, cache, &dpre, grad);
        for (g, d) in grad[self.relation_row(r)].iter_mut().zip(&dx[2 * m..]) {
            *g += d;
        }
        Gv { alpha: dx[..m].to_vec(), beta: dx[m..2 * m].to_vec() }
    }

    fn net(&self, net: AttentionNet) -> Mlp {
        match net {
            AttentionNet::Intersection => self.layout.intersection,
            AttentionNet::Union => self.layout.union,
        }
    }

    /// Per-dimension softmax over inputs of the network's scores; `k × m`.
    pub(crate) fn attention_gv(&self, net: AttentionNet, inputs: &[&Gv]) -> (Vec<Vec<f64>>, Vec<MlpCache>) {
        let mlp = self.net(net);
        let (scores, caches): (Vec<Vec<f64>>, Vec<MlpCache>) =
            inputs.iter().map(|g| mlp.forward(&self.params, g.concat())).unzip();
        let m = self.config.dim;
        let mut w = vec![vec![0.0; m]; inputs.len()];
        for j in 0..m {
            let max = scores.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = scores.iter().map(|s| (s[j] - max).exp()).sum();
            for (i, s) in scores.iter().enumerate() {
                w[i][j] = (s[j] - max).exp() / total;
            }
        }
        (w, caches)
    }

    /// Gradient of the attention weights w.r.t. their inputs, given `∂/∂w`.
    pub(crate) fn attention_backward(
        &self,
        net: AttentionNet,
        w: &[Vec<f64>],
        dw: &[Vec<f64>],
        caches: &[MlpCache],
        grad: &mut [f64],
    ) -> Vec<Gv> {
        let m = self.config.dim;
        let mlp = self.net(net);
        let dot: Vec<f64> = (0..m).map(|j| w.iter().zip(dw).map(|(w, d)| w[j] * d[j]).sum()).collect();
        w.iter()
            .zip(dw)
            .zip(caches)
            .map(|((wi, dwi), cache)| {
                let ds: Vec<f64> = (0..m).map(|j| wi[j] * (dwi[j] - dot[j])).collect();
                let dx = mlp.backward(&self.params, cache, &ds, grad);
                Gv { alpha: dx[..m].to_vec(), beta: dx[m..].to_vec() }
            })
            .collect()
    }

    pub fn decode_entity(&self, e: EntityId) -> Result<GammaVector, ModelError> {
        self.check_entity(e)?;
        Ok(self.decode_gv(e).to_vector())
    }

    fn gv_of(&self, v: &GammaVector) -> Result<Gv, ModelError> {
        if v.dim() != self.config.dim {
            return Err(GammaError::DimensionMismatch { expected: self.config.dim, found: v.dim() }.into());
        }
        Ok(Gv { alpha: v.alphas().collect(), beta: v.betas().collect() })
    }

    /// Relation projection of a single vector.
    pub fn project(&self, input: &GammaVector, r: RelationId) -> Result<GammaVector, ModelError> {
        self.check_relation(r)?;
        Ok(self.project_gv(&self.gv_of(input)?, r).0.to_vector())
    }

    pub fn attention_weights(&self, net: AttentionNet, inputs: &[GammaVector]) -> Result<Vec<Vec<f64>>, ModelError> {
        if inputs.is_empty() {
            return Err(ModelError::NoInputs);
        }
        let gvs = inputs.iter().map(|v| self.gv_of(v)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&Gv> = gvs.iter().collect();
        Ok(self.attention_gv(net, &refs).0)
    }

    /// Embeds a query, rewriting unions first under the DNF and DM modes.
    pub fn embed_query(&self, graph: &ComputationGraph) -> Result<QueryEmbedding, ModelError> {
        Ok(Tape::record(self, graph)?.embedding())
    }

    /// Distance from an entity to a query embedding.
    pub fn score(&self, e: EntityId, q: &QueryEmbedding) -> Result<f64, ModelError> {
        let v = self.decode_entity(e)?;
        Ok(match q {
            QueryEmbedding::Single(qv) => vector_distance(&v, qv)?,
            QueryEmbedding::Mixture(mx) => mixture_distance(&v, mx)?,
            QueryEmbedding::DnfBranches(bs) => {
                let mut best = f64::INFINITY;
                for b in bs {
                    best = best.min(vector_distance(&v, b)?);
                }
                best
            }
        })
    }

    /// `Σ c · distance(e, q)` over `terms = [(e, c)]` and its gradient with
    /// respect to every parameter.
    pub fn distance_gradient(&self, graph: &ComputationGraph, terms: &[(EntityId, f64)]) -> Result<(f64, Vec<f64>), ModelError> {
        for &(e, _) in terms {
            self.check_entity(e)?;
        }
        let tape = Tape::record(self, graph)?;
        let stats: Vec<EntityStats> = terms.iter().map(|&(e, _)| EntityStats::new(self, e)).collect();
        let value = stats.iter().zip(terms).map(|(s, &(_, c))| c * tape.distance(s)).sum();
        let with: Vec<(&EntityStats, EntityId, f64)> = stats.iter().zip(terms).map(|(s, &(e, c))| (s, e, c)).collect();
        let mut grad = vec![0.0; self.params.len()];
        tape.backward(&with, &mut grad);
        Ok((value, grad))
    }

    /// Decoded entities with cached special-function values, for bulk scoring.
    pub fn entity_stats(&self) -> Vec<EntityStats> {
        (0..self.entity_count).map(|e| EntityStats::new(self, e)).collect()
    }

    /// Distances from every entity to the query, using precomputed stats.
    pub fn score_all(&self, graph: &ComputationGraph, stats: &[EntityStats]) -> Result<Vec<f64>, ModelError> {
        let tape = Tape::record(self, graph)?;
        Ok(stats.iter().map(|s| tape.distance(s)).collect())
    }
}
