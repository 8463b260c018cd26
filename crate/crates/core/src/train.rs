//! Negative-sampling training with Adam.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, EntitySet};
use crate::model::tape::Tape;
use crate::model::{EntityStats, Model, ModelError};
use crate::query::{ComputationGraph, QueryInstance, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LossVariant {
    /// `−ln σ(γ − d⁺) − (1/k) Σ σ(d⁻ − γ)`
    Paper,
    /// `−ln σ(γ − d⁺) − (1/k) Σ ln σ(d⁻ − γ)`
    Standard,
}

impl LossVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::Paper => "paper",
            LossVariant::Standard => "standard",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(LossVariant::Paper),
            "standard" => Ok(LossVariant::Standard),
            other => Err(format!("unknown loss variant `{other}` (expected paper or standard)")),
        }
    }
}

impl From<LossVariant> for String {
    fn from(v: LossVariant) -> String {
        v.as_str().into()
    }
}

impl TryFrom<String> for LossVariant {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub negative_samples: usize,
    pub margin: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub loss_variant: LossVariant,
    /// Steps between logged loss means.
    pub log_every: usize,
    pub gradcheck_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
    /// Serial gradient computation. Results are identical either way.
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            learning_rate: 5e-3,
            negative_samples: 32,
            margin: 12.0,
            batch_size: 32,
            steps: 10_000,
            seed: 0,
            loss_variant: LossVariant::Paper,
            log_every: 100,
            gradcheck_every: None,
            checkpoint_every: None,
            deterministic: false,
        }
    }

    pub fn paper() -> Self {
        Self { learning_rate: 5e-5, negative_samples: 128, margin: 30.0, batch_size: 512, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.negative_samples == 0 {
            return bad("negative_samples must be at least 1".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no usable training queries (each needs a train-tier answer and {0} non-answers)")]
    NoQueries(usize),
    #[error("need {needed} negatives but only {available} non-answers exist")]
    InsufficientNegatives { needed: usize, available: usize },
    #[error("non-finite loss at step {step}\n{detail}")]
    NonFinite { step: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Loss value and its derivatives with respect to each distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub value: f64,
    pub d_positive: f64,
    pub d_negatives: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// The margin loss for one positive distance and `k` negative distances.
pub fn margin_loss(d_pos: f64, d_negs: &[f64], margin: f64, variant: LossVariant) -> LossTerms {
    let k = d_negs.len() as f64;
    let mut value = neg_log_sigmoid(margin - d_pos);
    let d_positive = sigmoid(d_pos - margin);
    let d_negatives = d_negs
        .iter()
        .map(|&d| {
            let s = sigmoid(d - margin);
            match variant {
                LossVariant::Paper => {
                    value -= s / k;
                    -s * (1.0 - s) / k
                }
                LossVariant::Standard => {
                    value += neg_log_sigmoid(d - margin) / k;
                    -(1.0 - s) / k
                }
            }
        })
        .collect();
    LossTerms { value, d_positive, d_negatives }
}

/// Loss of one (query, positive, negatives) triple and its gradient with
/// respect to every model parameter.
pub fn loss(
    model: &Model,
    cfg: &TrainConfig,
    graph: &ComputationGraph,
    positive: EntityId,
    negatives: &[EntityId],
) -> Result<(f64, Vec<f64>), TrainError> {
    let stats: HashMap<EntityId, EntityStats> = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|e| model.check_entity(e).map(|_| (e, EntityStats::new(model, e))))
        .collect::<Result<_, _>>()?;
    let mut grad = vec![0.0; model.params().len()];
    let value = accumulate_query(model, cfg, graph, positive, negatives, &stats, 1.0, &mut grad)?.value;
    Ok((value, grad))
}

#[allow(clippy::too_many_arguments)]
fn accumulate_query(
    model: &Model,
    cfg: &TrainConfig,
    graph: &ComputationGraph,
    positive: EntityId,
    negatives: &[EntityId],
    stats: &HashMap<EntityId, EntityStats>,
    scale: f64,
    grad: &mut [f64],
) -> Result<LossTerms, ModelError> {
    let tape = Tape::record(model, graph)?;
    let d_pos = tape.distance(&stats[&positive]);
    let d_negs: Vec<f64> = negatives.iter().map(|e| tape.distance(&stats[e])).collect();
    let terms = margin_loss(d_pos, &d_negs, cfg.margin, cfg.loss_variant);
    let mut seeds = vec![(&stats[&positive], positive, scale * terms.d_positive)];
    seeds.extend(negatives.iter().zip(&terms.d_negatives).map(|(e, d)| (&stats[e], *e, scale * d)));
    tape.backward(&seeds, grad);
    Ok(LossTerms { value: terms.value, d_positive: d_pos, d_negatives: d_negs })
}

/// `k` distinct entities drawn uniformly from `0..entity_count` minus `answers`.
pub fn sample_negatives<R: Rng + ?Sized>(
    entity_count: usize,
    answers: &EntitySet,
    k: usize,
    rng: &mut R,
) -> Result<Vec<EntityId>, TrainError> {
    let excluded = answers.iter().filter(|&&a| a < entity_count).count();
    let available = entity_count - excluded;
    if available < k {
        return Err(TrainError::InsufficientNegatives { needed: k, available });
    }
    if available >= 4 * k {
        let mut chosen = Vec::with_capacity(k);
        let mut seen = BTreeSet::new();
        while chosen.len() < k {
            let e = rng.gen_range(0..entity_count);
            if !answers.contains(&e) && seen.insert(e) {
                chosen.push(e);
            }
        }
        Ok(chosen)
    } else {
        let pool: Vec<EntityId> = (0..entity_count).filter(|e| !answers.contains(e)).collect();
        Ok(pool.choose_multiple(rng, k).copied().collect())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    /// Mean loss over the steps since the previous log line.
    Logged { step: usize, loss: f64 },
    /// Largest relative error between analytic and finite-difference partials.
    GradCheck { step: usize, max_relative_error: f64 },
    Checkpoint { step: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Batch loss at every step.
    pub losses: Vec<f64>,
    /// `(step, mean loss)` rows, one per logging window.
    pub logged: Vec<(usize, f64)>,
    pub skipped_queries: usize,
}

impl TrainReport {
    /// `step,loss` CSV of the logged rows.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "step,loss")?;
        for (step, loss) in &self.logged {
            writeln!(out, "{step},{loss}")?;
        }
        Ok(())
    }

    /// Mean of the batch losses in `range`.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.losses[range];
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

const CHUNKS: usize = 8;

struct Item<'q> {
    query: &'q QueryInstance,
    positive: EntityId,
    negatives: Vec<EntityId>,
}

/// Runs `cfg.steps` Adam steps. Each batch draws a structure uniformly from
/// those present, then a query of that structure, one train answer as the
/// positive and `k` negatives outside the train answers.
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    queries: &[QueryInstance],
    mut on_event: impl FnMut(&TrainEvent, &Model),
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let n = model.entity_count();
    let mut pools: BTreeMap<Option<Structure>, Vec<&QueryInstance>> = BTreeMap::new();
    let mut skipped = 0;
    for q in queries {
        let usable = !q.answers_train.is_empty() && n.saturating_sub(q.answers_train.len()) >= cfg.negative_samples;
        if usable {
            pools.entry(q.structure()).or_default().push(q);
        } else {
            skipped += 1;
        }
    }
    if pools.is_empty() {
        return Err(TrainError::NoQueries(cfg.negative_samples));
    }
    let pools: Vec<Vec<&QueryInstance>> = pools.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params().len(), cfg.learning_rate);
    let mut report = TrainReport { skipped_queries: skipped, ..Default::default() };
    let chunk_len = cfg.batch_size.div_ceil(CHUNKS);

    for step in 1..=cfg.steps {
        let batch: Vec<Item> = (0..cfg.batch_size)
            .map(|_| {
                let pool = &pools[rng.gen_range(0..pools.len())];
                let query = pool[rng.gen_range(0..pool.len())];
                let answers: Vec<EntityId> = query.answers_train.iter().copied().collect();
                let positive = answers[rng.gen_range(0..answers.len())];
                let negatives = sample_negatives(n, &query.answers_train, cfg.negative_samples, &mut rng)?;
                Ok(Item { query, positive, negatives })
            })
            .collect::<Result<_, TrainError>>()?;

        let needed: BTreeSet<EntityId> =
            batch.iter().flat_map(|it| std::iter::once(it.positive).chain(it.negatives.iter().copied())).collect();
        let stats: HashMap<EntityId, EntityStats> = needed.into_iter().map(|e| (e, EntityStats::new(model, e))).collect();

        let scale = 1.0 / cfg.batch_size as f64;
        let model_ref: &Model = model;
        let work = |chunk: &[Item]| -> Result<(Vec<f64>, Vec<LossTerms>), ModelError> {
            let mut grad = vec![0.0; model_ref.params().len()];
            let terms = chunk
                .iter()
                .map(|it| accumulate_query(model_ref, cfg, &it.query.graph, it.positive, &it.negatives, &stats, scale, &mut grad))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((grad, terms))
        };
        let parts: Vec<(Vec<f64>, Vec<LossTerms>)> = if cfg.deterministic {
            batch.chunks(chunk_len).map(work).collect::<Result<_, _>>()?
        } else {
            batch.par_chunks(chunk_len).map(work).collect::<Result<_, _>>()?
        };
        let mut grad = vec![0.0; model.params().len()];
        let mut batch_loss = 0.0;
        let mut all_terms = Vec::with_capacity(batch.len());
        for (g, terms) in parts {
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            for t in terms {
                batch_loss += t.value * scale;
                all_terms.push(t);
            }
        }

        if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite { step, detail: diagnose(model, &batch, &all_terms, batch_loss) });
        }
        if let Some(every) = cfg.gradcheck_every {
            if every > 0 && step % every == 0 {
                let it = &batch[0];
                let max_relative_error = spot_check(model, cfg, &it.query.graph, it.positive, &it.negatives, &mut rng)?;
                on_event(&TrainEvent::GradCheck { step, max_relative_error }, model);
            }
        }
        adam.step(model.params_mut(), &grad);
        report.losses.push(batch_loss);

        if step % cfg.log_every == 0 || step == cfg.steps {
            let start = report.logged.last().map_or(0, |(s, _)| *s);
            let loss = report.mean_loss(start..step);
            report.logged.push((step, loss));
            on_event(&TrainEvent::Logged { step, loss }, model);
        }
        if let Some(every) = cfg.checkpoint_every {
            if every > 0 && step % every == 0 {
                on_event(&TrainEvent::Checkpoint { step }, model);
            }
        }
    }
    Ok(report)
}

fn diagnose(model: &Model, batch: &[Item], terms: &[LossTerms], batch_loss: f64) -> String {
    let mut out = format!("batch loss: {batch_loss}\n");
    for (it, t) in batch.iter().zip(terms) {
        let bad = !t.value.is_finite() || !t.d_positive.is_finite() || t.d_negatives.iter().any(|d| !d.is_finite());
        if bad {
            out += &format!(
                "query {:?} anchors {:?} relations {:?}: loss {} d+ {} d- {:?}\n",
                it.query.structure().map(|s| s.as_str()),
                it.query.graph.anchors(),
                it.query.graph.relations(),
                t.value,
                t.d_positive,
                t.d_negatives
            );
        }
    }
    let params = model.params();
    let non_finite = params.iter().filter(|p| !p.is_finite()).count();
    let max_abs = params.iter().filter(|p| p.is_finite()).fold(0.0f64, |m, p| m.max(p.abs()));
    out += &format!("parameters: {} total, {non_finite} non-finite, max |p| = {max_abs:e}", params.len());
    out
}

/// Compares 16 random partials of the loss with central differences.
fn spot_check<R: Rng + ?Sized>(
    model: &Model,
    cfg: &TrainConfig,
    graph: &ComputationGraph,
    positive: EntityId,
    negatives: &[EntityId],
    rng: &mut R,
) -> Result<f64, TrainError> {
    let (_, grad) = loss(model, cfg, graph, positive, negatives)?;
    let picks: Vec<usize> = (0..16).map(|_| rng.gen_range(0..grad.len())).collect();
    let f = |m: &Model| loss(m, cfg, graph, positive, negatives).map_or(f64::NAN, |(v, _)| v);
    Ok(crate::gradcheck::check_indices(model, f, &grad, picks).max_relative_error)
}
