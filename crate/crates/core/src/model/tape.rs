//! Differentiable forward pass over a query's operator graph.
//!
//! Every operator records what its backward pass needs; gradients flow from
//! the distance terms back through the nodes in reverse creation order and
//! land in a flat gradient buffer laid out like the parameters.

use super::mlp::MlpCache;
use super::{softplus, sigmoid, Model, ModelError, UnionMode};
use crate::gamma::GammaVector;
use crate::kg::EntityId;
use crate::query::{dm_rewrite, dnf_rewrite, ComputationGraph, Node};
use crate::special::{digamma_pos, ln_gamma_pos, trigamma_pos};

/// Per-dimension `(α, β)` pair of vectors.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Gv {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Gv {
    fn zeros(m: usize) -> Self {
        Self { alpha: vec![0.0; m], beta: vec![0.0; m] }
    }

    pub(crate) fn concat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.alpha.len());
        x.extend_from_slice(&self.alpha);
        x.extend_from_slice(&self.beta);
        x
    }

    fn add_scaled(&mut self, other: &Gv, s: f64) {
        self.alpha.iter_mut().zip(&other.alpha).for_each(|(a, b)| *a += s * b);
        self.beta.iter_mut().zip(&other.beta).for_each(|(a, b)| *a += s * b);
    }

    pub fn to_vector(&self) -> GammaVector {
        GammaVector::from_parts(&self.alpha, &self.beta).expect("decoded parameters are positive")
    }
}

#[derive(Debug, Clone)]
enum Val {
    Single(Gv),
    Mixture { comps: Vec<Gv>, theta: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
enum Op {
    Entity(EntityId),
    Project { input: usize, relation: usize, caches: Vec<(MlpCache, Vec<f64>)> },
    Intersect { inputs: Vec<usize>, weights: Vec<Vec<f64>>, caches: Vec<MlpCache> },
    Union { inputs: Vec<usize>, caches: Vec<MlpCache> },
    Negate { input: usize },
    /// Negation of a complement: passes its source through unchanged.
    Restore { source: usize },
}

/// Which tape nodes make up the query embedding.
#[derive(Debug, Clone)]
enum Roots {
    Single(usize),
    Mixture(usize),
    Branches(Vec<usize>),
}

/// Decoded entity with the special-function values its distance terms need.
#[derive(Debug, Clone)]
pub struct EntityStats {
    pub(crate) alpha: Vec<f64>,
    pub(crate) beta: Vec<f64>,
    psi: Vec<f64>,
    psi1: Vec<f64>,
    lng: Vec<f64>,
    ln_beta: Vec<f64>,
    /// Derivative of the positive transform at the raw parameters, α block then β block.
    dsoft: Vec<f64>,
}

impl EntityStats {
    pub(crate) fn new(model: &Model, e: EntityId) -> Self {
        let m = model.config.dim;
        let floor = model.config.positivity_floor;
        let raw = model.entity_raw(e);
        let alpha: Vec<f64> = raw[..m].iter().map(|&x| softplus(x) + floor).collect();
        let beta: Vec<f64> = raw[m..].iter().map(|&x| softplus(x) + floor).collect();
        Self {
            psi: alpha.iter().map(|&a| digamma_pos(a)).collect(),
            psi1: alpha.iter().map(|&a| trigamma_pos(a)).collect(),
            lng: alpha.iter().map(|&a| ln_gamma_pos(a)).collect(),
            ln_beta: beta.iter().map(|b| b.ln()).collect(),
            dsoft: raw.iter().map(|&x| sigmoid(x)).collect(),
            alpha,
            beta,
        }
    }
}

/// Query-side special-function values for one [`Gv`].
#[derive(Debug, Clone)]
struct QueryStats {
    psi: Vec<f64>,
    lng: Vec<f64>,
    ln_beta: Vec<f64>,
}

impl QueryStats {
    fn new(g: &Gv) -> Self {
        Self {
            psi: g.alpha.iter().map(|&a| digamma_pos(a)).collect(),
            lng: g.alpha.iter().map(|&a| ln_gamma_pos(a)).collect(),
            ln_beta: g.beta.iter().map(|b| b.ln()).collect(),
        }
    }
}

fn kl_dim(e: &EntityStats, q: &Gv, qs: &QueryStats, j: usize) -> f64 {
    let (ae, be, aq, bq) = (e.alpha[j], e.beta[j], q.alpha[j], q.beta[j]);
    (ae - aq) * e.psi[j] - e.lng[j] + qs.lng[j] + aq * (e.ln_beta[j] - qs.ln_beta[j]) + ae * (bq - be) / be
}

/// `Σ_j w_j KL(e_j ‖ q_j)`.
fn kl_sum(e: &EntityStats, q: &Gv, qs: &QueryStats, w: Option<&[f64]>) -> f64 {
    (0..q.alpha.len()).map(|j| w.map_or(1.0, |w| w[j]) * kl_dim(e, q, qs, j)).sum()
}

/// Adds `scale · w_j · ∂KL/∂·` into the entity and query gradient buffers.
fn kl_sum_backward(
    e: &EntityStats,
    q: &Gv,
    qs: &QueryStats,
    w: Option<&[f64]>,
    scale: f64,
    de: &mut Gv,
    dq: &mut Gv,
) {
    for j in 0..q.alpha.len() {
        let s = scale * w.map_or(1.0, |w| w[j]);
        let (ae, be, aq, bq) = (e.alpha[j], e.beta[j], q.alpha[j], q.beta[j]);
        de.alpha[j] += s * ((ae - aq) * e.psi1[j] + bq / be - 1.0);
        de.beta[j] += s * (aq / be - ae * bq / (be * be));
        dq.alpha[j] += s * (qs.psi[j] - e.psi[j] + e.ln_beta[j] - qs.ln_beta[j]);
        dq.beta[j] += s * (ae / be - aq / bq);
    }
}

/// A recorded forward pass for one query.
pub(crate) struct Tape<'a> {
    model: &'a Model,
    ops: Vec<Op>,
    vals: Vec<Val>,
    roots: Roots,
    stats: Vec<Vec<QueryStats>>,
}

impl<'a> Tape<'a> {
    /// Embeds `graph` under the model's union mode.
    pub fn record(model: &'a Model, graph: &ComputationGraph) -> Result<Self, ModelError> {
        let mut tape = Tape { model, ops: Vec::new(), vals: Vec::new(), roots: Roots::Single(0), stats: Vec::new() };
        tape.roots = match model.config.union_mode {
            UnionMode::Mixture => {
                let root = tape.add_graph(graph)?;
                match tape.vals[root] {
                    Val::Single(_) => Roots::Single(root),
                    Val::Mixture { .. } => Roots::Mixture(root),
                }
            }
            UnionMode::Dm => Roots::Single(tape.add_graph(&dm_rewrite(graph))?),
            UnionMode::Dnf => {
                let branches = dnf_rewrite(graph);
                let roots = branches.iter().map(|b| tape.add_graph(b)).collect::<Result<Vec<_>, _>>()?;
                if roots.len() == 1 {
                    Roots::Single(roots[0])
                } else {
                    Roots::Branches(roots)
                }
            }
        };
        tape.stats = tape
            .root_ids()
            .iter()
            .map(|&r| match &tape.vals[r] {
                Val::Single(g) => vec![QueryStats::new(g)],
                Val::Mixture { comps, .. } => comps.iter().map(QueryStats::new).collect(),
            })
            .collect();
        Ok(tape)
    }

    fn root_ids(&self) -> Vec<usize> {
        match &self.roots {
            Roots::Single(r) | Roots::Mixture(r) => vec![*r],
            Roots::Branches(rs) => rs.clone(),
        }
    }

    fn push(&mut self, op: Op, val: Val) -> usize {
        self.ops.push(op);
        self.vals.push(val);
        self.vals.len() - 1
    }

    fn add_graph(&mut self, graph: &ComputationGraph) -> Result<usize, ModelError> {
        let mut ids = vec![usize::MAX; graph.nodes().len()];
        for &n in graph.topological_order() {
            ids[n] = match graph.node(n) {
                Node::Anchor(e) => self.entity(*e)?,
                Node::Projection { input, relation } => self.project(ids[*input], *relation)?,
                Node::Intersection(inputs) => {
                    let inputs: Vec<usize> = inputs.iter().map(|&i| ids[i]).collect();
                    self.intersect(inputs)?
                }
                Node::Union(inputs) => {
                    let inputs: Vec<usize> = inputs.iter().map(|&i| ids[i]).collect();
                    self.union(inputs)?
                }
                Node::Negation(input) => self.negate(ids[*input])?,
            };
        }
        Ok(ids[graph.target()])
    }

    fn entity(&mut self, e: EntityId) -> Result<usize, ModelError> {
        self.model.check_entity(e)?;
        let g = self.model.decode_gv(e);
        Ok(self.push(Op::Entity(e), Val::Single(g)))
    }

    fn single(&self, id: usize, what: &'static str) -> Result<&Gv, ModelError> {
        match &self.vals[id] {
            Val::Single(g) => Ok(g),
            Val::Mixture { .. } => Err(ModelError::Unsupported(what)),
        }
    }

    fn project(&mut self, input: usize, relation: usize) -> Result<usize, ModelError> {
        self.model.check_relation(relation)?;
        let run = |g: &Gv| {
            let (g, cache, pre) = self.model.project_gv(g, relation);
            (g, (cache, pre))
        };
        let (val, caches) = match &self.vals[input] {
            Val::Single(g) => {
                let (out, c) = run(g);
                (Val::Single(out), vec![c])
            }
            Val::Mixture { comps, theta } => {
                let (outs, caches): (Vec<Gv>, Vec<_>) = comps.iter().map(run).unzip();
                (Val::Mixture { comps: outs, theta: theta.clone() }, caches)
            }
        };
        Ok(self.push(Op::Project { input, relation, caches }, val))
    }

    fn attention(&self, inputs: &[usize], net: super::AttentionNet, what: &'static str) -> Result<(Vec<Vec<f64>>, Vec<MlpCache>), ModelError> {
        let gvs = inputs.iter().map(|&i| self.single(i, what)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.model.attention_gv(net, &gvs))
    }

    fn intersect(&mut self, inputs: Vec<usize>) -> Result<usize, ModelError> {
        let (w, caches) = self.attention(&inputs, super::AttentionNet::Intersection, "intersection of a mixture")?;
        let m = self.model.config.dim;
        let mut out = Gv::zeros(m);
        for (i, &id) in inputs.iter().enumerate() {
            let g = self.single(id, "")?;
            for j in 0..m {
                out.alpha[j] += w[i][j] * g.alpha[j];
                out.beta[j] += w[i][j] * g.beta[j];
            }
        }
        Ok(self.push(Op::Intersect { inputs, weights: w, caches }, Val::Single(out)))
    }

    fn union(&mut self, inputs: Vec<usize>) -> Result<usize, ModelError> {
        let (theta, caches) = self.attention(&inputs, super::AttentionNet::Union, "union of a mixture")?;
        let comps = inputs.iter().map(|&i| self.single(i, "").cloned()).collect::<Result<Vec<_>, _>>()?;
        Ok(self.push(Op::Union { inputs, caches }, Val::Mixture { comps, theta }))
    }

    fn negate(&mut self, input: usize) -> Result<usize, ModelError> {
        if let Op::Negate { input: source } = self.ops[input] {
            let val = self.vals[source].clone();
            return Ok(self.push(Op::Restore { source }, val));
        }
        let eps = self.model.config.elasticity;
        let g = self.single(input, "negation of a mixture")?;
        let out = Gv { alpha: g.alpha.iter().map(|a| 1.0 / a + eps).collect(), beta: g.beta.clone() };
        Ok(self.push(Op::Negate { input }, Val::Single(out)))
    }

    /// Distance from an entity to the query embedding.
    pub fn distance(&self, e: &EntityStats) -> f64 {
        self.distance_with_branch(e).0
    }

    fn distance_with_branch(&self, e: &EntityStats) -> (f64, usize) {
        let roots = self.root_ids();
        let mut best = (f64::INFINITY, 0);
        for (b, &r) in roots.iter().enumerate() {
            let d = match &self.vals[r] {
                Val::Single(g) => kl_sum(e, g, &self.stats[b][0], None),
                Val::Mixture { comps, theta } => comps
                    .iter()
                    .zip(theta)
                    .zip(&self.stats[b])
                    .map(|((c, w), s)| kl_sum(e, c, s, Some(w)))
                    .sum(),
            };
            // NaN distances win so that they surface in the loss
            if d < best.0 || d.is_nan() && !best.0.is_nan() {
                best = (d, b);
            }
        }
        best
    }

    pub fn embedding(&self) -> super::QueryEmbedding {
        use super::QueryEmbedding;
        match &self.roots {
            Roots::Single(r) => QueryEmbedding::Single(self.vector_at(*r)),
            Roots::Mixture(r) => {
                let Val::Mixture { comps, theta } = &self.vals[*r] else { unreachable!() };
                let comps = comps.iter().map(Gv::to_vector).collect();
                QueryEmbedding::Mixture(
                    crate::gamma::mixture_union(comps, theta.clone()).expect("attention weights lie on the simplex"),
                )
            }
            Roots::Branches(rs) => QueryEmbedding::DnfBranches(rs.iter().map(|&r| self.vector_at(r)).collect()),
        }
    }

    fn vector_at(&self, id: usize) -> GammaVector {
        match &self.ops[id] {
            Op::Negate { input } => crate::gamma::negate(&self.vector_at(*input), self.model.config.elasticity),
            Op::Restore { source } => self.vector_at(*source),
            _ => match &self.vals[id] {
                Val::Single(g) => g.to_vector(),
                Val::Mixture { .. } => unreachable!("mixtures only appear at the root"),
            },
        }
    }

    /// Backpropagates `Σ_i coeff_i · distance(entity_i)` into `grad`.
    pub fn backward(&self, terms: &[(&EntityStats, EntityId, f64)], grad: &mut [f64]) {
        let m = self.model.config.dim;
        let mut grads: Vec<Option<GradVal>> = vec![None; self.vals.len()];
        for &(e, id, coeff) in terms {
            if coeff == 0.0 {
                continue;
            }
            let (_, branch) = self.distance_with_branch(e);
            let root = self.root_ids()[branch];
            let mut de = Gv::zeros(m);
            let slot = grads[root].get_or_insert_with(|| GradVal::zeros_like(&self.vals[root]));
            match (&self.vals[root], slot) {
                (Val::Single(g), GradVal::Single(dq)) => {
                    kl_sum_backward(e, g, &self.stats[branch][0], None, coeff, &mut de, dq)
                }
                (Val::Mixture { comps, theta }, GradVal::Mixture { comps: dcs, theta: dth }) => {
                    for (i, c) in comps.iter().enumerate() {
                        let s = &self.stats[branch][i];
                        kl_sum_backward(e, c, s, Some(&theta[i]), coeff, &mut de, &mut dcs[i]);
                        for j in 0..m {
                            dth[i][j] += coeff * kl_dim(e, c, s, j);
                        }
                    }
                }
                _ => unreachable!(),
            }
            self.model.entity_backward(id, &e.dsoft, &de, grad);
        }
        self.propagate(grads, grad);
    }

    fn propagate(&self, mut grads: Vec<Option<GradVal>>, grad: &mut [f64]) {
        let model = self.model;
        for id in (0..self.ops.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.ops[id] {
                Op::Entity(e) => {
                    let GradVal::Single(dg) = g else { unreachable!() };
                    let raw = model.entity_raw(*e);
                    let dsoft: Vec<f64> = raw.iter().map(|&x| sigmoid(x)).collect();
                    model.entity_backward(*e, &dsoft, &dg, grad);
                }
                Op::Project { input, relation, caches } => {
                    let dins: Vec<Gv> = match g {
                        GradVal::Single(dg) => vec![model.project_backward(&caches[0], *relation, &dg, grad)],
                        GradVal::Mixture { comps, theta } => {
                            let dins = comps
                                .iter()
                                .zip(caches)
                                .map(|(dg, c)| model.project_backward(c, *relation, dg, grad))
                                .collect();
                            accumulate(&mut grads[*input], || GradVal::zeros_like(&self.vals[*input]), |slot| {
                                let GradVal::Mixture { theta: t, .. } = slot else { unreachable!() };
                                add_matrix(t, &theta);
                            });
                            dins
                        }
                    };
                    let input_val = &self.vals[*input];
                    accumulate(&mut grads[*input], || GradVal::zeros_like(input_val), |slot| match slot {
                        GradVal::Single(s) => s.add_scaled(&dins[0], 1.0),
                        GradVal::Mixture { comps, .. } => comps.iter_mut().zip(&dins).for_each(|(s, d)| s.add_scaled(d, 1.0)),
                    });
                }
                Op::Intersect { inputs, weights: w, caches } => {
                    let GradVal::Single(dg) = g else { unreachable!() };
                    let gvs: Vec<&Gv> = inputs.iter().map(|&i| self.single(i, "").unwrap()).collect();
                    // ∂out/∂w and the direct path through the convex combination
                    let dw: Vec<Vec<f64>> = gvs
                        .iter()
                        .map(|g| (0..g.alpha.len()).map(|j| dg.alpha[j] * g.alpha[j] + dg.beta[j] * g.beta[j]).collect())
                        .collect();
                    let dins = model.attention_backward(super::AttentionNet::Intersection, w, &dw, caches, grad);
                    for (i, &inp) in inputs.iter().enumerate() {
                        let mut d = dins[i].clone();
                        for j in 0..dg.alpha.len() {
                            d.alpha[j] += w[i][j] * dg.alpha[j];
                            d.beta[j] += w[i][j] * dg.beta[j];
                        }
                        accumulate(&mut grads[inp], || GradVal::zeros_like(&self.vals[inp]), |slot| {
                            let GradVal::Single(s) = slot else { unreachable!() };
                            s.add_scaled(&d, 1.0);
                        });
                    }
                }
                Op::Union { inputs, caches } => {
                    let GradVal::Mixture { comps: dcs, theta: dth } = g else { unreachable!() };
                    let Val::Mixture { theta, .. } = &self.vals[id] else { unreachable!() };
                    let dins = model.attention_backward(super::AttentionNet::Union, theta, &dth, caches, grad);
                    for (i, &inp) in inputs.iter().enumerate() {
                        let mut d = dins[i].clone();
                        d.add_scaled(&dcs[i], 1.0);
                        accumulate(&mut grads[inp], || GradVal::zeros_like(&self.vals[inp]), |slot| {
                            let GradVal::Single(s) = slot else { unreachable!() };
                            s.add_scaled(&d, 1.0);
                        });
                    }
                }
                Op::Negate { input } => {
                    let GradVal::Single(dg) = g else { unreachable!() };
                    let src = self.single(*input, "").unwrap();
                    let d = Gv {
                        alpha: dg.alpha.iter().zip(&src.alpha).map(|(d, a)| -d / (a * a)).collect(),
                        beta: dg.beta.clone(),
                    };
                    accumulate(&mut grads[*input], || GradVal::zeros_like(&self.vals[*input]), |slot| {
                        let GradVal::Single(s) = slot else { unreachable!() };
                        s.add_scaled(&d, 1.0);
                    });
                }
                Op::Restore { source } => {
                    let src_val = &self.vals[*source];
                    accumulate(&mut grads[*source], || GradVal::zeros_like(src_val), |slot| slot.add(&g));
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum GradVal {
    Single(Gv),
    Mixture { comps: Vec<Gv>, theta: Vec<Vec<f64>> },
}

impl GradVal {
    fn zeros_like(v: &Val) -> Self {
        match v {
            Val::Single(g) => GradVal::Single(Gv::zeros(g.alpha.len())),
            Val::Mixture { comps, theta } => GradVal::Mixture {
                comps: comps.iter().map(|c| Gv::zeros(c.alpha.len())).collect(),
                theta: theta.iter().map(|r| vec![0.0; r.len()]).collect(),
            },
        }
    }

    fn add(&mut self, other: &GradVal) {
        match (self, other) {
            (GradVal::Single(a), GradVal::Single(b)) => a.add_scaled(b, 1.0),
            (GradVal::Mixture { comps: a, theta: ta }, GradVal::Mixture { comps: b, theta: tb }) => {
                a.iter_mut().zip(b).for_each(|(x, y)| x.add_scaled(y, 1.0));
                add_matrix(ta, tb);
            }
            _ => unreachable!("gradient shapes follow value shapes"),
        }
    }
}

fn add_matrix(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
    a.iter_mut().zip(b).for_each(|(x, y)| x.iter_mut().zip(y).for_each(|(p, q)| *p += q));
}

fn accumulate(slot: &mut Option<GradVal>, init: impl FnOnce() -> GradVal, f: impl FnOnce(&mut GradVal)) {
    f(slot.get_or_insert_with(init));
}
