use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::{ground_truth_answers, ComputationGraph, QueryExpr, QueryInstance, Structure};
use crate::kg::{EntityId, GraphSplits, KnowledgeGraph, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Queries with more answers than this on the sampling graph are rejected.
    pub answer_cap: usize,
    pub max_attempts: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { answer_cap: 100, max_attempts: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("graph has no edges to sample from")]
    EmptyGraph,
    #[error("no acceptable {structure} query after {attempts} attempts")]
    Exhausted { structure: Structure, attempts: usize },
}

/// Samples one query whose answers are computed on `kg` for all three tiers.
pub fn sample_query<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    structure: Structure,
    rng: &mut R,
    opts: &SampleOptions,
) -> Result<QueryInstance, SampleError> {
    let targets = kg.entities_with_incoming();
    if targets.is_empty() {
        return Err(SampleError::EmptyGraph);
    }
    for _ in 0..opts.max_attempts {
        let Some(graph) = propose(kg, &targets, structure, rng) else { continue };
        let answers = ground_truth_answers(kg, &graph).expect("sampled graph is valid");
        if answers.is_empty() || answers.len() > opts.answer_cap {
            continue;
        }
        return Ok(QueryInstance {
            graph,
            answers_train: answers.clone(),
            answers_valid: answers.clone(),
            answers_test: answers,
        });
    }
    Err(SampleError::Exhausted { structure, attempts: opts.max_attempts })
}

/// Samples on the cumulative graph of `split` and records answers on all
/// three graphs. For valid and test the query must have at least one
/// non-trivial answer, i.e. one that needs an edge first added in `split`.
pub fn sample_query_on<R: Rng + ?Sized>(
    splits: &GraphSplits,
    split: Split,
    structure: Structure,
    rng: &mut R,
    opts: &SampleOptions,
) -> Result<QueryInstance, SampleError> {
    let kg = splits.graph(split);
    let targets = kg.entities_with_incoming();
    if targets.is_empty() {
        return Err(SampleError::EmptyGraph);
    }
    for _ in 0..opts.max_attempts {
        let Some(graph) = propose(kg, &targets, structure, rng) else { continue };
        let on_split = ground_truth_answers(kg, &graph).expect("sampled graph is valid");
        if on_split.is_empty() || on_split.len() > opts.answer_cap {
            continue;
        }
        let answer = |s: Split| {
            if s == split {
                on_split.clone()
            } else {
                ground_truth_answers(splits.graph(s), &graph).expect("sampled graph is valid")
            }
        };
        let q = QueryInstance {
            answers_train: answer(Split::Train),
            answers_valid: answer(Split::Valid),
            answers_test: answer(Split::Test),
            graph,
        };
        if split != Split::Train && q.non_trivial_answers(split).is_empty() {
            continue;
        }
        return Ok(q);
    }
    Err(SampleError::Exhausted { structure, attempts: opts.max_attempts })
}

/// Draws up to `count` distinct queries of one structure. Stops early when
/// the sampler is exhausted, so small graphs yield fewer queries.
pub fn sample_distinct<R: Rng + ?Sized>(
    splits: &GraphSplits,
    split: Split,
    structure: Structure,
    count: usize,
    rng: &mut R,
    opts: &SampleOptions,
) -> Result<Vec<QueryInstance>, SampleError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut misses = 0;
    while out.len() < count {
        let q = match sample_query_on(splits, split, structure, rng, opts) {
            Ok(q) => q,
            Err(e) if out.is_empty() => return Err(e),
            Err(_) => break,
        };
        if seen.insert(q.graph.clone()) {
            out.push(q);
            misses = 0;
        } else {
            misses += 1;
            if misses >= opts.max_attempts {
                break;
            }
        }
    }
    Ok(out)
}

/// Query sets for the three splits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Workload {
    pub train: Vec<QueryInstance>,
    pub valid: Vec<QueryInstance>,
    pub test: Vec<QueryInstance>,
}

impl Workload {
    pub fn split(&self, split: Split) -> &[QueryInstance] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Samples `train_per_structure` training queries for each training
/// structure and `eval_per_structure` valid and test queries for every
/// structure. Structures the graph cannot produce are left out.
pub fn sample_workload<R: Rng + ?Sized>(
    splits: &GraphSplits,
    train_per_structure: usize,
    eval_per_structure: usize,
    rng: &mut R,
    opts: &SampleOptions,
) -> Workload {
    let mut draw = |split: Split, structures: &[Structure], count: usize| -> Vec<QueryInstance> {
        structures
            .iter()
            .flat_map(|&s| sample_distinct(splits, split, s, count, rng, opts).unwrap_or_default())
            .collect()
    };
    Workload {
        train: draw(Split::Train, &Structure::TRAINING, train_per_structure),
        valid: draw(Split::Valid, &Structure::ALL, eval_per_structure),
        test: draw(Split::Test, &Structure::ALL, eval_per_structure),
    }
}


fn propose<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    targets: &[EntityId],
    structure: Structure,
    rng: &mut R,
) -> Option<ComputationGraph> {
    let target = *targets.choose(rng)?;
    let expr = walk_back(&structure.template(), target, kg, targets, rng)?;
    if !branches_distinct(&expr) {
        return None;
    }
    let mut graph = ComputationGraph::from_expr(&expr);
    graph.structure = Some(structure);
    Some(graph)
}

/// Instantiates `template` backwards from `target`: each projection picks an
/// incoming edge of its current target. Negated branches start from a fresh
/// random target.
fn walk_back<R: Rng + ?Sized>(
    template: &QueryExpr,
    target: EntityId,
    kg: &KnowledgeGraph,
    targets: &[EntityId],
    rng: &mut R,
) -> Option<QueryExpr> {
    Some(match template {
        QueryExpr::Anchor(_) => QueryExpr::Anchor(target),
        QueryExpr::Project(child, _) => {
            let relation = *kg.incoming_relations(target).choose(rng)?;
            let head = *kg.heads(target, relation).choose(rng)?;
            QueryExpr::Project(Box::new(walk_back(child, head, kg, targets, rng)?), relation)
        }
        QueryExpr::Negate(child) => {
            let fresh = *targets.choose(rng)?;
            QueryExpr::Negate(Box::new(walk_back(child, fresh, kg, targets, rng)?))
        }
        QueryExpr::Intersect(cs) => QueryExpr::Intersect(
            cs.iter().map(|c| walk_back(c, target, kg, targets, rng)).collect::<Option<_>>()?,
        ),
        QueryExpr::Union(cs) => QueryExpr::Union(
            cs.iter().map(|c| walk_back(c, target, kg, targets, rng)).collect::<Option<_>>()?,
        ),
    })
}

fn branches_distinct(e: &QueryExpr) -> bool {
    match e {
        QueryExpr::Anchor(_) => true,
        QueryExpr::Project(c, _) | QueryExpr::Negate(c) => branches_distinct(c),
        QueryExpr::Intersect(cs) | QueryExpr::Union(cs) => {
            let unique: HashSet<&QueryExpr> = cs.iter().collect();
            unique.len() == cs.len() && cs.iter().all(branches_distinct)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use crate::query::tests::naive_answers;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_kg(entities: usize, relations: usize, edges: usize, seed: u64) -> KnowledgeGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = (0..edges).map(|_| {
            Triple::new(rng.gen_range(0..entities), rng.gen_range(0..relations), rng.gen_range(0..entities))
        });
        KnowledgeGraph::new(entities, relations, triples).unwrap()
    }

    #[test]
    fn one_hop_exists_on_single_edge() {
        let kg = KnowledgeGraph::new(2, 1, [Triple::new(0, 0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = sample_query(&kg, Structure::P1, &mut rng, &SampleOptions::default()).unwrap();
        assert_eq!(q.graph.anchors(), vec![0]);
        assert_eq!(q.answers_test, [1].into());
    }

    #[test]
    fn same_seed_same_query() {
        let kg = random_kg(60, 4, 400, 3);
        for s in Structure::ALL {
            let a = sample_query(&kg, s, &mut ChaCha8Rng::seed_from_u64(9), &SampleOptions::default());
            let b = sample_query(&kg, s, &mut ChaCha8Rng::seed_from_u64(9), &SampleOptions::default());
            assert_eq!(a, b, "{s}");
        }
    }

    #[test]
    fn exhaustion_is_reported() {
        let kg = KnowledgeGraph::new(3, 1, [Triple::new(0, 0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // only one incoming edge exists, so two distinct branches are impossible
        let err = sample_query(&kg, Structure::I2, &mut rng, &SampleOptions { answer_cap: 100, max_attempts: 50 });
        assert_eq!(err, Err(SampleError::Exhausted { structure: Structure::I2, attempts: 50 }));
        let empty = KnowledgeGraph::new(3, 1, []).unwrap();
        assert_eq!(
            sample_query(&empty, Structure::P1, &mut rng, &SampleOptions::default()),
            Err(SampleError::EmptyGraph)
        );
    }

    #[test]
    fn samples_agree_with_naive_evaluator() {
        let kg = random_kg(200, 5, 1500, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = SampleOptions::default();
        for s in Structure::ALL {
            for _ in 0..40 {
                let q = sample_query(&kg, s, &mut rng, &opts).unwrap();
                assert_eq!(q.structure(), Some(s));
                assert!(!q.answers_test.is_empty() && q.answers_test.len() <= opts.answer_cap);
                assert_eq!(naive_answers(&kg, &q.graph.to_expr()), q.answers_test);
            }
        }
    }

    #[test]
    fn split_sampling_has_non_trivial_answers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let all: Vec<Triple> = (0..1200)
            .map(|_| Triple::new(rng.gen_range(0..150), rng.gen_range(0..4), rng.gen_range(0..150)))
            .collect();
        let splits = GraphSplits::from_edges(150, 4, &all[..1000], &all[1000..1100], &all[1100..]).unwrap();
        for s in [Structure::P1, Structure::P2, Structure::I2, Structure::In2, Structure::Up] {
            let q = sample_query_on(&splits, Split::Test, s, &mut rng, &SampleOptions::default()).unwrap();
            let hard = q.non_trivial_answers(Split::Test);
            assert!(!hard.is_empty());
            assert!(hard.is_disjoint(&q.answers_valid));
            if !s.has_negation() {
                assert!(q.answers_train.is_subset(&q.answers_valid));
                assert!(q.answers_valid.is_subset(&q.answers_test));
            }
        }
        let batch = sample_distinct(&splits, Split::Train, Structure::P1, 50, &mut rng, &SampleOptions::default()).unwrap();
        let unique: HashSet<_> = batch.iter().map(|q| q.graph.clone()).collect();
        assert_eq!(unique.len(), batch.len());
    }
}
