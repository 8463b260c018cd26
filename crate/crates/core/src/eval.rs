//! Filtered ranking metrics, entropy/cardinality correlations and ablations.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kg::{EntityId, EntitySet, Split};
use crate::model::{EntityStats, Model, ModelError, UnionMode};
use crate::query::{ComputationGraph, QueryInstance, Structure};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric of an empty rank list")]
    Empty,
    #[error("inputs have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least two points")]
    TooFewPoints,
    #[error("correlation is undefined for constant input")]
    Constant,
    #[error("K must be at least 1")]
    BadK,
    #[error("ranking needs the valid or test tier")]
    TrainTier,
    #[error("no checkpoint for ablation variant {0}")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks at most `k`.
pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPoints);
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the average-rank transforms.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Filtered ranks of `targets` given a score per entity (lower is better).
///
/// Each target is ranked against entities outside `answers`; tied or NaN
/// non-answers count as ranked above it.
pub fn filtered_ranks(scores: &[f64], answers: &EntitySet, targets: &EntitySet) -> Vec<usize> {
    let mut others: Vec<f64> = scores
        .iter()
        .enumerate()
        .filter(|(e, _)| !answers.contains(e))
        .map(|(_, &s)| s)
        .collect();
    others.sort_by(f64::total_cmp);
    let nan = others.iter().filter(|s| s.is_nan()).count();
    let finite = &others[..others.len() - nan];
    targets
        .iter()
        .map(|&v| {
            let s = scores[v];
            let above = if s.is_nan() { others.len() } else { finite.partition_point(|&x| x <= s) + nan };
            1 + above
        })
        .collect()
}

/// Ranks of one query's non-trivial answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    pub structure: Option<Structure>,
    pub ranks: Vec<usize>,
}

impl RankingResult {
    pub fn mrr(&self) -> f64 {
        mrr(&self.ranks).expect("results hold at least one rank")
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        hits_at_k(&self.ranks, k).expect("results hold at least one rank")
    }
}

/// Per-structure metrics as fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub queries: usize,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["mrr", "hits@1", "hits@3", "hits@10"];

    pub fn values(&self) -> [f64; 4] {
        [self.mrr, self.hits1, self.hits3, self.hits10]
    }

    /// Query-level means: each query's metrics are averaged over its
    /// non-trivial answers first.
    fn of(results: &[&RankingResult]) -> Self {
        let n = results.len() as f64;
        let mean = |f: &dyn Fn(&RankingResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / n;
        Self {
            mrr: mean(&|r| r.mrr()),
            hits1: mean(&|r| r.hits_at(1)),
            hits3: mean(&|r| r.hits_at(3)),
            hits10: mean(&|r| r.hits_at(10)),
            queries: results.len(),
        }
    }

    fn average<'a>(rows: impl Iterator<Item = &'a Metrics>) -> Option<Metrics> {
        let rows: Vec<&Metrics> = rows.collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / n;
        Some(Metrics {
            mrr: mean(|m| m.mrr),
            hits1: mean(|m| m.hits1),
            hits3: mean(|m| m.hits3),
            hits10: mean(|m| m.hits10),
            queries: rows.iter().map(|m| m.queries).sum(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: BTreeMap<Structure, Metrics>,
    /// Queries without non-trivial answers at the evaluated tier.
    pub skipped: usize,
}

impl MetricsTable {
    pub fn from_results(results: &[RankingResult], skipped: usize) -> Self {
        let mut by: BTreeMap<Structure, Vec<&RankingResult>> = BTreeMap::new();
        for r in results {
            if let Some(s) = r.structure {
                by.entry(s).or_default().push(r);
            }
        }
        Self { rows: by.into_iter().map(|(s, rs)| (s, Metrics::of(&rs))).collect(), skipped }
    }

    /// Mean over the existential positive structures present.
    pub fn epfo_average(&self) -> Option<Metrics> {
        Metrics::average(self.rows.iter().filter(|(s, _)| !s.has_negation()).map(|(_, m)| m))
    }

    pub fn negation_average(&self) -> Option<Metrics> {
        Metrics::average(self.rows.iter().filter(|(s, _)| s.has_negation()).map(|(_, m)| m))
    }

    /// `(label, metrics)` for each structure, then the two averages.
    pub fn labelled_rows(&self) -> Vec<(String, Metrics)> {
        let mut out: Vec<(String, Metrics)> = self.rows.iter().map(|(s, m)| (s.to_string(), *m)).collect();
        if let Some(m) = self.epfo_average() {
            out.push(("avg_epfo".into(), m));
        }
        if let Some(m) = self.negation_average() {
            out.push(("avg_neg".into(), m));
        }
        out
    }

    /// CSV `dataset,structure,metric,value`, values in percent.
    pub fn write_csv(&self, dataset: &str, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "dataset,structure,metric,value")?;
        self.write_csv_rows(dataset, &mut out)
    }

    fn write_csv_rows(&self, dataset: &str, out: &mut impl Write) -> io::Result<()> {
        for (label, m) in self.labelled_rows() {
            for (name, v) in Metrics::NAMES.iter().zip(m.values()) {
                writeln!(out, "{dataset},{label},{name},{:.4}", 100.0 * v)?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>8}{:>8}{:>8}{:>8}{:>9}", "structure", "MRR", "H@1", "H@3", "H@10", "queries")?;
        for (label, m) in self.labelled_rows() {
            let [a, b, c, d] = m.values().map(|v| 100.0 * v);
            writeln!(f, "{label:<10}{a:>8.2}{b:>8.2}{c:>8.2}{d:>8.2}{:>9}", m.queries)?;
        }
        write!(f, "skipped queries (no non-trivial answers): {}", self.skipped)
    }
}

/// One correlation row of the uncertainty report.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub structure: Structure,
    pub srcc: f64,
    pub pcc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UncertaintyReport {
    pub rows: Vec<CorrelationRow>,
    /// Structures left out, with the reason.
    pub omitted: Vec<(Structure, String)>,
}

impl UncertaintyReport {
    /// CSV `structure,srcc,pcc,n`.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "structure,srcc,pcc,n")?;
        for r in &self.rows {
            writeln!(out, "{},{:.6},{:.6},{}", r.structure, r.srcc, r.pcc, r.n)?;
        }
        Ok(())
    }

    pub fn notes(&self) -> String {
        let mut s = String::new();
        for (st, why) in &self.omitted {
            let _ = writeln!(s, "{st}: omitted ({why})");
        }
        s
    }
}

/// A model with decoded entity tables, ready for bulk scoring.
pub struct Evaluator<'m> {
    model: &'m Model,
    stats: Vec<EntityStats>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self { model, stats: model.entity_stats() }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Distance from every entity to the query.
    pub fn scores(&self, graph: &ComputationGraph) -> Result<Vec<f64>, EvalError> {
        Ok(self.model.score_all(graph, &self.stats)?)
    }

    /// Filtered ranks of the query's non-trivial answers at `tier`, or
    /// `None` when it has none.
    pub fn rank_answers(&self, q: &QueryInstance, tier: Split) -> Result<Option<RankingResult>, EvalError> {
        if tier == Split::Train {
            return Err(EvalError::TrainTier);
        }
        let targets = q.non_trivial_answers(tier);
        if targets.is_empty() {
            return Ok(None);
        }
        let scores = self.scores(&q.graph)?;
        Ok(Some(RankingResult { structure: q.structure(), ranks: filtered_ranks(&scores, q.answers(tier), &targets) }))
    }

    /// Ranks every query (in parallel, results in input order).
    pub fn rank_all(&self, queries: &[QueryInstance], tier: Split) -> Result<(Vec<RankingResult>, usize), EvalError> {
        let ranked: Vec<Option<RankingResult>> =
            queries.par_iter().map(|q| self.rank_answers(q, tier)).collect::<Result<_, _>>()?;
        let skipped = ranked.iter().filter(|r| r.is_none()).count();
        Ok((ranked.into_iter().flatten().collect(), skipped))
    }

    pub fn evaluate(&self, queries: &[QueryInstance], tier: Split) -> Result<MetricsTable, EvalError> {
        let (results, skipped) = self.rank_all(queries, tier)?;
        Ok(MetricsTable::from_results(&results, skipped))
    }

    /// Spearman and Pearson correlation between summed embedding entropy
    /// and answer-set size at `tier`, per structure.
    pub fn uncertainty_report(&self, queries: &[QueryInstance], tier: Split) -> Result<UncertaintyReport, EvalError> {
        let points: Vec<(Option<Structure>, f64, f64)> = queries
            .par_iter()
            .map(|q| {
                let h = self.model.embed_query(&q.graph)?.entropy();
                Ok((q.structure(), h, q.answers(tier).len() as f64))
            })
            .collect::<Result<_, EvalError>>()?;
        let mut by: BTreeMap<Structure, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (s, h, c) in points {
            if let Some(s) = s {
                let e = by.entry(s).or_default();
                e.0.push(h);
                e.1.push(c);
            }
        }
        let mut report = UncertaintyReport::default();
        for (s, (hs, cs)) in by {
            match (spearman(&hs, &cs), pearson(&hs, &cs)) {
                (Ok(srcc), Ok(pcc)) => report.rows.push(CorrelationRow { structure: s, srcc, pcc, n: hs.len() }),
                (Err(e), _) | (_, Err(e)) => report.omitted.push((s, e.to_string())),
            }
        }
        Ok(report)
    }

    /// The `n` entities with the smallest distance, ties broken by id.
    pub fn top_n(&self, graph: &ComputationGraph, n: usize) -> Result<Vec<(EntityId, f64)>, EvalError> {
        let scores = self.scores(graph)?;
        let mut order: Vec<(EntityId, f64)> = scores.into_iter().enumerate().collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        order.truncate(n);
        Ok(order)
    }
}

/// MRR of a scorer that assigns each query a uniformly shuffled ranking.
pub fn shuffled_baseline_mrr<R: Rng + ?Sized>(
    queries: &[QueryInstance],
    tier: Split,
    entity_count: usize,
    rng: &mut R,
) -> Option<f64> {
    let mut per_query = Vec::new();
    let mut scores: Vec<f64> = (0..entity_count).map(|i| i as f64).collect();
    for q in queries {
        let targets = q.non_trivial_answers(tier);
        if targets.is_empty() {
            continue;
        }
        scores.shuffle(rng);
        per_query.push(mrr(&filtered_ranks(&scores, q.answers(tier), &targets)).ok()?);
    }
    (!per_query.is_empty()).then(|| per_query.iter().sum::<f64>() / per_query.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationVariant {
    Union(UnionMode),
    Elasticity(f64),
}

impl AblationVariant {
    pub fn group(&self) -> &'static str {
        match self {
            AblationVariant::Union(_) => "union",
            AblationVariant::Elasticity(_) => "elasticity",
        }
    }

    pub fn label(&self) -> String {
        match self {
            AblationVariant::Union(m) => m.to_string(),
            AblationVariant::Elasticity(e) => format!("eps={e}"),
        }
    }

    /// Union modes, then elasticity off and at `default_elasticity`.
    pub fn standard_set(default_elasticity: f64) -> Vec<AblationVariant> {
        let mut v: Vec<AblationVariant> = UnionMode::ALL.into_iter().map(AblationVariant::Union).collect();
        v.push(AblationVariant::Elasticity(0.0));
        v.push(AblationVariant::Elasticity(default_elasticity));
        v
    }

    /// Structures reported for this group: unions for the union ablation,
    /// negations for the elasticity ablation.
    pub fn structures(&self) -> &'static [Structure] {
        match self {
            AblationVariant::Union(_) => &Structure::UNION,
            AblationVariant::Elasticity(_) => &Structure::NEGATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub dataset: String,
    pub variant: AblationVariant,
    pub table: MetricsTable,
}

/// Evaluates one trained model per variant on the variant's structures.
pub fn ablation_run(
    dataset: &str,
    variants: &[(AblationVariant, Option<&Model>)],
    queries: &[QueryInstance],
    tier: Split,
) -> Result<Vec<AblationRow>, EvalError> {
    variants
        .iter()
        .map(|(variant, model)| {
            let model = model.ok_or_else(|| EvalError::MissingCheckpoint(variant.label()))?;
            let subset: Vec<QueryInstance> = queries
                .iter()
                .filter(|q| q.structure().is_some_and(|s| variant.structures().contains(&s)))
                .cloned()
                .collect();
            let table = Evaluator::new(model).evaluate(&subset, tier)?;
            Ok(AblationRow { dataset: dataset.to_string(), variant: *variant, table })
        })
        .collect()
}

/// CSV `dataset,ablation,variant,structure,metric,value`, values in percent.
pub fn write_ablation_csv(rows: &[AblationRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "dataset,ablation,variant,structure,metric,value")?;
    for row in rows {
        for (label, m) in row.table.labelled_rows() {
            for (name, v) in Metrics::NAMES.iter().zip(m.values()) {
                writeln!(out, "{},{},{},{label},{name},{:.4}", row.dataset, row.variant.group(), row.variant.label(), 100.0 * v)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn metric_units() {
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert!((mrr(&[1, 2, 4]).unwrap() - 0.583_333_333_3).abs() < 1e-9);
        assert_eq!(mrr(&[10]).unwrap(), 0.1);
        assert_eq!(hits_at_k(&[1, 5, 2, 10], 3).unwrap(), 0.5);
        assert_eq!(hits_at_k(&[3, 7, 200], 200).unwrap(), 1.0);
        assert_eq!(hits_at_k(&[2], 1).unwrap(), 0.0);
        assert!(matches!(mrr(&[]), Err(EvalError::Empty)));
        assert!(matches!(hits_at_k(&[], 1), Err(EvalError::Empty)));
    }

    #[test]
    fn hand_ranked_fixture() {
        // entity:  0    1    2    3    4
        // score:  0.5  0.1  0.9  0.5  0.3
        let scores = [0.5, 0.1, 0.9, 0.5, 0.3];
        let answers: EntitySet = [0, 2].into();
        // entity 0 vs non-answers {1,3,4}: 1 (0.1), 4 (0.3) below, 3 tied -> rank 4
        // entity 2 vs non-answers: all three below -> rank 4
        assert_eq!(filtered_ranks(&scores, &answers, &answers), vec![4, 4]);
        // with entity 1 as the only answer: nothing below -> rank 1
        assert_eq!(filtered_ranks(&scores, &[1].into(), &[1].into()), vec![1]);
        // all other entities better: rank |V| - |answers| + 1
        assert_eq!(filtered_ranks(&scores, &[2].into(), &[2].into()), vec![5]);
        let nan = [f64::NAN, 0.2, 0.1];
        assert_eq!(filtered_ranks(&nan, &[2].into(), &[2].into()), vec![2]);
        assert_eq!(filtered_ranks(&nan, &[0].into(), &[0].into()), vec![3]);
    }

    /// Naive O(n²) rank transform: average of 1-based positions of equal values.
    fn naive_ranks(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let below = xs.iter().filter(|&&y| y < x).count() as f64;
                let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn naive_pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn correlations_against_naive_references() {
        let inc: Vec<f64> = (0..20).map(|i| i as f64 * 1.5).collect();
        let rev: Vec<f64> = inc.iter().rev().copied().collect();
        assert!((spearman(&inc, &inc).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&inc, &inc).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&inc, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&inc, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(EvalError::Constant)));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(EvalError::TooFewPoints)));

        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(0..30) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.gen_range(-20.0..20.0)).collect();
        assert!((pearson(&xs, &ys).unwrap() - naive_pearson(&xs, &ys)).abs() < 1e-12);
        let naive_s = naive_pearson(&naive_ranks(&xs), &naive_ranks(&ys));
        assert!((spearman(&xs, &ys).unwrap() - naive_s).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn spearman_ignores_monotone_transforms(xs in prop::collection::vec(-5.0..5.0f64, 3..40), seed in 0u64..1000) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + rng.gen_range(-1.0..1.0)).collect();
            if let Ok(base) = spearman(&xs, &ys) {
                let tx: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
                let ty: Vec<f64> = ys.iter().map(|y| y * y * y + 2.0 * y).collect();
                prop_assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn filtered_rank_ignores_other_answers(scores in prop::collection::vec(0.0..1.0f64, 10), other in 0.0..1.0f64) {
            let answers: EntitySet = [0, 1, 2].into();
            let targets: EntitySet = [0].into();
            let base = filtered_ranks(&scores, &answers, &targets);
            let mut changed = scores.clone();
            changed[1] = other;
            changed[2] = -other;
            prop_assert_eq!(filtered_ranks(&changed, &answers, &targets), base);
        }

        #[test]
        fn improving_a_rank_never_hurts(ranks in prop::collection::vec(1usize..50, 1..20), i in 0usize..20) {
            let i = i % ranks.len();
            let mut better = ranks.clone();
            better[i] = (better[i] - 1).max(1);
            prop_assert!(mrr(&better).unwrap() >= mrr(&ranks).unwrap());
            for k in [1, 3, 10] {
                prop_assert!(hits_at_k(&better, k).unwrap() >= hits_at_k(&ranks, k).unwrap());
            }
        }
    }

    #[test]
    fn table_layout_and_csv() {
        let results = vec![
            RankingResult { structure: Some(Structure::P1), ranks: vec![1, 2] },
            RankingResult { structure: Some(Structure::P1), ranks: vec![4] },
            RankingResult { structure: Some(Structure::In2), ranks: vec![10] },
        ];
        let t = MetricsTable::from_results(&results, 3);
        let p1 = t.rows[&Structure::P1];
        assert!((p1.mrr - (0.75 + 0.25) / 2.0).abs() < 1e-15);
        assert_eq!(p1.hits1, 0.25);
        assert_eq!(t.negation_average().unwrap().hits10, 1.0);
        let mut csv = Vec::new();
        t.write_csv("toy", &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dataset,structure,metric,value");
        assert_eq!(lines[1], "toy,1p,mrr,50.0000");
        assert_eq!(lines.len(), 1 + 4 * 4);
        assert!(t.to_string().contains("skipped queries (no non-trivial answers): 3"));
    }

    #[test]
    fn monotone_fixture_has_unit_srcc() {
        let hs = [1.0, 2.0, 3.5, 7.0];
        let cs = [1.0, 4.0, 9.0, 30.0];
        assert!((spearman(&hs, &cs).unwrap() - 1.0).abs() < 1e-12);
    }
}
