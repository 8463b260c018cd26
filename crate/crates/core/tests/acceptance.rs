//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set GAMMAE_FB15K237_DIR to a directory holding the public FB15k-237
//! train/valid/test files to run criterion 8 against the real split.

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gammae::eval::{hits_at_k, mrr, pearson, shuffled_baseline_mrr, spearman, Evaluator};
use gammae::gamma::{gamma_entropy, gamma_kl, intersect, mixture_union, negate, vector_distance, GammaParams, GammaVector};
use gammae::gradcheck::check_all;
use gammae::kg::{load_triples, EntitySet, KnowledgeGraph, Split, TripleSources};
use gammae::model::{Model, ModelConfig, UnionMode};
use gammae::quadrature::{mixture_mass, numeric_entropy, numeric_kl, QuadratureConfig};
use gammae::query::{
    dm_rewrite, dnf_rewrite, ground_truth_answers, sample_query, sample_query_on, sample_workload, ComputationGraph, QueryExpr,
    SampleOptions, Structure,
};
use gammae::synthetic::{generate, SyntheticConfig};
use gammae::train::{loss, train, LossVariant, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn gp(a: f64, b: f64) -> GammaParams {
    GammaParams::new(a, b).unwrap()
}

fn c1_closed_form_vs_quadrature() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut kl_err, mut h_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let p = gp(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let q = gp(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let cfg = QuadratureConfig::for_distribution(&p);
        kl_err = kl_err.max((gamma_kl(&p, &q) - numeric_kl(&p, &q, &cfg).unwrap()).abs());
        h_err = h_err.max((gamma_entropy(&p) - numeric_entropy(&p, &cfg).unwrap()).abs());
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        kl_err <= 1e-6 && h_err <= 1e-6 && fast,
        format!("200 pairs, max |KL err| {kl_err:.2e}, max |H err| {h_err:.2e} (tol 1e-6), {time}"),
    )
}

fn c2_fixed_points() -> Outcome {
    let kl = gamma_kl(&gp(2.0, 1.0), &gp(1.0, 1.0));
    let h = gamma_entropy(&gp(1.0, 1.0));
    let (dk, dh) = ((kl - (1.0 - EULER_GAMMA)).abs(), (h - 1.0).abs());
    outcome(dk <= 1e-9 && dh <= 1e-12, format!("|KL - (1 - gamma_EM)| {dk:.1e} (tol 1e-9), |H(1,1) - 1| {dh:.1e} (tol 1e-12)"))
}

fn random_vector(rng: &mut ChaCha8Rng, m: usize, alpha: std::ops::Range<f64>) -> GammaVector {
    let a: Vec<f64> = (0..m)
        .map(|_| loop {
            let x = rng.gen_range(alpha.clone());
            if (x - 1.0).abs() > 1e-3 {
                break x;
            }
        })
        .collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..10.0)).collect();
    GammaVector::from_parts(&a, &b).unwrap()
}

fn simplex(rng: &mut ChaCha8Rng, k: usize, m: usize) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.gen_range(0.01..1.0)).collect()).collect();
    let sums: Vec<f64> = (0..m).map(|j| raw.iter().map(|r| r[j]).sum()).collect();
    raw.iter().map(|r| r.iter().zip(&sums).map(|(x, s)| x / s).collect()).collect()
}

fn strictly_increasing_over_grid(v: &GammaVector) -> bool {
    let d: Vec<f64> = (0..=10).map(|i| vector_distance(v, &negate(v, i as f64 * 0.01)).unwrap()).collect();
    d.windows(2).all(|w| w[1] > w[0])
}

fn c3_operator_closure() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 8;

    let mut intersect_exact = true;
    for _ in 0..200 {
        let k = rng.gen_range(2..=3);
        let inputs: Vec<GammaVector> = (0..k).map(|_| random_vector(&mut rng, m, 0.1..10.0)).collect();
        let w = simplex(&mut rng, k, m);
        let out = intersect(&inputs, &w).unwrap();
        for j in 0..m {
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..k {
                a += w[i][j] * inputs[i].dims()[j].alpha();
                b += w[i][j] * inputs[i].dims()[j].beta();
            }
            intersect_exact &= out.dims()[j].alpha() == a && out.dims()[j].beta() == b;
        }
    }

    let mut mass_err = 0.0f64;
    for _ in 0..50 {
        let k = rng.gen_range(2..=3);
        let inputs: Vec<GammaVector> = (0..k).map(|_| random_vector(&mut rng, 2, 0.1..10.0)).collect();
        let mix = mixture_union(inputs, simplex(&mut rng, k, 2)).unwrap();
        for j in 0..2 {
            mass_err = mass_err.max((mixture_mass(&mix, j).unwrap() - 1.0).abs());
        }
    }

    let mut double_neg = true;
    for _ in 0..200 {
        let v = random_vector(&mut rng, m, 0.1..10.0);
        double_neg &= negate(&negate(&v, 0.0), 0.0) == v;
    }

    let grid: Vec<GammaVector> = (0..100).map(|_| random_vector(&mut rng, m, 0.1..10.0)).collect();
    let grid_ok = grid.iter().filter(|v| strictly_increasing_over_grid(v)).count();
    let scalar: Vec<f64> = (1..=99).map(|i| i as f64 * 0.1).filter(|a| (a - 1.0).abs() > 1e-9).collect();
    let scalar_ok: Vec<f64> = scalar
        .iter()
        .copied()
        .filter(|&a| strictly_increasing_over_grid(&GammaVector::from_parts(&[a], &[1.0]).unwrap()))
        .collect();
    let below_one = (0..100).filter(|_| strictly_increasing_over_grid(&random_vector(&mut rng, m, 0.1..0.999))).count();

    let (fast, time) = within(Duration::from_secs(60), start);
    let pass = intersect_exact && mass_err <= 1e-6 && double_neg && grid_ok == grid.len() && fast;
    outcome(
        pass,
        format!(
            "intersect exact {intersect_exact}; mixture mass max err {mass_err:.1e} (tol 1e-6); double negation exact {double_neg}; \
             elasticity grid strictly increasing for {grid_ok}/{} inputs with alpha in [0.1,10] \
             (single dims: holds for alpha in {{{}}}, all {}/100 inputs with alpha < 1 pass); {time}",
            grid.len(),
            scalar_ok.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(","),
            below_one
        ),
    )
}

fn c4_gradient_check() -> Outcome {
    let start = Instant::now();
    let splits = generate(&SyntheticConfig::tiny(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    for mode in UnionMode::ALL {
        let cfg = ModelConfig { union_mode: mode, ..ModelConfig::with_dim(4, 6) };
        let model = Model::new(cfg, splits.entity_count(), splits.relation_count(), 40).unwrap();
        for s in Structure::ALL {
            let q = sample_query_on(&splits, Split::Train, s, &mut rng, &SampleOptions::default()).unwrap();
            let pos = *q.answers_train.iter().next().unwrap();
            let negs: Vec<usize> = (0..splits.entity_count()).filter(|e| !q.answers_train.contains(e)).take(5).collect();

            let terms: Vec<(usize, f64)> = std::iter::once((pos, 1.0)).chain(negs.iter().map(|&e| (e, -0.3))).collect();
            let (_, grad) = model.distance_gradient(&q.graph, &terms).unwrap();
            let r = check_all(&model, |m| m.distance_gradient(&q.graph, &terms).unwrap().0, &grad);
            checks += 1;
            if r.max_relative_error > worst.0 {
                worst = (r.max_relative_error, format!("{mode} {s} operators"));
            }

            for variant in [LossVariant::Paper, LossVariant::Standard] {
                let tc = TrainConfig { negative_samples: negs.len(), margin: 6.0, loss_variant: variant, ..TrainConfig::desk() };
                let (_, grad) = loss(&model, &tc, &q.graph, pos, &negs).unwrap();
                let r = check_all(&model, |m| loss(m, &tc, &q.graph, pos, &negs).unwrap().0, &grad);
                checks += 1;
                if r.max_relative_error > worst.0 {
                    worst = (r.max_relative_error, format!("{mode} {s} {variant} loss"));
                }
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        worst.0 <= 1e-4 && fast,
        format!("{checks} full-parameter checks on a dim-4 model, max relative error {:.2e} ({}) (tol 1e-4), {time}", worst.0, worst.1),
    )
}

/// Set semantics straight off the triple list, without any index.
fn naive(triples: &[(usize, usize, usize)], n: usize, e: &QueryExpr) -> BTreeSet<usize> {
    match e {
        QueryExpr::Anchor(a) => [*a].into(),
        QueryExpr::Project(x, r) => {
            let src = naive(triples, n, x);
            triples.iter().filter(|t| t.1 == *r && src.contains(&t.0)).map(|t| t.2).collect()
        }
        QueryExpr::Intersect(xs) => {
            let sets: Vec<_> = xs.iter().map(|x| naive(triples, n, x)).collect();
            (0..n).filter(|v| sets.iter().all(|s| s.contains(v))).collect()
        }
        QueryExpr::Union(xs) => xs.iter().flat_map(|x| naive(triples, n, x)).collect(),
        QueryExpr::Negate(x) => {
            let s = naive(triples, n, x);
            (0..n).filter(|v| !s.contains(v)).collect()
        }
    }
}

fn c5_symbolic_oracle() -> Outcome {
    let start = Instant::now();
    let splits = generate(&SyntheticConfig::smoke(5)).unwrap();
    let kg: &KnowledgeGraph = &splits.test;
    let n = kg.entity_count();
    let triples: Vec<(usize, usize, usize)> = kg.triples().iter().map(|t| (t.head, t.relation, t.tail)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut total, mut agree, mut dnf_ok, mut dm_ok, mut with_union) = (0, 0, 0, 0, 0);
    for s in Structure::ALL {
        for i in 0..715 {
            let graph = if i % 2 == 0 {
                sample_query(kg, s, &mut rng, &SampleOptions::default()).unwrap().graph
            } else {
                let anchors: Vec<usize> = (0..s.anchor_count()).map(|_| rng.gen_range(0..n)).collect();
                let rels: Vec<usize> = (0..s.relation_count()).map(|_| rng.gen_range(0..kg.relation_count())).collect();
                ComputationGraph::from_template(s, &anchors, &rels).unwrap()
            };
            let truth = naive(&triples, n, &graph.to_expr());
            let got: EntitySet = ground_truth_answers(kg, &graph).unwrap();
            total += 1;
            agree += usize::from(got.iter().copied().collect::<BTreeSet<_>>() == truth);
            if graph.contains_union() {
                with_union += 1;
                let dnf: BTreeSet<usize> =
                    dnf_rewrite(&graph).iter().flat_map(|b| ground_truth_answers(kg, b).unwrap()).collect();
                dnf_ok += usize::from(dnf == truth);
                let dm: BTreeSet<usize> = ground_truth_answers(kg, &dm_rewrite(&graph)).unwrap().into_iter().collect();
                dm_ok += usize::from(dm == truth);
            }
        }
    }
    outcome(
        agree == total && dnf_ok == with_union && dm_ok == with_union && total >= 10_000,
        format!(
            "{agree}/{total} queries match the naive evaluator; DNF {dnf_ok}/{with_union}, DM {dm_ok}/{with_union} union queries preserve answers; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn naive_average_ranks(xs: &[f64]) -> Vec<f64> {
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

fn c6_metrics() -> Outcome {
    let m = mrr(&[1, 2, 4]).unwrap();
    let h = hits_at_k(&[1, 5, 2, 10], 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut ds, mut dp) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let len = rng.gen_range(5..60);
        let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(0..20) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.gen_range(-15.0..15.0)).collect();
        if let (Ok(s), Ok(p)) = (spearman(&xs, &ys), pearson(&xs, &ys)) {
            ds = ds.max((s - naive_pearson(&naive_average_ranks(&xs), &naive_average_ranks(&ys))).abs());
            dp = dp.max((p - naive_pearson(&xs, &ys)).abs());
        }
    }
    let dm = (m - (1.0 + 0.5 + 0.25) / 3.0).abs();
    outcome(
        dm <= 1e-9 && h == 0.5 && ds <= 1e-12 && dp <= 1e-12,
        format!("MRR([1,2,4]) = {m:.10} (|err| {dm:.1e}, tol 1e-9); HITS@3([1,5,2,10]) = {h}; max |SRCC - naive| {ds:.1e}, |PCC - naive| {dp:.1e} (tol 1e-12)"),
    )
}

fn c7_smoke_run() -> Outcome {
    let start = Instant::now();
    let splits = generate(&SyntheticConfig::smoke(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let work = sample_workload(&splits, 2000, 100, &mut rng, &SampleOptions::default());
    let mut model = Model::new(ModelConfig::desk(), splits.entity_count(), splits.relation_count(), 0).unwrap();
    let cfg = TrainConfig { steps: 10_000, ..TrainConfig::desk() };
    train(&mut model, &cfg, &work.train, |_, _| {}).unwrap();
    let trained = start.elapsed();

    let eval = Evaluator::new(&model);
    let table = eval.evaluate(&work.test, Split::Test).unwrap();
    let one_hop: Vec<_> = work.test.iter().filter(|q| q.structure() == Some(Structure::P1)).cloned().collect();
    let random = shuffled_baseline_mrr(&one_hop, Split::Test, splits.entity_count(), &mut rng).unwrap();
    let p1 = table.rows.get(&Structure::P1).map_or(0.0, |m| m.mrr);
    let report = eval.uncertainty_report(&work.test, Split::Test).unwrap();
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let (fast, time) = within(Duration::from_secs(300), start);
    let all = table.rows.len() == 14;
    outcome(
        p1 >= 3.0 * random && all && !report.rows.is_empty() && fast,
        format!(
            "200 entities, 10 relations, dim 32, 10000 steps (trained in {:.1}s); test 1p MRR {p1:.4} vs random {random:.4} ({:.1}x, need 3x); \
             {}/14 structures evaluated; uncertainty report {} rows; {time}",
            trained.as_secs_f64(),
            p1 / random,
            table.rows.len(),
            report.rows.len()
        ),
    )
}

/// Writes a directory in the public FB15k-237 layout (Freebase mids,
/// relation paths, tab separated) with the given number of unique lines.
fn write_fb15k237_layout(dir: &Path, sizes: [usize; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let entities: Vec<String> = (0..14_505).map(|i| format!("/m/0{:x}", 0x1000 + i * 7)).collect();
    let relations: Vec<String> = (0..237).map(|i| format!("/domain{}/type{}/property{}", i % 13, i % 29, i)).collect();
    let mut seen = BTreeSet::new();
    for (name, size) in ["train.txt", "valid.txt", "test.txt"].iter().zip(sizes) {
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(name)).unwrap());
        let mut written = 0;
        while written < size {
            let t = (rng.gen_range(0..entities.len()), rng.gen_range(0..relations.len()), rng.gen_range(0..entities.len()));
            if seen.insert(t) {
                writeln!(out, "{}\t{}\t{}", entities[t.0], relations[t.1], entities[t.2]).unwrap();
                written += 1;
            }
        }
    }
}

fn c8_fb15k237_ingest() -> Outcome {
    let expected = 149_689;
    let (dir, source, _guard) = match std::env::var_os("GAMMAE_FB15K237_DIR") {
        Some(d) => (std::path::PathBuf::from(d), "public split", None),
        None => {
            let tmp = tempfile::tempdir().unwrap();
            write_fb15k237_layout(tmp.path(), [expected, 17_535, 20_466]);
            (tmp.path().to_path_buf(), "synthesized stand-in in the same layout", Some(tmp))
        }
    };
    let (splits, report) = match load_triples(&TripleSources::from_dir(&dir)) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{source}: ingest failed: {e}")),
    };
    let train = report.splits[&Split::Train].unique_triples;
    let pairs: BTreeSet<(usize, usize)> = splits.train.triples().iter().flat_map(|t| [(t.head, t.relation), (t.tail, t.relation + 1_000_000)]).collect();
    outcome(
        train == expected,
        format!(
            "{source}: {train} training triples (expected {expected}), {} entities, {} relations, \
             {} distinct (anchor, relation) pairs with reciprocal edges",
            report.entities,
            report.relations,
            pairs.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("closed-form KL and entropy vs quadrature", c1_closed_form_vs_quadrature),
        ("analytic fixed points", c2_fixed_points),
        ("operator closure suite", c3_operator_closure),
        ("gradient check", c4_gradient_check),
        ("symbolic oracle agreement", c5_symbolic_oracle),
        ("metric fixtures and correlations", c6_metrics),
        ("smoke training run", c7_smoke_run),
        ("FB15k-237 layout ingest", c8_fb15k237_ingest),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id) {
            continue;
        }
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!out.pass);
        println!("[{}] criterion {id} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
