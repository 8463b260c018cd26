//! End-to-end run on the 200-entity synthetic graph: sample, train, evaluate.
//!
//! cargo run --release --example smoke -- [steps]

use std::time::Instant;

use gammae::eval::{shuffled_baseline_mrr, Evaluator};
use gammae::kg::Split;
use gammae::model::{Model, ModelConfig};
use gammae::query::{sample_workload, SampleOptions, Structure};
use gammae::synthetic::{generate, SyntheticConfig};
use gammae::train::{train, TrainConfig, TrainEvent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let splits = generate(&SyntheticConfig::smoke(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let work = sample_workload(&splits, 2000, 100, &mut rng, &SampleOptions::default());
    println!("queries: {} train, {} valid, {} test", work.train.len(), work.valid.len(), work.test.len());

    let mut model = Model::new(ModelConfig::desk(), splits.entity_count(), splits.relation_count(), 0)?;
    let cfg = TrainConfig { steps, log_every: 500, ..TrainConfig::desk() };
    let start = Instant::now();
    train(&mut model, &cfg, &work.train, |ev, _| {
        if let TrainEvent::Logged { step, loss } = ev {
            println!("step {step:>6}  loss {loss:.4}  {:.1}s", start.elapsed().as_secs_f64());
        }
    })?;
    println!("trained {steps} steps in {:.1}s", start.elapsed().as_secs_f64());

    let eval = Evaluator::new(&model);
    let table = eval.evaluate(&work.test, Split::Test)?;
    println!("{table}");
    let one_hop: Vec<_> = work.test.iter().filter(|q| q.structure() == Some(Structure::P1)).cloned().collect();
    let random = shuffled_baseline_mrr(&one_hop, Split::Test, splits.entity_count(), &mut rng).unwrap_or(f64::NAN);
    println!("1p random-shuffle MRR {:.4}", random);
    let report = eval.uncertainty_report(&work.test, Split::Test)?;
    report.write_csv(std::io::stdout())?;
    print!("{}", report.notes());
    Ok(())
}
