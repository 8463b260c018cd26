//! Union-mode and elasticity ablations on the synthetic graph: one model is
//! trained per variant, then each is evaluated on the structures it affects.
//!
//! cargo run --release --example ablation -- [steps]

use gammae::eval::{ablation_run, write_ablation_csv, AblationVariant};
use gammae::kg::Split;
use gammae::model::{Model, ModelConfig};
use gammae::query::{sample_workload, SampleOptions};
use gammae::synthetic::{generate, SyntheticConfig};
use gammae::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let splits = generate(&SyntheticConfig::smoke(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let work = sample_workload(&splits, 1000, 100, &mut rng, &SampleOptions::default());
    let base = ModelConfig::desk();
    let variants = AblationVariant::standard_set(base.elasticity);

    let mut models = Vec::new();
    for v in &variants {
        let cfg = match *v {
            AblationVariant::Union(mode) => ModelConfig { union_mode: mode, ..base.clone() },
            AblationVariant::Elasticity(eps) => ModelConfig { elasticity: eps, ..base.clone() },
        };
        let mut model = Model::new(cfg, splits.entity_count(), splits.relation_count(), 0)?;
        train(&mut model, &TrainConfig { steps, ..TrainConfig::desk() }, &work.train, |_, _| {})?;
        eprintln!("trained {} {}", v.group(), v.label());
        models.push(model);
    }
    let refs: Vec<_> = variants.iter().copied().zip(models.iter().map(Some)).collect();
    let rows = ablation_run("synthetic", &refs, &work.test, Split::Test)?;
    for row in &rows {
        println!("[{} {}]\n{}\n", row.variant.group(), row.variant.label(), row.table);
    }
    write_ablation_csv(&rows, std::io::stdout())?;
    Ok(())
}
