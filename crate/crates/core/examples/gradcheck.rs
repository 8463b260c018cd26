//! Finite-difference check of the analytic gradients on a dimension-4 model,
//! for every structure and union mode.

use gammae::gradcheck::check_all;
use gammae::kg::Split;
use gammae::model::{Model, ModelConfig, UnionMode};
use gammae::query::{sample_query_on, SampleOptions, Structure};
use gammae::synthetic::{generate, SyntheticConfig};
use gammae::train::{loss, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let splits = generate(&SyntheticConfig::tiny(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TrainConfig { negative_samples: 4, ..TrainConfig::desk() };
    for mode in UnionMode::ALL {
        let model = Model::new(
            ModelConfig { union_mode: mode, ..ModelConfig::with_dim(4, 6) },
            splits.entity_count(),
            splits.relation_count(),
            1,
        )?;
        for s in Structure::ALL {
            let q = sample_query_on(&splits, Split::Train, s, &mut rng, &SampleOptions::default())?;
            let pos = *q.answers_train.iter().next().expect("sampled queries have answers");
            let negs: Vec<usize> = (0..splits.entity_count()).filter(|e| !q.answers_train.contains(e)).take(4).collect();
            let (_, grad) = loss(&model, &cfg, &q.graph, pos, &negs)?;
            let f = |m: &Model| loss(m, &cfg, &q.graph, pos, &negs).map_or(f64::NAN, |(v, _)| v);
            let r = check_all(&model, f, &grad);
            println!("{mode:<3} {:<4} max relative error {:.2e} over {} parameters", s.as_str(), r.max_relative_error, r.checked);
        }
    }
    Ok(())
}
