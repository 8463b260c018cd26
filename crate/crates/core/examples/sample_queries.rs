//! Samples each of the 14 query structures on the synthetic graph and prints
//! one query per structure with its answer tiers.

use gammae::kg::Split;
use gammae::query::{sample_query_on, serialize_query, SampleOptions, Structure};
use gammae::synthetic::{generate, SyntheticConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let splits = generate(&SyntheticConfig::smoke(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for s in Structure::ALL {
        let q = sample_query_on(&splits, Split::Test, s, &mut rng, &SampleOptions::default())?;
        println!("{:<4} {}", s.as_str(), q.graph.to_expr());
        println!("     non-trivial test answers: {:?}", q.non_trivial_answers(Split::Test));
        println!("     {}", serialize_query(&q)?);
    }
    Ok(())
}
