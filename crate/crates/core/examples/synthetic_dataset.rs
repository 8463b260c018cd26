//! Writes the synthetic smoke graph as a named triple directory
//! (train.txt, valid.txt, test.txt), the same layout as the public benchmarks.
//!
//! cargo run --example synthetic_dataset -- out/dir [seed]

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use gammae::kg::Split;
use gammae::synthetic::{generate, SyntheticConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let splits = generate(&SyntheticConfig::smoke(seed))?;
    fs::create_dir_all(&dir)?;
    for split in Split::ALL {
        let mut out = std::io::BufWriter::new(fs::File::create(dir.join(format!("{split}.txt")))?);
        for t in splits.split_edges(split) {
            writeln!(out, "/e/{}\t/r/{}\t/e/{}", t.head, t.relation, t.tail)?;
        }
        println!("{split}: {} triples", splits.split_edges(split).len());
    }
    Ok(())
}
