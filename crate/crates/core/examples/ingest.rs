//! Loads a benchmark-style triple directory and prints the load report.
//!
//! cargo run --release --example ingest -- path/to/FB15k-237

use std::path::PathBuf;

use gammae::kg::{load_triples, TripleSources};

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).ok_or_else(|| anyhow::anyhow!("usage: ingest <dataset-dir>"))?);
    let (splits, report) = load_triples(&TripleSources::from_dir(&dir))?;
    print!("{report}");
    println!("cumulative test graph: {} triples", splits.test.len());
    Ok(())
}
