//! Runs the shared-phase transfer benchmark and prints one line per mode.
//!
//! Usage: cargo run --release -p pda-core --example transfer [seeds] [epochs]

use std::time::Instant;

use pda_core::benchmark::TransferBenchmark;

fn main() -> pda_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut bench = TransferBenchmark::default();
    if let Some(n) = args.get(1) {
        bench.seeds = (0..n.parse::<u64>().expect("seed count")).collect();
    }
    if let Some(e) = args.get(2) {
        bench.train.epochs = e.parse().expect("epoch count");
    }
    let start = Instant::now();
    let rows = bench.run(&bench.cells()?)?;
    for r in &rows {
        let per: Vec<String> = r.per_split.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:>17}: {:.4} ± {:.4}  [{}]", r.name, r.mean, r.std, per.join(" "));
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
