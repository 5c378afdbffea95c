//! Writes the bundled description caches under `data/`: the illustrative
//! actions plus every synthetic class, with and without shared phase pairs.
//!
//! Usage: cargo run -p pda-core --example bundle_descriptions [out_dir]

use std::path::PathBuf;

use pda_core::data::{bundled_descriptions, SyntheticSpec};

fn main() -> pda_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, spec) in [
        ("descriptions.json", SyntheticSpec::default()),
        (
            "descriptions_shared_pairs.json",
            SyntheticSpec::default().with_default_pairs(),
        ),
    ] {
        let path = dir.join(name);
        bundled_descriptions(&spec)?.save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
