//! Regenerates `fixtures/reference/`.

use std::path::PathBuf;

fn main() -> sarcasm_fusion::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference"));
    sarcasm_fusion::augment::reference_fixture()?.write_to(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
