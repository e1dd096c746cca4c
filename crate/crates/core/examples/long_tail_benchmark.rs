// The whole pipeline on a small synthetic long-tail world: augment,
// cluster, train the diffusion model, generate, fine-tune, evaluate.
//
// `cargo run --release --example long_tail_benchmark [config.toml]`

use std::error::Error;

use tailforge::pipeline::{run_all, PipelineConfig, REPORT_FILE};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let config = std::env::args()
        .nth(1)
        .filter(|a| a.ends_with(".toml"))
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/toy.toml").to_string());
    let text = std::fs::read_to_string(&config)?;
    let cfg = PipelineConfig::from_toml_str(
        &text,
        &[("paths.out_dir".into(), dir.path().display().to_string())],
        &[],
    )?;

    for entry in run_all(&cfg)? {
        println!("{:<16} {:>7} ms  {} outputs", entry.command, entry.elapsed_ms, entry.outputs.len());
    }
    println!("\n{}", std::fs::read_to_string(dir.path().join(REPORT_FILE))?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
