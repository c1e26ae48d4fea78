//! Running a JSON-configured interpolation experiment, as the `codeflow
//! interpolate` command does, into a scratch directory.
//!
//! Run with `cargo run --release --example experiment_config`.

use codeflow::experiment::{cmd_interpolate, ExperimentConfig};

const CONFIG: &str = r#"{
    "m": 2,
    "seed": 5,
    "fields": {"kind": "canonical"},
    "training": {"kind": "random", "n": 2, "region": {"lo": [-1, -1], "hi": [1, 1]}},
    "trainer": {"steps": 32}
}"#;

fn main() -> codeflow::Result<()> {
    let config: ExperimentConfig = serde_json::from_str(CONFIG)?;
    let out = std::env::temp_dir().join("codeflow-example");
    let outcome = cmd_interpolate(&config, &out)?;
    println!("{:?}, exit code {}", outcome.status, outcome.exit_code());
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
