//! Steering three points of the square onto three targets with the five
//! canonical fields.
//!
//! Run with `cargo run --release --example train_canonical`.

use codeflow::canonical::canonical_five;
use codeflow::field::compile_all;
use codeflow::region::BoxRegion;
use codeflow::trainer::{train, TrainConfig, TrainingSet};

fn main() -> codeflow::Result<()> {
    let fields = compile_all(&canonical_five(2)?.fields);
    let ts = TrainingSet::random(BoxRegion::cube(2, 1.0)?, 3, 2024);
    let config = TrainConfig {
        steps: 64,
        seed: 1,
        ..TrainConfig::default()
    };
    let result = train(&fields, &ts, &config)?;
    println!(
        "{:?} after {} iterations, {} parameters, loss {:.3e} -> {:.3e}",
        result.status,
        result.iterations,
        result.parameter_count(),
        result.initial_loss,
        result.final_loss
    );
    for (p, tr) in ts.pairs.iter().zip(result.trajectories(&fields, &ts)?) {
        let end = tr.final_state();
        println!("{:?} -> [{:.5}, {:.5}] (target {:?})", p.x, end[0], end[1], p.y);
    }
    result.write_history_csv(std::io::stderr())?;
    Ok(())
}
