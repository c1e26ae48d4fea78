//! Random polynomial systems: sample five cubic fields, fit with the
//! residual readout y = λ(X_1 - x), and perturb the canonical fields into a
//! nearby random system.
//!
//! Run with `cargo run --release --example generic_interpolation`.

use codeflow::canonical::canonical_five;
use codeflow::field::compile_all;
use codeflow::random_fields::{perturb_to_universal, sample_polynomial_fields, FieldSampleSpec};
use codeflow::region::BoxRegion;
use codeflow::trainer::{train, ReadoutMode, TrainConfig, TrainingSet};

fn main() -> codeflow::Result<()> {
    let region = BoxRegion::cube(2, 1.0)?;
    let spec = FieldSampleSpec::new(2, 5, 3, 42);
    println!("sampling {} coefficients", spec.parameter_count());
    let fields = compile_all(&sample_polynomial_fields(&spec)?);

    let ts = TrainingSet::random(region.clone(), 3, 9);
    let config = TrainConfig {
        readout: ReadoutMode::LambdaResidual { log_lambda: 0.0 },
        seed: 42,
        ..TrainConfig::default()
    };
    let result = train(&fields, &ts, &config)?;
    println!(
        "{:?} in {} iterations, λ = {:.4}, residuals {:?}",
        result.status,
        result.iterations,
        result.lambda.unwrap_or(1.0),
        result.residuals
    );

    let p = perturb_to_universal(&canonical_five(2)?.fields, 2, 0.1, &region, 5)?;
    println!(
        "perturbed canonical fields: coefficient radius {:.2e}, grid sup {:.3e}, certified sup {:.3e}",
        p.coefficient_radius, p.grid_sup, p.certified_sup
    );
    Ok(())
}
