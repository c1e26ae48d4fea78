//! Seven neural-type fields x ↦ σ_i(C_i x + b_i). At the reference parameters
//! they are polynomial and generate every polynomial field; random
//! parameters are then generic and still interpolate.
//!
//! Run with `cargo run --release --example neural_fields`.

use codeflow::canonical::canonical_five;
use codeflow::lie::lie_closure_bounded;
use codeflow::random_fields::{neural_fields, polarization_field, reference_hat_fields, NeuralFieldSpec, Nonlinearity};
use codeflow::region::BoxRegion;
use codeflow::trainer::{train, TrainConfig, TrainingSet};

fn main() -> codeflow::Result<()> {
    let hat = reference_hat_fields(2)?;
    for (i, f) in hat.iter().enumerate() {
        println!("V^{} = {f}", i + 1);
    }
    let v5 = polarization_field(&hat)?;
    println!(
        "(V^5 - V^6 - V^7)/2 = {v5}, equals V5: {}",
        v5 == canonical_five(2)?.fields[4]
    );
    let closure = lie_closure_bounded(&hat, 2, 8)?;
    println!(
        "closure at degree ≤ 2: {}/{}",
        closure.dimension, closure.full_dimension
    );

    let spec = NeuralFieldSpec {
        m: 2,
        seed: 3,
        sigma: Nonlinearity::Tanh,
    };
    let fields = neural_fields(&spec)?;
    let ts = TrainingSet::random(BoxRegion::cube(2, 1.0)?, 2, 17);
    let result = train(&fields, &ts, &TrainConfig::default())?;
    println!(
        "tanh fields: {:?} after {} iterations, max residual {:.2e}",
        result.status, result.iterations, result.max_residual
    );
    Ok(())
}
