//! Flowing along A, B, -A, -B for time t moves x by t^2 (AB - BA) x up to O(t^3).
//!
//! Run with `cargo run --example commutator_flow`.

use codeflow::flow::commutator_flow_residual;
use nalgebra::DMatrix;

fn main() -> codeflow::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let x = [1.0, 0.0];
    let mut prev = None;
    println!("t        residual     residual/t^3  ratio");
    for t in [0.2, 0.1, 0.05, 0.025, 0.0125] {
        let r = commutator_flow_residual(&a, &b, t, &x)?;
        let ratio = prev.map(|p: f64| format!("{:.3}", p / r)).unwrap_or_default();
        println!("{t:<8} {r:<12.5e} {:<13.6} {ratio}", r / (t * t * t));
        prev = Some(r);
    }
    Ok(())
}
