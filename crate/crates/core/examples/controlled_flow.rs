//! Integrating the controlled system and its first variation, with the
//! operator-norm bound on the Jacobian along the way.
//!
//! Run with `cargo run --release --example controlled_flow > trajectory.csv`.

use codeflow::canonical::canonical_five;
use codeflow::field::compile_all;
use codeflow::flow::{integrate_with_variation, jacobian_bound_profile, ControlPath};
use codeflow::linalg::operator_norm;

fn main() -> codeflow::Result<()> {
    let fields = compile_all(&canonical_five(2)?.fields);
    let steps = 32;
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|s| {
            let t = s as f64 / steps as f64;
            vec![(6.0 * t).sin(), (6.0 * t).cos(), 0.5, -0.3, 0.4 * t]
        })
        .collect();
    let controls = ControlPath::from_rows(&rows)?;
    let traj = integrate_with_variation(&fields, &controls, &[0.2, -0.4])?;
    let bounds = jacobian_bound_profile(&fields, &controls, &traj)?;
    for (s, (j, b)) in traj
        .jacobians
        .as_ref()
        .unwrap()
        .iter()
        .zip(&bounds)
        .enumerate()
        .step_by(8)
    {
        eprintln!(
            "t = {:.3}: |J|_op = {:.4} <= {:.4}",
            s as f64 / steps as f64,
            operator_norm(j),
            b
        );
    }
    traj.write_csv(std::io::stdout())?;
    Ok(())
}
