//! The five canonical generators: sl(m) from two matrices, the exact bracket
//! identity suite, and closure up to every polynomial field of low degree.
//!
//! Run with `cargo run --release --example canonical_generation -- 3`.

use codeflow::canonical::{
    canonical_five, degree_cover, sl_closure_dimension, sl_generators, verify_appendix_identities,
};

fn main() -> codeflow::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);

    let (a, b) = sl_generators(m)?;
    println!(
        "A = {:?}",
        a.rows()
            .iter()
            .map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    );
    println!(
        "sl({m}) closure dimension {} (expected {})",
        sl_closure_dimension(&a, &b)?,
        m * m - 1
    );

    for (i, f) in canonical_five(m)?.fields.iter().enumerate() {
        println!("V{} = {f}", i + 1);
    }

    let report = verify_appendix_identities(m)?;
    println!(
        "{} identities checked, {} failed",
        report.checks.len(),
        report.failures().count()
    );

    for k in 0..=2 {
        let cover = degree_cover(m, k)?;
        println!(
            "degree ≤ {k}: dimension {}/{} after depth {} with {} words",
            cover.dimension,
            cover.full_dimension,
            cover.depth_cap,
            cover.words.len()
        );
    }
    Ok(())
}
