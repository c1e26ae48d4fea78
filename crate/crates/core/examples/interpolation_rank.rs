//! Rank test for point tuples: stack bracket fields evaluated at N points and
//! check for full row rank mN.
//!
//! Run with `cargo run --release --example interpolation_rank`.

use codeflow::canonical::canonical_five;
use codeflow::lie::{interpolation_matrix, rank_report, spanning_words, FieldFamily, LieWord, RANK_TOL};
use codeflow::random_fields::{sample_polynomial_fields, FieldSampleSpec};

fn main() -> codeflow::Result<()> {
    let five = canonical_five(2)?.fields;
    let tuple = vec![vec![0.3, -0.5], vec![-0.7, 0.2], vec![0.9, 0.8]];

    // the generators alone give only 5 columns for 6 rows
    let leaves: Vec<_> = (0..5).map(LieWord::leaf).collect();
    let exact = FieldFamily::Exact(five.clone());
    let r = rank_report(&interpolation_matrix(&exact, &leaves, &tuple)?, RANK_TOL);
    println!("generators only: {}x{} rank {}", r.rows, r.cols, r.rank);

    let words = spanning_words(&five, 3)?;
    let r = rank_report(&interpolation_matrix(&exact, &words, &tuple)?, RANK_TOL);
    println!(
        "degree ≤ 3 words: {}x{} rank {} (σ_min {:.3e})",
        r.rows, r.cols, r.rank, r.smallest_singular_value
    );

    // the same words on randomly sampled cubic fields
    for seed in 0..5 {
        let sampled = sample_polynomial_fields(&FieldSampleSpec::new(2, 5, 3, seed))?;
        let fam = FieldFamily::Float(sampled.iter().map(|f| f.to_f64()).collect());
        let r = rank_report(&interpolation_matrix(&fam, &words, &tuple)?, RANK_TOL);
        println!("sampled seed {seed}: rank {} full = {}", r.rank, r.full_row_rank);
    }
    Ok(())
}
