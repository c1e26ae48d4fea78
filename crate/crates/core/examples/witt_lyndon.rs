//! Dimensions of the graded pieces of a free Lie algebra, checked against
//! explicit Lyndon word enumeration.
//!
//! Run with `cargo run --example witt_lyndon`.

use codeflow::lie::{lyndon_words, witt_dimension};

fn main() -> codeflow::Result<()> {
    let d = 3;
    println!("n  dim   d^n    Lyndon");
    for n in 1..=7u64 {
        let dim = witt_dimension(d, n)?;
        let count = lyndon_words(d as usize, n as usize).len();
        println!("{n:<2} {dim:<5} {:<6} {count}", d.pow(n as u32));
        assert_eq!(dim, count as u128);
    }
    let words: Vec<String> = lyndon_words(2, 4)
        .iter()
        .map(|w| w.iter().map(|c| c.to_string()).collect())
        .collect();
    println!("Lyndon words of length 4 over {{1,2}}: {}", words.join(" "));
    Ok(())
}
