//! Exact Lie brackets of polynomial vector fields.
//!
//! Run with `cargo run --example lie_brackets`.

use codeflow::lie::LieWord;
use codeflow::poly::{rat, PolyVectorField};

fn main() -> codeflow::Result<()> {
    // V(x) = x^k on the line; [x, x^k] = (k - 1) x^k and [x^2, x^k] = (k - 2) x^{k+1}
    let x = PolyVectorField::term(0, vec![1], rat(1, 1))?;
    let x2 = PolyVectorField::term(0, vec![2], rat(1, 1))?;
    let x5 = PolyVectorField::term(0, vec![5], rat(1, 1))?;
    println!("[x, x^5]   = {}", x.lie_bracket(&x5)?);
    println!("[x^2, x^5] = {}", x2.lie_bracket(&x5)?);

    // linear fields: [Ax, Bx] = (BA - AB)x
    let a = PolyVectorField::linear(&[vec![rat(0, 1), rat(1, 1)], vec![rat(0, 1), rat(0, 1)]])?;
    let b = PolyVectorField::linear(&[vec![rat(0, 1), rat(0, 1)], vec![rat(1, 1), rat(0, 1)]])?;
    println!("[Ax, Bx]   = {}", a.lie_bracket(&b)?);

    // words over a generator list, evaluated exactly
    let word = LieWord::right_nested(&[0, 1, 0]).expect("non-empty");
    println!("{word} on (Ax, Bx) = {}", word.evaluate(&[a, b])?);

    let json = serde_json::to_string(&x5)?;
    println!("x^5 as JSON: {json}");
    let back: PolyVectorField = serde_json::from_str(&json)?;
    assert_eq!(back, x5);
    Ok(())
}
