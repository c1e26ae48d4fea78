//! Numeric vector fields: value and Jacobian evaluators.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result};
use crate::poly::{Coefficient, PolyField};

/// A vector field on `R^m` that can be evaluated together with its Jacobian.
///
/// The `*_into` methods are the hot path used by the integrators; they must
/// not allocate. `jacobian_into` writes a row-major `m × m` matrix.
pub trait SmoothField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        let m = self.dim();
        check_dim(m, x.len())?;
        let mut out = vec![0.0; m * m];
        self.jacobian_into(x, &mut out);
        Ok(nalgebra::DMatrix::from_row_slice(m, m, &out))
    }
}

pub type FieldRef = Arc<dyn SmoothField>;

#[derive(Clone, Debug)]
struct FloatTerm {
    exponents: Vec<u32>,
    coeff: f64,
}

/// `f64` evaluator for a polynomial field with precomputed partial derivatives.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    dim: usize,
    values: Vec<Vec<FloatTerm>>,
    // row-major (i, j) -> terms of ∂V^i/∂x_j
    partials: Vec<Vec<FloatTerm>>,
}

impl CompiledPoly {
    pub fn new<C: Coefficient>(field: &PolyField<C>) -> Self {
        let dim = field.dim();
        let collect = |poly: &std::collections::BTreeMap<crate::poly::Monomial, C>| -> Vec<FloatTerm> {
            poly.iter()
                .map(|(m, c)| FloatTerm {
                    exponents: m.exponents().to_vec(),
                    coeff: c.to_f64(),
                })
                .collect()
        };
        let values: Vec<_> = field.components().iter().map(collect).collect();
        let mut partials = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                partials.push(collect(&field.partial(i, j)));
            }
        }
        CompiledPoly { dim, values, partials }
    }

    fn eval_terms(terms: &[FloatTerm], x: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in terms {
            let mut v = t.coeff;
            for (&p, &xi) in t.exponents.iter().zip(x) {
                match p {
                    0 => {}
                    1 => v *= xi,
                    2 => v *= xi * xi,
                    _ => v *= xi.powi(p as i32),
                }
            }
            total += v;
        }
        total
    }
}

impl SmoothField for CompiledPoly {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.values) {
            *o = Self::eval_terms(terms, x);
        }
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.partials) {
            *o = Self::eval_terms(terms, x);
        }
    }
}

/// Compiles a list of polynomial fields into shareable numeric fields.
pub fn compile_all<C: Coefficient>(fields: &[PolyField<C>]) -> Vec<FieldRef> {
    fields
        .iter()
        .map(|f| Arc::new(CompiledPoly::new(f)) as FieldRef)
        .collect()
}

/// Central-difference Jacobian of `field` at `x`, used for consistency checks.
pub fn finite_difference_jacobian(field: &dyn SmoothField, x: &[f64], step: f64) -> Result<nalgebra::DMatrix<f64>> {
    let m = field.dim();
    check_dim(m, x.len())?;
    let mut jac = nalgebra::DMatrix::zeros(m, m);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        xp[j] = x[j] + step;
        field.eval_into(&xp, &mut fp);
        xp[j] = x[j] - step;
        field.eval_into(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, PolyVectorField};

    #[test]
    fn compiled_matches_symbolic_evaluation() {
        let v = PolyVectorField::from_terms(
            2,
            [
                (0, vec![3, 0], rat(1, 2)),
                (0, vec![1, 1], rat(-2, 1)),
                (1, vec![0, 4], rat(3, 1)),
                (1, vec![0, 0], rat(1, 1)),
            ],
        )
        .unwrap();
        let c = CompiledPoly::new(&v);
        let x = [0.3, -1.7];
        let a = v.evaluate(&x).unwrap();
        let b = c.eval(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let ja = v.jacobian_at(&x).unwrap();
        let jb = c.jacobian(&x).unwrap();
        assert!((ja - jb).amax() < 1e-12);
    }

    #[test]
    fn eval_checks_dimension() {
        let c = CompiledPoly::new(&PolyVectorField::zero(3));
        assert!(c.eval(&[1.0, 2.0]).is_err());
        assert!(c.jacobian(&[1.0]).is_err());
    }
}
