//! Sparse polynomial vector fields on `R^m` and their Lie brackets.
//!
//! A field `V = f_1 ∂_1 + ... + f_m ∂_m` is stored as one sparse polynomial
//! per component. Coefficients are generic over [`Coefficient`]; the exact
//! algebra uses [`Rational`] (arbitrary precision) and the numeric bracket
//! evaluation of randomly sampled fields uses `f64`.
//!
//! Bracket convention: `[U, V](x) = DV(x) U(x) - DU(x) V(x)`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Rational = BigRational;

/// Scalar type usable as polynomial coefficient.
pub trait Coefficient:
    Clone
    + PartialEq
    + fmt::Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_u32(n: u32) -> Self;
    fn to_f64(&self) -> f64;
}

impl Coefficient for Rational {
    fn from_u32(n: u32) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Coefficient for f64 {
    fn from_u32(n: u32) -> Self {
        f64::from(n)
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Shorthand for the rational `num/den`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Exponent vector `alpha` of the monomial `x^alpha`.
///
/// Ordered by total degree first, then lexicographically by exponents.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(alpha: Vec<u32>) -> Self {
        Monomial(alpha)
    }

    pub fn one(dim: usize) -> Self {
        Monomial(vec![0; dim])
    }

    /// `x_var` (0-based variable index).
    pub fn var(dim: usize, var: usize) -> Self {
        let mut alpha = vec![0; dim];
        alpha[var] = 1;
        Monomial(alpha)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Returns `(alpha_var, x^(alpha - e_var))`, or `None` when `alpha_var = 0`.
    fn differentiate(&self, var: usize) -> Option<(u32, Monomial)> {
        let power = self.0[var];
        if power == 0 {
            return None;
        }
        let mut alpha = self.0.clone();
        alpha[var] -= 1;
        Some((power, Monomial(alpha)))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product()
    }

    /// All exponent vectors in `dim` variables of total degree at most `max_degree`,
    /// in canonical order.
    pub fn all_up_to(dim: usize, max_degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0u32; dim];
            compositions(dim, degree, 0, &mut current, &mut out);
        }
        out.sort();
        out
    }
}

fn compositions(dim: usize, remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if pos + 1 == dim {
        current[pos] = remaining;
        out.push(Monomial(current.clone()));
        current[pos] = 0;
        return;
    }
    for p in 0..=remaining {
        current[pos] = p;
        compositions(dim, remaining - p, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &p) in self.0.iter().enumerate() {
            if p == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if p == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, p)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

type ScalarPoly<C> = BTreeMap<Monomial, C>;

fn poly_add_term<C: Coefficient>(p: &mut ScalarPoly<C>, mono: Monomial, coeff: C) {
    if coeff.is_zero() {
        return;
    }
    match p.get_mut(&mono) {
        Some(existing) => {
            let sum = existing.clone() + coeff;
            if sum.is_zero() {
                p.remove(&mono);
            } else {
                *existing = sum;
            }
        }
        None => {
            p.insert(mono, coeff);
        }
    }
}

fn poly_derivative<C: Coefficient>(p: &ScalarPoly<C>, var: usize) -> ScalarPoly<C> {
    let mut out = ScalarPoly::new();
    for (mono, c) in p {
        if let Some((power, lowered)) = mono.differentiate(var) {
            poly_add_term(&mut out, lowered, c.clone() * C::from_u32(power));
        }
    }
    out
}

/// `acc += sign * a * b`
fn poly_mul_acc<C: Coefficient>(acc: &mut ScalarPoly<C>, a: &ScalarPoly<C>, b: &ScalarPoly<C>, negate: bool) {
    for (ma, ca) in a {
        for (mb, cb) in b {
            let c = ca.clone() * cb.clone();
            poly_add_term(acc, ma.mul(mb), if negate { -c } else { c });
        }
    }
}

/// Polynomial vector field on `R^m` in canonical sparse form.
#[derive(Clone, PartialEq, Debug)]
pub struct PolyField<C> {
    dim: usize,
    components: Vec<ScalarPoly<C>>,
}

/// Exact-coefficient polynomial vector field.
pub type PolyVectorField = PolyField<Rational>;

impl<C: Coefficient> PolyField<C> {
    pub fn zero(dim: usize) -> Self {
        PolyField {
            dim,
            components: vec![ScalarPoly::new(); dim],
        }
    }

    /// Field with the single term `coeff * x^alpha ∂_component` (0-based component).
    pub fn term(component: usize, alpha: Vec<u32>, coeff: C) -> Result<Self> {
        let dim = alpha.len();
        let mut field = Self::zero(dim);
        field.add_term(component, Monomial(alpha), coeff)?;
        Ok(field)
    }

    /// Builds a field from `(component, alpha, coeff)` triples; repeated monomials are summed.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Vec<u32>, C)>,
    {
        let mut field = Self::zero(dim);
        for (component, alpha, coeff) in terms {
            field.add_term(component, Monomial(alpha), coeff)?;
        }
        Ok(field)
    }

    /// Linear field `x ↦ A x` from a row-major square matrix.
    pub fn linear(matrix: &[Vec<C>]) -> Result<Self> {
        let dim = matrix.len();
        let mut field = Self::zero(dim);
        for (i, row) in matrix.iter().enumerate() {
            check_dim(dim, row.len())?;
            for (j, a) in row.iter().enumerate() {
                field.add_term(i, Monomial::var(dim, j), a.clone())?;
            }
        }
        Ok(field)
    }

    /// Constant field `e_component`.
    pub fn constant(dim: usize, component: usize) -> Result<Self> {
        let mut field = Self::zero(dim);
        field.add_term(component, Monomial::one(dim), C::one())?;
        Ok(field)
    }

    pub fn add_term(&mut self, component: usize, mono: Monomial, coeff: C) -> Result<()> {
        check_dim(self.dim, mono.dim())?;
        if component >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "component {component} out of range for dimension {}",
                self.dim
            )));
        }
        poly_add_term(&mut self.components[component], mono, coeff);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Component polynomials as sorted `(monomial, coefficient)` maps.
    pub fn components(&self) -> &[BTreeMap<Monomial, C>] {
        &self.components
    }

    /// Iterates `(component, monomial, coefficient)` in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &Monomial, &C)> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(j, p)| p.iter().map(move |(m, c)| (j, m, c)))
    }

    pub fn term_count(&self) -> usize {
        self.components.iter().map(BTreeMap::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(BTreeMap::is_empty)
    }

    /// Highest total degree among stored monomials; `-1` for the zero field.
    pub fn degree(&self) -> i64 {
        self.components
            .iter()
            .filter_map(|p| p.keys().next_back())
            .map(|m| i64::from(m.degree()))
            .max()
            .unwrap_or(-1)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        for (j, p) in other.components.iter().enumerate() {
            for (m, c) in p {
                poly_add_term(&mut out.components[j], m.clone(), c.clone());
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, factor: &C) -> Self {
        if factor.is_zero() {
            return Self::zero(self.dim);
        }
        let components = self
            .components
            .iter()
            .map(|p| {
                p.iter()
                    .map(|(m, c)| (m.clone(), c.clone() * factor.clone()))
                    .filter(|(_, c)| !c.is_zero())
                    .collect()
            })
            .collect();
        PolyField {
            dim: self.dim,
            components,
        }
    }

    /// Symbolic partial derivative `∂ V^component / ∂ x_var`.
    pub fn partial(&self, component: usize, var: usize) -> BTreeMap<Monomial, C> {
        poly_derivative(&self.components[component], var)
    }

    /// Exact bracket `[U, V] = DV·U − DU·V`.
    pub fn lie_bracket(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let dim = self.dim;
        let mut out = Self::zero(dim);
        for var in 0..dim {
            let u_var = &self.components[var];
            let v_var = &other.components[var];
            if u_var.is_empty() && v_var.is_empty() {
                continue;
            }
            for k in 0..dim {
                if !u_var.is_empty() {
                    let dv = poly_derivative(&other.components[k], var);
                    poly_mul_acc(&mut out.components[k], u_var, &dv, false);
                }
                if !v_var.is_empty() {
                    let du = poly_derivative(&self.components[k], var);
                    poly_mul_acc(&mut out.components[k], v_var, &du, true);
                }
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self
            .components
            .iter()
            .map(|p| p.iter().map(|(m, c)| c.to_f64() * m.eval(x)).sum())
            .collect())
    }

    /// Row-major `m × m` Jacobian, entry `(i, j) = ∂V^i/∂x_j (x)`.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        check_dim(self.dim, x.len())?;
        let dim = self.dim;
        Ok(nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
            self.partial(i, j).iter().map(|(m, c)| c.to_f64() * m.eval(x)).sum()
        }))
    }

    /// Converts coefficients to another scalar type.
    pub fn map_coefficients<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> PolyField<D> {
        let mut out = PolyField::<D>::zero(self.dim);
        for (j, m, c) in self.terms() {
            poly_add_term(&mut out.components[j], m.clone(), f(c));
        }
        out
    }

    pub fn to_f64(&self) -> PolyField<f64> {
        self.map_coefficients(|c| c.to_f64())
    }
}

impl PolyVectorField {
    /// Exact conversion of an `f64`-coefficient field (every finite double is a rational).
    pub fn from_f64_field(field: &PolyField<f64>) -> Result<Self> {
        let mut out = Self::zero(field.dim());
        for (j, m, c) in field.terms() {
            let r = Rational::from_float(*c)
                .ok_or_else(|| Error::InvalidArgument(format!("non-finite coefficient {c}")))?;
            out.add_term(j, m.clone(), r)?;
        }
        Ok(out)
    }
}

impl<C: Coefficient + fmt::Display> fmt::Display for PolyField<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (j, p) in self.components.iter().enumerate() {
            if p.is_empty() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            f.write_str("(")?;
            for (n, (m, c)) in p.iter().enumerate() {
                if n > 0 {
                    f.write_str(" + ")?;
                }
                write!(f, "{c}*{m}")?;
            }
            write!(f, ")d{}", j + 1)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    alpha: Vec<u32>,
    num: String,
    den: String,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    m: usize,
    components: Vec<Vec<TermJson>>,
}

impl Serialize for PolyVectorField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let components = self
            .components
            .iter()
            .map(|p| {
                p.iter()
                    .map(|(m, c)| TermJson {
                        alpha: m.0.clone(),
                        num: c.numer().to_string(),
                        den: c.denom().to_string(),
                    })
                    .collect()
            })
            .collect();
        FieldJson {
            m: self.dim,
            components,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolyVectorField {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = FieldJson::deserialize(deserializer)?;
        if raw.components.len() != raw.m {
            return Err(D::Error::custom(format!(
                "expected {} components, found {}",
                raw.m,
                raw.components.len()
            )));
        }
        let mut field = PolyVectorField::zero(raw.m);
        for (j, terms) in raw.components.into_iter().enumerate() {
            for t in terms {
                let num: BigInt = t.num.parse().map_err(D::Error::custom)?;
                let den: BigInt = t.den.parse().map_err(D::Error::custom)?;
                if den.is_zero() {
                    return Err(D::Error::custom("zero denominator"));
                }
                field
                    .add_term(j, Monomial(t.alpha), Rational::new(num, den))
                    .map_err(D::Error::custom)?;
            }
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(dim: usize, powers: &[(usize, u32)]) -> Vec<u32> {
        let mut alpha = vec![0; dim];
        for &(v, p) in powers {
            alpha[v] += p;
        }
        alpha
    }

    #[test]
    fn monomial_order_is_degree_then_lex() {
        let a = Monomial::new(vec![2, 0]);
        let b = Monomial::new(vec![0, 3]);
        let c = Monomial::new(vec![1, 1]);
        assert!(a < b);
        assert!(c < a);
        assert_eq!(Monomial::all_up_to(2, 2).len(), 6);
        assert_eq!(Monomial::all_up_to(3, 2).len(), 10);
    }

    #[test]
    fn zero_field_has_degree_minus_one() {
        let z = PolyVectorField::zero(3);
        assert_eq!(z.degree(), -1);
        assert_eq!(z.evaluate(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn add_drops_cancelled_terms() {
        let v = PolyVectorField::from_terms(2, [(0, x(2, &[(1, 2)]), rat(3, 2)), (1, x(2, &[]), rat(-1, 1))]).unwrap();
        let sum = v.add(&v.scale(&rat(-1, 1))).unwrap();
        assert!(sum.is_zero());
        assert_eq!(sum.term_count(), 0);
        assert_eq!(v.scale(&rat(1, 1)), v);
        assert!(v.scale(&rat(0, 1)).is_zero());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = PolyVectorField::zero(2);
        let b = PolyVectorField::zero(3);
        assert_eq!(
            a.lie_bracket(&b),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        );
        assert!(a.evaluate(&[1.0]).is_err());
        assert!(a.jacobian_at(&[1.0, 2.0, 3.0]).is_err());
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn one_dimensional_power_brackets() {
        // [x^2, x^k] = (k - 2) x^(k+1)
        let u = PolyVectorField::term(0, vec![2], rat(1, 1)).unwrap();
        for k in 0..7u32 {
            let v = PolyVectorField::term(0, vec![k], rat(1, 1)).unwrap();
            let expected = PolyVectorField::term(0, vec![k + 1], rat(i64::from(k) - 2, 1)).unwrap();
            assert_eq!(u.lie_bracket(&v).unwrap(), expected, "k = {k}");
        }
    }

    #[test]
    fn linear_fields_bracket_to_commutator() {
        let a = vec![vec![rat(1, 1), rat(2, 1)], vec![rat(0, 1), rat(-1, 1)]];
        let b = vec![vec![rat(0, 1), rat(1, 1)], vec![rat(3, 1), rat(5, 1)]];
        let u = PolyVectorField::linear(&a).unwrap();
        let v = PolyVectorField::linear(&b).unwrap();
        // DV·U − DU·V = (BA − AB)x
        let mut c = vec![vec![rat(0, 1); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = rat(0, 1);
                for k in 0..2 {
                    s = s + b[i][k].clone() * a[k][j].clone() - a[i][k].clone() * b[k][j].clone();
                }
                c[i][j] = s;
            }
        }
        assert_eq!(u.lie_bracket(&v).unwrap(), PolyVectorField::linear(&c).unwrap());
    }

    #[test]
    fn self_bracket_vanishes() {
        let v = PolyVectorField::from_terms(
            2,
            [
                (0, x(2, &[(0, 1), (1, 1)]), rat(2, 3)),
                (1, x(2, &[(1, 2)]), rat(-5, 1)),
            ],
        )
        .unwrap();
        assert!(v.lie_bracket(&v).unwrap().is_zero());
    }

    #[test]
    fn json_round_trip_keeps_exact_coefficients() {
        let v = PolyVectorField::from_terms(2, [(0, x(2, &[(0, 1)]), rat(1, 3)), (1, x(2, &[(0, 2)]), rat(-7, 11))])
            .unwrap();
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("\"num\":\"-7\""));
        let back: PolyVectorField = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn json_rejects_bad_shapes() {
        let bad = r#"{"m":2,"components":[[]]}"#;
        assert!(serde_json::from_str::<PolyVectorField>(bad).is_err());
        let bad = r#"{"m":2,"components":[[{"alpha":[1],"num":"1","den":"1"}],[]]}"#;
        assert!(serde_json::from_str::<PolyVectorField>(bad).is_err());
        let bad = r#"{"m":1,"components":[[{"alpha":[1],"num":"1","den":"0"}]]}"#;
        assert!(serde_json::from_str::<PolyVectorField>(bad).is_err());
    }

    #[test]
    fn f64_conversion_is_exact() {
        let f = PolyField::<f64>::from_terms(2, [(0, vec![1, 0], 0.1), (1, vec![0, 2], -3.25)]).unwrap();
        let exact = PolyVectorField::from_f64_field(&f).unwrap();
        assert_eq!(exact.to_f64(), f);
    }
}
