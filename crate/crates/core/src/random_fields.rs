//! Randomly sampled vector-field systems.
//!
//! Three constructions: dense random polynomial fields, small random
//! perturbations of given polynomial fields, and neural-type fields
//! `x ↦ σ_i(C_i x + b_i)` with a blended analytic nonlinearity.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::canonical::sl_generators;
use crate::error::{Error, Result};
use crate::field::{FieldRef, SmoothField};
use crate::lie::binomial;
use crate::poly::{rat, Monomial, PolyField, PolyVectorField, Rational};
use crate::region::BoxRegion;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientLaw {
    #[default]
    StandardNormal,
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl CoefficientLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        match *self {
            CoefficientLaw::StandardNormal => Ok(StandardNormal.sample(rng)),
            CoefficientLaw::Uniform { lo, hi } => {
                let u =
                    Uniform::new(lo, hi).map_err(|e| Error::InvalidArgument(format!("uniform({lo}, {hi}): {e}")))?;
                Ok(u.sample(rng))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSampleSpec {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub distribution: CoefficientLaw,
}

impl FieldSampleSpec {
    pub fn new(m: usize, d: usize, k: usize, seed: u64) -> Self {
        FieldSampleSpec {
            m,
            d,
            k,
            seed,
            distribution: CoefficientLaw::StandardNormal,
        }
    }

    /// Number of sampled real coefficients, `d·m·C(m+k, m)`.
    pub fn parameter_count(&self) -> usize {
        self.d * self.m * binomial(self.m + self.k, self.m)
    }
}

fn exact(v: f64) -> Result<Rational> {
    Rational::from_float(v).ok_or_else(|| Error::InvalidArgument(format!("coefficient {v} is not finite")))
}

/// Draws every coefficient of `d` fields of degree ≤ `k` independently.
///
/// Draw order: field, then component, then monomial in canonical order.
pub fn sample_polynomial_fields(spec: &FieldSampleSpec) -> Result<Vec<PolyVectorField>> {
    if spec.m < 2 || spec.d < 5 || spec.k < 2 {
        return Err(Error::InvalidArgument(format!(
            "sampling needs m ≥ 2, d ≥ 5 and k ≥ 2 (got m={}, d={}, k={})",
            spec.m, spec.d, spec.k
        )));
    }
    let monos = Monomial::all_up_to(spec.m, spec.k as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fields = Vec::with_capacity(spec.d);
    for _ in 0..spec.d {
        let mut field = PolyVectorField::zero(spec.m);
        for comp in 0..spec.m {
            for mono in &monos {
                let c = spec.distribution.draw(&mut rng)?;
                field.add_term(comp, mono.clone(), exact(c)?)?;
            }
        }
        fields.push(field);
    }
    Ok(fields)
}

/// Perturbed fields together with their closeness certificate.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub fields: Vec<PolyVectorField>,
    /// Half-width of the uniform coefficient perturbation.
    pub coefficient_radius: f64,
    /// Largest deviation `‖V_i − target_i‖` seen on the grid.
    pub grid_sup: f64,
    /// Grid maximum plus a Lipschitz margin for the gaps between grid points.
    pub certified_sup: f64,
}

/// Sup of `Π |x_j|^{α_j}` over the box, per monomial.
fn monomial_bound(alpha: &[u32], bounds: &[f64]) -> f64 {
    alpha.iter().zip(bounds).map(|(&a, &b)| b.powi(a as i32)).product()
}

/// Bound on the Lipschitz constant (Euclidean) of a polynomial field over the box.
fn lipschitz_bound(field: &PolyField<f64>, bounds: &[f64]) -> f64 {
    let m = field.dim();
    let mut total = 0.0;
    for comp in 0..m {
        let mut grad_sq = 0.0;
        for var in 0..m {
            let s: f64 = field
                .partial(comp, var)
                .iter()
                .map(|(mono, c)| c.abs() * monomial_bound(mono.exponents(), bounds))
                .sum();
            grad_sq += s * s;
        }
        total += grad_sq;
    }
    total.sqrt()
}

/// Degree-`k` polynomial fields uniformly within `epsilon` of `targets` on `region`.
///
/// Every coefficient of degree ≤ `k` of each target is moved by an
/// independent uniform draw from `[−δ, δ]`, with `δ` small enough that the
/// sup-norm deviation stays below `epsilon/2`. Targets must have degree ≤ `k`.
pub fn perturb_to_universal(
    targets: &[PolyVectorField],
    k: usize,
    epsilon: f64,
    region: &BoxRegion,
    seed: u64,
) -> Result<Perturbation> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if targets.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 target fields, got {}",
            targets.len()
        )));
    }
    let m = region.dim();
    for (i, t) in targets.iter().enumerate() {
        crate::error::check_dim(m, t.dim())?;
        if t.degree() > k as i64 {
            return Err(Error::InvalidArgument(format!(
                "target {} has degree {} above the cap {k}",
                i + 1,
                t.degree()
            )));
        }
    }
    let bounds = region.abs_bounds();
    let monos = Monomial::all_up_to(m, k as u32);
    let s: f64 = monos.iter().map(|mo| monomial_bound(mo.exponents(), &bounds)).sum();
    let radius = epsilon / (2.0 * (m as f64).sqrt() * s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = Uniform::new_inclusive(-radius, radius).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut fields = Vec::with_capacity(targets.len());
    let mut deltas = Vec::with_capacity(targets.len());
    for t in targets {
        let mut delta = PolyVectorField::zero(m);
        for comp in 0..m {
            for mono in &monos {
                delta.add_term(comp, mono.clone(), exact(law.sample(&mut rng))?)?;
            }
        }
        fields.push(t.add(&delta)?);
        deltas.push(delta.to_f64());
    }
    let n = grid_points_per_axis(m);
    let grid = region.grid(n);
    let spacing = region
        .lo()
        .iter()
        .zip(region.hi())
        .map(|(l, h)| ((h - l) / (n - 1) as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut grid_sup = 0.0f64;
    let mut certified_sup = 0.0f64;
    for delta in &deltas {
        let mut local = 0.0f64;
        for x in &grid {
            let v = delta.evaluate(x)?;
            local = local.max(v.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
        grid_sup = grid_sup.max(local);
        certified_sup = certified_sup.max(local + 0.5 * spacing * lipschitz_bound(delta, &bounds));
    }
    Ok(Perturbation {
        fields,
        coefficient_radius: radius,
        grid_sup,
        certified_sup,
    })
}

fn grid_points_per_axis(m: usize) -> usize {
    match m {
        1 => 1001,
        2 => 101,
        3 => 21,
        _ => 6,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Atan,
    #[default]
    Tanh,
}

impl Nonlinearity {
    fn value(self, r: f64) -> f64 {
        match self {
            Nonlinearity::Atan => r.atan(),
            Nonlinearity::Tanh => r.tanh(),
        }
    }

    fn derivative(self, r: f64) -> f64 {
        match self {
            Nonlinearity::Atan => 1.0 / (1.0 + r * r),
            Nonlinearity::Tanh => {
                let t = r.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralFieldSpec {
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub sigma: Nonlinearity,
}

/// All parameters of the seven neural-type fields.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralParams {
    pub sigma: Nonlinearity,
    /// Blend weights `(Z¹, Z²)`.
    pub z0: [f64; 2],
    pub c: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl NeuralParams {
    /// Standard normal draws, in the order `Z₀`, then `C_i, b_i` for i = 1..7.
    pub fn sample(spec: &NeuralFieldSpec) -> Result<Self> {
        if spec.m < 2 {
            return Err(Error::InvalidArgument(format!(
                "neural fields need m ≥ 2, got {}",
                spec.m
            )));
        }
        let m = spec.m;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let z0 = [normal(), normal()];
        let mut c = Vec::with_capacity(7);
        let mut b = Vec::with_capacity(7);
        for _ in 0..7 {
            c.push(DMatrix::from_fn(m, m, |_, _| normal()));
            b.push(DVector::from_fn(m, |_, _| normal()));
        }
        Ok(NeuralParams {
            sigma: spec.sigma,
            z0,
            c,
            b,
        })
    }

    /// The parameter value at which the fields become the seven hat fields.
    pub fn reference(m: usize, sigma: Nonlinearity) -> Result<Self> {
        let (a, bm) = sl_generators(m)?;
        let mut c4 = DMatrix::zeros(m, m);
        c4[(0, m - 1)] = 1.0;
        let mut c7 = DMatrix::zeros(m, m);
        for i in 0..m {
            c7[(i, m - 1)] = 1.0;
        }
        let c6 = DMatrix::identity(m, m);
        let c5 = &c6 + &c7;
        let c = vec![a.to_f64(), bm.to_f64(), DMatrix::zeros(m, m), c4, c5, c6, c7];
        let mut b = vec![DVector::zeros(m); 7];
        b[2][m - 1] = 1.0;
        Ok(NeuralParams {
            sigma,
            z0: [1.0, 1.0],
            c,
            b,
        })
    }

    pub fn fields(&self) -> Vec<FieldRef> {
        (0..7)
            .map(|i| {
                Arc::new(NeuralField {
                    c: self.c[i].clone(),
                    b: self.b[i].clone(),
                    sigma: self.sigma,
                    weight: if i < 3 { self.z0[0] } else { self.z0[1] },
                    power: if i < 3 { 1 } else { 2 },
                }) as FieldRef
            })
            .collect()
    }
}

/// `x ↦ σ_w(Cx + b)` componentwise, `σ_w(r) = w r^p + (1 − w) σ(r)`.
#[derive(Clone, Debug)]
pub struct NeuralField {
    c: DMatrix<f64>,
    b: DVector<f64>,
    sigma: Nonlinearity,
    weight: f64,
    power: u8,
}

impl NeuralField {
    fn pre_activation(&self, x: &[f64], i: usize) -> f64 {
        self.b[i] + (0..x.len()).map(|j| self.c[(i, j)] * x[j]).sum::<f64>()
    }

    fn blend(&self, r: f64) -> f64 {
        let poly = if self.power == 1 { r } else { r * r };
        self.weight * poly + (1.0 - self.weight) * self.sigma.value(r)
    }

    fn blend_derivative(&self, r: f64) -> f64 {
        let poly = if self.power == 1 { 1.0 } else { 2.0 * r };
        self.weight * poly + (1.0 - self.weight) * self.sigma.derivative(r)
    }
}

impl SmoothField for NeuralField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.blend(self.pre_activation(x, i));
        }
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for i in 0..m {
            let s = self.blend_derivative(self.pre_activation(x, i));
            for j in 0..m {
                out[i * m + j] = s * self.c[(i, j)];
            }
        }
    }
}

/// Seven randomly parameterized neural-type fields.
pub fn neural_fields(spec: &NeuralFieldSpec) -> Result<Vec<FieldRef>> {
    Ok(NeuralParams::sample(spec)?.fields())
}

/// The seven polynomial hat fields `Ax, Bx, e_m, (x_m)²e_1, ((x_i + x_m)²)_i, (x_i²)_i, (x_m²)_i`.
pub fn reference_hat_fields(m: usize) -> Result<Vec<PolyVectorField>> {
    let (a, b) = sl_generators(m)?;
    let last = m - 1;
    let one = rat(1, 1);
    let sq = |i: usize| {
        let mut alpha = vec![0u32; m];
        alpha[i] += 2;
        Monomial::new(alpha)
    };
    let mut v5 = PolyVectorField::zero(m);
    let mut v6 = PolyVectorField::zero(m);
    let mut v7 = PolyVectorField::zero(m);
    for i in 0..m {
        let mut cross = vec![0u32; m];
        cross[i] += 1;
        cross[last] += 1;
        v5.add_term(i, sq(i), one.clone())?;
        v5.add_term(i, Monomial::new(cross), rat(2, 1))?;
        v5.add_term(i, sq(last), one.clone())?;
        v6.add_term(i, sq(i), one.clone())?;
        v7.add_term(i, sq(last), one.clone())?;
    }
    let mut v4 = PolyVectorField::zero(m);
    v4.add_term(0, sq(last), one)?;
    Ok(vec![
        a.linear_field(),
        b.linear_field(),
        PolyVectorField::constant(m, last)?,
        v4,
        v5,
        v6,
        v7,
    ])
}

/// `½(V̂₅ − V̂₆ − V̂₇)`.
pub fn polarization_field(hat: &[PolyVectorField]) -> Result<PolyVectorField> {
    if hat.len() != 7 {
        return Err(Error::InvalidArgument(format!(
            "expected 7 hat fields, got {}",
            hat.len()
        )));
    }
    Ok(hat[4].sub(&hat[5])?.sub(&hat[6])?.scale(&rat(1, 2)))
}

/// Largest coefficient magnitude, handy for reporting sampled systems.
pub fn max_abs_coefficient(fields: &[PolyVectorField]) -> f64 {
    fields
        .iter()
        .flat_map(|f| f.terms().map(|(_, _, c)| c.abs()))
        .max()
        .map_or(0.0, |c| num_traits::ToPrimitive::to_f64(&c).unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::canonical_five;

    #[test]
    fn parameter_count_and_determinism() {
        let spec = FieldSampleSpec::new(2, 5, 2, 7);
        assert_eq!(spec.parameter_count(), 60);
        let a = sample_polynomial_fields(&spec).unwrap();
        let b = sample_polynomial_fields(&spec).unwrap();
        assert_eq!(a, b);
        let terms: usize = a.iter().map(|f| f.term_count()).sum();
        assert_eq!(terms, 60);
        let c = sample_polynomial_fields(&FieldSampleSpec::new(2, 5, 2, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_rejects_small_systems() {
        assert!(sample_polynomial_fields(&FieldSampleSpec::new(2, 4, 2, 0)).is_err());
        assert!(sample_polynomial_fields(&FieldSampleSpec::new(2, 5, 1, 0)).is_err());
        assert!(sample_polynomial_fields(&FieldSampleSpec::new(1, 5, 2, 0)).is_err());
    }

    #[test]
    fn uniform_law_respects_bounds() {
        let mut spec = FieldSampleSpec::new(2, 5, 2, 1);
        spec.distribution = CoefficientLaw::Uniform { lo: -0.5, hi: 0.25 };
        for f in sample_polynomial_fields(&spec).unwrap() {
            for (_, _, c) in f.terms() {
                assert!(*c >= rat(-1, 2) && *c < rat(1, 4));
            }
        }
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<FieldSampleSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn perturbation_stays_close() {
        let five = canonical_five(2).unwrap().fields;
        let region = BoxRegion::cube(2, 1.0).unwrap();
        let p = perturb_to_universal(&five, 2, 0.1, &region, 3).unwrap();
        assert!(p.grid_sup < 0.05 && p.certified_sup < 0.1);
        for x in region.grid(13) {
            for (v, t) in p.fields.iter().zip(&five) {
                let d: f64 = v
                    .evaluate(&x)
                    .unwrap()
                    .iter()
                    .zip(t.evaluate(&x).unwrap())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d < 0.1);
            }
        }
        assert!(perturb_to_universal(&five, 2, 0.0, &region, 3).is_err());
        assert!(perturb_to_universal(&five, 1, 0.1, &region, 3).is_err());
    }

    #[test]
    fn hat_fields_for_two_dimensions() {
        let hat = reference_hat_fields(2).unwrap();
        let x = [0.7, -1.3];
        let v5 = hat[4].evaluate(&x).unwrap();
        assert!((v5[0] - (0.7f64 - 1.3).powi(2)).abs() < 1e-12);
        assert!((v5[1] - (2.0f64 * -1.3).powi(2)).abs() < 1e-12);
        assert_eq!(hat[5].evaluate(&x).unwrap(), vec![0.7 * 0.7, 1.3 * 1.3]);
        let five = canonical_five(2).unwrap().fields;
        assert_eq!(polarization_field(&hat).unwrap(), five[4]);
        assert_eq!(&hat[..4], &five[..4]);
    }

    #[test]
    fn reference_neural_fields_are_hat_fields() {
        for m in [2, 3] {
            let params = NeuralParams::reference(m, Nonlinearity::Atan).unwrap();
            assert!(params.c[6].column(m - 1).iter().all(|&v| v == 1.0));
            let nf = params.fields();
            let hat = reference_hat_fields(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                for (n, h) in nf.iter().zip(&hat) {
                    let a = n.eval(&x).unwrap();
                    let b = h.evaluate(&x).unwrap();
                    for (p, q) in a.iter().zip(&b) {
                        assert!((p - q).abs() < 1e-12, "m={m}: {a:?} vs {b:?}");
                    }
                }
            }
        }
    }
}
