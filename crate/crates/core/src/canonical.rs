//! The five canonical generator fields, the two traceless matrix generators of
//! `sl_m`, and exact verification of the bracket identities showing that the
//! canonical fields generate every polynomial vector field.

use std::fmt::Write as _;

use num_traits::Zero;
use serde::ser::SerializeMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{default_depth, lie_closure_until_full, LieSpanReport};
use crate::linalg::{ExactBasis, SparseVector};
use crate::poly::{rat, Monomial, PolyVectorField, Rational};

/// Dense square rational matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RatMatrix {
    n: usize,
    data: Vec<Rational>,
}

impl RatMatrix {
    pub fn zeros(n: usize) -> Self {
        RatMatrix {
            n,
            data: vec![Rational::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n);
        for i in 0..n {
            a[(i, i)] = rat(1, 1);
        }
        a
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidArgument("matrix must be square".into()));
            }
            data.extend(row);
        }
        Ok(RatMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<Rational>> {
        self.data.chunks(self.n.max(1)).map(<[_]>::to_vec).collect()
    }

    pub fn trace(&self) -> Rational {
        (0..self.n).fold(Rational::zero(), |acc, i| acc + self[(i, i)].clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] = out[(i, j)].clone() + a.clone() * b.clone();
                    }
                }
            }
        }
        out
    }

    /// Commutator `AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        let ab = self.mul(other);
        let ba = other.mul(self);
        RatMatrix {
            n: self.n,
            data: ab.data.into_iter().zip(ba.data).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    fn coordinates(&self) -> SparseVector<usize> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| (k, c.clone()))
            .collect()
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(
            self.n,
            self.n,
            &self
                .data
                .iter()
                .map(crate::poly::Coefficient::to_f64)
                .collect::<Vec<_>>(),
        )
    }

    pub fn linear_field(&self) -> PolyVectorField {
        PolyVectorField::linear(&self.rows()).expect("square matrix")
    }
}

impl std::ops::Index<(usize, usize)> for RatMatrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RatMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.n + j]
    }
}

fn require_dimension(m: usize) -> Result<()> {
    if m < 2 {
        Err(Error::InvalidArgument(format!(
            "ambient dimension must be at least 2, got {m}"
        )))
    } else {
        Ok(())
    }
}

/// `A = diag(i − (m+1)/2)`, `B` = ones off the diagonal.
pub fn sl_generators(m: usize) -> Result<(RatMatrix, RatMatrix)> {
    require_dimension(m)?;
    let mut a = RatMatrix::zeros(m);
    let mut b = RatMatrix::zeros(m);
    for i in 0..m {
        a[(i, i)] = rat(2 * (i as i64 + 1) - (m as i64 + 1), 2);
        for j in 0..m {
            if i != j {
                b[(i, j)] = rat(1, 1);
            }
        }
    }
    Ok((a, b))
}

/// Dimension of the matrix Lie algebra generated by `a` and `b`.
pub fn sl_closure_dimension(a: &RatMatrix, b: &RatMatrix) -> Result<usize> {
    let n = a.size();
    if b.size() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.size(),
        });
    }
    if !a.trace().is_zero() || !b.trace().is_zero() {
        return Err(Error::InvalidArgument("generators must be traceless".into()));
    }
    let gens = [a, b];
    let mut basis = ExactBasis::new();
    let mut frontier = Vec::new();
    for g in gens {
        if basis.insert(g.coordinates()) {
            frontier.push(g.clone());
        }
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for x in &frontier {
            for g in gens {
                let c = g.commutator(x);
                debug_assert!(c.trace().is_zero());
                if !c.is_zero() && basis.insert(c.coordinates()) {
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    Ok(basis.rank())
}

/// True iff `a`, `b` generate all traceless matrices under commutators.
pub fn verify_sl_generation(a: &RatMatrix, b: &RatMatrix) -> Result<bool> {
    let n = a.size();
    Ok(n >= 1 && sl_closure_dimension(a, b)? == n * n - 1)
}

/// The five canonical fields on `R^m` together with their matrices.
#[derive(Clone, Debug)]
pub struct CanonicalSystem {
    pub m: usize,
    pub a: RatMatrix,
    pub b: RatMatrix,
    /// `Ax`, `Bx`, `e_m`, `(x_m)^2 e_1`, `x_m x`.
    pub fields: Vec<PolyVectorField>,
}

pub fn canonical_five(m: usize) -> Result<CanonicalSystem> {
    let (a, b) = sl_generators(m)?;
    let last = m - 1;
    let mut xm2 = vec![0; m];
    xm2[last] = 2;
    let v3 = PolyVectorField::constant(m, last)?;
    let v4 = PolyVectorField::term(0, xm2, rat(1, 1))?;
    let mut v5 = PolyVectorField::zero(m);
    for i in 0..m {
        let mut alpha = vec![0; m];
        alpha[i] += 1;
        alpha[last] += 1;
        v5.add_term(i, Monomial::new(alpha), rat(1, 1))?;
    }
    let fields = vec![a.linear_field(), b.linear_field(), v3, v4, v5];
    Ok(CanonicalSystem { m, a, b, fields })
}

/// Closure of the canonical fields at degree cap `k`, deepening up to
/// [`default_depth`] and stopping once every field of degree ≤ `k` is reached.
pub fn degree_cover(m: usize, k: usize) -> Result<LieSpanReport> {
    let system = canonical_five(m)?;
    lie_closure_until_full(&system.fields, k, default_depth(m, k))
}

/// Whether the canonical fields reach every polynomial field of degree ≤ `k`.
pub fn degree_cover_check(m: usize, k: usize) -> Result<bool> {
    Ok(degree_cover(m, k)?.spans_all_polynomials())
}

/// One checked identity `lhs = rhs`.
#[derive(Clone, Debug)]
pub struct IdentityCheck {
    pub label: String,
    pub lhs: PolyVectorField,
    pub rhs: PolyVectorField,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }
}

/// Results of the generator identity suite in a fixed order.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub m: usize,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(IdentityCheck::holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.holds())
    }
}

impl Serialize for IdentityReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry {
            lhs: String,
            rhs: String,
            equal: bool,
        }
        let mut map = s.serialize_map(Some(self.checks.len()))?;
        for c in &self.checks {
            map.serialize_entry(
                &c.label,
                &Entry {
                    lhs: c.lhs.to_string(),
                    rhs: c.rhs.to_string(),
                    equal: c.holds(),
                },
            )?;
        }
        map.end()
    }
}

/// Builder for single-term fields `c · x^alpha ∂_i` with 1-based indices.
struct Terms {
    m: usize,
}

impl Terms {
    /// `coeff · Π x_v^p ∂_i`
    fn f(&self, coeff: i64, vars: &[(usize, u32)], i: usize) -> PolyVectorField {
        let mut alpha = vec![0; self.m];
        for &(v, p) in vars {
            alpha[v - 1] += p;
        }
        PolyVectorField::term(i - 1, alpha, rat(coeff, 1)).expect("index in range")
    }

    fn mono(&self, alpha: &[u32], i: usize) -> PolyVectorField {
        PolyVectorField::term(i - 1, alpha.to_vec(), rat(1, 1)).expect("index in range")
    }

    /// Euler-type field `x_m Σ_j x_j ∂_j`, the fifth canonical generator.
    fn xm_euler(&self) -> PolyVectorField {
        (1..=self.m).fold(PolyVectorField::zero(self.m), |acc, j| {
            acc.add(&self.f(1, &[(j, 1), (self.m, 1)], j)).unwrap()
        })
    }

    fn euler_times(&self, i: usize) -> PolyVectorField {
        (1..=self.m).fold(PolyVectorField::zero(self.m), |acc, j| {
            acc.add(&self.f(1, &[(i, 1), (j, 1)], j)).unwrap()
        })
    }
}

fn br(u: &PolyVectorField, v: &PolyVectorField) -> PolyVectorField {
    u.lie_bracket(v).expect("same dimension")
}

fn sum(fields: &[PolyVectorField]) -> PolyVectorField {
    let m = fields[0].dim();
    fields
        .iter()
        .fold(PolyVectorField::zero(m), |acc, f| acc.add(f).unwrap())
}

fn half(f: &PolyVectorField) -> PolyVectorField {
    f.scale(&rat(1, 2))
}

fn alpha_label(alpha: &[u32]) -> String {
    let mut s = String::from("(");
    for (n, a) in alpha.iter().enumerate() {
        if n > 0 {
            s.push(',');
        }
        let _ = write!(s, "{a}");
    }
    s.push(')');
    s
}

/// Exact check of every bracket identity used to show that `∂_m`, `x_m^2 ∂_1`,
/// `x_m Σ x_i ∂_i` and all linear fields generate every polynomial field,
/// instantiated at dimension `m`.
///
/// Three relations are easy to get wrong and are checked in their exact form
/// (labels marked `corrected`): the `-x_m^2 ∂_m` relation carries
/// an extra `2 x_{m-1} x_m ∂_{m-1}`, the `x_i Σ x_j ∂_j` relation needs no
/// `x_i x_m ∂_m` term, and the `α_1 = 0` induction case brackets with
/// `x^(α-e_i) ∂_i`. The identity direction among linear fields is checked
/// through `[V3, V5]`, since `V1`, `V2` and `[V3, V4]` are all traceless.
pub fn verify_appendix_identities(m: usize) -> Result<IdentityReport> {
    require_dimension(m)?;
    let t = Terms { m };
    let mut checks = Vec::new();
    let mut push = |label: String, lhs: PolyVectorField, rhs: PolyVectorField| {
        // some instances coincide for small m (e.g. j = m-1 in two chains)
        if !checks.iter().any(|c: &IdentityCheck| c.label == label) {
            checks.push(IdentityCheck { label, lhs, rhs });
        }
    };

    let system = canonical_five(m)?;
    push(
        "[V3,V4] = 2 x_m e_1".into(),
        t.f(2, &[(m, 1)], 1),
        br(&system.fields[2], &system.fields[3]),
    );
    // V1, V2, [V3, V4] only give traceless linear fields; the trace direction
    // comes from [V3, V5] = x + x_m e_m.
    push(
        "[V3,V5] = x + x_m e_m".into(),
        RatMatrix::identity(m).linear_field().add(&t.f(1, &[(m, 1)], m))?,
        br(&system.fields[2], &system.fields[4]),
    );

    for i in 1..m {
        push(
            format!("d_{i} = [d_{m}, x_{m} d_{i}]"),
            t.f(1, &[], i),
            br(&t.f(1, &[], m), &t.f(1, &[(m, 1)], i)),
        );
    }

    // chain descending from x_{m-1} x_m ∂_i (i ≤ m-2)
    for i in 1..m.saturating_sub(1) {
        push(
            format!("2 x_{}x_{m} d_{i} = [x_{} d_{m}, x_{m}^2 d_{i}]", m - 1, m - 1),
            t.f(2, &[(m - 1, 1), (m, 1)], i),
            br(&t.f(1, &[(m - 1, 1)], m), &t.f(1, &[(m, 2)], i)),
        );
        for j in (i + 1..m - 1).rev() {
            push(
                format!("x_{j}x_{m} d_{i} = [x_{j} d_{}, x_{}x_{m} d_{i}]", j + 1, j + 1),
                t.f(1, &[(j, 1), (m, 1)], i),
                br(&t.f(1, &[(j, 1)], j + 1), &t.f(1, &[(j + 1, 1), (m, 1)], i)),
            );
        }
    }

    // chain ascending from x_1 x_m ∂_i (i ≥ 2)
    for i in 2..=m {
        push(
            format!("2 x_1x_{m} d_{i} = [x_1 d_{m}, x_{m}^2 d_{i}]"),
            t.f(2, &[(1, 1), (m, 1)], i),
            br(&t.f(1, &[(1, 1)], m), &t.f(1, &[(m, 2)], i)),
        );
        for j in 2..i {
            push(
                format!("x_{j}x_{m} d_{i} = [x_{j} d_{}, x_{}x_{m} d_{i}]", j - 1, j - 1),
                t.f(1, &[(j, 1), (m, 1)], i),
                br(&t.f(1, &[(j, 1)], j - 1), &t.f(1, &[(j - 1, 1), (m, 1)], i)),
            );
        }
    }

    for i in 1..m {
        push(
            format!("x_{m}^2 d_{i} = [x_{m}^2 d_1, x_1 d_{i}]"),
            t.f(1, &[(m, 2)], i),
            br(&t.f(1, &[(m, 2)], 1), &t.f(1, &[(1, 1)], i)),
        );
    }

    let telescoping: Vec<_> = (1..m)
        .map(|i| br(&t.f(1, &[(i, 1)], i + 1), &t.f(1, &[(i + 1, 1), (m, 1)], i)).scale(&rat(2, 1)))
        .collect();
    push(
        format!("-x_{m}^2 d_{m} + 2 x_{}x_{m} d_{} = [x_{m}^2 d_1, x_1 d_{m}] + 2 sum_i [x_i d_(i+1), x_(i+1)x_{m} d_i] (corrected)", m - 1, m - 1),
        t.f(-1, &[(m, 2)], m).add(&t.f(2, &[(m - 1, 1), (m, 1)], m - 1))?,
        br(&t.f(1, &[(m, 2)], 1), &t.f(1, &[(1, 1)], m)).add(&sum(&telescoping))?,
    );

    push(
        format!("2 x_{}x_{m} d_{m} = [x_{} d_{m}, x_{m}^2 d_{m}]", m - 1, m - 1),
        t.f(2, &[(m - 1, 1), (m, 1)], m),
        br(&t.f(1, &[(m - 1, 1)], m), &t.f(1, &[(m, 2)], m)),
    );
    for j in (1..m - 1).rev() {
        push(
            format!("x_{j}x_{m} d_{m} = [x_{j} d_{}, x_{}x_{m} d_{m}]", j + 1, j + 1),
            t.f(1, &[(j, 1), (m, 1)], m),
            br(&t.f(1, &[(j, 1)], j + 1), &t.f(1, &[(j + 1, 1), (m, 1)], m)),
        );
    }

    for j in 1..m {
        for k in 1..m {
            push(
                format!("x_{j}x_{k} d_{m} = [x_{j} d_{m}, x_{k}x_{m} d_{m}]"),
                t.f(1, &[(j, 1), (k, 1)], m),
                br(&t.f(1, &[(j, 1)], m), &t.f(1, &[(k, 1), (m, 1)], m)),
            );
        }
        push(
            format!("2 x_{j}x_{m} d_{m} = [x_{j} d_{m}, x_{m}^2 d_{m}]"),
            t.f(2, &[(j, 1), (m, 1)], m),
            br(&t.f(1, &[(j, 1)], m), &t.f(1, &[(m, 2)], m)),
        );
    }

    for i in 1..m {
        push(
            format!("x_{i} sum_j x_j d_j = [x_{i} d_{m}, x_{m} sum_j x_j d_j] (corrected)"),
            t.euler_times(i),
            br(&t.f(1, &[(i, 1)], m), &t.xm_euler()),
        );
        push(
            format!("-x_{i}x_{m}^2 d_{m} = [x_{m}^2 d_{m}, x_{i} sum_j x_j d_j]"),
            t.f(-1, &[(i, 1), (m, 2)], m),
            br(&t.f(1, &[(m, 2)], m), &t.euler_times(i)),
        );
        push(
            format!("x_{i}x_{m} d_{i} = x_{m}^2 d_{m} + 1/2 [[d_{m}, x_{i}x_{m}^2 d_{m}], x_{m} d_{i}]"),
            t.f(1, &[(i, 1), (m, 1)], i),
            t.f(1, &[(m, 2)], m).add(&half(&br(
                &br(&t.f(1, &[], m), &t.f(1, &[(i, 1), (m, 2)], m)),
                &t.f(1, &[(m, 1)], i),
            )))?,
        );
        push(
            format!("x_{i}^2 d_{i} = [x_{i} d_{m}, x_{i}x_{m} d_{i}] + x_{i}x_{m} d_{m}"),
            t.f(1, &[(i, 2)], i),
            br(&t.f(1, &[(i, 1)], m), &t.f(1, &[(i, 1), (m, 1)], i)).add(&t.f(1, &[(i, 1), (m, 1)], m))?,
        );
        for j in (1..=m).filter(|&j| j != i) {
            push(
                format!("2 x_{i}x_{j} d_{i} = [x_{j} d_{i}, x_{i}^2 d_{i}]"),
                t.f(2, &[(i, 1), (j, 1)], i),
                br(&t.f(1, &[(j, 1)], i), &t.f(1, &[(i, 2)], i)),
            );
        }
    }

    // Induction step for x^alpha ∂_1, every alpha with |alpha| ∈ {3, 4}.
    for degree in [3u32, 4] {
        for mono in Monomial::all_up_to(m, degree)
            .into_iter()
            .filter(|a| a.degree() == degree)
        {
            let alpha = mono.exponents().to_vec();
            let label = alpha_label(&alpha);
            let target = t.mono(&alpha, 1);
            match alpha[0] {
                0 => {
                    let i = alpha.iter().position(|&a| a > 0).expect("nonzero degree") + 1;
                    let mut lowered = alpha.clone();
                    lowered[i - 1] -= 1;
                    push(
                        format!("alpha={label}: 2 x^alpha d_1 = [x^(alpha-e_{i}) d_{i}, x_{i}^2 d_1] (corrected)"),
                        target.scale(&rat(2, 1)),
                        br(&t.mono(&lowered, i), &t.f(1, &[(i, 2)], 1)),
                    );
                }
                3 => {
                    let mut beta = alpha.clone();
                    beta[0] = 0;
                    let mut x1beta = beta.clone();
                    x1beta[0] = 1;
                    let inner = br(&t.f(1, &[(1, 2)], 2), &t.f(1, &[(1, 1), (2, 1)], 1))
                        .add(&br(&t.f(1, &[(1, 2)], 1), &t.f(1, &[(1, 1), (2, 1)], 2)).scale(&rat(2, 1)))?;
                    push(
                        format!("alpha={label}: 2 x^alpha d_1 = [x_1 x^beta d_1, [x_1^2 d_2, x_1x_2 d_1] + 2 [x_1^2 d_1, x_1x_2 d_2]]"),
                        target.scale(&rat(2, 1)),
                        br(&t.mono(&x1beta, 1), &inner),
                    );
                }
                a1 => {
                    let mut lowered = alpha.clone();
                    lowered[0] -= 1;
                    push(
                        format!("alpha={label}: (3 - alpha_1) x^alpha d_1 = [x^(alpha-e_1) d_1, x_1^2 d_1]"),
                        target.scale(&rat(3 - i64::from(a1), 1)),
                        br(&t.mono(&lowered, 1), &t.f(1, &[(1, 2)], 1)),
                    );
                }
            }
        }
    }

    Ok(IdentityReport { m, checks })
}
