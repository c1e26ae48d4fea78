use codeflow::canonical::canonical_five;
use codeflow::field::{compile_all, FieldRef};
use codeflow::flow::{integrate, integrate_with_variation, jacobian_bound, ControlPath};
use codeflow::linalg::operator_norm;
use codeflow::poly::PolyField;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

// scaled Taylor series, independent of the library exponential
fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let s = (a.norm().max(1.0).log2().ceil() as i32 + 4).max(0);
    let scaled = a / 2f64.powi(s);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn linear_fields(a: &DMatrix<f64>) -> Vec<FieldRef> {
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
    compile_all(&[PolyField::linear(&rows).unwrap()])
}

fn canonical() -> Vec<FieldRef> {
    compile_all(&canonical_five(2).unwrap().fields)
}

fn smooth_controls(steps: usize, scale: f64) -> ControlPath {
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|s| {
            let t = (s as f64 + 0.5) / steps as f64;
            (0..5)
                .map(|i| scale * ((i as f64 + 1.0) * 3.0 * t + i as f64).sin())
                .collect()
        })
        .collect();
    ControlPath::from_rows(&rows).unwrap()
}

#[test]
fn taylor_oracle_agrees_with_nalgebra() {
    let a = DMatrix::from_row_slice(3, 3, &[0.1, -1.2, 0.4, 0.9, -0.3, 0.0, 0.2, 0.5, 0.7]);
    assert!((taylor_expm(&a) - a.clone().exp()).amax() < 1e-12);
}

#[test]
fn linear_flow_matches_exponential() {
    let a = DMatrix::from_row_slice(2, 2, &[-0.4, 1.0, -0.8, 0.3]);
    let expected_j = taylor_expm(&a);
    let x0 = [0.6, -0.2];
    let traj = integrate_with_variation(&linear_fields(&a), &ControlPath::constant(64, &[1.0]).unwrap(), &x0).unwrap();
    let expected = &expected_j * DVector::from_column_slice(&x0);
    for (p, q) in traj.final_state().iter().zip(expected.iter()) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
    let j = traj.jacobians.as_ref().unwrap().last().unwrap();
    assert!((j - expected_j).amax() < 1e-8);
}

#[test]
fn variational_jacobian_matches_finite_differences() {
    let fields = canonical();
    let controls = smooth_controls(64, 0.8);
    let x0 = [0.3, -0.5];
    let traj = integrate_with_variation(&fields, &controls, &x0).unwrap();
    let j = traj.jacobians.as_ref().unwrap().last().unwrap();
    let h = 1e-6;
    for c in 0..2 {
        let mut xp = x0;
        let mut xm = x0;
        xp[c] += h;
        xm[c] -= h;
        let fp = integrate(&fields, &controls, &xp).unwrap();
        let fm = integrate(&fields, &controls, &xm).unwrap();
        for r in 0..2 {
            let fd = (fp.final_state()[r] - fm.final_state()[r]) / (2.0 * h);
            assert!(
                (fd - j[(r, c)]).abs() < 1e-7 * (1.0 + fd.abs()),
                "({r},{c}) {fd} vs {}",
                j[(r, c)]
            );
        }
    }
}

// flowing to the midpoint and restarting gives the same discrete map; Jacobians compose
#[test]
fn flows_compose_at_interval_boundaries() {
    let fields = canonical();
    let controls = smooth_controls(64, 0.7);
    let (first, second) = controls.values().split_at(32 * 5);
    let x0 = [0.1, 0.4];
    let full = integrate_with_variation(&fields, &controls, &x0).unwrap();
    // a 32-step path has step 1/32, so halving the controls keeps h·u fixed
    let half = |vals: &[f64]| {
        let rows: Vec<Vec<f64>> = vals.chunks(5).map(|r| r.iter().map(|v| v / 2.0).collect()).collect();
        ControlPath::from_rows(&rows).unwrap()
    };
    let ta = integrate_with_variation(&fields, &half(first), &x0).unwrap();
    let tb = integrate_with_variation(&fields, &half(second), ta.final_state()).unwrap();
    for (p, q) in tb.final_state().iter().zip(full.final_state()) {
        assert!((p - q).abs() < 1e-13);
    }
    let composed = tb.jacobians.as_ref().unwrap().last().unwrap() * ta.jacobians.as_ref().unwrap().last().unwrap();
    assert!((composed - full.jacobians.as_ref().unwrap().last().unwrap()).amax() < 1e-10);
}

#[test]
fn rk4_has_fourth_order_error_on_a_nonlinear_field() {
    let fields = canonical();
    let x0 = [0.2, 0.3];
    let u = [0.7, -0.4, 0.5, 0.9, 0.6];
    let reference = integrate(&fields, &ControlPath::constant(4096, &u).unwrap(), &x0).unwrap();
    let err = |m: usize| {
        let t = integrate(&fields, &ControlPath::constant(m, &u).unwrap(), &x0).unwrap();
        t.final_state()
            .iter()
            .zip(reference.final_state())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    for m in [16, 32, 64] {
        let ratio = err(m) / err(2 * m);
        assert!((12.0..=20.0).contains(&ratio), "M={m}: ratio {ratio}");
    }
}

#[test]
fn jacobian_bound_dominates_operator_norm() {
    let fields = canonical();
    let controls = smooth_controls(128, 1.5);
    let traj = integrate_with_variation(&fields, &controls, &[-0.6, 0.5]).unwrap();
    let bound = jacobian_bound(&fields, &controls, &traj).unwrap();
    let norm = operator_norm(traj.jacobians.as_ref().unwrap().last().unwrap());
    assert!(norm <= bound * (1.0 + 1e-6), "{norm} > {bound}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // distinct starting points never merge, and the reversed flow brings them back
    #[test]
    fn flow_is_invertible(
        p in proptest::collection::vec(-1.0f64..1.0, 2),
        q in proptest::collection::vec(-1.0f64..1.0, 2),
        scale in 0.1f64..1.0,
    ) {
        prop_assume!((p[0] - q[0]).abs() + (p[1] - q[1]).abs() > 1e-3);
        let fields = canonical();
        let controls = smooth_controls(128, scale);
        let fp = integrate(&fields, &controls, &p).unwrap();
        let fq = integrate(&fields, &controls, &q).unwrap();
        let gap: f64 = fp.final_state().iter().zip(fq.final_state()).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(gap > 1e-6);

        let rows: Vec<Vec<f64>> = (0..controls.steps()).rev().map(|s| controls.row(s).iter().map(|v| -v).collect()).collect();
        let back = integrate(&fields, &ControlPath::from_rows(&rows).unwrap(), fp.final_state()).unwrap();
        for (a, b) in back.final_state().iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_controls_fix_every_point(x in proptest::collection::vec(-5.0f64..5.0, 2), steps in 1usize..50) {
        let traj = integrate_with_variation(&canonical(), &ControlPath::zeros(steps, 5).unwrap(), &x).unwrap();
        prop_assert_eq!(traj.final_state(), &x[..]);
        prop_assert_eq!(traj.jacobians.as_ref().unwrap().last().unwrap(), &DMatrix::identity(2, 2));
    }
}
