//! One check per acceptance criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1` to see the lines in order.

use std::time::{Duration, Instant};

use codeflow::canonical::{
    canonical_five, degree_cover_check, sl_closure_dimension, sl_generators, verify_appendix_identities,
    verify_sl_generation,
};
use codeflow::experiment::{cmd_interpolate, commutator_sweep, CommutatorSpec, ExperimentConfig, TrainingSource};
use codeflow::field::{compile_all, FieldRef};
use codeflow::flow::{integrate, integrate_with_variation, jacobian_bound_profile, ControlPath};
use codeflow::lie::{
    interpolates_at_tuple, lie_closure_bounded, lyndon_words, poly_field_dimension, spanning_words, witt_dimension,
    FieldFamily, RANK_TOL,
};
use codeflow::linalg::operator_norm;
use codeflow::poly::PolyField;
use codeflow::random_fields::{
    neural_fields, polarization_field, reference_hat_fields, sample_polynomial_fields, FieldSampleSpec,
    NeuralFieldSpec, Nonlinearity,
};
use codeflow::region::BoxRegion;
use codeflow::trainer::{gradient, loss, train, ReadoutMode, TrainConfig, TrainingSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn square() -> BoxRegion {
    BoxRegion::cube(2, 1.0).unwrap()
}

fn canonical2() -> Vec<FieldRef> {
    compile_all(&canonical_five(2).unwrap().fields)
}

fn uniform_controls(rng: &mut ChaCha8Rng, steps: usize, scale: f64) -> ControlPath {
    ControlPath::new(
        steps,
        5,
        (0..steps * 5).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

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

fn identities() -> Outcome {
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut total = 0;
    for m in 2..=4 {
        let report = verify_appendix_identities(m).unwrap();
        total += report.checks.len();
        failed.extend(report.failures().map(|c| format!("m={m} {}", c.label)));
    }
    let elapsed = start.elapsed();
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(5),
        format!("{total} identities for m=2..4, {} failed, {elapsed:.2?}", failed.len()),
    )
}

fn degree_cover() -> Outcome {
    let start = Instant::now();
    let pairs = [(2, 0), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2)];
    let missing: Vec<_> = pairs
        .iter()
        .filter(|&&(m, k)| !degree_cover_check(m, k).unwrap())
        .collect();
    let elapsed = start.elapsed();
    outcome(
        missing.is_empty() && elapsed < Duration::from_secs(60),
        format!("{}/6 (m,k) pairs reach m·C(m+k,m), {elapsed:.2?}", 6 - missing.len()),
    )
}

fn sl_generation() -> Outcome {
    let dims: Vec<(usize, usize, bool)> = (2..=5)
        .map(|m| {
            let (a, b) = sl_generators(m).unwrap();
            (
                m,
                sl_closure_dimension(&a, &b).unwrap(),
                verify_sl_generation(&a, &b).unwrap(),
            )
        })
        .collect();
    let pass = dims.iter().all(|&(m, d, ok)| ok && d == m * m - 1);
    outcome(
        pass,
        format!("closure dimensions {:?}", dims.iter().map(|d| d.1).collect::<Vec<_>>()),
    )
}

fn witt() -> Outcome {
    let mut bad = Vec::new();
    for d in [2u64, 3, 5] {
        for n in 1..=8u64 {
            if witt_dimension(d, n).unwrap() != lyndon_words(d as usize, n as usize).len() as u128 {
                bad.push((d, n));
            }
        }
    }
    outcome(bad.is_empty(), format!("24 (d,n) pairs, mismatches {bad:?}"))
}

fn first_variation() -> Outcome {
    let fields = canonical2();
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = uniform_controls(&mut rng, 128, 1.0);
        let x0: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let traj = integrate_with_variation(&fields, &controls, &x0).unwrap();
        let jacobians = traj.jacobians.as_ref().unwrap();
        let j = jacobians.last().unwrap();
        let mut fd = DMatrix::zeros(2, 2);
        for c in 0..2 {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[c] += h;
            xm[c] -= h;
            let fp = integrate(&fields, &controls, &xp).unwrap();
            let fm = integrate(&fields, &controls, &xm).unwrap();
            for r in 0..2 {
                fd[(r, c)] = (fp.final_state()[r] - fm.final_state()[r]) / (2.0 * h);
            }
        }
        worst_rel = worst_rel.max((j - &fd).norm() / fd.norm());
        let bounds = jacobian_bound_profile(&fields, &controls, &traj).unwrap();
        for (js, b) in jacobians.iter().zip(&bounds) {
            worst_bound = worst_bound.max(operator_norm(js) / b);
        }
    }
    outcome(
        worst_rel <= 1e-4 && worst_bound <= 1.0 + 1e-6,
        format!("25 runs, worst relative error {worst_rel:.2e}, worst ‖J‖/bound {worst_bound:.4}"),
    )
}

fn commutator() -> Outcome {
    let spec = CommutatorSpec {
        times: vec![0.1, 0.05, 0.025, 0.0125],
        ..CommutatorSpec::default()
    };
    let rows = commutator_sweep(&spec).unwrap();
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].residual / w[1].residual).collect();
    let pass = ratios.iter().all(|r| (6.0..=10.0).contains(r));
    outcome(
        pass,
        format!(
            "ratios {:?}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn rk4_order() -> Outcome {
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 2.0, -1.5, 0.3]);
    let rows: Vec<Vec<f64>> = (0..2).map(|i| a.row(i).iter().copied().collect()).collect();
    let fields = compile_all(&[PolyField::linear(&rows).unwrap()]);
    let x0 = DVector::from_vec(vec![0.7, -0.4]);
    let exact = taylor_expm(&a) * &x0;
    let err = |m: usize| {
        let t = integrate(&fields, &ControlPath::constant(m, &[1.0]).unwrap(), x0.as_slice()).unwrap();
        (DVector::from_column_slice(t.final_state()) - &exact).norm()
    };
    let ratios: Vec<f64> = [16, 32, 64].iter().map(|&m| err(m) / err(2 * m)).collect();
    let pass = ratios.iter().all(|r| (12.0..=20.0).contains(r));
    outcome(
        pass,
        format!(
            "ratios for M=16,32,64: {:?}",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn universal_interpolation() -> Outcome {
    let fields = canonical2();
    let mut counts = Vec::new();
    let mut slowest = Duration::ZERO;
    for n in 1..=3u64 {
        let mut ok = 0;
        for seed in 0..20 {
            let ts = TrainingSet::random(square(), n as usize, 1000 * n + seed);
            let config = TrainConfig {
                steps: 64,
                tol: 1e-3,
                seed,
                ..TrainConfig::default()
            };
            let start = Instant::now();
            let result = train(&fields, &ts, &config).unwrap();
            let elapsed = start.elapsed();
            slowest = slowest.max(elapsed);
            if result.converged() && elapsed < Duration::from_secs(60) {
                ok += 1;
            }
        }
        counts.push(ok);
    }
    outcome(
        counts.iter().all(|&c| c >= 18),
        format!("converged for N=1,2,3: {counts:?} of 20, slowest run {slowest:.2?}"),
    )
}

fn generic_interpolation() -> Outcome {
    let words = spanning_words(&canonical_five(2).unwrap().fields, 4).unwrap();
    let mut converged = 0;
    let mut full_rank = 0;
    for seed in 0..20u64 {
        let polys = sample_polynomial_fields(&FieldSampleSpec::new(2, 5, 3, seed)).unwrap();
        let ts = TrainingSet::random(square(), 3, 500 + seed);
        let config = TrainConfig {
            steps: 64,
            tol: 1e-3,
            seed,
            readout: ReadoutMode::LambdaResidual { log_lambda: 0.0 },
            ..TrainConfig::default()
        };
        if train(&compile_all(&polys), &ts, &config).unwrap().converged() {
            converged += 1;
        }
        let family = FieldFamily::Float(polys.iter().map(|f| f.to_f64()).collect());
        let tuple: Vec<Vec<f64>> = ts.inputs().map(<[f64]>::to_vec).collect();
        if interpolates_at_tuple(&family, &words, &tuple, RANK_TOL).unwrap() {
            full_rank += 1;
        }
    }
    outcome(
        converged >= 18 && full_rank >= 19,
        format!(
            "{converged}/20 converged, {full_rank}/20 full rank with {} degree-≤4 words",
            words.len()
        ),
    )
}

fn neural_genericity() -> Outcome {
    let hat = reference_hat_fields(2).unwrap();
    let polarization = polarization_field(&hat).unwrap() == canonical_five(2).unwrap().fields[4];
    let closure = lie_closure_bounded(&hat, 2, 8).unwrap().dimension;
    let mut converged = 0;
    for seed in 0..20u64 {
        let fields = neural_fields(&NeuralFieldSpec {
            m: 2,
            seed,
            sigma: Nonlinearity::Tanh,
        })
        .unwrap();
        let ts = TrainingSet::random(square(), 2, 700 + seed);
        let config = TrainConfig {
            steps: 64,
            tol: 1e-3,
            seed,
            ..TrainConfig::default()
        };
        if train(&fields, &ts, &config).unwrap().converged() {
            converged += 1;
        }
    }
    let full = poly_field_dimension(2, 2);
    outcome(
        polarization && closure == full && converged >= 16,
        format!(
            "polarization exact: {polarization}, hat closure {closure}/{full}, tanh fields converged {converged}/20"
        ),
    )
}

fn gradient_exactness() -> Outcome {
    let fields = canonical2();
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = 1 + (seed as usize % 3);
        let steps = 2 + (seed as usize % 7);
        let ts = TrainingSet::random(square(), n, seed);
        let controls = uniform_controls(&mut rng, steps, 0.8);
        let reg = rng.random_range(0.0..0.5);
        let readout = if seed % 2 == 0 {
            ReadoutMode::Identity
        } else {
            ReadoutMode::LambdaResidual {
                log_lambda: rng.random_range(-0.5..0.5),
            }
        };
        let g = gradient(&fields, &controls, &readout, &ts, reg).unwrap();
        let f = |c: &ControlPath, r: &ReadoutMode| loss(&fields, c, r, &ts, reg).unwrap();
        // fourth-order central stencil
        let stencil = |at: &dyn Fn(f64) -> f64| {
            let e = 1e-3;
            (at(-2.0 * e) - 8.0 * at(-e) + 8.0 * at(e) - at(2.0 * e)) / (12.0 * e)
        };
        let mut check = |analytic: f64, fd: f64| {
            coords += 1;
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8));
        };
        for k in 0..controls.param_count() {
            let fd = stencil(&|d| {
                let mut p = controls.clone();
                p.values_mut()[k] += d;
                f(&p, &readout)
            });
            check(g.grad_u[k], fd);
        }
        if let ReadoutMode::LambdaResidual { log_lambda } = readout {
            let fd = stencil(&|d| {
                f(
                    &controls,
                    &ReadoutMode::LambdaResidual {
                        log_lambda: log_lambda + d,
                    },
                )
            });
            check(g.grad_log_lambda.unwrap(), fd);
        }
    }
    outcome(
        worst <= 1e-6,
        format!("25 instances, {coords} coordinates, worst relative error {worst:.2e}"),
    )
}

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::new(2);
    config.seed = Some(7);
    config.training = Some(TrainingSource::Random { n: 3, region: square() });
    config.trainer.max_iters = 500;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = cmd_interpolate(&config, a.path()).unwrap();
    let ob = cmd_interpolate(&config, b.path()).unwrap();
    let mut identical = oa.files.len() == ob.files.len() && !oa.files.is_empty();
    for (fa, fb) in oa.files.iter().zip(&ob.files) {
        identical &= std::fs::read(fa).unwrap() == std::fs::read(fb).unwrap();
    }
    outcome(identical, format!("{} output files compared", oa.files.len()))
}

fn report(n: usize, name: &str, check: fn() -> Outcome) {
    let o = check();
    println!(
        "{} criterion {n} ({name}): {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    assert!(o.pass, "criterion {n} ({name}) failed: {}", o.detail);
}

#[test]
fn criterion_01_identities() {
    report(1, "bracket identity suite", identities);
}

#[test]
fn criterion_02_degree_cover() {
    report(2, "polynomial degree cover", degree_cover);
}

#[test]
fn criterion_03_sl_generation() {
    report(3, "sl generation", sl_generation);
}

#[test]
fn criterion_04_witt() {
    report(4, "Witt formula", witt);
}

#[test]
fn criterion_05_first_variation() {
    report(5, "first variation", first_variation);
}

#[test]
fn criterion_06_commutator() {
    report(6, "commutator flow", commutator);
}

#[test]
fn criterion_07_rk4_order() {
    report(7, "RK4 order", rk4_order);
}

#[test]
fn criterion_08_universal_interpolation() {
    report(8, "universal interpolation", universal_interpolation);
}

#[test]
fn criterion_09_generic_interpolation() {
    report(9, "generic interpolation", generic_interpolation);
}

#[test]
fn criterion_10_neural_genericity() {
    report(10, "neural-type genericity", neural_genericity);
}

#[test]
fn criterion_11_gradient_exactness() {
    report(11, "gradient exactness", gradient_exactness);
}

#[test]
fn criterion_12_determinism() {
    report(12, "determinism", determinism);
}
