//! JSON-configured experiments behind the `codeflow` command line.
//!
//! Every runner is deterministic given its config and seed, writes its files
//! into the output directory and returns a summary together with the process
//! exit code it implies.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_five, degree_cover, sl_closure_dimension, sl_generators, verify_appendix_identities};
use crate::error::{check_dim, Error, Result};
use crate::field::{compile_all, FieldRef};
use crate::flow::{commutator_flow_residual, fmt_float, integrate, integrate_with_variation, ControlPath};
use crate::lie::{
    interpolation_matrix, lyndon_words, rank_report, spanning_words, witt_dimension, FieldFamily, LieWord, RankReport,
    RANK_TOL,
};
use crate::poly::PolyVectorField;
use crate::random_fields::{
    neural_fields, reference_hat_fields, sample_polynomial_fields, FieldSampleSpec, NeuralFieldSpec,
};
use crate::region::BoxRegion;
use crate::trainer::{train, validate_training_set, TrainConfig, TrainStatus, TrainingSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_BLOW_UP: i32 = 5;

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "CODEFLOW_OUT";

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        Error::DuplicatePoint { .. }
        | Error::DuplicateInput { .. }
        | Error::DuplicateTarget { .. }
        | Error::OutOfRegion { .. }
        | Error::DimensionMismatch { .. }
        | Error::Parse(_)
        | Error::WordTooLong(_) => EXIT_VALIDATION,
        Error::InvalidArgument(_) | Error::Io(_) => EXIT_USAGE,
    }
}

/// Output directory: `CODEFLOW_OUT`, else `--out`, else `./out`.
pub fn resolve_out_dir(cli: Option<PathBuf>) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cli.unwrap_or_else(|| PathBuf::from("out")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSource {
    /// `Ax, Bx, e_m, x_m² e_1, x_m x`.
    Canonical,
    /// The seven reference polynomial fields of the neural construction.
    HatFields,
    SamplePoly {
        spec: FieldSampleSpec,
    },
    Neural {
        spec: NeuralFieldSpec,
    },
    /// JSON array of polynomial fields.
    File {
        path: PathBuf,
    },
}

/// Fields ready for integration and for the rank test.
pub struct BuiltFields {
    pub numeric: Vec<FieldRef>,
    pub family: FieldFamily,
    /// Exact fields whose closure supplies the rank-test words, if any.
    pub reference: Option<Vec<PolyVectorField>>,
}

impl BuiltFields {
    /// Words for the rank test at degree cap `n`; first-level brackets for numeric-only fields.
    pub fn words(&self, degree_cap: usize) -> Result<Vec<LieWord>> {
        match &self.reference {
            Some(r) => spanning_words(r, degree_cap),
            None => Ok(first_level_words(self.numeric.len())),
        }
    }
}

/// All generators followed by every bracket `[i, j]`, `i < j`.
pub fn first_level_words(d: usize) -> Vec<LieWord> {
    let mut words: Vec<_> = (0..d).map(LieWord::leaf).collect();
    for i in 0..d {
        for j in i + 1..d {
            words.push(LieWord::bracket(LieWord::leaf(i), LieWord::leaf(j)));
        }
    }
    words
}

impl FieldSource {
    pub fn build(&self, m: usize) -> Result<BuiltFields> {
        let poly = |fields: Vec<PolyVectorField>, reference: Vec<PolyVectorField>| -> Result<BuiltFields> {
            for f in &fields {
                check_dim(m, f.dim())?;
            }
            Ok(BuiltFields {
                numeric: compile_all(&fields),
                family: FieldFamily::Float(fields.iter().map(PolyVectorField::to_f64).collect()),
                reference: Some(reference),
            })
        };
        match self {
            FieldSource::Canonical => {
                let f = canonical_five(m)?.fields;
                poly(f.clone(), f)
            }
            FieldSource::HatFields => {
                let f = reference_hat_fields(m)?;
                poly(f.clone(), f)
            }
            FieldSource::SamplePoly { spec } => {
                check_dim(m, spec.m)?;
                let f = sample_polynomial_fields(spec)?;
                // words over the first five letters, witnessed by the canonical system
                poly(f, canonical_five(m)?.fields)
            }
            FieldSource::Neural { spec } => {
                check_dim(m, spec.m)?;
                let numeric = neural_fields(spec)?;
                Ok(BuiltFields {
                    family: FieldFamily::Numeric(numeric.clone()),
                    numeric,
                    reference: None,
                })
            }
            FieldSource::File { path } => {
                let f: Vec<PolyVectorField> = load_json(path)?;
                if f.is_empty() {
                    return Err(Error::Parse(format!("{}: no fields", path.display())));
                }
                poly(f.clone(), f)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingSource {
    Inline {
        set: TrainingSet,
    },
    File {
        path: PathBuf,
    },
    /// `n` inputs and `n` targets uniform in `region`, drawn with the experiment seed.
    Random {
        n: usize,
        region: BoxRegion,
    },
}

impl TrainingSource {
    pub fn build(&self, seed: Option<u64>) -> Result<TrainingSet> {
        match self {
            TrainingSource::Inline { set } => Ok(set.clone()),
            TrainingSource::File { path } => load_json(path),
            TrainingSource::Random { n, region } => {
                let seed = seed.ok_or_else(|| Error::InvalidArgument("a random training set needs a seed".into()))?;
                Ok(TrainingSet::random(region.clone(), *n, seed))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSource {
    Inline { u: Vec<Vec<f64>> },
    File { path: PathBuf },
    Zero { steps: usize },
}

impl ControlSource {
    pub fn build(&self, d: usize) -> Result<ControlPath> {
        let c = match self {
            ControlSource::Inline { u } => ControlPath::from_rows(u)?,
            ControlSource::File { path } => load_json(path)?,
            ControlSource::Zero { steps } => ControlPath::zeros(*steps, d)?,
        };
        check_dim(d, c.d())?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TupleSource {
    Inline {
        points: Vec<Vec<f64>>,
    },
    /// `n` points uniform in `region`.
    Random {
        n: usize,
        region: BoxRegion,
    },
}

/// Linear pair and sample times for the commutator sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
}

impl Default for CommutatorSpec {
    /// The nilpotent pair `[[0,1],[0,0]]`, `[[0,0],[1,0]]` at `x = (1, 0)`.
    fn default() -> Self {
        CommutatorSpec {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            x: vec![1.0, 0.0],
            times: vec![0.1, 0.05, 0.025],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputNames {
    #[serde(default = "default_result")]
    pub result: String,
    #[serde(default = "default_history")]
    pub history: String,
    #[serde(default = "default_trajectories")]
    pub trajectories: String,
}

fn default_result() -> String {
    "result.json".to_string()
}

fn default_history() -> String {
    "loss.csv".to_string()
}

fn default_trajectories() -> String {
    "trajectories.csv".to_string()
}

impl Default for OutputNames {
    fn default() -> Self {
        OutputNames {
            result: default_result(),
            history: default_history(),
            trajectories: default_trajectories(),
        }
    }
}

/// One JSON document configuring any command; each command reads the parts it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "canonical_source")]
    pub fields: FieldSource,
    #[serde(default)]
    pub training: Option<TrainingSource>,
    #[serde(default)]
    pub trainer: TrainConfig,
    #[serde(default)]
    pub outputs: OutputNames,
    #[serde(default)]
    pub controls: Option<ControlSource>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub tuple: Option<TupleSource>,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: usize,
    #[serde(default)]
    pub commutator: Option<CommutatorSpec>,
}

fn canonical_source() -> FieldSource {
    FieldSource::Canonical
}

fn default_degree_cap() -> usize {
    3
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }

    /// A minimal config on `R^m` with the canonical fields.
    pub fn new(m: usize) -> Self {
        ExperimentConfig {
            m,
            seed: None,
            fields: FieldSource::Canonical,
            training: None,
            trainer: TrainConfig::default(),
            outputs: OutputNames::default(),
            controls: None,
            x0: None,
            tuple: None,
            degree_cap: default_degree_cap(),
            commutator: None,
        }
    }

    /// The command-line seed wins over the config seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlSummary {
    pub dimension: usize,
    pub expected: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverSummary {
    pub degree: usize,
    pub dimension: usize,
    pub full_dimension: usize,
    pub depth: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub m: usize,
    pub sl_generation: SlSummary,
    pub identities: crate::canonical::IdentityReport,
    pub failed_identities: Vec<String>,
    pub degree_cover: CoverSummary,
    pub ok: bool,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.ok {
            EXIT_OK
        } else {
            EXIT_VERIFICATION
        }
    }
}

pub fn cmd_verify(m: usize, degree: usize) -> Result<VerifyReport> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "verify needs m ≥ 2 (the case m = 1 is not covered), got {m}"
        )));
    }
    let (a, b) = sl_generators(m)?;
    let dim = sl_closure_dimension(&a, &b)?;
    let sl = SlSummary {
        dimension: dim,
        expected: m * m - 1,
        ok: dim == m * m - 1,
    };
    let identities = verify_appendix_identities(m)?;
    let failed: Vec<String> = identities.failures().map(|c| c.label.clone()).collect();
    let cover = degree_cover(m, degree)?;
    let cover = CoverSummary {
        degree,
        dimension: cover.dimension,
        full_dimension: cover.full_dimension,
        depth: cover.depth_cap,
        ok: cover.spans_all_polynomials(),
    };
    let ok = sl.ok && failed.is_empty() && cover.ok;
    Ok(VerifyReport {
        m,
        sl_generation: sl,
        identities,
        failed_identities: failed,
        degree_cover: cover,
        ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WittRow {
    pub n: u64,
    pub dim: u128,
    pub d_pow_n: u128,
    pub ratio: f64,
    pub lyndon_count: Option<usize>,
}

/// Lyndon words are enumerated as a cross-check while `d^n` stays below this.
const LYNDON_CHECK_LIMIT: u128 = 2_000_000;

pub fn cmd_witt(d: u64, max_n: u64) -> Result<Vec<WittRow>> {
    if d == 0 || max_n == 0 {
        return Err(Error::InvalidArgument("witt needs d ≥ 1 and max-n ≥ 1".into()));
    }
    (1..=max_n)
        .map(|n| {
            let dim = witt_dimension(d, n)?;
            let pow = (d as u128)
                .checked_pow(n as u32)
                .ok_or_else(|| Error::InvalidArgument(format!("d^n overflows for d={d}, n={n}")))?;
            let lyndon_count = (pow <= LYNDON_CHECK_LIMIT).then(|| lyndon_words(d as usize, n as usize).len());
            Ok(WittRow {
                n,
                dim,
                d_pow_n: pow,
                ratio: dim as f64 / pow as f64,
                lyndon_count,
            })
        })
        .collect()
}

/// CSV `n,dim,d_pow_n,ratio,lyndon_count` (the count is empty when not enumerated).
pub fn witt_csv(rows: &[WittRow]) -> String {
    let mut out = String::from("n,dim,d_pow_n,ratio,lyndon_count\n");
    for r in rows {
        let count = r.lyndon_count.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            r.dim,
            r.d_pow_n,
            fmt_float(r.ratio),
            count
        ));
    }
    out
}

pub fn witt_consistent(rows: &[WittRow]) -> bool {
    rows.iter().all(|r| r.lyndon_count.is_none_or(|c| c as u128 == r.dim))
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolateOutcome {
    pub status: TrainStatus,
    pub iterations: usize,
    pub max_residual: f64,
    pub files: Vec<PathBuf>,
}

impl InterpolateOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            TrainStatus::Converged => EXIT_OK,
            TrainStatus::MaxIters => EXIT_NO_CONVERGENCE,
            TrainStatus::BlowUp => EXIT_BLOW_UP,
        }
    }
}

/// Builds fields and data, trains, and writes result JSON, loss CSV and trajectories CSV.
pub fn cmd_interpolate(config: &ExperimentConfig, out_dir: &Path) -> Result<InterpolateOutcome> {
    let seed = config
        .seed
        .ok_or_else(|| Error::InvalidArgument("interpolate needs a seed (config `seed` or --seed)".into()))?;
    let source = config
        .training
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("interpolate needs a `training` section".into()))?;
    let ts = source.build(Some(seed))?;
    check_dim(config.m, ts.dim())?;
    validate_training_set(&ts)?;
    let built = config.fields.build(config.m)?;
    let mut trainer = config.trainer.clone();
    trainer.seed = seed;
    let result = train(&built.numeric, &ts, &trainer)?;
    fs::create_dir_all(out_dir)?;
    let json = out_dir.join(&config.outputs.result);
    let history = out_dir.join(&config.outputs.history);
    let traj = out_dir.join(&config.outputs.trajectories);
    result.save(&json, &history)?;
    let mut files = vec![json, history];
    if result.status != TrainStatus::BlowUp {
        let mut w = csv::Writer::from_path(&traj)?;
        let mut header = vec!["sample".to_string(), "t".to_string()];
        header.extend((1..=config.m).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (i, tr) in result.trajectories(&built.numeric, &ts)?.iter().enumerate() {
            for (t, x) in tr.times().iter().zip(&tr.states) {
                let mut rec = vec![i.to_string(), fmt_float(*t)];
                rec.extend(x.iter().map(|v| fmt_float(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        files.push(traj);
    }
    Ok(InterpolateOutcome {
        status: result.status,
        iterations: result.iterations,
        max_residual: result.max_residual,
        files,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RankOutcome {
    pub seed: Option<u64>,
    pub words: usize,
    pub report: RankReport,
    pub verdict: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankSweep {
    pub runs: Vec<RankOutcome>,
    pub passed: usize,
    pub total: usize,
}

fn build_tuple(source: &TupleSource, seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    match source {
        TupleSource::Inline { points } => Ok(points.clone()),
        TupleSource::Random { n, region } => {
            let seed = seed.ok_or_else(|| Error::InvalidArgument("a random tuple needs a seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..*n).map(|_| region.sample(&mut rng)).collect())
        }
    }
}

fn rank_once(config: &ExperimentConfig, fields: &FieldSource, seed: Option<u64>) -> Result<RankOutcome> {
    let source = config
        .tuple
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("rank needs a `tuple` section".into()))?;
    let tuple = build_tuple(source, seed)?;
    let built = fields.build(config.m)?;
    let words = built.words(config.degree_cap)?;
    let matrix = interpolation_matrix(&built.family, &words, &tuple)?;
    let report = rank_report(&matrix, RANK_TOL);
    Ok(RankOutcome {
        seed,
        words: words.len(),
        verdict: report.full_row_rank,
        report,
    })
}

/// Rank test at one tuple, or a sweep over `seeds` consecutive seeds.
///
/// In a sweep the seed `s` drives both the random tuple and, for sampled or
/// neural fields, the field seed.
pub fn cmd_rank(config: &ExperimentConfig, seeds: Option<usize>) -> Result<RankSweep> {
    let runs = match seeds {
        None => vec![rank_once(config, &config.fields, config.seed)?],
        Some(k) => {
            let base = config.seed.unwrap_or(0);
            (0..k as u64)
                .map(|i| {
                    let s = base + i;
                    let fields = match &config.fields {
                        FieldSource::SamplePoly { spec } => FieldSource::SamplePoly {
                            spec: FieldSampleSpec {
                                seed: s,
                                ..spec.clone()
                            },
                        },
                        FieldSource::Neural { spec } => FieldSource::Neural {
                            spec: NeuralFieldSpec {
                                seed: s,
                                ..spec.clone()
                            },
                        },
                        other => other.clone(),
                    };
                    rank_once(config, &fields, Some(s))
                })
                .collect::<Result<_>>()?
        }
    };
    let passed = runs.iter().filter(|r| r.verdict).count();
    Ok(RankSweep {
        total: runs.len(),
        passed,
        runs,
    })
}

/// Integrates from `x0` under the configured controls and writes `trajectory.csv`.
pub fn cmd_flow(config: &ExperimentConfig, variation: bool, out_dir: &Path) -> Result<PathBuf> {
    let built = config.fields.build(config.m)?;
    let controls = config
        .controls
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("flow needs a `controls` section".into()))?
        .build(built.numeric.len())?;
    let x0 = config
        .x0
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("flow needs `x0`".into()))?;
    let tr = if variation {
        integrate_with_variation(&built.numeric, &controls, x0)?
    } else {
        integrate(&built.numeric, &controls, x0)?
    };
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("trajectory.csv");
    tr.save_csv(&path)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorRow {
    pub t: f64,
    pub residual: f64,
    pub residual_over_t3: f64,
}

fn square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    for r in rows {
        check_dim(n, r.len())?;
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn commutator_sweep(spec: &CommutatorSpec) -> Result<Vec<CommutatorRow>> {
    let a = square(&spec.a)?;
    let b = square(&spec.b)?;
    spec.times
        .iter()
        .map(|&t| {
            let residual = commutator_flow_residual(&a, &b, t, &spec.x)?;
            Ok(CommutatorRow {
                t,
                residual,
                residual_over_t3: residual / (t * t * t),
            })
        })
        .collect()
}

/// Writes `commutator.csv` with columns `t,residual,residual_over_t3`.
pub fn cmd_commutator(spec: &CommutatorSpec, out_dir: &Path) -> Result<(Vec<CommutatorRow>, PathBuf)> {
    let rows = commutator_sweep(spec)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("commutator.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["t", "residual", "residual_over_t3"])?;
    for r in &rows {
        w.write_record([fmt_float(r.t), fmt_float(r.residual), fmt_float(r.residual_over_t3)])?;
    }
    w.flush()?;
    Ok((rows, path))
}

/// Samples polynomial fields and writes them to `fields.json`.
pub fn cmd_sample(spec: &FieldSampleSpec, out_dir: &Path) -> Result<PathBuf> {
    let fields = sample_polynomial_fields(spec)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("fields.json");
    write_json(&path, &fields)?;
    Ok(path)
}

pub fn save_report<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    write_json(&path, value)?;
    Ok(path)
}
