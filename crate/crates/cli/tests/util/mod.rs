#![allow(clippy::needless_range_loop)]

//! Shared helpers for the CLI test suites.

use std::path::PathBuf;
use std::process::{Command, Output};

use cvselect_core::data::Dataset;
use cvselect_core::engine::ScoreEstimate;
use cvselect_core::linalg::{self, Mat};
use cvselect_core::losses::{LossKind, Orientation, PointwiseLosses, ScoreKind};
use cvselect_core::selection::{ScoreEntry, ScoreTable};

pub fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cvselect"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("cvselect-acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A paired squared-error score table built from explicit pointwise loss
/// vectors (for identity checks that need exact control).
pub fn loss_table(vectors: Vec<(&str, u32, Vec<f64>)>) -> ScoreTable {
    let n = vectors[0].2.len();
    let entries: Vec<ScoreEntry> = vectors
        .into_iter()
        .map(|(id, rank, values)| {
            let mean = linalg::mean(&values);
            let se = linalg::sample_sd(&values) / (values.len() as f64).sqrt();
            ScoreEntry {
                model_id: id.to_string(),
                complexity_rank: rank,
                estimate: ScoreEstimate {
                    kind: ScoreKind::Loss(LossKind::SquaredError),
                    orientation: Orientation::LowerIsBetter,
                    mean,
                    se,
                    se_method: "pointwise_normal".into(),
                    utility_mean: -mean,
                    pointwise: Some(PointwiseLosses {
                        kind: LossKind::SquaredError,
                        index: (0..n).collect(),
                        values,
                    }),
                    per_repetition: None,
                    bias_correction_kappa: None,
                    corrected_mean: None,
                    n_effective_params: None,
                    model_id: id.to_string(),
                    plan_fingerprint: "synthetic".into(),
                    fit_count: 1,
                },
            }
        })
        .collect();
    ScoreTable::from_entries(n, entries).unwrap()
}

/// Columns with zero mean and (1/n)·X'X = I.
pub fn orthonormal_design(n: usize, p: usize, seed: u64) -> Mat {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut c: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let m = linalg::mean(&c);
        for v in &mut c {
            *v -= m;
        }
        for prev in &cols {
            let proj = linalg::dot(&c, prev) / linalg::dot(prev, prev);
            for i in 0..n {
                c[i] -= proj * prev[i];
            }
        }
        cols.push(c);
    }
    let nf = n as f64;
    for c in &mut cols {
        let norm = (linalg::dot(c, c) / nf).sqrt();
        for v in c.iter_mut() {
            *v /= norm;
        }
    }
    Mat::from_fn(n, p, |i, j| cols[j][i])
}

/// Center the response and standardize the features of a dataset,
/// returning the transformed design and centred response.
pub fn standardize_xy(data: &Dataset) -> (Mat, Vec<f64>) {
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let mut y: Vec<f64> = (0..n).map(|i| data.y(i)).collect();
    let ybar = linalg::mean(&y);
    for v in &mut y {
        *v -= ybar;
    }
    let mut xs = Mat::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| data.feature_row(i)[j]).collect();
        let m = linalg::mean(&col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
        let s = var.sqrt().max(1e-300);
        for i in 0..n {
            xs.set(i, j, (col[i] - m) / s);
        }
    }
    (xs, y)
}
