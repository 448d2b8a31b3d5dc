//! Linear cost models `measured = a * cycles + b`, few-shot fitting by
//! split selection, and relative-error statistics.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Splits tried per seed when enumeration would exceed this many.
pub const MAX_SPLITS: usize = 100;
pub const MIN_SAMPLES: usize = 5;
pub const DEFAULT_SEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("all samples have the same cycle count; slope is undetermined")]
    Degenerate,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("relative error needs a positive true value, got {0}")]
    NonPositiveTruth(f64),
    #[error("no values to summarize")]
    Empty,
    #[error("percentile {0} is outside [0, 100]")]
    PercentileRange(f64),
    #[error("invalid sample {id:?}: {message}")]
    InvalidSample { id: String, message: String },
    #[error("unknown target {0:?} (expected energy or latency)")]
    UnknownTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Joules per inference.
    Energy,
    /// Seconds per inference.
    Latency,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Energy => "energy",
            Target::Latency => "latency",
        })
    }
}

impl FromStr for Target {
    type Err = PredictError;

    fn from_str(s: &str) -> Result<Target, PredictError> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(Target::Energy),
            "latency" => Ok(Target::Latency),
            _ => Err(PredictError::UnknownTarget(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub model_id: String,
    pub cycles: u64,
    pub measured: f64,
}

impl Sample {
    pub fn new(
        model_id: impl Into<String>,
        cycles: u64,
        measured: f64,
    ) -> Result<Sample, PredictError> {
        let model_id = model_id.into();
        if !(measured.is_finite() && measured > 0.0) {
            return Err(PredictError::InvalidSample {
                id: model_id,
                message: format!("measured value must be positive, got {measured}"),
            });
        }
        Ok(Sample {
            model_id,
            cycles,
            measured,
        })
    }
}

/// Least-squares slope and intercept.
pub fn ols_fit(samples: &[Sample]) -> Result<(f64, f64), PredictError> {
    let xs: Vec<f64> = samples.iter().map(|s| s.cycles as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.measured).collect();
    ols_xy(&xs, &ys)
}

pub fn ols_xy(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), PredictError> {
    let n = xs.len();
    if n < 2 {
        return Err(PredictError::TooFewSamples { need: 2, got: n });
    }
    let xm = xs.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    if sxx == 0.0 {
        return Err(PredictError::Degenerate);
    }
    let a = sxy / sxx;
    Ok((a, ym - a * xm))
}

/// How the final coefficients were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub base_seed: u64,
    pub n_seeds: usize,
    pub chosen_seed: usize,
    pub exhaustive: bool,
    pub splits_per_seed: usize,
    pub train: Vec<String>,
    pub validate: Vec<String>,
    /// Mean relative error (percent) on the validation split.
    pub validation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub target: Target,
    /// Joules or seconds per cycle.
    pub a: f64,
    /// Joules or seconds per inference.
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_report: Option<FitReport>,
}

impl LinearPredictor {
    pub fn new(target: Target, a: f64, b: f64) -> LinearPredictor {
        LinearPredictor {
            target,
            a,
            b,
            fit_report: None,
        }
    }
}

pub fn linear_value(a: f64, b: f64, x: f64) -> f64 {
    let v = a * x + b;
    if v < 0.0 {
        log::warn!("negative prediction {v:e} clamped to 0");
        0.0
    } else {
        v
    }
}

pub fn predict(p: &LinearPredictor, cycles: u64) -> f64 {
    linear_value(p.a, p.b, cycles as f64)
}

/// `|pred − truth| / truth × 100`.
pub fn relative_error(pred: f64, truth: f64) -> Result<f64, PredictError> {
    if truth.is_nan() || truth <= 0.0 {
        return Err(PredictError::NonPositiveTruth(truth));
    }
    Ok((pred - truth).abs() / truth * 100.0)
}

/// Linear-interpolation percentiles: rank `p/100·(n−1)` between neighbors.
pub fn error_percentiles(errors: &[f64], ps: &[f64]) -> Result<Vec<f64>, PredictError> {
    if errors.is_empty() {
        return Err(PredictError::Empty);
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    ps.iter()
        .map(|&p| {
            if !(0.0..=100.0).contains(&p) {
                return Err(PredictError::PercentileRange(p));
            }
            let r = p / 100.0 * (n - 1) as f64;
            let lo = r.floor() as usize;
            let hi = r.ceil() as usize;
            Ok(v[lo] + (v[hi] - v[lo]) * (r - lo as f64))
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All k-subsets of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - k + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Candidate {
    a: f64,
    b: f64,
    train: Vec<usize>,
    error: f64,
}

fn evaluate_split(samples: &[Sample], train: &[usize]) -> Option<Candidate> {
    let tr: Vec<Sample> = train.iter().map(|&i| samples[i].clone()).collect();
    let (a, b) = ols_fit(&tr).ok()?;
    let mut total = 0.0;
    let mut n = 0;
    for (i, s) in samples.iter().enumerate() {
        if train.contains(&i) {
            continue;
        }
        let pred = a * s.cycles as f64 + b;
        total += relative_error(pred.max(0.0), s.measured).ok()?;
        n += 1;
    }
    Some(Candidate {
        a,
        b,
        train: train.to_vec(),
        error: if n == 0 { 0.0 } else { total / n as f64 },
    })
}

/// Few-shot fit: for each seed, try train/validate splits (train size
/// `max(2, ⌊0.4n⌋)`), fit on train, and keep the split with the lowest mean
/// relative validation error; return the best over all seeds.
pub fn subsample_fit(
    samples: &[Sample],
    n_seeds: usize,
    target: Target,
    seed: u64,
) -> Result<LinearPredictor, PredictError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(PredictError::TooFewSamples {
            need: MIN_SAMPLES,
            got: n,
        });
    }
    let t = (2 * n / 5).max(2);
    let exhaustive = binomial(n, t) <= MAX_SPLITS as u128;
    let all = exhaustive.then(|| combinations(n, t));

    let mut best: Option<(usize, Candidate)> = None;
    let mut splits_per_seed = 0;
    for s in 0..n_seeds.max(1) {
        let splits: Vec<Vec<usize>> = match &all {
            Some(v) => v.clone(),
            None => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                (0..MAX_SPLITS)
                    .map(|_| {
                        let mut idx = sample(&mut rng, n, t).into_vec();
                        idx.sort_unstable();
                        idx
                    })
                    .collect()
            }
        };
        splits_per_seed = splits.len();
        for split in &splits {
            let Some(c) = evaluate_split(samples, split) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((_, b)) => c.error < b.error,
            };
            if better {
                best = Some((s, c));
            }
        }
    }
    let (chosen_seed, c) = best.ok_or(PredictError::Degenerate)?;
    let ids = |pred: &dyn Fn(usize) -> bool| -> Vec<String> {
        (0..n)
            .filter(|&i| pred(i))
            .map(|i| samples[i].model_id.clone())
            .collect()
    };
    Ok(LinearPredictor {
        target,
        a: c.a,
        b: c.b,
        fit_report: Some(FitReport {
            base_seed: seed,
            n_seeds: n_seeds.max(1),
            chosen_seed,
            exhaustive,
            splits_per_seed,
            train: ids(&|i| c.train.contains(&i)),
            validate: ids(&|i| !c.train.contains(&i)),
            validation_error: c.error,
        }),
    })
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model_id: String,
    pub cycles: u64,
    pub measured: f64,
    pub predicted: f64,
    /// Percent.
    pub relative_error: f64,
}

pub fn evaluate(p: &LinearPredictor, test: &[Sample]) -> Vec<EvalRow> {
    test.iter()
        .map(|s| {
            let predicted = predict(p, s.cycles);
            EvalRow {
                model_id: s.model_id.clone(),
                cycles: s.cycles,
                measured: s.measured,
                predicted,
                relative_error: relative_error(predicted, s.measured)
                    .expect("samples carry positive measurements"),
            }
        })
        .collect()
}

/// Seeded choice of `shots` training samples; the rest form the test set.
/// Both halves keep input order.
pub fn few_shot_split(samples: &[Sample], shots: usize, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let shots = shots.min(samples.len());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, samples.len(), shots).into_vec();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if picked.contains(&i) {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    (train, test)
}
