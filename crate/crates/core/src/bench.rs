//! Replicated train/test evaluation of the model catalogue.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::models::{fit_model_with, FitOptions, FittedModel, ModelId, PredictMode, Predictor};
use crate::record::{MilkingDataset, Session};
use crate::scalar::{mean, pop_variance, Scalar};

/// One train/test partition of cow positions (indices into
/// [`MilkingDataset::records_by_cow`]), both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_cows: usize,
    pub replicates: Vec<Split>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// `m` independent random partitions into `n_train` training cows and the rest.
pub fn make_splits(n_cows: usize, n_train: usize, m: usize, seed: u64) -> Result<SplitPlan> {
    if n_train == 0 || n_train >= n_cows {
        return Err(Error::Usage(format!(
            "training size must lie strictly between 0 and the herd size {n_cows}, got {n_train}"
        )));
    }
    if m == 0 {
        return Err(Error::Usage("at least one replicate is required".into()));
    }
    let replicates = (0..m)
        .map(|r| {
            let idx = shuffled(n_cows, seed, r as u64);
            let mut train = idx[..n_train].to_vec();
            let mut test = idx[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect();
    Ok(SplitPlan {
        seed,
        n_cows,
        replicates,
    })
}

/// `k`-fold partition: every cow is tested exactly once.
pub fn make_folds(n_cows: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 || k > n_cows {
        return Err(Error::Usage(format!(
            "fold count must lie in [2, {n_cows}], got {k}"
        )));
    }
    let idx = shuffled(n_cows, seed, 0);
    let replicates = (0..k)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (pos, &cow) in idx.iter().enumerate() {
                if pos % k == f {
                    test.push(cow);
                } else {
                    train.push(cow);
                }
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect();
    Ok(SplitPlan {
        seed,
        n_cows,
        replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub mse: T,
    /// Across-replicate variance of each record's prediction, averaged over
    /// all (record, replicate) appearances.
    pub variance: T,
    pub bias_sq: T,
    /// `σ² / (σ² + MSE_r)` averaged over replicates.
    pub r2_accuracy: T,
    /// Variance of the true daily yields of all records ever tested.
    pub sigma2: T,
    pub n_predictions: usize,
}

/// Accuracy from the phenotypic variance and the mean squared error.
pub fn r2_accuracy<T: Scalar>(sigma2: T, mse: T) -> T {
    if sigma2 + mse == T::zero() {
        return T::one();
    }
    sigma2 / (sigma2 + mse)
}

/// `replicates[r]` holds `(record index, prediction)` pairs; `truths` is
/// indexed by record.
pub fn metrics<T: Scalar>(replicates: &[Vec<(usize, T)>], truths: &[T]) -> Result<Metrics<T>> {
    if replicates.is_empty() || replicates.iter().all(|r| r.is_empty()) {
        return Err(Error::Usage("metrics need at least one prediction".into()));
    }
    let mut per_record: Vec<Vec<T>> = vec![Vec::new(); truths.len()];
    for rep in replicates {
        for &(i, p) in rep {
            per_record
                .get_mut(i)
                .ok_or_else(|| {
                    Error::Usage(format!("prediction for record {i} but only {} truths", truths.len()))
                })?
                .push(p);
        }
    }

    let tested: Vec<T> = per_record
        .iter()
        .zip(truths)
        .filter(|(p, _)| !p.is_empty())
        .map(|(_, &y)| y)
        .collect();
    let y_bar = mean(&tested).unwrap_or_default();
    let sigma2 = pop_variance(&tested, y_bar);

    let n_total: usize = per_record.iter().map(Vec::len).sum();
    let nt = T::from_count(n_total);
    let (mut sse, mut var_sum, mut bias_sum) = (T::zero(), T::zero(), T::zero());
    for (preds, &y) in per_record.iter().zip(truths) {
        if preds.is_empty() {
            continue;
        }
        let n = T::from_count(preds.len());
        let m = mean(preds).unwrap_or_default();
        sse += preds.iter().map(|&p| (p - y) * (p - y)).sum::<T>();
        var_sum += n * pop_variance(preds, m);
        bias_sum += n * (m - y) * (m - y);
    }

    let mut r2 = Vec::new();
    for rep in replicates.iter().filter(|r| !r.is_empty()) {
        let mse_r = rep.iter().map(|&(i, p)| (p - truths[i]) * (p - truths[i])).sum::<T>()
            / T::from_count(rep.len());
        r2.push(r2_accuracy(sigma2, mse_r));
    }

    Ok(Metrics {
        mse: sse / nt,
        variance: var_sum / nt,
        bias_sq: bias_sum / nt,
        r2_accuracy: mean(&r2).unwrap_or_default(),
        sigma2,
        n_predictions: n_total,
    })
}

/// Least-squares line of true on predicted daily yield for one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagLine<T> {
    pub session: Session,
    pub intercept: T,
    pub slope: T,
    pub correlation: T,
    pub n: usize,
}

pub fn regression_diagnostics<T: Scalar>(
    truths: &[T],
    predictions: &[T],
    sessions: &[Session],
) -> Result<[DiagLine<T>; 2]> {
    if truths.len() != predictions.len() || truths.len() != sessions.len() {
        return Err(Error::Usage(format!(
            "diagnostics need equal lengths, got {} truths, {} predictions, {} sessions",
            truths.len(),
            predictions.len(),
            sessions.len()
        )));
    }
    let line = |s: Session| -> Result<DiagLine<T>> {
        let (ys, ps): (Vec<T>, Vec<T>) = truths
            .iter()
            .zip(predictions)
            .zip(sessions)
            .filter(|(_, &ss)| ss == s)
            .map(|((&y, &p), _)| (y, p))
            .unzip();
        if ys.len() < 3 {
            return Err(Error::Degenerate(format!(
                "{s} diagnostics need at least 3 records, got {}",
                ys.len()
            )));
        }
        let (my, mp) = (mean(&ys).unwrap_or_default(), mean(&ps).unwrap_or_default());
        let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
        for (&y, &p) in ys.iter().zip(&ps) {
            sxy += (p - mp) * (y - my);
            sxx += (p - mp) * (p - mp);
            syy += (y - my) * (y - my);
        }
        if !(sxx > T::zero()) {
            return Err(Error::Degenerate(format!("{s} predictions have zero variance")));
        }
        let slope = sxy / sxx;
        let correlation = if syy > T::zero() {
            (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one())
        } else {
            T::zero()
        };
        Ok(DiagLine {
            session: s,
            intercept: my - slope * mp,
            slope,
            correlation,
            n: ys.len(),
        })
    };
    Ok([line(Session::Am)?, line(Session::Pm)?])
}

/// Mean and sample SD of one fitted coefficient over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary<T> {
    pub name: String,
    pub mean: T,
    pub sd: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport<T> {
    pub id: ModelId,
    pub status: ModelStatus,
    pub metrics: Option<Metrics<T>>,
    pub diagnostics: Option<[DiagLine<T>; 2]>,
    pub params: Vec<ParamSummary<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport<T> {
    /// Successful models by increasing MSE, then failed models in request order.
    pub models: Vec<ModelReport<T>>,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> BenchmarkReport<T> {
    pub fn get(&self, id: ModelId) -> Option<&ModelReport<T>> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn mse(&self, id: ModelId) -> Option<T> {
        self.get(id).and_then(|m| m.metrics.map(|x| x.mse))
    }

    pub fn param(&self, id: ModelId, name: &str) -> Option<T> {
        self.get(id)?.params.iter().find(|p| p.name == name).map(|p| p.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchOptions {
    pub fit: FitOptions,
}

struct RunOutput<T> {
    predictions: Vec<(usize, T)>,
    params: Vec<(&'static str, T)>,
}

fn named_params<T: Scalar>(m: &FittedModel<T>) -> Vec<(&'static str, T)> {
    let mut out = Vec::new();
    if let Some(a) = m.alpha {
        out.push(("alpha_AM", a[0]));
        out.push(("alpha_PM", a[1]));
    }
    if let Some(b) = m.beta {
        out.push(("beta", b));
    }
    if let Some(g) = m.gamma {
        out.push(("gamma", g));
    }
    if let Some(b) = m.b {
        out.push(("b", b));
    }
    out
}

fn run_one<T: Scalar>(
    id: ModelId,
    train: &MilkingDataset<T>,
    test: &[usize],
    data: &MilkingDataset<T>,
    grid: &IntervalGrid<T>,
    opts: &BenchOptions,
) -> Result<RunOutput<T>> {
    let model = fit_model_with(id, train, grid, &opts.fit)?;
    let predictor = Predictor::new(&model, id.default_mode())?;
    let predictions = test
        .iter()
        .map(|&i| Ok((i, predictor.predict(&data.records[i].observation())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        predictions,
        params: named_params(&model),
    })
}

/// Fits every requested model on each training split and scores it on the
/// matching test split. A model that fails in any replicate is reported as
/// failed; the others are unaffected.
pub fn run_benchmark<T: Scalar>(
    data: &MilkingDataset<T>,
    ids: &[ModelId],
    plan: &SplitPlan,
    grid: &IntervalGrid<T>,
    opts: &BenchOptions,
) -> Result<BenchmarkReport<T>> {
    if ids.is_empty() {
        return Err(Error::Usage("no models requested".into()));
    }
    if plan.is_empty() {
        return Err(Error::Usage("split plan has no replicates".into()));
    }
    if !data.all_labeled() {
        return Err(Error::Domain("benchmarking needs the daily yield of every record".into()));
    }
    let cows = data.records_by_cow();
    if cows.len() != plan.n_cows {
        return Err(Error::Usage(format!(
            "split plan covers {} cows but the data has {}",
            plan.n_cows,
            cows.len()
        )));
    }
    let truths: Vec<T> = data.records.iter().map(|r| r.daily()).collect::<Result<_>>()?;
    let sessions: Vec<Session> = data.records.iter().map(|r| r.session).collect();

    // Collected in replicate order, so aggregation below is independent of
    // thread scheduling.
    let runs: Vec<Vec<Result<RunOutput<T>>>> = plan
        .replicates
        .par_iter()
        .enumerate()
        .map(|(r, split)| {
            let rows = |cs: &[usize]| -> Vec<usize> {
                cs.iter().flat_map(|&c| cows[c].iter().copied()).collect()
            };
            let train = data.subset(&rows(&split.train), &format!("replicate {r} training split"));
            let test = rows(&split.test);
            ids.iter()
                .map(|&id| run_one(id, &train, &test, data, grid, opts))
                .collect()
        })
        .collect();

    let mut reports = Vec::with_capacity(ids.len());
    for (k, &id) in ids.iter().enumerate() {
        let mut preds = Vec::with_capacity(runs.len());
        let mut params: Vec<Vec<(&'static str, T)>> = Vec::new();
        let mut failure = None;
        for (r, rep) in runs.iter().enumerate() {
            match &rep[k] {
                Ok(out) => {
                    preds.push(out.predictions.clone());
                    params.push(out.params.clone());
                }
                Err(e) => {
                    failure = Some(format!("replicate {r}: {e}"));
                    break;
                }
            }
        }
        let scored = match failure {
            Some(msg) => Err(msg),
            None => score(&preds, &params, &truths, &sessions).map_err(|e| e.to_string()),
        };
        reports.push(match scored {
            Ok((metrics, diagnostics, params)) => ModelReport {
                id,
                status: ModelStatus::Ok,
                metrics: Some(metrics),
                diagnostics: Some(diagnostics),
                params,
            },
            Err(msg) => {
                log::warn!("{id} failed: {msg}");
                ModelReport {
                    id,
                    status: ModelStatus::Failed(msg),
                    metrics: None,
                    diagnostics: None,
                    params: Vec::new(),
                }
            }
        });
    }

    let key = |m: &ModelReport<T>| m.metrics.map(|x| x.mse.as_f64()).unwrap_or(f64::INFINITY);
    reports.sort_by(|a, b| key(a).total_cmp(&key(b)));
    Ok(BenchmarkReport {
        models: reports,
        replicates: plan.len(),
        seed: plan.seed,
    })
}

type Scored<T> = (Metrics<T>, [DiagLine<T>; 2], Vec<ParamSummary<T>>);

fn score<T: Scalar>(
    preds: &[Vec<(usize, T)>],
    params: &[Vec<(&'static str, T)>],
    truths: &[T],
    sessions: &[Session],
) -> Result<Scored<T>> {
    let metrics = metrics(preds, truths)?;
    // Diagnostics pool every (record, replicate) prediction.
    let (mut ys, mut ps, mut ss) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, p) in preds.iter().flatten() {
        ys.push(truths[i]);
        ps.push(p);
        ss.push(sessions[i]);
    }
    let diagnostics = regression_diagnostics(&ys, &ps, &ss)?;
    let summaries = params
        .first()
        .map(|first| {
            first
                .iter()
                .enumerate()
                .map(|(j, &(name, _))| {
                    let vals: Vec<T> = params.iter().map(|p| p[j].1).collect();
                    let m = mean(&vals).unwrap_or_default();
                    let sd = if vals.len() > 1 {
                        (pop_variance(&vals, m) * T::from_count(vals.len())
                            / T::from_count(vals.len() - 1))
                        .sqrt()
                    } else {
                        T::zero()
                    };
                    ParamSummary {
                        name: name.to_string(),
                        mean: m,
                        sd,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    Ok((metrics, diagnostics, summaries))
}

/// Mean absolute gap between direct and factor-table predictions of an A
/// model (M2A, M3A, M6A or M7A) over `data`.
pub fn discretization_gap<T: Scalar>(model: &FittedModel<T>, data: &MilkingDataset<T>) -> Result<T> {
    if !model.id.predicts_directly() {
        return Err(Error::Usage(format!("{} has no direct predictor", model.id)));
    }
    if data.is_empty() {
        return Err(Error::Domain("discretization gap needs at least one record".into()));
    }
    let direct = Predictor::new(model, PredictMode::Direct)?;
    let table = Predictor::new(model, PredictMode::Factor)?;
    let gaps = data
        .records
        .iter()
        .map(|r| {
            let obs = r.observation();
            Ok((direct.predict(&obs)? - table.predict(&obs)?).abs())
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(mean(&gaps).unwrap_or_default())
}
