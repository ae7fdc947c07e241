//! Training loops, patient-level aggregation and evaluation metrics.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Modality, SentenceSample};
use crate::model::{report_phq, ModalityInput, Model, ModelError, Task};
use crate::numerics::{AdamState, Gradients, Mode, NumericsError, Tape, Tensor};
use crate::seed::{derive_rng, derive_seed};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("training split is empty")]
    EmptySplit,
    #[error("sample {0} has no label")]
    Unlabelled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no sentences to aggregate")]
    EmptyAggregation,
    #[error("sample {0} has no label")]
    Unlabelled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Snapshot callback period in epochs; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Stop after this many epochs without validation-loss improvement and
    /// restore the best parameters; 0 disables early stopping.
    pub early_stopping_patience: usize,
    /// Repeat positive-class samples until both classes are equally
    /// represented in each epoch.
    pub oversample_positive: bool,
    /// Start the regression output bias at the mean training target.
    pub init_output_bias: bool,
    /// Also record the eval-mode (dropout off) training loss each epoch.
    pub monitor_eval_loss: bool,
}

impl TrainConfig {
    pub fn default_learning_rate(task: Task) -> f64 {
        match task {
            Task::Classification => 1e-3,
            Task::Regression => 1e-5,
        }
    }

    pub fn new(task: Task) -> Self {
        TrainConfig {
            task,
            epochs: 100,
            batch_size: 16,
            learning_rate: Self::default_learning_rate(task),
            weight_decay: 1e-4,
            seed: 0,
            snapshot_every: 0,
            early_stopping_patience: 0,
            oversample_positive: false,
            init_output_bias: true,
            monitor_eval_loss: false,
        }
    }
}

/// Per-epoch losses and, when a validation split is given, its metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of the dropout-on batch loss.
    pub train_loss: f64,
    pub train_loss_eval: Option<f64>,
    pub validation_loss: Option<f64>,
    pub validation: Option<EvalReport>,
}

fn target(sample: &SentenceSample, task: Task) -> Result<f32, TrainError> {
    let label = sample.label.ok_or_else(|| TrainError::Unlabelled(sample.id()))?;
    Ok(match task {
        Task::Classification => label.mdd() as u8 as f32,
        Task::Regression => label.phq() as f32,
    })
}

fn inputs(sample: &SentenceSample) -> [Option<ModalityInput<'_, f32>>; 3] {
    Modality::ALL.map(|m| {
        let frames = sample.features(m);
        Some(ModalityInput { frames, length: frames.rows() })
    })
}

/// Loss and gradients of one sample.
fn sample_gradients<R: Rng>(
    model: &Model<f32>,
    sample: &SentenceSample,
    task: Task,
    mode: Mode,
    rng: &mut R,
    with_grads: bool,
) -> Result<(f64, Option<Gradients<f32>>), TrainError> {
    let y = Tensor::new(vec![1, 1], vec![target(sample, task)?]).expect("scalar");
    let mut tape = Tape::with_params(&model.params);
    let out = model.forward(&mut tape, &inputs(sample), mode, rng)?;
    let loss = match task {
        Task::Classification => tape.bce(out, &y)?,
        Task::Regression => tape.mse(out, &y)?,
    };
    let value = tape.value(loss).data()[0] as f64;
    let grads = if with_grads && value.is_finite() { Some(tape.backward(loss)?) } else { None };
    Ok((value, grads))
}

/// Mean eval-mode loss over `samples`.
pub fn mean_loss(model: &Model<f32>, samples: &[SentenceSample], task: Task) -> Result<f64, TrainError> {
    let losses = samples
        .par_iter()
        .map(|s| sample_gradients(model, s, task, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0), false).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn epoch_order(samples: &[SentenceSample], cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if cfg.oversample_positive {
        let positive: Vec<usize> = order.iter().copied().filter(|&i| samples[i].label.is_some_and(|l| l.mdd())).collect();
        let negatives = samples.len() - positive.len();
        if !positive.is_empty() && positive.len() < negatives {
            order.extend(positive.iter().cycle().take(negatives - positive.len()));
        }
    }
    order.shuffle(&mut derive_rng(cfg.seed, &format!("train/shuffle/{epoch}")));
    order
}

/// Fits input statistics and the regression output bias on the training
/// samples. Called by [`train`] when at least one epoch runs.
pub fn prepare(model: &mut Model<f32>, train: &[SentenceSample], cfg: &TrainConfig) -> Result<(), TrainError> {
    model.fit_standardization(train);
    if cfg.init_output_bias && cfg.task == Task::Regression && model.task() == Task::Regression {
        let mut total = 0.0f64;
        for s in train {
            total += target(s, cfg.task)? as f64;
        }
        let mean = (total / train.len() as f64) as f32;
        model.params.set("head.out.b", Tensor::vector(vec![mean]).expect("one value"))?;
    }
    Ok(())
}

/// Minibatch Adam on sentence-level weak labels.
///
/// Per-sample gradients may be computed on several threads; they are summed
/// in batch order, so results depend only on the seed. `on_epoch` runs after
/// every epoch and may save snapshots.
pub fn train(
    model: &mut Model<f32>,
    train: &[SentenceSample],
    validation: Option<&[SentenceSample]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Model<f32>),
) -> Result<Vec<EpochRecord>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    if cfg.task != model.task() {
        return Err(ModelError::Config(format!("training a {} model for {}", model.task(), cfg.task)).into());
    }
    let mut trace = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(trace);
    }
    prepare(model, train, cfg)?;
    let mut adam = AdamState::new(cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut best: Option<(f64, Model<f32>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(train, cfg, epoch);
        let mut batch_losses = Vec::new();
        for (b, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let frozen = &*model;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mut rng = derive_rng(derive_seed(cfg.seed, "train/dropout"), &format!("{epoch}/{b}/{k}"));
                    sample_gradients(frozen, &train[i], cfg.task, Mode::Train, &mut rng, true)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| match e {
                    TrainError::Numerics(NumericsError::NonFinite(_))
                    | TrainError::Model(ModelError::Numerics(NumericsError::NonFinite(_))) => TrainError::NonFinite { epoch, batch: b },
                    e => e,
                })?;
            let scale = 1.0 / batch.len() as f32;
            let mut loss = 0.0;
            for (value, grads) in &results {
                let grads = grads.as_ref().ok_or(TrainError::NonFinite { epoch, batch: b })?;
                loss += value;
                model.params.accumulate(grads, scale)?;
            }
            let loss = loss / batch.len() as f64;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            adam.step(&mut model.params)?;
            model.params.zero_grads();
            batch_losses.push(loss);
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let train_loss_eval = if cfg.monitor_eval_loss { Some(mean_loss(model, train, cfg.task)?) } else { None };
        let (validation_loss, report) = match validation {
            Some(v) if !v.is_empty() => (Some(mean_loss(model, v, cfg.task)?), evaluate(model, v).ok()),
            _ => (None, None),
        };
        let record = EpochRecord { epoch, train_loss, train_loss_eval, validation_loss, validation: report };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}{}",
            validation_loss.map(|v| format!(", validation loss {v:.5}")).unwrap_or_default()
        );
        on_epoch(&record, model);
        trace.push(record);

        if cfg.early_stopping_patience > 0 {
            if let Some(v) = validation_loss {
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, model.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.early_stopping_patience {
                        log::info!("early stopping after epoch {epoch}");
                        break;
                    }
                }
            }
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(trace)
}

/// Patient-level value from sentence outputs: mean probability, or mean of
/// clamped PHQ estimates.
pub fn aggregate_patient(outputs: &[f64], task: Task) -> Result<f64, EvalError> {
    if outputs.is_empty() {
        return Err(EvalError::EmptyAggregation);
    }
    let n = outputs.len() as f64;
    Ok(match task {
        Task::Classification => outputs.iter().sum::<f64>() / n,
        Task::Regression => outputs.iter().map(|&v| report_phq(v)).sum::<f64>() / n,
    })
}

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Sentence outputs and the aggregate for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientPrediction {
    pub patient_id: String,
    pub sentence_outputs: Vec<f64>,
    pub aggregate: f64,
}

impl PatientPrediction {
    pub fn predicts_mdd(&self, task: Task) -> bool {
        match task {
            Task::Classification => self.aggregate >= DECISION_THRESHOLD,
            Task::Regression => self.aggregate >= crate::corpus::MDD_THRESHOLD as f64,
        }
    }
}

/// Eval-mode predictions grouped by patient, in first-appearance order.
pub fn predict_patients(model: &Model<f32>, samples: &[SentenceSample]) -> Result<Vec<PatientPrediction>, EvalError> {
    let outputs = samples.par_iter().map(|s| model.predict_sample(s)).collect::<Result<Vec<_>, _>>()?;
    let mut grouped: IndexMap<&str, Vec<f64>> = IndexMap::new();
    for (s, o) in samples.iter().zip(outputs) {
        grouped.entry(s.patient_id.as_str()).or_default().push(o);
    }
    grouped
        .into_iter()
        .map(|(id, outs)| {
            Ok(PatientPrediction { patient_id: id.to_string(), aggregate: aggregate_patient(&outs, model.task())?, sentence_outputs: outs })
        })
        .collect()
}

/// Patient-level metrics. Rates are percentages; `None` marks an undefined
/// value (zero denominator, or no PHQ estimate from a classifier).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub n_patients: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall_sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub average_error: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(task: Task, tp: usize, fp: usize, tn: usize, fn_: usize, average_error: Option<f64>) -> Self {
        let precision = rate(tp, tp + fp);
        let recall = rate(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        EvalReport {
            task,
            n_patients: tp + fp + tn + fn_,
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall_sensitivity: recall,
            specificity: rate(tn, tn + fp),
            f1,
            average_error,
        }
    }

    /// Average error as a percentage of the PHQ range.
    pub fn relative_error(&self) -> Option<f64> {
        self.average_error.map(|e| 100.0 * e / crate::corpus::MAX_PHQ as f64)
    }

    pub fn metrics(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("f1", self.f1),
            ("precision", self.precision),
            ("recall_sensitivity", self.recall_sensitivity),
            ("specificity", self.specificity),
            ("average_error", self.average_error),
            ("relative_error", self.relative_error()),
        ]
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |v| format!("{v:.1}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task: {}  patients: {}", self.task, self.n_patients)?;
        writeln!(f, "tp {}  fp {}  tn {}  fn {}", self.tp, self.fp, self.tn, self.fn_)?;
        writeln!(f, "F1            {}", show(self.f1))?;
        writeln!(f, "precision     {}", show(self.precision))?;
        writeln!(f, "sensitivity   {}", show(self.recall_sensitivity))?;
        writeln!(f, "specificity   {}", show(self.specificity))?;
        write!(
            f,
            "average error {}{}",
            self.average_error.map_or("—".into(), |v| format!("{v:.2}")),
            self.relative_error().map_or(String::new(), |r| format!(" ({r:.1}% relative)"))
        )
    }
}

/// Patient-level evaluation; positive means MDD. Regression estimates are
/// also thresholded at the MDD cut-off, so every metric is defined for them.
pub fn evaluate(model: &Model<f32>, samples: &[SentenceSample]) -> Result<EvalReport, EvalError> {
    let predictions = predict_patients(model, samples)?;
    if predictions.is_empty() {
        return Err(EvalError::EmptyAggregation);
    }
    let label_of: IndexMap<&str, _> = samples.iter().map(|s| (s.patient_id.as_str(), s.label)).collect();
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut abs_error = 0.0;
    for p in &predictions {
        let label = label_of[p.patient_id.as_str()].ok_or_else(|| EvalError::Unlabelled(p.patient_id.clone()))?;
        match (p.predicts_mdd(model.task()), label.mdd()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
        abs_error += (p.aggregate - label.phq() as f64).abs();
    }
    let average_error = (model.task() == Task::Regression).then(|| abs_error / predictions.len() as f64);
    Ok(EvalReport::from_counts(model.task(), tp, fp, tn, fn_, average_error))
}

/// Mean absolute error of predicting `constant` for every patient.
pub fn constant_predictor_error(samples: &[SentenceSample], constant: f64) -> f64 {
    let mut seen: IndexMap<&str, u8> = IndexMap::new();
    for s in samples {
        if let Some(l) = s.label {
            seen.insert(&s.patient_id, l.phq());
        }
    }
    seen.values().map(|&p| (p as f64 - constant).abs()).sum::<f64>() / seen.len().max(1) as f64
}

/// Mean patient PHQ score of a sample set.
pub fn mean_patient_phq(samples: &[SentenceSample]) -> f64 {
    let mut seen: IndexMap<&str, u8> = IndexMap::new();
    for s in samples {
        if let Some(l) = s.label {
            seen.insert(&s.patient_id, l.phq());
        }
    }
    seen.values().map(|&p| p as f64).sum::<f64>() / seen.len().max(1) as f64
}

/// `epoch,split,task,metric,value` rows for a loss trace and optional final
/// report (written with epoch `final`).
pub fn write_metrics_csv(path: &Path, task: Task, trace: &[EpochRecord], report: Option<(&str, &EvalReport)>) -> std::io::Result<()> {
    let mut out = String::from("epoch,split,task,metric,value\n");
    let mut row = |epoch: &str, split: &str, metric: &str, value: Option<f64>| {
        let v = value.map_or_else(|| "—".to_string(), |v| format!("{v}"));
        out.push_str(&format!("{epoch},{split},{task},{metric},{v}\n"));
    };
    for r in trace {
        let e = r.epoch.to_string();
        row(&e, "train", "loss", Some(r.train_loss));
        if r.train_loss_eval.is_some() {
            row(&e, "train", "loss_eval_mode", r.train_loss_eval);
        }
        if r.validation_loss.is_some() {
            row(&e, "validation", "loss", r.validation_loss);
        }
        if let Some(rep) = &r.validation {
            for (name, v) in rep.metrics() {
                row(&e, "validation", name, v);
            }
        }
    }
    if let Some((split, rep)) = report {
        for (name, v) in rep.metrics() {
            row("final", split, name, v);
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_rules() {
        let p = aggregate_patient(&[0.9, 0.2, 0.6], Task::Classification).unwrap();
        assert!((p - 0.566_666).abs() < 1e-5 && p >= DECISION_THRESHOLD);
        assert_eq!(aggregate_patient(&[0.3], Task::Classification).unwrap(), 0.3);
        assert_eq!(aggregate_patient(&[10.0, 5.0], Task::Regression).unwrap(), 7.5);
        assert_eq!(aggregate_patient(&[12.0, 8.0], Task::Regression).unwrap(), 10.0);
        assert_eq!(aggregate_patient(&[-4.0, 30.0], Task::Regression).unwrap(), 12.0);
        assert!(matches!(aggregate_patient(&[], Task::Regression), Err(EvalError::EmptyAggregation)));
    }

    #[test]
    fn metric_formulas() {
        let r = EvalReport::from_counts(Task::Classification, 1, 0, 1, 0, None);
        assert_eq!((r.precision, r.recall_sensitivity, r.specificity, r.f1), (Some(100.0), Some(100.0), Some(100.0), Some(100.0)));
        let r = EvalReport::from_counts(Task::Classification, 0, 0, 3, 0, None);
        assert_eq!((r.precision, r.recall_sensitivity, r.f1), (None, None, None));
        assert_eq!(r.specificity, Some(100.0));
        assert!(r.to_string().contains('—'));
        let r = EvalReport::from_counts(Task::Regression, 0, 0, 1, 0, Some(3.67));
        assert!((r.relative_error().unwrap() - 15.29).abs() < 0.01);
    }

    #[test]
    fn default_learning_rates() {
        assert_eq!(TrainConfig::new(Task::Classification).learning_rate, 1e-3);
        assert_eq!(TrainConfig::new(Task::Regression).learning_rate, 1e-5);
    }
}
