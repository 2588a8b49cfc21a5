//! End-to-end experiment pipelines shared by the CLI and the test suites.

use rayon::prelude::*;
use serde::Serialize;

use super::CliError;
use crate::data::{self, Dataset, DatasetSchema, SchemaName, SplitSpec};
use crate::metrics::{self, MetricReport, MulticlassConfusion, RocCurve, DEFAULT_THRESHOLD};
use crate::model::{
    region_mistakes, train_binary, train_region, train_softmax, GatedModel, LossTrace,
    SoftmaxModel, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gated,
    Plain,
    Softmax,
}

impl ModelKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelKind::Gated | ModelKind::Plain => 0.5,
            ModelKind::Softmax => 0.01,
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            ModelKind::Gated | ModelKind::Plain => 100,
            ModelKind::Softmax => 200,
        }
    }
}

/// Rejects schema/model pairs that cannot be trained together.
pub fn check_pairing(schema: SchemaName, kind: ModelKind) -> Result<(), CliError> {
    let ok = match kind {
        ModelKind::Softmax => schema == SchemaName::IrisMulticlass,
        ModelKind::Gated | ModelKind::Plain => matches!(
            schema,
            SchemaName::Wdbc | SchemaName::Pima | SchemaName::Iris2Class | SchemaName::Generic
        ),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "model '{}' cannot be trained on schema '{schema}'",
            format!("{kind:?}").to_lowercase()
        )))
    }
}

fn data_err(stage: &'static str) -> impl Fn(data::DataError) -> CliError {
    move |source| CliError::Data { stage, source }
}

fn model_err(stage: &'static str) -> impl Fn(crate::model::ModelError) -> CliError {
    move |source| CliError::Model { stage, source }
}

fn metrics_err(stage: &'static str) -> impl Fn(metrics::MetricsError) -> CliError {
    move |source| CliError::Metrics { stage, source }
}

/// Outcome of one sigmoid-unit run.
#[derive(Debug, Clone)]
pub struct BinaryRun {
    pub model: GatedModel,
    pub trace: LossTrace,
    pub report: MetricReport,
    pub roc: RocCurve,
    /// Training rows after imputation and normalization.
    pub train: Dataset,
    pub test: Dataset,
}

/// Split, impute, normalize, train and evaluate one gated or plain model.
///
/// The split, the initial weights and the sample order all derive from
/// `cfg.seed`. Imputation and normalization statistics come from the
/// training rows only.
pub fn run_binary(
    raw: &Dataset,
    schema: &DatasetSchema,
    gate_enabled: bool,
    cfg: &TrainConfig,
    test_fraction: f64,
) -> Result<BinaryRun, CliError> {
    let spec = SplitSpec {
        test_fraction,
        seed: cfg.seed,
    };
    let (train_idx, test_idx) =
        data::split_indices(raw.n_rows(), &spec).map_err(data_err("split"))?;
    let imputed = data::impute_missing(raw, schema, &train_idx).map_err(data_err("impute"))?;
    let scaled = data::normalize(&imputed, &train_idx).map_err(data_err("normalize"))?;
    let train = scaled.subset(&train_idx).map_err(data_err("split"))?;
    let test = scaled.subset(&test_idx).map_err(data_err("split"))?;

    let init = GatedModel::random(train.n_features(), gate_enabled, cfg.seed);
    let (model, trace) = train_binary(&init, &train, cfg).map_err(model_err("train"))?;

    let scores: Vec<f64> = test
        .rows()
        .map(|x| model.sigmoid_predict(x))
        .collect::<Result<_, _>>()
        .map_err(model_err("evaluate"))?;
    let report = metrics::evaluate(test.labels(), &scores, DEFAULT_THRESHOLD)
        .map_err(metrics_err("evaluate"))?;
    let roc = metrics::roc_auc(test.labels(), &scores).map_err(metrics_err("evaluate"))?;
    Ok(BinaryRun {
        model,
        trace,
        report,
        roc,
        train,
        test,
    })
}

#[derive(Debug, Clone)]
pub struct SoftmaxRun {
    pub model: SoftmaxModel,
    pub trace: LossTrace,
    pub confusion: MulticlassConfusion,
    pub accuracy: f64,
}

/// Appends the raw product feature, splits, normalizes every column
/// (product included) on the training rows, then trains and scores a
/// softmax model.
pub fn run_softmax(
    raw: &Dataset,
    classes: usize,
    cfg: &TrainConfig,
    test_fraction: f64,
) -> Result<SoftmaxRun, CliError> {
    let with_product = data::append_product_feature(raw);
    let spec = SplitSpec {
        test_fraction,
        seed: cfg.seed,
    };
    let (train_idx, test_idx) =
        data::split_indices(with_product.n_rows(), &spec).map_err(data_err("split"))?;
    let scaled = data::normalize(&with_product, &train_idx).map_err(data_err("normalize"))?;
    let train = scaled.subset(&train_idx).map_err(data_err("split"))?;
    let test = scaled.subset(&test_idx).map_err(data_err("split"))?;

    let init =
        SoftmaxModel::random(classes, train.n_features(), cfg.seed).map_err(model_err("train"))?;
    let (model, trace) = train_softmax(&init, &train, cfg).map_err(model_err("train"))?;

    let predictions: Vec<usize> = test
        .rows()
        .map(|x| model.predict_class(x))
        .collect::<Result<_, _>>()
        .map_err(model_err("evaluate"))?;
    let truth: Vec<usize> = test.labels().iter().map(|&l| l as usize).collect();
    let confusion = metrics::multiclass_confusion(&truth, &predictions, classes)
        .map_err(metrics_err("evaluate"))?;
    Ok(SoftmaxRun {
        model,
        trace,
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// Column means of a repeated-run table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanRow {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl MeanRow {
    pub fn of(runs: &[MetricReport]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&MetricReport) -> f64| runs.iter().map(f).sum::<f64>() / n;
        Self {
            tp: mean(&|r| r.counts.tp as f64),
            tn: mean(&|r| r.counts.tn as f64),
            fp: mean(&|r| r.counts.fp as f64),
            fn_: mean(&|r| r.counts.fn_ as f64),
            accuracy: mean(&|r| r.accuracy),
            precision: mean(&|r| r.precision),
            recall: mean(&|r| r.recall),
            f1: mean(&|r| r.f1),
            auc: mean(&|r| r.auc),
        }
    }
}

/// Per-seed metric rows plus their mean, shaped like a results table.
#[derive(Debug, Clone, Serialize)]
pub struct ReproReport {
    pub schema: String,
    pub model: ModelKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricReport>,
    pub mean: MeanRow,
}

impl ReproReport {
    /// Recomputes the mean row from the runs and compares to 1e-9.
    pub fn check_consistency(&self) -> Result<(), String> {
        let fresh = MeanRow::of(&self.runs);
        let pairs = [
            (fresh.tp, self.mean.tp),
            (fresh.tn, self.mean.tn),
            (fresh.fp, self.mean.fp),
            (fresh.fn_, self.mean.fn_),
            (fresh.accuracy, self.mean.accuracy),
            (fresh.precision, self.mean.precision),
            (fresh.recall, self.mean.recall),
            (fresh.f1, self.mean.f1),
            (fresh.auc, self.mean.auc),
        ];
        if pairs.iter().all(|(a, b)| (a - b).abs() <= 1e-9) {
            Ok(())
        } else {
            Err("mean row disagrees with per-run rows".into())
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} / {} (lr={}, epochs={})\n",
            self.schema,
            format!("{:?}", self.model).to_lowercase(),
            self.learning_rate,
            self.epochs
        );
        out.push_str("seed    TP    TN    FP    FN     Ac     Pr    Rec     F1    AUC\n");
        for (seed, r) in self.seeds.iter().zip(&self.runs) {
            out.push_str(&format!(
                "{:<6}{:>4}{:>6}{:>6}{:>6}{:>7.3}{:>7.3}{:>7.3}{:>7.3}{:>7.3}\n",
                seed,
                r.counts.tp,
                r.counts.tn,
                r.counts.fp,
                r.counts.fn_,
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                r.auc
            ));
        }
        let m = &self.mean;
        out.push_str(&format!(
            "{:<6}{:>4.1}{:>6.1}{:>6.1}{:>6.1}{:>7.3}{:>7.3}{:>7.3}{:>7.3}{:>7.3}\n",
            "mean", m.tp, m.tn, m.fp, m.fn_, m.accuracy, m.precision, m.recall, m.f1, m.auc
        ));
        out
    }
}

/// Runs [`run_binary`] with seeds `seed, seed + 1, …`, in parallel,
/// assembling rows in seed order.
pub fn repro_binary(
    raw: &Dataset,
    schema: &DatasetSchema,
    kind: ModelKind,
    cfg: &TrainConfig,
    test_fraction: f64,
    reps: usize,
) -> Result<ReproReport, CliError> {
    if reps == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    let gate = match kind {
        ModelKind::Gated => true,
        ModelKind::Plain => false,
        ModelKind::Softmax => {
            return Err(CliError::Usage(
                "use repro_softmax for softmax models".into(),
            ))
        }
    };
    let seeds: Vec<u64> = (0..reps as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..*cfg };
            run_binary(raw, schema, gate, &cfg, test_fraction).map(|r| r.report)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = ReproReport {
        schema: schema.name.to_string(),
        model: kind,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        seeds,
        mean: MeanRow::of(&runs),
        runs,
    };
    report.check_consistency().map_err(CliError::Internal)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SoftmaxRepro {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

impl SoftmaxRepro {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "iris-multiclass / softmax (lr={}, epochs={})\nseed  accuracy\n",
            self.learning_rate, self.epochs
        );
        for (s, a) in self.seeds.iter().zip(&self.accuracies) {
            out.push_str(&format!("{s:<6}{a:.4}\n"));
        }
        out.push_str(&format!("mean  {:.4}\n", self.mean_accuracy));
        out
    }
}

pub fn repro_softmax(
    raw: &Dataset,
    classes: usize,
    cfg: &TrainConfig,
    test_fraction: f64,
    reps: usize,
) -> Result<SoftmaxRepro, CliError> {
    if reps == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..reps as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let accuracies = seeds
        .par_iter()
        .map(|&seed| {
            run_softmax(raw, classes, &TrainConfig { seed, ..*cfg }, test_fraction)
                .map(|r| r.accuracy)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean_accuracy = accuracies.iter().sum::<f64>() / reps as f64;
    Ok(SoftmaxRepro {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        seeds,
        accuracies,
        mean_accuracy,
    })
}

/// Class subsets for the region-regression experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RegionClasses {
    /// setosa +1, versicolor -1; virginica rows dropped.
    Two,
    /// setosa +1, versicolor -1, virginica +1.
    Three,
}

impl RegionClasses {
    /// Region target per Iris class index; `None` drops the row.
    fn target(self, class: i32) -> Option<i32> {
        match (self, class) {
            (_, 0) => Some(1),
            (_, 1) => Some(-1),
            (RegionClasses::Three, 2) => Some(1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassMistakes {
    pub class: String,
    pub total: usize,
    pub misclassified: usize,
}

#[derive(Debug, Clone)]
pub struct RegionRun {
    pub model: GatedModel,
    /// The two selected columns, min-max scaled over all rows.
    pub data: Dataset,
    pub per_class: Vec<ClassMistakes>,
    pub total_misclassified: usize,
}

/// Region regression on two Iris columns (0-based indices).
///
/// `iris` must carry class indices 0/1/2 (the `iris-multiclass` schema).
/// Both columns are min-max scaled over all rows; the raw centimetre values
/// make the raw-sum update diverge at the usual learning rates.
pub fn run_iris_regression(
    iris: &Dataset,
    columns: (usize, usize),
    classes: RegionClasses,
    gate_enabled: bool,
    cfg: &TrainConfig,
) -> Result<RegionRun, CliError> {
    let keep: Vec<usize> = (0..iris.n_rows())
        .filter(|&i| classes.target(iris.labels()[i]).is_some())
        .collect();
    let subset = iris
        .subset(&keep)
        .and_then(|d| d.select_columns(&[columns.0, columns.1]))
        .map_err(data_err("load"))?;
    let all: Vec<usize> = (0..subset.n_rows()).collect();
    let scaled = data::normalize(&subset, &all).map_err(data_err("normalize"))?;
    let class_idx: Vec<i32> = scaled.labels().to_vec();
    let targets: Vec<i32> = class_idx
        .iter()
        .filter_map(|&c| classes.target(c))
        .collect();
    let region_data = scaled.with_labels(targets).map_err(data_err("load"))?;

    let init = GatedModel::random(2, gate_enabled, cfg.seed);
    let model = train_region(&init, &region_data, cfg).map_err(model_err("train"))?;

    let names = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"];
    let mut per_class: Vec<ClassMistakes> = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let rows: Vec<usize> = (0..region_data.n_rows())
            .filter(|&i| class_idx[i] == c as i32)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let misclassified = region_data
            .subset(&rows)
            .map(|d| region_mistakes(&model, &d))
            .map_err(data_err("evaluate"))?;
        per_class.push(ClassMistakes {
            class: name.to_string(),
            total: rows.len(),
            misclassified,
        });
    }
    let total_misclassified = region_mistakes(&model, &region_data);
    Ok(RegionRun {
        model,
        data: region_data,
        per_class,
        total_misclassified,
    })
}

/// XOR corners in reporting order: (0,0), (1,0), (0,1), (1,1).
pub const XOR_POINTS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
/// Region targets: equal inputs positive, unequal negative.
pub const XOR_TARGETS: [i32; 4] = [1, -1, -1, 1];

pub fn xor_dataset() -> Dataset {
    Dataset::new(
        XOR_POINTS.iter().map(|p| p.to_vec()).collect(),
        XOR_TARGETS.to_vec(),
        vec!["x1".into(), "x2".into()],
    )
    .expect("static XOR table is well formed")
}

#[derive(Debug, Clone)]
pub struct XorRun {
    pub model: GatedModel,
    pub outputs: [f64; 4],
    pub satisfied: usize,
}

impl XorRun {
    pub fn passed(&self) -> bool {
        self.satisfied == 4
    }
}

/// Weighted sums at the four corners and how many carry the XOR sign.
pub fn xor_outputs(model: &GatedModel) -> ([f64; 4], usize) {
    let mut outputs = [0.0; 4];
    let mut satisfied = 0;
    for (k, (p, &t)) in XOR_POINTS.iter().zip(&XOR_TARGETS).enumerate() {
        outputs[k] = model.weighted_sum(p).expect("two-input model");
        if (if outputs[k] >= 0.0 { 1 } else { -1 }) == t {
            satisfied += 1;
        }
    }
    (outputs, satisfied)
}

pub fn run_xor(gate_enabled: bool, cfg: &TrainConfig) -> Result<XorRun, CliError> {
    let init = GatedModel::random(2, gate_enabled, cfg.seed);
    let model = train_region(&init, &xor_dataset(), cfg).map_err(model_err("train"))?;
    let (outputs, satisfied) = xor_outputs(&model);
    Ok(XorRun {
        model,
        outputs,
        satisfied,
    })
}

/// Reference weights `w1=0.1, w2=-0.2, gate=1.0, b=-0.01`. Their corner signs
/// follow `x1` rather than the XOR partition; `gated xor` reports both.
pub fn published_xor_model() -> GatedModel {
    GatedModel {
        input_weights: vec![0.1, -0.2],
        gate_weight: 1.0,
        bias: -0.01,
        gate_enabled: true,
    }
}
