//! Confusion-matrix metrics and the run report.
//!
//! The matrix orientation is rows = actual, columns = predicted; per class
//! `tp = c_ii`, `fp` is the column sum minus `tp`, `fn` the row sum minus
//! `tp`, `tn` the remainder. The five metrics (precision, specificity,
//! sensitivity, accuracy, F1) are reported per class as fractions and
//! macro-averaged as percentages; 0/0 denominators yield 0.

use crate::config::PipelineConfig;
use crate::models::ParamValue;
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Count matrix with `counts[actual][predicted]`.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

/// Raw count table for dense labels in `[0, n_classes)`.
pub fn confusion_counts(
    actual: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::stage(
            "evaluate",
            "actual and predicted labels must have equal, nonzero length",
        ));
    }
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= n_classes || p >= n_classes {
            return Err(Error::stage(
                "evaluate",
                format!("label {} outside the known class set (0..{n_classes})", a.max(p)),
            ));
        }
        counts[a][p] += 1;
    }
    Ok(counts)
}

pub fn confusion(
    actual: &[usize],
    predicted: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix> {
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts: confusion_counts(actual, predicted, class_names.len())?,
    })
}

/// Per-class confusion elements and metrics (fractions in [0, 1]).
#[derive(Debug, Clone, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Unweighted macro averages expressed as percentages, in the reporting
/// order specificity, sensitivity, precision, accuracy, F1.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateMetrics {
    pub specificity: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Compute per-class and macro metrics from a confusion matrix.
pub fn metrics(matrix: &ConfusionMatrix) -> (Vec<ClassMetrics>, AggregateMetrics) {
    let c = matrix.counts.len();
    let total: usize = matrix.counts.iter().flatten().sum();
    let mut per_class = Vec::with_capacity(c);
    for i in 0..c {
        let tp = matrix.counts[i][i];
        let fp: usize = (0..c).map(|l| matrix.counts[l][i]).sum::<usize>() - tp;
        let fn_: usize = matrix.counts[i].iter().sum::<usize>() - tp;
        let tn = total - tp - fp - fn_;
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let sensitivity = ratio(tp as f64, (tp + fn_) as f64);
        let specificity = ratio(tn as f64, (fp + tn) as f64);
        let accuracy = ratio((tp + tn) as f64, total as f64);
        let f1 = ratio(
            2.0 * precision * sensitivity,
            precision + sensitivity,
        );
        per_class.push(ClassMetrics {
            class: matrix
                .class_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| i.to_string()),
            tp,
            fp,
            fn_,
            tn,
            precision,
            specificity,
            sensitivity,
            accuracy,
            f1,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| {
        100.0 * per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
    };
    let aggregate = AggregateMetrics {
        specificity: mean(|m| m.specificity),
        sensitivity: mean(|m| m.sensitivity),
        precision: mean(|m| m.precision),
        accuracy: mean(|m| m.accuracy),
        f1: mean(|m| m.f1),
    };
    (per_class, aggregate)
}

/// Share of equal label pairs.
pub fn accuracy_of(actual: &[usize], predicted: &[usize]) -> f64 {
    let correct = actual
        .iter()
        .zip(predicted)
        .filter(|(a, p)| a == p)
        .count();
    correct as f64 / actual.len() as f64
}

/// Macro-averaged F1 as a fraction; used as the grid-search tie-breaker.
pub fn macro_f1(actual: &[usize], predicted: &[usize], n_classes: usize) -> f64 {
    let counts = match confusion_counts(actual, predicted, n_classes) {
        Ok(c) => c,
        Err(_) => return 0.0,
    };
    let matrix = ConfusionMatrix {
        class_names: (0..n_classes).map(|i| i.to_string()).collect(),
        counts,
    };
    let (_, aggregate) = metrics(&matrix);
    aggregate.f1 / 100.0
}

/// One point of a training curve: per epoch for the CNN, per grid candidate
/// for classical models.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Grid candidate outcome kept in the report.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub params: BTreeMap<String, ParamValue>,
    pub fold_accuracies: Vec<f64>,
    pub mean_cv_accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub model: String,
    pub best_params: BTreeMap<String, ParamValue>,
    pub candidates: Vec<CandidateReport>,
    /// Per-fold validation accuracy of the winning configuration.
    pub fold_accuracies: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_metrics: AggregateMetrics,
    pub curve: Vec<CurvePoint>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub method: String,
    pub n_features_before: usize,
    pub kept_features: Vec<String>,
    pub scores: Vec<f64>,
}

/// Everything a run produces. Serializes byte-identically for identical
/// (config, dataset, seed); wall-clock timings live only in `timings.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: PipelineConfig,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub class_names: Vec<String>,
    pub selection: Option<SelectionReport>,
    pub models: Vec<ModelReport>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

/// Percentage with two decimals, trailing zeros trimmed: 76.0 -> "76",
/// 76.5 -> "76.5".
pub fn format_percent(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// One bracketed summary line per model:
/// `kNN [specificity,sensitivity,precision,accuracy,f1]`.
pub fn summary_line(report: &ModelReport) -> String {
    let m = &report.macro_metrics;
    format!(
        "{} [{},{},{},{},{}]",
        report.model,
        format_percent(m.specificity),
        format_percent(m.sensitivity),
        format_percent(m.precision),
        format_percent(m.accuracy),
        format_percent(m.f1),
    )
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::stage("report", format!("cannot write `{}`: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::stage("report", format!("write `{}`: {e}", path.display()))
}

/// Write `report.json`, per-model curve and confusion CSVs, and
/// `timings.csv` into `out_dir`. Returns the written paths.
pub fn write_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::stage(
            "report",
            format!("cannot create output directory `{}`: {e}", out_dir.display()),
        )
    })?;
    let mut written = Vec::new();

    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::stage("report", format!("serialize report: {e}")))?;
    let mut w = create(&json_path)?;
    writeln!(w, "{json}").map_err(io_err(&json_path))?;
    written.push(json_path);

    for model in &report.models {
        let curve_path = out_dir.join(format!("curves_{}.csv", model.model));
        let mut w = create(&curve_path)?;
        writeln!(w, "step,loss,accuracy").map_err(io_err(&curve_path))?;
        for p in &model.curve {
            writeln!(w, "{},{},{}", p.step, p.loss, p.accuracy).map_err(io_err(&curve_path))?;
        }
        written.push(curve_path);

        let conf_path = out_dir.join(format!("confusion_{}.csv", model.model));
        let mut w = create(&conf_path)?;
        writeln!(w, "actual\\predicted,{}", model.confusion.class_names.join(","))
            .map_err(io_err(&conf_path))?;
        for (i, row) in model.confusion.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{}", model.confusion.class_names[i], cells.join(","))
                .map_err(io_err(&conf_path))?;
        }
        written.push(conf_path);
    }

    let timings_path = out_dir.join("timings.csv");
    let mut w = create(&timings_path)?;
    writeln!(w, "stage,milliseconds").map_err(io_err(&timings_path))?;
    for (stage, ms) in &report.timings {
        writeln!(w, "{stage},{ms:.3}").map_err(io_err(&timings_path))?;
    }
    written.push(timings_path);

    Ok(written)
}
