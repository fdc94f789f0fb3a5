//! Evaluation metrics and reports: F-measure with the empty-ground-truth
//! flip rule, Pearson/Spearman correlation, per-term energy correlation with
//! the relative-difference-vs-lambda breakdown, and report emission
//! (JSON, CSV, SVG scatter).

use crate::energy::{EnergyBreakdown, Labeling};
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Default beta^2 for the F-measure.
pub const DEFAULT_BETA2: f64 = 0.3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> EvalError {
    let context = context.into();
    move |source| EvalError::Io { context, source }
}

/// Weighted precision/recall combination. When the ground truth has no
/// object pixels both labelings are inverted first; a prediction with no
/// positives against a non-empty truth scores 0.
pub fn f_measure(pred: &Labeling, truth: &Labeling, beta2: f64) -> Result<f64, EvalError> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(EvalError::DimensionMismatch(format!(
            "pred {}x{} vs truth {}x{}",
            pred.height, pred.width, truth.height, truth.width
        )));
    }
    let flipped;
    let (pred, truth) = if truth.count_ones() == 0 {
        flipped = (pred.inverted(), truth.inverted());
        (&flipped.0, &flipped.1)
    } else {
        (pred, truth)
    };

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + beta2) * precision * recall / denom)
}

/// Sample Pearson correlation; `None` when either side is constant or the
/// series are shorter than 2.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Ok(None);
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..n {
        let dx = xs[i] - mean_x;
        let dy = ys[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_x * var_y).sqrt()))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0; // average rank for ties
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// One evaluated sample: simulated vs optimal energies plus the F-measure of
/// the simulated labeling against the optimizer's.
#[derive(Debug, Clone, Serialize)]
pub struct SamplePair {
    pub lambda: f64,
    pub f: f64,
    #[serde(rename = "energySim")]
    pub sim: EnergyBreakdown,
    #[serde(rename = "energyOpt")]
    pub opt: EnergyBreakdown,
}

/// Mean relative energy difference of the samples sharing one lambda.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaBucket {
    pub lambda: f64,
    pub mean_rel_diff: f64,
    pub count: usize,
}

/// Per-term Pearson coefficients plus the relative-difference breakdown.
/// `r_pairwise_nonempty` excludes samples whose optimal solution has a zero
/// smoothness term (the empty-labeling population at high lambda), reported
/// separately because it depresses the raw coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyCorrelation {
    #[serde(rename = "rUnary")]
    pub r_unary: Option<f64>,
    #[serde(rename = "rPairwise")]
    pub r_pairwise: Option<f64>,
    #[serde(rename = "rTotal")]
    pub r_total: Option<f64>,
    #[serde(rename = "rPairwiseNonEmpty")]
    pub r_pairwise_nonempty: Option<f64>,
    #[serde(rename = "emptyOptimalCount")]
    pub empty_optimal_count: usize,
    #[serde(rename = "relDiffByLambda")]
    pub rel_diff_by_lambda: Vec<LambdaBucket>,
}

/// Relative total-energy gap of one sample, guarded against tiny optima.
pub fn relative_difference(pair: &SamplePair) -> f64 {
    (pair.sim.total - pair.opt.total) / pair.opt.total.max(1e-9)
}

/// Correlations and lambda-bucketed relative differences over a sample set.
pub fn energy_correlation_report(pairs: &[SamplePair]) -> EnergyCorrelation {
    assert!(!pairs.is_empty(), "correlation report needs samples");
    let opt_unary: Vec<f64> = pairs.iter().map(|p| p.opt.unary_term).collect();
    let sim_unary: Vec<f64> = pairs.iter().map(|p| p.sim.unary_term).collect();
    let opt_pair: Vec<f64> = pairs.iter().map(|p| p.opt.pairwise_term).collect();
    let sim_pair: Vec<f64> = pairs.iter().map(|p| p.sim.pairwise_term).collect();
    let opt_total: Vec<f64> = pairs.iter().map(|p| p.opt.total).collect();
    let sim_total: Vec<f64> = pairs.iter().map(|p| p.sim.total).collect();

    let nonempty: Vec<&SamplePair> = pairs.iter().filter(|p| p.opt.pairwise_term > 0.0).collect();
    let r_pairwise_nonempty = pearson(
        &nonempty
            .iter()
            .map(|p| p.opt.pairwise_term)
            .collect::<Vec<_>>(),
        &nonempty
            .iter()
            .map(|p| p.sim.pairwise_term)
            .collect::<Vec<_>>(),
    )
    .expect("equal lengths");

    // Bucket by exact lambda value; schedule lambdas are bit-identical
    // across records, so no binning is needed.
    let mut sorted: Vec<&SamplePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut rel_diff_by_lambda = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let lambda = sorted[i].lambda;
        let mut sum = 0.0;
        let mut count = 0;
        while i < sorted.len() && sorted[i].lambda == lambda {
            sum += relative_difference(sorted[i]);
            count += 1;
            i += 1;
        }
        rel_diff_by_lambda.push(LambdaBucket {
            lambda,
            mean_rel_diff: sum / count as f64,
            count,
        });
    }

    EnergyCorrelation {
        r_unary: pearson(&opt_unary, &sim_unary).expect("equal lengths"),
        r_pairwise: pearson(&opt_pair, &sim_pair).expect("equal lengths"),
        r_total: pearson(&opt_total, &sim_total).expect("equal lengths"),
        r_pairwise_nonempty,
        empty_optimal_count: pairs.len() - nonempty.len(),
        rel_diff_by_lambda,
    }
}

/// Full evaluation of a model over a sample set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    #[serde(rename = "meanF")]
    pub mean_f: f64,
    pub correlation: EnergyCorrelation,
    #[serde(rename = "perSample")]
    pub per_sample: Vec<SamplePair>,
}

pub fn build_report(pairs: Vec<SamplePair>) -> EvalReport {
    assert!(!pairs.is_empty(), "report needs samples");
    let mean_f = pairs.iter().map(|p| p.f).sum::<f64>() / pairs.len() as f64;
    let correlation = energy_correlation_report(&pairs);
    EvalReport {
        mean_f,
        correlation,
        per_sample: pairs,
    }
}

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json).map_err(io_err(format!("writing {}", path.display())))
}

pub fn write_scatter_csv(pairs: &[SamplePair], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("lambda,optUnary,simUnary,optPair,simPair,optTotal,simTotal,f\n");
    for p in pairs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.lambda,
            p.opt.unary_term,
            p.sim.unary_term,
            p.opt.pairwise_term,
            p.sim.pairwise_term,
            p.opt.total,
            p.sim.total,
            p.f
        ));
    }
    std::fs::write(path, out).map_err(io_err(format!("writing {}", path.display())))
}

/// Minimal scatter rendering: optimizer energy on x, simulated energy on y,
/// one colored series per term (unary blue, smoothness green, total red)
/// plus the identity diagonal.
pub fn write_scatter_svg(pairs: &[SamplePair], path: &Path) -> Result<(), EvalError> {
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 60.0;
    let max_energy = pairs
        .iter()
        .flat_map(|p| [p.opt.total, p.sim.total])
        .fold(1e-9_f64, f64::max);
    let scale = (SIZE - 2.0 * MARGIN) / max_energy;
    let px = |v: f64| MARGIN + v * scale;
    let py = |v: f64| SIZE - MARGIN - v * scale;

    let file = std::fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let render = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SIZE} {SIZE}\">"
        )?;
        writeln!(
            out,
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{e}\" y2=\"{b}\" stroke=\"black\"/>",
            m = MARGIN,
            b = SIZE - MARGIN,
            e = SIZE - MARGIN
        )?;
        writeln!(
            out,
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
            m = MARGIN,
            b = SIZE - MARGIN
        )?;
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4\"/>",
            px(0.0),
            py(0.0),
            px(max_energy),
            py(max_energy)
        )?;
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"14\">optimizer energy</text>",
            SIZE / 2.0 - 60.0,
            SIZE - 20.0
        )?;
        writeln!(
            out,
            "<text x=\"16\" y=\"{}\" font-size=\"14\" transform=\"rotate(-90 16 {})\">simulated energy</text>",
            SIZE / 2.0,
            SIZE / 2.0
        )?;
        for (color, label, dy) in [("blue", "unary", 0.0), ("green", "smoothness", 18.0), ("red", "total", 36.0)] {
            writeln!(
                out,
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"4\" fill=\"{color}\"/><text x=\"{tx}\" y=\"{ty}\" font-size=\"12\">{label}</text>",
                x = SIZE - 130.0,
                y = MARGIN + dy,
                tx = SIZE - 120.0,
                ty = MARGIN + dy + 4.0,
            )?;
        }
        for p in pairs {
            for (x, y, color) in [
                (p.opt.unary_term, p.sim.unary_term, "blue"),
                (p.opt.pairwise_term, p.sim.pairwise_term, "green"),
                (p.opt.total, p.sim.total, "red"),
            ] {
                writeln!(
                    out,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.5\"/>",
                    px(x),
                    py(y),
                    color
                )?;
            }
        }
        writeln!(out, "</svg>")
    };
    render(&mut out).map_err(io_err(format!("writing {}", path.display())))
}
