//! JSON and CSV report formats.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlated::GridResult;
use crate::ensemble::{AicTrace, EnsembleOutput};
use crate::estimation::{Diagnostics, EstimatorResult, Layout, Method, NoiseKind};
use crate::forecast::{BiasVarianceReport, MetricsReport};
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub label: String,
    pub value: f64,
}

pub fn labeled(labels: &[String], v: &DVector<f64>) -> Vec<LabeledValue> {
    labels
        .iter()
        .zip(v.iter())
        .map(|(l, &value)| LabeledValue {
            label: l.clone(),
            value,
        })
        .collect()
}

/// Dense, row-major, labeled matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CovarianceReport {
    pub fn new(labels: &[String], m: &DMatrix<f64>) -> Self {
        CovarianceReport {
            labels: labels.to_vec(),
            rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.labels.len();
        if self.rows.len() != n || self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::parse("covariance report", "matrix is not square in its labels"));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.rows[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub ridge_used: bool,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub cv_scores: Vec<f64>,
    pub warnings: Vec<String>,
}

impl From<&Diagnostics> for DiagnosticsReport {
    fn from(d: &Diagnostics) -> Self {
        DiagnosticsReport {
            ridge_used: d.ridge_used,
            qp_iterations: d.qp_iterations,
            kkt_residual: d.kkt_residual,
            outer_iterations: d.outer_iterations,
            cv_scores: d.cv_scores.clone(),
            warnings: d.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub member_count: usize,
    pub beta_unprojected: Vec<LabeledValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training_errors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aic_trace: Option<AicTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_norms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Vec<f64>>,
}

impl EnsembleReport {
    pub fn new(labels: &[String], out: &EnsembleOutput) -> Self {
        EnsembleReport {
            member_count: out.member_estimates.len(),
            beta_unprojected: labeled(labels, &out.beta_unprojected),
            covariance: out.covariance.as_ref().map(|c| CovarianceReport::new(labels, c)),
            selection_index: out.selection_index,
            training_errors: out.training_errors.clone(),
            aic_trace: out.aic_trace.clone(),
            residual_norms: out.residual_norms.clone(),
            members: out
                .member_estimates
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub format_version: u32,
    pub method: Method,
    pub noise: NoiseKind,
    pub seed: u64,
    /// `||Y - X beta||_2` at the reported estimate.
    pub objective: f64,
    pub beta: Vec<LabeledValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_cfgls: Option<Vec<LabeledValue>>,
    pub diagnostics: DiagnosticsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleReport>,
}

impl EstimateReport {
    pub fn from_result(layout: &Layout, fit: &EstimatorResult, seed: u64) -> Self {
        EstimateReport {
            format_version: FORMAT_VERSION,
            method: fit.method,
            noise: fit.noise.kind,
            seed,
            objective: fit.objective,
            beta: labeled(&layout.labels, &fit.beta),
            reference_cfgls: None,
            diagnostics: (&fit.diagnostics).into(),
            ensemble: None,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.beta.iter().map(|b| b.label.clone()).collect()
    }

    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.beta.len(), self.beta.iter().map(|b| b.value))
    }

    pub fn value(&self, label: &str) -> Option<f64> {
        self.beta.iter().find(|b| b.label == label).map(|b| b.value)
    }

    pub fn covariance(&self) -> Option<&CovarianceReport> {
        self.ensemble.as_ref().and_then(|e| e.covariance.as_ref())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_to_string(path)?;
        let r: EstimateReport =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if r.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                path.display().to_string(),
                format!("unsupported format_version {}", r.format_version),
            ));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub format_version: u32,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub mase: Option<f64>,
    pub n_test: usize,
    pub n_failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_mean: Option<MetricsReport>,
}

impl MetricsFile {
    pub fn new(m: &MetricsReport, constant_mean: Option<MetricsReport>) -> Self {
        MetricsFile {
            format_version: FORMAT_VERSION,
            rmse: m.rmse,
            mae: m.mae,
            mase: m.mase,
            n_test: m.n_test,
            n_failed: m.n_failed,
            constant_mean,
        }
    }
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| Error::parse("csv output", e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse("csv output", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("csv output", e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per cell: scalings, equilibrium, RMSE and flags.
pub fn grid_csv(result: &GridResult, p: usize) -> Result<String> {
    let mut header: Vec<String> = result.pairs.iter().map(|(i, j)| format!("c_{i}_{j}")).collect();
    header.extend((0..p).map(|i| format!("x_{i}")));
    header.extend(["rmse", "converged", "flagged"].map(String::from));
    let mut rows = vec![header];
    for cell in &result.cells {
        let mut row: Vec<String> = cell.scalings.iter().map(|c| c.to_string()).collect();
        row.extend((0..p).map(|i| opt(cell.point.get(i).copied().filter(|v| v.is_finite()))));
        row.push(opt(cell.rmse));
        row.push(cell.converged.to_string());
        row.push(cell.flagged.to_string());
        rows.push(row);
    }
    csv_string(rows)
}

fn parse_theta_label(label: &str) -> Option<(usize, usize)> {
    let rest = label.strip_prefix("theta[")?;
    let (i, rest) = rest.split_once("][")?;
    let j = rest.strip_suffix(']')?;
    Some((i.parse().ok()?, j.parse().ok()?))
}

/// `player,coefficient,cfgls,bias_<method>...,variance,bootstrap_bias` over
/// the `theta` coefficients.
pub fn bias_variance_csv(labels: &[String], report: &BiasVarianceReport) -> Result<String> {
    let mut header: Vec<String> = ["player", "coefficient", "cfgls"].map(String::from).to_vec();
    header.extend(report.method_bias.iter().map(|(m, _)| format!("bias_{m}")));
    header.extend(["variance", "bootstrap_bias"].map(String::from));
    let mut rows = vec![header];
    for (k, label) in labels.iter().enumerate() {
        let Some((i, j)) = parse_theta_label(label) else {
            continue;
        };
        let mut row = vec![i.to_string(), j.to_string(), report.reference[k].to_string()];
        row.extend(report.method_bias.iter().map(|(_, b)| b[k].to_string()));
        row.push(report.variance[k].to_string());
        row.push(report.bootstrap_bias[k].to_string());
        rows.push(row);
    }
    csv_string(rows)
}
