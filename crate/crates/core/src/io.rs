//! On-disk formats: view CSVs (header row, one observation per row), JSON
//! model documents, selection reports, and long-format experiment results.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::BlockStructure;
use crate::mixtures::{FitTrace, GaussianDiagComponent, ViewModel};
use crate::model::{MvmmModel, ProbTable};
use crate::select::SelectionReport;
use crate::sim::ResultRow;

/// Read one view: header row, numeric cells, no missing values.
pub fn read_view_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let width = reader.headers()?.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has {} cells, header has {width}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let trimmed = cell.trim();
            if trimmed.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "{}: missing value at row {}, column {}",
                    path.display(),
                    i + 1,
                    j + 1
                )));
            }
            let value: f64 = trimmed.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}: non-numeric cell {trimmed:?} at row {}, column {}",
                    path.display(),
                    i + 1,
                    j + 1
                ))
            })?;
            rows.push(value);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, width), rows)
        .map_err(|e| Error::Shape(format!("{}: {e}", path.display())))
}

pub fn write_view_csv(path: &Path, data: &Array2<f64>, prefix: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let headers: Vec<String> = (0..data.ncols()).map(|j| format!("{prefix}{j}")).collect();
    writer.write_record(&headers)?;
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols()).map(|j| data[[i, j]].to_string()).collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a plain numeric matrix (header row) for the spectrum command.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    read_view_csv(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewParams {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyMeta {
    pub lambda: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BdMeta {
    /// Block diagonal part of `pi` (`pi = epsilon + d`), flat row-major.
    pub d: Vec<f64>,
    pub epsilon: f64,
    pub alpha_history: Vec<f64>,
    pub eigsum: Vec<f64>,
    pub blocks: BlockStructure,
}

/// Serialized model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: String,
    pub k: Vec<usize>,
    pub seed: u64,
    pub views: Vec<ViewParams>,
    pub pi_shape: Vec<usize>,
    /// Flat row-major table values.
    pub pi: Vec<f64>,
    /// Mixing weights of the concatenated-data baseline, when applicable.
    pub mixing: Option<Vec<f64>>,
    pub trace: FitTrace,
    /// The configuration the fit ran with.
    pub config: serde_json::Value,
    pub penalty: Option<PenaltyMeta>,
    pub bd: Option<BdMeta>,
}

impl ModelFile {
    pub fn from_model(
        method: &str,
        model: &MvmmModel,
        seed: u64,
        trace: FitTrace,
        config: serde_json::Value,
    ) -> Self {
        ModelFile {
            method: method.into(),
            k: model.k(),
            seed,
            views: model
                .views
                .iter()
                .map(|v| ViewParams {
                    means: v.components.iter().map(|c| c.mean.to_vec()).collect(),
                    variances: v.components.iter().map(|c| c.variance.to_vec()).collect(),
                })
                .collect(),
            pi_shape: model.pi.shape().to_vec(),
            pi: model.pi.flat(),
            mixing: None,
            trace,
            config,
            penalty: None,
            bd: None,
        }
    }

    pub fn to_model(&self) -> Result<MvmmModel> {
        let views = self
            .views
            .iter()
            .map(|v| {
                let dim = v.means.first().map(|m| m.len()).unwrap_or(0);
                ViewModel {
                    components: v
                        .means
                        .iter()
                        .zip(&v.variances)
                        .map(|(m, s)| GaussianDiagComponent {
                            mean: Array1::from_vec(m.clone()),
                            variance: Array1::from_vec(s.clone()),
                        })
                        .collect(),
                    dim,
                }
            })
            .collect();
        let values =
            ArrayD::from_shape_vec(IxDyn(&self.pi_shape), self.pi.clone()).map_err(|e| {
                Error::Shape(format!("pi shape {:?}: {e}", self.pi_shape))
            })?;
        MvmmModel::new(views, ProbTable::new(values)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Selection report as CSV, one row per candidate.
pub fn write_selection_csv(path: &Path, report: &SelectionReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "hyperparam",
        "bic",
        "log_lik",
        "dof",
        "support_size",
        "num_blocks",
        "chosen",
    ])?;
    for (i, cand) in report.candidates.iter().enumerate() {
        writer.write_record(&[
            cand.hyperparam.to_string(),
            cand.bic.to_string(),
            cand.log_lik.to_string(),
            cand.dof.to_string(),
            cand.support_size.to_string(),
            cand.num_blocks.to_string(),
            (i == report.chosen).to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Long-format experiment rows: rep, method, n, hyperparam, metric, value.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["rep", "method", "n", "hyperparam", "metric", "value"])?;
    for row in rows {
        writer.write_record(&[
            row.rep.to_string(),
            row.method.clone(),
            row.n.to_string(),
            row.hyperparam.to_string(),
            row.metric.clone(),
            row.value.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
