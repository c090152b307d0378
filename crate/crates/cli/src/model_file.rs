//! TOML model files and CSV data matrices for the `density` command.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use mvlmn_core::distributions::NuSpec;
use mvlmn_core::linalg::matrix_from_rows;
use mvlmn_core::{ModelSpec, NuDistribution};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mu: Vec<f64>,
    /// Dense Σ, one row per entry.
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    /// Diagonal of Σ; exclusive with `sigma`.
    #[serde(default)]
    pub sigma_diag: Option<Vec<f64>>,
    /// p×q, one row per entry.
    pub b: Vec<Vec<f64>>,
    pub nu: NuSpec,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("model file: {e}")))
    }

    pub fn into_model(self) -> Result<ModelSpec, CliError> {
        let sigma = match (self.sigma, self.sigma_diag) {
            (Some(rows), None) => matrix_from_rows(&rows)?,
            (None, Some(d)) => DMatrix::from_diagonal(&DVector::from_vec(d)),
            _ => return Err(CliError::Usage("model file needs exactly one of `sigma` and `sigma_diag`".into())),
        };
        let nu = NuDistribution::try_from(self.nu)?;
        let b = if self.b.is_empty() {
            DMatrix::zeros(0, nu.dim())
        } else {
            matrix_from_rows(&self.b)?
        };
        Ok(ModelSpec::new(DVector::from_vec(self.mu), sigma, b, nu)?)
    }
}

pub fn load_model(path: &Path) -> Result<ModelSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ModelFile::parse(&text)?.into_model()
}

/// Reads a headerless numeric CSV into a matrix, one CSV row per matrix row.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix_csv(file, &path.display().to_string())
}

pub fn parse_matrix_csv<R: std::io::Read>(reader: R, name: &str) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("{name}: line {}, column {}: '{field}' is not a number", i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{name}: no data")));
    }
    Ok(matrix_from_rows(&rows)?)
}
