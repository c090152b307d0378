//! Artifact writers. Numbers are written with 17 significant digits and
//! LF line endings so reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mvlmn_core::normal;
use mvlmn_core::{ExperimentConfig, GofReport};

use crate::CliError;

pub const SAMPLES_FILE: &str = "samples.csv";
pub const KDE_FILE: &str = "kde.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn samples_csv(samples: &[f64]) -> String {
    let mut s = String::with_capacity(24 * (samples.len() + 1));
    s.push_str("standardized\n");
    for &x in samples {
        s.push_str(&fmt_f64(x));
        s.push('\n');
    }
    s
}

pub fn kde_csv(kde: &[(f64, f64)], normal_column: bool) -> String {
    let mut s = String::from(if normal_column { "x,density,normal\n" } else { "x,density\n" });
    for &(x, d) in kde {
        let _ = write!(s, "{},{}", fmt_f64(x), fmt_f64(d));
        if normal_column {
            let _ = write!(s, ",{}", fmt_f64(normal::pdf(x)));
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ks: f64,
    pub bandwidth: f64,
    pub mean: f64,
    pub variance: f64,
    pub variance_definition: String,
    pub skewness: f64,
    pub skewness_definition: String,
    pub config: ExperimentConfig,
    pub duration_seconds: f64,
}

impl Report {
    pub fn new(gof: &GofReport, config: &ExperimentConfig, duration_seconds: f64) -> Self {
        Self {
            ks: gof.ks_statistic,
            bandwidth: gof.bandwidth,
            mean: gof.mean,
            variance: gof.variance,
            variance_definition: "sum (z - mean)^2 / (N - 1)".into(),
            skewness: gof.skewness,
            skewness_definition: "m3 / m2^(3/2), central moments with divisor N, no bias correction".into(),
            config: config.clone(),
            duration_seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRef {
    pub figure: u8,
    pub panel: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub kde_normal_column: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureRef>,
    pub artifacts: Vec<String>,
    pub code_version: String,
    pub duration_seconds: f64,
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn out_path(dir: &Path, file: &str) -> PathBuf {
    dir.join(file)
}
