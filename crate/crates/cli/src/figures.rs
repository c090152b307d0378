//! Figure/panel table, kept as data in `data/figures.toml`.

use serde::Deserialize;

use mvlmn_core::checks::nu_family;
use mvlmn_core::{ExperimentConfig, ProductKind};

use crate::CliError;

const TABLE: &str = include_str!("../data/figures.toml");

#[derive(Clone, Debug, Deserialize)]
struct Table {
    figure: Vec<FigureEntry>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct FigureEntry {
    pub number: u8,
    pub product: String,
    pub c: f64,
    pub panels: Vec<PanelEntry>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct PanelEntry {
    pub label: String,
    pub p: usize,
    pub n: usize,
    pub nu: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPanel {
    pub p: usize,
    pub n: usize,
    pub nu: String,
    pub product: ProductKind,
    pub c: f64,
}

pub fn table() -> Result<Vec<FigureEntry>, CliError> {
    toml::from_str::<Table>(TABLE)
        .map(|t| t.figure)
        .map_err(|e| CliError::Usage(format!("figure table is malformed: {e}")))
}

pub fn parse_product(name: &str) -> Result<ProductKind, CliError> {
    match name {
        "cov" => Ok(ProductKind::CovTimesMean),
        "precision" => Ok(ProductKind::PrecisionTimesMean),
        other => Err(CliError::Usage(format!("unknown product '{other}'"))),
    }
}

pub fn resolve(figure: u8, panel: &str) -> Result<ResolvedPanel, CliError> {
    let entry = table()?
        .into_iter()
        .find(|f| f.number == figure)
        .ok_or_else(|| CliError::Usage(format!("no figure {figure}")))?;
    let p = entry
        .panels
        .iter()
        .find(|p| p.label == panel)
        .ok_or_else(|| CliError::Usage(format!("figure {figure} has no panel '{panel}'")))?;
    Ok(ResolvedPanel {
        p: p.p,
        n: p.n,
        nu: p.nu.clone(),
        product: parse_product(&entry.product)?,
        c: entry.c,
    })
}

/// Experiment configuration for a panel with q = 10.
pub fn figure_config(
    figure: u8,
    panel: &str,
    n_reps: usize,
    master_seed: u64,
    model_seed: u64,
) -> Result<ExperimentConfig, CliError> {
    let r = resolve(figure, panel)?;
    let q = 10;
    let mut cfg = ExperimentConfig::new(r.p, r.n, q, n_reps, r.product, nu_family(&r.nu, q)?, master_seed, model_seed);
    cfg.c = r.c;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_panel_resolves_with_exact_ratio() {
        let t = table().unwrap();
        assert_eq!(t.len(), 8);
        for f in 1..=8u8 {
            for panel in ["a", "b", "c", "d"] {
                let r = resolve(f, panel).unwrap();
                assert_eq!(r.p as f64 / r.n as f64, r.c);
                assert_eq!(r.nu, if panel < "c" { "tn" } else { "gal" });
                let expected = if f <= 4 { ProductKind::CovTimesMean } else { ProductKind::PrecisionTimesMean };
                assert_eq!(r.product, expected);
            }
        }
    }

    #[test]
    fn caption_examples() {
        let r = resolve(2, "a").unwrap();
        assert_eq!((r.p, r.n, r.nu.as_str(), r.product, r.c), (250, 500, "tn", ProductKind::CovTimesMean, 0.5));
        let r = resolve(5, "c").unwrap();
        assert_eq!((r.p, r.n, r.nu.as_str(), r.product, r.c), (50, 500, "gal", ProductKind::PrecisionTimesMean, 0.1));
        let r = resolve(4, "b").unwrap();
        assert_eq!((r.p, r.n, r.nu.as_str(), r.product, r.c), (950, 1000, "tn", ProductKind::CovTimesMean, 0.95));
        let r = resolve(8, "a").unwrap();
        assert_eq!((r.p, r.n), (475, 500));
        assert!(resolve(9, "a").is_err());
        assert!(resolve(1, "e").is_err());
    }
}
