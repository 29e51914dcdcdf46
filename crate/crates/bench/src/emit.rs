//! CSV and JSON output of averaged curves. Both carry the full batch
//! configuration so a run can be replayed exactly.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trade_core::{Algorithm, BenefitKind};

use crate::batch::{BatchConfig, BatchResult, CurveSeries};
use crate::error::{BenchError, Result};

/// Prefix of the first CSV line, followed by the configuration as JSON.
pub const CONFIG_PREFIX: &str = "# config: ";

pub const CSV_COLUMNS: [&str; 7] =
    ["algorithm", "benefit_kind", "offer_index", "mean", "normalized", "n_scenarios", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn file_name(self) -> &'static str {
        match self {
            Format::Csv => "curves.csv",
            Format::Json => "curves.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: Algorithm,
    pub benefit_kind: BenefitKind,
    pub offer_index: usize,
    pub mean: f64,
    pub normalized: f64,
    pub n_scenarios: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: BatchConfig,
    pub series: Vec<CurveSeries>,
}

pub fn csv_rows(config: &BatchConfig, series: &[CurveSeries]) -> Vec<CsvRow> {
    series
        .iter()
        .flat_map(|s| {
            s.points.iter().map(move |p| CsvRow {
                algorithm: s.algorithm,
                benefit_kind: s.kind,
                offer_index: p.offer_index,
                mean: p.mean,
                normalized: p.normalized,
                n_scenarios: config.n_scenarios,
                seed: config.scenario.seed,
            })
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

/// Writes `curves.csv` or `curves.json` into `dir`, creating it if needed.
pub fn emit_results(result: &BatchResult, dir: &Path, format: Format) -> Result<PathBuf> {
    emit_series(&result.config, &result.series, dir, format)
}

pub fn emit_series(config: &BatchConfig, series: &[CurveSeries], dir: &Path, format: Format) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format.file_name());
    match format {
        Format::Json => {
            let report = Report { config: config.clone(), series: series.to_vec() };
            let text = serde_json::to_string_pretty(&report)
                .map_err(|source| BenchError::Json { path: path.clone(), source })?;
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Format::Csv => {
            let mut file = fs::File::create(&path).map_err(io_err(&path))?;
            let header = serde_json::to_string(config).map_err(|source| BenchError::Json { path: path.clone(), source })?;
            writeln!(file, "{CONFIG_PREFIX}{header}").map_err(io_err(&path))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            let csv_err = |source| BenchError::Csv { path: path.clone(), source };
            w.write_record(CSV_COLUMNS).map_err(csv_err)?;
            for row in csv_rows(config, series) {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))?;
        }
    }
    Ok(path)
}

pub fn read_json(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<(BatchConfig, Vec<CsvRow>)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err(path))?;
    let json = first.trim_end().strip_prefix(CONFIG_PREFIX).ok_or_else(|| BenchError::Format {
        path: path.to_path_buf(),
        message: "missing config header line".into(),
    })?;
    let config: BatchConfig =
        serde_json::from_str(json).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })?;
    let mut r = csv::Reader::from_reader(reader);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|source| BenchError::Csv { path: path.to_path_buf(), source })?;
    Ok((config, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::CurvePoint;
    use crate::scenario::{Mode, ScenarioConfig};

    fn config() -> BatchConfig {
        BatchConfig::new(ScenarioConfig::new(3, 0.1, 10, Mode::Discrete), 2, 3, vec![Algorithm::Stcr])
    }

    fn series() -> Vec<CurveSeries> {
        let points = (1..=3)
            .map(|i| CurvePoint { offer_index: i, mean: 0.1 * i as f64 / 3.0, std_dev: 0.0, normalized: 1.0 / 3.0 })
            .collect();
        vec![CurveSeries { algorithm: Algorithm::Stcr, kind: BenefitKind::Societal, points }]
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_series(&config(), &series(), dir.path(), Format::Csv).unwrap();
        let (cfg, rows) = read_csv(&path).unwrap();
        assert_eq!(cfg, config());
        assert_eq!(rows, csv_rows(&config(), &series()));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_series(&config(), &series(), dir.path(), Format::Json).unwrap();
        let report = read_json(&path).unwrap();
        assert_eq!(report.config, config());
        assert_eq!(report.series, series());
    }

    #[test]
    fn empty_series_writes_only_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_series(&config(), &[], dir.path(), Format::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(CONFIG_PREFIX) && lines[0].contains("\"rho\":0.1"));
        assert_eq!(lines[1], CSV_COLUMNS.join(","));
        assert!(read_csv(&path).unwrap().1.is_empty());
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_series(&config(), &[], &blocker.join("sub"), Format::Csv).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
