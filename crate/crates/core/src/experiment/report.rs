use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::{Aggregate, Arm, CellResult, FitRecord, SweepConfig, SweepReport};
use super::ExperimentError;
use crate::io::{save_npy, LabelMap};

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub arm: Arm,
    pub budget: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub wall_ms: f64,
}

impl From<&CellResult> for CsvRow {
    fn from(c: &CellResult) -> Self {
        Self {
            arm: c.arm,
            budget: c.budget,
            seed: c.seed,
            accuracy: c.accuracy,
            wall_ms: c.wall_ms,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a SweepConfig,
    num_classes: usize,
    aggregates: Vec<Aggregate>,
    cells: &'a [CellResult],
    fits: &'a [FitRecord],
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone, Default)]
pub struct EmittedFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub series: Vec<PathBuf>,
    pub maps: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.json`, `series/<arm>.txt` (budget, median
/// accuracy), `series/<arm>_band.txt` (budget, min, max) and `maps/*.npy`.
pub fn emit_report(report: &SweepReport, dir: impl AsRef<Path>) -> Result<EmittedFiles, ExperimentError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("series"))?;
    fs::create_dir_all(dir.join("maps"))?;
    let mut files = EmittedFiles {
        csv: dir.join("results.csv"),
        summary: dir.join("summary.json"),
        ..EmittedFiles::default()
    };

    let mut csv = csv::Writer::from_path(&files.csv)?;
    for cell in &report.cells {
        csv.serialize(CsvRow::from(cell))?;
    }
    csv.flush()?;

    let aggregates = report.aggregates();
    let summary = Summary {
        config: &report.config,
        num_classes: report.num_classes,
        aggregates: aggregates.clone(),
        cells: &report.cells,
        fits: &report.fits,
    };
    fs::write(&files.summary, serde_json::to_string_pretty(&summary)?)?;

    for &arm in &report.config.arms {
        let rows: Vec<&Aggregate> = aggregates.iter().filter(|a| a.arm == arm && a.median.is_finite()).collect();
        let line = |a: &&Aggregate| format!("{} {}\n", a.budget, a.median);
        let band = |a: &&Aggregate| format!("{} {} {}\n", a.budget, a.min, a.max);
        let path = dir.join("series").join(format!("{arm}.txt"));
        fs::write(&path, rows.iter().map(line).collect::<String>())?;
        files.series.push(path);
        let path = dir.join("series").join(format!("{arm}_band.txt"));
        fs::write(&path, rows.iter().map(band).collect::<String>())?;
        files.series.push(path);
    }

    for cell in &report.cells {
        if let Some(labels) = &cell.labels {
            let map = LabelMap::with_num_classes(labels.clone(), report.num_classes);
            let path = dir.join("maps").join(format!("{}_b{}_s{}.npy", cell.arm, cell.budget, cell.seed));
            save_npy(&map.to_npy(report.spatial), &path)?;
            files.maps.push(path);
        }
    }
    Ok(files)
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(ExperimentError::from)).collect()
}
