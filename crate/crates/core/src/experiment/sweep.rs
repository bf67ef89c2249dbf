use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::baseline::random_baseline;
use super::metrics::{confusion_matrix, overall_accuracy, Confusion};
use super::ExperimentError;
use crate::io::{LabelMap, PointCloud};
use crate::land::{GroundTruthOracle, LandConfig, LandModel};
use crate::scalar::Real;
use crate::vae::{embed_dataset, train, TrainConfig, VaeArchitecture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    VaeLand,
    Land,
    VaeRandom,
    Random,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::VaeLand, Arm::Land, Arm::VaeRandom, Arm::Random];

    pub fn name(self) -> &'static str {
        match self {
            Arm::VaeLand => "vae-land",
            Arm::Land => "land",
            Arm::VaeRandom => "vae-random",
            Arm::Random => "random",
        }
    }

    pub fn uses_vae(self) -> bool {
        matches!(self, Arm::VaeLand | Arm::VaeRandom)
    }

    pub fn is_random(self) -> bool {
        matches!(self, Arm::VaeRandom | Arm::Random)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arm {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown arm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeSettings {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// `seed` is replaced by each sweep seed.
    pub train: TrainConfig,
}

impl Default for VaeSettings {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            latent_dim: 40,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub random_trials: usize,
    pub land: LandConfig,
    pub vae: VaeSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budgets: vec![10, 50, 100, 200, 400, 1000, 2000],
            seeds: vec![0],
            arms: Arm::ALL.to_vec(),
            random_trials: 10,
            land: LandConfig::default(),
            vae: VaeSettings::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self, n: usize) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("budgets must be non-empty and strictly ascending: {:?}", self.budgets));
        }
        if let Some(&b) = self.budgets.iter().find(|&&b| b == 0 || b > n) {
            return bad(format!("budget {b} must be in 1..={n}"));
        }
        if self.random_trials == 0 && self.arms.iter().any(|a| a.is_random()) {
            return bad("random arms need random_trials >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub arm: Arm,
    pub budget: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub wall_ms: f64,
    pub confusion: Option<Confusion>,
    /// Per-trial accuracies of the random arms; `accuracy` is their mean.
    pub trials: Vec<f64>,
    pub error: Option<String>,
    /// Propagated label map (first trial for random arms).
    #[serde(skip)]
    pub labels: Option<Vec<u32>>,
}

/// Time spent building one representation and its LAND model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub representation: String,
    pub seed: Option<u64>,
    pub vae_ms: f64,
    pub land_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arm: Arm,
    pub budget: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub num_classes: usize,
    pub spatial: Option<(usize, usize)>,
    pub cells: Vec<CellResult>,
    pub fits: Vec<FitRecord>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

impl SweepReport {
    pub fn cell(&self, arm: Arm, budget: usize, seed: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.arm == arm && c.budget == budget && c.seed == seed)
    }

    /// Successful accuracies of one arm at one budget, in seed order.
    pub fn accuracies(&self, arm: Arm, budget: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.arm == arm && c.budget == budget)
            .filter_map(|c| c.accuracy)
            .collect()
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for &arm in &self.config.arms {
            for &budget in &self.config.budgets {
                let acc = self.accuracies(arm, budget);
                let count = self.cells.iter().filter(|c| c.arm == arm && c.budget == budget).count();
                let Some(med) = median(&acc) else {
                    out.push(Aggregate { arm, budget, median: f64::NAN, mean: f64::NAN, min: f64::NAN, max: f64::NAN, count, failures: count });
                    continue;
                };
                out.push(Aggregate {
                    arm,
                    budget,
                    median: med,
                    mean: acc.iter().sum::<f64>() / acc.len() as f64,
                    min: acc.iter().copied().fold(f64::INFINITY, f64::min),
                    max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    count,
                    failures: count - acc.len(),
                });
            }
        }
        out
    }
}

/// Runs every (arm, budget, seed) cell.
///
/// Each representation is fitted once and reused across budgets; the raw
/// cloud is shared by all seeds. Failures are recorded in the affected cells.
pub fn budget_sweep<T: Real>(
    config: &SweepConfig,
    cloud: &PointCloud<T>,
    truth: &LabelMap,
    spatial: Option<(usize, usize)>,
) -> Result<SweepReport, ExperimentError> {
    config.validate(cloud.n())?;
    if truth.len() != cloud.n() {
        return Err(ExperimentError::Length {
            predicted: cloud.n(),
            truth: truth.len(),
        });
    }
    let mut report = SweepReport {
        config: config.clone(),
        num_classes: truth.num_classes,
        spatial,
        cells: Vec::new(),
        fits: Vec::new(),
    };
    let wants = |arm: Arm| config.arms.contains(&arm);

    if wants(Arm::Land) || wants(Arm::Random) {
        let start = Instant::now();
        let model = LandModel::fit(cloud, &config.land).map_err(|e| e.to_string());
        report.fits.push(FitRecord {
            representation: "raw".into(),
            seed: None,
            vae_ms: 0.0,
            land_ms: ms_since(start),
            error: model.as_ref().err().cloned(),
        });
        for &seed in &config.seeds {
            run_cells(&mut report, config, &model, truth, seed, Arm::Land, Arm::Random);
        }
    }

    if wants(Arm::VaeLand) || wants(Arm::VaeRandom) {
        for &seed in &config.seeds {
            let vae_start = Instant::now();
            let arch = VaeArchitecture::symmetric(cloud.dim(), config.vae.hidden.clone(), config.vae.latent_dim);
            let train_cfg = TrainConfig { seed, ..config.vae.train };
            let latent = train(cloud, &arch, &train_cfg).and_then(|(params, _)| embed_dataset(&params, cloud));
            let vae_ms = ms_since(vae_start);
            let land_start = Instant::now();
            let model = latent
                .map_err(|e| format!("vae: {e}"))
                .and_then(|latent| LandModel::fit(&latent, &config.land).map_err(|e| e.to_string()));
            report.fits.push(FitRecord {
                representation: "vae".into(),
                seed: Some(seed),
                vae_ms,
                land_ms: ms_since(land_start),
                error: model.as_ref().err().cloned(),
            });
            log::info!("vae seed {seed}: trained in {vae_ms:.0} ms");
            run_cells(&mut report, config, &model, truth, seed, Arm::VaeLand, Arm::VaeRandom);
        }
    }
    Ok(report)
}

fn run_cells<T: Real>(
    report: &mut SweepReport,
    config: &SweepConfig,
    model: &Result<LandModel<T>, String>,
    truth: &LabelMap,
    seed: u64,
    land_arm: Arm,
    random_arm: Arm,
) {
    for &budget in &config.budgets {
        for arm in [land_arm, random_arm] {
            if !config.arms.contains(&arm) {
                continue;
            }
            let start = Instant::now();
            let outcome = match model {
                Err(e) => Err(e.clone()),
                Ok(model) if arm.is_random() => random_cell(model, truth, budget, seed, config.random_trials),
                Ok(model) => land_cell(model, truth, budget),
            };
            let wall_ms = ms_since(start);
            let cell = match outcome {
                Ok((accuracy, confusion, trials, labels)) => CellResult {
                    arm,
                    budget,
                    seed,
                    accuracy: Some(accuracy),
                    wall_ms,
                    confusion,
                    trials,
                    error: None,
                    labels: Some(labels),
                },
                Err(error) => {
                    log::warn!("{arm} B={budget} seed={seed} failed: {error}");
                    CellResult {
                        arm,
                        budget,
                        seed,
                        accuracy: None,
                        wall_ms,
                        confusion: None,
                        trials: Vec::new(),
                        error: Some(error),
                        labels: None,
                    }
                }
            };
            report.cells.push(cell);
        }
    }
}

type CellOutcome = Result<(f64, Option<Confusion>, Vec<f64>, Vec<u32>), String>;

fn land_cell<T: Real>(model: &LandModel<T>, truth: &LabelMap, budget: usize) -> CellOutcome {
    let run = || -> Result<_, ExperimentError> {
        let state = model.query(&mut GroundTruthOracle::new(truth), budget)?;
        let labels = model.propagate(&state)?;
        let accuracy = overall_accuracy(&labels.y, truth)?;
        let confusion = confusion_matrix(&labels.y, truth).ok();
        Ok((accuracy, confusion, Vec::new(), labels.y))
    };
    run().map_err(|e| e.to_string())
}

fn random_cell<T: Real>(model: &LandModel<T>, truth: &LabelMap, budget: usize, seed: u64, trials: usize) -> CellOutcome {
    let stats = random_baseline(model, truth, budget, seed, trials).map_err(|e| e.to_string())?;
    let confusion = confusion_matrix(&stats.first_labels, truth).ok();
    Ok((stats.mean, confusion, stats.accuracies, stats.first_labels))
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_names_round_trip() {
        for arm in Arm::ALL {
            assert_eq!(arm.name().parse::<Arm>().unwrap(), arm);
            assert_eq!(serde_json::to_string(&arm).unwrap(), format!("\"{}\"", arm.name()));
        }
        assert!("vae".parse::<Arm>().is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = SweepConfig::default();
        assert!(cfg.validate(7138).is_ok());
        assert!(cfg.validate(1500).is_err());
        let unsorted = SweepConfig { budgets: vec![10, 5], ..SweepConfig::default() };
        assert!(unsorted.validate(100).is_err());
        let none = SweepConfig { arms: vec![], ..SweepConfig::default() };
        assert!(none.validate(7138).is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: SweepConfig = serde_json::from_str(r#"{"budgets": [10], "arms": ["land"]}"#).unwrap();
        assert_eq!(cfg.random_trials, 10);
        assert_eq!(cfg.land.graph.k, 100);
        assert_eq!(cfg.vae.latent_dim, 40);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
