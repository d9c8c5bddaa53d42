//! Declarative benchmark: segment, degrade, restore, tune, average.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::restore::DegradationModel;
use crate::signal::Signal;

use super::degrade::{degrade, derive_seed, gaussian_kernel, NoiseReference};
use super::io::{load_signal, LoadOptions};
use super::methods::{default_lambda_grid, normalize_grid, tune_lambda, Instance, Method, Restorer, SolverSettings};
use super::train::train_structure_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `h = delta`, levels are SNR values.
    Denoise,
    /// Gaussian blur, levels are BSNR values.
    Deblur,
}

impl Mode {
    pub fn reference(self) -> NoiseReference {
        match self {
            Mode::Denoise => NoiseReference::SignalPower,
            Mode::Deblur => NoiseReference::BlurredVariance,
        }
    }
}

fn default_segment_length() -> usize {
    512
}

fn default_num_segments() -> usize {
    4
}

/// A benchmark grid. Relative paths are resolved against the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub test_path: PathBuf,
    #[serde(default)]
    pub train_path: Option<PathBuf>,
    #[serde(default = "default_segment_length")]
    pub segment_length: usize,
    #[serde(default = "default_num_segments")]
    pub num_segments: usize,
    /// Samples of the training file used for GMO-TV. Defaults to
    /// `segment_length * num_segments`, see the README on lambda scaling.
    #[serde(default)]
    pub train_length: Option<usize>,
    pub mode: Mode,
    /// SNR (denoise) or BSNR (deblur) targets in dB.
    pub levels_db: Vec<f64>,
    /// Blur variances; ignored in denoise mode.
    #[serde(default)]
    pub blur_variances: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    /// Read the second column of each row instead of the first.
    #[serde(default)]
    pub index_column: bool,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentSpec {
    /// Parses TOML or JSON (chosen by extension) and resolves relative paths.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut spec: ExperimentSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            Some("toml") => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            other => {
                return Err(parse_err(format!(
                    "unsupported spec extension {other:?}, expected .toml or .json"
                )))
            }
        };
        if let Some(dir) = path.parent() {
            spec.test_path = dir.join(&spec.test_path);
            spec.train_path = spec.train_path.map(|p| dir.join(p));
        }
        Ok(spec)
    }

    /// The blur variances actually swept: `[0]` in denoise mode.
    pub fn variances(&self) -> Vec<f64> {
        match self.mode {
            Mode::Denoise => vec![0.0],
            Mode::Deblur => self.blur_variances.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidValue(m.to_string()));
        if self.segment_length == 0 || self.num_segments == 0 {
            return bad("segment_length and num_segments must be positive");
        }
        if self.levels_db.is_empty() || self.methods.is_empty() {
            return bad("levels_db and methods must be non-empty");
        }
        if self.levels_db.iter().any(|v| !v.is_finite()) {
            return bad("levels_db entries must be finite");
        }
        if self.mode == Mode::Deblur {
            if self.blur_variances.is_empty() {
                return bad("deblur mode needs a non-empty blur_variances grid");
            }
            if self.blur_variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad("blur variances must be positive");
            }
        }
        normalize_grid(&self.lambda_grid)?;
        if self.methods.iter().any(|m| m.needs_training()) && self.train_path.is_none() {
            return bad("GMO-TV methods need a train_path");
        }
        if self.train_length == Some(0) {
            return bad("train_length must be positive");
        }
        Ok(())
    }
}

/// One `(level, variance, method)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub level_db: f64,
    pub blur_variance: f64,
    pub method: Method,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done {
        lambda: f64,
        /// Mean ISNR over `segments` segments.
        isnr_db: f64,
        segments: usize,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, level_db: f64, blur_variance: f64, method: Method) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.level_db == level_db && r.blur_variance == blur_variance && r.method == method)
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !m.contains(&r.method) {
                m.push(r.method);
            }
        }
        m
    }
}

/// First-segment signals of a cell at its tuned lambda, for plotting.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub level_db: f64,
    pub blur_variance: f64,
    pub method: Method,
    pub clean: Signal,
    pub degraded: Signal,
    pub restored: Signal,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub overlays: Vec<Overlay>,
}

/// Rounds to the nine significant digits written to `results.csv`, so the
/// in-memory table equals what a reader of the file gets back.
pub fn round_sig9(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn cell_key(spec: &ExperimentSpec, level: f64, variance: f64, segment: usize) -> String {
    format!(
        "mode={:?};level={level:e};variance={variance:e};segment={segment}",
        spec.mode
    )
}

/// Degraded segments of one grid cell. The noise stream depends only on the
/// seed and the cell coordinates, never on evaluation order.
pub fn cell_instances(
    spec: &ExperimentSpec,
    test: &Signal,
    level: f64,
    variance: f64,
) -> Result<Vec<Instance>> {
    let model = match spec.mode {
        Mode::Denoise => DegradationModel::denoise(),
        Mode::Deblur => DegradationModel::new(gaussian_kernel(variance)?),
    };
    (0..spec.num_segments)
        .map(|i| {
            let seg = &test.as_slice()[i * spec.segment_length..(i + 1) * spec.segment_length];
            let clean = Signal::new(seg.to_vec())?;
            let seed = derive_seed(spec.seed, &cell_key(spec, level, variance, i));
            let degraded = degrade(&clean, &model, level, spec.mode.reference(), seed)?;
            Ok(Instance {
                clean,
                degraded,
                model: model.clone(),
            })
        })
        .collect()
}

/// Runs the whole grid on an already loaded test (and optional training) signal.
pub fn run_experiment_on(
    spec: &ExperimentSpec,
    test: &Signal,
    train: Option<&Signal>,
) -> Result<ExperimentOutput> {
    spec.validate()?;
    let needed = spec.segment_length * spec.num_segments;
    if test.len() < needed {
        return Err(Error::InvalidValue(format!(
            "test signal has {} samples, {} segments of {} need {needed}",
            test.len(),
            spec.num_segments,
            spec.segment_length
        )));
    }
    let grid = normalize_grid(&spec.lambda_grid)?;

    let mut restorers = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let structure = if method.needs_training() {
            let train = train.ok_or_else(|| {
                Error::InvalidValue(format!("{method} needs a training signal"))
            })?;
            let take = spec.train_length.unwrap_or(needed).min(train.len());
            let head = Signal::new(train.as_slice()[..take].to_vec())?;
            Some(train_structure_from(&[head], method.order()))
        } else {
            None
        };
        restorers.push(match structure {
            None => Restorer::new(method, None, spec.solver),
            Some(Ok(s)) => Restorer::new(method, Some(s), spec.solver),
            Some(Err(e)) => Err(e),
        });
    }

    let mut table = ResultTable::default();
    let mut overlays = Vec::new();
    for &level in &spec.levels_db {
        for variance in spec.variances() {
            let instances = cell_instances(spec, test, level, variance)?;
            for (method, restorer) in spec.methods.iter().zip(&restorers) {
                let result = restorer
                    .as_ref()
                    .map_err(|e| Error::InvalidValue(e.to_string()))
                    .and_then(|r| tune_lambda(&instances, r, &grid));
                let outcome = match result {
                    Ok(t) => {
                        info!(
                            "{method} level {level} dB variance {variance}: lambda {:e}, ISNR {:.3} dB",
                            t.lambda, t.isnr_db
                        );
                        overlays.push(Overlay {
                            level_db: level,
                            blur_variance: variance,
                            method: *method,
                            clean: instances[0].clean.clone(),
                            degraded: instances[0].degraded.clone(),
                            restored: t.restored[0].clone(),
                        });
                        CellOutcome::Done {
                            lambda: round_sig9(t.lambda),
                            isnr_db: round_sig9(t.isnr_db),
                            segments: instances.len(),
                        }
                    }
                    Err(e) => {
                        warn!("{method} level {level} dB variance {variance}: {e}");
                        CellOutcome::Failed {
                            reason: e.to_string(),
                        }
                    }
                };
                table.rows.push(ResultRow {
                    level_db: level,
                    blur_variance: variance,
                    method: *method,
                    outcome,
                });
            }
        }
    }
    Ok(ExperimentOutput { table, overlays })
}

/// Loads the signals named in `spec` and runs the grid.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let opts = LoadOptions {
        first_column_is_index: spec.index_column,
    };
    let test = load_signal(&spec.test_path, opts)?;
    let train = match &spec.train_path {
        Some(p) if spec.methods.iter().any(|m| m.needs_training()) => Some(load_signal(p, opts)?),
        _ => None,
    };
    run_experiment_on(spec, &test, train.as_ref())
}
