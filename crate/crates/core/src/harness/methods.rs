//! Restoration methods compared in the benchmark tables and lambda tuning.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{igmotv, JointConfig};
use crate::prior::{StructureMatrix, DEFAULT_EPS_SMOOTH};
use crate::restore::{restore, DegradationModel, RestoreConfig};
use crate::signal::{DerivativeBank, Signal};

use super::metrics::isnr;

const MAX_ORDER: usize = 4;

/// A column of the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Single-order TV of order `p` (`S = [1]`).
    Tv(usize),
    /// Multi-order TV of orders `1..K` with a trained structure matrix.
    GmoTv(usize),
    /// Multi-order TV of orders `1..K`, structure estimated jointly.
    IgmoTv(usize),
}

impl Method {
    pub fn order(self) -> usize {
        match self {
            Method::Tv(k) | Method::GmoTv(k) | Method::IgmoTv(k) => k,
        }
    }

    pub fn needs_training(self) -> bool {
        matches!(self, Method::GmoTv(_))
    }

    pub fn bank(self) -> Result<DerivativeBank> {
        match self {
            Method::Tv(p) => DerivativeBank::single(p),
            Method::GmoTv(k) | Method::IgmoTv(k) => DerivativeBank::up_to(k),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tv(p) => write!(f, "TV{p}"),
            Method::GmoTv(k) => write!(f, "GMO-TV{k}"),
            Method::IgmoTv(k) => write!(f, "IGMO-TV{k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (ctor, digits): (fn(usize) -> Method, &str) =
            if let Some(rest) = upper.strip_prefix("IGMO-TV") {
                (Method::IgmoTv, rest)
            } else if let Some(rest) = upper.strip_prefix("GMO-TV") {
                (Method::GmoTv, rest)
            } else if let Some(rest) = upper.strip_prefix("TV") {
                (Method::Tv, rest)
            } else {
                return Err(Error::InvalidValue(format!("unknown method {s:?}")));
            };
        let order: usize = digits
            .parse()
            .map_err(|_| Error::InvalidValue(format!("method {s:?} has no valid order")))?;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidValue(format!(
                "method {s:?}: order must be 1..={MAX_ORDER}"
            )));
        }
        Ok(ctor(order))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Solver knobs shared by every method in a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub eps_smooth: f64,
    /// Outer gradient tolerance (`eps_M`, and `eps_A` for the joint method).
    pub tolerance: f64,
    pub inner_rtol: f64,
    pub max_outer: usize,
    pub max_alternations: usize,
    pub lambda_f: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_smooth: DEFAULT_EPS_SMOOTH,
            tolerance: 1e-6,
            inner_rtol: 0.1,
            max_outer: 200,
            max_alternations: 20,
            lambda_f: 1e-6,
        }
    }
}

/// A method bound to everything it needs except `lambda`.
#[derive(Debug, Clone)]
pub struct Restorer {
    method: Method,
    bank: DerivativeBank,
    structure: Option<StructureMatrix>,
    settings: SolverSettings,
}

impl Restorer {
    /// `structure` is required for trained methods and ignored otherwise.
    pub fn new(
        method: Method,
        structure: Option<StructureMatrix>,
        settings: SolverSettings,
    ) -> Result<Self> {
        let bank = method.bank()?;
        let structure = match method {
            Method::Tv(_) => Some(StructureMatrix::identity(1)),
            Method::GmoTv(k) => {
                let s = structure.ok_or_else(|| {
                    Error::InvalidValue(format!("{method} needs a trained structure matrix"))
                })?;
                if s.dim() != k {
                    return Err(Error::DimensionMismatch(format!(
                        "{method} needs a {k}x{k} structure matrix, got {}x{}",
                        s.dim(),
                        s.dim()
                    )));
                }
                Some(s)
            }
            Method::IgmoTv(_) => None,
        };
        Ok(Restorer {
            method,
            bank,
            structure,
            settings,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn run(&self, f: &Signal, model: &DegradationModel, lambda: f64) -> Result<Signal> {
        let st = &self.settings;
        match &self.structure {
            Some(s) => {
                let cfg = RestoreConfig {
                    lambda,
                    eps_q: st.tolerance,
                    eps_m: st.tolerance,
                    eps_smooth: st.eps_smooth,
                    max_outer: st.max_outer,
                    inner_rtol: st.inner_rtol,
                    ..RestoreConfig::default()
                };
                Ok(restore(f, model, s, &self.bank, &cfg)?.0)
            }
            None => {
                let cfg = JointConfig {
                    lambda,
                    lambda_f: st.lambda_f,
                    eps_a: st.tolerance,
                    eps_smooth: st.eps_smooth,
                    max_alternations: st.max_alternations,
                    max_outer: st.max_outer,
                    inner_rtol: st.inner_rtol,
                    ..JointConfig::default()
                };
                Ok(igmotv(f, model, &self.bank, &cfg)?.g)
            }
        }
    }
}

/// One degraded segment together with its ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub clean: Signal,
    pub degraded: Signal,
    pub model: DegradationModel,
}

/// Outcome of [`tune_lambda`].
#[derive(Debug, Clone)]
pub struct Tuned {
    pub lambda: f64,
    /// Mean ISNR over the instances.
    pub isnr_db: f64,
    /// Restorations at the chosen lambda, one per instance.
    pub restored: Vec<Signal>,
}

/// `n` logarithmically spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

/// The benchmark's default lambda grid.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 24)
}

/// Sorted, deduplicated copy of `grid`; rejects empty or non-positive grids.
pub fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidValue("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "lambda grid entries must be positive, got {bad}"
        )));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Evaluates `score` at every grid point and keeps the best.
///
/// Points are visited in ascending order and only a strictly larger score
/// replaces the incumbent, so ties go to the smaller lambda. Failed or
/// non-finite evaluations are skipped with a warning.
pub fn select_best<T>(
    grid: &[f64],
    mut score: impl FnMut(f64) -> Result<(f64, T)>,
) -> Result<(f64, f64, T)> {
    let grid = normalize_grid(grid)?;
    let mut best: Option<(f64, f64, T)> = None;
    for &lambda in &grid {
        match score(lambda) {
            Ok((value, extra)) if value.is_finite() => {
                if best.as_ref().map_or(true, |b| value > b.1) {
                    best = Some((lambda, value, extra));
                }
            }
            Ok((value, _)) => warn!("lambda {lambda:e}: score {value} is not finite, skipped"),
            Err(e) => warn!("lambda {lambda:e}: {e}, skipped"),
        }
    }
    best.ok_or(Error::AllCandidatesFailed(grid.len()))
}

/// Picks the grid lambda with the highest mean ISNR over `instances`.
///
/// One lambda is shared by all instances of a cell.
pub fn tune_lambda(instances: &[Instance], restorer: &Restorer, grid: &[f64]) -> Result<Tuned> {
    if instances.is_empty() {
        return Err(Error::InvalidValue("no instances to tune on".into()));
    }
    let (lambda, isnr_db, restored) = select_best(grid, |lambda| {
        let mut total = 0.0;
        let mut restored = Vec::with_capacity(instances.len());
        for inst in instances {
            let g = restorer.run(&inst.degraded, &inst.model, lambda)?;
            total += isnr(&inst.clean, &inst.degraded, &g)?;
            restored.push(g);
        }
        Ok((total / instances.len() as f64, restored))
    })?;
    Ok(Tuned {
        lambda,
        isnr_db,
        restored,
    })
}
