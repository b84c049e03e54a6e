//! Versioned JSON problem definitions and their translation into systems.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::measure::{HalfLineMeasure, MeasureJson};
use crate::neutral::NfdeSystem;
use crate::renewal::ReSystem;
use crate::rfde::RfdeSystem;
use crate::state::{CumulativeHistory, History};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryJson {
    /// one n-vector per history node on `[-1, 0]`, oldest first
    pub samples: Vec<Vec<f64>>,
    pub at_zero: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemJson {
    pub schema: u32,
    /// one of "rfde", "nfde", "re-smooth", "re-bv"
    pub kind: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<MeasureJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<MeasureJson>,
    /// smooth renewal kernel samples on `[0, 1]` with step `h`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<Vec<f64>>>>,
    /// BV renewal kernel
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<MeasureJson>,
    /// renewal initial state as a measure on `[0, 1]` in age
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<MeasureJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistoryJson>,
    /// optional inhomogeneity, one n-vector per node on `[0, T]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub enum LoadedProblem {
    Rfde { sys: RfdeSystem, phi: History, forcing: Option<GridFn> },
    Nfde { sys: NfdeSystem, phi: History },
    ReSmooth { sys: ReSystem, psi: CumulativeHistory },
    ReBv { sys: ReSystem, psi: CumulativeHistory },
}

/// Command-line overrides; values from the file apply when absent.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub horizon: Option<f64>,
}

pub fn parse_problem(text: &str) -> Result<ProblemJson> {
    let p: ProblemJson = serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("problem JSON: {e}")))?;
    if p.schema != SCHEMA_VERSION {
        return Err(Error::InvalidArgument(format!(
            "schema: expected {SCHEMA_VERSION}, found {}",
            p.schema
        )));
    }
    Ok(p)
}

pub fn to_json_string(p: &ProblemJson) -> String {
    serde_json::to_string_pretty(p).expect("problem serialization cannot fail")
}

fn parse_vec(v: &[f64], n: usize, field: &str) -> Result<DMatrix<f64>> {
    if v.len() != n {
        return Err(Error::InvalidArgument(format!("{field}: expected {n} entries, found {}", v.len())));
    }
    Ok(DMatrix::from_fn(n, 1, |r, _| v[r]))
}

fn resample(f: &GridFn, grid: Grid) -> Result<GridFn> {
    if f.grid == grid {
        return Ok(f.clone());
    }
    GridFn::from_values(grid, grid.nodes().map(|s| f.eval(s)).collect())
}

fn load_measure(
    json: &MeasureJson,
    n: usize,
    unit_grid: Grid,
    field: &str,
) -> Result<HalfLineMeasure> {
    let m = HalfLineMeasure::from_json(json, Some(unit_grid))
        .map_err(|e| Error::InvalidArgument(format!("{field}: {e}")))?;
    if m.rows != n || m.cols != n && m.cols != 1 {
        return Err(Error::InvalidArgument(format!("{field}: dims do not match n = {n}")));
    }
    let density = resample(&m.density, unit_grid)?;
    HalfLineMeasure::new(density, m.atoms)
}

fn load_history(json: &HistoryJson, n: usize, grid: Grid, file_h: f64) -> Result<History> {
    let file_grid = Grid::new(1.0, file_h)?;
    if json.samples.len() != file_grid.len() {
        return Err(Error::InvalidArgument(format!(
            "history.samples: expected {} nodes, found {}",
            file_grid.len(),
            json.samples.len()
        )));
    }
    let values = json
        .samples
        .iter()
        .map(|v| parse_vec(v, n, "history.samples"))
        .collect::<Result<Vec<_>>>()?;
    let samples = resample(&GridFn::from_values(file_grid, values)?, grid)?;
    History::new(samples, parse_vec(&json.at_zero, n, "history.at_zero")?)
}

/// Translate a parsed problem into a ready-to-run system and initial state.
pub fn build_problem(p: &ProblemJson, ov: &Overrides) -> Result<LoadedProblem> {
    if p.n == 0 {
        return Err(Error::InvalidArgument("n: must be positive".into()));
    }
    let h = ov.h.unwrap_or(p.h);
    let horizon = ov.horizon.unwrap_or(p.horizon);
    if !(h > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("h/T: must be positive".into()));
    }
    let unit = Grid::new(1.0, h)?;
    match p.kind.as_str() {
        "rfde" => {
            let zeta_json =
                p.zeta.as_ref().ok_or_else(|| Error::InvalidArgument("zeta: missing".into()))?;
            let zeta = load_measure(zeta_json, p.n, unit, "zeta")?;
            let sys = RfdeSystem::new(zeta, horizon)?;
            let phi = match &p.history {
                Some(hj) => load_history(hj, p.n, unit, p.h)?,
                None => History::constant(unit, DMatrix::from_element(p.n, 1, 1.0)),
            };
            let forcing = match &p.forcing {
                Some(rows) => {
                    let grid = sys.grid;
                    if rows.len() != grid.len() {
                        return Err(Error::InvalidArgument(format!(
                            "forcing: expected {} nodes, found {}",
                            grid.len(),
                            rows.len()
                        )));
                    }
                    let values = rows
                        .iter()
                        .map(|v| parse_vec(v, p.n, "forcing"))
                        .collect::<Result<Vec<_>>>()?;
                    Some(GridFn::from_values(grid, values)?)
                }
                None => None,
            };
            Ok(LoadedProblem::Rfde { sys, phi, forcing })
        }
        "nfde" => {
            let eta_json =
                p.eta.as_ref().ok_or_else(|| Error::InvalidArgument("eta: missing".into()))?;
            let zeta_json =
                p.zeta.as_ref().ok_or_else(|| Error::InvalidArgument("zeta: missing".into()))?;
            let eta = load_measure(eta_json, p.n, unit, "eta")?;
            let zeta = load_measure(zeta_json, p.n, unit, "zeta")?;
            let sys = NfdeSystem::new(eta, zeta, horizon)?;
            let phi = match &p.history {
                Some(hj) => load_history(hj, p.n, unit, p.h)?,
                None => History::constant(unit, DMatrix::from_element(p.n, 1, 1.0)),
            };
            Ok(LoadedProblem::Nfde { sys, phi })
        }
        "re-smooth" => {
            let samples = p
                .kernel
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("kernel: missing".into()))?;
            let file_grid = Grid::new(1.0, p.h)?;
            if samples.len() != file_grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "kernel: expected {} nodes, found {}",
                    file_grid.len(),
                    samples.len()
                )));
            }
            let values = samples
                .iter()
                .map(|m| {
                    if m.len() != p.n || m.iter().any(|r| r.len() != p.n) {
                        return Err(Error::InvalidArgument("kernel: entry dims".into()));
                    }
                    Ok(DMatrix::from_fn(p.n, p.n, |r, c| m[r][c]))
                })
                .collect::<Result<Vec<_>>>()?;
            let kernel = resample(&GridFn::from_values(file_grid, values)?, unit)?;
            let sys = ReSystem::smooth(kernel, horizon)?;
            let psi = load_psi(p, unit)?;
            Ok(LoadedProblem::ReSmooth { sys, psi })
        }
        "re-bv" => {
            let l_json =
                p.l.as_ref().ok_or_else(|| Error::InvalidArgument("l: missing".into()))?;
            let l = load_measure(l_json, p.n, unit, "l")?;
            let sys = ReSystem::bv(l, horizon)?;
            let psi = load_psi(p, unit)?;
            Ok(LoadedProblem::ReBv { sys, psi })
        }
        other => Err(Error::InvalidArgument(format!("kind: unknown value {other:?}"))),
    }
}

fn load_psi(p: &ProblemJson, unit: Grid) -> Result<CumulativeHistory> {
    match &p.psi {
        Some(m) => {
            let measure = load_measure(m, p.n, unit, "psi")?;
            if measure.cols != 1 {
                return Err(Error::InvalidArgument("psi: must have one column".into()));
            }
            Ok(CumulativeHistory::new(measure))
        }
        None => Ok(CumulativeHistory::dirac_at_zero(unit, p.n, 0)),
    }
}
