//! Solution files.

use std::path::Path;

use dimfac::evaluate::Evaluator;
use dimfac::{CellIndex, CellStatus, Evaluation, Placement};
use serde::{Deserialize, Serialize};

use crate::config::Instance;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedFacility {
    pub facility: usize,
    /// `[k, l]`
    pub cell: [usize; 2],
    pub center: [f64; 2],
    pub assigned_mass: f64,
    pub install_mass: f64,
    pub assigned_cells: usize,
    pub covered_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakdown {
    pub total: f64,
    pub install: Vec<f64>,
    pub congestion: Vec<f64>,
    pub lost: f64,
    pub lost_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverInfo {
    pub method: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Discretization time in seconds.
    pub preprocess_seconds: f64,
    /// Solver time in seconds.
    pub solve_seconds: f64,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub initial_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub version: u32,
    pub config_digest: String,
    pub grid: [usize; 2],
    pub rho: usize,
    /// `k,l;k,l;...`
    pub placement: String,
    pub facilities: Vec<PlacedFacility>,
    pub objective: Breakdown,
    pub solver: SolverInfo,
}

impl SolutionRecord {
    pub fn new(inst: &Instance, p: &Placement, e: &Evaluation, solver: SolverInfo) -> SolutionRecord {
        let di = &inst.di;
        let a = &e.allocation;
        let facilities = p
            .cells()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let center = di.grid().cell_center(*c);
                PlacedFacility {
                    facility: i,
                    cell: [c.k, c.l],
                    center: [center.x, center.y],
                    assigned_mass: a.assigned_mass[i],
                    install_mass: a.install_mass[i],
                    assigned_cells: a.status.iter().filter(|s| **s == CellStatus::Assigned(i)).count(),
                    covered_cells: a.status.iter().filter(|s| **s == CellStatus::Covered(i)).count(),
                }
            })
            .collect();
        SolutionRecord {
            version: crate::config::SCHEMA_VERSION,
            config_digest: inst.digest.clone(),
            grid: [di.grid().nx(), di.grid().ny()],
            rho: di.rho(),
            placement: p.to_string(),
            facilities,
            objective: Breakdown {
                total: e.total,
                install: e.install.clone(),
                congestion: e.congestion.clone(),
                lost: e.lost,
                lost_mass: a.lost_mass,
            },
            solver,
        }
    }

    pub fn load(path: &Path) -> Result<SolutionRecord, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Schema { path: e.path().to_string(), message: e.into_inner().to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("record serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// The placement, after checking that the record fits the instance.
    pub fn placement_for(&self, inst: &Instance) -> Result<Placement, CliError> {
        let g = inst.di.grid();
        if self.grid != [g.nx(), g.ny()] || self.rho != inst.di.rho() {
            return Err(CliError::Mismatch(format!(
                "solution is for a {}x{} grid with {} facilities, the instance has a {}x{} grid with {}",
                self.grid[0],
                self.grid[1],
                self.rho,
                g.nx(),
                g.ny(),
                inst.di.rho()
            )));
        }
        let p = parse_placement(&self.placement)?;
        if p.len() != self.rho || p.cells().iter().any(|c| !g.contains(*c)) {
            return Err(CliError::Mismatch(format!("placement `{}` does not fit the instance grid", self.placement)));
        }
        Ok(p)
    }

    /// Largest deviation between the stored breakdown and a fresh
    /// evaluation of the placement.
    pub fn consistency_gap(&self, inst: &Instance) -> Result<f64, CliError> {
        let p = self.placement_for(inst)?;
        let ev = Evaluator::new(&inst.di, &inst.facilities, &inst.lost_cost);
        let e = ev.objective(&p)?;
        let o = &self.objective;
        let mut gap = (o.total - e.total).abs().max((o.lost - e.lost).abs());
        for (a, b) in o.install.iter().zip(&e.install).chain(o.congestion.iter().zip(&e.congestion)) {
            gap = gap.max((a - b).abs());
        }
        Ok(gap)
    }
}

/// Parses `k,l;k,l;...`.
pub fn parse_placement(text: &str) -> Result<Placement, CliError> {
    let bad = || CliError::Placement(format!("expected `k,l;k,l;...`, got `{text}`"));
    text.split(';')
        .map(|pair| {
            let (k, l) = pair.split_once(',').ok_or_else(bad)?;
            Ok(CellIndex::new(k.trim().parse().map_err(|_| bad())?, l.trim().parse().map_err(|_| bad())?))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Placement)
}
