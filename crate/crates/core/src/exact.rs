//! Exhaustive search over suitable placements and export of the
//! mixed-integer model in CPLEX-LP format.
//!
//! # LP token grammar
//!
//! Variables (facility indices from 0, all indices zero-padded to a common
//! width of at least two digits):
//!
//! * `t_<i>_<k>_<l>`: binary, facility `i` rooted at cell `(k, l)`.
//! * `a_<i>_<r>_<s>`: binary, cell `(r, s)` served by facility `i`.
//! * `p_<r>_<s>`: continuous, non-negative, utility of the served cell.
//! * `pl_<c>_y_<k>`, `pl_<c>_l_<k>`, `pl_<c>_r_<k>`: segment binary and the
//!   left/right interpolation weights of segment `k` of cost `c`.
//! * `pl_<c>_z`: epigraph variable of a convex cost `c`.
//!
//! Cost names `c` are `I<i>`, `C<i>` and `L`. Constraint names are
//! `A3_<i>`, `A4_<r>_<s>`, `A5_<r>_<s>_<i>`, `A6L_<r>_<s>_<i>`,
//! `A6U_<r>_<s>_<i>` and `PL_<c>_<kind>[_<k>]`. Each line of the file holds
//! one section keyword, a constraint (possibly continued on following lines
//! starting with a sign), a bound or a list of binaries. Lines starting with
//! `\` are comments; the warm start is written as `\ start <var> = 1`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::costs::PiecewiseLinear;
use crate::evaluate::{CellStatus, Evaluation, Evaluator, Facility};
use crate::grid::{CellIndex, DiscretizedInstance, Placement};
use crate::Error;

/// Default cap on the number of placement tuples enumerated.
pub const DEFAULT_LIMIT: u64 = 10_000_000;

/// Default constraint count above which exports carry a size warning.
pub const LARGE_MODEL_ROWS: usize = 1_000_000;

fn better(a: &(Placement, Evaluation), b: &(Placement, Evaluation)) -> bool {
    a.1.total.total_cmp(&b.1.total).then_with(|| a.0.cmp(&b.0)).is_lt()
}

/// Minimizes the objective over every suitable placement; ties go to the
/// lexicographically smallest placement.
pub fn enumerate_exact(ev: &Evaluator<'_>, limit: u64) -> Result<(Placement, Evaluation), Error> {
    let di = ev.instance();
    let rho = di.rho();
    let product: f64 = (0..rho).map(|i| di.feasible(i).len() as f64).product();
    if product > limit as f64 {
        return Err(Error::SizeLimit { product, limit });
    }
    if rho == 0 || product == 0.0 {
        return Err(Error::Infeasible);
    }
    let best = di
        .feasible(0)
        .par_iter()
        .map(|first| -> Result<Option<(Placement, Evaluation)>, Error> {
            let mut occupied = vec![false; di.n_cells()];
            let mut cells = vec![*first; rho];
            let mut best = None;
            for pos in di.footprint_positions(0, *first) {
                occupied[pos] = true;
            }
            search(ev, 1, &mut cells, &mut occupied, &mut best)?;
            Ok(best)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    best.into_iter()
        .flatten()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(Error::Infeasible)
}

fn search(
    ev: &Evaluator<'_>,
    i: usize,
    cells: &mut Vec<CellIndex>,
    occupied: &mut Vec<bool>,
    best: &mut Option<(Placement, Evaluation)>,
) -> Result<(), Error> {
    let di = ev.instance();
    if i == di.rho() {
        let p = Placement(cells.clone());
        let e = ev.objective_unchecked(&p)?;
        let cand = (p, e);
        if best.as_ref().map_or(true, |b| better(&cand, b)) {
            *best = Some(cand);
        }
        return Ok(());
    }
    for at in di.feasible(i) {
        let fp: Vec<usize> = di.footprint_positions(i, *at).collect();
        if fp.iter().any(|p| occupied[*p]) {
            continue;
        }
        for p in &fp {
            occupied[*p] = true;
        }
        cells[i] = *at;
        search(ev, i + 1, cells, occupied, best)?;
        for p in &fp {
            occupied[*p] = false;
        }
    }
    Ok(())
}

/// Largest entry of the utility table over every facility, feasible
/// placement cell and demand cell, streamed row by row.
pub fn compute_big_m(di: &DiscretizedInstance, facs: &[Facility]) -> Result<f64, Error> {
    let zero = PiecewiseLinear::zero();
    let ev = Evaluator::with_cache_budget(di, facs, &zero, 0);
    let mut m = f64::NEG_INFINITY;
    for i in 0..di.rho() {
        let row_max = di
            .feasible(i)
            .par_iter()
            .map(|at| ev.utility_row(i, *at).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
            .collect::<Result<Vec<f64>, Error>>()?;
        m = row_max.into_iter().fold(m, f64::max);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlKind {
    /// Single linear term in the objective.
    Affine,
    /// Epigraph variable bounded below by every piece.
    Convex,
    /// Disaggregated convex combination with one binary per segment.
    Segments,
}

/// Bookkeeping of one linearized cost, used to complete a point of the
/// model from the placement variables.
#[derive(Debug, Clone)]
struct PlBlock {
    kind: PlKind,
    arg: Vec<(usize, f64)>,
    arg_const: f64,
    breakpoints: Vec<(f64, f64)>,
    vars: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub constraints: Vec<Constraint>,
    pub big_m: f64,
    index: HashMap<String, usize>,
    blocks: Vec<PlBlock>,
    width: usize,
}

fn pad(width: usize, v: usize) -> String {
    format!("{v:0width$}")
}

impl MilpModel {
    fn empty(width: usize) -> MilpModel {
        MilpModel {
            variables: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            constraints: Vec::new(),
            big_m: 0.0,
            index: HashMap::new(),
            blocks: Vec::new(),
            width,
        }
    }

    fn var(&mut self, name: String, kind: VarKind) -> usize {
        if let Some(&k) = self.index.get(&name) {
            return k;
        }
        self.index.insert(name.clone(), self.variables.len());
        self.variables.push(Variable { name, kind });
        self.variables.len() - 1
    }

    pub fn variable(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn theta_name(&self, i: usize, c: CellIndex) -> String {
        format!("t_{}_{}_{}", pad(self.width, i), pad(self.width, c.k), pad(self.width, c.l))
    }

    fn tau_name(&self, i: usize, c: CellIndex) -> String {
        format!("a_{}_{}_{}", pad(self.width, i), pad(self.width, c.k), pad(self.width, c.l))
    }

    fn phi_name(&self, c: CellIndex) -> String {
        format!("p_{}_{}", pad(self.width, c.k), pad(self.width, c.l))
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Number of constraints whose name starts with `prefix_`.
    pub fn count_rows(&self, prefix: &str) -> usize {
        let tag = format!("{prefix}_");
        self.constraints.iter().filter(|c| c.name.starts_with(&tag)).count()
    }

    fn add_pl(&mut self, name: &str, f: &PiecewiseLinear, arg: Vec<(usize, f64)>, arg_const: f64, arg_max: f64) {
        let mut bps = f.breakpoints().to_vec();
        let tol = 1e-9;
        let first = bps[0];
        if first.0 > tol {
            bps.insert(0, (0.0, first.1));
        }
        let last = *bps.last().expect("two breakpoints");
        if arg_max > last.0 + tol * last.0.abs().max(1.0) {
            bps.push((arg_max, last.1));
        }
        let ext = PiecewiseLinear::new(bps.clone()).expect("extension keeps the function valid");
        let slopes = ext.slopes();
        if ext.is_affine() {
            let s = slopes[0];
            let b = bps[0].1 - s * bps[0].0;
            for &(v, c) in &arg {
                self.objective.push((v, s * c));
            }
            self.objective_constant += b + s * arg_const;
            self.blocks.push(PlBlock { kind: PlKind::Affine, arg, arg_const, breakpoints: bps, vars: vec![] });
        } else if ext.is_convex() {
            let z = self.var(format!("pl_{name}_z"), VarKind::Continuous);
            self.objective.push((z, 1.0));
            for (k, s) in slopes.iter().enumerate() {
                let b = bps[k].1 - s * bps[k].0;
                let mut terms = vec![(z, 1.0)];
                terms.extend(arg.iter().map(|&(v, c)| (v, -s * c)));
                self.constraints.push(Constraint {
                    name: format!("PL_{name}_epi_{}", pad(self.width, k)),
                    terms,
                    sense: Sense::Ge,
                    rhs: b + s * arg_const,
                });
            }
            self.blocks.push(PlBlock { kind: PlKind::Convex, arg, arg_const, breakpoints: bps, vars: vec![z] });
        } else {
            let m = bps.len() - 1;
            let mut vars = Vec::with_capacity(3 * m);
            let mut sum = Vec::with_capacity(m);
            let mut arg_row: Vec<(usize, f64)> = Vec::new();
            for k in 0..m {
                let y = self.var(format!("pl_{name}_y_{}", pad(self.width, k)), VarKind::Binary);
                let l = self.var(format!("pl_{name}_l_{}", pad(self.width, k)), VarKind::Continuous);
                let r = self.var(format!("pl_{name}_r_{}", pad(self.width, k)), VarKind::Continuous);
                vars.extend([y, l, r]);
                sum.push((y, 1.0));
                self.constraints.push(Constraint {
                    name: format!("PL_{name}_seg_{}", pad(self.width, k)),
                    terms: vec![(l, 1.0), (r, 1.0), (y, -1.0)],
                    sense: Sense::Eq,
                    rhs: 0.0,
                });
                arg_row.push((l, bps[k].0));
                arg_row.push((r, bps[k + 1].0));
                self.objective.push((l, bps[k].1));
                self.objective.push((r, bps[k + 1].1));
            }
            self.constraints.push(Constraint { name: format!("PL_{name}_one"), terms: sum, sense: Sense::Eq, rhs: 1.0 });
            arg_row.extend(arg.iter().map(|&(v, c)| (v, -c)));
            self.constraints.push(Constraint {
                name: format!("PL_{name}_arg"),
                terms: arg_row,
                sense: Sense::Eq,
                rhs: arg_const,
            });
            self.blocks.push(PlBlock { kind: PlKind::Segments, arg, arg_const, breakpoints: bps, vars });
        }
    }

    /// Value of every variable for a fixed placement: location binaries from
    /// the placement, allocation from the lower-level solution, served
    /// utilities, and the linearization auxiliaries at their optimum.
    pub fn point_at(&self, ev: &Evaluator<'_>, p: &Placement) -> Result<Vec<f64>, Error> {
        let alloc = ev.solve_lower_level(p)?;
        self.point_with(ev, p, &alloc.status)
    }

    fn point_with(&self, ev: &Evaluator<'_>, p: &Placement, status: &[CellStatus]) -> Result<Vec<f64>, Error> {
        let di = ev.instance();
        let mut x = vec![0.0; self.variables.len()];
        let set = |x: &mut Vec<f64>, name: String, v: f64| {
            let k = self.index.get(&name).unwrap_or_else(|| panic!("model lacks variable {name}"));
            x[*k] = v;
        };
        for (i, at) in p.cells().iter().enumerate() {
            set(&mut x, self.theta_name(i, *at), 1.0);
        }
        for (pos, s) in status.iter().enumerate() {
            if let CellStatus::Assigned(i) = *s {
                let c = di.cells()[pos];
                set(&mut x, self.tau_name(i, c), 1.0);
                set(&mut x, self.phi_name(c), ev.utility_row(i, p.cells()[i])?[pos]);
            }
        }
        for b in &self.blocks {
            let arg = b.arg.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + b.arg_const;
            let bps = &b.breakpoints;
            match b.kind {
                PlKind::Affine => {}
                PlKind::Convex => {
                    let f = PiecewiseLinear::new(bps.clone()).expect("valid");
                    x[b.vars[0]] = f.eval(arg);
                }
                PlKind::Segments => {
                    let m = bps.len() - 1;
                    let a = arg.clamp(bps[0].0, bps[m].0);
                    let k = (0..m).find(|&k| a <= bps[k + 1].0).unwrap_or(m - 1);
                    let t = (a - bps[k].0) / (bps[k + 1].0 - bps[k].0);
                    x[b.vars[3 * k]] = 1.0;
                    x[b.vars[3 * k + 1]] = 1.0 - t;
                    x[b.vars[3 * k + 2]] = t;
                }
            }
        }
        Ok(x)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.objective_constant
    }

    /// Constraint with the largest scaled violation, if any exceeds `tol`.
    pub fn worst_violation(&self, x: &[f64], tol: f64) -> Option<(String, f64)> {
        let mut worst: Option<(String, f64)> = None;
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * x[v]).sum();
            let scale = 1.0 + c.rhs.abs() + c.terms.iter().map(|&(v, a)| (a * x[v]).abs()).sum::<f64>();
            let gap = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            } / scale;
            if gap > tol && worst.as_ref().map_or(true, |w| gap > w.1) {
                worst = Some((c.name.clone(), gap));
            }
        }
        for (k, v) in self.variables.iter().enumerate() {
            let bad = match v.kind {
                VarKind::Binary => x[k] != 0.0 && x[k] != 1.0,
                VarKind::Continuous => x[k] < -tol,
            };
            if bad {
                return Some((v.name.clone(), x[k].abs()));
            }
        }
        worst
    }
}

/// Result of plugging a placement into the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheck {
    pub model_objective: f64,
    pub objective: f64,
    /// Violated constraint (or variable domain) and its scaled violation.
    pub violation: Option<(String, f64)>,
}

/// Fixes the location binaries to `p`, completes the point with the
/// lower-level allocation and compares the model objective with the
/// direct objective.
pub fn evaluate_model_at_placement(model: &MilpModel, ev: &Evaluator<'_>, p: &Placement) -> Result<ModelCheck, Error> {
    let x = model.point_at(ev, p)?;
    let e = ev.objective(p)?;
    Ok(ModelCheck { model_objective: model.objective_value(&x), objective: e.total, violation: model.worst_violation(&x, 1e-9) })
}

/// Point of the model for a placement whose footprints may overlap; used to
/// check that such placements violate the cover rows.
pub fn point_for_unchecked_placement(model: &MilpModel, ev: &Evaluator<'_>, p: &Placement) -> Result<Vec<f64>, Error> {
    let di = ev.instance();
    let mut status = vec![CellStatus::Assigned(0); di.n_cells()];
    for (i, at) in p.cells().iter().enumerate() {
        for pos in di.footprint_positions(i, *at) {
            status[pos] = CellStatus::Covered(i);
        }
    }
    model.point_with(ev, p, &status)
}

/// Builds the mixed-integer model. The linking constant is the largest
/// utility, raised when needed to `max_i a_i` and `-min u` so that cells
/// covered by a footprint keep the linking rows satisfiable.
pub fn build_milp(ev: &Evaluator<'_>) -> Result<MilpModel, Error> {
    let di = ev.instance();
    let facs = ev.facilities();
    let rho = di.rho();
    let largest = [di.grid().nx(), di.grid().ny(), rho].into_iter().max().unwrap_or(1).saturating_sub(1);
    let width = largest.to_string().len().max(2);
    let mut model = MilpModel::empty(width);
    let n = di.n_cells();
    let w_d = di.demand_weights();
    let w_b = di.install_weights();

    // utility tables, one row per feasible placement cell
    let tables: Vec<Vec<std::sync::Arc<[f64]>>> = (0..rho)
        .map(|i| {
            di.feasible(i)
                .par_iter()
                .map(|at| ev.utility_row(i, *at))
                .collect::<Result<Vec<_>, Error>>()
        })
        .collect::<Result<_, _>>()?;
    let table_max = tables.iter().flatten().flat_map(|r| r.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let table_min = tables.iter().flatten().flat_map(|r| r.iter().copied()).fold(f64::INFINITY, f64::min);
    let a_max = facs.iter().map(|f| f.access_cost).fold(0.0, f64::max);
    let big_m = table_max.max(a_max).max(-table_min).max(0.0);
    model.big_m = big_m;

    let theta: Vec<Vec<usize>> = (0..rho)
        .map(|i| {
            di.feasible(i)
                .iter()
                .map(|c| {
                    let name = model.theta_name(i, *c);
                    model.var(name, VarKind::Binary)
                })
                .collect()
        })
        .collect();
    let mut tau = vec![vec![0usize; n]; rho];
    for pos in 0..n {
        for (i, row) in tau.iter_mut().enumerate() {
            let name = model.tau_name(i, di.cells()[pos]);
            row[pos] = model.var(name, VarKind::Binary);
        }
    }
    let phi: Vec<usize> = di
        .cells()
        .iter()
        .map(|c| {
            let name = model.phi_name(*c);
            model.var(name, VarKind::Continuous)
        })
        .collect();

    for i in 0..rho {
        model.constraints.push(Constraint {
            name: format!("A3_{}", pad(width, i)),
            terms: theta[i].iter().map(|&v| (v, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    let feasible_pos: Vec<HashMap<CellIndex, usize>> =
        (0..rho).map(|i| di.feasible(i).iter().enumerate().map(|(k, c)| (*c, k)).collect()).collect();
    for pos in 0..n {
        let c = di.cells()[pos];
        let mut terms: Vec<(usize, f64)> = (0..rho).map(|i| (tau[i][pos], 1.0)).collect();
        for i in 0..rho {
            for at in di.covering_placements(i, c) {
                terms.push((theta[i][feasible_pos[i][&at]], 1.0));
            }
        }
        model.constraints.push(Constraint {
            name: format!("A4_{}_{}", pad(width, c.k), pad(width, c.l)),
            terms,
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for pos in 0..n {
        let c = di.cells()[pos];
        let w = w_d[pos];
        for i in 0..rho {
            let tag = format!("{}_{}_{}", pad(width, c.k), pad(width, c.l), pad(width, i));
            let mut terms: Vec<(usize, f64)> = (0..rho).map(|j| (tau[j][pos], facs[j].access_cost * w)).collect();
            terms.push((phi[pos], w));
            for (k, row) in tables[i].iter().enumerate() {
                terms.push((theta[i][k], -w * row[pos]));
            }
            model.constraints.push(Constraint {
                name: format!("A5_{tag}"),
                terms,
                sense: Sense::Le,
                rhs: facs[i].access_cost * w,
            });
        }
    }
    for pos in 0..n {
        let c = di.cells()[pos];
        for i in 0..rho {
            let tag = format!("{}_{}_{}", pad(width, c.k), pad(width, c.l), pad(width, i));
            let utilities: Vec<(usize, f64)> =
                tables[i].iter().enumerate().map(|(k, row)| (theta[i][k], row[pos])).collect();
            let mut lower = utilities.clone();
            lower.push((tau[i][pos], big_m));
            lower.push((phi[pos], -1.0));
            model.constraints.push(Constraint { name: format!("A6L_{tag}"), terms: lower, sense: Sense::Le, rhs: big_m });
            let mut upper: Vec<(usize, f64)> = utilities.into_iter().map(|(v, u)| (v, -u)).collect();
            upper.push((tau[i][pos], big_m));
            upper.push((phi[pos], 1.0));
            model.constraints.push(Constraint { name: format!("A6U_{tag}"), terms: upper, sense: Sense::Le, rhs: big_m });
        }
    }

    let total_demand: f64 = w_d.iter().sum();
    for (i, f) in facs.iter().enumerate() {
        // installation mass of each placement, summed through the cover sets
        let mut coef = vec![0.0; di.feasible(i).len()];
        for pos in 0..n {
            for at in di.covering_placements(i, di.cells()[pos]) {
                coef[feasible_pos[i][&at]] += w_b[pos];
            }
        }
        let arg_max = coef.iter().copied().fold(0.0, f64::max);
        let arg: Vec<(usize, f64)> = theta[i].iter().zip(&coef).map(|(&v, &c)| (v, c)).collect();
        model.add_pl(&format!("I{}", pad(width, i)), &f.install_cost, arg, 0.0, arg_max);
    }
    for (i, f) in facs.iter().enumerate() {
        let arg: Vec<(usize, f64)> = (0..n).map(|pos| (tau[i][pos], w_d[pos])).collect();
        model.add_pl(&format!("C{}", pad(width, i)), &f.congestion_cost, arg, 0.0, total_demand);
    }
    let arg: Vec<(usize, f64)> = (0..n).flat_map(|pos| (0..rho).map(move |i| (pos, i))).map(|(pos, i)| (tau[i][pos], -w_d[pos])).collect();
    model.add_pl("L", ev.lost_cost(), arg, total_demand, total_demand);

    // one objective coefficient per variable, in order of first appearance
    let mut merged: Vec<(usize, f64)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (v, c) in std::mem::take(&mut model.objective) {
        match slot.get(&v) {
            Some(&k) => merged[k].1 += c,
            None => {
                slot.insert(v, merged.len());
                merged.push((v, c));
            }
        }
    }
    model.objective = merged;
    Ok(model)
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], model: &MilpModel) {
    let mut written = 0;
    for &(v, c) in terms {
        if c == 0.0 {
            continue;
        }
        if written > 0 && written % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {:?} {}", c.abs(), model.variables[v].name);
        written += 1;
    }
    if written == 0 {
        // keep the row well formed
        let v = terms.first().map_or(0, |t| t.0);
        let _ = write!(out, " 0 {}", model.variables[v].name);
    }
}

/// Renders the model as CPLEX-LP text, with optional warm-start hints.
pub fn write_lp(model: &MilpModel, warm_start: Option<&[String]>) -> String {
    let mut out = String::new();
    out.push_str("\\ location-allocation model of dimensional facilities\n");
    let _ = writeln!(out, "\\ big-M {:?}", model.big_m);
    if let Some(names) = warm_start {
        out.push_str("\\ warm start\n");
        for n in names {
            let _ = writeln!(out, "\\ start {n} = 1");
        }
    }
    out.push_str("Minimize\n obj:");
    write_terms(&mut out, &model.objective, model);
    if model.objective_constant != 0.0 {
        let sign = if model.objective_constant < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {:?}", model.objective_constant.abs());
    }
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, &c.terms, model);
        let _ = writeln!(out, " {} {:?}", c.sense.token(), c.rhs);
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Continuous {
            let _ = writeln!(out, " {} >= 0", v.name);
        }
    }
    out.push_str("Binary\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary {
            let _ = writeln!(out, " {}", v.name);
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub big_m: f64,
    pub warnings: Vec<String>,
}

/// Writes the model for the instance to `path`; models with more than
/// `warn_rows` constraints get a size warning.
pub fn export_milp_lp(
    ev: &Evaluator<'_>,
    path: &Path,
    warm_start: Option<&Placement>,
    warn_rows: usize,
) -> Result<ExportSummary, Error> {
    let model = build_milp(ev)?;
    let hints = match warm_start {
        Some(p) => {
            let alloc = ev.solve_lower_level(p)?;
            let di = ev.instance();
            let mut names: Vec<String> = p.cells().iter().enumerate().map(|(i, c)| model.theta_name(i, *c)).collect();
            for (pos, s) in alloc.status.iter().enumerate() {
                if let CellStatus::Assigned(i) = s {
                    names.push(model.tau_name(*i, di.cells()[pos]));
                }
            }
            Some(names)
        }
        None => None,
    };
    let mut warnings = Vec::new();
    if model.constraints.len() > warn_rows {
        warnings.push(format!("model has {} constraints (more than {warn_rows})", model.constraints.len()));
    }
    std::fs::write(path, write_lp(&model, hints.as_deref()))?;
    Ok(ExportSummary {
        variables: model.variables.len(),
        binaries: model.num_binaries(),
        constraints: model.constraints.len(),
        big_m: model.big_m,
        warnings,
    })
}

/// Structure recovered from an LP file.
#[derive(Debug, Clone, PartialEq)]
pub struct LpFile {
    pub variables: Vec<String>,
    pub binaries: Vec<String>,
    pub bounded: Vec<String>,
    pub objective_terms: Vec<(String, f64)>,
    pub objective_constant: f64,
    pub constraints: Vec<(String, Vec<(String, f64)>, Sense, f64)>,
    pub warm_start: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binary,
    End,
}

fn parse_expression(tokens: &[&str], line: usize) -> Result<(Vec<(String, f64)>, f64), Error> {
    let err = |m: String| Error::LpParse { line, message: m };
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut k = 0;
    while k < tokens.len() {
        let mut sign = 1.0;
        if tokens[k] == "+" || tokens[k] == "-" {
            if tokens[k] == "-" {
                sign = -1.0;
            }
            k += 1;
        }
        let tok = *tokens.get(k).ok_or_else(|| err("dangling sign".into()))?;
        if let Ok(c) = tok.parse::<f64>() {
            match tokens.get(k + 1) {
                Some(next) if *next != "+" && *next != "-" => {
                    terms.push((next.to_string(), sign * c));
                    k += 2;
                }
                _ => {
                    constant += sign * c;
                    k += 1;
                }
            }
        } else {
            terms.push((tok.to_string(), sign));
            k += 1;
        }
    }
    Ok((terms, constant))
}

/// Parses LP text in the dialect produced by [`write_lp`].
pub fn parse_lp(text: &str) -> Result<LpFile, Error> {
    let mut file = LpFile {
        variables: Vec::new(),
        binaries: Vec::new(),
        bounded: Vec::new(),
        objective_terms: Vec::new(),
        objective_constant: 0.0,
        constraints: Vec::new(),
        warm_start: Vec::new(),
    };
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut note = |name: &str, file: &mut LpFile| {
        if seen.insert(name.to_string(), ()).is_none() {
            file.variables.push(name.to_string());
        }
    };
    let mut section = Section::Preamble;
    // logical lines: continuation lines start with whitespace and a sign
    let mut logical: Vec<(usize, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if let Some(c) = trimmed.strip_prefix('\\') {
            if let Some(rest) = c.trim().strip_prefix("start ") {
                let name = rest.split_whitespace().next().unwrap_or_default();
                file.warm_start.push(name.to_string());
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if (trimmed.starts_with('+') || trimmed.starts_with('-')) && raw.starts_with(' ') {
            if let Some(last) = logical.last_mut() {
                last.1.push(' ');
                last.1.push_str(trimmed);
                continue;
            }
        }
        logical.push((n + 1, trimmed.to_string()));
    }
    for (line, content) in logical {
        let err = |m: String| Error::LpParse { line, message: m };
        match content.to_ascii_lowercase().as_str() {
            "minimize" => {
                section = Section::Objective;
                continue;
            }
            "subject to" => {
                section = Section::Constraints;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "binary" => {
                section = Section::Binary;
                continue;
            }
            "end" => {
                section = Section::End;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble | Section::End => return Err(err(format!("unexpected content `{content}`"))),
            Section::Objective => {
                let body = content.split_once(':').map_or(content.as_str(), |(_, b)| b);
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let (terms, c) = parse_expression(&tokens, line)?;
                for (v, _) in &terms {
                    note(v, &mut file);
                }
                file.objective_terms.extend(terms);
                file.objective_constant += c;
            }
            Section::Constraints => {
                let (name, body) = content.split_once(':').ok_or_else(|| err("constraint without a name".into()))?;
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let at = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| err("constraint without a relation".into()))?;
                let sense = match tokens[at] {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs: f64 = tokens
                    .get(at + 1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("missing right-hand side".into()))?;
                let (terms, c) = parse_expression(&tokens[..at], line)?;
                if c != 0.0 {
                    return Err(err("constant on the left-hand side".into()));
                }
                for (v, _) in &terms {
                    note(v, &mut file);
                }
                file.constraints.push((name.trim().to_string(), terms, sense, rhs));
            }
            Section::Bounds => {
                let name = content.split_whitespace().next().ok_or_else(|| err("empty bound".into()))?;
                note(name, &mut file);
                file.bounded.push(name.to_string());
            }
            Section::Binary => {
                for name in content.split_whitespace() {
                    note(name, &mut file);
                    file.binaries.push(name.to_string());
                }
            }
        }
    }
    if section != Section::End {
        return Err(Error::LpParse { line: text.lines().count(), message: "missing End".into() });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{UtilityKind, UtilitySpec};
    use crate::expr::Expr;
    use crate::geometry::{Norm, Point, Polygon, Rect, Shape};
    use crate::grid::{DiscretizationInput, Grid};

    fn square(side: f64) -> Shape {
        let h = side / 2.0;
        Shape::polygon(vec![Point::new(-h, -h), Point::new(h, -h), Point::new(h, h), Point::new(-h, h)]).unwrap()
    }

    fn instance(n: usize, shapes: &[Shape], install: &str) -> DiscretizedInstance {
        let region = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        DiscretizedInstance::build(DiscretizationInput {
            region: &region,
            grid: Grid::new(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), n, n).unwrap(),
            shapes,
            demand: &Expr::parse("1", &["x", "y"]).unwrap(),
            install: &Expr::parse(install, &["x", "y"]).unwrap(),
            quadrature_order: 2,
            eps: 1e-9,
        })
        .unwrap()
    }

    fn fixture_facilities(shapes: &[Shape], a: &[f64]) -> Vec<Facility> {
        shapes
            .iter()
            .zip(a)
            .map(|(s, a)| {
                Facility::new(
                    s.clone(),
                    *a,
                    UtilitySpec::linear(UtilityKind::NormToRoot(Norm::L2)),
                    PiecewiseLinear::zero(),
                    PiecewiseLinear::identity(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn two_by_two_enumeration() {
        let shapes = [square(0.1), square(0.1)];
        let di = instance(2, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[0.0001, 0.1]);
        let lost = PiecewiseLinear::identity();
        let ev = Evaluator::new(&di, &facs, &lost);
        let (p, e) = enumerate_exact(&ev, DEFAULT_LIMIT).unwrap();
        assert!(e.total <= 1.0);
        // brute force over the 16 tuples
        let mut best: Option<(f64, Placement)> = None;
        for a in di.cells() {
            for b in di.cells() {
                let q = Placement(vec![*a, *b]);
                if let Ok(v) = ev.objective(&q) {
                    if best.as_ref().map_or(true, |(t, bp)| v.total < *t || (v.total == *t && q < *bp)) {
                        best = Some((v.total, q));
                    }
                }
            }
        }
        assert_eq!(best.unwrap(), (e.total, p));
    }

    #[test]
    fn enumeration_errors() {
        let shapes = [square(0.8), square(0.8)];
        let di = instance(4, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[1.0, 2.0]);
        let lost = PiecewiseLinear::identity();
        let ev = Evaluator::new(&di, &facs, &lost);
        assert!(matches!(enumerate_exact(&ev, DEFAULT_LIMIT), Err(Error::Infeasible)));
        let shapes = [square(0.05), square(0.05)];
        let di = instance(10, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[1.0, 2.0]);
        let ev = Evaluator::new(&di, &facs, &lost);
        match enumerate_exact(&ev, 1000) {
            Err(Error::SizeLimit { product, limit: 1000 }) => assert_eq!(product, 10_000.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn big_m_matches_table() {
        let shapes = [square(0.1), square(0.2)];
        let di = instance(5, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[0.3, 0.4]);
        let m = compute_big_m(&di, &facs).unwrap();
        let mut brute = f64::NEG_INFINITY;
        for i in 0..2 {
            for at in di.feasible(i) {
                for c in di.cells() {
                    brute = brute.max(crate::evaluate::unit_utility(&di, &facs, i, *at, *c).unwrap());
                }
            }
        }
        assert_eq!(m, brute);
        assert!(m <= 2f64.sqrt());
        // farthest pair: corner centres of the 5x5 grid, only reachable by the smaller square
        assert!((m - (0.8f64 * 0.8 * 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_big_m() {
        let shapes = [square(0.1)];
        let di = instance(3, &shapes, "0");
        let f = Facility::new(
            shapes[0].clone(),
            0.5,
            UtilitySpec::new(UtilityKind::NormToRoot(Norm::L1), Expr::parse("0", &["t"]).unwrap()).unwrap(),
            PiecewiseLinear::zero(),
            PiecewiseLinear::zero(),
        )
        .unwrap();
        assert_eq!(compute_big_m(&di, &[f]).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_export_counts() {
        let shapes = [square(0.1), square(0.1)];
        let di = instance(2, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[0.0001, 0.1]);
        let lost = PiecewiseLinear::identity();
        let ev = Evaluator::new(&di, &facs, &lost);
        let model = build_milp(&ev).unwrap();
        assert_eq!(model.count_rows("A3"), 2);
        assert_eq!(model.count_rows("A4"), 4);
        assert_eq!(model.count_rows("A5"), 8);
        assert_eq!(model.count_rows("A6L"), 8);
        assert_eq!(model.count_rows("A6U"), 8);
        // identity and zero costs are affine: no linearization rows or binaries
        assert_eq!(model.count_rows("PL"), 0);
        assert_eq!(model.num_binaries(), 8 + 8);
        let text = write_lp(&model, None);
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.variables.len(), model.variables.len());
        assert_eq!(parsed.binaries.len(), model.num_binaries());
        assert_eq!(parsed.constraints.len(), model.constraints.len());
        assert!(!text.contains("pl_"));
    }

    #[test]
    fn round_trip_preserves_coefficients() {
        let shapes = [square(0.1), square(0.2)];
        let di = instance(4, &shapes, "1");
        let mut facs = fixture_facilities(&shapes, &[0.2, 0.3]);
        facs[0].congestion_cost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.2, 0.2), (1.0, 8.2)]).unwrap();
        facs[1].congestion_cost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.3, 1.0), (1.0, 1.2)]).unwrap();
        facs[1].install_cost = PiecewiseLinear::constant(0.7).unwrap();
        let lost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.5, 0.1), (0.6, 2.0)]).unwrap();
        let ev = Evaluator::new(&di, &facs, &lost);
        let model = build_milp(&ev).unwrap();
        assert!(model.count_rows("PL_C00_epi") == 2);
        assert!(model.count_rows("PL_C01_seg") == 2);
        // lost demand beyond 0.6 is clamped by a flat extra segment
        assert!(model.count_rows("PL_L_seg") == 3);
        let text = write_lp(&model, Some(&["t_00_01_01".to_string()]));
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.warm_start, vec!["t_00_01_01".to_string()]);
        assert_eq!(parsed.constraints.len(), model.constraints.len());
        for (c, (name, terms, sense, rhs)) in model.constraints.iter().zip(&parsed.constraints) {
            assert_eq!(&c.name, name);
            assert_eq!(c.sense, *sense);
            assert_eq!(c.rhs, *rhs);
            let mine: Vec<(String, f64)> =
                c.terms.iter().filter(|t| t.1 != 0.0).map(|&(v, a)| (model.variables[v].name.clone(), a)).collect();
            if !mine.is_empty() {
                assert_eq!(&mine, terms);
            }
        }
        assert_eq!(parsed.objective_constant, model.objective_constant);
    }

    #[test]
    fn model_agrees_with_objective() {
        let shapes = [square(0.1), square(0.2)];
        let di = instance(5, &shapes, "x + 1");
        let mut facs = fixture_facilities(&shapes, &[0.2, 0.3]);
        facs[0].congestion_cost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.2, 0.2), (1.0, 8.2)]).unwrap();
        facs[1].congestion_cost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.3, 1.0), (1.0, 1.2)]).unwrap();
        facs[0].install_cost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.05, 1.0), (0.1, 1.1)]).unwrap();
        let lost = PiecewiseLinear::new(vec![(0.0, 0.0), (0.1, 0.1), (0.6, 2.0)]).unwrap();
        let ev = Evaluator::new(&di, &facs, &lost);
        let model = build_milp(&ev).unwrap();
        let mut checked = 0;
        for a in di.feasible(0) {
            for b in di.feasible(1) {
                let p = Placement(vec![*a, *b]);
                if di.check_placement(&p).is_err() {
                    continue;
                }
                let check = evaluate_model_at_placement(&model, &ev, &p).unwrap();
                assert_eq!(check.violation, None, "{p}");
                assert!((check.model_objective - check.objective).abs() < 1e-9, "{p}: {check:?}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn overlapping_placements_violate_cover_rows() {
        let shapes = [square(0.2), square(0.2)];
        let di = instance(5, &shapes, "0");
        let facs = fixture_facilities(&shapes, &[0.2, 0.3]);
        let lost = PiecewiseLinear::identity();
        let ev = Evaluator::new(&di, &facs, &lost);
        let model = build_milp(&ev).unwrap();
        let p = Placement(vec![CellIndex::new(2, 2), CellIndex::new(2, 2)]);
        let x = point_for_unchecked_placement(&model, &ev, &p).unwrap();
        let (name, _) = model.worst_violation(&x, 1e-9).unwrap();
        assert!(name.starts_with("A4_"), "{name}");
    }

    #[test]
    fn lp_reader_errors() {
        assert!(matches!(parse_lp("Minimize\n obj: x\nSubject To\n c1: x + y\nEnd\n"), Err(Error::LpParse { line: 4, .. })));
        assert!(parse_lp("Minimize\n obj: x\n").is_err());
    }
}
