//! JSON instance configuration (schema version 1).

use std::path::Path;

use dimfac::grasp::GraspParams;
use dimfac::{
    DiscretizationInput, DiscretizedInstance, Expr, Facility, Grid, Norm, PiecewiseLinear, Point, Polygon, Rect,
    Shape, UtilityKind, UtilitySpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub version: u32,
    /// Region vertices, counter-clockwise or clockwise.
    pub region: Vec<[f64; 2]>,
    pub grid: GridConfig,
    pub densities: DensityConfig,
    pub lost_cost: PlConfig,
    pub facilities: Vec<FacilityConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quadrature_order: Option<usize>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// `[x_lo, x_hi, y_lo, y_hi]`; defaults to the region's bounding box.
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Demand density in `x`, `y`.
    pub demand: String,
    /// Installation density in `x`, `y`.
    pub install: String,
}

/// Either explicit breakpoints or an expression in `t` sampled at the
/// given abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    /// Vertices relative to the root point.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Regular polygon centred on the root.
    Regular { n: usize, radius: f64, #[serde(default)] phase: f64 },
    /// Axis-aligned rectangle centred on the root.
    Rectangle { width: f64, height: f64 },
    Ellipse { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NormConfig {
    L1,
    L2,
    Linf,
    WeightedL2 { wx: f64, wy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKindConfig {
    NormToRoot,
    Gauge,
    MaxDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub kind: UtilityKindConfig,
    /// Required for `norm_to_root` and `max_distance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormConfig>,
    /// Gauge only; defaults to `true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamped: Option<bool>,
    /// Scaling function in `t`; defaults to `t`.
    #[serde(default)]
    pub scale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacilityConfig {
    pub shape: ShapeConfig,
    pub access_cost: f64,
    pub utility: UtilityConfig,
    pub install_cost: PlConfig,
    pub congestion_cost: PlConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspConfig {
    pub psi: Option<usize>,
    pub varpi: Option<usize>,
    pub lambda: Option<f64>,
    pub vartheta: Option<f64>,
    pub upsilon1: Option<usize>,
    pub upsilon2: Option<usize>,
    pub epsilon_ball: Option<f64>,
    pub delta_k: Option<usize>,
    pub delta_l: Option<usize>,
    pub max_outer: Option<usize>,
    pub max_restarts: Option<usize>,
    pub construction_attempts: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub grasp: GraspConfig,
    #[serde(default)]
    pub exact_limit: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema { path: path.into(), message: message.into() }
}

fn point(p: &[f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

impl PlConfig {
    fn build(&self, path: &str) -> Result<PiecewiseLinear, CliError> {
        let pl = match (&self.breakpoints, &self.expr, &self.samples) {
            (Some(bps), None, None) => PiecewiseLinear::new(bps.iter().map(|b| (b[0], b[1])).collect()),
            (None, Some(e), Some(samples)) => {
                let f = Expr::parse(e, &["t"]).map_err(|e| schema(format!("{path}.expr"), e.to_string()))?;
                PiecewiseLinear::from_expr(&f, samples)
            }
            _ => return Err(schema(path, "give either `breakpoints` or both `expr` and `samples`")),
        };
        pl.map_err(|e| schema(path, e.to_string()))
    }
}

impl NormConfig {
    fn build(&self, path: &str) -> Result<Norm, CliError> {
        Ok(match *self {
            NormConfig::L1 => Norm::L1,
            NormConfig::L2 => Norm::L2,
            NormConfig::Linf => Norm::LInf,
            NormConfig::WeightedL2 { wx, wy } => Norm::weighted_l2(wx, wy).map_err(|e| schema(path, e.to_string()))?,
        })
    }
}

impl ShapeConfig {
    fn build(&self, path: &str) -> Result<Shape, CliError> {
        let shape = match self {
            ShapeConfig::Polygon { vertices } => Shape::polygon(vertices.iter().map(point).collect()),
            ShapeConfig::Regular { n, radius, phase } => Shape::regular_polygon(*n, *radius, *phase),
            ShapeConfig::Rectangle { width, height } => {
                let (w, h) = (width / 2.0, height / 2.0);
                Shape::polygon(vec![Point::new(-w, -h), Point::new(w, -h), Point::new(w, h), Point::new(-w, h)])
            }
            ShapeConfig::Ellipse { a, b } => Shape::ellipse(*a, *b),
        };
        shape.map_err(|e| schema(path, e.to_string()))
    }
}

impl UtilityConfig {
    fn build(&self, path: &str) -> Result<UtilitySpec, CliError> {
        let norm = |n: &Option<NormConfig>| -> Result<Norm, CliError> {
            n.as_ref()
                .ok_or_else(|| schema(format!("{path}.norm"), "required for this utility kind"))?
                .build(&format!("{path}.norm"))
        };
        let kind = match self.kind {
            UtilityKindConfig::NormToRoot => UtilityKind::NormToRoot(norm(&self.norm)?),
            UtilityKindConfig::MaxDistance => UtilityKind::MaxDistance(norm(&self.norm)?),
            UtilityKindConfig::Gauge => {
                if self.norm.is_some() {
                    return Err(schema(format!("{path}.norm"), "the gauge utility takes no norm"));
                }
                UtilityKind::Gauge { clamped: self.clamped.unwrap_or(true) }
            }
        };
        if self.kind != UtilityKindConfig::Gauge && self.clamped.is_some() {
            return Err(schema(format!("{path}.clamped"), "only the gauge utility can be clamped"));
        }
        let text = self.scale.as_deref().unwrap_or("t");
        let scale = Expr::parse(text, &["t"]).map_err(|e| schema(format!("{path}.scale"), e.to_string()))?;
        UtilitySpec::new(kind, scale).map_err(|e| schema(format!("{path}.scale"), e.to_string()))
    }
}

/// Everything needed to run a solver on one instance.
pub struct Instance {
    pub config: InstanceConfig,
    pub digest: String,
    pub di: DiscretizedInstance,
    pub facilities: Vec<Facility>,
    pub lost_cost: PiecewiseLinear,
    pub grasp: GraspParams,
    pub exact_limit: u64,
    pub warnings: Vec<String>,
}

impl InstanceConfig {
    pub fn from_json(text: &str) -> Result<InstanceConfig, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: InstanceConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        if cfg.version != SCHEMA_VERSION {
            return Err(schema("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.version)));
        }
        if cfg.facilities.is_empty() {
            return Err(schema("facilities", "at least one facility is required"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<InstanceConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        InstanceConfig::from_json(&text)
    }

    /// Fills every defaulted field with its value.
    pub fn normalized(&self) -> InstanceConfig {
        let mut c = self.clone();
        if c.grid.bbox.is_none() {
            if let Some(r) = Rect::bounding(c.region.iter().map(point)) {
                c.grid.bbox = Some([r.x_lo, r.x_hi, r.y_lo, r.y_hi]);
            }
        }
        let d = GraspParams::default();
        let g = &mut c.solver.grasp;
        g.psi.get_or_insert(d.psi);
        g.varpi.get_or_insert(d.varpi);
        g.lambda.get_or_insert(d.lambda);
        g.vartheta.get_or_insert(d.vartheta);
        g.upsilon1.get_or_insert(d.upsilon1);
        g.upsilon2.get_or_insert(d.upsilon2);
        g.delta_k.get_or_insert(d.delta_k);
        g.delta_l.get_or_insert(d.delta_l);
        g.max_restarts.get_or_insert(d.max_restarts);
        g.construction_attempts.get_or_insert(d.construction_attempts);
        c.solver.exact_limit.get_or_insert(dimfac::exact::DEFAULT_LIMIT);
        c.solver.seed.get_or_insert(0);
        c.quadrature_order.get_or_insert(4);
        c.eps.get_or_insert(1e-9);
        for f in &mut c.facilities {
            f.utility.scale.get_or_insert_with(|| "t".into());
            if f.utility.kind == UtilityKindConfig::Gauge {
                f.utility.clamped.get_or_insert(true);
            }
        }
        c
    }

    /// SHA-256 of the normalized configuration, used to tie solution files
    /// to their instance.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(&self.normalized()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn grasp_params(&self) -> GraspParams {
        let n = self.normalized();
        let g = &n.solver.grasp;
        GraspParams {
            psi: g.psi.unwrap(),
            varpi: g.varpi.unwrap(),
            lambda: g.lambda.unwrap(),
            vartheta: g.vartheta.unwrap(),
            upsilon1: g.upsilon1.unwrap(),
            upsilon2: g.upsilon2.unwrap(),
            epsilon_ball: g.epsilon_ball,
            delta_k: g.delta_k.unwrap(),
            delta_l: g.delta_l.unwrap(),
            max_outer: g.max_outer,
            rng_seed: n.solver.seed.unwrap(),
            max_restarts: g.max_restarts.unwrap(),
            construction_attempts: g.construction_attempts.unwrap(),
        }
    }

    /// Validates the configuration and discretizes the instance.
    pub fn build(&self) -> Result<Instance, CliError> {
        let c = self.normalized();
        let region = Polygon::new(c.region.iter().map(point).collect()).map_err(|e| schema("region", e.to_string()))?;
        let b = c.grid.bbox.expect("normalized");
        let bbox = Rect::new(b[0], b[1], b[2], b[3]).ok_or_else(|| schema("grid.bbox", "expected x_lo < x_hi and y_lo < y_hi"))?;
        let grid = Grid::new(bbox, c.grid.nx, c.grid.ny).map_err(|e| schema("grid", e.to_string()))?;
        let demand = Expr::parse(&c.densities.demand, &["x", "y"]).map_err(|e| schema("densities.demand", e.to_string()))?;
        let install =
            Expr::parse(&c.densities.install, &["x", "y"]).map_err(|e| schema("densities.install", e.to_string()))?;
        let lost_cost = c.lost_cost.build("lost_cost")?;
        let mut facilities = Vec::with_capacity(c.facilities.len());
        let mut warnings = Vec::new();
        let diameter = bbox.width().hypot(bbox.height());
        for (i, f) in c.facilities.iter().enumerate() {
            let path = format!("facilities[{i}]");
            let shape = f.shape.build(&format!("{path}.shape"))?;
            let utility = f.utility.build(&format!("{path}.utility"))?;
            if let Some(w) = utility.monotonicity_warning(2.0 * diameter, 256) {
                warnings.push(format!("{path}.utility: {w}"));
            }
            let install_cost = f.install_cost.build(&format!("{path}.install_cost"))?;
            let congestion_cost = f.congestion_cost.build(&format!("{path}.congestion_cost"))?;
            let fac = Facility::new(shape, f.access_cost, utility, install_cost, congestion_cost)
                .map_err(|e| schema(path.clone(), e.to_string()))?;
            facilities.push(fac);
        }
        let grasp = c.grasp_params();
        grasp.validate().map_err(|e| schema("solver.grasp", e.to_string()))?;
        let shapes: Vec<Shape> = facilities.iter().map(|f| f.shape.clone()).collect();
        let di = DiscretizedInstance::build(DiscretizationInput {
            region: &region,
            grid,
            shapes: &shapes,
            demand: &demand,
            install: &install,
            quadrature_order: c.quadrature_order.unwrap(),
            eps: c.eps.unwrap(),
        })?;
        Ok(Instance {
            digest: self.digest(),
            exact_limit: c.solver.exact_limit.unwrap(),
            config: c,
            di,
            facilities,
            lost_cost,
            grasp,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIXTURE: &str = r#"{
      "version": 1,
      "region": [[0,0],[1,0],[1,1],[0,1]],
      "grid": {"nx": 2, "ny": 2},
      "densities": {"demand": "1", "install": "0"},
      "lost_cost": {"breakpoints": [[0,0],[1,1]]},
      "facilities": [
        {"shape": {"type": "rectangle", "width": 0.1, "height": 0.1}, "access_cost": 0.0001,
         "utility": {"kind": "norm_to_root", "norm": "l2"},
         "install_cost": {"breakpoints": [[0,0],[1,0]]},
         "congestion_cost": {"expr": "t", "samples": [0, 1]}},
        {"shape": {"type": "rectangle", "width": 0.1, "height": 0.1}, "access_cost": 0.1,
         "utility": {"kind": "norm_to_root", "norm": "l2", "scale": "t"},
         "install_cost": {"breakpoints": [[0,0],[1,0]]},
         "congestion_cost": {"breakpoints": [[0,0],[1,1]]}}
      ]
    }"#;

    #[test]
    fn fixture_builds() {
        let inst = InstanceConfig::from_json(FIXTURE).unwrap().build().unwrap();
        assert_eq!(inst.di.n_cells(), 4);
        assert_eq!(inst.facilities.len(), 2);
        assert_eq!(inst.grasp, GraspParams::default());
    }

    #[test]
    fn normalization_is_a_fixed_point() {
        let cfg = InstanceConfig::from_json(FIXTURE).unwrap();
        let once = cfg.normalized();
        let text = serde_json::to_string_pretty(&once).unwrap();
        let again = InstanceConfig::from_json(&text).unwrap();
        assert_eq!(again, once);
        assert_eq!(again.normalized(), once);
        assert_eq!(again.digest(), cfg.digest());
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = FIXTURE.replace("\"access_cost\": 0.1", "\"access_cost\": \"cheap\"");
        match InstanceConfig::from_json(&bad) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "facilities[1].access_cost"),
            other => panic!("{other:?}"),
        }
        let bad = FIXTURE.replace("{\"expr\": \"t\", \"samples\": [0, 1]}", "{\"expr\": \"1-t\", \"samples\": [0, 1]}");
        match InstanceConfig::from_json(&bad).unwrap().build() {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "facilities[0].congestion_cost"),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("accepted a decreasing cost"),
        }
        let bad = FIXTURE.replace("\"norm\": \"l2\"}", "\"nrm\": \"l2\"}");
        assert!(matches!(InstanceConfig::from_json(&bad), Err(CliError::Schema { .. })));
    }

    #[test]
    fn empty_facility_list_is_rejected() {
        let start = FIXTURE.find("\"facilities\"").unwrap();
        let text = format!("{}\"facilities\": []}}", &FIXTURE[..start]);
        match InstanceConfig::from_json(&text) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "facilities"),
            other => panic!("{other:?}"),
        }
    }
}
