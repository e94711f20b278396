//! Config-driven experiment runner behind the `keldysh-lab` binary.
//!
//! A config is a TOML file:
//!
//! ```toml
//! experiment = "ibp"
//! seed = 42
//! grids = [33, 65, 129]
//!
//! [K]
//! kind = "power"
//! k0 = 1
//!
//! [domain]
//! a = 0.0
//! b = 2.0
//! d = 1.0
//!
//! [operator]
//! form = "general"
//! k = 0.5
//!
//! [output]
//! dir = "out/ibp"
//! formats = ["csv", "json", "dat"]
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::abc::{
    certify, energy_inequality_check, make_multiplier, poincare_constant, poincare_ratio, verify_ibp,
    LinearMultiplier, Multiplier,
};
use crate::error::{LabError, Result};
use crate::fields::TestField;
use crate::geometry::{build_domain, trace_characteristic, Branch, CharacteristicPath, Point, Rect, Region};
use crate::grid::{Grid, GridField};
use crate::io::{Cell, Table};
use crate::operators::{Form, OperatorSpec};
use crate::solver::{
    bspline_basis, box_inside, distribution_solve, heldout_tests, homogeneous_open_experiment, max_principle_check,
    max_principle_experiment, mixed_dn_experiment, overdeterminacy_experiment, solve_lsq, sup_inside, BoundaryData,
    BoundaryFn, CharData, LadderRow, LsqOptions,
};
use crate::typechange::{make_power, make_sgn, validate, TypeChangeFn};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// A sup norm below this fraction of the starting one counts as converged to zero.
pub const ROUNDOFF_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Validate,
    Trace,
    Ibp,
    Energy,
    Poincare,
    Open,
    Closed,
    MixedDn,
    Maxprinciple,
    Dual,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Validate,
        Experiment::Trace,
        Experiment::Ibp,
        Experiment::Energy,
        Experiment::Poincare,
        Experiment::Open,
        Experiment::Closed,
        Experiment::MixedDn,
        Experiment::Maxprinciple,
        Experiment::Dual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Trace => "trace",
            Experiment::Ibp => "ibp",
            Experiment::Energy => "energy",
            Experiment::Poincare => "poincare",
            Experiment::Open => "open",
            Experiment::Closed => "closed",
            Experiment::MixedDn => "mixed_dn",
            Experiment::Maxprinciple => "maxprinciple",
            Experiment::Dual => "dual",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Validate => "sampled check of K(0) = 0 and x K(x) > 0",
            Experiment::Trace => "characteristic tracing and the apex of the mixed domain",
            Experiment::Ibp => "multiplier integration-by-parts identity, gap vs h",
            Experiment::Energy => "multiplier certificates and the energy inequality chain",
            Experiment::Poincare => "weighted Poincaré constant, stability under refinement",
            Experiment::Open => "uniqueness for the open Dirichlet problem",
            Experiment::Closed => "over-determinacy of the closed Dirichlet problem",
            Experiment::MixedDn => "uniqueness for the mixed Dirichlet-Neumann problem",
            Experiment::Maxprinciple => "maximum principle on the elliptic part",
            Experiment::Dual => "distribution solutions by a dual least-squares solve",
        }
    }

    pub fn reproduces(self) -> &'static str {
        match self {
            Experiment::Validate => "type-change conditions",
            Experiment::Trace => "characteristic geometry",
            Experiment::Ibp => "integration-by-parts identity",
            Experiment::Energy => "multiplier lemma inequality chain",
            Experiment::Poincare => "weighted Poincaré inequality",
            Experiment::Open => "uniqueness of the open problem",
            Experiment::Closed => "closed-problem over-determinacy",
            Experiment::MixedDn => "mixed Dirichlet-Neumann uniqueness",
            Experiment::Maxprinciple => "elliptic maximum principle",
            Experiment::Dual => "existence of distribution solutions",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KKind {
    Power,
    Sgn,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KConfig {
    pub kind: KKind,
    pub k0: Option<u32>,
}

impl KConfig {
    pub fn build(&self) -> Result<TypeChangeFn> {
        match (self.kind, self.k0) {
            (KKind::Power, Some(k0)) => make_power(k0),
            (KKind::Power, None) => Err(LabError::Config("K.k0 is required for kind = \"power\"".into())),
            (KKind::Sgn, _) => Ok(make_sgn()),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    /// `[x0, x1, y0, y1]`; replaces the mixed domain with a rectangle.
    pub rect: Option<[f64; 4]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormKind {
    #[default]
    Loword,
    Kappa,
    General,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default)]
    pub form: FormKind,
    pub kappa: Option<f64>,
    pub k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DeltaSetting {
    Value(f64),
    Word(String),
}

impl Default for DeltaSetting {
    fn default() -> Self {
        DeltaSetting::Word("auto".into())
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    #[serde(default)]
    pub delta: DeltaSetting,
}

/// Requested `δ` when the config says `auto`; the multiplier shrinks it as needed.
pub const AUTO_DELTA: f64 = 0.25;

impl MultiplierConfig {
    pub fn delta(&self) -> Result<f64> {
        match &self.delta {
            DeltaSetting::Value(v) => Ok(*v),
            DeltaSetting::Word(w) if w == "auto" => Ok(AUTO_DELTA),
            DeltaSetting::Word(w) => Err(LabError::Config(format!("multiplier.delta: expected a number or \"auto\", got {w:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Dat,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), formats: default_formats() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_seed() -> u64 {
    42
}

/// Data on the characteristics for the closed problem: a constant, `"trace"` or `"exact"`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CharSetting {
    Value(f64),
    Word(String),
}

/// Experiment-specific knobs; every one has a default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Manufactured or test field by name.
    pub field: Option<String>,
    pub g_char: Option<CharSetting>,
    /// Basis levels of the dual solve.
    pub levels: Option<Vec<u32>>,
    /// Level whose margin the held-out tests keep; defaults to one above the coarsest.
    pub heldout_level: Option<u32>,
    pub trials: Option<usize>,
    pub start: Option<[f64; 2]>,
    pub branch: Option<String>,
    pub y_stop: Option<f64>,
    /// Constant `C` of the maximum principle tolerance `C (h² + residual)`.
    pub c_tol: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub grids: Vec<usize>,
    #[serde(rename = "K")]
    pub k: KConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub multiplier: MultiplierConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    fn check(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(LabError::Config("grids: at least one grid size is required".into()));
        }
        if let Some(&n) = self.grids.iter().find(|&&n| n < 5) {
            return Err(LabError::Config(format!("grids: size {n} is below the minimum of 5")));
        }
        if self.grids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Config(format!("grids: {:?} is not strictly increasing", self.grids)));
        }
        if let Some(r) = self.domain.rect {
            Rect::new(r[0], r[1], r[2], r[3]).map_err(|e| LabError::Config(format!("domain.rect: {e}")))?;
        }
        self.multiplier.delta()?;
        self.k.build().map_err(|e| LabError::Config(format!("K: {e}")))?;
        if let Some(b) = &self.params.branch {
            b.parse::<Branch>().map_err(|e| LabError::Config(format!("params.branch: {e}")))?;
        }
        if let Some(f) = &self.params.field {
            field_by_name(f).ok_or_else(|| LabError::Config(format!("params.field: unknown field {f:?}")))?;
        }
        if let Some(CharSetting::Word(w)) = &self.params.g_char {
            if w != "trace" && w != "exact" {
                return Err(LabError::Config(format!("params.g_char: expected a number, \"trace\" or \"exact\", got {w:?}")));
            }
        }
        let needs_ladder = matches!(
            self.experiment,
            Experiment::Ibp | Experiment::Poincare | Experiment::Open | Experiment::Closed | Experiment::MixedDn
        );
        if needs_ladder && self.grids.len() < 2 {
            return Err(LabError::Config(format!("grids: {} needs at least two grid sizes", self.experiment)));
        }
        Ok(())
    }

    pub fn type_change(&self) -> Result<TypeChangeFn> {
        self.k.build()
    }

    /// The rectangle if one is given, else the mixed domain.
    pub fn region(&self) -> Result<Region> {
        match self.domain.rect {
            Some(r) => Ok(Rect::new(r[0], r[1], r[2], r[3])?.into()),
            None => Ok(build_domain(&self.type_change()?, self.domain.a, self.domain.b, self.domain.d)?.into()),
        }
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        let k = self.type_change()?;
        match self.operator.form {
            FormKind::Loword => Ok(OperatorSpec::loword(&k)),
            FormKind::Kappa => {
                let kappa = self.operator.kappa.ok_or_else(|| LabError::Config("operator.kappa is required for form = \"kappa\"".into()))?;
                OperatorSpec::kappa(kappa)
            }
            FormKind::General => {
                let kk = self.operator.k.ok_or_else(|| LabError::Config("operator.k is required for form = \"general\"".into()))?;
                OperatorSpec::general(&k, kk)
            }
        }
    }
}

/// Test fields selectable from a config.
pub fn field_by_name(name: &str) -> Option<TestField> {
    Some(match name {
        "xy" => TestField::xy(),
        "x2y" => TestField::x2y(),
        "sin_sin" => TestField::sin_sin(),
        "exp_cos" => TestField::exp_cos(),
        "wave" => TestField::wave(),
        "cubic" => TestField::cubic(),
        "gaussian" => TestField::gaussian(-0.2, 0.3, 0.8),
        _ => return None,
    })
}

/// Table of experiment names, descriptions and the result each reproduces.
pub fn list_experiments() -> String {
    let mut out = format!("{:<14}{:<60}{}\n", "name", "description", "reproduces");
    for e in Experiment::ALL {
        out.push_str(&format!("{:<14}{:<60}{}\n", e.name(), e.description(), e.reproduces()));
    }
    out
}

/// What an experiment produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub report: Value,
    pub pass: bool,
    /// Extra gnuplot files, by stem.
    pub dat: Vec<(String, Table)>,
}

/// `log₂(e_i / e_{i+1})` for successive entries.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Each step at least halves `values`, unless the value is already below
/// `ROUNDOFF_FLOOR · start`.
pub fn halves_or_floored(values: &[f64], start: f64) -> bool {
    values.windows(2).all(|w| w[1] <= 0.5 * w[0] || w[1] <= ROUNDOFF_FLOOR * start)
}

fn order_cells(orders: &[f64], i: usize) -> Cell {
    if i == 0 {
        Cell::Float(f64::NAN)
    } else {
        Cell::Float(orders[i - 1])
    }
}

fn ladder_table(rows: &[LadderRow]) -> Table {
    let mut t = Table::new(&["n", "h", "sup_norm", "start_sup_norm", "residual_norm", "iterations", "converged"]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.h.into(),
            r.sup_norm.into(),
            r.start_sup_norm.into(),
            r.residual_norm.into(),
            r.iterations.into(),
            usize::from(r.converged).into(),
        ]);
    }
    t
}

fn run_validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let k = cfg.type_change()?;
    let (x0, x1) = match cfg.region() {
        Ok(r) => r.x_extent(),
        Err(_) => (-1.0, 1.0),
    };
    let (x0, x1) = if x0 < 0.0 && x1 > 0.0 { (x0, x1) } else { (-1.0, 1.0) };
    let mut t = Table::new(&["n", "violations", "flags", "admissible"]);
    let mut reports = Vec::new();
    let mut pass = true;
    for &n in &cfg.grids {
        let r = validate(&k, x0, x1, n)?;
        pass &= r.admissible();
        t.push(vec![n.into(), r.violations.len().into(), r.flags.len().into(), usize::from(r.admissible()).into()]);
        reports.push(json!({"n": n, "report": r}));
    }
    Ok(Outcome { table: t, report: json!({"K": k.label(), "interval": [x0, x1], "samples": reports}), pass, dat: vec![] })
}

fn run_trace(cfg: &ExperimentConfig) -> Result<Outcome> {
    let k = cfg.type_change()?;
    let [sx, sy] = cfg.params.start.unwrap_or([-1.0, 0.0]);
    let branch: Branch = cfg.params.branch.as_deref().unwrap_or("plus").parse()?;
    let y_stop = cfg.params.y_stop.unwrap_or(sy + 10.0 * branch.sign());
    let mut t = Table::new(&["n", "step", "end_x", "end_y", "vertices", "reached_sonic"]);
    let mut last: Option<CharacteristicPath> = None;
    let mut pass = true;
    for &n in &cfg.grids {
        let step = 1.0 / (n - 1) as f64;
        let path = trace_characteristic(&k, Point::new(sx, sy), branch, y_stop, step)?;
        let e = path.end();
        pass &= e.x.is_finite() && e.y.is_finite();
        t.push(vec![n.into(), step.into(), e.x.into(), e.y.into(), path.vertices.len().into(), usize::from(path.reached_sonic).into()]);
        last = Some(path);
    }
    let path = last.expect("grids is non-empty");
    let domain = match cfg.domain.rect {
        None => Some(build_domain(&k, cfg.domain.a, cfg.domain.b, cfg.domain.d)?.to_json()),
        Some(_) => None,
    };
    let mut dat = Table::new(&["x", "y"]);
    for p in &path.vertices {
        dat.push(vec![p.x.into(), p.y.into()]);
    }
    Ok(Outcome {
        table: t,
        report: json!({"K": k.label(), "start": [sx, sy], "branch": branch, "y_stop": y_stop, "end": path.end(), "domain": domain}),
        pass,
        dat: vec![("path".into(), dat)],
    })
}

fn run_ibp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let spec = cfg.operator()?;
    let field = field_by_name(cfg.params.field.as_deref().unwrap_or("exp_cos")).expect("checked field");
    let lemma;
    let linear = LinearMultiplier { a: -1.0, b: [0.5, 1.0, 0.0], c: [0.0, -0.5] };
    let (kk, m): (f64, &dyn Multiplier) = match spec.form {
        Form::Kappa(kappa) => {
            lemma = make_multiplier(&region, kappa, cfg.multiplier.delta()?)?;
            (2.0 - kappa, &lemma)
        }
        _ => (spec.k_value(), &linear),
    };
    let mut gaps = Vec::new();
    let mut reports = Vec::new();
    for &n in &cfg.grids {
        let g = Grid::new(region.clone(), n)?;
        let r = verify_ibp(&spec.k, kk, m, &field.sample(&g))?;
        gaps.push(r.gap);
        reports.push(r);
    }
    let orders = observed_orders(&gaps);
    let mut t = Table::new(&["n", "lhs", "rhs", "gap", "order"]);
    for (i, (&n, r)) in cfg.grids.iter().zip(&reports).enumerate() {
        t.push(vec![n.into(), r.lhs.into(), r.rhs.into(), r.gap.into(), order_cells(&orders, i)]);
    }
    let pass = orders.iter().all(|&o| o >= 1.9);
    Ok(Outcome {
        table: t,
        report: json!({"field": field.name(), "k": kk, "reports": reports, "orders": orders, "min_order": 1.9}),
        pass,
        dat: vec![],
    })
}

/// Compactly supported bumps inside `region`, from a fixed list of relative spots.
pub fn interior_bumps(region: &Region, count: usize) -> Vec<TestField> {
    let bb = region.bbox();
    let (w, h) = (bb.width(), bb.height());
    let spots = [(0.65, 0.5, 0.2, 0.2), (0.35, 0.5, 0.1, 0.1), (0.5, 0.6, 0.12, 0.06), (0.75, 0.25, 0.15, 0.15), (0.42, 0.4, 0.06, 0.06), (0.8, 0.75, 0.1, 0.1)];
    spots
        .iter()
        .filter_map(|&(fx, fy, fw, fh)| {
            let (cx, cy, rx, ry) = (bb.x0 + fx * w, bb.y0 + fy * h, fw * w, fh * h);
            box_inside(region, cx, cy, rx, ry, 0.02 * w.min(h)).then(|| TestField::smooth_bump(cx, cy, rx, ry))
        })
        .take(count)
        .collect()
}

fn run_energy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let kappa = match cfg.operator()?.form {
        Form::Kappa(k) => k,
        _ => return Err(LabError::Config("energy needs operator.form = \"kappa\"".into())),
    };
    let delta = cfg.multiplier.delta()?;
    let ms = make_multiplier(&region, kappa, delta)?;
    let bumps = interior_bumps(&region, 5);
    if bumps.is_empty() {
        return Err(LabError::InvalidDomain("no room for compactly supported test fields".into()));
    }
    let mut t = Table::new(&["n", "field", "delta_prime_seminorm", "pairing", "cauchy_schwarz", "constant", "pass"]);
    let mut certs = Vec::new();
    let mut pass = true;
    for &n in &cfg.grids {
        let g = Grid::new(region.clone(), n)?;
        let c = certify(&ms, &g)?;
        pass &= c.pass;
        certs.push(json!({"n": n, "certificates": c}));
        for (i, b) in bumps.iter().enumerate() {
            let r = energy_inequality_check(kappa, delta, &b.sample(&g), 1e-8)?;
            pass &= r.pass;
            t.push(vec![
                n.into(),
                Cell::Text(format!("bump{i}")),
                r.links[0].value.into(),
                r.links[1].value.into(),
                r.links[2].value.into(),
                r.constant.unwrap_or(f64::NAN).into(),
                usize::from(r.pass).into(),
            ]);
        }
    }
    Ok(Outcome { table: t, report: json!({"multiplier": ms, "certificates": certs}), pass, dat: vec![] })
}

/// Largest relative change between successive entries.
pub fn max_relative_change(values: &[f64]) -> f64 {
    values.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).fold(0.0, f64::max)
}

fn run_poincare(cfg: &ExperimentConfig) -> Result<Outcome> {
    let k = cfg.type_change()?;
    let rect = match cfg.domain.rect {
        Some(r) => Rect::new(r[0], r[1], r[2], r[3])?,
        None => Rect::unit_square(),
    };
    let trials = cfg.params.trials.unwrap_or(16);
    let mut t = Table::new(&["n", "h", "sine_ratio", "constant"]);
    let mut constants = Vec::new();
    for &n in &cfg.grids {
        let g = Grid::new(rect, n)?;
        let sine = poincare_ratio(&k, &TestField::sin_sin().sample(&g))?;
        let est = poincare_constant(&k, &rect, trials, cfg.seed, n)?;
        t.push(vec![n.into(), g.h().into(), sine.into(), est.constant.into()]);
        constants.push(est.constant);
    }
    let change = max_relative_change(&constants);
    Ok(Outcome {
        table: t,
        report: json!({"trials": trials, "seed": cfg.seed, "constants": constants, "max_relative_change": change, "limit": 0.01}),
        pass: change <= 0.01,
        dat: vec![],
    })
}

fn run_open(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let spec = cfg.operator()?;
    let Some(name) = &cfg.params.field else {
        let rows = homogeneous_open_experiment(&spec, &region, &cfg.grids, cfg.seed)?;
        let sups: Vec<f64> = rows.iter().map(|r| r.sup_norm).collect();
        let pass = halves_or_floored(&sups, rows[0].start_sup_norm);
        return Ok(Outcome { table: ladder_table(&rows), report: json!({"homogeneous": rows, "floor": ROUNDOFF_FLOOR}), pass, dat: vec![] });
    };
    let exact = field_by_name(name).expect("checked field");
    let mut t = Table::new(&["n", "h", "error", "residual_norm", "order"]);
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.grids {
        let g = Grid::new(region.clone(), n)?;
        let f = g.sample(|x, y| exact.apply(&spec, x, y));
        let ex = exact.clone();
        let data: BoundaryFn = Arc::new(move |p| ex.value(p.x, p.y));
        let sol = solve_lsq(&spec, &BoundaryData::open_dirichlet(data), &f, &LsqOptions::default())?;
        let err = sup_inside(&exact.sample(&g).zip(&sol.u, |a, b| a - b));
        errors.push(err);
        rows.push((n, g.h(), err, sol.residual_norm));
    }
    let orders = observed_orders(&errors);
    for (i, &(n, h, e, r)) in rows.iter().enumerate() {
        t.push(vec![n.into(), h.into(), e.into(), r.into(), order_cells(&orders, i)]);
    }
    let pass = errors.windows(2).zip(&orders).all(|(w, &o)| o >= 1.0 || w[1] <= ROUNDOFF_FLOOR);
    Ok(Outcome { table: t, report: json!({"field": name, "errors": errors, "orders": orders}), pass, dat: vec![] })
}

fn run_closed(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let spec = cfg.operator()?;
    let exact = field_by_name(cfg.params.field.as_deref().unwrap_or("exp_cos")).expect("checked field");
    let g_char = match cfg.params.g_char.clone().unwrap_or(CharSetting::Value(1.0)) {
        CharSetting::Value(v) => CharData::Constant(v),
        CharSetting::Word(w) if w == "trace" => CharData::OpenTrace,
        CharSetting::Word(_) => CharData::Exact,
    };
    let rep = overdeterminacy_experiment(&spec, &region, &exact, g_char, &cfg.grids)?;
    let ratios: Vec<f64> = rep.rows.iter().map(|r| r.ratio).collect();
    let pass = match g_char {
        CharData::Constant(_) => ratios.windows(2).all(|w| w[1] >= 2.0 * w[0]),
        _ => ratios.iter().all(|&r| r <= 2.0),
    };
    let mut t = Table::new(&["n", "h", "open_residual", "closed_residual", "ratio", "open_error", "converged"]);
    for r in &rep.rows {
        t.push(vec![
            r.n.into(),
            r.h.into(),
            r.open_residual.into(),
            r.closed_residual.into(),
            r.ratio.into(),
            r.open_error.into(),
            usize::from(r.converged).into(),
        ]);
    }
    Ok(Outcome { table: t, report: serde_json::to_value(&rep)?, pass, dat: vec![] })
}

/// `C_n = ‖u‖∞ / h` may grow by at most 10% per step unless `‖u‖∞` is at the floor.
pub fn mixed_dn_pass(rows: &[LadderRow]) -> bool {
    rows.windows(2).all(|w| {
        let (c0, c1) = (w[0].sup_norm / w[0].h, w[1].sup_norm / w[1].h);
        c1 <= 1.1 * c0 || w[1].sup_norm <= ROUNDOFF_FLOOR * w[1].start_sup_norm
    })
}

fn run_mixed_dn(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let rep = mixed_dn_experiment(&cfg.operator()?, &region, &cfg.grids, cfg.seed)?;
    let pass = mixed_dn_pass(&rep.rows);
    Ok(Outcome { table: ladder_table(&rep.rows), report: json!({"report": rep, "floor": ROUNDOFF_FLOOR}), pass, dat: vec![] })
}

fn run_maxprinciple(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rect = match cfg.domain.rect {
        Some(r) => Rect::new(r[0], r[1], r[2], r[3])?,
        None => build_domain(&cfg.type_change()?, cfg.domain.a, cfg.domain.b, cfg.domain.d)?.elliptic_part(),
    };
    let spec = cfg.operator()?;
    let c_tol = cfg.params.c_tol.unwrap_or(10.0);
    let g: BoundaryFn = Arc::new(|p| p.x + p.y);
    let rows = max_principle_experiment(&spec, &rect, g, &cfg.grids, c_tol)?;
    let fine = Grid::new(rect, *cfg.grids.last().expect("grids is non-empty"))?;
    let direct = max_principle_check(&fine.sample(|_, y| y), &rect, 0.0)?;
    let mut t = Table::new(&["n", "h", "residual_norm", "interior_max", "boundary_max", "interior_min", "boundary_min", "tol", "pass"]);
    let mut pass = direct.pass;
    for r in &rows {
        pass &= r.report.pass;
        t.push(vec![
            r.n.into(),
            r.h.into(),
            r.residual_norm.into(),
            r.report.interior_max.into(),
            r.report.boundary_max.into(),
            r.report.interior_min.into(),
            r.report.boundary_min.into(),
            r.report.tol.into(),
            usize::from(r.report.pass).into(),
        ]);
    }
    Ok(Outcome { table: t, report: json!({"rows": rows, "direct_y": direct, "c_tol": c_tol}), pass, dat: vec![] })
}

fn run_dual(cfg: &ExperimentConfig) -> Result<Outcome> {
    let region = cfg.region()?;
    let spec = cfg.operator()?;
    let levels = cfg.params.levels.clone().unwrap_or_else(|| vec![4, 5, 6]);
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Config("params.levels must be non-empty and strictly increasing".into()));
    }
    let tol = cfg.params.tol.unwrap_or(1e-12);
    let n = *cfg.grids.last().expect("grids is non-empty");
    let g = Grid::new(region.clone(), n)?;
    let exact = TestField::xy();
    let f = g.sample(|x, y| exact.apply(&spec, x, y));
    let heldout = heldout_tests(&region, cfg.params.heldout_level.unwrap_or(levels[0] + 1));
    if heldout.is_empty() {
        return Err(LabError::InvalidDomain("no held-out test fits inside the region".into()));
    }
    let mut t = Table::new(&["level", "tests", "pairing_residual", "heldout_residual", "converged"]);
    let mut held = Vec::new();
    for &level in &levels {
        let r = distribution_solve(&spec, &f, &bspline_basis(&region, level), &heldout, tol)?;
        held.push(r.heldout_residual);
        t.push(vec![
            (level as usize).into(),
            r.test_count.into(),
            r.pairing_residual.into(),
            r.heldout_residual.into(),
            usize::from(r.converged).into(),
        ]);
    }
    let zero = distribution_solve(&spec, &GridField::zeros(&g), &bspline_basis(&region, levels[0]), &heldout, tol)?;
    let zero_norm = zero.u.max_abs_where(|_| true);
    let pass = held.windows(2).all(|w| w[1] * 2.0 <= w[0]) && zero_norm <= 1e-10;
    Ok(Outcome {
        table: t,
        report: json!({"grid": n, "levels": levels, "heldout_tests": heldout.len(), "heldout": held, "zero_source_norm": zero_norm}),
        pass,
        dat: vec![],
    })
}

/// Runs the experiment named in `cfg` without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Validate => run_validate(cfg),
        Experiment::Trace => run_trace(cfg),
        Experiment::Ibp => run_ibp(cfg),
        Experiment::Energy => run_energy(cfg),
        Experiment::Poincare => run_poincare(cfg),
        Experiment::Open => run_open(cfg),
        Experiment::Closed => run_closed(cfg),
        Experiment::MixedDn => run_mixed_dn(cfg),
        Experiment::Maxprinciple => run_maxprinciple(cfg),
        Experiment::Dual => run_dual(cfg),
    }
}

/// Writes the outcome into `cfg.output.dir` in the requested formats.
pub fn write_outcome(cfg: &ExperimentConfig, out: &Outcome) -> Result<()> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let formats = &cfg.output.formats;
    if formats.contains(&Format::Csv) {
        fs::write(dir.join("results.csv"), out.table.to_csv())?;
    }
    if formats.contains(&Format::Json) {
        let report = json!({
            "experiment": cfg.experiment.name(),
            "seed": cfg.seed,
            "grids": cfg.grids,
            "pass": out.pass,
            "result": out.report,
        });
        crate::io::write_json(&report, &dir.join("report.json"))?;
    }
    if formats.contains(&Format::Dat) {
        fs::write(dir.join("results.dat"), out.table.to_dat())?;
        for (stem, t) in &out.dat {
            fs::write(dir.join(format!("{stem}.dat")), t.to_dat())?;
        }
    }
    Ok(())
}

/// Loads, runs and writes one experiment; returns the process exit code.
pub fn run(config_path: &Path) -> i32 {
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config_path.display());
            return EXIT_USAGE;
        }
    };
    let out = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", cfg.experiment);
            return EXIT_USAGE;
        }
    };
    if let Err(e) = write_outcome(&cfg, &out) {
        eprintln!("error: writing {}: {e}", cfg.output.dir.display());
        return EXIT_USAGE;
    }
    print!("{}", out.table.to_csv());
    if out.pass {
        println!("{}: pass", cfg.experiment);
        EXIT_PASS
    } else {
        println!("{}: property violated", cfg.experiment);
        EXIT_VIOLATION
    }
}

/// Vertices of one characteristic as `x,y` CSV.
pub fn trace_csv(k: &TypeChangeFn, start: Point, branch: Branch, y_stop: f64, step: f64) -> Result<String> {
    let path = trace_characteristic(k, start, branch, y_stop, step)?;
    let mut t = Table::new(&["x", "y"]);
    for p in &path.vertices {
        t.push(vec![p.x.into(), p.y.into()]);
    }
    Ok(t.to_csv())
}
