//! End-to-end worked examples, the generic `solve` driver and the hyperbolicity map.
//!
//! Configs are `key = value` lines (`#` starts a comment). Known keys:
//! `scenario`, `grid = a,b,cells`, `t_end`, `t_samples`, `orientation`,
//! `scheme`, `flow`, `output`, `seed`; everything else is a scenario parameter.
//!
//! Output: one CSV per field with header `x,t,value`, plus `report.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::Serialize;
use serde_json::json;

use crate::error::{FlowError, Result};
use crate::field::{time_samples, Boundary, Grid, ScalarField};
use crate::flow_models::{
    assemble_type_b, classify_hyperbolicity, preset, ricci_discriminant_n3, ricci_magnitude_test_n3,
    scalar_psi_family, sigma_evolution_rhs, Classification, CubicRegion, GeneratingFamily, Preset,
    ScalarFunction, TruncatedSystem, HYPERBOLICITY_TOL,
};
use crate::foliated_geometry::{
    gauss_curvature_efg, gauss_curvature_flow, gauss_curvature_rotational,
    umbilical_scalar_psi, weingarten_from_metric, BiregularMetric, RotationalMetric, SurfaceMetric,
};
use crate::hyperbolic_solvers::{
    blowup_time_conservation, solve_characteristics_b1, solve_conservation_law, solve_fd, solve_transport,
    B1Generator, FdOptions, FdStop, MonomialTerm,
};
use crate::ode::integrate_dense;
use crate::symmetric_functions::{profile_from_roots, sigma_from_tau, tau_from_sigma};

/// Scenario names accepted by [`run_scenario`].
pub const SCENARIOS: &[&str] = &[
    "cone",
    "pseudosphere",
    "reeb_i",
    "reeb_ii",
    "circles",
    "ricci_n2",
    "ricci_n3_map",
    "ent_wave",
    "umbilical_burgers",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Characteristics,
    Conservation,
    Fd,
    #[default]
    Auto,
}

impl FromStr for Scheme {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "characteristics" => Ok(Scheme::Characteristics),
            "conservation" => Ok(Scheme::Conservation),
            "fd" => Ok(Scheme::Fd),
            "auto" => Ok(Scheme::Auto),
            other => Err(FlowError::InvalidInput(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub grid: Option<(f64, f64, usize)>,
    pub t_end: Option<f64>,
    pub t_samples: Option<usize>,
    pub orientation: Option<f64>,
    pub scheme: Scheme,
    pub flow: Option<String>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> FlowError {
    FlowError::InvalidInput(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| bad(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| bad(format!("{key}: '{v}' is not a non-negative integer")))
}

/// `a,b,cells`.
pub fn parse_grid(v: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 3 {
        return Err(bad(format!("grid: expected a,b,cells, got '{v}'")));
    }
    Ok((parse_f64("grid", parts[0])?, parse_f64("grid", parts[1])?, parse_usize("grid", parts[2])?))
}

/// Comma-separated reals.
pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key; flags and config lines share this path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        match key {
            "scenario" | "name" => self.name = Some(value.to_string()),
            "grid" => self.grid = Some(parse_grid(value)?),
            "t_end" | "t-end" => self.t_end = Some(parse_f64(key, value)?),
            "t_samples" | "t-samples" => self.t_samples = Some(parse_usize(key, value)?),
            "orientation" => self.orientation = Some(parse_f64(key, value)?),
            "scheme" => self.scheme = value.parse()?,
            "flow" => self.flow = Some(value.to_string()),
            "output" | "out" => self.output = Some(PathBuf::from(value)),
            "seed" => {
                self.seed = Some(value.parse().map_err(|_| bad(format!("seed: '{value}' is not an integer")))?)
            }
            _ => {
                self.params.insert(key.replace('-', "_"), value.to_string());
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((a, b, cells)) = self.grid {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(bad(format!("grid interval [{a}, {b}] is empty")));
            }
            if cells < 16 {
                return Err(bad(format!("grid needs at least 16 cells, got {cells}")));
            }
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(bad(format!("t_end must be finite and non-negative, got {t}")));
            }
        }
        if let Some(k) = self.t_samples {
            if k < 2 {
                return Err(bad(format!("t_samples must be at least 2, got {k}")));
            }
        }
        if let Some(s) = self.orientation {
            if s != 1.0 && s != -1.0 {
                return Err(bad(format!("orientation must be +1 or -1, got {s}")));
            }
        }
        Ok(())
    }

    fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        self.params.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    fn param_usize(&self, key: &str, default: usize) -> Result<usize> {
        self.params.get(key).map_or(Ok(default), |v| parse_usize(key, v))
    }

    fn resolve(&self, grid: (f64, f64, usize), t_end: f64, t_samples: usize, orientation: f64) -> Result<Resolved> {
        self.validate()?;
        let (a, b, cells) = self.grid.unwrap_or(grid);
        Ok(Resolved {
            a,
            b,
            cells,
            t_end: self.t_end.unwrap_or(t_end),
            t_samples: self.t_samples.unwrap_or(t_samples),
            orientation: self.orientation.unwrap_or(orientation),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Resolved {
    a: f64,
    b: f64,
    cells: usize,
    t_end: f64,
    t_samples: usize,
    orientation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub max_abs_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    BlowUpTruncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    /// Kebab-case label, or `mixed` for maps.
    pub classification: String,
    pub blowup_time: f64,
    pub achieved_t: f64,
    pub t_end: f64,
    pub status: RunStatus,
    pub metrics: BTreeMap<String, Metric>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl RunReport {
    fn new(scenario: &str, classification: Classification, blowup_time: f64, t_end: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            classification: classification.label().to_string(),
            blowup_time,
            achieved_t: 0.0,
            t_end,
            status: RunStatus::Completed,
            metrics: BTreeMap::new(),
            files: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_metric(&mut self, name: &str, max_abs_err: f64, tolerance: f64) {
        let pass = max_abs_err.is_finite() && max_abs_err < tolerance;
        self.metrics.insert(name.to_string(), Metric { max_abs_err, tolerance, pass });
    }

    pub fn all_pass(&self) -> bool {
        self.metrics.values().all(|m| m.pass)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.get(name)
    }

    /// 0 on completion, 4 when the run stopped at blow-up.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Completed => 0,
            RunStatus::BlowUpTruncated => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let num = |v: f64| if v.is_finite() { json!(v) } else { json!("inf") };
        let metrics: serde_json::Map<String, serde_json::Value> = self
            .metrics
            .iter()
            .map(|(k, m)| (k.clone(), json!({"max_abs_err": num(m.max_abs_err), "tolerance": m.tolerance, "pass": m.pass})))
            .collect();
        json!({
            "scenario": self.scenario,
            "classification": self.classification,
            "blowup_time": num(self.blowup_time),
            "achieved_t": self.achieved_t,
            "t_end": self.t_end,
            "status": self.status,
            "metrics": metrics,
            "files": self.files,
            "notes": self.notes,
        })
    }
}

/// Exit code for a refused run: 2 invalid config, 3 not hyperbolic, 1 otherwise.
pub fn exit_code_for(err: &FlowError) -> i32 {
    match err {
        FlowError::InvalidInput(_) | FlowError::InvalidMetric(_) | FlowError::Index { .. } => 2,
        FlowError::NotHyperbolic(_) | FlowError::DegenerateRatio(_) => 3,
        _ => 1,
    }
}

/// One output field sampled at several times (or, for maps, several second-axis values).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub samples: Vec<(f64, ScalarField)>,
}

impl Series {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), samples: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,t,value\n");
        for (t, f) in &self.samples {
            for (i, v) in f.values.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", f.grid.x(i), t, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub series: Vec<Series>,
}

impl RunOutput {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Writes `<series>.csv` and `report.json` into `dir`, recording the manifest.
    pub fn write_to(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| bad(format!("cannot create {}: {e}", dir.display())))?;
        self.report.files.clear();
        for s in &self.series {
            let file = format!("{}.csv", s.name);
            fs::write(dir.join(&file), s.to_csv()).map_err(|e| FlowError::Numerical(format!("write {file}: {e}")))?;
            self.report.files.push(file);
        }
        self.report.files.push("report.json".into());
        let text = serde_json::to_string_pretty(&self.report.to_json()).expect("report serialises");
        fs::write(dir.join("report.json"), text + "\n")
            .map_err(|e| FlowError::Numerical(format!("write report.json: {e}")))?;
        Ok(())
    }
}

/// Runs a named scenario and writes its files when `output` is set.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    let name = config.name.as_deref().ok_or_else(|| bad("no scenario name"))?;
    let mut out = match name {
        "cone" => run_cone(config)?,
        "pseudosphere" => run_pseudosphere(config)?,
        "reeb_i" => run_reeb(ReebProfile::I, config)?,
        "reeb_ii" => run_reeb(ReebProfile::II, config)?,
        "circles" => run_circles(config)?,
        "ricci_n2" => run_ricci_n2(config)?,
        "ricci_n3_map" => run_ricci_n3_map(config)?,
        "ent_wave" => run_ent_wave(config)?,
        "umbilical_burgers" => run_umbilical_burgers(config)?,
        other => return Err(bad(format!("unknown scenario '{other}'; expected one of {}", SCENARIOS.join(", ")))),
    };
    if let Some(dir) = &config.output {
        out.write_to(dir)?;
    }
    Ok(out)
}

fn line_grid(a: f64, b: f64, cells: usize) -> Result<Grid> {
    Grid::from_cells(a, b, cells, Boundary::Extrapolate)
}

fn periodic_grid(a: f64, b: f64, cells: usize) -> Result<Grid> {
    Grid::from_cells(a, b, cells, Boundary::Periodic)
}

/// Grid with the same spacing as [a, b] extended upstream by `reach` plus eight cells.
/// Returns the grid and the index of a.
fn upstream_grid(r: &Resolved, reach: f64) -> Result<(Grid, usize)> {
    let dx = (r.b - r.a) / r.cells as f64;
    let k = (reach.abs() / dx).ceil() as usize + 8;
    let (lo, hi, off) = if r.orientation > 0.0 { (k, 0, k) } else { (0, k, 0) };
    let g = Grid { x0: r.a - lo as f64 * dx, dx, count: r.cells + 1 + lo + hi, boundary: Boundary::Extrapolate };
    Ok((g, off))
}

fn restrict(f: &ScalarField, offset: usize, grid: Grid) -> ScalarField {
    ScalarField { grid, values: f.values[offset..offset + grid.count].to_vec() }
}

fn worst(a: Classification, b: Classification) -> Classification {
    let rank = |c: Classification| match c {
        Classification::NotHyperbolic => 0,
        Classification::Hyperbolic => 1,
        Classification::StrictlyHyperbolic => 2,
    };
    if rank(a) <= rank(b) {
        a
    } else {
        b
    }
}

/// Worst classification of a type-(b) family over gridded τ-fields.
fn classify_fields(family: &GeneratingFamily, tau: &[ScalarField]) -> Result<Classification> {
    let mut c = Classification::StrictlyHyperbolic;
    let mut local = vec![0.0; tau.len()];
    for i in 0..tau[0].len() {
        for (k, f) in tau.iter().enumerate() {
            local[k] = f.values[i];
        }
        let sys = assemble_type_b(family, &local, 0.0)?;
        c = worst(c, classify_hyperbolicity(&sys, HYPERBOLICITY_TOL).classification);
    }
    Ok(c)
}

fn require_hyperbolic(c: Classification, what: &str) -> Result<()> {
    if c.is_hyperbolic() {
        Ok(())
    } else {
        Err(FlowError::NotHyperbolic(format!("{what}: initial data classified {}", c.label())))
    }
}

fn oriented(mut sys: TruncatedSystem, s: f64) -> TruncatedSystem {
    if s != 1.0 {
        sys.a_tilde *= s;
        sys.b_tilde *= s;
    }
    sys
}

/// Output times truncated strictly below `blowup`.
fn output_times(r: &Resolved, blowup: f64) -> (Vec<f64>, bool) {
    let all = time_samples(r.t_end, r.t_samples);
    let kept: Vec<f64> = all.iter().copied().filter(|&t| t < blowup).collect();
    let truncated = kept.len() < all.len();
    (kept, truncated)
}

/// Uniform refinement of `outputs` with about `total` points; returns (times, output indices).
fn refine_times(outputs: &[f64], total: usize) -> (Vec<f64>, Vec<usize>) {
    if outputs.len() < 2 {
        return (outputs.to_vec(), (0..outputs.len()).collect());
    }
    let per = total.div_ceil(outputs.len() - 1).max(1);
    let mut ts = vec![outputs[0]];
    let mut idx = vec![0];
    for w in outputs.windows(2) {
        for k in 1..=per {
            ts.push(if k == per { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / per as f64 });
        }
        idx.push(ts.len() - 1);
    }
    (ts, idx)
}

/// Cumulative trapezoid of ψ(λ_t) over `times`, reported at `marks`.
fn stream_integral(
    times: &[f64],
    marks: &[usize],
    mut lambda_at: impl FnMut(usize, f64) -> Result<ScalarField>,
    psi: impl Fn(f64) -> f64,
) -> Result<Vec<(f64, ScalarField, ScalarField)>> {
    let mut out = Vec::with_capacity(marks.len());
    let mut prev = lambda_at(0, times[0])?;
    let grid = prev.grid;
    let mut acc = ScalarField::constant(grid, 0.0);
    let mut next_mark = 0;
    if marks.first() == Some(&0) {
        out.push((times[0], prev.clone(), acc.clone()));
        next_mark = 1;
    }
    for k in 1..times.len() {
        let cur = lambda_at(k, times[k])?;
        let h = 0.5 * (times[k] - times[k - 1]);
        for i in 0..grid.count {
            acc.values[i] += h * (psi(prev.values[i]) + psi(cur.values[i]));
        }
        if next_mark < marks.len() && marks[next_mark] == k {
            out.push((times[k], cur.clone(), acc.clone()));
            next_mark += 1;
        }
        prev = cur;
    }
    Ok(out)
}

fn sup_diff(a: &ScalarField, b: impl Fn(f64) -> f64) -> f64 {
    (0..a.len()).fold(0.0f64, |m, i| m.max((a.values[i] - b(a.grid.x(i))).abs()))
}

// ---------------------------------------------------------------- cone

fn run_cone(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((2.0, 6.0, 400), 1.0, 11, 1.0)?;
    let beta = cfg.param_f64("beta", std::f64::consts::FRAC_PI_6)?;
    let quad = cfg.param_usize("quad_samples", 2000)?;
    let s = r.orientation;
    let (ext, off) = upstream_grid(&r, 0.5 * r.t_end)?;
    if ext.x0 <= 0.0 {
        return Err(bad("cone grid reaches the apex; move the interval away from x = 0"));
    }
    let out_grid = line_grid(r.a, r.b, r.cells)?;
    let sb = beta.sin();
    let phi0 = ScalarField::from_fn(ext, |x| x * sb);
    let w = weingarten_from_metric(&RotationalMetric::new(phi0.clone())?.to_biregular(1)?)?;
    let lambda0 = w.tau[0].map(|v| s * v);
    let psi = ScalarFunction::monomial(1.0, 1);
    let class = classify_fields(&scalar_psi_family(psi.clone()), std::slice::from_ref(&lambda0))?;
    let blowup = blowup_time_conservation(&psi, &lambda0, s);
    let (outs, truncated) = output_times(&r, blowup);
    let mut report = RunReport::new("cone", class, blowup, r.t_end);
    report.notes.push(format!("λ₀ = −φ′/φ = −1/x (orientation {s:+})"));

    let (times, marks) = refine_times(&outs, quad);
    let stream = stream_integral(&times, &marks, |_, t| solve_conservation_law(&psi, &lambda0, t, s), |l| l)?;
    let exact_lambda = |x: f64, t: f64| -s / (x - 0.5 * s * t);
    let mut lam_s = Series::new("lambda");
    let mut phi_s = Series::new("phi");
    let mut k_s = Series::new("gauss_curvature");
    let (mut e_l, mut e_phi, mut e_k) = (0.0f64, 0.0f64, 0.0f64);
    for (t, lam, integral) in &stream {
        let phi = phi0.zip_with(integral, |p, i| p * (0.5 * i).exp());
        let k = gauss_curvature_rotational(&phi)?;
        let (lam_o, phi_o, k_o) = (restrict(lam, off, out_grid), restrict(&phi, off, out_grid), restrict(&k, off, out_grid));
        e_l = e_l.max(sup_diff(&lam_o, |x| exact_lambda(x, *t)));
        e_phi = e_phi.max(sup_diff(&phi_o, |x| (x - 0.5 * s * t) * sb));
        e_k = e_k.max(k_o.max_abs());
        lam_s.samples.push((*t, lam_o));
        phi_s.samples.push((*t, phi_o));
        k_s.samples.push((*t, k_o));
    }
    report.add_metric("lambda_transport", e_l, 1e-6);
    report.add_metric("phi_translation", e_phi, 1e-6);
    report.add_metric("gauss_curvature", e_k, 1e-6);
    finish(&mut report, &outs, truncated);
    Ok(RunOutput { report, series: vec![lam_s, phi_s, k_s] })
}

fn finish(report: &mut RunReport, outs: &[f64], truncated: bool) {
    report.achieved_t = outs.last().copied().unwrap_or(0.0);
    if truncated {
        report.status = RunStatus::BlowUpTruncated;
        report.notes.push(format!("stopped before blow-up at T = {}", report.blowup_time));
    }
}

// ---------------------------------------------------------------- circles

fn run_circles(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((1.0, 3.0, 400), 2.0, 21, -1.0)?;
    let quad = cfg.param_usize("quad_samples", 20000)?;
    let s = r.orientation;
    let (ext, off) = upstream_grid(&r, 0.5 * r.t_end)?;
    if ext.x0 <= 0.0 {
        return Err(bad("circle radii must stay positive on the extended grid"));
    }
    let out_grid = line_grid(r.a, r.b, r.cells)?;
    let g0 = ScalarField::from_fn(ext, |rho| rho * rho);
    let one = ScalarField::constant(ext, 1.0);
    let w = weingarten_from_metric(&BiregularMetric::diagonal(one.clone(), vec![g0.clone()])?)?;
    let lambda0 = w.tau[0].map(|v| s * v);
    let psi = ScalarFunction::monomial(1.0, 1);
    let class = classify_fields(&scalar_psi_family(psi.clone()), std::slice::from_ref(&lambda0))?;
    let blowup = blowup_time_conservation(&psi, &lambda0, s);
    let (outs, truncated) = output_times(&r, blowup);
    let mut report = RunReport::new("circles", class, blowup, r.t_end);

    let (times, marks) = refine_times(&outs, quad);
    let stream = stream_integral(&times, &marks, |_, t| solve_conservation_law(&psi, &lambda0, t, s), |l| l)?;
    let zero = ScalarField::constant(ext, 0.0);
    let mut g_s = Series::new("G");
    let mut k_s = Series::new("gauss_curvature");
    let mut l_s = Series::new("lambda");
    let (mut e_g, mut e_k) = (0.0f64, 0.0f64);
    for (t, lam, integral) in &stream {
        let gt = g0.zip_with(integral, |g, i| g * i.exp());
        let k = gauss_curvature_efg(&SurfaceMetric::new(one.clone(), zero.clone(), gt.clone())?)?;
        let (g_o, k_o) = (restrict(&gt, off, out_grid), restrict(&k, off, out_grid));
        e_g = e_g.max(sup_diff(&g_o, |rho| (rho - 0.5 * s * t).powi(2)));
        e_k = e_k.max(k_o.max_abs());
        g_s.samples.push((*t, g_o));
        k_s.samples.push((*t, k_o));
        l_s.samples.push((*t, restrict(lam, off, out_grid)));
    }
    report.add_metric("g_closed_form", e_g, 1e-8);
    report.add_metric("gauss_curvature", e_k, 1e-6);
    finish(&mut report, &outs, truncated);
    Ok(RunOutput { report, series: vec![l_s, g_s, k_s] })
}

// ---------------------------------------------------------------- pseudosphere

/// X(Y) = ln((√(4+Y²) − 2)/(√(4+Y²) + 2)) + √(4+Y²).
pub fn pseudosphere_x(y: f64) -> f64 {
    let s = (4.0 + y * y).sqrt();
    ((s - 2.0) / (s + 2.0)).ln() + s
}

pub fn run_pseudosphere(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((0.5, 10.0, 20000), 0.0, 2, 1.0)?;
    if r.a <= 0.0 {
        return Err(bad("pseudosphere needs Y > 0"));
    }
    let tol = cfg.param_f64("ode_tol", 1e-13)?;
    let ygrid = line_grid(r.a, r.b, r.cells)?;
    let ys = ygrid.xs();
    let x0 = pseudosphere_x(r.a);
    let xs = integrate_dense(|y, _| Ok((4.0 + y * y).sqrt() / y), r.a, x0, &ys, tol)?;
    let x_of_y = ScalarField::new(ygrid, xs)?;
    let residual = sup_diff(&x_of_y, pseudosphere_x);

    let xgrid = line_grid(x0, pseudosphere_x(r.b), r.cells)?;
    let y_of_x = ScalarField::new(xgrid, integrate_dense(|_, y| Ok(y / (4.0 + y * y).sqrt()), x0, r.a, &xgrid.xs(), tol)?)?;
    let e = y_of_x.map(|y| 1.0 + y * y / (4.0 + y * y));
    let g = y_of_x.map(|y| y * y);
    let k = gauss_curvature_efg(&SurfaceMetric::new(e, ScalarField::constant(xgrid, 0.0), g)?)?;
    let want = y_of_x.map(|y| -1.0 / (y * y + 2.0).powi(2));
    let k_err = k.max_abs_diff(&want);
    let k_end = k.values[k.len() - 1].abs();
    let bound = 1.0 / (r.b * r.b + 2.0).powi(2);

    let psi = ScalarFunction::monomial(1.0, 1);
    let class = classify_hyperbolicity(&assemble_type_b(&scalar_psi_family(psi), &[1.0], 0.0)?, HYPERBOLICITY_TOL)
        .classification;
    let mut report = RunReport::new("pseudosphere", class, f64::INFINITY, 0.0);
    report.add_metric("closed_form_residual", residual, 1e-6);
    report.add_metric("gauss_curvature", k_err, 1e-6);
    report.add_metric("asymptotic_decay", k_end, bound + 1e-6);
    report.notes.push("profile from dY/dX = Y/√(4+Y²); K compared with −1/(Y²+2)²".into());
    let mut s1 = Series::new("x_of_y");
    s1.samples.push((0.0, x_of_y));
    let mut s2 = Series::new("y_of_x");
    s2.samples.push((0.0, y_of_x));
    let mut s3 = Series::new("gauss_curvature");
    s3.samples.push((0.0, k));
    Ok(RunOutput { report, series: vec![s1, s2, s3] })
}

// ---------------------------------------------------------------- Reeb

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReebProfile {
    /// α = (π/2)x.
    I,
    /// α = (π/2)x².
    II,
}

impl ReebProfile {
    /// (α, α′) at x.
    pub fn alpha(self, x: f64) -> (f64, f64) {
        let h = std::f64::consts::FRAC_PI_2;
        match self {
            ReebProfile::I => (h * x, h),
            ReebProfile::II => (h * x * x, 2.0 * h * x),
        }
    }

    /// λ₀ = α′ cos α (equal to α′|cos α| for |x| < 1).
    pub fn lambda0(self, x: f64) -> f64 {
        let (a, da) = self.alpha(x);
        da * a.cos()
    }

    fn name(self) -> &'static str {
        match self {
            ReebProfile::I => "reeb_i",
            ReebProfile::II => "reeb_ii",
        }
    }
}

pub fn run_reeb(profile: ReebProfile, cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((-0.95, 0.95, 4000), 3.0, 31, 1.0)?;
    if r.a <= -1.0 || r.b >= 1.0 {
        return Err(bad("Reeb grid must lie inside |x| < 1"));
    }
    let quad = cfg.param_usize("quad_samples", 600)?;
    let probe = cfg.param_f64("sign_probe", 0.05)?;
    let window = cfg.param_f64("pipeline_window", 0.5)?;
    let grid = line_grid(r.a, r.b, r.cells)?;
    let xs = grid.xs();
    let mut report = RunReport::new(profile.name(), Classification::StrictlyHyperbolic, f64::INFINITY, r.t_end);
    if cfg.orientation.is_some_and(|s| s != 1.0) {
        report.notes.push("orientation is fixed by the foliation; the flag is ignored".into());
    }
    report.notes.push("λ_t(x) = λ₀(φ₋ₜ/₂(x)) along dx/ds = −sin α (backward N-flow)".into());
    report.notes.push(format!("pipeline agreement is sup|ΔK| / max(1, sup|K|) on |x| ≤ {window}"));
    let outs = time_samples(r.t_end, r.t_samples);
    let (times, marks) = refine_times(&outs, quad);
    // Feet X(x, σ) of the N-flow run backwards for σ = t/2.
    let half: Vec<f64> = times.iter().map(|t| 0.5 * t).collect();
    let mut feet = Vec::with_capacity(xs.len());
    for &x in &xs {
        let path = if r.t_end == 0.0 {
            vec![x; half.len()]
        } else {
            integrate_dense(|_, y| Ok(profile.alpha(y).0.sin()), 0.0, x, &half, 1e-12)?
        };
        feet.push(path);
    }
    let stream = stream_integral(
        &times,
        &marks,
        |k, _| Ok(ScalarField { grid, values: feet.iter().map(|p| profile.lambda0(p[k])).collect() }),
        |l| l,
    )?;
    let sin_a: Vec<f64> = xs.iter().map(|&x| profile.alpha(x).0.sin()).collect();
    let cos_a: Vec<f64> = xs.iter().map(|&x| profile.alpha(x).0.cos()).collect();
    let w = ScalarField { grid, values: xs.iter().map(|&x| {
        let (a, da) = profile.alpha(x);
        da * a.sin() * a.cos()
    }).collect() };
    let i0 = grid.nearest(0.0);
    let (ip, im) = (grid.nearest(probe), grid.nearest(-probe));
    let (da0, l00) = (profile.alpha(0.0).1, profile.lambda0(0.0));
    let mut k_s = Series::new("gauss_curvature");
    let mut kf_s = Series::new("gauss_curvature_flow");
    let mut l_s = Series::new("lambda");
    let (mut e_closed, mut e_pipe, mut k0_init, mut k0_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut last_k = None;
    for (t, lam, integral) in &stream {
        let ei: Vec<f64> = integral.values.iter().map(|v| v.exp()).collect();
        let e = ScalarField { grid, values: (0..grid.count).map(|i| sin_a[i].powi(2) + cos_a[i].powi(2) * ei[i]).collect() };
        let f = ScalarField { grid, values: (0..grid.count).map(|i| sin_a[i] * cos_a[i] * (ei[i] - 1.0)).collect() };
        let g = ScalarField { grid, values: (0..grid.count).map(|i| cos_a[i].powi(2) + sin_a[i].powi(2) * ei[i]).collect() };
        let k = gauss_curvature_efg(&SurfaceMetric::new(e, f, g)?)?;
        let dl = lam.derivative();
        let n_lam = ScalarField { grid, values: (0..grid.count).map(|i| -sin_a[i] * dl.values[i]).collect() };
        let kf = gauss_curvature_flow(integral, &w, None, lam, &n_lam)?;
        let inside = || (0..grid.count).filter(|&i| xs[i].abs() <= window);
        let scale = inside().fold(1.0f64, |m, i| m.max(k.values[i].abs()));
        let gap = inside().fold(0.0f64, |m, i| m.max((k.values[i] - kf.values[i]).abs()));
        e_pipe = e_pipe.max(gap / scale);
        let k0 = k.values[i0];
        if *t == 0.0 {
            k0_init = k.max_abs();
        }
        k0_max = k0_max.max(k0.abs());
        e_closed = e_closed.max((k0 + da0 * da0 * (1.0 - (-t * l00).exp())).abs());
        last_k = Some(k.clone());
        k_s.samples.push((*t, k));
        kf_s.samples.push((*t, kf));
        l_s.samples.push((*t, lam.clone()));
    }
    report.add_metric("k_initial_flat", k0_init, 1e-6);
    report.add_metric("pipeline_agreement", e_pipe, 1e-3);
    match profile {
        ReebProfile::I => report.add_metric("k0_closed_form", e_closed, 1e-3),
        ReebProfile::II => {
            report.add_metric("k0_zero", k0_max, 1e-6);
            let k = last_k.expect("at least one sample");
            let (kl, kr) = (k.values[im], k.values[ip]);
            let changed = kl * kr < 0.0;
            report.add_metric("sign_change_at_t_end", if changed { 0.0 } else { 1.0 }, 0.5);
            report.notes.push(format!("K(t_end, ±{probe}) = ({kl:.6e}, {kr:.6e})"));
        }
    }
    finish(&mut report, &outs, false);
    Ok(RunOutput { report, series: vec![l_s, k_s, kf_s] })
}

// ---------------------------------------------------------------- Ricci n = 2

/// (k₁, k₂) = (τ₁ ∓ √(2τ₂ − τ₁²))/2.
pub fn ricci_n2_curvatures(tau1: f64, tau2: f64) -> (f64, f64) {
    let d = (2.0 * tau2 - tau1 * tau1).max(0.0).sqrt();
    (0.5 * (tau1 - d), 0.5 * (tau1 + d))
}

/// Evaluates a field at (x, t) from uniformly spaced snapshots, linear in time.
fn snapshot_eval(snaps: &[(f64, ScalarField)], x: f64, t: f64) -> f64 {
    let k = snaps.partition_point(|(s, _)| *s <= t).clamp(1, snaps.len() - 1);
    let (t0, f0) = (&snaps[k - 1].0, &snaps[k - 1].1);
    let (t1, f1) = (&snaps[k].0, &snaps[k].1);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    (1.0 - w) * f0.eval(x) + w * f1.eval(x)
}

fn run_ricci_n2(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((0.0, std::f64::consts::TAU, 800), 0.5, 11, 1.0)?;
    if !matches!(cfg.scheme, Scheme::Auto | Scheme::Fd) {
        return Err(bad("ricci_n2 runs with the finite-difference scheme only"));
    }
    let fine = cfg.param_usize("trace_samples", 200)?;
    let cfl = cfg.param_f64("cfl", 0.4)?;
    let k1e = Expr::parse(cfg.params.get("k1").map_or("1 + 0.2*math::sin(x)", String::as_str))?;
    let k2e = Expr::parse(cfg.params.get("k2").map_or("2 + 0.2*math::cos(x)", String::as_str))?;
    let s = r.orientation;
    let grid = periodic_grid(r.a, r.b, r.cells)?;
    let k1 = k1e.field(grid)?;
    let k2 = k2e.field(grid)?;
    let tau0 = vec![k1.zip_with(&k2, |a, b| a + b), k1.zip_with(&k2, |a, b| a * a + b * b)];
    let ricci = preset(&Preset::RicciEx, 2)?;
    let class = classify_fields(&ricci, &tau0)?;
    require_hyperbolic(class, "ricci_n2")?;
    let outs = time_samples(r.t_end, r.t_samples);
    let (fine_t, marks) = refine_times(&outs, fine);
    let opts = FdOptions { sample_times: fine_t.clone(), ..FdOptions::default() };
    let res = solve_fd(|tau, _, t| Ok(oriented(assemble_type_b(&ricci, tau, t)?, s)), &tau0, r.t_end, cfl, &opts)?;
    let mut report = RunReport::new("ricci_n2", class, f64::INFINITY, r.t_end);
    report.notes.push("speeds 0 and −τ₁; no closed-form blow-up prediction".into());

    let snaps = &res.snapshots;
    let gap = |st: &[ScalarField]| {
        st[0].zip_with(&st[1], |a, b| {
            let (x, y) = ricci_n2_curvatures(a, b);
            y - x
        })
    };
    let sigma2 = |st: &[ScalarField]| st[0].zip_with(&st[1], |a, b| 0.5 * (a * a - b));
    let gap0 = gap(&snaps[0].fields);
    let mut e_gap = 0.0f64;
    for sn in snaps {
        e_gap = e_gap.max(gap(&sn.fields).max_abs_diff(&gap0));
    }
    report.add_metric("gap_invariance", e_gap, 1e-4);

    // σ₂ along dx/dt = −s·τ₁ (Heun on the fine snapshots).
    let tau1_snaps: Vec<(f64, ScalarField)> = snaps.iter().map(|sn| (sn.t, sn.fields[0].clone())).collect();
    let sig_snaps: Vec<(f64, ScalarField)> = snaps.iter().map(|sn| (sn.t, sigma2(&sn.fields))).collect();
    let scale = sig_snaps[0].1.max_abs().max(f64::MIN_POSITIVE);
    let mut e_char = 0.0f64;
    if snaps.len() > 1 {
        let starts = cfg.param_usize("trace_starts", 16)?;
        for j in 0..starts {
            let x0 = r.a + (r.b - r.a) * (j as f64 + 0.5) / starts as f64;
            let mut x = x0;
            for w in tau1_snaps.windows(2) {
                let (t0, t1) = (w[0].0, w[1].0);
                let dt = t1 - t0;
                let v0 = -s * w[0].1.eval(x);
                let v1 = -s * w[1].1.eval(x + dt * v0);
                x += 0.5 * dt * (v0 + v1);
            }
            let t_last = sig_snaps.last().unwrap().0;
            let drift = (snapshot_eval(&sig_snaps, x, t_last) - sig_snaps[0].1.eval(x0)).abs() / scale;
            e_char = e_char.max(drift);
        }
    }
    report.add_metric("sigma2_along_characteristics", e_char, 1e-4);

    // Central time difference of σ₂ against the σ-evolution right-hand side.
    if snaps.len() >= 3 {
        let k = snaps.len() / 2;
        let (a, b, c) = (&snaps[k - 1], &snaps[k], &snaps[k + 1]);
        let ds = sigma2(&c.fields).zip_with(&sigma2(&a.fields), |p, q| p - q).map(|v| v / (c.t - a.t));
        let d0 = b.fields[0].derivative();
        let d1 = b.fields[1].derivative();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..grid.count {
            let tau = [b.fields[0].values[i], b.fields[1].values[i]];
            let ntau = [s * d0.values[i], s * d1.values[i]];
            let rhs = sigma_evolution_rhs(&ricci, &tau, &ntau, b.t, 2)?;
            num = num.max((ds.values[i] - rhs).abs());
            den = den.max(rhs.abs());
        }
        report.add_metric("sigma2_rate", num / den.max(f64::MIN_POSITIVE), 1e-3);
    }

    let mut series: Vec<Series> = ["tau1", "tau2", "k1", "k2", "sigma2"].iter().map(|n| Series::new(n)).collect();
    for &m in &marks {
        let Some(sn) = snaps.iter().find(|sn| (sn.t - fine_t[m]).abs() <= 1e-12 * (1.0 + sn.t)) else {
            continue;
        };
        let (t1, t2) = (&sn.fields[0], &sn.fields[1]);
        let kk1 = t1.zip_with(t2, |a, b| ricci_n2_curvatures(a, b).0);
        let kk2 = t1.zip_with(t2, |a, b| ricci_n2_curvatures(a, b).1);
        for (sr, f) in series.iter_mut().zip([t1.clone(), t2.clone(), kk1, kk2, sigma2(&sn.fields)]) {
            sr.samples.push((sn.t, f));
        }
    }
    report.achieved_t = res.achieved_t;
    if let FdStop::GradientBlowUp { t } = res.stop {
        report.status = RunStatus::BlowUpTruncated;
        report.notes.push(format!("gradient blow-up detected at t = {t}"));
    }
    Ok(RunOutput { report, series })
}

// ---------------------------------------------------------------- hyperbolicity map

/// Cell-centred axis over σ_index ∈ [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapAxis {
    /// 1-based σ index.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl MapAxis {
    pub fn values(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / self.count as f64;
        (0..self.count).map(|i| self.lo + (i as f64 + 0.5) * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub x: MapAxis,
    pub y: MapAxis,
    /// σ₁…σ_n; the two axis entries are overwritten.
    pub base_sigma: Vec<f64>,
    /// Worker threads for the sweep; 1 runs inline.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicityMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `classes[iy][ix]`.
    pub classes: Vec<Vec<Classification>>,
}

impl HyperbolicityMap {
    pub fn code(c: Classification) -> f64 {
        match c {
            Classification::StrictlyHyperbolic => 2.0,
            Classification::Hyperbolic => 1.0,
            Classification::NotHyperbolic => 0.0,
        }
    }
}

fn classify_sigma(family: &GeneratingFamily, sigma: &[f64]) -> Result<Classification> {
    let tau = tau_from_sigma(sigma, sigma.len());
    Ok(classify_hyperbolicity(&assemble_type_b(family, &tau, 0.0)?, HYPERBOLICITY_TOL).classification)
}

/// Classification of a type-(b) family over a σ-plane.
pub fn hyperbolicity_map(family: &GeneratingFamily, spec: &MapSpec) -> Result<HyperbolicityMap> {
    let n = family.n;
    if spec.base_sigma.len() != n {
        return Err(bad(format!("base σ needs {n} entries")));
    }
    for ax in [spec.x, spec.y] {
        if ax.index == 0 || ax.index > n {
            return Err(FlowError::Index { index: ax.index, n });
        }
        if ax.count == 0 || !(ax.lo < ax.hi) {
            return Err(bad("map axes need a non-empty range and count"));
        }
    }
    if spec.x.index == spec.y.index {
        return Err(bad("map axes must use different σ indices"));
    }
    let xs = spec.x.values();
    let ys = spec.y.values();
    let row = |y: f64| -> Result<Vec<Classification>> {
        let mut sigma = spec.base_sigma.clone();
        sigma[spec.y.index - 1] = y;
        xs.iter()
            .map(|&x| {
                sigma[spec.x.index - 1] = x;
                classify_sigma(family, &sigma)
            })
            .collect()
    };
    let threads = spec.threads.max(1);
    let classes = if threads == 1 {
        ys.iter().map(|&y| row(y)).collect::<Result<Vec<_>>>()?
    } else {
        let chunk = ys.len().div_ceil(threads);
        let parts: Vec<Result<Vec<Vec<Classification>>>> = std::thread::scope(|sc| {
            let handles: Vec<_> = ys
                .chunks(chunk)
                .map(|c| sc.spawn(|| c.iter().map(|&y| row(y)).collect::<Result<Vec<_>>>()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("map worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(ys.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    Ok(HyperbolicityMap { xs, ys, classes })
}

fn map_series(map: &HyperbolicityMap) -> Series {
    let h = if map.xs.len() > 1 { map.xs[1] - map.xs[0] } else { 1.0 };
    let grid = Grid { x0: map.xs[0], dx: h, count: map.xs.len(), boundary: Boundary::Extrapolate };
    let mut s = Series::new("classification");
    for (y, row) in map.ys.iter().zip(&map.classes) {
        s.samples.push((*y, ScalarField { grid, values: row.iter().map(|&c| HyperbolicityMap::code(c)).collect() }));
    }
    s
}

fn axis_param(cfg: &ScenarioConfig, key: &str, default: (f64, f64, usize)) -> Result<(f64, f64, usize)> {
    match cfg.params.get(key) {
        Some(v) => parse_grid(v).map_err(|_| bad(format!("{key}: expected lo,hi,count"))),
        None => Ok(default),
    }
}

fn map_classification(map: &HyperbolicityMap) -> String {
    let mut seen: Vec<Classification> = Vec::new();
    for c in map.classes.iter().flatten() {
        if !seen.contains(c) {
            seen.push(*c);
        }
    }
    if seen.len() == 1 {
        seen[0].label().to_string()
    } else {
        "mixed".to_string()
    }
}

fn run_ricci_n3_map(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let (x0, x1, nx) = axis_param(cfg, "sigma1", (-6.0, 6.0, 100))?;
    let (y0, y1, ny) = axis_param(cfg, "sigma3", (-9.0, 9.0, 100))?;
    let sigma2 = cfg.param_f64("sigma2", 0.0)?;
    let threads = cfg.param_usize("threads", 1)?;
    let family = preset(&Preset::RicciEx, 3)?;
    let spec = MapSpec {
        x: MapAxis { index: 1, lo: x0, hi: x1, count: nx },
        y: MapAxis { index: 3, lo: y0, hi: y1, count: ny },
        base_sigma: vec![0.0, sigma2, 0.0],
        threads,
    };
    let map = hyperbolicity_map(&family, &spec)?;
    let (mut d_dis, mut mag_dis) = (0usize, 0usize);
    for (iy, &y) in map.ys.iter().enumerate() {
        for (ix, &x) in map.xs.iter().enumerate() {
            let sig = [x, sigma2, y];
            let strict = map.classes[iy][ix] == Classification::StrictlyHyperbolic;
            let (_, region) = ricci_discriminant_n3(&sig);
            if strict != (region == CubicRegion::ThreeDistinctReal) {
                d_dis += 1;
            }
            if strict != ricci_magnitude_test_n3(&sig) {
                mag_dis += 1;
            }
        }
    }
    let mut report = RunReport::new("ricci_n3_map", Classification::Hyperbolic, f64::INFINITY, 0.0);
    report.classification = map_classification(&map);
    report.add_metric("d_sign_disagreements", d_dis as f64, 0.5);
    report.notes.push(format!(
        "|σ₁|³ > 27|σ₃| > 0 disagrees with the computed strict region at {mag_dis} of {} cells (sign of σ₁σ₃ matters)",
        nx * ny
    ));
    Ok(RunOutput { report, series: vec![map_series(&map)] })
}

// ---------------------------------------------------------------- ENT wave

fn roots_exprs(cfg: &ScenarioConfig, default: &str) -> Result<Vec<Expr>> {
    cfg.params
        .get("roots")
        .map_or(default, String::as_str)
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(Expr::parse)
        .collect()
}

/// τ₁…τ_n fields from root expressions kᵢ(x).
fn tau_fields_from_roots(roots: &[Expr], grid: Grid) -> Result<Vec<ScalarField>> {
    let n = roots.len();
    let ks: Vec<ScalarField> = roots.iter().map(|e| e.field(grid)).collect::<Result<_>>()?;
    let mut cols = vec![Vec::with_capacity(grid.count); n];
    for i in 0..grid.count {
        let k: Vec<f64> = ks.iter().map(|f| f.values[i]).collect();
        let p = profile_from_roots(&k, n)?;
        for (c, v) in cols.iter_mut().zip(p.tau) {
            c.push(v);
        }
    }
    Ok(cols.into_iter().map(|v| ScalarField { grid, values: v }).collect())
}

fn run_ent_wave(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((0.0, std::f64::consts::TAU, 800), 1.0, 11, 1.0)?;
    let s_ord = cfg.param_usize("s", 1)?;
    if s_ord != 1 {
        return Err(bad("ent_wave reproduces the s = 1 wave only"));
    }
    let cfl = cfg.param_f64("cfl", 0.4)?;
    let roots = roots_exprs(cfg, "1 + 0.3*math::sin(x); -0.5 + 0.2*math::cos(x); 0.7")?;
    let n = roots.len();
    let s = r.orientation;
    let grid = periodic_grid(r.a, r.b, r.cells)?;
    let tau0 = tau_fields_from_roots(&roots, grid)?;
    let family = preset(&Preset::Ent(1), n)?;
    let class = classify_fields(&family, &tau0)?;
    require_hyperbolic(class, "ent_wave")?;
    let c = s * (n as f64 - 1.0) / 2.0;
    let sigma1_0 = tau0[0].clone();
    let exact = |x: f64, t: f64| sigma1_0.eval(x - c * t);
    // Closed form from the root expressions, for the transport-solver check.
    let closed = |x: f64| -> Result<f64> { roots.iter().map(|e| e.eval(x)).sum() };
    let outs = time_samples(r.t_end, r.t_samples);
    let opts = FdOptions { sample_times: outs.clone(), ..FdOptions::default() };
    let res = solve_fd(|tau, _, t| Ok(oriented(assemble_type_b(&family, tau, t)?, s)), &tau0, r.t_end, cfl, &opts)?;
    let mut report = RunReport::new("ent_wave", class, f64::INFINITY, r.t_end);
    report.notes.push(format!("σ₁ travels at (n−1)/2 = {} along N", (n as f64 - 1.0) / 2.0));
    let (mut e_fd, mut e_tr) = (0.0f64, 0.0f64);
    let mut fd_s = Series::new("sigma1_fd");
    let mut tr_s = Series::new("sigma1_transport");
    for &t in &outs {
        let Some(sn) = res.at(t) else { continue };
        let sig1 = &sn.fields[0];
        e_fd = e_fd.max(sup_diff(sig1, |x| exact(x, t)));
        let tr = solve_transport(c, &sigma1_0, t)?;
        for i in 0..grid.count {
            e_tr = e_tr.max((tr.values[i] - closed(grid.x(i) - c * t)?).abs());
        }
        fd_s.samples.push((t, sig1.clone()));
        tr_s.samples.push((t, tr));
    }
    report.add_metric("fd_sigma1_transport", e_fd, 1e-3);
    report.add_metric("transport_solver", e_tr, 1e-6);
    report.achieved_t = res.achieved_t;
    if let FdStop::GradientBlowUp { t } = res.stop {
        report.status = RunStatus::BlowUpTruncated;
        report.notes.push(format!("gradient blow-up detected at t = {t}"));
    }
    Ok(RunOutput { report, series: vec![fd_s, tr_s] })
}

// ---------------------------------------------------------------- umbilical Burgers

fn run_umbilical_burgers(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.resolve((0.0, std::f64::consts::TAU, 1024), 0.5, 11, 1.0)?;
    let lam_e = Expr::parse(cfg.params.get("lambda0").map_or("math::sin(x)", String::as_str))?;
    let delta = cfg.param_f64("time_step", 1e-4)?;
    let s = r.orientation;
    let grid = periodic_grid(r.a, r.b, r.cells)?;
    let lambda0 = lam_e.field(grid)?;
    let (psi, psi_label) = match cfg.flow.as_deref() {
        None | Some("burgers") => (ScalarFunction::monomial(1.0, 2), "ψ = λ²".to_string()),
        Some(spec) => {
            let fam = parse_flow(spec, 2)?;
            (umbilical_scalar_psi(&fam), format!("ψ from {spec} (n = 2)"))
        }
    };
    let family = scalar_psi_family(psi.clone());
    let class = classify_fields(&family, std::slice::from_ref(&lambda0))?;
    let blowup = blowup_time_conservation(&psi, &lambda0, s);
    let (outs, truncated) = output_times(&r, blowup);
    let mut report = RunReport::new("umbilical_burgers", class, blowup, r.t_end);
    report.notes.push(format!("{psi_label}; w = ½ψ′(λ) solves w_t + s·w·w_x = 0"));
    let w_of = |l: &ScalarField| l.map(|v| 0.5 * psi.deriv(v));
    let mut l_s = Series::new("lambda");
    let mut w_s = Series::new("w");
    let mut resid = 0.0f64;
    for &t in &outs {
        let lam = solve_conservation_law(&psi, &lambda0, t, s)?;
        if t > delta && t + delta < blowup {
            let wp = w_of(&solve_conservation_law(&psi, &lambda0, t + delta, s)?);
            let wm = w_of(&solve_conservation_law(&psi, &lambda0, t - delta, s)?);
            let w = w_of(&lam);
            let wx = w.derivative();
            for i in 0..grid.count {
                let wt = (wp.values[i] - wm.values[i]) / (2.0 * delta);
                resid = resid.max((wt + s * w.values[i] * wx.values[i]).abs());
            }
        }
        w_s.samples.push((t, w_of(&lam)));
        l_s.samples.push((t, lam));
    }
    report.add_metric("burgers_residual", resid, 1e-3);
    if let Some(&t_last) = outs.last() {
        if t_last > 0.0 && matches!(cfg.scheme, Scheme::Auto | Scheme::Fd) {
            let res = solve_fd(
                |tau, _, t| Ok(oriented(assemble_type_b(&family, tau, t)?, s)),
                std::slice::from_ref(&lambda0),
                t_last,
                0.4,
                &FdOptions::default(),
            )?;
            let exact = &l_s.samples.last().unwrap().1;
            report.add_metric("fd_vs_exact", res.final_state().fields[0].max_abs_diff(exact), 1e-2);
        }
    }
    finish(&mut report, &outs, truncated);
    Ok(RunOutput { report, series: vec![l_s, w_s] })
}

// ---------------------------------------------------------------- generic solve

/// Flow spec: `ricci_ex`, `ent:s`, `power:m`, `constant:c`.
pub fn parse_flow(spec: &str, n: usize) -> Result<GeneratingFamily> {
    let spec = spec.trim();
    let (head, arg) = spec.split_once(':').map_or((spec, None), |(h, a)| (h, Some(a.trim())));
    fn need<'a>(head: &str, a: Option<&'a str>) -> Result<&'a str> {
        a.ok_or_else(|| bad(format!("flow '{head}' needs an argument")))
    }
    let kind = match head.to_ascii_lowercase().as_str() {
        "ricci_ex" | "ricci" => Preset::RicciEx,
        "ent" => Preset::Ent(parse_usize("flow", need(head, arg)?)?),
        "power" => Preset::Power(parse_usize("flow", need(head, arg)?)?),
        "constant" => Preset::Constant(parse_f64("flow", need(head, arg)?)?),
        other => return Err(bad(format!("unknown flow '{other}'"))),
    };
    preset(&kind, n)
}

/// `coeff:α₁,α₂,…` terms separated by `;`.
pub fn parse_b1_terms(spec: &str) -> Result<(Vec<MonomialTerm>, u32, u32)> {
    let mut terms = Vec::new();
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (c, a) = part.split_once(':').ok_or_else(|| bad(format!("b1 term '{part}': expected coeff:exponents")))?;
        let alpha = a
            .split(',')
            .map(|e| e.trim().parse::<u32>().map_err(|_| bad(format!("b1 exponent '{e}'"))))
            .collect::<Result<Vec<u32>>>()?;
        terms.push(MonomialTerm::new(alpha, parse_f64("b1", c)?));
    }
    let first = terms.first().ok_or_else(|| bad("b1_terms is empty"))?;
    let m = first.alpha.iter().sum();
    let l = first.alpha.iter().enumerate().map(|(j, a)| (j as u32 + 1) * a).sum();
    Ok((terms, m, l))
}

/// Generic evolution from root expressions `roots = k₁(x); k₂(x); …`.
///
/// `fd` integrates the truncated τ-system, `conservation` the umbilical
/// reduction of the first root, `characteristics` the b̂₁ flow given by `b1_terms`.
pub fn run_solve(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let periodic = cfg.params.get("boundary").map_or("periodic", String::as_str);
    let r = cfg.resolve((0.0, std::f64::consts::TAU, 400), 0.5, 11, 1.0)?;
    let grid = match periodic {
        "periodic" => periodic_grid(r.a, r.b, r.cells)?,
        "open" | "extrapolate" => line_grid(r.a, r.b, r.cells)?,
        other => return Err(bad(format!("unknown boundary '{other}'"))),
    };
    let roots = roots_exprs(cfg, "1 + 0.2*math::sin(x); 2 + 0.2*math::cos(x)")?;
    let n = roots.len();
    let tau0 = tau_fields_from_roots(&roots, grid)?;
    let s = r.orientation;
    let scheme = match cfg.scheme {
        Scheme::Auto if cfg.params.contains_key("b1_terms") => Scheme::Characteristics,
        Scheme::Auto if n == 1 => Scheme::Conservation,
        Scheme::Auto => Scheme::Fd,
        other => other,
    };
    let outs_all = time_samples(r.t_end, r.t_samples);
    let mut series: Vec<Series> = (1..=n).map(|k| Series::new(&format!("tau{k}"))).collect();
    let mut report;
    match scheme {
        Scheme::Fd => {
            let family = parse_flow(cfg.flow.as_deref().unwrap_or("ricci_ex"), n)?;
            let class = classify_fields(&family, &tau0)?;
            require_hyperbolic(class, "solve")?;
            let opts = FdOptions { sample_times: outs_all.clone(), ..FdOptions::default() };
            let cfl = cfg.param_f64("cfl", 0.4)?;
            let res = solve_fd(|tau, _, t| Ok(oriented(assemble_type_b(&family, tau, t)?, s)), &tau0, r.t_end, cfl, &opts)?;
            report = RunReport::new("solve", class, f64::INFINITY, r.t_end);
            for sn in &res.snapshots {
                for (sr, f) in series.iter_mut().zip(&sn.fields) {
                    sr.samples.push((sn.t, f.clone()));
                }
            }
            report.achieved_t = res.achieved_t;
            if let FdStop::GradientBlowUp { t } = res.stop {
                report.blowup_time = t;
                report.status = RunStatus::BlowUpTruncated;
                report.notes.push(format!("gradient blow-up detected at t = {t}"));
            }
        }
        Scheme::Conservation => {
            let dim = cfg.param_usize("dim", n.max(2))?;
            let family = parse_flow(cfg.flow.as_deref().unwrap_or("ricci_ex"), dim)?;
            let psi = umbilical_scalar_psi(&family);
            let lambda0 = roots[0].field(grid)?;
            let class = classify_fields(&scalar_psi_family(psi.clone()), std::slice::from_ref(&lambda0))?;
            let blowup = blowup_time_conservation(&psi, &lambda0, s);
            let (outs, truncated) = output_times(&r, blowup);
            report = RunReport::new("solve", class, blowup, r.t_end);
            report.notes.push(format!("umbilical reduction in dimension {dim}: τ_k = {dim}·λ^k with λ the first root"));
            for &t in &outs {
                let lam = solve_conservation_law(&psi, &lambda0, t, s)?;
                for (k, sr) in series.iter_mut().enumerate() {
                    sr.samples.push((t, lam.map(|l| dim as f64 * l.powi(k as i32 + 1))));
                }
            }
            finish(&mut report, &outs, truncated);
        }
        Scheme::Characteristics => {
            let spec = cfg.params.get("b1_terms").ok_or_else(|| bad("characteristics needs b1_terms"))?;
            let (terms, m, l) = parse_b1_terms(spec)?;
            let generator = B1Generator::Monomial { terms, m, l };
            let class = classify_fields(&generator.family(n), &tau0)?;
            let solver = crate::hyperbolic_solvers::CharacteristicsSolver::new(generator.clone(), tau0.clone(), s)?;
            let blowup = solver.validity_time();
            let (outs, truncated) = output_times(&r, blowup);
            report = RunReport::new("solve", class, blowup, r.t_end);
            let mut fi = Series::new("first_integral");
            for &t in &outs {
                let sol = solve_characteristics_b1(generator.clone(), &tau0, t, s)?;
                for (sr, f) in series.iter_mut().zip(&sol.fields) {
                    sr.samples.push((t, f.clone()));
                }
                fi.samples.push((t, sol.first_integral));
            }
            series.push(fi);
            finish(&mut report, &outs, truncated);
        }
        Scheme::Auto => unreachable!("resolved above"),
    }
    // σ fields alongside τ for convenience.
    if let Some(first) = series.first() {
        let times: Vec<f64> = first.samples.iter().map(|(t, _)| *t).collect();
        let mut sig: Vec<Series> = (1..=n).map(|k| Series::new(&format!("sigma{k}"))).collect();
        for (j, &t) in times.iter().enumerate() {
            let g = first.samples[j].1.grid;
            let mut cols = vec![Vec::with_capacity(g.count); n];
            for i in 0..g.count {
                let tau: Vec<f64> = series[..n].iter().map(|sr| sr.samples[j].1.values[i]).collect();
                for (c, v) in cols.iter_mut().zip(sigma_from_tau(&tau)?) {
                    c.push(v);
                }
            }
            for (sr, v) in sig.iter_mut().zip(cols) {
                sr.samples.push((t, ScalarField { grid: g, values: v }));
            }
        }
        series.extend(sig);
    }
    let mut out = RunOutput { report, series };
    if let Some(dir) = &cfg.output {
        out.write_to(dir)?;
    }
    Ok(out)
}

/// Analysis of one state: matrix, spectrum and classification as JSON.
pub fn analyze_state(family: &GeneratingFamily, tau: &[f64]) -> Result<serde_json::Value> {
    let sys = assemble_type_b(family, tau, 0.0)?;
    let spec = classify_hyperbolicity(&sys, HYPERBOLICITY_TOL);
    let m = sys.matrix();
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    let eig: Vec<[f64; 2]> = spec.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    Ok(json!({
        "n": family.n,
        "tau": tau,
        "sigma": sigma_from_tau(tau)?,
        "matrix": rows,
        "eigenvalues": eig,
        "classification": spec.classification.label(),
    }))
}

/// Parsed `math::`-style expression in x.
#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    node: Node<DefaultNumericTypes>,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(src.trim())
            .map_err(|e| bad(format!("expression '{}': {e}", src.trim())))?;
        let e = Self { src: src.trim().to_string(), node };
        e.eval(0.0)?;
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("x".into(), Value::from_float(x)).expect("fresh context");
        ctx.set_value("pi".into(), Value::from_float(std::f64::consts::PI)).expect("fresh context");
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| bad(format!("expression '{}' at x = {x}: {e}", self.src)))
    }

    pub fn field(&self, grid: Grid) -> Result<ScalarField> {
        let v = grid.xs().into_iter().map(|x| self.eval(x)).collect::<Result<Vec<_>>>()?;
        ScalarField::new(grid, v)
    }
}
