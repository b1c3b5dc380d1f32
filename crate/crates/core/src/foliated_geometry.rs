//! Metrics in biregular coordinates, conformal and rotational evolution, Gaussian curvature.
//!
//! x is the normal coordinate x₀ and leaves are x = const. All fields share one grid.

use nalgebra::DMatrix;

use crate::error::{FlowError, Result};
use crate::field::{trapezoid, ScalarField};
use crate::flow_models::{umbilical_psi, umbilical_psi_derivative, GeneratingFamily, ScalarFunction};
use crate::hyperbolic_solvers::{blowup_time_conservation, solve_conservation_law};

/// Leaf block g_ij(x) of a biregular metric.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafMetric {
    Diagonal(Vec<ScalarField>),
    /// Row-major symmetric n×n block.
    Dense(Vec<Vec<ScalarField>>),
}

/// g = g₀₀ dx₀² + g_ij dxⁱdxʲ.
#[derive(Debug, Clone, PartialEq)]
pub struct BiregularMetric {
    pub g00: ScalarField,
    pub leaf: LeafMetric,
}

impl BiregularMetric {
    pub fn new(g00: ScalarField, leaf: LeafMetric) -> Result<Self> {
        if g00.values.iter().any(|&v| !(v > 0.0)) {
            return Err(FlowError::InvalidMetric("g00 must be positive".into()));
        }
        let m = Self { g00, leaf };
        let n = m.n();
        if n == 0 {
            return Err(FlowError::InvalidMetric("empty leaf metric".into()));
        }
        let grid = m.g00.grid;
        let fields: Vec<&ScalarField> = match &m.leaf {
            LeafMetric::Diagonal(d) => d.iter().collect(),
            LeafMetric::Dense(rows) => {
                if rows.iter().any(|r| r.len() != n) {
                    return Err(FlowError::InvalidMetric("leaf block is not square".into()));
                }
                rows.iter().flatten().collect()
            }
        };
        if fields.iter().any(|f| f.grid != grid) {
            return Err(FlowError::InvalidMetric("leaf components must share the g00 grid".into()));
        }
        for i in 0..grid.count {
            let g = m.leaf_at(i);
            if (&g - g.transpose()).amax() > 1e-12 * g.amax() {
                return Err(FlowError::InvalidMetric(format!("leaf block not symmetric at x = {}", grid.x(i))));
            }
            if g.cholesky().is_none() {
                return Err(FlowError::InvalidMetric(format!("leaf block not positive definite at x = {}", grid.x(i))));
            }
        }
        Ok(m)
    }

    pub fn diagonal(g00: ScalarField, diag: Vec<ScalarField>) -> Result<Self> {
        Self::new(g00, LeafMetric::Diagonal(diag))
    }

    pub fn n(&self) -> usize {
        match &self.leaf {
            LeafMetric::Diagonal(d) => d.len(),
            LeafMetric::Dense(rows) => rows.len(),
        }
    }

    fn leaf_at(&self, i: usize) -> DMatrix<f64> {
        let n = self.n();
        match &self.leaf {
            LeafMetric::Diagonal(d) => DMatrix::from_fn(n, n, |r, c| if r == c { d[r].values[i] } else { 0.0 }),
            LeafMetric::Dense(rows) => DMatrix::from_fn(n, n, |r, c| rows[r][c].values[i]),
        }
    }
}

/// g = dx₀² + φ(x₀)² ds² on leaves of constant curvature one.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationalMetric {
    pub phi: ScalarField,
}

impl RotationalMetric {
    pub fn new(phi: ScalarField) -> Result<Self> {
        if phi.values.iter().any(|&v| !(v > 0.0)) {
            return Err(FlowError::InvalidMetric("warping function must be positive".into()));
        }
        Ok(Self { phi })
    }

    /// Diagonal biregular form with n equal leaf entries φ².
    pub fn to_biregular(&self, n: usize) -> Result<BiregularMetric> {
        let g = self.phi.grid;
        let sq = self.phi.map(|p| p * p);
        BiregularMetric::diagonal(ScalarField::constant(g, 1.0), vec![sq; n])
    }
}

/// E dx² + 2F dx dy + G dy² with coefficients independent of y.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMetric {
    pub e: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
}

impl SurfaceMetric {
    pub fn new(e: ScalarField, f: ScalarField, g: ScalarField) -> Result<Self> {
        if e.grid != f.grid || e.grid != g.grid {
            return Err(FlowError::InvalidMetric("E, F, G must share a grid".into()));
        }
        let m = Self { e, f, g };
        if let Some(i) = (0..m.e.len()).find(|&i| !(m.det_at(i) > 0.0)) {
            return Err(FlowError::InvalidMetric(format!("EG − F² ≤ 0 at x = {}", m.e.grid.x(i))));
        }
        Ok(m)
    }

    fn det_at(&self, i: usize) -> f64 {
        self.e.values[i] * self.g.values[i] - self.f.values[i] * self.f.values[i]
    }

    pub fn determinant(&self) -> ScalarField {
        ScalarField { grid: self.e.grid, values: (0..self.e.len()).map(|i| self.det_at(i)).collect() }
    }
}

/// Second fundamental form, Weingarten operator and its power sums per sample.
#[derive(Debug, Clone)]
pub struct Weingarten {
    pub b: Vec<DMatrix<f64>>,
    pub a: Vec<DMatrix<f64>>,
    /// τ₁…τ_n as fields.
    pub tau: Vec<ScalarField>,
}

impl Weingarten {
    /// Sorted real principal curvatures at sample i.
    pub fn principal_curvatures(&self, i: usize) -> Vec<f64> {
        let mut k: Vec<f64> = self.a[i].clone().complex_eigenvalues().iter().map(|z| z.re).collect();
        k.sort_by(f64::total_cmp);
        k
    }
}

/// b_ij = −½∂₀g_ij/√g₀₀, A = −(1/(2√g₀₀))(∂₀g)g⁻¹, τ_m = tr Aᵐ.
pub fn weingarten_from_metric(metric: &BiregularMetric) -> Result<Weingarten> {
    if metric.g00.values.iter().any(|&v| !(v > 0.0)) {
        return Err(FlowError::InvalidMetric("g00 must be positive".into()));
    }
    let n = metric.n();
    let grid = metric.g00.grid;
    let d_leaf: LeafMetric = match &metric.leaf {
        LeafMetric::Diagonal(d) => LeafMetric::Diagonal(d.iter().map(ScalarField::derivative).collect()),
        LeafMetric::Dense(rows) => {
            LeafMetric::Dense(rows.iter().map(|r| r.iter().map(ScalarField::derivative).collect()).collect())
        }
    };
    let dmetric = BiregularMetric { g00: metric.g00.clone(), leaf: d_leaf };
    let mut bs = Vec::with_capacity(grid.count);
    let mut as_ = Vec::with_capacity(grid.count);
    let mut tau = vec![Vec::with_capacity(grid.count); n];
    for i in 0..grid.count {
        let s = metric.g00.values[i].sqrt();
        let dg = dmetric.leaf_at(i);
        let b = dg * (-0.5 / s);
        let a = match &metric.leaf {
            LeafMetric::Diagonal(d) => {
                DMatrix::from_fn(n, n, |r, c| if r == c { b[(r, r)] / d[r].values[i] } else { 0.0 })
            }
            LeafMetric::Dense(_) => {
                let ginv = metric
                    .leaf_at(i)
                    .try_inverse()
                    .ok_or_else(|| FlowError::InvalidMetric(format!("singular leaf block at x = {}", grid.x(i))))?;
                &b * ginv
            }
        };
        let mut p = a.clone();
        for (m, col) in tau.iter_mut().enumerate() {
            if m > 0 {
                p = &p * &a;
            }
            col.push(p.trace());
        }
        bs.push(b);
        as_.push(a);
    }
    Ok(Weingarten {
        b: bs,
        a: as_,
        tau: tau.into_iter().map(|v| ScalarField { grid, values: v }).collect(),
    })
}

/// λ-fields at increasing times starting from 0.
pub type LambdaHistory = [(f64, ScalarField)];

/// ∫₀ᵗ ψ(λ_s(x), s) ds by the trapezoid rule on the history samples.
///
/// A t between samples uses the linearly interpolated integrand at t.
pub fn psi_integral(psi: &dyn Fn(f64, f64) -> f64, history: &LambdaHistory, t: f64) -> Result<ScalarField> {
    let first = history.first().ok_or_else(|| FlowError::InvalidInput("empty λ history".into()))?;
    if first.0 != 0.0 {
        return Err(FlowError::InvalidInput("λ history must start at t = 0".into()));
    }
    let last = history.last().expect("non-empty").0;
    if t < 0.0 || t > last * (1.0 + 1e-12) {
        return Err(FlowError::InvalidInput(format!("t = {t} outside the λ history [0, {last}]")));
    }
    if history.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(FlowError::InvalidInput("λ history times must increase".into()));
    }
    let grid = first.1.grid;
    let mut ts = Vec::new();
    let mut used: Vec<&ScalarField> = Vec::new();
    for (s, f) in history {
        if *s <= t {
            ts.push(*s);
            used.push(f);
        }
    }
    let mut tail: Option<(f64, f64, &ScalarField, &ScalarField)> = None;
    if *ts.last().unwrap() < t {
        let k = ts.len();
        let (t0, t1) = (history[k - 1].0, history[k].0);
        tail = Some((t0, t1, &history[k - 1].1, &history[k].1));
    }
    let values = (0..grid.count)
        .map(|i| {
            let ys: Vec<f64> = ts.iter().zip(&used).map(|(&s, f)| psi(f.values[i], s)).collect();
            let mut acc = trapezoid(&ts, &ys);
            if let Some((t0, t1, f0, f1)) = tail {
                let w = (t - t0) / (t1 - t0);
                let y0 = psi(f0.values[i], t0);
                let y1 = psi(f1.values[i], t1);
                let yt = y0 + w * (y1 - y0);
                acc += 0.5 * (t - t0) * (y0 + yt);
            }
            acc
        })
        .collect();
    Ok(ScalarField { grid, values })
}

/// ĝ_t = ĝ₀·exp ∫₀ᵗ ψ(λ_s, s) ds for each component.
pub fn evolve_conformal(
    g_hat0: &[ScalarField],
    psi: &dyn Fn(f64, f64) -> f64,
    history: &LambdaHistory,
    t: f64,
) -> Result<Vec<ScalarField>> {
    let factor = psi_integral(psi, history, t)?.map(f64::exp);
    g_hat0
        .iter()
        .map(|g| {
            if g.grid != factor.grid {
                return Err(FlowError::InvalidInput("metric and λ history grids differ".into()));
            }
            Ok(g.zip_with(&factor, |a, b| a * b))
        })
        .collect()
}

/// φ_t = φ₀·exp(½∫₀ᵗ ψ(λ_s, s) ds).
pub fn evolve_rotational(
    phi0: &ScalarField,
    psi: &dyn Fn(f64, f64) -> f64,
    history: &LambdaHistory,
    t: f64,
) -> Result<ScalarField> {
    let half = psi_integral(psi, history, t)?.map(|v| (0.5 * v).exp());
    if half.grid != phi0.grid {
        return Err(FlowError::InvalidInput("φ₀ and λ history grids differ".into()));
    }
    Ok(phi0.zip_with(&half, |a, b| a * b))
}

/// K = −φ″/φ.
pub fn gauss_curvature_rotational(phi: &ScalarField) -> Result<ScalarField> {
    if phi.values.contains(&0.0) {
        return Err(FlowError::InvalidMetric("warping function vanishes".into()));
    }
    Ok(phi.second_derivative().zip_with(phi, |d2, p| -d2 / p))
}

/// K = −(1/(2√W)) ∂ₓ(∂ₓG/√W), W = EG − F², expanded as −G″/(2W) + G′W′/(4W²).
pub fn gauss_curvature_efg(metric: &SurfaceMetric) -> Result<ScalarField> {
    let w = metric.determinant();
    if w.values.iter().any(|&v| !(v > 0.0)) {
        return Err(FlowError::InvalidMetric("EG − F² ≤ 0".into()));
    }
    let (gu, guu, wu) = (metric.g.derivative(), metric.g.second_derivative(), w.derivative());
    let values = (0..w.len())
        .map(|i| {
            let wi = w.values[i];
            -guu.values[i] / (2.0 * wi) + gu.values[i] * wu.values[i] / (4.0 * wi * wi)
        })
        .collect();
    Ok(ScalarField { grid: w.grid, values })
}

/// Brioschi formula specialised to y-independent coefficients.
pub fn gauss_curvature_brioschi(metric: &SurfaceMetric) -> Result<ScalarField> {
    let w = metric.determinant();
    if w.values.iter().any(|&v| !(v > 0.0)) {
        return Err(FlowError::InvalidMetric("EG − F² ≤ 0".into()));
    }
    let (eu, fu, gu, guu) = (
        metric.e.derivative(),
        metric.f.derivative(),
        metric.g.derivative(),
        metric.g.second_derivative(),
    );
    let values = (0..w.len())
        .map(|i| {
            let (e, f, g, w) = (metric.e.values[i], metric.f.values[i], metric.g.values[i], w.values[i]);
            let (eu, fu, gu, guu) = (eu.values[i], fu.values[i], gu.values[i], guu.values[i]);
            (-0.5 * guu * w + 0.25 * eu * gu * g - 0.5 * f * fu * gu + 0.25 * e * gu * gu) / (w * w)
        })
        .collect();
    Ok(ScalarField { grid: w.grid, values })
}

/// K_t = Div_t(e^{−I}∇⁰_N N) + N(λ_t) − λ_t², I = ∫₀ᵗψ.
///
/// `w` is the x-component of ∇⁰_N N and `density` is √det g₀ (1 when `None`);
/// the divergence is (1/(ρ₀e^{I/2}))∂ₓ(ρ₀e^{−I/2}w). For I constant in x it
/// reduces to e^{−I}Div₀(∇⁰_N N).
pub fn gauss_curvature_flow(
    psi_integral: &ScalarField,
    w: &ScalarField,
    density: Option<&ScalarField>,
    lambda_t: &ScalarField,
    n_lambda: &ScalarField,
) -> Result<ScalarField> {
    let grid = psi_integral.grid;
    if [w.grid, lambda_t.grid, n_lambda.grid].iter().any(|g| *g != grid)
        || density.is_some_and(|d| d.grid != grid)
    {
        return Err(FlowError::InvalidInput("curvature inputs must share a grid".into()));
    }
    let rho = density.cloned().unwrap_or_else(|| ScalarField::constant(grid, 1.0));
    let flux = ScalarField {
        grid,
        values: (0..grid.count).map(|i| rho.values[i] * (-0.5 * psi_integral.values[i]).exp() * w.values[i]).collect(),
    };
    let dflux = flux.derivative();
    let values = (0..grid.count)
        .map(|i| {
            let div = dflux.values[i] / (rho.values[i] * (0.5 * psi_integral.values[i]).exp());
            let l = lambda_t.values[i];
            div + n_lambda.values[i] - l * l
        })
        .collect();
    Ok(ScalarField { grid, values })
}

/// d vol/dt = ½∫ψ dvol.
pub fn volume_rate(psi_values: &ScalarField, dvol: &ScalarField) -> Result<f64> {
    if psi_values.grid != dvol.grid {
        return Err(FlowError::InvalidInput("ψ and volume density grids differ".into()));
    }
    Ok(0.5 * psi_values.zip_with(dvol, |p, v| p * v).integral())
}

/// Result of the umbilical reduction.
#[derive(Debug, Clone)]
pub struct UmbilicalFlow {
    pub psi: ScalarFunction,
    pub blowup_time: f64,
    /// (t, λ_t) at every requested sample.
    pub history: Vec<(f64, ScalarField)>,
    /// exp ∫₀ᵗψ(λ_s) ds at the last sample.
    pub conformal_factor: ScalarField,
}

impl UmbilicalFlow {
    pub fn lambda_t(&self) -> &ScalarField {
        &self.history.last().expect("non-empty history").1
    }
}

/// ψ(λ) of an autonomous family on umbilical data, as a scalar function.
pub fn umbilical_scalar_psi(family: &GeneratingFamily) -> ScalarFunction {
    let a = family.clone();
    let b = family.clone();
    ScalarFunction::new(move |l| umbilical_psi(&a, l, 0.0), move |l| umbilical_psi_derivative(&b, l, 0.0))
}

/// Solves ∂ₜλ + (s/2)∂ₓψ(λ) = 0 and evolves the conformal factor.
///
/// The family is evaluated at t = 0; `times` must start at 0 and increase.
pub fn umbilical_flow(
    family: &GeneratingFamily,
    lambda0: &ScalarField,
    times: &[f64],
    orientation: f64,
) -> Result<UmbilicalFlow> {
    let psi = umbilical_scalar_psi(family);
    let blowup_time = blowup_time_conservation(&psi, lambda0, orientation);
    let mut history = Vec::with_capacity(times.len());
    for &t in times {
        history.push((t, solve_conservation_law(&psi, lambda0, t, orientation)?));
    }
    let t_last = times.last().copied().unwrap_or(0.0);
    let p = psi.clone();
    let conformal_factor = psi_integral(&move |l, _| p.value(l), &history, t_last)?.map(f64::exp);
    Ok(UmbilicalFlow { psi, blowup_time, history, conformal_factor })
}
