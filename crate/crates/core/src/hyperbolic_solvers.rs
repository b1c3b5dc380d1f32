//! One-dimensional solvers along a normal curve.
//!
//! The arclength coordinate x runs along the N-curve; `orientation` s = ±1
//! fixes N = s·∂ₓ. All exact solvers refuse times at or past the predicted
//! blow-up time.

use nalgebra::{DMatrix, DVector};

use crate::error::{FlowError, Result};
use crate::field::{Boundary, ScalarField};
use crate::flow_models::{GeneratingFamily, ScalarFunction, TruncatedSystem};
use crate::ode::{integrate, TRACE_TOL};

/// Relative residual accepted for implicit characteristic feet.
pub const FOOT_TOL: f64 = 1e-12;
const FOOT_MAX_ITER: usize = 50;

/// Simple wave τ(x, t) = τ⁰(x − c t), evaluated by cubic interpolation.
pub fn solve_transport(c: f64, field0: &ScalarField, t: f64) -> Result<ScalarField> {
    if t < 0.0 || !t.is_finite() {
        return Err(FlowError::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    let g = field0.grid;
    Ok(ScalarField::from_fn(g, |x| field0.eval(x - c * t)))
}

/// Solves ξ + v(ξ)·t = x for the foot ξ of a straight characteristic.
///
/// Newton with a numerical slope, then bisection on a bracket built from
/// `vrange` = (min v, max v) when Newton stalls.
pub fn implicit_foot(x: f64, t: f64, v: &dyn Fn(f64) -> f64, vrange: (f64, f64)) -> Result<f64> {
    if t == 0.0 {
        return Ok(x);
    }
    let tol = FOOT_TOL * (1.0 + x.abs());
    let resid = |xi: f64| xi + v(xi) * t - x;
    let mut xi = x - v(x) * t;
    for _ in 0..FOOT_MAX_ITER {
        let r = resid(xi);
        if !r.is_finite() {
            break;
        }
        if r.abs() <= tol {
            return Ok(xi);
        }
        let h = 1e-6 * (1.0 + xi.abs());
        let slope = 1.0 + (v(xi + h) - v(xi - h)) / (2.0 * h) * t;
        if !(slope > 0.0) || !slope.is_finite() {
            break;
        }
        xi -= r / slope;
    }
    // Bisection: the map ξ ↦ ξ + v(ξ)t is increasing before blow-up.
    let (vmin, vmax) = vrange;
    let mut lo = x - vmax * t;
    let mut hi = x - vmin * t;
    let mut width = (hi - lo).abs().max(1e-3);
    let mut expand = 0;
    while !(resid(lo) <= 0.0 && resid(hi) >= 0.0) {
        expand += 1;
        if expand > 60 {
            return Err(FlowError::Numerical(format!("no bracket for characteristic foot at x = {x}")));
        }
        lo -= width;
        hi += width;
        width *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = resid(mid);
        if r.abs() <= tol {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + mid.abs()) {
            return Ok(mid);
        }
    }
    Err(FlowError::Numerical(format!("characteristic foot did not converge at x = {x}")))
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

/// −1/min ∂ₓv over the grid, or ∞ when v is non-decreasing.
fn crossing_time(speed: &ScalarField) -> f64 {
    let m = speed.derivative().min();
    if m >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / m
    }
}

/// T = −2 / min ∂ₓ[s·ψ′(λ₀)], or ∞.
pub fn blowup_time_conservation(psi: &ScalarFunction, lambda0: &ScalarField, orientation: f64) -> f64 {
    let speed = lambda0.map(|l| 0.5 * orientation * psi.deriv(l));
    crossing_time(&speed)
}

/// The closed form 1/[(n−1)·sup N(λ₀²)] for umbilical extrinsic Ricci data, or ∞.
pub fn ricci_umbilical_blowup_time(n: usize, lambda0: &ScalarField, orientation: f64) -> f64 {
    let n_l2 = lambda0.map(|l| l * l).derivative().map(|d| orientation * d);
    let sup = n_l2.max();
    if sup <= 0.0 || n < 2 {
        f64::INFINITY
    } else {
        1.0 / ((n as f64 - 1.0) * sup)
    }
}

/// λ(x, t) for ∂ₜλ + (s/2)∂ₓψ(λ) = 0 from x = ξ + (s/2)ψ′(λ₀(ξ))t.
pub fn solve_conservation_law(
    psi: &ScalarFunction,
    lambda0: &ScalarField,
    t: f64,
    orientation: f64,
) -> Result<ScalarField> {
    if t < 0.0 {
        return Err(FlowError::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    let blowup = blowup_time_conservation(psi, lambda0, orientation);
    if t >= blowup {
        return Err(FlowError::BlowUp { requested: t, blowup });
    }
    let v = |xi: f64| 0.5 * orientation * psi.deriv(lambda0.eval(xi));
    let samples: Vec<f64> = lambda0.values.iter().map(|&l| 0.5 * orientation * psi.deriv(l)).collect();
    let vrange = min_max(&samples);
    let g = lambda0.grid;
    let mut values = Vec::with_capacity(g.count);
    for i in 0..g.count {
        let xi = implicit_foot(g.x(i), t, &v, vrange)?;
        values.push(lambda0.eval(xi));
    }
    ScalarField::new(g, values)
}

/// One monomial c·τ₁^{α₁}⋯τ_n^{α_n}.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialTerm {
    pub alpha: Vec<u32>,
    pub coeff: f64,
}

impl MonomialTerm {
    pub fn new(alpha: Vec<u32>, coeff: f64) -> Self {
        Self { alpha, coeff }
    }

    fn eval(&self, tau: &[f64]) -> f64 {
        self.coeff
            * self
                .alpha
                .iter()
                .enumerate()
                .map(|(j, &a)| tau.get(j).copied().unwrap_or(0.0).powi(a as i32))
                .product::<f64>()
    }

    fn grad(&self, tau: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            let a_s = self.alpha.get(s).copied().unwrap_or(0);
            if a_s == 0 {
                continue;
            }
            let mut p = self.coeff * a_s as f64;
            for (j, &a) in self.alpha.iter().enumerate() {
                let e = if j == s { a as i32 - 1 } else { a as i32 };
                p *= tau[j].powi(e);
            }
            *o += p;
        }
    }
}

/// Σα = m and Σ jα_j = l for every term.
pub fn check_monomial_class(terms: &[MonomialTerm], m: u32, l: u32) -> Result<()> {
    if terms.is_empty() {
        return Err(FlowError::InvalidInput("no monomial terms".into()));
    }
    for t in terms {
        let deg: u32 = t.alpha.iter().sum();
        let wdeg: u32 = t.alpha.iter().enumerate().map(|(j, a)| (j as u32 + 1) * a).sum();
        if deg != m || wdeg != l {
            return Err(FlowError::InvalidInput(format!(
                "exponent {:?} is outside J_(m={m}, l={l})",
                t.alpha
            )));
        }
    }
    Ok(())
}

/// T = −(2/(l+1)) / min N(f₀) for f = Σ c_α τ^α with α ∈ J_{m,l}, or ∞.
pub fn blowup_time_monomial(
    terms: &[MonomialTerm],
    tau0: &[ScalarField],
    m: u32,
    l: u32,
    orientation: f64,
) -> Result<f64> {
    check_monomial_class(terms, m, l)?;
    let f0 = monomial_field(terms, tau0)?;
    let nf = f0.derivative().map(|d| orientation * d);
    let min = nf.min();
    Ok(if min >= 0.0 { f64::INFINITY } else { -(2.0 / (l as f64 + 1.0)) / min })
}

fn monomial_field(terms: &[MonomialTerm], tau0: &[ScalarField]) -> Result<ScalarField> {
    let need = terms.iter().map(|t| t.alpha.len()).max().unwrap_or(0);
    if tau0.len() < need || tau0.is_empty() {
        return Err(FlowError::InvalidInput(format!("need {need} initial power-sum fields")));
    }
    let g = tau0[0].grid;
    let mut tau = vec![0.0; tau0.len()];
    let values = (0..g.count)
        .map(|i| {
            for (k, f) in tau0.iter().enumerate() {
                tau[k] = f.values[i];
            }
            terms.iter().map(|t| t.eval(&tau)).sum()
        })
        .collect();
    ScalarField::new(g, values)
}

/// Speed functions f for the b̂₁ flow ∂ₜg = f(τ)·b̂₁ with a closed-form first family.
#[derive(Debug, Clone)]
pub enum B1Generator {
    /// f ≡ C: every τᵢ is transported at speed C/2.
    Constant(f64),
    /// f = f(τ₁): τ₁ obeys a conservation law with ψ(λ) = λ f(λ).
    Tau1(ScalarFunction),
    /// f = Σ c_α τ^α over J_{m,l}: first-family characteristics are straight lines.
    Monomial { terms: Vec<MonomialTerm>, m: u32, l: u32 },
}

impl B1Generator {
    pub fn f(&self, tau: &[f64]) -> f64 {
        match self {
            B1Generator::Constant(c) => *c,
            B1Generator::Tau1(sf) => sf.value(tau[0]),
            B1Generator::Monomial { terms, .. } => terms.iter().map(|t| t.eval(tau)).sum(),
        }
    }

    pub fn grad(&self, tau: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; tau.len()];
        match self {
            B1Generator::Constant(_) => {}
            B1Generator::Tau1(sf) => g[0] = sf.deriv(tau[0]),
            B1Generator::Monomial { terms, .. } => {
                for t in terms {
                    t.grad(tau, &mut g);
                }
            }
        }
        g
    }

    /// The same flow as a generic type-(b) family.
    pub fn family(&self, n: usize) -> GeneratingFamily {
        let a = self.clone();
        let b = self.clone();
        GeneratingFamily::b1(n, move |t| a.f(t), move |t| b.grad(t))
    }
}

/// Reconstructed fields plus the carried quantities of the two families.
#[derive(Debug, Clone)]
pub struct CharacteristicSolution {
    pub t: f64,
    pub fields: Vec<ScalarField>,
    /// The first-family Riemann invariant f(τ).
    pub first_integral: ScalarField,
    /// u = Σⱼ f_{τⱼ} τⱼ (equal to m·f for homogeneous f of degree m).
    pub u: ScalarField,
    pub validity_time: f64,
}

/// Exact pointwise solver for the b̂₁ flow.
#[derive(Debug, Clone)]
pub struct CharacteristicsSolver {
    generator: B1Generator,
    tau0: Vec<ScalarField>,
    orientation: f64,
    validity_time: f64,
    vrange: (f64, f64),
}

impl CharacteristicsSolver {
    pub fn new(generator: B1Generator, tau0: Vec<ScalarField>, orientation: f64) -> Result<Self> {
        let n = tau0.len();
        if n == 0 {
            return Err(FlowError::InvalidInput("no initial fields".into()));
        }
        let g = tau0[0].grid;
        if tau0.iter().any(|f| f.grid != g) {
            return Err(FlowError::InvalidInput("initial fields must share a grid".into()));
        }
        if let B1Generator::Monomial { terms, m, l } = &generator {
            check_monomial_class(terms, *m, *l)?;
            if terms.iter().any(|t| t.alpha.len() > n) {
                return Err(FlowError::InvalidInput("monomial uses more than n power sums".into()));
            }
        }
        // Ã = ½ a bᵀ with aᵢ = iτᵢ, b = ∇f: non-zero and nilpotent when aᵀb = 0.
        let mut tau = vec![0.0; n];
        for i in 0..g.count {
            for k in 0..n {
                tau[k] = tau0[k].values[i];
            }
            let grad = generator.grad(&tau);
            let a: Vec<f64> = (0..n).map(|k| (k + 1) as f64 * tau[k]).collect();
            let dot: f64 = a.iter().zip(&grad).map(|(p, q)| p * q).sum();
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na * nb > 0.0 && dot.abs() <= 1e-12 * na * nb {
                return Err(FlowError::NotHyperbolic(format!(
                    "Σ i·τᵢ·f_τᵢ vanishes at x = {} while Ã is non-zero",
                    g.x(i)
                )));
            }
        }
        if n >= 2 && !matches!(generator, B1Generator::Constant(_)) {
            let scale = tau0[0].max_abs();
            if tau0[0].values.iter().any(|v| v.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
                return Err(FlowError::DegenerateRatio("τ₁ vanishes on the initial data".into()));
            }
        }
        let mut solver = Self { generator, tau0, orientation, validity_time: f64::INFINITY, vrange: (0.0, 0.0) };
        let speed = ScalarField { grid: g, values: (0..g.count).map(|i| solver.first_speed_sample(i)).collect() };
        solver.vrange = min_max(&speed.values);
        solver.validity_time = match solver.generator {
            B1Generator::Constant(_) => f64::INFINITY,
            _ => crossing_time(&speed),
        };
        Ok(solver)
    }

    pub fn validity_time(&self) -> f64 {
        self.validity_time
    }

    fn tau0_at(&self, xi: f64) -> Vec<f64> {
        self.tau0.iter().map(|f| f.eval(xi)).collect()
    }

    fn first_speed_from_tau(&self, tau: &[f64]) -> f64 {
        let s = self.orientation;
        match &self.generator {
            B1Generator::Constant(c) => 0.5 * s * c,
            B1Generator::Tau1(sf) => 0.5 * s * (sf.value(tau[0]) + tau[0] * sf.deriv(tau[0])),
            B1Generator::Monomial { l, .. } => 0.5 * s * (*l as f64 + 1.0) * self.generator.f(tau),
        }
    }

    fn first_speed_sample(&self, i: usize) -> f64 {
        let tau: Vec<f64> = self.tau0.iter().map(|f| f.values[i]).collect();
        self.first_speed_from_tau(&tau)
    }

    fn first_speed_at_foot(&self, xi: f64) -> f64 {
        self.first_speed_from_tau(&self.tau0_at(xi))
    }

    /// f and, for f = f(τ₁), τ₁ at (x, t) from the first family.
    fn first_family(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let v = |xi: f64| self.first_speed_at_foot(xi);
        let xi = implicit_foot(x, t, &v, self.vrange)?;
        let tau = self.tau0_at(xi);
        Ok((self.generator.f(&tau), tau[0]))
    }

    /// Characteristic speeds (first family, second family) at a state.
    pub fn speeds(&self, tau: &[f64]) -> (f64, f64) {
        let f = self.generator.f(tau);
        let grad = self.generator.grad(tau);
        let lt: f64 = 0.5 * (0..tau.len()).map(|k| (k + 1) as f64 * tau[k] * grad[k]).sum::<f64>();
        (self.orientation * (lt + 0.5 * f), self.orientation * 0.5 * f)
    }

    /// τ(x, t) for 0 ≤ t < T.
    pub fn state_at(&self, x: f64, t: f64) -> Result<Vec<f64>> {
        if t >= self.validity_time {
            return Err(FlowError::BlowUp { requested: t, blowup: self.validity_time });
        }
        let n = self.tau0.len();
        if let B1Generator::Constant(c) = self.generator {
            return Ok(self.tau0_at(x - 0.5 * self.orientation * c * t));
        }
        let (f, tau1_tau1gen) = self.first_family(x, t)?;
        if n == 1 {
            return Ok(vec![tau1_tau1gen]);
        }
        // Second family: trace dX/ds = s·f(X, s)/2 back to s = 0.
        let s = self.orientation;
        let foot = integrate(
            |time, xx| Ok(0.5 * s * self.first_family(xx, time)?.0),
            t,
            x,
            0.0,
            TRACE_TOL,
        )?;
        let t0 = self.tau0_at(foot);
        if t0[0] == 0.0 {
            return Err(FlowError::DegenerateRatio(format!("τ₁ = 0 at the foot {foot}")));
        }
        let ratios: Vec<f64> = (0..n).map(|k| t0[k] / t0[0].powi(k as i32 + 1)).collect();
        let tau1 = match &self.generator {
            B1Generator::Tau1(_) => tau1_tau1gen,
            B1Generator::Monomial { terms, l, .. } => {
                let kc: f64 = terms.iter().map(|tm| tm.eval(&ratios)).sum();
                if kc == 0.0 {
                    return Err(FlowError::DegenerateRatio("f vanishes on the ratio manifold".into()));
                }
                let r = f / kc;
                let root = r.abs().powf(1.0 / *l as f64);
                if l % 2 == 1 {
                    root * r.signum()
                } else {
                    if r < 0.0 {
                        return Err(FlowError::Numerical("no real τ₁ for an even weighted degree".into()));
                    }
                    root * t0[0].signum()
                }
            }
            B1Generator::Constant(_) => unreachable!(),
        };
        Ok((0..n).map(|k| ratios[k] * tau1.powi(k as i32 + 1)).collect())
    }

    pub fn solve(&self, t: f64) -> Result<CharacteristicSolution> {
        let g = self.tau0[0].grid;
        let n = self.tau0.len();
        let mut cols = vec![Vec::with_capacity(g.count); n];
        let mut fi = Vec::with_capacity(g.count);
        let mut u = Vec::with_capacity(g.count);
        for i in 0..g.count {
            let st = self.state_at(g.x(i), t)?;
            let grad = self.generator.grad(&st);
            fi.push(self.generator.f(&st));
            u.push(grad.iter().zip(&st).map(|(a, b)| a * b).sum());
            for k in 0..n {
                cols[k].push(st[k]);
            }
        }
        Ok(CharacteristicSolution {
            t,
            fields: cols.into_iter().map(|v| ScalarField { grid: g, values: v }).collect(),
            first_integral: ScalarField { grid: g, values: fi },
            u: ScalarField { grid: g, values: u },
            validity_time: self.validity_time,
        })
    }
}

/// Exact b̂₁-flow solution on the initial grid.
pub fn solve_characteristics_b1(
    generator: B1Generator,
    tau0: &[ScalarField],
    t: f64,
    orientation: f64,
) -> Result<CharacteristicSolution> {
    CharacteristicsSolver::new(generator, tau0.to_vec(), orientation)?.solve(t)
}

/// Time-stamped bundle of τ-fields.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub fields: Vec<ScalarField>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStop {
    Completed,
    /// Max gradient exceeded `growth_limit` times its initial value.
    GradientBlowUp { t: f64 },
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Extra snapshot times in (0, t_end]; hit exactly.
    pub sample_times: Vec<f64>,
    pub growth_limit: f64,
    pub max_steps: usize,
    /// Imaginary parts above tol·ρ abort the run.
    pub hyperbolicity_tol: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self { sample_times: Vec::new(), growth_limit: 1e6, max_steps: 2_000_000, hyperbolicity_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct FdResult {
    /// t = 0, the requested samples reached, and the final time.
    pub snapshots: Vec<FlowState>,
    /// (t, max |∂ₓτ|) after every step.
    pub gradient_history: Vec<(f64, f64)>,
    pub stop: FdStop,
    pub achieved_t: f64,
    pub steps: usize,
}

impl FdResult {
    pub fn final_state(&self) -> &FlowState {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// Snapshot recorded at time t (to rounding).
    pub fn at(&self, t: f64) -> Option<&FlowState> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }
}

/// Spectral radius of a real matrix, failing on non-real eigenvalues.
fn checked_spectral_radius(m: &DMatrix<f64>, tol: f64) -> std::result::Result<f64, String> {
    let n = m.nrows();
    match n {
        1 => Ok(m[(0, 0)].abs()),
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let half = 0.5 * tr;
            let disc = half * half - det;
            let scale = half.abs() + det.abs().sqrt();
            if disc < 0.0 && disc.abs().sqrt() > tol * scale.max(f64::MIN_POSITIVE) {
                return Err(format!("complex pair {half} ± {}i", (-disc).sqrt()));
            }
            Ok(half.abs() + disc.max(0.0).sqrt())
        }
        _ => {
            let ev = m.clone().complex_eigenvalues();
            let rho = ev.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if let Some(z) = ev.iter().find(|z| z.im.abs() > tol * rho.max(f64::MIN_POSITIVE)) {
                return Err(format!("complex eigenvalue {z}"));
            }
            Ok(rho)
        }
    }
}

struct FdWork {
    n: usize,
    count: usize,
    dx: f64,
    boundary: Boundary,
    xs: Vec<f64>,
}

impl FdWork {
    /// Field k padded with two ghost cells on each side.
    fn ghosted(&self, u: &[f64]) -> Vec<f64> {
        let c = self.count;
        let mut g = vec![0.0; c + 4];
        g[2..c + 2].copy_from_slice(u);
        match self.boundary {
            Boundary::Periodic => {
                g[0] = u[c - 2];
                g[1] = u[c - 1];
                g[c + 2] = u[0];
                g[c + 3] = u[1];
            }
            Boundary::Extrapolate => {
                let dl = u[1] - u[0];
                g[1] = u[0] - dl;
                g[0] = u[0] - 2.0 * dl;
                let dr = u[c - 1] - u[c - 2];
                g[c + 2] = u[c - 1] + dr;
                g[c + 3] = u[c - 1] + 2.0 * dr;
            }
        }
        g
    }

    fn max_gradient(&self, state: &[Vec<f64>]) -> f64 {
        let c = self.count;
        let mut m = 0.0f64;
        for u in state {
            for i in 0..c - 1 {
                m = m.max((u[i + 1] - u[i]).abs());
            }
            if self.boundary == Boundary::Periodic {
                m = m.max((u[0] - u[c - 1]).abs());
            }
        }
        m / self.dx
    }

    /// Semi-discrete right-hand side and the largest spectral radius.
    fn rhs<F>(&self, state: &[Vec<f64>], t: f64, system_at: &F, tol: f64) -> Result<(Vec<Vec<f64>>, f64)>
    where
        F: Fn(&[f64], f64, f64) -> Result<TruncatedSystem>,
    {
        let (n, c, dx) = (self.n, self.count, self.dx);
        let ghosts: Vec<Vec<f64>> = state.iter().map(|u| self.ghosted(u)).collect();
        // Interface q sits between ghost slots q and q+1, q = 1…c+1.
        let mut mid = vec![vec![0.0; c + 2]; n];
        let mut jump = vec![vec![0.0; c + 2]; n];
        for k in 0..n {
            let g = &ghosts[k];
            for q in 1..=c + 1 {
                let ul = g[q] + 0.25 * (g[q + 1] - g[q - 1]);
                let ur = g[q + 1] - 0.25 * (g[q + 2] - g[q]);
                mid[k][q] = 0.5 * (ul + ur);
                jump[k][q] = ur - ul;
            }
        }
        let mut rho = vec![0.0; c];
        let mut mats = Vec::with_capacity(c);
        let mut srcs = Vec::with_capacity(c);
        let mut local = vec![0.0; n];
        for i in 0..c {
            for k in 0..n {
                local[k] = state[k][i];
            }
            let sys = system_at(&local, self.xs[i], t)?;
            let m = sys.matrix();
            rho[i] = checked_spectral_radius(&m, tol)
                .map_err(|e| FlowError::NotHyperbolic(format!("at x = {}, t = {t}: {e}", self.xs[i])))?;
            mats.push(m);
            srcs.push(sys.source);
        }
        let alpha = |q: usize| -> f64 {
            // Cells adjacent to interface q are q−2 and q−1.
            let left = if q >= 2 { q - 2 } else if self.boundary == Boundary::Periodic { c - 1 } else { 0 };
            let right = if q - 1 < c { q - 1 } else if self.boundary == Boundary::Periodic { 0 } else { c - 1 };
            rho[left].max(rho[right])
        };
        let mut out = vec![vec![0.0; c]; n];
        let mut diff = DVector::zeros(n);
        for i in 0..c {
            let (ql, qr) = (i + 1, i + 2);
            let (al, ar) = (alpha(ql), alpha(qr));
            for k in 0..n {
                diff[k] = (mid[k][qr] - mid[k][ql]) / dx;
            }
            let adv = &mats[i] * &diff;
            for k in 0..n {
                out[k][i] = -adv[k] + (ar * jump[k][qr] - al * jump[k][ql]) / (2.0 * dx) + srcs[i][k];
            }
        }
        let rmax = rho.iter().copied().fold(0.0, f64::max);
        Ok((out, rmax))
    }
}

fn axpy(a: &[Vec<f64>], b: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect())
        .collect()
}

fn lincomb(wa: f64, a: &[Vec<f64>], wb: f64, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect())
        .collect()
}

/// Finite-difference oracle for ∂ₜτ + M(τ, x, t)∂ₓτ = source.
///
/// Local Lax–Friedrichs interface dissipation on a centred four-point
/// reconstruction, SSP-RK3 in time, Δt = cfl·Δx / max ρ(M).
pub fn solve_fd<F>(
    system_at: F,
    tau0: &[ScalarField],
    t_end: f64,
    cfl: f64,
    opts: &FdOptions,
) -> Result<FdResult>
where
    F: Fn(&[f64], f64, f64) -> Result<TruncatedSystem>,
{
    if !(cfl > 0.0 && cfl <= 0.9) {
        return Err(FlowError::InvalidInput(format!("cfl = {cfl} outside (0, 0.9]")));
    }
    if tau0.is_empty() {
        return Err(FlowError::InvalidInput("no initial fields".into()));
    }
    let grid = tau0[0].grid;
    if tau0.iter().any(|f| f.grid != grid) {
        return Err(FlowError::InvalidInput("initial fields must share a grid".into()));
    }
    if grid.count < 4 {
        return Err(FlowError::InvalidInput("finite differences need at least four samples".into()));
    }
    let work = FdWork { n: tau0.len(), count: grid.count, dx: grid.dx, boundary: grid.boundary, xs: grid.xs() };
    let mut state: Vec<Vec<f64>> = tau0.iter().map(|f| f.values.clone()).collect();
    let mut targets: Vec<f64> = opts.sample_times.iter().copied().filter(|&s| s > 0.0 && s < t_end).collect();
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let to_state = |t: f64, s: &[Vec<f64>]| FlowState {
        t,
        fields: s.iter().map(|v| ScalarField { grid, values: v.clone() }).collect(),
    };
    let mut snapshots = vec![to_state(0.0, &state)];
    let g0 = work.max_gradient(&state);
    let mut history = vec![(0.0, g0)];
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut stop = FdStop::Completed;
    let mut next_target = 0usize;
    let tol = opts.hyperbolicity_tol;

    while next_target < targets.len() {
        if steps >= opts.max_steps {
            stop = FdStop::StepLimit;
            break;
        }
        let target = targets[next_target];
        let (k1, rmax) = work.rhs(&state, t, &system_at, tol)?;
        let mut dt = if rmax > 0.0 { cfl * work.dx / rmax } else { target - t };
        let mut hit = false;
        if t + dt >= target - 1e-14 * (1.0 + target) {
            dt = target - t;
            hit = true;
        }
        let u1 = axpy(&state, &k1, dt);
        let (k2, _) = work.rhs(&u1, t + dt, &system_at, tol)?;
        let u2 = lincomb(0.75, &state, 0.25, &axpy(&u1, &k2, dt));
        let (k3, _) = work.rhs(&u2, t + 0.5 * dt, &system_at, tol)?;
        let next = lincomb(1.0 / 3.0, &state, 2.0 / 3.0, &axpy(&u2, &k3, dt));
        if next.iter().any(|u| u.iter().any(|v| !v.is_finite())) {
            return Err(FlowError::NumericalOverflow { last_valid_t: t });
        }
        state = next;
        t = if hit { target } else { t + dt };
        steps += 1;
        let gmax = work.max_gradient(&state);
        history.push((t, gmax));
        if hit {
            snapshots.push(to_state(t, &state));
            next_target += 1;
        }
        if g0 > 0.0 && gmax > opts.growth_limit * g0 {
            stop = FdStop::GradientBlowUp { t };
            if !hit {
                snapshots.push(to_state(t, &state));
            }
            break;
        }
    }
    if stop == FdStop::StepLimit && snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(to_state(t, &state));
    }
    Ok(FdResult { snapshots, gradient_history: history, stop, achieved_t: t, steps })
}

/// First time at which the recorded gradient exceeds `factor` times its initial value.
pub fn empirical_blowup_time(history: &[(f64, f64)], factor: f64) -> Option<f64> {
    let g0 = history.first()?.1;
    history.iter().find(|(_, g)| *g > factor * g0).map(|(t, _)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::flow_models::{assemble_type_b, preset, scalar_psi_family, Preset};
    use std::f64::consts::{PI, TAU};

    fn periodic(cells: usize) -> Grid {
        Grid::from_cells(0.0, TAU, cells, Boundary::Periodic).unwrap()
    }

    fn line(a: f64, b: f64, cells: usize) -> Grid {
        Grid::from_cells(a, b, cells, Boundary::Extrapolate).unwrap()
    }

    #[test]
    fn transport_examples() {
        let g = periodic(512);
        let f = ScalarField::from_fn(g, f64::sin);
        let out = solve_transport(0.5, &f, TAU).unwrap();
        let want = ScalarField::from_fn(g, |x| (x - PI).sin());
        assert!(out.max_abs_diff(&want) < 1e-8);
        assert!(solve_transport(0.0, &f, 3.0).unwrap().max_abs_diff(&f) < 1e-15);
        assert!(solve_transport(1.0, &f, -1.0).is_err());
    }

    #[test]
    fn conservation_law_examples() {
        let g = line(-1.0, 1.0, 200);
        let burgers = ScalarFunction::monomial(1.0, 2);
        let l0 = ScalarField::from_fn(g, |x| x);
        let out = solve_conservation_law(&burgers, &l0, 5.0, 1.0).unwrap();
        let want = ScalarField::from_fn(g, |x| x / 6.0);
        assert!(out.max_abs_diff(&want) < 1e-12);
        // Linear flux: pure transport at c/2.
        let lin = ScalarFunction::new(|l| 3.0 * l, |_| 3.0);
        let gp = periodic(400);
        let s0 = ScalarField::from_fn(gp, |x| x.sin());
        let out = solve_conservation_law(&lin, &s0, 0.7, 1.0).unwrap();
        let want = solve_transport(1.5, &s0, 0.7).unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);
        // ψ = λ: λ_t(s) = λ₀(s − t/2), and the reversed orientation moves the other way.
        let id = ScalarFunction::monomial(1.0, 1);
        let out = solve_conservation_law(&id, &s0, 1.0, 1.0).unwrap();
        assert!(out.max_abs_diff(&ScalarField::from_fn(gp, |x| (x - 0.5).sin())) < 1e-7);
        let out = solve_conservation_law(&id, &s0, 1.0, -1.0).unwrap();
        assert!(out.max_abs_diff(&ScalarField::from_fn(gp, |x| (x + 0.5).sin())) < 1e-7);
    }

    #[test]
    fn conservation_law_refuses_blowup() {
        let g = line(-1.0, 1.0, 256);
        let l0 = ScalarField::from_fn(g, |x| -x);
        let burgers = ScalarFunction::monomial(1.0, 2);
        assert_eq!(blowup_time_conservation(&burgers, &l0, 1.0), 1.0);
        match solve_conservation_law(&burgers, &l0, 1.0, 1.0) {
            Err(FlowError::BlowUp { blowup, .. }) => assert_eq!(blowup, 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
        let rising = ScalarField::from_fn(g, |x| x.exp());
        assert_eq!(blowup_time_conservation(&burgers, &rising, 1.0), f64::INFINITY);
    }

    #[test]
    fn ricci_closed_form_matches_generic_time() {
        let g = line(-1.0, 1.0, 256);
        let l0 = ScalarField::from_fn(g, |x| x);
        for n in 2..=4usize {
            let psi = ScalarFunction::monomial(2.0 * (1.0 - n as f64), 2);
            let a = blowup_time_conservation(&psi, &l0, 1.0);
            let b = ricci_umbilical_blowup_time(n, &l0, 1.0);
            assert!((a - b).abs() < 1e-12, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn ricci_closed_form_differs_off_linear_data() {
        // For λ₀ = sin x the generic time is 1/2 while the closed form gives 1:
        // sup N(λ₀²) = sup sin 2x = 1 but min ∂ₓψ′(λ₀) = −4.
        let g = periodic(4096);
        let l0 = ScalarField::from_fn(g, f64::sin);
        let psi = ScalarFunction::monomial(-2.0, 2);
        let generic = blowup_time_conservation(&psi, &l0, 1.0);
        let closed = ricci_umbilical_blowup_time(2, &l0, 1.0);
        assert!((generic - 0.5).abs() < 1e-5);
        assert!((closed - 1.0).abs() < 1e-5);
    }

    #[test]
    fn monomial_blowup_examples() {
        let g = line(-1.0, 1.0, 256);
        let tau1 = ScalarField::from_fn(g, |x| -x);
        let f = [MonomialTerm::new(vec![1], 1.0)];
        assert_eq!(blowup_time_monomial(&f, &[tau1], 1, 1, 1.0).unwrap(), 1.0);
        let c = ScalarField::constant(g, 2.0);
        assert_eq!(blowup_time_monomial(&f, &[c], 1, 1, 1.0).unwrap(), f64::INFINITY);
        let gp = periodic(4096);
        let s = ScalarField::from_fn(gp, f64::sin);
        let sq = [MonomialTerm::new(vec![2], 1.0)];
        let t = blowup_time_monomial(&sq, std::slice::from_ref(&s), 2, 2, 1.0).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-5);
        assert!(blowup_time_monomial(&sq, &[s], 2, 3, 1.0).is_err());
    }

    #[test]
    fn characteristics_constant_speed() {
        let g = periodic(400);
        let t1 = ScalarField::from_fn(g, |x| 1.0 + 0.3 * x.sin());
        let t2 = ScalarField::from_fn(g, |x| 2.0 + 0.1 * x.cos());
        let sol = solve_characteristics_b1(B1Generator::Constant(0.8), &[t1.clone(), t2.clone()], 1.5, 1.0).unwrap();
        assert!(sol.fields[0].max_abs_diff(&solve_transport(0.4, &t1, 1.5).unwrap()) < 1e-15);
        assert!(sol.fields[1].max_abs_diff(&solve_transport(0.4, &t2, 1.5).unwrap()) < 1e-15);
        assert_eq!(sol.validity_time, f64::INFINITY);
    }

    #[test]
    fn characteristics_tau1_matches_conservation_law() {
        // f = f(τ₁) on one field: ψ(λ) = λ f(λ).
        let g = periodic(512);
        let l0 = ScalarField::from_fn(g, f64::sin);
        let f = ScalarFunction::new(|l| 1.0 + l * l, |l| 2.0 * l);
        let psi = ScalarFunction::new(|l| l * (1.0 + l * l), |l| 1.0 + 3.0 * l * l);
        let t = 0.5 * blowup_time_conservation(&psi, &l0, 1.0);
        let a = solve_characteristics_b1(B1Generator::Tau1(f), std::slice::from_ref(&l0), t, 1.0).unwrap();
        let b = solve_conservation_law(&psi, &l0, t, 1.0).unwrap();
        assert!(a.fields[0].max_abs_diff(&b) < 1e-6);
    }

    #[test]
    fn monomial_first_family_lines() {
        let g = periodic(256);
        let t1 = ScalarField::from_fn(g, |x| 1.5 + 0.4 * x.sin());
        let t2 = ScalarField::from_fn(g, |x| 3.0 + 0.5 * x.cos());
        let terms = vec![MonomialTerm::new(vec![1, 0], 1.0)];
        let gen = B1Generator::Monomial { terms, m: 1, l: 1 };
        let solver = CharacteristicsSolver::new(gen, vec![t1.clone(), t2], 1.0).unwrap();
        let t = 0.4 * solver.validity_time();
        for &xi in &[0.3, 1.7, 4.0] {
            let f0 = t1.eval(xi);
            let x = xi + f0 * t; // ((l+1)/2) f₀ t with l = 1
            let st = solver.state_at(x, t).unwrap();
            assert!((st[0] - f0).abs() < 1e-9);
        }
    }

    #[test]
    fn characteristics_errors() {
        let g = periodic(64);
        let zero = ScalarField::from_fn(g, f64::sin);
        let t2 = ScalarField::constant(g, 1.0);
        let gen = B1Generator::Monomial { terms: vec![MonomialTerm::new(vec![1, 0], 1.0)], m: 1, l: 1 };
        assert!(matches!(
            CharacteristicsSolver::new(gen.clone(), vec![zero.clone(), t2.clone()], 1.0),
            Err(FlowError::NotHyperbolic(_))
        ));
        // f = τ₂: Σ iτᵢ f_τᵢ = 2τ₂ stays away from zero, but τ₁ vanishes.
        let gen = B1Generator::Monomial { terms: vec![MonomialTerm::new(vec![0, 1], 1.0)], m: 1, l: 2 };
        assert!(matches!(
            CharacteristicsSolver::new(gen, vec![zero.clone(), t2.clone()], 1.0),
            Err(FlowError::DegenerateRatio(_))
        ));
        // f = f(τ₁) with τ₁ = 0: Ã is a non-zero nilpotent there.
        let f = ScalarFunction::new(|l| 2.0 + l, |_| 1.0);
        assert!(matches!(
            CharacteristicsSolver::new(B1Generator::Tau1(f), vec![zero, t2], 1.0),
            Err(FlowError::NotHyperbolic(_))
        ));
        assert!(check_monomial_class(&[MonomialTerm::new(vec![2, 1], 1.0)], 2, 4).is_err());
    }

    #[test]
    fn fd_transport_and_constants() {
        let g = periodic(2000);
        let fam = preset(&Preset::Power(1), 3).unwrap();
        let roots = |x: f64| [1.0 + 0.3 * x.sin(), -0.5 + 0.2 * x.cos(), 0.7];
        let tau0: Vec<ScalarField> = (1..=3)
            .map(|p| ScalarField::from_fn(g, |x| roots(x).iter().map(|k| k.powi(p)).sum()))
            .collect();
        let res = solve_fd(|tau, _, t| assemble_type_b(&fam, tau, t), &tau0, 1.0, 0.5, &FdOptions::default()).unwrap();
        assert_eq!(res.stop, FdStop::Completed);
        let fin = res.final_state();
        for k in 0..3 {
            let want = solve_transport(0.5, &tau0[k], 1.0).unwrap();
            assert!(fin.fields[k].max_abs_diff(&want) < 1e-3);
        }
        let flat: Vec<ScalarField> = (0..3).map(|k| ScalarField::constant(g, 1.0 + k as f64)).collect();
        let ricci = preset(&Preset::RicciEx, 3).unwrap();
        let res = solve_fd(|tau, _, t| assemble_type_b(&ricci, tau, t), &flat, 0.5, 0.5, &FdOptions::default());
        // Constant data: either hyperbolic and unchanged, or refused up front.
        if let Ok(res) = res {
            for (a, b) in res.final_state().fields.iter().zip(&flat) {
                assert!(a.max_abs_diff(b) < 1e-12);
            }
        }
    }

    #[test]
    fn fd_detects_burgers_blowup() {
        let g = line(-1.0, 1.0, 200);
        let l0 = ScalarField::from_fn(g, |x| -x);
        let fam = scalar_psi_family(ScalarFunction::monomial(1.0, 2));
        let res = solve_fd(|tau, _, t| assemble_type_b(&fam, tau, t), &[l0], 2.0, 0.5, &FdOptions::default()).unwrap();
        match res.stop {
            FdStop::GradientBlowUp { t } => assert!((t - 1.0).abs() < 0.1, "t = {t}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn fd_rejects_complex_speeds() {
        let g = periodic(32);
        let tau0 = vec![ScalarField::constant(g, 1.0), ScalarField::constant(g, 0.0)];
        let rot = |_: &[f64], _: f64, _: f64| {
            Ok(TruncatedSystem {
                a_tilde: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
                b_tilde: DMatrix::zeros(2, 2),
                source: DVector::zeros(2),
            })
        };
        assert!(matches!(solve_fd(rot, &tau0, 1.0, 0.5, &FdOptions::default()), Err(FlowError::NotHyperbolic(_))));
        assert!(solve_fd(rot, &tau0, 1.0, 0.95, &FdOptions::default()).is_err());
    }
}
