//! Generating families, truncated systems and hyperbolicity.
//!
//! A type-(b) family is a list f₀…f_J of functions of τ = (τ₁…τ_n) and t; the
//! flow is ∂ₜg = Σⱼ fⱼ b̂ⱼ. Its n-truncated system along a normal curve reads
//! ∂ₜτ + (Ã + B̃) N(τ) = 0. A type-(a) family has space-time coefficients f̃ⱼ(x, t)
//! and produces ∂ₜτ + M N(τ) = â.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::companion_matrices::b_n1;
use crate::error::{FlowError, Result};
use crate::symmetric_functions::{
    extended_tau_gradient, sigma_from_tau, sigma_jacobian, sigma_padded, sign, tau_from_sigma,
};

pub type CoeffFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type PartialFn = Arc<dyn Fn(&[f64], f64) -> Vec<Vec<f64>> + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function of one variable with its derivative.
#[derive(Clone)]
pub struct ScalarFunction {
    pub f: RealFn,
    pub df: RealFn,
}

impl ScalarFunction {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), df: Arc::new(df) }
    }

    /// a·λᵏ.
    pub fn monomial(a: f64, k: i32) -> Self {
        Self::new(
            move |l| a * l.powi(k),
            move |l| if k == 0 { 0.0 } else { a * k as f64 * l.powi(k - 1) },
        )
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFunction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    TypeA,
    TypeB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    RicciEx,
    Ent(usize),
    Power(usize),
    Constant(f64),
    ScalarPsi,
    B1,
    Custom,
}

#[derive(Clone)]
pub struct GeneratingFamily {
    pub n: usize,
    pub kind: FamilyKind,
    pub preset: Preset,
    /// Highest index J with a non-zero fⱼ.
    pub max_index: usize,
    eval: CoeffFn,
    partials: Option<PartialFn>,
}

impl fmt::Debug for GeneratingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratingFamily")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("preset", &self.preset)
            .field("max_index", &self.max_index)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl GeneratingFamily {
    /// Type-(b) family f₀…f_J(τ, t); missing partials fall back to central differences.
    pub fn type_b(
        n: usize,
        max_index: usize,
        eval: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
        partials: Option<PartialFn>,
    ) -> Self {
        Self {
            n,
            kind: FamilyKind::TypeB,
            preset: Preset::Custom,
            max_index,
            eval: Arc::new(eval),
            partials,
        }
    }

    /// Type-(a) family f̃₀…f̃_J(x, t); `eval` receives `&[x]`.
    pub fn type_a(
        n: usize,
        max_index: usize,
        eval: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            kind: FamilyKind::TypeA,
            preset: Preset::Custom,
            max_index,
            eval: Arc::new(eval),
            partials: None,
        }
    }

    /// The b̂₁ flow ∂ₜg = f(τ) b̂₁ with analytic gradient ∇f.
    pub fn b1(
        n: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let grad = Arc::new(grad);
        Self {
            n,
            kind: FamilyKind::TypeB,
            preset: Preset::B1,
            max_index: 1,
            eval: Arc::new(move |tau, _| vec![0.0, f(tau)]),
            partials: Some(Arc::new(move |tau, _| vec![vec![0.0; tau.len()], grad(tau)])),
        }
    }

    /// fⱼ(τ, t) for j = 0…J.
    pub fn eval(&self, args: &[f64], t: f64) -> Vec<f64> {
        let mut v = (self.eval)(args, t);
        v.resize(self.max_index + 1, 0.0);
        v
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    /// f_{j,τ_s}(τ, t), indexed [j][s − 1].
    pub fn partials(&self, tau: &[f64], t: f64) -> Vec<Vec<f64>> {
        match &self.partials {
            Some(p) => {
                let mut rows = p(tau, t);
                rows.resize(self.max_index + 1, vec![0.0; tau.len()]);
                rows
            }
            None => self.partials_fd(tau, t),
        }
    }

    /// Central differences with step 1e−6·(1 + |τ_s|).
    pub fn partials_fd(&self, tau: &[f64], t: f64) -> Vec<Vec<f64>> {
        let n = tau.len();
        let mut out = vec![vec![0.0; n]; self.max_index + 1];
        let mut tp = tau.to_vec();
        let mut tm = tau.to_vec();
        for s in 0..n {
            let h = 1e-6 * (1.0 + tau[s].abs());
            tp[s] = tau[s] + h;
            tm[s] = tau[s] - h;
            let fp = self.eval(&tp, t);
            let fm = self.eval(&tm, t);
            for j in 0..=self.max_index {
                out[j][s] = (fp[j] - fm[j]) / (2.0 * h);
            }
            tp[s] = tau[s];
            tm[s] = tau[s];
        }
        out
    }
}

/// Named flows.
pub fn preset(kind: &Preset, n: usize) -> Result<GeneratingFamily> {
    if n == 0 {
        return Err(FlowError::InvalidInput("leaf dimension must be positive".into()));
    }
    let fam = match kind {
        Preset::RicciEx => {
            if n < 2 {
                return Err(FlowError::InvalidInput("extrinsic Ricci flow needs n ≥ 2".into()));
            }
            // f₁ = −2τ₁, f₂ = 2; for n = 2 the index j = n is closed by τ-elimination.
            GeneratingFamily {
                n,
                kind: FamilyKind::TypeB,
                preset: Preset::RicciEx,
                max_index: 2,
                eval: Arc::new(|tau, _| vec![0.0, -2.0 * tau[0], 2.0]),
                partials: Some(Arc::new(|tau, _| {
                    let mut d1 = vec![0.0; tau.len()];
                    d1[0] = -2.0;
                    vec![vec![0.0; tau.len()], d1, vec![0.0; tau.len()]]
                })),
            }
        }
        Preset::Ent(s) => {
            let s = *s;
            if s >= n {
                return Err(FlowError::InvalidInput(format!("ENT order s = {s} must be below n = {n}")));
            }
            // fⱼ = (−1)ʲ σ_{s−j}(τ), j = 0…s.
            GeneratingFamily {
                n,
                kind: FamilyKind::TypeB,
                preset: Preset::Ent(s),
                max_index: s,
                eval: Arc::new(move |tau, _| {
                    let sigma = sigma_from_tau(tau).expect("non-empty τ");
                    (0..=s).map(|j| sign(j) * sigma_padded(&sigma, s - j)).collect()
                }),
                partials: Some(Arc::new(move |tau, _| {
                    let jac = sigma_jacobian(tau).expect("non-empty τ");
                    (0..=s)
                        .map(|j| {
                            let k = s - j;
                            if k == 0 {
                                vec![0.0; tau.len()]
                            } else {
                                jac[k - 1].iter().map(|d| sign(j) * d).collect()
                            }
                        })
                        .collect()
                })),
            }
        }
        Preset::Power(m) => {
            let m = *m;
            if m >= n {
                return Err(FlowError::InvalidInput(format!("power index m = {m} must be below n = {n}")));
            }
            GeneratingFamily {
                n,
                kind: FamilyKind::TypeB,
                preset: Preset::Power(m),
                max_index: m,
                eval: Arc::new(move |_, _| {
                    let mut v = vec![0.0; m + 1];
                    v[m] = 1.0;
                    v
                }),
                partials: Some(Arc::new(move |tau, _| vec![vec![0.0; tau.len()]; m + 1])),
            }
        }
        Preset::Constant(c) => {
            let c = *c;
            GeneratingFamily {
                n,
                kind: FamilyKind::TypeB,
                preset: Preset::Constant(c),
                max_index: 0,
                eval: Arc::new(move |_, _| vec![c]),
                partials: Some(Arc::new(|tau, _| vec![vec![0.0; tau.len()]])),
            }
        }
        Preset::ScalarPsi | Preset::B1 | Preset::Custom => {
            return Err(FlowError::InvalidInput(format!(
                "{kind:?} needs user functions; use scalar_psi_family or GeneratingFamily::b1"
            )))
        }
    };
    Ok(fam)
}

/// n = 1 family with f₀ = ψ(τ₁), so that the single equation is ∂ₜλ + ½N(ψ(λ)) = 0.
pub fn scalar_psi_family(psi: ScalarFunction) -> GeneratingFamily {
    let p2 = psi.clone();
    GeneratingFamily {
        n: 1,
        kind: FamilyKind::TypeB,
        preset: Preset::ScalarPsi,
        max_index: 0,
        eval: Arc::new(move |tau, _| vec![psi.value(tau[0])]),
        partials: Some(Arc::new(move |tau, _| vec![vec![p2.deriv(tau[0])]])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    StrictlyHyperbolic,
    Hyperbolic,
    NotHyperbolic,
}

impl Classification {
    pub fn is_hyperbolic(self) -> bool {
        !matches!(self, Classification::NotHyperbolic)
    }

    pub fn label(self) -> &'static str {
        match self {
            Classification::StrictlyHyperbolic => "strictly-hyperbolic",
            Classification::Hyperbolic => "hyperbolic",
            Classification::NotHyperbolic => "not-hyperbolic",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// ∂ₜτ + (Ã + B̃)N(τ) = source.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSystem {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub source: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub classification: Classification,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Real eigenpairs when the spectrum is real; empty otherwise.
    pub eigenvectors: Vec<(f64, DVector<f64>)>,
}

impl TruncatedSystem {
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.a_tilde + &self.b_tilde
    }

    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }
}

/// τ₀…τ_L with τ₀ = n, extended past n through Newton's identities.
fn extended_tau(tau: &[f64], upto: usize) -> Result<Vec<f64>> {
    let n = tau.len();
    let mut out = Vec::with_capacity(upto + 1);
    out.push(n as f64);
    if upto <= n {
        out.extend_from_slice(&tau[..upto]);
    } else {
        let sigma = sigma_from_tau(tau)?;
        out.extend(tau_from_sigma(&sigma, upto));
    }
    Ok(out)
}

fn powers(b: &DMatrix<f64>, max: usize) -> Vec<DMatrix<f64>> {
    let n = b.nrows();
    let mut out = vec![DMatrix::identity(n, n)];
    for k in 1..=max {
        let next = &out[k - 1] * b;
        out.push(next);
    }
    out
}

pub fn assemble_type_b(family: &GeneratingFamily, tau: &[f64], t: f64) -> Result<TruncatedSystem> {
    if family.kind != FamilyKind::TypeB {
        return Err(FlowError::InvalidInput("assemble_type_b needs a type-(b) family".into()));
    }
    let n = family.n;
    if tau.len() != n {
        return Err(FlowError::InvalidInput(format!("expected {n} power sums, got {}", tau.len())));
    }
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::InvalidInput("power sums must be finite".into()));
    }
    let jmax = family.max_index;
    let f = family.eval(tau, t);
    let df = family.partials(tau, t);
    let ext = extended_tau(tau, n + jmax)?;
    let mut a = DMatrix::zeros(n, n);
    for i in 1..=n {
        for j in 1..=n {
            let s: f64 = (0..=jmax).map(|m| ext[i + m - 1] * df[m][j - 1]).sum();
            a[(i - 1, j - 1)] = 0.5 * i as f64 * s;
        }
    }
    let sigma = sigma_from_tau(tau)?;
    let pw = powers(&b_n1(&sigma), jmax.saturating_sub(1));
    let mut b = DMatrix::zeros(n, n);
    for m in 1..=jmax {
        if f[m] != 0.0 {
            b += &pw[m - 1] * (0.5 * m as f64 * f[m]);
        }
    }
    Ok(TruncatedSystem { a_tilde: a, b_tilde: b, source: DVector::zeros(n) })
}

/// Type-(a) system at a point: matrix Σⱼ (j/2) f̃ⱼ (B_{n,1})^{j−1}, source âᵢ = −(i/2)Σⱼ N(f̃ⱼ) τ_{i+j−1}.
pub fn assemble_type_a(
    family: &GeneratingFamily,
    x: f64,
    t: f64,
    tau: &[f64],
    n_of_f: &[f64],
) -> Result<TruncatedSystem> {
    if family.kind != FamilyKind::TypeA {
        return Err(FlowError::InvalidInput("assemble_type_a needs a type-(a) family".into()));
    }
    let n = family.n;
    let jmax = family.max_index;
    if tau.len() != n || n_of_f.len() != jmax + 1 {
        return Err(FlowError::InvalidInput(format!(
            "expected {n} power sums and {} normal derivatives",
            jmax + 1
        )));
    }
    let f = family.eval(&[x], t);
    let sigma = sigma_from_tau(tau)?;
    let pw = powers(&b_n1(&sigma), jmax.saturating_sub(1));
    let mut b = DMatrix::zeros(n, n);
    for j in 1..=jmax {
        if f[j] != 0.0 {
            b += &pw[j - 1] * (0.5 * j as f64 * f[j]);
        }
    }
    let ext = extended_tau(tau, n + jmax)?;
    let source = DVector::from_iterator(
        n,
        (1..=n).map(|i| {
            -0.5 * i as f64 * (0..=jmax).map(|j| n_of_f[j] * ext[i + j - 1]).sum::<f64>()
        }),
    );
    Ok(TruncatedSystem { a_tilde: DMatrix::zeros(n, n), b_tilde: b, source })
}

/// Default classification tolerance.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;
/// Relative gap under which computed eigenvalues count as one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Classifies a square matrix by its real spectrum and eigenvector completeness.
pub fn classify_matrix(m: &DMatrix<f64>, tol: f64) -> Spectrum {
    let n = m.nrows();
    let eig = m.clone().complex_eigenvalues();
    let eigenvalues: Vec<Complex<f64>> = eig.iter().copied().collect();
    let rho = eigenvalues.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let norm = m.norm();
    let scale = rho.max(norm).max(f64::MIN_POSITIVE);
    if eigenvalues.iter().any(|z| z.im.abs() > tol * rho.max(f64::MIN_POSITIVE)) {
        return Spectrum {
            classification: Classification::NotHyperbolic,
            eigenvalues,
            eigenvectors: Vec::new(),
        };
    }
    let mut re: Vec<f64> = eigenvalues.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for v in re {
        match clusters.last_mut() {
            Some(c) if (v - c[c.len() - 1]).abs() <= CLUSTER_TOL * scale => c.push(v),
            _ => clusters.push(vec![v]),
        }
    }
    let mut complete = true;
    let mut eigenvectors = Vec::with_capacity(n);
    for c in &clusters {
        let center = c.iter().sum::<f64>() / c.len() as f64;
        let shifted = m - DMatrix::identity(n, n) * center;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let nullity = idx
            .iter()
            .filter(|&&k| svd.singular_values[k] <= tol * scale)
            .count()
            .max(1);
        if nullity < c.len() {
            complete = false;
        }
        for &k in idx.iter().take(c.len()) {
            eigenvectors.push((center, v_t.row(k).transpose()));
        }
    }
    let classification = if !complete {
        Classification::NotHyperbolic
    } else if clusters.len() == n {
        Classification::StrictlyHyperbolic
    } else {
        Classification::Hyperbolic
    };
    Spectrum { classification, eigenvalues, eigenvectors }
}

/// Classification of a truncated system; rank-one Ã with B̃ = c·Id uses the (H₁)/(H₂) test.
pub fn classify_hyperbolicity(system: &TruncatedSystem, tol: f64) -> Spectrum {
    if let Some(c) = rank_one_shortcut(system, tol) {
        let mut s = classify_matrix(&system.matrix(), tol);
        s.classification = c;
        return s;
    }
    classify_matrix(&system.matrix(), tol)
}

fn rank_one_shortcut(system: &TruncatedSystem, tol: f64) -> Option<Classification> {
    let n = system.n();
    let b = &system.b_tilde;
    let c = b[(0, 0)];
    let bscale = b.norm().max(1.0);
    let scalar_b = (0..n).all(|i| {
        (0..n).all(|j| {
            let want = if i == j { c } else { 0.0 };
            (b[(i, j)] - want).abs() <= tol * bscale
        })
    });
    if !scalar_b {
        return None;
    }
    let a = &system.a_tilde;
    let anorm = a.norm();
    if anorm <= tol * bscale {
        return Some(if n == 1 { Classification::StrictlyHyperbolic } else { Classification::Hyperbolic });
    }
    let sv = a.singular_values();
    let rank = sv.iter().filter(|&&s| s > tol * anorm).count();
    if rank != 1 {
        return None;
    }
    let tr = a.trace();
    if tr.abs() > tol * anorm {
        Some(if n <= 2 { Classification::StrictlyHyperbolic } else { Classification::Hyperbolic })
    } else {
        Some(Classification::NotHyperbolic)
    }
}

/// Region of the Ricci n = 3 characteristic polynomial λ³ + 2σ₁λ² + σ₁²λ + 4σ₃.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubicRegion {
    ThreeDistinctReal,
    Repeated,
    ComplexPair,
}

/// D = (4/27)σ₃(27σ₃ − σ₁³); three distinct real characteristic speeds iff D < 0.
pub fn ricci_discriminant_n3(sigma: &[f64; 3]) -> (f64, CubicRegion) {
    let (s1, s3) = (sigma[0], sigma[2]);
    let d = 4.0 / 27.0 * s3 * (27.0 * s3 - s1 * s1 * s1);
    let region = if d < 0.0 {
        CubicRegion::ThreeDistinctReal
    } else if d == 0.0 {
        CubicRegion::Repeated
    } else {
        CubicRegion::ComplexPair
    };
    (d, region)
}

/// The magnitude test |σ₁|³ > 27|σ₃| > 0; agrees with D < 0 only when σ₁σ₃ > 0.
pub fn ricci_magnitude_test_n3(sigma: &[f64; 3]) -> bool {
    let (s1, s3) = (sigma[0], sigma[2]);
    s1.abs().powi(3) > 27.0 * s3.abs() && s3 != 0.0
}

/// N(τ_p) for p = 0…L from N(τ₁…τ_n), using the extension gradient past n.
fn extended_normal_derivatives(tau: &[f64], n_tau: &[f64], upto: usize) -> Result<Vec<f64>> {
    let n = tau.len();
    let mut out = vec![0.0; upto + 1];
    for p in 1..=upto {
        out[p] = if p <= n {
            n_tau[p - 1]
        } else {
            let g = extended_tau_gradient(tau, p)?;
            g.iter().zip(n_tau).map(|(a, b)| a * b).sum()
        };
    }
    Ok(out)
}

/// Right-hand side of the τ-system for a type-(b) family, evaluated directly
/// (N(fⱼ) by the chain rule, τ and N(τ) extended past n).
pub fn tau_evolution_rhs(
    family: &GeneratingFamily,
    tau: &[f64],
    n_tau: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let n = family.n;
    let jmax = family.max_index;
    let f = family.eval(tau, t);
    let df = family.partials(tau, t);
    let nf: Vec<f64> = df.iter().map(|row| row.iter().zip(n_tau).map(|(a, b)| a * b).sum()).collect();
    let ext = extended_tau(tau, n + jmax)?;
    let next = extended_normal_derivatives(tau, n_tau, n + jmax)?;
    Ok((1..=n)
        .map(|i| {
            let mut acc = ext[i - 1] * nf[0];
            for j in 1..=jmax {
                let p = i + j - 1;
                acc += j as f64 * f[j] / p as f64 * next[p] + ext[p] * nf[j];
            }
            -0.5 * i as f64 * acc
        })
        .collect())
}

/// ∂ₜσ_m from the σ-variational formula; the ENT preset routes to [`sigma_evolution_rhs_ent`].
pub fn sigma_evolution_rhs(
    family: &GeneratingFamily,
    tau: &[f64],
    n_tau: &[f64],
    t: f64,
    m: usize,
) -> Result<f64> {
    if let Preset::Ent(s) = family.preset {
        if m == s {
            return sigma_evolution_rhs_ent(s, tau, n_tau);
        }
    }
    sigma_evolution_rhs_generic(family, tau, n_tau, t, m)
}

/// ∂ₜσ_m = ½ Σ_{i=0}^{m−1} (−1)^{i+1} σ_{m−i−1} { N(f₀)τᵢ + Σⱼ [N(fⱼ)τ_{i+j} + (j/(i+j)) fⱼ N(τ_{i+j})] }.
pub fn sigma_evolution_rhs_generic(
    family: &GeneratingFamily,
    tau: &[f64],
    n_tau: &[f64],
    t: f64,
    m: usize,
) -> Result<f64> {
    let n = family.n;
    if family.kind != FamilyKind::TypeB {
        return Err(FlowError::InvalidInput("σ-evolution needs a type-(b) family".into()));
    }
    if m == 0 || m > n {
        return Err(FlowError::Index { index: m, n });
    }
    let jmax = family.max_index;
    let f = family.eval(tau, t);
    let df = family.partials(tau, t);
    let nf: Vec<f64> = df.iter().map(|row| row.iter().zip(n_tau).map(|(a, b)| a * b).sum()).collect();
    let sigma = sigma_from_tau(tau)?;
    let ext = extended_tau(tau, m - 1 + jmax)?;
    let next = extended_normal_derivatives(tau, n_tau, m - 1 + jmax)?;
    let mut total = 0.0;
    for i in 0..m {
        let mut brace = nf[0] * ext[i];
        for j in 1..=jmax {
            let p = i + j;
            brace += nf[j] * ext[p] + j as f64 / p as f64 * f[j] * next[p];
        }
        total += sign(i + 1) * sigma_padded(&sigma, m - i - 1) * brace;
    }
    Ok(0.5 * total)
}

/// ENT form: ∂ₜσ_s = −½ Σ_{i=0}^{s−1} σ_{s−i−1} { (−1)ⁱ N(σ_s)τᵢ + Σ_{j=1}^s (−1)^{i+j} [N(σ_{s−j})τ_{i+j} + (j/(i+j)) σ_{s−j} N(τ_{i+j})] }.
pub fn sigma_evolution_rhs_ent(s: usize, tau: &[f64], n_tau: &[f64]) -> Result<f64> {
    let n = tau.len();
    if s == 0 || s >= n {
        return Err(FlowError::InvalidInput(format!("ENT order s = {s} must lie in [1, n−1]")));
    }
    let sigma = sigma_from_tau(tau)?;
    let jac = sigma_jacobian(tau)?;
    let n_sigma = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            jac[k - 1].iter().zip(n_tau).map(|(a, b)| a * b).sum()
        }
    };
    let ext = extended_tau(tau, 2 * s - 1)?;
    let next = extended_normal_derivatives(tau, n_tau, 2 * s - 1)?;
    let mut total = 0.0;
    for i in 0..s {
        let mut brace = sign(i) * n_sigma(s) * ext[i];
        for j in 1..=s {
            let p = i + j;
            brace += sign(i + j)
                * (n_sigma(s - j) * ext[p] + j as f64 / p as f64 * sigma_padded(&sigma, s - j) * next[p]);
        }
        total += sigma_padded(&sigma, s - i - 1) * brace;
    }
    Ok(-0.5 * total)
}

/// ψ(λ, t) = Σⱼ fⱼ(nλ, nλ², …, nλⁿ; t) λʲ.
pub fn umbilical_psi(family: &GeneratingFamily, lambda: f64, t: f64) -> f64 {
    let n = family.n;
    let tau: Vec<f64> = (1..=n).map(|k| n as f64 * lambda.powi(k as i32)).collect();
    family
        .eval(&tau, t)
        .iter()
        .enumerate()
        .map(|(j, fj)| fj * lambda.powi(j as i32))
        .sum()
}

/// dψ/dλ = Σⱼ [jfⱼλʲ⁻¹ + λʲ Σₛ f_{j,τₛ}·nsλˢ⁻¹]; central differences without analytic partials.
pub fn umbilical_psi_derivative(family: &GeneratingFamily, lambda: f64, t: f64) -> f64 {
    if !family.has_analytic_partials() {
        let h = 1e-6 * (1.0 + lambda.abs());
        return (umbilical_psi(family, lambda + h, t) - umbilical_psi(family, lambda - h, t)) / (2.0 * h);
    }
    let n = family.n;
    let tau: Vec<f64> = (1..=n).map(|k| n as f64 * lambda.powi(k as i32)).collect();
    let dtau: Vec<f64> = (1..=n).map(|k| (n * k) as f64 * lambda.powi(k as i32 - 1)).collect();
    let f = family.eval(&tau, t);
    let d = family.partials(&tau, t);
    f.iter()
        .zip(&d)
        .enumerate()
        .map(|(j, (fj, dj))| {
            let inner: f64 = dj.iter().zip(&dtau).map(|(a, b)| a * b).sum();
            let own = if j == 0 { 0.0 } else { j as f64 * fj * lambda.powi(j as i32 - 1) };
            own + inner * lambda.powi(j as i32)
        })
        .sum()
}

/// ∂ₜkᵢ = N(kᵢ(τ₁ − kᵢ)) = N(kᵢ)(τ₁ − 2kᵢ) + kᵢ N(τ₁).
pub fn ricci_curvature_rhs(k: &[f64], n_k: &[f64]) -> Vec<f64> {
    let tau1: f64 = k.iter().sum();
    let n_tau1: f64 = n_k.iter().sum();
    k.iter()
        .zip(n_k)
        .map(|(&ki, &nki)| nki * (tau1 - 2.0 * ki) + ki * n_tau1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::companion_matrices::{b_nm, companion_eigensystem, MatrixKind};
    use crate::symmetric_functions::{elementary_from_roots, profile_from_roots};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    fn sorted_real(s: &Spectrum) -> Vec<f64> {
        let mut v: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn preset_ranges() {
        assert!(preset(&Preset::Ent(3), 3).is_err());
        assert!(preset(&Preset::Power(2), 2).is_err());
        assert!(preset(&Preset::RicciEx, 1).is_err());
        let ent = preset(&Preset::Ent(1), 3).unwrap();
        let tau = [1.4, 2.0, -0.3];
        assert_eq!(ent.eval(&tau, 0.0), vec![1.4, -1.0]);
        let p = preset(&Preset::Power(1), 3).unwrap();
        let sys = assemble_type_b(&p, &tau, 0.0).unwrap();
        assert_eq!(sys.b_tilde, DMatrix::identity(3, 3) * 0.5);
        assert_eq!(sys.a_tilde, DMatrix::zeros(3, 3));
    }

    #[test]
    fn analytic_partials_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for fam in [
            preset(&Preset::Ent(2), 4).unwrap(),
            preset(&Preset::Ent(1), 3).unwrap(),
            preset(&Preset::RicciEx, 3).unwrap(),
        ] {
            for _ in 0..20 {
                let tau: Vec<f64> = (0..fam.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let a = fam.partials(&tau, 0.0);
                let b = fam.partials_fd(&tau, 0.0);
                for (ra, rb) in a.iter().zip(&b) {
                    for (x, y) in ra.iter().zip(rb) {
                        assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs()), "{fam:?}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn type_b_single_coefficient_examples() {
        // f₀ = f(τ) = τ₁τ₂: Ãᵢⱼ = (i/2)τ_{i−1} f_{,τⱼ}, B̃ = 0.
        let f0 = GeneratingFamily::type_b(2, 0, |t, _| vec![t[0] * t[1]], None);
        let tau = [0.7, 1.3];
        let sys = assemble_type_b(&f0, &tau, 0.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.5 * 2.0 * 1.3, 0.5 * 2.0 * 0.7, 0.7 * 1.3, 0.7 * 0.7]);
        assert!(max_abs(&(sys.a_tilde - want)) < 1e-8);
        assert_eq!(sys.b_tilde, DMatrix::zeros(2, 2));
        // f₁ = f(τ): Ãᵢⱼ = (i/2)τᵢ f_{,τⱼ}, B̃ = ½ f Id.
        let b1 = GeneratingFamily::b1(2, |t| t[0] * t[1], |t| vec![t[1], t[0]]);
        let sys = assemble_type_b(&b1, &tau, 0.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.5 * 0.7 * 1.3, 0.5 * 0.7 * 0.7, 1.3 * 1.3, 1.3 * 0.7]);
        assert!(max_abs(&(sys.a_tilde - want)) < 1e-14);
        assert!(max_abs(&(sys.b_tilde - DMatrix::identity(2, 2) * (0.5 * 0.7 * 1.3))) < 1e-14);
    }

    #[test]
    fn ricci_n2_matrix_and_spectrum() {
        let ricci = preset(&Preset::RicciEx, 2).unwrap();
        let p = profile_from_roots(&[1.0, 2.0], 2).unwrap();
        let sys = assemble_type_b(&ricci, &p.tau, 0.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[-6.0, 1.0, -18.0, 3.0]);
        assert!(max_abs(&(sys.matrix() - want)) < 1e-12);
        let s = classify_hyperbolicity(&sys, HYPERBOLICITY_TOL);
        assert_eq!(s.classification, Classification::StrictlyHyperbolic);
        let ev = sorted_real(&s);
        assert!((ev[0] + 3.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
        // τ₁ = 0: C₂ nilpotent.
        let sys = assemble_type_b(&ricci, &[0.0, 2.0], 0.0).unwrap();
        assert_eq!(classify_hyperbolicity(&sys, HYPERBOLICITY_TOL).classification, Classification::NotHyperbolic);
    }

    #[test]
    fn ricci_n3_matrix() {
        let ricci = preset(&Preset::RicciEx, 3).unwrap();
        let (t1, t2, t3) = (0.8, 1.7, -0.4);
        let sys = assemble_type_b(&ricci, &[t1, t2, t3], 0.0).unwrap();
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[
                -2.0 * t1, 1.0, 0.0,
                -2.0 * t2, -t1, 4.0 / 3.0,
                t1 * t1 * t1 - t3 - 3.0 * t1 * t2, 1.5 * (t2 - t1 * t1), t1,
            ],
        );
        assert!(max_abs(&(sys.matrix() - want)) < 1e-12);
    }

    #[test]
    fn type_a_examples() {
        let sigma = [0.4, -1.2, 0.9];
        let tau = tau_from_sigma(&sigma, 3);
        for (j, want) in [(1usize, DMatrix::identity(3, 3) * 0.5), (2, b_n1(&sigma)), (3, b_nm(&sigma, 2))] {
            let fam = GeneratingFamily::type_a(3, j, move |_, _| {
                let mut v = vec![0.0; j + 1];
                v[j] = 1.0;
                v
            });
            let sys = assemble_type_a(&fam, 0.0, 0.0, &tau, &vec![0.0; j + 1]).unwrap();
            assert!(max_abs(&(sys.matrix() - want)) < 1e-12, "j={j}");
            assert_eq!(sys.source, DVector::zeros(3));
        }
    }

    #[test]
    fn type_a_source() {
        let fam = GeneratingFamily::type_a(2, 1, |x, _| vec![x[0], 1.0]);
        let tau = [0.3, 0.5];
        let sys = assemble_type_a(&fam, 0.2, 0.0, &tau, &[2.0, 0.0]).unwrap();
        // â₁ = −½·N(f̃₀)·τ₀, â₂ = −N(f̃₀)·τ₁.
        assert!((sys.source[0] + 0.5 * 2.0 * 2.0).abs() < 1e-15);
        assert!((sys.source[1] + 2.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn classify_examples() {
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(classify_matrix(&diag, 1e-8).classification, Classification::Hyperbolic);
        let jordan = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(classify_matrix(&jordan, 1e-8).classification, Classification::NotHyperbolic);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(classify_matrix(&rot, 1e-8).classification, Classification::NotHyperbolic);
        let distinct = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 2.0]);
        let s = classify_matrix(&distinct, 1e-8);
        assert_eq!(s.classification, Classification::StrictlyHyperbolic);
        for (l, v) in &s.eigenvectors {
            assert!((&distinct * v - v * *l).norm() < 1e-10);
        }
    }

    #[test]
    fn rank_one_shortcut_cases() {
        let b1 = GeneratingFamily::b1(3, |t| t[0], |t| {
            let mut g = vec![0.0; t.len()];
            g[0] = 1.0;
            g
        });
        let sys = assemble_type_b(&b1, &[1.0, 2.0, 0.5], 0.0).unwrap();
        assert_eq!(classify_hyperbolicity(&sys, 1e-8).classification, Classification::Hyperbolic);
        // Σ iτᵢ f_{τᵢ} = 0 with Ã ≠ 0: nilpotent Ã.
        let g = GeneratingFamily::b1(2, |t| t[1] - t[0] * t[0], |t| vec![-2.0 * t[0], 1.0]);
        // tr Ã = ½(τ₁·(−2τ₁) + 2τ₂) = τ₂ − τ₁² → zero when τ₂ = τ₁².
        let sys = assemble_type_b(&g, &[1.5, 2.25], 0.0).unwrap();
        assert_eq!(classify_hyperbolicity(&sys, 1e-8).classification, Classification::NotHyperbolic);
        let constant = GeneratingFamily::b1(2, |_| 3.0, |_| vec![0.0, 0.0]);
        let sys = assemble_type_b(&constant, &[1.5, 2.25], 0.0).unwrap();
        assert_eq!(classify_hyperbolicity(&sys, 1e-8).classification, Classification::Hyperbolic);
    }

    #[test]
    fn discriminant_examples() {
        let (d, r) = ricci_discriminant_n3(&[6.0, 11.0, 6.0]);
        assert!((d + 48.0).abs() < 1e-12);
        assert_eq!(r, CubicRegion::ThreeDistinctReal);
        assert_eq!(ricci_discriminant_n3(&[3.0, 3.0, 1.0]).1, CubicRegion::Repeated);
        assert_eq!(ricci_discriminant_n3(&[2.0, 5.0, 0.0]).1, CubicRegion::Repeated);
        assert!(ricci_magnitude_test_n3(&[6.0, 0.0, 6.0]));
        // Mixed signs: the magnitude test holds but the speeds are complex.
        assert!(ricci_magnitude_test_n3(&[-6.0, 0.0, 6.0]));
        assert_eq!(ricci_discriminant_n3(&[-6.0, 0.0, 6.0]).1, CubicRegion::ComplexPair);
    }

    #[test]
    fn ricci_n3_spectrum_is_the_cubic() {
        let ricci = preset(&Preset::RicciEx, 3).unwrap();
        let sigma = [6.0, 11.0, 6.0];
        let tau = tau_from_sigma(&sigma, 3);
        let sys = assemble_type_b(&ricci, &tau, 0.0).unwrap();
        let cp = crate::companion_matrices::characteristic_polynomial(&sys.matrix());
        // det(λI − C₃) = λ³ + 2σ₁λ² + σ₁²λ + 4σ₃, independent of σ₂.
        assert!((cp[0] - 2.0 * 6.0).abs() < 1e-10);
        assert!((cp[1] - 36.0).abs() < 1e-10);
        assert!((cp[2] - 24.0).abs() < 1e-10);
    }

    #[test]
    fn sigma_rhs_examples() {
        let ent = preset(&Preset::Ent(1), 3).unwrap();
        let tau = [0.4, 1.1, -0.2];
        let nt = [0.3, -0.7, 0.5];
        let want = -0.5 * 2.0 * nt[0];
        assert!((sigma_evolution_rhs(&ent, &tau, &nt, 0.0, 1).unwrap() - want).abs() < 1e-14);
        assert!((sigma_evolution_rhs_generic(&ent, &tau, &nt, 0.0, 1).unwrap() - want).abs() < 1e-14);
        for m in 1..=3 {
            assert_eq!(sigma_evolution_rhs(&ent, &tau, &[0.0; 3], 0.0, m).unwrap(), 0.0);
        }
        // Ricci n = 2: ∂ₜσ₂ = τ₁ N(σ₂).
        let ricci = preset(&Preset::RicciEx, 2).unwrap();
        let tau = [1.3, 2.9];
        let nt = [0.6, -0.4];
        let n_sigma2 = tau[0] * nt[0] - 0.5 * nt[1];
        let got = sigma_evolution_rhs(&ricci, &tau, &nt, 0.0, 2).unwrap();
        assert!((got - tau[0] * n_sigma2).abs() < 1e-13);
        // Same value through the expanded form with N(τ₃).
        let c = crate::symmetric_functions::dtau_decomposition(2, 1, &sigma_from_tau(&tau).unwrap()).unwrap();
        let n_tau3 = 3.0 * (c[0] * nt[0] + c[1] * nt[1]);
        let expanded = (2.0 * tau[0] * tau[0] - tau[1]) * nt[0] - 1.5 * tau[0] * nt[1] + 2.0 / 3.0 * n_tau3;
        assert!((got - expanded).abs() < 1e-13);
    }

    #[test]
    fn ent_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=5 {
            for s in 1..n {
                let fam = preset(&Preset::Ent(s), n).unwrap();
                for _ in 0..10 {
                    let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
                    let nt: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let a = sigma_evolution_rhs_ent(s, &tau, &nt).unwrap();
                    let b = sigma_evolution_rhs_generic(&fam, &tau, &nt, 0.0, s).unwrap();
                    assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "n={n} s={s}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn umbilical_psi_examples() {
        for n in 2..=5 {
            let ricci = preset(&Preset::RicciEx, n).unwrap();
            let l = 0.7;
            assert!((umbilical_psi(&ricci, l, 0.0) - 2.0 * (1.0 - n as f64) * l * l).abs() < 1e-13);
        }
        assert_eq!(umbilical_psi(&preset(&Preset::Constant(2.5), 3).unwrap(), 0.3, 0.0), 2.5);
        assert!((umbilical_psi(&preset(&Preset::Power(1), 3).unwrap(), 0.3, 0.0) - 0.3).abs() < 1e-15);
        for n in 2..=4 {
            let ricci = preset(&Preset::RicciEx, n).unwrap();
            for &l in &[-1.2, 0.0, 0.4, 2.0] {
                let exact = 4.0 * (1.0 - n as f64) * l;
                assert!((umbilical_psi_derivative(&ricci, l, 0.0) - exact).abs() < 1e-12);
                let h = 1e-5;
                let fd = (umbilical_psi(&ricci, l + h, 0.0) - umbilical_psi(&ricci, l - h, 0.0)) / (2.0 * h);
                assert!((fd - exact).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn ricci_curvature_rhs_examples() {
        let k = [0.4, 1.3];
        let nk = [0.2, -0.5];
        let r = ricci_curvature_rhs(&k, &nk);
        let d = nk[0] * k[1] + k[0] * nk[1];
        assert!((r[0] - d).abs() < 1e-15 && (r[1] - d).abs() < 1e-15);
        assert_eq!(ricci_curvature_rhs(&k, &[0.0, 0.0]), vec![0.0, 0.0]);
        let n = 4;
        let (l, nl) = (0.9, -0.3);
        for v in ricci_curvature_rhs(&vec![l; n], &vec![nl; n]) {
            assert!((v - 2.0 * (n as f64 - 1.0) * l * nl).abs() < 1e-14);
        }
    }

    #[test]
    fn chain_rule_folds_into_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fams = [
            preset(&Preset::RicciEx, 2).unwrap(),
            preset(&Preset::RicciEx, 3).unwrap(),
            preset(&Preset::Ent(2), 4).unwrap(),
            GeneratingFamily::b1(3, |t| t[0] * t[0] + t[2], |t| vec![2.0 * t[0], 0.0, 1.0]),
        ];
        for fam in &fams {
            for _ in 0..200 {
                // Root-field oracle: τ_p = Σ kᵢᵖ and N(τ_p) = Σ p kᵢ^{p−1} N(kᵢ) for every p.
                let k: Vec<f64> = (0..fam.n).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let nk: Vec<f64> = (0..fam.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let tp = |p: i32| k.iter().map(|x| x.powi(p)).sum::<f64>();
                let ntp = |p: i32| -> f64 {
                    k.iter().zip(&nk).map(|(x, d)| p as f64 * x.powi(p - 1) * d).sum()
                };
                let n = fam.n;
                let tau: Vec<f64> = (1..=n as i32).map(tp).collect();
                let nt: Vec<f64> = (1..=n as i32).map(ntp).collect();
                let f = fam.eval(&tau, 0.0);
                let df = fam.partials(&tau, 0.0);
                let nf: Vec<f64> = df.iter().map(|r| r.iter().zip(&nt).map(|(a, b)| a * b).sum()).collect();
                let direct: Vec<f64> = (1..=n)
                    .map(|i| {
                        let ti = |p: usize| if p == 0 { n as f64 } else { tp(p as i32) };
                        let mut acc = ti(i - 1) * nf[0];
                        for j in 1..=fam.max_index {
                            let p = i + j - 1;
                            acc += j as f64 * f[j] / p as f64 * ntp(p as i32) + ti(p) * nf[j];
                        }
                        -0.5 * i as f64 * acc
                    })
                    .collect();
                let sys = assemble_type_b(fam, &tau, 0.0).unwrap();
                let via_matrix = -(sys.matrix() * DVector::from_vec(nt.clone()));
                let rhs = tau_evolution_rhs(fam, &tau, &nt, 0.0).unwrap();
                let scale = direct.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                for i in 0..n {
                    assert!((via_matrix[i] - direct[i]).abs() < 1e-9 * scale, "{fam:?}");
                    assert!((rhs[i] - direct[i]).abs() < 1e-9 * scale, "{fam:?}");
                }
            }
        }
    }

    #[test]
    fn power_presets_are_hyperbolic_for_distinct_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=5 {
            for m in 2..n {
                let fam = preset(&Preset::Power(m), n).unwrap();
                for _ in 0..20 {
                    let mut roots: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
                    roots.sort_by(f64::total_cmp);
                    if roots.windows(2).any(|w| w[1] - w[0] < 0.05) {
                        continue;
                    }
                    let p = profile_from_roots(&roots, n).unwrap();
                    let sys = assemble_type_b(&fam, &p.tau, 0.0).unwrap();
                    let s = classify_hyperbolicity(&sys, HYPERBOLICITY_TOL);
                    assert!(s.classification.is_hyperbolic(), "n={n} m={m} roots={roots:?}");
                    let pairs = companion_eigensystem(&MatrixKind::BFamily { m: m - 1 }, &roots).unwrap();
                    assert!(pairs.iter().all(|p| p.residual < 1e-8));
                }
            }
        }
    }

    #[test]
    fn discriminant_sign_matches_root_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let s1: f64 = rng.gen_range(-5.0..5.0);
            let s3: f64 = rng.gen_range(-5.0..5.0);
            let (d, region) = ricci_discriminant_n3(&[s1, 0.0, s3]);
            if d.abs() < 1e-6 {
                continue;
            }
            let comp = DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -4.0 * s3, -s1 * s1, -2.0 * s1],
            );
            let real = comp
                .complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() < 1e-9 * (1.0 + z.norm()))
                .count();
            assert_eq!(real == 3, region == CubicRegion::ThreeDistinctReal, "s1={s1} s3={s3}");
        }
    }

    proptest! {
        #[test]
        fn b_tilde_is_the_power_series(
            roots in prop::collection::vec(-1.5f64..1.5, 3..=4),
        ) {
            let n = roots.len();
            let fam = preset(&Preset::Ent(n - 1), n).unwrap();
            let p = profile_from_roots(&roots, n).unwrap();
            let sys = assemble_type_b(&fam, &p.tau, 0.0).unwrap();
            let f = fam.eval(&p.tau, 0.0);
            let sigma = elementary_from_roots(&roots);
            let b = b_n1(&sigma);
            let mut want = DMatrix::zeros(n, n);
            let mut pow = DMatrix::identity(n, n);
            for m in 1..=fam.max_index {
                want += &pow * (0.5 * m as f64 * f[m]);
                pow = &pow * &b;
            }
            prop_assert!(max_abs(&(sys.b_tilde - want)) < 1e-10);
        }
    }
}
