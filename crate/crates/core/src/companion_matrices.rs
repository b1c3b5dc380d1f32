//! Generalized companion matrices and the B_{n,m} family.

use nalgebra::{DMatrix, DVector};

use crate::error::{FlowError, Result};
use crate::symmetric_functions::{beta_row, sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompanionVariant {
    /// Ĉ_g: scaled superdiagonal, coefficients in the bottom row.
    Upper,
    /// Č_g: scaled subdiagonal, coefficients in the first row.
    Lower,
}

/// P_n(λ) = λⁿ − p₁λ^{n−1} − … − p_n together with scalings c (c₁ = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSpec {
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub variant: CompanionVariant,
}

impl CompanionSpec {
    /// p_k = (−1)^{k−1} σ_k, so that P_n has roots with elementary symmetric functions σ.
    pub fn from_sigma(sigma: &[f64], c: Vec<f64>, variant: CompanionVariant) -> Self {
        let p = sigma.iter().enumerate().map(|(k, s)| sign(k) * s).collect();
        Self { p, c, variant }
    }

    /// The scaling cᵢ = n/(n−i+1) that produces B_{n,1}.
    pub fn b_scaling(n: usize) -> Vec<f64> {
        (1..=n).map(|i| n as f64 / (n - i + 1) as f64).collect()
    }
}

pub fn build_companion(spec: &CompanionSpec) -> Result<DMatrix<f64>> {
    let n = spec.p.len();
    if n == 0 || spec.c.len() != n {
        return Err(FlowError::InvalidInput(format!(
            "companion needs equal non-empty p and c (got {} and {})",
            n,
            spec.c.len()
        )));
    }
    if spec.c.iter().any(|&ci| ci == 0.0 || !ci.is_finite()) {
        return Err(FlowError::InvalidInput("scaling entries must be finite and non-zero".into()));
    }
    if spec.c[0] != 1.0 {
        return Err(FlowError::InvalidInput("c₁ must equal 1".into()));
    }
    let c = |i: usize| spec.c[i - 1];
    let p = |i: usize| spec.p[i - 1];
    let mut m = DMatrix::zeros(n, n);
    match spec.variant {
        CompanionVariant::Upper => {
            for i in 1..n {
                m[(i - 1, i)] = c(n - i) / c(n - i + 1);
            }
            for j in 1..=n {
                m[(n - 1, j - 1)] = c(n - j + 1) * p(n - j + 1);
            }
        }
        CompanionVariant::Lower => {
            for j in 1..=n {
                m[(0, j - 1)] = c(j) * p(j);
            }
            for i in 1..n {
                m[(i, i - 1)] = c(i) / c(i + 1);
            }
        }
    }
    Ok(m)
}

/// B_{n,1}: superdiagonal i/(i+1), last row (−1)^{n−j}(n/j)σ_{n−j+1}.
pub fn b_n1(sigma: &[f64]) -> DMatrix<f64> {
    let n = sigma.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i - 1, i)] = i as f64 / (i + 1) as f64;
    }
    for j in 1..=n {
        m[(n - 1, j - 1)] = sign(n - j) * (n as f64 / j as f64) * sigma[n - j];
    }
    m
}

/// B_{n,m} = ((m+1)/2)(B_{n,1})^m.
pub fn b_nm(sigma: &[f64], m: usize) -> DMatrix<f64> {
    let n = sigma.len();
    let b = b_n1(sigma);
    let mut pow = DMatrix::identity(n, n);
    for _ in 0..m {
        pow = &pow * &b;
    }
    pow * ((m as f64 + 1.0) / 2.0)
}

/// B_{n,m} from the closed entry formula in terms of β_{n,k,j}.
pub fn b_nm_entrywise(sigma: &[f64], m: usize) -> DMatrix<f64> {
    let n = sigma.len();
    let mf = m as f64;
    let mut out = DMatrix::zeros(n, n);
    for i in 1..=n {
        let fi = i as f64;
        if i + m <= n {
            out[(i - 1, i + m - 1)] = fi * (mf + 1.0) / (2.0 * (fi + mf));
        } else {
            let row = beta_row(n, i + m - n, sigma).expect("n ≥ 1 and i + m − n ≥ 1");
            for j in 1..=n {
                out[(i - 1, j - 1)] =
                    sign(n - j) * fi * (mf + 1.0) / (2.0 * j as f64) * row[j - 1];
            }
        }
    }
    out
}

/// Which closed-form eigenstructure to use.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixKind {
    /// B_{n,m}; m = 1 is B_{n,1} itself.
    BFamily { m: usize },
    Upper { c: Vec<f64> },
    Lower { c: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<f64>,
    /// ‖Mv − λv‖₂ for the matrix built from the same roots.
    pub residual: f64,
}

type EigenMap = Box<dyn Fn(f64) -> f64>;

/// Closed-form eigenpairs, one per supplied root, with the residual measured
/// against the explicitly built matrix.
pub fn companion_eigensystem(kind: &MatrixKind, roots: &[f64]) -> Result<Vec<EigenPair>> {
    let n = roots.len();
    if n == 0 {
        return Err(FlowError::InvalidInput("no roots supplied".into()));
    }
    let sigma = crate::symmetric_functions::elementary_from_roots(roots);
    let (matrix, c, value_of): (DMatrix<f64>, Vec<f64>, EigenMap) = match kind {
        MatrixKind::BFamily { m } => {
            let m = *m;
            let scale = (m as f64 + 1.0) / 2.0;
            (
                b_nm(&sigma, m),
                CompanionSpec::b_scaling(n),
                Box::new(move |l: f64| scale * l.powi(m as i32)),
            )
        }
        MatrixKind::Upper { c } | MatrixKind::Lower { c } => {
            let variant = if matches!(kind, MatrixKind::Upper { .. }) {
                CompanionVariant::Upper
            } else {
                CompanionVariant::Lower
            };
            let spec = CompanionSpec::from_sigma(&sigma, c.clone(), variant);
            (build_companion(&spec)?, c.clone(), Box::new(|l: f64| l))
        }
    };
    let lower = matches!(kind, MatrixKind::Lower { .. });
    Ok(roots
        .iter()
        .map(|&l| {
            let vector = if lower {
                DVector::from_iterator(n, (1..=n).map(|i| l.powi((n - i) as i32) / c[i - 1]))
            } else {
                DVector::from_iterator(
                    n,
                    (1..=n).map(|i| c[n - 1] / c[n - i] * l.powi(i as i32 - 1)),
                )
            };
            let value = value_of(l);
            let residual = (&matrix * &vector - &vector * value).norm();
            EigenPair { value, vector, residual }
        })
        .collect())
}

/// Numerical rank of the matrix whose columns are the given eigenvectors.
pub fn eigenvector_rank(pairs: &[EigenPair], tol: f64) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    let cols: Vec<DVector<f64>> = pairs.iter().map(|p| p.vector.normalize()).collect();
    let m = DMatrix::from_columns(&cols);
    let sv = m.singular_values();
    let smax = sv.max();
    sv.iter().filter(|&&s| s > tol * smax.max(f64::MIN_POSITIVE)).count()
}

/// Coefficients (a₁…a_n) of det(λI − M) = λⁿ + a₁λ^{n−1} + … + a_n (Faddeev–LeVerrier).
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        mk = m * (&mk + &id * c_prev);
        let ck = -mk.trace() / k as f64;
        coeffs.push(ck);
        c_prev = ck;
    }
    coeffs
}
