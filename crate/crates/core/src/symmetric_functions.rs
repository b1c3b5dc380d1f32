//! Power sums, elementary symmetric functions and the β-coefficients.
//!
//! Indices are one-based in the mathematics and zero-based in storage:
//! `tau[j - 1]` is τ_j and `sigma[j - 1]` is σ_j. The implicit entries are
//! τ₀ = n and σ₀ = 1.

use crate::error::{FlowError, Result};

/// Power sums τ and elementary symmetric functions σ of n principal curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricProfile {
    pub n: usize,
    /// τ₁…τ_L with L ≥ n.
    pub tau: Vec<f64>,
    /// σ₁…σ_n.
    pub sigma: Vec<f64>,
}

impl SymmetricProfile {
    /// Profile from the first n power sums; τ is extended to `extend_to` entries.
    pub fn from_tau(tau: &[f64], extend_to: usize) -> Result<Self> {
        let sigma = sigma_from_tau(tau)?;
        let n = tau.len();
        let tau = tau_from_sigma(&sigma, extend_to.max(n));
        Ok(Self { n, tau, sigma })
    }

    /// τ_j with τ₀ = n; entries beyond the stored length are extended on demand.
    pub fn tau_at(&self, j: usize) -> f64 {
        if j == 0 {
            self.n as f64
        } else if j <= self.tau.len() {
            self.tau[j - 1]
        } else {
            tau_from_sigma(&self.sigma, j)[j - 1]
        }
    }

    /// σ_j with σ₀ = 1 and σ_j = 0 for j > n.
    pub fn sigma_at(&self, j: usize) -> f64 {
        sigma_padded(&self.sigma, j)
    }
}

pub(crate) fn sigma_padded(sigma: &[f64], j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        sigma.get(j - 1).copied().unwrap_or(0.0)
    }
}

/// Power sums up to L and elementary symmetric functions of the roots `k`.
pub fn profile_from_roots(k: &[f64], extend_to: usize) -> Result<SymmetricProfile> {
    let n = k.len();
    if n == 0 {
        return Err(FlowError::InvalidInput("empty root vector".into()));
    }
    if extend_to < n {
        return Err(FlowError::InvalidInput(format!(
            "extend_to = {extend_to} is below n = {n}"
        )));
    }
    let tau = (1..=extend_to)
        .map(|j| k.iter().map(|ki| ki.powi(j as i32)).sum())
        .collect();
    Ok(SymmetricProfile {
        n,
        tau,
        sigma: elementary_from_roots(k),
    })
}

/// σ₁…σ_n of the roots by expanding ∏(1 + kᵢ z).
pub fn elementary_from_roots(k: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; k.len() + 1];
    e[0] = 1.0;
    for (r, &ki) in k.iter().enumerate() {
        for j in (1..=r + 1).rev() {
            e[j] += ki * e[j - 1];
        }
    }
    e.split_off(1)
}

/// Solves the lower-triangular Newton system for σ₁…σ_n given τ₁…τ_n.
///
/// k σ_k = Σ_{i=1}^k (−1)^{i−1} σ_{k−i} τ_i.
pub fn sigma_from_tau(tau: &[f64]) -> Result<Vec<f64>> {
    if tau.is_empty() {
        return Err(FlowError::InvalidInput("empty power-sum vector".into()));
    }
    let n = tau.len();
    let mut s = vec![0.0; n + 1];
    s[0] = 1.0;
    for k in 1..=n {
        let mut acc = 0.0;
        for i in 1..=k {
            acc += sign(i - 1) * s[k - i] * tau[i - 1];
        }
        s[k] = acc / k as f64;
    }
    Ok(s.split_off(1))
}

/// τ₁…τ_L from σ₁…σ_n, with σ_j = 0 for j > n.
///
/// τ_k = Σ_{i=1}^{min(k−1,n)} (−1)^{i−1} σ_i τ_{k−i} + (−1)^{k−1} k σ_k.
pub fn tau_from_sigma(sigma: &[f64], count: usize) -> Vec<f64> {
    let n = sigma.len();
    let mut tau = Vec::with_capacity(count);
    for k in 1..=count {
        let mut acc = 0.0;
        for i in 1..=(k - 1).min(n) {
            acc += sign(i - 1) * sigma[i - 1] * tau[k - i - 1];
        }
        if k <= n {
            acc += sign(k - 1) * k as f64 * sigma[k - 1];
        }
        tau.push(acc);
    }
    tau
}

/// Jacobian dσ_k/dτ_j (k, j = 1…n) of [`sigma_from_tau`], row-major.
pub fn sigma_jacobian(tau: &[f64]) -> Result<Vec<Vec<f64>>> {
    let sigma = sigma_from_tau(tau)?;
    let n = tau.len();
    // d[k][j] for k = 0…n; row 0 is dσ₀ = 0.
    let mut d = vec![vec![0.0; n]; n + 1];
    for k in 1..=n {
        for j in 1..=n {
            let mut acc = 0.0;
            if j <= k {
                acc += sign(j - 1) * sigma_padded(&sigma, k - j);
            }
            for i in 1..k {
                acc += sign(i - 1) * tau[i - 1] * d[k - i][j - 1];
            }
            d[k][j - 1] = acc / k as f64;
        }
    }
    d.remove(0);
    Ok(d)
}

/// Jacobian dτ_p/dτ_j (j = 1…n) of the extended power sum τ_p as a polynomial in τ₁…τ_n.
pub fn extended_tau_gradient(tau: &[f64], p: usize) -> Result<Vec<f64>> {
    let n = tau.len();
    if p == 0 {
        return Ok(vec![0.0; n]);
    }
    if p <= n {
        let mut g = vec![0.0; n];
        g[p - 1] = 1.0;
        return Ok(g);
    }
    let sigma = sigma_from_tau(tau)?;
    let c = dtau_decomposition(n, p - n, &sigma)?;
    Ok(c.iter().map(|ci| ci * p as f64).collect())
}

/// β_{n,m,i} via the reduced recurrence (σ_j = 0 for j > n)
/// β_{n,m,i} = β_{n,m−1,n} σ_{n−i+1} − β_{n,m−1,i−1}, β_{n,1,i} = σ_{n−i+1}, β_{·,·,0} = 0.
pub fn beta(n: usize, m: usize, i: usize, sigma: &[f64]) -> Result<f64> {
    if i == 0 || i > n {
        return Err(FlowError::Index { index: i, n });
    }
    Ok(beta_row(n, m, sigma)?[i - 1])
}

/// (β_{n,m,1}, …, β_{n,m,n}).
pub fn beta_row(n: usize, m: usize, sigma: &[f64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(FlowError::InvalidInput("n must be positive".into()));
    }
    if m == 0 {
        return Err(FlowError::InvalidInput("m must be at least 1".into()));
    }
    let s = |j: usize| if j > n { 0.0 } else { sigma_padded(sigma, j) };
    let mut row: Vec<f64> = (1..=n).map(|i| s(n - i + 1)).collect();
    for _ in 2..=m {
        let last = row[n - 1];
        let next = (1..=n)
            .map(|i| {
                let prev = if i == 1 { 0.0 } else { row[i - 2] };
                last * s(n - i + 1) - prev
            })
            .collect();
        row = next;
    }
    Ok(row)
}

/// c with (1/(n+m)) ∂τ_{n+m} = Σᵢ cᵢ ∂τᵢ, cᵢ = (−1)^{n−i} β_{n,m,i}/i.
pub fn dtau_decomposition(n: usize, m: usize, sigma: &[f64]) -> Result<Vec<f64>> {
    let row = beta_row(n, m, sigma)?;
    Ok(row
        .iter()
        .enumerate()
        .map(|(idx, b)| sign(n - idx - 1) * b / (idx + 1) as f64)
        .collect())
}

#[inline]
pub(crate) fn sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
