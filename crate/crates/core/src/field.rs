//! Uniformly sampled functions of arclength along an N-curve.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Samples cover [x₀, x₀ + count·Δx) and wrap.
    Periodic,
    /// Samples cover [x₀, x₀ + (count−1)·Δx]; values outside use the edge cubic.
    Extrapolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub count: usize,
    pub boundary: Boundary,
}

impl Grid {
    /// `cells` intervals over [a, b]; periodic grids omit the right endpoint.
    pub fn from_cells(a: f64, b: f64, cells: usize, boundary: Boundary) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(FlowError::InvalidInput(format!("grid interval [{a}, {b}] is empty")));
        }
        if cells < 2 {
            return Err(FlowError::InvalidInput("grid needs at least two cells".into()));
        }
        let dx = (b - a) / cells as f64;
        let count = match boundary {
            Boundary::Periodic => cells,
            Boundary::Extrapolate => cells + 1,
        };
        Ok(Self { x0: a, dx, count, boundary })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.x(i)).collect()
    }

    /// Length of the periodic cell or of the closed interval.
    pub fn length(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.count as f64 * self.dx,
            Boundary::Extrapolate => (self.count - 1) as f64 * self.dx,
        }
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.count - 1)
    }

    /// Index of the sample nearest to x (clamped, not wrapped).
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.x0) / self.dx).round();
        i.clamp(0.0, (self.count - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count {
            return Err(FlowError::InvalidInput(format!(
                "field has {} values for {} grid points",
                values.len(),
                grid.count
            )));
        }
        if grid.count < 2 || !(grid.dx > 0.0) {
            return Err(FlowError::InvalidInput("grid needs count ≥ 2 and Δx > 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.count).map(|i| f(grid.x(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.count] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid.count, other.grid.count);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First derivative: central inside, third-order one-sided (exact on cubics) at open ends.
    pub fn derivative(&self) -> Self {
        Self { grid: self.grid, values: derivative_values(&self.values, self.grid.dx, self.grid.boundary) }
    }

    /// Second derivative: central inside, third-order one-sided five-point at open ends.
    pub fn second_derivative(&self) -> Self {
        let v = &self.values;
        let n = v.len();
        let h2 = self.grid.dx * self.grid.dx;
        let mut out = vec![0.0; n];
        match self.grid.boundary {
            Boundary::Periodic => {
                for i in 0..n {
                    out[i] = (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]) / h2;
                }
            }
            Boundary::Extrapolate => {
                for i in 1..n - 1 {
                    out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
                }
                if n >= 5 {
                    let c = [35.0, -104.0, 114.0, -56.0, 11.0];
                    out[0] = (0..5).map(|k| c[k] * v[k]).sum::<f64>() / (12.0 * h2);
                    out[n - 1] = (0..5).map(|k| c[k] * v[n - 1 - k]).sum::<f64>() / (12.0 * h2);
                } else if n >= 4 {
                    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
                    out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
                } else {
                    out[0] = out[1.min(n - 1)];
                    out[n - 1] = out[0];
                }
            }
        }
        Self { grid: self.grid, values: out }
    }

    /// Trapezoid quadrature over the grid (the full period when periodic).
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        let s: f64 = v.iter().sum();
        match self.grid.boundary {
            Boundary::Periodic => s * self.grid.dx,
            Boundary::Extrapolate => (s - 0.5 * (v[0] + v[v.len() - 1])) * self.grid.dx,
        }
    }

    /// Four-point Lagrange cubic interpolation; periodic wrap or edge-cubic extrapolation.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Interpolated value and the derivative of the same cubic.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let g = &self.grid;
        let n = g.count;
        let u = (x - g.x0) / g.dx;
        let (base, nodes): (isize, [f64; 4]) = match g.boundary {
            Boundary::Periodic => {
                let b = u.floor() as isize - 1;
                let idx = |k: isize| self.values[(b + k).rem_euclid(n as isize) as usize];
                (b, [idx(0), idx(1), idx(2), idx(3)])
            }
            Boundary::Extrapolate => {
                if n < 4 {
                    // Linear fallback on tiny grids.
                    let i = (u.floor() as isize).clamp(0, n as isize - 2) as usize;
                    let s = u - i as f64;
                    let d = self.values[i + 1] - self.values[i];
                    return (self.values[i] + s * d, d / g.dx);
                }
                let b = (u.floor() as isize - 1).clamp(0, n as isize - 4);
                let at = |k: isize| self.values[(b + k) as usize];
                (b, [at(0), at(1), at(2), at(3)])
            }
        };
        let s = u - base as f64;
        let (val, dval) = lagrange4(s, nodes);
        (val, dval / g.dx)
    }
}

/// Cubic through (0,f0),(1,f1),(2,f2),(3,f3) evaluated at s, with d/ds.
fn lagrange4(s: f64, f: [f64; 4]) -> (f64, f64) {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    let l0 = -b * c * d / 6.0;
    let l1 = a * c * d / 2.0;
    let l2 = -a * b * d / 2.0;
    let l3 = a * b * c / 6.0;
    let dl0 = -(c * d + b * d + b * c) / 6.0;
    let dl1 = (c * d + a * d + a * c) / 2.0;
    let dl2 = -(b * d + a * d + a * b) / 2.0;
    let dl3 = (b * c + a * c + a * b) / 6.0;
    (
        f[0] * l0 + f[1] * l1 + f[2] * l2 + f[3] * l3,
        f[0] * dl0 + f[1] * dl1 + f[2] * dl2 + f[3] * dl3,
    )
}

pub(crate) fn derivative_values(v: &[f64], dx: f64, boundary: Boundary) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    match boundary {
        Boundary::Periodic => {
            for i in 0..n {
                out[i] = (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * dx);
            }
        }
        Boundary::Extrapolate => {
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
            }
            if n >= 4 {
                out[0] = (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * dx);
                out[n - 1] = (11.0 * v[n - 1] - 18.0 * v[n - 2] + 9.0 * v[n - 3] - 2.0 * v[n - 4]) / (6.0 * dx);
            } else if n >= 3 {
                out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
                out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
            } else {
                out[0] = (v[1] - v[0]) / dx;
                out[1] = out[0];
            }
        }
    }
    out
}

/// Trapezoid rule over possibly non-uniform samples.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Uniform samples 0 = t₀ < … < t_{k−1} = t_end.
pub fn time_samples(t_end: f64, count: usize) -> Vec<f64> {
    let k = count.max(2);
    (0..k).map(|i| t_end * i as f64 / (k - 1) as f64).collect()
}
