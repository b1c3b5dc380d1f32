//! Adaptive Dormand–Prince 5(4) integration for scalar ODEs.

use crate::error::{FlowError, Result};

/// Error tolerance used for characteristic tracing.
pub const TRACE_TOL: f64 = 1e-9;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// y(s1) for y′ = g(s, y), y(s0) = y0; s1 may lie on either side of s0.
pub fn integrate<F>(g: F, s0: f64, y0: f64, s1: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let mut out = integrate_dense(g, s0, y0, &[s1], tol)?;
    Ok(out.pop().expect("one output"))
}

/// y at each of the monotone output points `outs` (all on one side of s0).
pub fn integrate_dense<F>(mut g: F, s0: f64, y0: f64, outs: &[f64], tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let mut s = s0;
    let mut y = y0;
    let mut result = Vec::with_capacity(outs.len());
    let span = outs.iter().fold(0.0f64, |a, o| a.max((o - s0).abs()));
    let mut h = if span > 0.0 { span / 16.0 } else { 0.0 };
    for &target in outs {
        let dir = if target >= s { 1.0 } else { -1.0 };
        let mut steps = 0usize;
        while (target - s).abs() > 1e-15 * (1.0 + s.abs()) {
            steps += 1;
            if steps > 1_000_000 {
                return Err(FlowError::Numerical("ODE step limit reached".into()));
            }
            let remaining = (target - s).abs();
            let hs = h.abs().min(remaining).max(1e-14 * (1.0 + s.abs()));
            let step = dir * hs;
            let mut k = [0.0; 7];
            for st in 0..7 {
                let mut yi = y;
                for (j, kj) in k.iter().enumerate().take(st) {
                    yi += step * A[st][j] * kj;
                }
                k[st] = g(s + C[st] * step, yi)?;
            }
            let y5: f64 = y + step * B5.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
            let y4: f64 = y + step * B4.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
            let err = (y5 - y4).abs() / (tol * (1.0 + y.abs().max(y5.abs())));
            if !y5.is_finite() {
                h = hs / 4.0;
                if h < 1e-14 {
                    return Err(FlowError::Numerical("ODE solution became non-finite".into()));
                }
                continue;
            }
            if err <= 1.0 {
                s += step;
                y = y5;
                if hs >= remaining {
                    s = target;
                }
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = hs * factor;
        }
        result.push(y);
    }
    Ok(result)
}
