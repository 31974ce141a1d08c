//! First-order lower bound of the spectral efficiency in the squared hop
//! distances.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioConfig;

/// `γ₀(p, y) = log2(1 + ξ / (p^{α/2} y^{α/2}))`, bits/s/Hz.
pub fn gamma0(xi: f64, alpha: f64, p: f64, y: f64) -> f64 {
    let h = 0.5 * alpha;
    (xi / (p.powf(h) * y.powf(h))).ln_1p() * LOG2_E
}

/// Expansion of `γ₀` at `(p_t, y_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorEntry {
    /// `∂γ₀/∂p` at the expansion point.
    pub a: f64,
    /// `∂γ₀/∂y` at the expansion point.
    pub b: f64,
    /// `γ₀(p_t, y_t)`.
    pub c: f64,
    pub p_t: f64,
    pub y_t: f64,
}

impl TaylorEntry {
    pub fn at(xi: f64, alpha: f64, p_t: f64, y_t: f64) -> Self {
        let h = 0.5 * alpha;
        let (ph, yh) = (p_t.powf(h), y_t.powf(h));
        TaylorEntry {
            a: -LOG2_E * h * xi / (ph * p_t * yh + xi * p_t),
            b: -LOG2_E * h * xi / (ph * yh * y_t + xi * y_t),
            c: gamma0(xi, alpha, p_t, y_t),
            p_t,
            y_t,
        }
    }
}

/// Coefficient tables `A[k][n]`, `B[k][n]`, `C[k][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoeffs {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl TaylorCoeffs {
    pub fn from_entries(entries: &[Vec<TaylorEntry>]) -> Self {
        let pick = |f: fn(&TaylorEntry) -> f64| entries.iter().map(|row| row.iter().map(f).collect()).collect();
        TaylorCoeffs {
            a: pick(|e| e.a),
            b: pick(|e| e.b),
            c: pick(|e| e.c),
        }
    }
}

/// Expansion for user `k` of the phase-aligned cascaded link.
pub fn taylor_rate_coeffs(k: usize, p_t: f64, y_t: f64, cfg: &ScenarioConfig) -> TaylorEntry {
    TaylorEntry::at(crate::channel::cascade_snr_constant(k, cfg), cfg.alpha_l, p_t, y_t)
}

/// `R̂ = C + A (p - p_t) + B (y - y_t)`, bits/s/Hz.
pub fn rate_lower_bound(p: f64, y: f64, coeffs: &TaylorEntry) -> f64 {
    coeffs.c + coeffs.a * (p - coeffs.p_t) + coeffs.b * (y - coeffs.y_t)
}
