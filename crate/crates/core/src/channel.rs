//! Line-of-sight geometry, URA steering phases, the cascaded
//! user → surface → server channel and the resulting achievable rates.
//!
//! Element `i` of the `Mx × My` array is indexed row-major over `(m_x, m_y)`,
//! i.e. `i = m_x * My + m_y` with zero-based indices, matching the Kronecker
//! order `a_x ⊗ a_y`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::scenario::{Point, ScenarioConfig};

/// Which radio link carries the offloaded bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    /// User → UAV-mounted surface → ground server, phase-aligned.
    RisCascade,
    /// User → UAV-carried server, single hop.
    DirectToUav,
}

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// 3-D distance between the aerial node above `q` at altitude `h` and the
/// ground node at `w`.
pub fn link_distance(q: &Point, w: &Point, h: f64) -> f64 {
    ((q - w).norm_squared() + h * h).sqrt()
}

/// `(cos φ sin ϑ, sin φ sin ϑ)` of the ground node `w` seen from `q`.
fn direction_cosines(q: &Point, w: &Point, h: f64) -> (f64, f64) {
    let d = link_distance(q, w, h);
    ((q.x - w.x) / d, (q.y - w.y) / d)
}

/// Per-element phase of the steering vector `a_x ⊗ a_y` toward `w`.
pub fn steering_phases(q: &Point, w: &Point, cfg: &ScenarioConfig) -> Vec<f64> {
    let (cx, cy) = direction_cosines(q, w, cfg.altitude);
    let kd = TAU / cfg.lambda_c * cfg.d_sep;
    let mut phases = Vec::with_capacity(cfg.num_elements());
    for mx in 0..cfg.m_x {
        for my in 0..cfg.m_y {
            phases.push(-kd * (mx as f64 * cx + my as f64 * cy));
        }
    }
    phases
}

/// Phase offsets `ψ_i` between the user-side and server-side steering
/// vectors; `θ_i = -ψ_i` makes every reflected path add coherently.
pub fn alignment_offsets(q: &Point, w_k: &Point, w_s: &Point, cfg: &ScenarioConfig) -> Vec<f64> {
    let (cxk, cyk) = direction_cosines(q, w_k, cfg.altitude);
    let (cxs, cys) = direction_cosines(q, w_s, cfg.altitude);
    let base = 2.0 * PI * cfg.d_sep / cfg.lambda_c;
    let mut psi = Vec::with_capacity(cfg.num_elements());
    for mx in 0..cfg.m_x {
        for my in 0..cfg.m_y {
            psi.push(
                mx as f64 * base * (cxs - cxk) + my as f64 * base * (cys - cyk),
            );
        }
    }
    psi
}

/// Amplitude `τ = sqrt(β₀ d^{-α_L})` of one LoS hop.
pub fn hop_amplitude(distance: f64, cfg: &ScenarioConfig) -> f64 {
    (cfg.beta0 * distance.powf(-cfg.alpha_l)).sqrt()
}

/// Cascaded gain `h_sᴴ Θ h_k = τ_s τ_k Σ_i exp(j(θ_i + ψ_i))`.
pub fn cascaded_gain(q: &Point, theta: &[f64], w_k: &Point, cfg: &ScenarioConfig) -> Complex64 {
    let psi = alignment_offsets(q, w_k, &cfg.w_s, cfg);
    debug_assert_eq!(theta.len(), psi.len());
    let tau_s = hop_amplitude(link_distance(q, &cfg.w_s, cfg.altitude), cfg);
    let tau_k = hop_amplitude(link_distance(q, w_k, cfg.altitude), cfg);
    let sum: Complex64 = theta
        .iter()
        .zip(&psi)
        .map(|(t, p)| Complex64::from_polar(1.0, t + p))
        .sum();
    sum * (tau_s * tau_k)
}

/// `θ_i = wrap(-ψ_i + ω)` for one slot.
pub fn aligned_phases(psi: &[f64], omega: f64) -> Vec<f64> {
    psi.iter().map(|p| wrap_phase(-p + omega)).collect()
}

/// `ξ_k = P_k β₀² M² / σ²` of the phase-aligned cascaded link.
pub fn cascade_snr_constant(k: usize, cfg: &ScenarioConfig) -> f64 {
    let m = cfg.num_elements() as f64;
    cfg.p_k[k] * cfg.beta0 * cfg.beta0 * m * m / cfg.sigma2
}

/// `P_k β₀ / σ²` of the single-hop link.
pub fn direct_snr_constant(k: usize, cfg: &ScenarioConfig) -> f64 {
    cfg.p_k[k] * cfg.beta0 / cfg.sigma2
}

/// Maximum rate of user `k` at `q` with aligned phases, bits/s.
pub fn aligned_rate(q: &Point, k: usize, cfg: &ScenarioConfig) -> f64 {
    let ds = link_distance(q, &cfg.w_s, cfg.altitude);
    let dk = link_distance(q, &cfg.w_k[k], cfg.altitude);
    let snr = cascade_snr_constant(k, cfg) / (ds.powf(cfg.alpha_l) * dk.powf(cfg.alpha_l));
    cfg.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Single-hop user → UAV rate, bits/s.
pub fn direct_rate(q: &Point, k: usize, cfg: &ScenarioConfig) -> f64 {
    let dk = link_distance(q, &cfg.w_k[k], cfg.altitude);
    let snr = direct_snr_constant(k, cfg) / dk.powf(cfg.alpha_l);
    cfg.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

impl Link {
    /// Best achievable rate of user `k` when served at `q`, bits/s.
    pub fn rate(self, q: &Point, k: usize, cfg: &ScenarioConfig) -> f64 {
        match self {
            Link::RisCascade => aligned_rate(q, k, cfg),
            Link::DirectToUav => direct_rate(q, k, cfg),
        }
    }

    /// SNR constant `ξ` such that the spectral efficiency is
    /// `log2(1 + ξ / (p^{α/2} y^{α/2}))` with `p`, `y` the squared hop
    /// distances (the direct link has `p ≡ 1`).
    pub fn snr_constant(self, k: usize, cfg: &ScenarioConfig) -> f64 {
        match self {
            Link::RisCascade => cascade_snr_constant(k, cfg),
            Link::DirectToUav => direct_snr_constant(k, cfg),
        }
    }

    /// Rate table `Ř[k][n]` along the waypoints of slots `0..N`.
    pub fn rate_table(self, waypoints: &[Point], cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
        let n = cfg.num_slots;
        (0..cfg.num_users)
            .map(|k| (0..n).map(|s| self.rate(&waypoints[s], k, cfg)).collect())
            .collect()
    }
}

/// Rate of user `k` in one slot with arbitrary surface phases, bits/s.
pub fn instantaneous_rate(
    c: f64,
    q: &Point,
    theta: &[f64],
    k: usize,
    cfg: &ScenarioConfig,
) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let gain = cascaded_gain(q, theta, &cfg.w_k[k], cfg);
    let snr = cfg.p_k[k] * gain.norm_sqr() / cfg.sigma2;
    c * cfg.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Per-slot surface phases `θ[n][i]`, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub theta: Vec<Vec<f64>>,
}

impl PhaseConfig {
    /// Wraps every entry into `[0, 2π)`.
    pub fn new(theta: Vec<Vec<f64>>) -> Self {
        PhaseConfig {
            theta: theta
                .into_iter()
                .map(|slot| slot.into_iter().map(wrap_phase).collect())
                .collect(),
        }
    }

    /// Phases aligned toward the user served in each slot.
    pub fn aligned(waypoints: &[Point], served: &[usize], cfg: &ScenarioConfig) -> Self {
        let theta = served
            .iter()
            .enumerate()
            .map(|(n, &k)| {
                let psi = alignment_offsets(&waypoints[n], &cfg.w_k[k], &cfg.w_s, cfg);
                aligned_phases(&psi, 0.0)
            })
            .collect();
        PhaseConfig { theta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(mx: usize, my: usize) -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.m_x = mx;
        cfg.m_y = my;
        cfg
    }

    #[test]
    fn link_distance_cases() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(link_distance(&o, &o, 100.0), 100.0);
        assert!((link_distance(&Point::new(300.0, 400.0), &o, 1e-9) - 500.0).abs() < 1e-9);
        assert!(
            (link_distance(&Point::new(30.0, 40.0), &o, 100.0) - 12500f64.sqrt()).abs() < 1e-12
        );
    }

    #[test]
    fn steering_nadir_and_first_element() {
        let cfg = small_cfg(4, 3);
        let w = Point::new(10.0, -20.0);
        assert!(steering_phases(&w, &w, &cfg).iter().all(|p| *p == 0.0));
        let ph = steering_phases(&Point::new(300.0, 70.0), &w, &cfg);
        assert_eq!(ph[0], 0.0);
        assert_eq!(ph.len(), 12);
    }

    #[test]
    fn steering_two_element_reference() {
        // Mx=2, My=1, λ=2d: element 2 phase is -π·(Δx/d_link).
        let mut cfg = small_cfg(2, 1);
        cfg.d_sep = 0.05;
        cfg.lambda_c = 0.1;
        cfg.altitude = 100.0;
        let q = Point::new(1000.0, 0.0);
        let w = Point::new(0.0, 0.0);
        let ph = steering_phases(&q, &w, &cfg);
        // Independent evaluation: d_link = sqrt(1000² + 100²).
        let d_link = (1000.0f64 * 1000.0 + 100.0 * 100.0).sqrt();
        let expected = -PI * 1000.0 / d_link;
        assert_eq!(ph[0], 0.0);
        assert!((ph[1] - expected).abs() < 1e-14);
        assert!((ph[1] - (-3.126_001_526_812_331_6)).abs() < 1e-12);
    }

    /// Brute-force `h_sᴴ Θ h_k` from steering vectors, independent of ψ.
    fn brute_force_gain(q: &Point, theta: &[f64], k: usize, cfg: &ScenarioConfig) -> Complex64 {
        let h = cfg.altitude;
        let ds = ((q - cfg.w_s).norm_squared() + h * h).sqrt();
        let dk = ((q - cfg.w_k[k]).norm_squared() + h * h).sqrt();
        let ts = (cfg.beta0 / ds.powf(cfg.alpha_l)).sqrt();
        let tk = (cfg.beta0 / dk.powf(cfg.alpha_l)).sqrt();
        let hs: Vec<Complex64> = steering_phases(q, &cfg.w_s, cfg)
            .iter()
            .map(|p| Complex64::from_polar(ts, *p))
            .collect();
        let hk: Vec<Complex64> = steering_phases(q, &cfg.w_k[k], cfg)
            .iter()
            .map(|p| Complex64::from_polar(tk, *p))
            .collect();
        (0..theta.len())
            .map(|i| hs[i].conj() * Complex64::from_polar(1.0, theta[i]) * hk[i])
            .sum()
    }

    #[test]
    fn cascaded_gain_matches_brute_force() {
        let cfg = small_cfg(10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let q = Point::new(rng.gen_range(-600.0..600.0), rng.gen_range(-600.0..600.0));
            let theta: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..TAU)).collect();
            let k = rng.gen_range(0..cfg.num_users);
            let fast = cascaded_gain(&q, &theta, &cfg.w_k[k], &cfg);
            let slow = brute_force_gain(&q, &theta, k, &cfg);
            assert!((fast - slow).norm() <= 1e-12 * slow.norm().max(fast.norm()) + 1e-300);
            let ts = hop_amplitude(link_distance(&q, &cfg.w_s, cfg.altitude), &cfg);
            let tk = hop_amplitude(link_distance(&q, &cfg.w_k[k], cfg.altitude), &cfg);
            assert!(fast.norm() <= ts * tk * 100.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn coherent_and_single_element_gain() {
        let cfg = small_cfg(5, 4);
        let q = Point::new(120.0, 300.0);
        let psi = alignment_offsets(&q, &cfg.w_k[1], &cfg.w_s, &cfg);
        let theta: Vec<f64> = psi.iter().map(|p| -p).collect();
        let g = cascaded_gain(&q, &theta, &cfg.w_k[1], &cfg);
        let ts = hop_amplitude(link_distance(&q, &cfg.w_s, cfg.altitude), &cfg);
        let tk = hop_amplitude(link_distance(&q, &cfg.w_k[1], cfg.altitude), &cfg);
        assert!((g.norm() - ts * tk * 20.0).abs() <= 1e-12 * ts * tk * 20.0);

        let one = small_cfg(1, 1);
        let g1 = cascaded_gain(&q, &[1.234], &one.w_k[0], &one);
        let ts = hop_amplitude(link_distance(&q, &one.w_s, one.altitude), &one);
        let tk = hop_amplitude(link_distance(&q, &one.w_k[0], one.altitude), &one);
        assert!((g1.norm() - ts * tk).abs() <= 1e-15 * ts * tk);
    }

    #[test]
    fn alignment_offsets_edge_cases() {
        let mut cfg = small_cfg(3, 3);
        cfg.w_k[0] = cfg.w_s;
        let q = Point::new(50.0, -20.0);
        assert!(alignment_offsets(&q, &cfg.w_k[0], &cfg.w_s, &cfg)
            .iter()
            .all(|p| p.abs() == 0.0));
        let psi = alignment_offsets(&q, &cfg.w_k[1], &cfg.w_s, &cfg);
        assert_eq!(psi[0], 0.0);
    }

    #[test]
    fn aligned_phase_dominates_random_draws() {
        let cfg = small_cfg(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = Point::new(-200.0, 150.0);
        let psi = alignment_offsets(&q, &cfg.w_k[2], &cfg.w_s, &cfg);
        let best = cascaded_gain(&q, &aligned_phases(&psi, 0.0), &cfg.w_k[2], &cfg).norm();
        for _ in 0..10_000 {
            let theta: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..TAU)).collect();
            assert!(cascaded_gain(&q, &theta, &cfg.w_k[2], &cfg).norm() <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn aligned_phases_wrap_and_global_phase() {
        assert!(aligned_phases(&[0.0; 5], 0.0).iter().all(|t| *t == 0.0));
        let t = aligned_phases(&[3.0 * PI], 0.0);
        assert!((t[0] - PI).abs() < 1e-12);
        let cfg = small_cfg(3, 2);
        let q = Point::new(10.0, 10.0);
        let psi = alignment_offsets(&q, &cfg.w_k[0], &cfg.w_s, &cfg);
        let a = cascaded_gain(&q, &aligned_phases(&psi, 0.0), &cfg.w_k[0], &cfg).norm();
        let b = cascaded_gain(&q, &aligned_phases(&psi, PI / 3.0), &cfg.w_k[0], &cfg).norm();
        assert!((a - b).abs() <= 1e-13 * a);
        assert!(wrap_phase(-1e-18) < TAU);
    }

    #[test]
    fn snr_constant_and_reference_rate() {
        let cfg = default_scenario();
        let xi = cascade_snr_constant(0, &cfg);
        assert!((xi / 1e16 - 1.0).abs() < 1e-12);
        // ξ=1e16, α=2, d_s=d_k=1000 m, B=1 MHz.
        let rate = 1e6 * (1.0f64 + 1e16 / (1e6 * 1e6)).log2();
        assert!((rate - 1.3288e7).abs() / 1.3288e7 < 1e-4);
        // Realize d_s = d_k = 1000 m with H = 100 m.
        let mut c2 = cfg.clone();
        let horiz = (1000.0f64 * 1000.0 - 100.0 * 100.0).sqrt();
        c2.w_s = Point::new(0.0, horiz);
        c2.w_k[0] = Point::new(0.0, -horiz);
        let r = aligned_rate(&Point::new(0.0, 0.0), 0, &c2);
        assert!((r - rate).abs() / rate < 1e-12);
    }

    #[test]
    fn aligned_rate_vanishes_with_distance() {
        let mut cfg = default_scenario();
        let mut prev = f64::INFINITY;
        let near = aligned_rate(&Point::new(0.0, 0.0), 0, &cfg);
        for d in [1e2, 1e3, 1e4, 1e5, 1e6, 1e9] {
            cfg.w_k[0] = Point::new(d, 0.0);
            let r = aligned_rate(&Point::new(0.0, 0.0), 0, &cfg);
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-6 * near);
    }

    #[test]
    fn instantaneous_rate_cases() {
        let cfg = small_cfg(6, 5);
        let q = Point::new(-100.0, 200.0);
        assert_eq!(instantaneous_rate(0.0, &q, &[0.0; 30], 0, &cfg), 0.0);
        let psi = alignment_offsets(&q, &cfg.w_k[0], &cfg.w_s, &cfg);
        let r = instantaneous_rate(1.0, &q, &aligned_phases(&psi, 0.0), 0, &cfg);
        let closed = aligned_rate(&q, 0, &cfg);
        assert!((r - closed).abs() <= 1e-9 * closed);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let theta: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..TAU)).collect();
            assert!(instantaneous_rate(1.0, &q, &theta, 0, &cfg) <= closed * (1.0 + 1e-12));
        }
    }

    #[test]
    fn direct_rate_reference() {
        // d_k = 1000 m: B log2(1 + 0.1·1e-4/(1e-19·1e6)) = B log2(1 + 1e8).
        let mut cfg = default_scenario();
        let horiz = (1000.0f64 * 1000.0 - 100.0 * 100.0).sqrt();
        cfg.w_k[0] = Point::new(horiz, 0.0);
        let r = direct_rate(&Point::new(0.0, 0.0), 0, &cfg);
        let expected = 1e6 * (1.0f64 + 1e8).log2();
        assert!((r - expected).abs() / expected < 1e-12);
        assert!((r / 1e6 - 26.575).abs() < 1e-3);
    }
}
