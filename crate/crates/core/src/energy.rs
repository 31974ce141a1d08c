//! Energy models: user transmission and local computing, server computing,
//! rotary-wing propulsion with thrust-to-weight correction, and the convex
//! propulsion upper bound used inside the optimizer.

use serde::{Deserialize, Serialize};

use crate::scenario::{Point, RotorParams, ScenarioConfig};
use crate::subproblems::Allocation;
use crate::trajectory::Trajectory;

/// Thrust-to-weight ratio `κ`. `clamped` is set when the radicand was
/// negative (hard braking) and the value was clamped to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    pub clamped: bool,
}

/// `κ = sqrt(1 + (4m‖a‖² + ρ²S²‖v‖⁴ + 4mρS F) / (4m²g²))` with `F = ‖v‖ (a·v)`.
pub fn thrust_ratio_kappa(v: &Point, a: &Point, rotor: &RotorParams) -> Kappa {
    let m = rotor.mass;
    let rs = rotor.rho * rotor.s_fp;
    let speed2 = v.norm_squared();
    let f = speed2.sqrt() * a.dot(v);
    let radicand = 1.0
        + (4.0 * m * a.norm_squared() + rs * rs * speed2 * speed2 + 4.0 * m * rs * f)
            / (4.0 * m * m * rotor.g * rotor.g);
    if radicand < 0.0 {
        static WARNED: std::sync::Once = std::sync::Once::new();
        WARNED.call_once(|| log::warn!("negative thrust-ratio radicand {radicand:e}; clamping kappa to 0 (reported once)"));
        log::debug!("negative thrust-ratio radicand {radicand:e}; clamping kappa to 0");
        Kappa {
            value: 0.0,
            clamped: true,
        }
    } else {
        Kappa {
            value: radicand.sqrt(),
            clamped: false,
        }
    }
}

/// Blade-profile plus parasite power, shared by the exact model and the bound.
fn profile_and_parasite_power(speed2: f64, rotor: &RotorParams) -> f64 {
    let speed = speed2.sqrt();
    rotor.p0 * (1.0 + 3.0 * speed2 / (rotor.u_tip * rotor.u_tip))
        + 0.5 * rotor.d0 * rotor.rho * rotor.s_sol * rotor.a_disc * speed2 * speed
}

/// Induced-power bracket `sqrt( sqrt(κ² + ‖v‖⁴/4v0⁴) - ‖v‖²/2v0² )`.
fn induced_bracket(kappa: f64, speed2: f64, v0: f64) -> f64 {
    let x = speed2 / (2.0 * v0 * v0);
    let root = (kappa * kappa + x * x).sqrt();
    // root - x without cancellation
    let diff = if root + x > 0.0 { kappa * kappa / (root + x) } else { 0.0 };
    diff.sqrt()
}

/// Propulsion energy of one slot, J.
pub fn propulsion_energy(v: &Point, a: &Point, rotor: &RotorParams, delta_t: f64) -> f64 {
    let speed2 = v.norm_squared();
    let kappa = thrust_ratio_kappa(v, a, rotor).value;
    let induced = rotor.p_i * kappa * induced_bracket(kappa, speed2, rotor.v0);
    delta_t * (profile_and_parasite_power(speed2, rotor) + induced)
}

/// `κ̂ = sqrt(1 + (2m‖a‖ + ρS‖v‖²)² / (2mg)²)`, an upper bound on `κ`.
pub fn kappa_hat(v: &Point, a: &Point, rotor: &RotorParams) -> f64 {
    let m = rotor.mass;
    let h = 2.0 * m * a.norm() + rotor.rho * rotor.s_fp * v.norm_squared();
    let den = 2.0 * m * rotor.g;
    (1.0 + (h / den) * (h / den)).sqrt()
}

/// Convex upper bound on [`propulsion_energy`], J.
pub fn propulsion_energy_upper(v: &Point, a: &Point, rotor: &RotorParams, delta_t: f64) -> f64 {
    let kh = kappa_hat(v, a, rotor);
    delta_t * (profile_and_parasite_power(v.norm_squared(), rotor) + rotor.p_i * kh * kh)
}

/// `E_u = T_k P_k + φ_u χ_k l_l (f_l)²`, J.
pub fn user_energy(k: usize, l_local: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.t_k[k] * cfg.p_k[k] + cfg.phi_u * cfg.chi_k[k] * l_local * cfg.f_l_k[k] * cfg.f_l_k[k]
}

/// `E_s = φ_s χ_k l_o (f_o)²`, J.
pub fn server_energy(k: usize, l_offload: f64, f_server: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.phi_s * cfg.chi_k[k] * l_offload * f_server * f_server
}

/// Per-component energies of one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Propulsion energy per slot, J.
    pub propulsion: Vec<f64>,
    /// User energy per user, J.
    pub user: Vec<f64>,
    /// Server energy per user, J.
    pub server: Vec<f64>,
    /// Weight applied to the propulsion sum.
    pub alpha_w: f64,
    /// `α Σ E_p + Σ (E_u + E_s)`, J.
    pub total_weighted: f64,
}

impl EnergyBreakdown {
    /// Exact energies of a trajectory and allocation.
    pub fn compute(traj: &Trajectory, alloc: &Allocation, cfg: &ScenarioConfig) -> Self {
        let propulsion: Vec<f64> = traj
            .velocities()
            .iter()
            .zip(traj.accelerations().iter())
            .map(|(v, a)| propulsion_energy(v, a, &cfg.rotor, cfg.delta_t))
            .collect();
        let user: Vec<f64> = (0..cfg.num_users)
            .map(|k| user_energy(k, alloc.l_local[k], cfg))
            .collect();
        let server: Vec<f64> = (0..cfg.num_users)
            .map(|k| server_energy(k, alloc.l_offload[k], alloc.f_server[k], cfg))
            .collect();
        Self::from_parts(propulsion, user, server, cfg.alpha_w)
    }

    pub fn from_parts(propulsion: Vec<f64>, user: Vec<f64>, server: Vec<f64>, alpha_w: f64) -> Self {
        let total_weighted = alpha_w * propulsion.iter().sum::<f64>()
            + user.iter().sum::<f64>()
            + server.iter().sum::<f64>();
        EnergyBreakdown {
            propulsion,
            user,
            server,
            alpha_w,
            total_weighted,
        }
    }
}

/// Total processed bits over weighted total energy, bits/J.
pub fn energy_efficiency(alloc: &Allocation, traj: &Trajectory, cfg: &ScenarioConfig) -> f64 {
    let energy = EnergyBreakdown::compute(traj, alloc, cfg);
    alloc.total_bits() / energy.total_weighted
}
