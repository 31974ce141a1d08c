//! Scenario parameters: geometry, channel, computation, energy and mission
//! settings, with validation and the reference default scenario.
//!
//! All quantities are SI (m, s, Hz, W, J, bits). The JSON document uses the
//! symbol-style key names (`K`, `N`, `delta_t`, ...) and rejects unknown keys.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizontal position or 2-D vector, meters (or m/s, m/s²).
pub type Point = Vector2<f64>;

/// Errors raised while loading or validating a scenario document.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field, if the error is tied to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Parse(_) => None,
            ScenarioError::MissingField(f) => Some(f),
            ScenarioError::Invalid { field, .. } => Some(field),
        }
    }
}

/// Rotary-wing propulsion coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorParams {
    /// Total airborne mass, kg.
    #[serde(rename = "m")]
    pub mass: f64,
    /// Blade profile power in hover, W.
    #[serde(rename = "P0")]
    pub p0: f64,
    /// Induced power in hover, W.
    #[serde(rename = "P_i")]
    pub p_i: f64,
    /// Rotor blade tip speed, m/s.
    #[serde(rename = "U_tip")]
    pub u_tip: f64,
    /// Fuselage drag ratio.
    pub d0: f64,
    /// Air density, kg/m³.
    pub rho: f64,
    /// Rotor solidity.
    pub s_sol: f64,
    /// Rotor disc area, m².
    #[serde(rename = "A_disc")]
    pub a_disc: f64,
    /// Fuselage equivalent flat plate area, m².
    #[serde(rename = "S_FP")]
    pub s_fp: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub v0: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
}

/// Reference mass the default drag area and induced velocity are quoted for.
const ROTOR_REFERENCE_MASS: f64 = 2.0;

impl RotorParams {
    /// Default coefficients for a vehicle of total mass `mass`.
    pub fn for_mass(mass: f64) -> Self {
        let ratio = mass / ROTOR_REFERENCE_MASS;
        RotorParams {
            mass,
            p0: 79.86,
            p_i: 88.63,
            u_tip: 120.0,
            d0: 0.6,
            rho: 1.225,
            s_sol: 0.05,
            a_disc: 0.503,
            s_fp: 0.0151 * ratio,
            v0: 4.03 * ratio.sqrt(),
            g: 9.8,
        }
    }

    /// The same airframe re-weighted to `mass`: drag area scales linearly,
    /// hover induced velocity with the square root and hover induced power
    /// with the 3/2 power of the mass ratio.
    pub fn with_mass(&self, mass: f64) -> Self {
        let ratio = mass / self.mass;
        RotorParams {
            mass,
            s_fp: self.s_fp * ratio,
            v0: self.v0 * ratio.sqrt(),
            p_i: self.p_i * ratio.powf(1.5),
            ..self.clone()
        }
    }
}

/// Full parameter set of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of ground users.
    #[serde(rename = "K")]
    pub num_users: usize,
    /// Number of time slots.
    #[serde(rename = "N")]
    pub num_slots: usize,
    /// Slot length, s.
    pub delta_t: f64,
    /// Flight altitude, m.
    #[serde(rename = "H")]
    pub altitude: f64,
    /// Initial horizontal position, m.
    pub q0: Point,
    /// Final horizontal position, m.
    #[serde(rename = "qF")]
    pub q_final: Point,
    /// Tether flight radius around the origin, m.
    pub r_d: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Server horizontal position, m.
    pub w_s: Point,
    /// User horizontal positions, m.
    pub w_k: Vec<Point>,
    /// Bandwidth, Hz.
    #[serde(rename = "B")]
    pub bandwidth: f64,
    /// Noise power, W.
    pub sigma2: f64,
    /// Channel power gain at 1 m.
    pub beta0: f64,
    /// Line-of-sight path-loss exponent.
    #[serde(rename = "alpha_L")]
    pub alpha_l: f64,
    /// Array elements along x.
    #[serde(rename = "Mx")]
    pub m_x: usize,
    /// Array elements along y.
    #[serde(rename = "My")]
    pub m_y: usize,
    /// Carrier wavelength, m.
    pub lambda_c: f64,
    /// Element separation, m.
    pub d_sep: f64,
    /// User transmit power, W.
    #[serde(rename = "P_k")]
    pub p_k: Vec<f64>,
    /// CPU cycles per bit.
    pub chi_k: Vec<f64>,
    /// Local CPU frequency, Hz.
    pub f_l_k: Vec<f64>,
    /// Tolerable latency, s.
    #[serde(rename = "T_k")]
    pub t_k: Vec<f64>,
    /// Minimum offloaded bits.
    #[serde(rename = "I_k")]
    pub i_k: Vec<f64>,
    /// Server CPU frequency cap, Hz.
    #[serde(rename = "C_o")]
    pub c_o: f64,
    /// Switched capacitance coefficient of the users.
    pub phi_u: f64,
    /// Switched capacitance coefficient of the server.
    pub phi_s: f64,
    /// Weight of the flight energy in the total.
    pub alpha_w: f64,
    pub rotor: RotorParams,
    /// Total mass of the vehicle carrying the server in the UAV-server baseline, kg.
    #[serde(default = "default_uav_server_mass")]
    pub uav_server_mass: f64,
    /// Server CPU cap used by the UAV-server baseline, Hz. Defaults to `C_o / 3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uav_server_cpu_cap: Option<f64>,
}

fn default_uav_server_mass() -> f64 {
    22.0
}

/// Keys every scenario document must carry.
const REQUIRED_KEYS: &[&str] = &[
    "K", "N", "delta_t", "H", "q0", "qF", "r_d", "v_max", "a_max", "w_s", "w_k", "B", "sigma2",
    "beta0", "alpha_L", "Mx", "My", "lambda_c", "d_sep", "P_k", "chi_k", "f_l_k", "T_k", "I_k",
    "C_o", "phi_u", "phi_s", "alpha_w", "rotor",
];

const ROTOR_KEYS: &[&str] = &[
    "m", "P0", "P_i", "U_tip", "d0", "rho", "s_sol", "A_disc", "S_FP", "v0", "g",
];

/// Parses and validates a JSON scenario document.
pub fn load_scenario(document: &str) -> Result<ScenarioConfig, ScenarioError> {
    let value: serde_json::Value =
        serde_json::from_str(document).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ScenarioError::Parse("scenario document must be a JSON object".into()))?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(*key) {
            return Err(ScenarioError::MissingField((*key).to_string()));
        }
    }
    if let Some(rotor) = obj.get("rotor").and_then(|r| r.as_object()) {
        for key in ROTOR_KEYS {
            if !rotor.contains_key(*key) {
                return Err(ScenarioError::MissingField(format!("rotor.{key}")));
            }
        }
    }
    let cfg: ScenarioConfig =
        serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a scenario as pretty JSON.
pub fn to_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("scenario serializes")
}

/// The reference scenario: four users, a 70 s mission and the published
/// simulation parameters.
pub fn default_scenario() -> ScenarioConfig {
    let k = 4;
    // U-RIS mass: 2 kg airframe plus 2 kg surface.
    let rotor = RotorParams::for_mass(4.0);
    ScenarioConfig {
        num_users: k,
        num_slots: 70,
        delta_t: 1.0,
        altitude: 100.0,
        q0: Point::new(-600.0, 50.0),
        q_final: Point::new(600.0, 50.0),
        r_d: 700.0,
        v_max: 50.0,
        a_max: 30.0,
        w_s: Point::new(0.0, 800.0),
        w_k: vec![
            Point::new(-450.0, -100.0),
            Point::new(-150.0, -350.0),
            Point::new(150.0, -100.0),
            Point::new(450.0, -350.0),
        ],
        bandwidth: 1e6,
        // -160 dBm
        sigma2: 1e-19,
        // -40 dB
        beta0: 1e-4,
        alpha_l: 2.0,
        m_x: 40,
        m_y: 25,
        lambda_c: 0.1,
        d_sep: 0.05,
        p_k: vec![0.1; k],
        chi_k: vec![1e3; k],
        f_l_k: vec![100e6; k],
        t_k: vec![30.0; k],
        i_k: vec![1e6; k],
        c_o: 3000e6,
        phi_u: 1e-8,
        phi_s: 1e-5,
        alpha_w: 0.02,
        rotor,
        uav_server_mass: default_uav_server_mass(),
        uav_server_cpu_cap: None,
    }
}

impl ScenarioConfig {
    /// Number of reflecting elements.
    pub fn num_elements(&self) -> usize {
        self.m_x * self.m_y
    }

    /// Mission duration `N * delta_t`, s.
    pub fn mission_time(&self) -> f64 {
        self.num_slots as f64 * self.delta_t
    }

    /// Same scenario with `num_slots` slots.
    pub fn with_slots(&self, num_slots: usize) -> Self {
        ScenarioConfig {
            num_slots,
            ..self.clone()
        }
    }

    /// Server CPU cap of the UAV-server baseline.
    pub fn uav_server_cap(&self) -> f64 {
        self.uav_server_cpu_cap.unwrap_or(self.c_o / 3.0)
    }

    /// Checks every scenario invariant; errors name the offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let k = self.num_users;
        if k < 1 {
            return Err(ScenarioError::invalid("K", "at least one user required"));
        }
        if self.num_slots < 2 {
            return Err(ScenarioError::invalid("N", "at least two slots required"));
        }
        if self.m_x < 1 {
            return Err(ScenarioError::invalid("Mx", "must be at least 1"));
        }
        if self.m_y < 1 {
            return Err(ScenarioError::invalid("My", "must be at least 1"));
        }
        let positive = [
            ("delta_t", self.delta_t),
            ("H", self.altitude),
            ("r_d", self.r_d),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("B", self.bandwidth),
            ("sigma2", self.sigma2),
            ("beta0", self.beta0),
            ("alpha_L", self.alpha_l),
            ("lambda_c", self.lambda_c),
            ("d_sep", self.d_sep),
            ("C_o", self.c_o),
            ("uav_server_mass", self.uav_server_mass),
            ("rotor.m", self.rotor.mass),
            ("rotor.P0", self.rotor.p0),
            ("rotor.P_i", self.rotor.p_i),
            ("rotor.U_tip", self.rotor.u_tip),
            ("rotor.rho", self.rotor.rho),
            ("rotor.s_sol", self.rotor.s_sol),
            ("rotor.A_disc", self.rotor.a_disc),
            ("rotor.S_FP", self.rotor.s_fp),
            ("rotor.v0", self.rotor.v0),
            ("rotor.g", self.rotor.g),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScenarioError::invalid(field, "must be finite and > 0"));
            }
        }
        let non_negative = [
            ("phi_u", self.phi_u),
            ("phi_s", self.phi_s),
            ("alpha_w", self.alpha_w),
            ("rotor.d0", self.rotor.d0),
        ];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ScenarioError::invalid(field, "must be finite and >= 0"));
            }
        }
        if let Some(cap) = self.uav_server_cpu_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(ScenarioError::invalid(
                    "uav_server_cpu_cap",
                    "must be finite and > 0",
                ));
            }
        }
        let per_user: [(&str, &[f64]); 5] = [
            ("P_k", &self.p_k),
            ("chi_k", &self.chi_k),
            ("f_l_k", &self.f_l_k),
            ("T_k", &self.t_k),
            ("I_k", &self.i_k),
        ];
        for (field, values) in per_user {
            if values.len() != k {
                return Err(ScenarioError::invalid(
                    field,
                    format!("expected {k} entries, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(ScenarioError::invalid(field, "entries must be finite and > 0"));
            }
        }
        if self.w_k.len() != k {
            return Err(ScenarioError::invalid(
                "w_k",
                format!("expected {k} positions, found {}", self.w_k.len()),
            ));
        }
        let points = std::iter::once(("q0", &self.q0))
            .chain(std::iter::once(("qF", &self.q_final)))
            .chain(std::iter::once(("w_s", &self.w_s)))
            .chain(self.w_k.iter().map(|w| ("w_k", w)));
        for (field, p) in points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(ScenarioError::invalid(field, "coordinates must be finite"));
            }
        }
        if self.q0.norm() > self.r_d {
            return Err(ScenarioError::invalid("q0", "q0 outside tether radius"));
        }
        if self.q_final.norm() > self.r_d {
            return Err(ScenarioError::invalid("qF", "qF outside tether radius"));
        }
        let reach = self.mission_time() * self.v_max;
        let span = (self.q_final - self.q0).norm();
        if span > reach {
            return Err(ScenarioError::invalid(
                "N",
                format!("endpoints unreachable: {span} m > {reach} m within N*delta_t at v_max"),
            ));
        }
        for user in 0..k {
            if self.c_o * self.t_k[user] <= self.i_k[user] * self.chi_k[user] {
                return Err(ScenarioError::invalid(
                    "I_k",
                    format!(
                        "user {}: minimum offload cannot be computed within T_k even at C_o",
                        user + 1
                    ),
                ));
            }
        }
        Ok(())
    }
}
