//! Horizontal flight path with its per-slot velocities and accelerations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Point, ScenarioConfig};

/// A violated mobility constraint.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has {found} waypoints, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("waypoint 1 is not q0 (off by {0} m)")]
    Start(f64),
    #[error("waypoint N+1 is not qF (off by {0} m)")]
    End(f64),
    #[error("slot {slot}: speed {speed} m/s exceeds v_max")]
    Speed { slot: usize, speed: f64 },
    #[error("slot {slot}: acceleration {accel} m/s^2 exceeds a_max")]
    Acceleration { slot: usize, accel: f64 },
    #[error("waypoint {index}: radius {radius} m exceeds r_d")]
    Radius { index: usize, radius: f64 },
    #[error("endpoints unreachable: {distance} m in {time} s at v_max")]
    Unreachable { distance: f64, time: f64 },
}

/// Waypoints `q[1..=N+1]` (stored zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
    pub delta_t: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Point>, delta_t: f64) -> Self {
        Trajectory { waypoints, delta_t }
    }

    /// Number of slots `N` (one fewer than the waypoints).
    pub fn num_slots(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    /// Position during slot `n` (zero-based, `n < N`).
    pub fn position(&self, n: usize) -> Point {
        self.waypoints[n]
    }

    /// `v[n] = (q[n+1] - q[n]) / delta_t` for every slot.
    pub fn velocities(&self) -> Vec<Point> {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.delta_t)
            .collect()
    }

    /// `a[n] = (v[n+1] - v[n]) / delta_t`; the last slot has no successor
    /// velocity and is assigned zero acceleration.
    pub fn accelerations(&self) -> Vec<Point> {
        let v = self.velocities();
        let mut a: Vec<Point> = v.windows(2).map(|w| (w[1] - w[0]) / self.delta_t).collect();
        if !v.is_empty() {
            a.push(Point::zeros());
        }
        a
    }

    /// Uniform-speed straight line from `q0` to `qF` over `N` slots.
    pub fn straight_line(cfg: &ScenarioConfig) -> Result<Self, TrajectoryError> {
        let n = cfg.num_slots;
        let distance = (cfg.q_final - cfg.q0).norm();
        if distance > cfg.mission_time() * cfg.v_max {
            return Err(TrajectoryError::Unreachable {
                distance,
                time: cfg.mission_time(),
            });
        }
        let waypoints = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                cfg.q0 + (cfg.q_final - cfg.q0) * s
            })
            .collect();
        Ok(Trajectory::new(waypoints, cfg.delta_t))
    }

    /// Checks the mobility constraints. `rel_tol` is applied relative to each
    /// limit (0 for an exact check).
    pub fn validate(&self, cfg: &ScenarioConfig, rel_tol: f64) -> Result<(), TrajectoryError> {
        let expected = cfg.num_slots + 1;
        if self.waypoints.len() != expected {
            return Err(TrajectoryError::Length {
                expected,
                found: self.waypoints.len(),
            });
        }
        let pos_tol = rel_tol * cfg.r_d.max(1.0);
        let start = (self.waypoints[0] - cfg.q0).norm();
        if start > pos_tol {
            return Err(TrajectoryError::Start(start));
        }
        let end = (self.waypoints[cfg.num_slots] - cfg.q_final).norm();
        if end > pos_tol {
            return Err(TrajectoryError::End(end));
        }
        for (slot, v) in self.velocities().iter().enumerate() {
            let speed = v.norm();
            if speed > cfg.v_max * (1.0 + rel_tol) {
                return Err(TrajectoryError::Speed { slot: slot + 1, speed });
            }
        }
        for (slot, a) in self.accelerations().iter().enumerate() {
            let accel = a.norm();
            if accel > cfg.a_max * (1.0 + rel_tol) {
                return Err(TrajectoryError::Acceleration { slot: slot + 1, accel });
            }
        }
        for (index, q) in self.waypoints.iter().enumerate() {
            let radius = q.norm();
            if radius > cfg.r_d * (1.0 + rel_tol) {
                return Err(TrajectoryError::Radius { index: index + 1, radius });
            }
        }
        Ok(())
    }

    /// Total path length, m.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}
