use std::f64::consts::PI;

use log::info;

use crate::scenario::{Point, ScenarioConfig};
use crate::subproblems::InnerOptions;
use crate::trajectory::Trajectory;

use super::alternating::{alternate, Variant};
use super::{Algorithm, OptimizeError, SolveReport};

/// Largest user count searched exhaustively.
const EXACT_ROUTE_USERS: usize = 8;

/// Length of `q0 → w[order[0]] → … → qF`.
pub fn route_length(order: &[usize], cfg: &ScenarioConfig) -> f64 {
    let mut pts = vec![cfg.q0];
    pts.extend(order.iter().map(|&k| cfg.w_k[k]));
    pts.push(cfg.q_final);
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Shortest visiting order of the users between `q0` and `qF`. Exhaustive
/// (first minimum in lexicographic order) up to 8 users, nearest neighbour
/// beyond.
pub fn shortest_route(cfg: &ScenarioConfig) -> Vec<usize> {
    let k = cfg.num_users;
    if k > EXACT_ROUTE_USERS {
        info!("{k} users: nearest-neighbour route instead of exhaustive search");
        let mut left: Vec<usize> = (0..k).collect();
        let mut at = cfg.q0;
        let mut order = Vec::with_capacity(k);
        while !left.is_empty() {
            let (i, _) = left
                .iter()
                .enumerate()
                .min_by(|a, b| (cfg.w_k[*a.1] - at).norm().total_cmp(&(cfg.w_k[*b.1] - at).norm()))
                .unwrap();
            let u = left.remove(i);
            at = cfg.w_k[u];
            order.push(u);
        }
        return order;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_len = route_length(&perm, cfg);
    while next_permutation(&mut perm) {
        let len = route_length(&perm, cfg);
        if len < best_len {
            best_len = len;
            best = perm.clone();
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { a: Point, b: Point },
    Arc { center: Point, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => (b - a).norm(),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn at(&self, s: f64) -> Point {
        match *self {
            Piece::Line { a, b } => {
                let len = (b - a).norm();
                if len == 0.0 {
                    a
                } else {
                    a + (b - a) * (s / len)
                }
            }
            Piece::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let ang = start + sweep.signum() * s / radius;
                center + Point::new(ang.cos(), ang.sin()) * radius
            }
        }
    }
}

fn perp(d: Point) -> Point {
    Point::new(-d.y, d.x)
}

/// Polyline with every corner replaced by a circular arc of radius up to
/// `radius` (smaller where the adjacent legs are short).
fn filleted(pts: &[Point], radius: f64) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut from = pts[0];
    for i in 1..pts.len() - 1 {
        let (prev, at, next) = (pts[i - 1], pts[i], pts[i + 1]);
        let (d_in, d_out) = ((at - prev).normalize(), (next - at).normalize());
        let turn = d_in.dot(&d_out).clamp(-1.0, 1.0).acos();
        if turn < 1e-9 {
            continue;
        }
        let half = (0.5 * turn).tan();
        let room = 0.5 * (at - prev).norm().min((next - at).norm());
        let tangent = (radius * half).min(room);
        let r = tangent / half;
        let a = at - d_in * tangent;
        let b = at + d_out * tangent;
        let side = (d_in.x * d_out.y - d_in.y * d_out.x).signum();
        let center = a + perp(d_in) * (side * r);
        let start = (a - center).y.atan2((a - center).x);
        pieces.push(Piece::Line { a: from, b: a });
        if r > 0.0 {
            pieces.push(Piece::Arc {
                center,
                radius: r,
                start,
                sweep: side * turn,
            });
        }
        from = b;
    }
    pieces.push(Piece::Line {
        a: from,
        b: pts[pts.len() - 1],
    });
    pieces
}

fn sample(pieces: &[Piece], num_slots: usize) -> Vec<Point> {
    let total: f64 = pieces.iter().map(Piece::length).sum();
    let mut out = Vec::with_capacity(num_slots + 1);
    let mut idx = 0;
    let mut offset = 0.0;
    for j in 0..=num_slots {
        let s = total * j as f64 / num_slots as f64;
        while idx + 1 < pieces.len() && s > offset + pieces[idx].length() {
            offset += pieces[idx].length();
            idx += 1;
        }
        out.push(pieces[idx].at((s - offset).min(pieces[idx].length())));
    }
    out
}

/// Constant-speed flight along the shortest route, corners rounded just
/// enough to respect `a_max`.
pub fn route_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory, OptimizeError> {
    let order = shortest_route(cfg);
    let mut pts = vec![cfg.q0];
    pts.extend(order.iter().map(|&k| cfg.w_k[k]));
    pts.push(cfg.q_final);
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    let time = cfg.mission_time();
    let length = route_length(&order, cfg);
    if length > cfg.v_max * time {
        return Err(OptimizeError::RouteTooLong { length, time });
    }
    if pts.len() < 2 {
        return Ok(Trajectory::new(vec![cfg.q0; cfg.num_slots + 1], cfg.delta_t));
    }
    let speed = length / time;
    let mut radius = 1.25 * speed * speed / cfg.a_max;
    let mut last = None;
    for _ in 0..60 {
        let traj = Trajectory::new(sample(&filleted(&pts, radius), cfg.num_slots), cfg.delta_t);
        match traj.validate(cfg, 1e-9) {
            Ok(()) => return Ok(traj),
            Err(e) => last = Some(e),
        }
        radius = (radius * 1.25).max(1e-3 * cfg.r_d);
        if radius > 2.0 * PI * cfg.r_d {
            break;
        }
    }
    Err(OptimizeError::Trajectory(last.expect("at least one attempt")))
}

/// Baseline: fixed shortest-route trajectory; schedule, offloading and CPU
/// split optimized by the same alternation with the trajectory frozen.
pub fn heuristic_traj(cfg: &ScenarioConfig, tol: f64, max_outer: usize) -> Result<SolveReport, OptimizeError> {
    cfg.validate()?;
    let variant = Variant {
        algorithm: Algorithm::HeuristicTraj,
        opts: InnerOptions {
            freeze_trajectory: true,
            ..InnerOptions::default()
        },
        initial: route_trajectory(cfg)?,
    };
    alternate(cfg, variant, tol, max_outer)
}
