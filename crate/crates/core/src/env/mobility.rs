//! Random-direction mobility with reflection at the deployment boundary.

use std::f64::consts::TAU;

use rand::Rng;

use crate::config::NetworkConfig;
use crate::env::{Position, UserState};

/// O-RU sites on a square grid with inter-site spacing, plus the bounding box
/// users are kept inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub orus: Vec<Position>,
    pub min: Position,
    pub max: Position,
}

impl Layout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let cols = (cfg.num_orus as f64).sqrt().ceil() as usize;
        let isd = cfg.inter_site_distance_m;
        let orus: Vec<Position> = (0..cfg.num_orus)
            .map(|b| Position {
                x: (b % cols) as f64 * isd,
                y: (b / cols) as f64 * isd,
            })
            .collect();
        let margin = cfg.initial_distance_max_m;
        let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&Position) -> f64| {
            orus.iter().map(get).fold(init, f)
        };
        let min = Position {
            x: fold(f64::min, f64::INFINITY, |p| p.x) - margin,
            y: fold(f64::min, f64::INFINITY, |p| p.y) - margin,
        };
        let max = Position {
            x: fold(f64::max, f64::NEG_INFINITY, |p| p.x) + margin,
            y: fold(f64::max, f64::NEG_INFINITY, |p| p.y) + margin,
        };
        Self { orus, min, max }
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if t >= TAU { 0.0 } else { t }
}

/// Samples a point uniformly (by area) on the annulus `[r_min, r_max]` around `centre`.
pub fn place_on_annulus<R: Rng + ?Sized>(
    rng: &mut R,
    centre: Position,
    r_min: f64,
    r_max: f64,
) -> Position {
    let r2 = rng.random_range(r_min * r_min..=r_max * r_max);
    let radius = r2.sqrt();
    let angle = rng.random_range(0.0..TAU);
    Position {
        x: centre.x + radius * angle.cos(),
        y: centre.y + radius * angle.sin(),
    }
}

/// Per-user speed for an episode: uniform on a window centred on `mean` that
/// stays inside `[V_min, V_max]`, so the expected speed equals `mean`.
pub fn draw_speed<R: Rng + ?Sized>(rng: &mut R, cfg: &NetworkConfig, mean: f64) -> f64 {
    let half = cfg
        .speed_spread_mps
        .min(mean - cfg.speed_min_mps)
        .min(cfg.speed_max_mps - mean)
        .max(0.0);
    if half == 0.0 {
        mean
    } else {
        rng.random_range(mean - half..=mean + half)
    }
}

fn reflect(pos: &mut f64, theta: &mut f64, lo: f64, hi: f64, mirror: fn(f64) -> f64) {
    if *pos < lo {
        *pos = 2.0 * lo - *pos;
        *theta = mirror(*theta);
    } else if *pos > hi {
        *pos = 2.0 * hi - *pos;
        *theta = mirror(*theta);
    }
    *pos = pos.clamp(lo, hi);
}

/// Advances every user by one slot: move `v·T_s` along the current heading,
/// reflect at the boundary, then change heading with probability `ρ` by a
/// uniform increment on `[0, 2π]`. Returns how many users changed heading.
pub fn step_mobility<R: Rng + ?Sized>(
    rng: &mut R,
    users: &mut [UserState],
    layout: &Layout,
    cfg: &NetworkConfig,
) -> usize {
    let dt = cfg.slot_duration_s;
    let mut changes = 0;
    for user in users.iter_mut() {
        let step = user.speed_mps * dt;
        user.position.x += step * user.direction.cos();
        user.position.y += step * user.direction.sin();
        let mut theta = user.direction;
        reflect(&mut user.position.x, &mut theta, layout.min.x, layout.max.x, |t| {
            std::f64::consts::PI - t
        });
        reflect(&mut user.position.y, &mut theta, layout.min.y, layout.max.y, |t| -t);
        if rng.random_bool(cfg.direction_change_prob) {
            theta += rng.random_range(0.0..=TAU);
            changes += 1;
        }
        user.direction = normalize_angle(theta);
    }
    changes
}
