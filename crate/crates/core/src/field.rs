//! Potential-field dynamics for witness placement and the epoch incentive
//! split.
//!
//! Nodes inside `R_r` of each other repel with `k_rep / r^2`; nodes beyond
//! `R_r` attract with `k_att / (r - R_r)^2`, the denominator clamped at
//! `epsilon_sing`. Velocities follow `v' = v + (F - alpha v) / m` and
//! positions `x' = x + v' dt`. Witnesses closest to force balance earn the
//! largest share of each epoch budget.

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

/// Separation used for coincident nodes.
pub const COINCIDENT_JITTER_M: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldParams {
    pub k_rep: f64,
    pub k_att: f64,
    /// Repulsive cutoff R_r in meters.
    pub r_rep: f64,
    /// Lower clamp on the attractive denominator, m^2.
    pub epsilon_sing: f64,
    /// Viscosity factor in (0, 1).
    pub alpha: f64,
    /// Rounds per integration step.
    pub dt: f64,
}

impl FieldParams {
    /// Derives `k_att` from `lambda^2 k_att = (lambda - 1)^2 k_rep`.
    pub fn from_lambda(k_rep: f64, lambda: f64, r_rep: f64, alpha: f64) -> Self {
        FieldParams {
            k_rep,
            k_att: (lambda - 1.0).powi(2) / lambda.powi(2) * k_rep,
            r_rep,
            epsilon_sing: 1e-3,
            alpha,
            dt: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WitnessState {
    pub id: u32,
    pub position: Vec2,
    /// Meters per round.
    pub velocity: Vec2,
    pub net_force: Vec2,
    pub mass: f64,
    pub comm_radius: f64,
}

impl WitnessState {
    pub fn at_rest(id: u32, position: Vec2, mass: f64, comm_radius: f64) -> Self {
        WitnessState {
            id,
            position,
            velocity: Vec2::zeros(),
            net_force: Vec2::zeros(),
            mass,
            comm_radius,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_squared()
    }
}

/// Force on `xi` from `xj`: `k_rep / r^2` away from `xj` within `R_r`.
/// Zero for coincident points; [`net_force`] separates those first.
pub fn repulsive_force(xi: &Vec2, xj: &Vec2, params: &FieldParams) -> Vec2 {
    let d = xi - xj;
    let r = d.norm();
    if r == 0.0 || r > params.r_rep {
        return Vec2::zeros();
    }
    d * (params.k_rep / (r * r * r))
}

/// Force on `xi` toward `xj` for `r >= R_r`.
pub fn attractive_force(xi: &Vec2, xj: &Vec2, params: &FieldParams) -> Vec2 {
    let d = xj - xi;
    let r = d.norm();
    if r < params.r_rep || r == 0.0 {
        return Vec2::zeros();
    }
    let gap = r - params.r_rep;
    d * (params.k_att / (gap * gap).max(params.epsilon_sing) / r)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stand-in position for `j` when it sits exactly on `i`:
/// displaced by [`COINCIDENT_JITTER_M`] along a direction fixed by the id
/// pair, mirrored for the other node so forces stay antisymmetric.
fn separated(i: u32, j: u32, xj: &Vec2) -> Vec2 {
    let (lo, hi) = (i.min(j) as u64, i.max(j) as u64);
    let angle = (splitmix(lo << 32 | hi) >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let dir = Vec2::new(angle.cos(), angle.sin());
    let sign = if j > i { 1.0 } else { -1.0 };
    xj + dir * (sign * COINCIDENT_JITTER_M)
}

/// Pairwise force on `i` from `j`, both kinds combined.
pub fn pair_force(si: &WitnessState, sj: &WitnessState, params: &FieldParams) -> Vec2 {
    let xj = if si.position == sj.position {
        separated(si.id, sj.id, &sj.position)
    } else {
        sj.position
    };
    repulsive_force(&si.position, &xj, params) + attractive_force(&si.position, &xj, params)
}

/// Sum of pair forces on `states[i]` from every other node.
pub fn net_force(i: usize, states: &[WitnessState], params: &FieldParams) -> Vec2 {
    states
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, sj)| pair_force(&states[i], sj, params))
        .sum()
}

/// Net forces for all nodes, all computed from the same positions.
pub fn net_forces(states: &[WitnessState], params: &FieldParams) -> Vec<Vec2> {
    (0..states.len()).map(|i| net_force(i, states, params)).collect()
}

/// Semi-implicit Euler step under `force`.
pub fn step_motion(state: &WitnessState, force: &Vec2, params: &FieldParams) -> WitnessState {
    let velocity = state.velocity + (force - state.velocity * params.alpha) / state.mass;
    WitnessState {
        velocity,
        position: state.position + velocity * params.dt,
        net_force: *force,
        ..*state
    }
}

/// Axis-aligned deployment region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub min: Vec2,
    pub max: Vec2,
}

impl Region {
    pub fn new(width: f64, height: f64) -> Self {
        Region {
            min: Vec2::zeros(),
            max: Vec2::new(width, height),
        }
    }

    pub fn area(&self) -> f64 {
        let d = self.max - self.min;
        d.x * d.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) / 2.0
    }

    pub fn clamp(&self, p: &Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

/// One field update for every node: forces from current positions, then
/// motion, then positions kept inside `region`.
pub fn advance(states: &mut [WitnessState], params: &FieldParams, region: &Region) {
    let forces = net_forces(states, params);
    for (s, f) in states.iter_mut().zip(&forces) {
        let mut next = step_motion(s, f, params);
        next.position = region.clamp(&next.position);
        *s = next;
    }
}

pub fn max_force(states: &[WitnessState], params: &FieldParams) -> f64 {
    net_forces(states, params)
        .iter()
        .map(|f| f.norm())
        .fold(0.0, f64::max)
}

pub fn max_speed(states: &[WitnessState]) -> f64 {
    states.iter().map(|s| s.velocity.norm()).fold(0.0, f64::max)
}

/// Fraction of `region` within `comm_radius` of at least one node.
///
/// Samples `resolution` evenly spaced horizontal lines; on each, the covered
/// length is the exact union of the disc chords clipped to the region.
pub fn estimate_coverage(states: &[WitnessState], region: &Region, resolution: usize) -> f64 {
    let (w, h) = (region.max.x - region.min.x, region.max.y - region.min.y);
    if resolution == 0 || w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let mut covered = 0.0;
    let mut chords: Vec<(f64, f64)> = Vec::with_capacity(states.len());
    for row in 0..resolution {
        let y = region.min.y + (row as f64 + 0.5) * h / resolution as f64;
        chords.clear();
        for s in states {
            let dy = y - s.position.y;
            let r2 = s.comm_radius * s.comm_radius - dy * dy;
            if r2 < 0.0 {
                continue;
            }
            let half = r2.sqrt();
            let lo = (s.position.x - half).max(region.min.x);
            let hi = (s.position.x + half).min(region.max.x);
            if hi > lo {
                chords.push((lo, hi));
            }
        }
        chords.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut len = 0.0;
        let mut current: Option<(f64, f64)> = None;
        for &(lo, hi) in &chords {
            current = match current {
                Some((a, b)) if lo <= b => Some((a, b.max(hi))),
                Some((a, b)) => {
                    len += b - a;
                    Some((lo, hi))
                }
                None => Some((lo, hi)),
            };
        }
        if let Some((a, b)) = current {
            len += b - a;
        }
        covered += len / w;
    }
    covered / resolution as f64
}

/// Coverage budget paid at each epoch boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochBudget {
    pub total: f64,
    pub epoch_blocks: u64,
    /// Perturbation keeping the allocation denominator positive.
    pub epsilon: f64,
}

impl EpochBudget {
    pub fn new(total: f64, epoch_blocks: u64) -> Self {
        EpochBudget {
            total,
            epoch_blocks,
            epsilon: 1e-9 * total,
        }
    }
}

/// `u_i = (sum_{n != i} |F^n| + eps) / (sum_n |F^n| + n eps) * U / (n - 1)`.
/// A lone node receives the whole budget.
pub fn allocate_incentive(forces: &[f64], budget: &EpochBudget) -> Vec<f64> {
    let n = forces.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![budget.total],
        _ => {}
    }
    let sum: f64 = forces.iter().sum();
    let eps = budget.epsilon;
    let denom = sum + n as f64 * eps;
    let scale = budget.total / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let others: f64 = forces
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, f)| f)
                .sum();
            (others + eps) / denom * scale
        })
        .collect()
}
