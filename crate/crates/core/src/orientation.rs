//! Panel rotation search at fixed precoder and reflection vector.
//!
//! The rotation enters the surrogate only through the gain product
//! `G_t(delta) G_g(delta)`, so each user reduces to three scalars and an
//! evaluation costs O(K).

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::GainModel;
use crate::error::{Error, Result};
use crate::rate::link_amplitudes;
use crate::surrogate::MmCoefficients;

/// Distance kept from the open interval's endpoints.
pub const EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaUser {
    pub chi: Complex64,
    pub varphi: f64,
    pub constant: f64,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaObjective {
    pub users: Vec<DeltaUser>,
    pub gains: GainModel,
    pub num_groups: usize,
}

impl DeltaObjective {
    /// `chi_k = a_k e^T H_k f_g`, `varphi_k = b_k sum_i |e^T H_k f_i|^2` at
    /// the expansion point of `coeffs`.
    pub fn from_coefficients(coeffs: &MmCoefficients) -> Self {
        let p = &coeffs.point;
        let users = coeffs
            .users
            .iter()
            .map(|u| {
                let amps = link_amplitudes(&u.cascaded, &p.e, &p.f);
                DeltaUser {
                    chi: u.a * amps[u.group],
                    varphi: u.b * amps.iter().map(|a| a.norm_sqr()).sum::<f64>(),
                    constant: u.constant,
                    group: u.group,
                }
            })
            .collect();
        Self {
            users,
            gains: coeffs.gains.clone(),
            num_groups: coeffs.num_groups,
        }
    }

    pub fn evaluate(&self, delta: f64) -> f64 {
        let products = self.gains.products(delta);
        let mut mins = vec![f64::INFINITY; self.num_groups];
        for u in &self.users {
            let g = products[u.group];
            let v = u.constant + 2.0 * (u.chi * g).re - g * g * u.varphi;
            mins[u.group] = mins[u.group].min(v);
        }
        mins.iter().sum()
    }
}

pub fn delta_objective(dobj: &DeltaObjective, delta: f64) -> f64 {
    dobj.evaluate(delta)
}

/// Candidate angles `-pi/2 + i pi / D` for `i = 0..D`, the first one moved
/// inside the open interval.
pub fn grid_candidates(points: usize) -> Vec<f64> {
    let step = std::f64::consts::PI / points as f64;
    (0..points)
        .map(|i| {
            let d = -FRAC_PI_2 + i as f64 * step;
            d.clamp(-FRAC_PI_2 + EDGE_MARGIN, FRAC_PI_2 - EDGE_MARGIN)
        })
        .collect()
}

/// Grid maximizer; ties go to the candidate with the smaller `|delta|`.
pub fn exhaustive_delta(dobj: &DeltaObjective, points: usize) -> Result<(f64, f64)> {
    if points < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid needs D >= 2, got {points}"
        )));
    }
    let mut best: (f64, f64) = (0.0, f64::NEG_INFINITY);
    for d in grid_candidates(points) {
        let value = dobj.evaluate(d);
        if value > best.1 || (value == best.1 && d.abs() < best.0.abs()) {
            best = (d, value);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoParams {
    pub particles: usize,
    pub c1: f64,
    pub c2: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub t_max: usize,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            particles: 20,
            c1: 2.0,
            c2: 2.0,
            w_max: 0.9,
            w_min: 0.4,
            t_max: 50,
        }
    }
}

impl PsoParams {
    /// Linearly decreasing inertia weight.
    pub fn inertia(&self, t: usize) -> f64 {
        self.w_max - (self.w_max - self.w_min) * t as f64 / self.t_max as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub personal_best: Vec<f64>,
    pub personal_value: Vec<f64>,
    pub global_best: f64,
    pub global_value: f64,
    pub t: usize,
    pub params: PsoParams,
}

fn clamp_position(x: f64) -> (f64, bool) {
    let lo = -FRAC_PI_2 + EDGE_MARGIN;
    let hi = FRAC_PI_2 - EDGE_MARGIN;
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

impl PsoState {
    /// Uniform random positions in the open interval, zero velocities.
    pub fn init(dobj: &DeltaObjective, params: PsoParams, rng: &mut impl Rng) -> Self {
        let positions: Vec<f64> = (0..params.particles)
            .map(|_| clamp_position(rng.random_range(-FRAC_PI_2..FRAC_PI_2)).0)
            .collect();
        Self::from_positions(dobj, params, positions, None)
    }

    pub fn from_positions(
        dobj: &DeltaObjective,
        params: PsoParams,
        positions: Vec<f64>,
        velocities: Option<Vec<f64>>,
    ) -> Self {
        let values: Vec<f64> = positions.iter().map(|&x| dobj.evaluate(x)).collect();
        let (gi, gv) = values
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        Self {
            velocities: velocities.unwrap_or_else(|| vec![0.0; positions.len()]),
            personal_best: positions.clone(),
            global_best: positions[gi],
            positions,
            personal_value: values,
            global_value: gv,
            t: 0,
            params,
        }
    }
}

/// One velocity/position update followed by the best-position bookkeeping.
/// The random factors of all particles are drawn before any evaluation.
pub fn pso_step(state: &mut PsoState, dobj: &DeltaObjective, rng: &mut impl Rng) {
    state.t += 1;
    let p = state.params;
    let w = p.inertia(state.t);
    let draws: Vec<(f64, f64)> = (0..state.positions.len())
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    for (i, (r1, r2)) in draws.into_iter().enumerate() {
        let x = state.positions[i];
        let v = w * state.velocities[i]
            + p.c1 * r1 * (state.personal_best[i] - x)
            + p.c2 * r2 * (state.global_best - x);
        let (xn, clamped) = clamp_position(x + v);
        state.positions[i] = xn;
        state.velocities[i] = if clamped { 0.0 } else { v };
    }
    for i in 0..state.positions.len() {
        let value = dobj.evaluate(state.positions[i]);
        if value > state.personal_value[i] {
            state.personal_value[i] = value;
            state.personal_best[i] = state.positions[i];
        }
        if value > state.global_value {
            state.global_value = value;
            state.global_best = state.positions[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub delta: f64,
    pub value: f64,
    /// Global-best value after initialization and after every step.
    pub trace: Vec<f64>,
}

pub fn pso_delta_with_rng(
    dobj: &DeltaObjective,
    params: PsoParams,
    rng: &mut impl Rng,
) -> Result<PsoOutcome> {
    if params.particles == 0 || params.t_max == 0 {
        return Err(Error::InvalidConfig(
            "PSO needs Y >= 1 and t_max >= 1".into(),
        ));
    }
    let mut state = PsoState::init(dobj, params, rng);
    let mut trace = Vec::with_capacity(params.t_max + 1);
    trace.push(state.global_value);
    while state.t < params.t_max {
        pso_step(&mut state, dobj, rng);
        trace.push(state.global_value);
    }
    Ok(PsoOutcome {
        delta: state.global_best,
        value: state.global_value,
        trace,
    })
}

pub fn pso_delta(dobj: &DeltaObjective, params: PsoParams, seed: u64) -> Result<PsoOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pso_delta_with_rng(dobj, params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(bs: f64, groups: &[f64], q: f64) -> DeltaObjective {
        DeltaObjective {
            users: groups
                .iter()
                .enumerate()
                .map(|(g, _)| DeltaUser {
                    chi: Complex64::new(0.05, 0.01),
                    varphi: 1e-4,
                    constant: 0.5,
                    group: g,
                })
                .collect(),
            gains: GainModel {
                exponent: q,
                max_directivity: 6.0,
                bs_azimuth: bs,
                group_azimuths: groups.to_vec(),
            },
            num_groups: groups.len(),
        }
    }

    #[test]
    fn gain_free_objective_is_flat() {
        let mut d = toy(0.2, &[0.5, -0.3], 2.0);
        for u in &mut d.users {
            u.chi = Complex64::new(0.0, 0.0);
            u.varphi = 0.0;
        }
        for delta in [-1.2, 0.0, 0.7] {
            assert_eq!(d.evaluate(delta), 1.0);
        }
        let flat = toy(0.2, &[0.5, -0.3], 0.0);
        assert!((flat.evaluate(-1.0) - flat.evaluate(1.0)).abs() < 1e-15);
    }

    #[test]
    fn aligned_toy_peaks_at_zero() {
        let d = toy(0.0, &[0.0], 2.0);
        let scan = (0..100_000)
            .map(|i| -FRAC_PI_2 + (i as f64 + 0.5) * std::f64::consts::PI / 100_000.0)
            .map(|x| (x, d.evaluate(x)))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        assert!(scan.0.abs() < 1e-4);
        let (best, _) = exhaustive_delta(&d, 360).unwrap();
        assert_eq!(best, 0.0);
    }

    #[test]
    fn grid_construction() {
        let g = grid_candidates(2);
        assert_eq!(g.len(), 2);
        assert!((g[0] + FRAC_PI_2 - EDGE_MARGIN).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
        assert!(exhaustive_delta(&toy(0.0, &[0.0], 2.0), 1).is_err());
    }

    #[test]
    fn flat_grid_prefers_zero() {
        let flat = toy(0.2, &[0.5], 0.0);
        assert_eq!(exhaustive_delta(&flat, 90).unwrap().0, 0.0);
    }

    #[test]
    fn inertia_endpoints() {
        let p = PsoParams::default();
        assert_eq!(p.inertia(0), p.w_max);
        assert!((p.inertia(p.t_max) - p.w_min).abs() < 1e-15);
    }

    #[test]
    fn degenerate_coefficients_move_by_velocity() {
        let d = toy(0.0, &[0.3], 2.0);
        let params = PsoParams {
            particles: 2,
            c1: 0.0,
            c2: 0.0,
            w_max: 1.0,
            w_min: 1.0,
            t_max: 5,
        };
        let mut s = PsoState::from_positions(&d, params, vec![0.1, -0.2], Some(vec![0.05, 0.1]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        pso_step(&mut s, &d, &mut rng);
        assert!((s.positions[0] - 0.15).abs() < 1e-15 && (s.positions[1] + 0.1).abs() < 1e-15);
        assert_eq!(s.velocities, vec![0.05, 0.1]);
    }

    #[test]
    fn converged_swarm_is_a_fixed_point() {
        let d = toy(0.0, &[0.3], 2.0);
        let mut s = PsoState::from_positions(&d, PsoParams::default(), vec![0.15; 4], None);
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        pso_step(&mut s, &d, &mut rng);
        assert_eq!(s.positions, before.positions);
        assert_eq!(s.global_best, before.global_best);
    }

    #[test]
    fn frozen_single_particle_keeps_start() {
        let d = toy(0.0, &[0.6], 2.0);
        let params = PsoParams {
            particles: 1,
            c1: 0.0,
            c2: 0.0,
            w_max: 0.0,
            w_min: 0.0,
            t_max: 10,
        };
        let out = pso_delta(&d, params, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        assert_eq!(out.delta, start);
        assert_eq!(out.value, d.evaluate(start));
    }

    #[test]
    fn pso_trace_is_monotone_and_in_range() {
        let d = toy(0.1, &[0.9, 0.4], 2.0);
        for seed in 0..5 {
            let out = pso_delta(&d, PsoParams::default(), seed).unwrap();
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(out.delta.abs() < FRAC_PI_2);
        }
    }
}
