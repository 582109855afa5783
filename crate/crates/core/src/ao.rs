//! Outer alternating loop: phase step, precoder step, then rotation step,
//! each maximizing the surrogate built at the current iterate.

use std::f64::consts::TAU;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::conic::{
    project_unit_modulus_lenient, solve_beamforming_from, solve_phase_relaxed_from, AuxiliaryRates,
    IpmOptions, SocpSolveReport,
};
use crate::error::{Error, Result};
use crate::orientation::{exhaustive_delta, pso_delta_with_rng, DeltaObjective, PsoParams};
use crate::rate::{cascaded_channel, group_minima, user_rates, Solution};
use crate::scene::Scene;
use crate::surrogate::{build_mm_coefficients, e_quadratic_form, f_quadratic_form};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    Fixed,
    Pso,
    Exhaustive,
}

impl DeltaMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeltaMethod::Fixed => "fixed",
            DeltaMethod::Pso => "pso",
            DeltaMethod::Exhaustive => "exhaustive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(DeltaMethod::Fixed),
            "pso" => Some(DeltaMethod::Pso),
            "exhaustive" => Some(DeltaMethod::Exhaustive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Matched filter toward the first user of each group, equal power split.
    MatchedFilter,
    /// I.i.d. Gaussian columns scaled to full power.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoConfig {
    pub max_outer_iterations: usize,
    pub convergence_tol: f64,
    pub delta_method: DeltaMethod,
    /// Candidate count `D` of the exhaustive grid (step `pi / D`).
    pub grid_points: usize,
    pub pso: PsoParams,
    pub p_max_watts: f64,
    pub init: InitMode,
    #[serde(skip)]
    pub ipm: IpmOptions,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 50,
            convergence_tol: 1e-3,
            delta_method: DeltaMethod::Fixed,
            grid_points: 360,
            pso: PsoParams::default(),
            p_max_watts: 0.1,
            init: InitMode::MatchedFilter,
            ipm: IpmOptions::default(),
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_outer_iterations must be >= 1".into(),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be > 0".into()));
        }
        if !(self.p_max_watts >= 0.0) || !self.p_max_watts.is_finite() {
            return Err(Error::InvalidConfig("P_max must be finite and >= 0".into()));
        }
        if self.delta_method == DeltaMethod::Exhaustive && self.grid_points < 2 {
            return Err(Error::InvalidConfig("grid_points must be >= 2".into()));
        }
        if self.delta_method == DeltaMethod::Pso && (self.pso.particles == 0 || self.pso.t_max == 0)
        {
            return Err(Error::InvalidConfig(
                "PSO needs particles >= 1, t_max >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Surrogate sum-of-minima before and after one block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// True objective at this iterate.
    pub objective: f64,
    /// Surrogate objective after the precoder step.
    pub surrogate_objective: f64,
    pub group_min_rates: Vec<f64>,
    pub delta: f64,
    pub wall_ms: f64,
    /// Phase step, compared before projection.
    pub e_step: Option<StepCheck>,
    pub f_step: Option<StepCheck>,
    pub aux: AuxiliaryRates,
    /// Phase and precoder solver reports.
    pub reports: Option<(SocpSolveReport, SocpSolveReport)>,
}

pub const TRACE_SCHEMA: &str = "# rotaris-trace v1";

#[derive(Debug, Clone, PartialEq)]
pub struct AoTrace {
    pub records: Vec<IterationRecord>,
    pub best: Solution,
    pub best_objective: f64,
    pub best_iteration: usize,
    pub converged: bool,
}

impl AoTrace {
    /// Outer iterations performed (the initial point is not counted).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Running maximum of the true objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.objective);
                best
            })
            .collect()
    }

    /// One row per iteration: `iter,objective,delta,group_min_rate_1..G,wall_ms`,
    /// after a [`TRACE_SCHEMA`] comment line.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let groups = self.records.first().map_or(0, |r| r.group_min_rates.len());
        let mut out = out;
        writeln!(out, "{TRACE_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string(), "objective".into(), "delta".into()];
        header.extend((1..=groups).map(|g| format!("group_min_rate_{g}")));
        header.push("wall_ms".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.iter.to_string(),
                r.objective.to_string(),
                r.delta.to_string(),
            ];
            row.extend(r.group_min_rates.iter().map(|v| v.to_string()));
            row.push(format!("{:.3}", r.wall_ms));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn unit_column(n: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(n);
    v[0] = Complex64::new(1.0, 0.0);
    v
}

fn init_with_rng(
    scene: &Scene,
    channels: &ChannelRealization,
    config: &AoConfig,
    rng: &mut ChaCha8Rng,
) -> Solution {
    let m = scene.ris_elements();
    let n = scene.bs_antennas;
    let g_count = scene.num_groups;
    let e = DVector::from_fn(m, |_, _| {
        Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
    });
    let per_group = (config.p_max_watts / g_count as f64).sqrt();
    let mut f = DMatrix::zeros(n, g_count);
    for g in 0..g_count {
        let dir = match config.init {
            InitMode::MatchedFilter => {
                let k = scene.members(g).next().expect("validated scene");
                let row = e.transpose() * cascaded_channel(channels, k);
                row.adjoint().column(0).into_owned()
            }
            InitMode::Random => DVector::from_fn(n, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            }),
        };
        let norm = dir.norm();
        let dir = if norm > 0.0 && norm.is_finite() {
            dir / Complex64::new(norm, 0.0)
        } else {
            unit_column(n)
        };
        f.set_column(g, &(dir * Complex64::new(per_group, 0.0)));
    }
    Solution { f, e, delta: 0.0 }
}

/// Random unit-modulus phases and a full-power precoder; zero rotation.
pub fn initialize(
    scene: &Scene,
    channels: &ChannelRealization,
    config: &AoConfig,
    seed: u64,
) -> Solution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with_rng(scene, channels, config, &mut rng)
}

pub fn convergence_check(trace: &AoTrace, tol: f64) -> bool {
    let n = trace.records.len();
    n >= 2 && (trace.records[n - 1].objective - trace.records[n - 2].objective).abs() < tol
}

fn wrap(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Iteration {
        iteration,
        source: Box::new(e),
    }
}

/// Run the alternating loop from the seeded initial point.
pub fn run_ao(
    scene: &Scene,
    channels: &ChannelRealization,
    config: &AoConfig,
    seed: u64,
) -> Result<(Solution, AoTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = init_with_rng(scene, channels, config, &mut rng);
    run_ao_from(scene, channels, config, start, &mut rng)
}

/// Run the alternating loop from a given feasible starting point, drawing
/// PSO randomness from `rng`.
pub fn run_ao_from(
    scene: &Scene,
    channels: &ChannelRealization,
    config: &AoConfig,
    start: Solution,
    rng: &mut ChaCha8Rng,
) -> Result<(Solution, AoTrace)> {
    config.validate()?;
    scene.validate()?;
    let clock = Instant::now();
    let mut sol = start;
    let rates = user_rates(&sol, scene, channels);
    let mins = group_minima(&rates, scene);
    let first = mins.iter().sum::<f64>();
    let mut trace = AoTrace {
        records: vec![IterationRecord {
            iter: 0,
            objective: first,
            surrogate_objective: first,
            group_min_rates: mins,
            delta: sol.delta,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            e_step: None,
            f_step: None,
            aux: AuxiliaryRates::default(),
            reports: None,
        }],
        best: sol.clone(),
        best_objective: first,
        best_iteration: 0,
        converged: false,
    };

    for iter in 1..=config.max_outer_iterations {
        let ctx = wrap(iter);

        let coeffs = build_mm_coefficients(&sol, scene, channels);
        let e_form = e_quadratic_form(&coeffs);
        let e_before = e_form.sum_of_minima(&sol.e);
        let (e_relaxed, kappa, e_report) =
            solve_phase_relaxed_from(&e_form, &sol.e, &config.ipm).map_err(&ctx)?;
        let e_after = e_form.sum_of_minima(&e_relaxed);
        sol.e = project_unit_modulus_lenient(&e_relaxed);

        let coeffs = build_mm_coefficients(&sol, scene, channels);
        let f_form = f_quadratic_form(&coeffs);
        let f_before = f_form.sum_of_minima(&sol.f);
        let (f_new, gamma, f_report) =
            solve_beamforming_from(&f_form, config.p_max_watts, &sol.f, &config.ipm)
                .map_err(&ctx)?;
        let f_after = f_form.sum_of_minima(&f_new);
        sol.f = f_new;

        match config.delta_method {
            DeltaMethod::Fixed => {}
            DeltaMethod::Exhaustive => {
                let coeffs = build_mm_coefficients(&sol, scene, channels);
                let dobj = DeltaObjective::from_coefficients(&coeffs);
                sol.delta = exhaustive_delta(&dobj, config.grid_points).map_err(&ctx)?.0;
            }
            DeltaMethod::Pso => {
                let coeffs = build_mm_coefficients(&sol, scene, channels);
                let dobj = DeltaObjective::from_coefficients(&coeffs);
                sol.delta = pso_delta_with_rng(&dobj, config.pso, rng)
                    .map_err(&ctx)?
                    .delta;
            }
        }

        let rates = user_rates(&sol, scene, channels);
        let mins = group_minima(&rates, scene);
        let obj = mins.iter().sum::<f64>();
        trace.records.push(IterationRecord {
            iter,
            objective: obj,
            surrogate_objective: f_after,
            group_min_rates: mins,
            delta: sol.delta,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            e_step: Some(StepCheck {
                before: e_before,
                after: e_after,
            }),
            f_step: Some(StepCheck {
                before: f_before,
                after: f_after,
            }),
            aux: AuxiliaryRates {
                gamma: gamma.gamma,
                kappa: kappa.kappa,
            },
            reports: Some((e_report, f_report)),
        });
        if obj > trace.best_objective {
            trace.best_objective = obj;
            trace.best = sol.clone();
            trace.best_iteration = iter;
        }
        if convergence_check(&trace, config.convergence_tol) {
            trace.converged = true;
            break;
        }
    }
    Ok((trace.best.clone(), trace))
}
