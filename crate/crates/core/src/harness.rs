//! Monte-Carlo experiment runner: paired trials across orientation arms and
//! transmit powers, with CSV persistence and aggregate statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{run_ao, AoConfig, AoTrace, DeltaMethod};
use crate::channel::generate_channels;
use crate::error::{Error, Result};
use crate::scene::{dbm_to_watts, generate_scene, SceneConfig};

pub const TRIALS_SCHEMA: &str = "# rotaris-trials v1";
pub const SUMMARY_SCHEMA: &str = "# rotaris-summary v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed_base: u64,
    pub p_max_dbm: Vec<f64>,
    pub arms: Vec<DeltaMethod>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub scene: SceneConfig,
    pub ao: AoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed_base: 0,
            p_max_dbm: vec![20.0],
            arms: vec![
                DeltaMethod::Fixed,
                DeltaMethod::Pso,
                DeltaMethod::Exhaustive,
            ],
            output_dir: PathBuf::from("results"),
            threads: 0,
            scene: SceneConfig::default(),
            ao: AoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("at least one arm is required".into()));
        }
        if self.p_max_dbm.is_empty() || self.p_max_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("P_max values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub arm: DeltaMethod,
    pub p_max_dbm: f64,
    pub objective: f64,
    pub group_min_rates: Vec<f64>,
    pub iterations: usize,
    pub delta: f64,
    pub wall_ms: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: DeltaMethod,
    pub p_max_dbm: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Relative gain of the arm's mean over the fixed arm's, percent.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of the scene, channel and optimizer streams of one trial.
pub fn trial_seeds(seed: u64) -> (u64, u64, u64) {
    (
        splitmix(seed),
        splitmix(seed ^ 0x5EED_0001),
        splitmix(seed ^ 0x5EED_0002),
    )
}

fn arm_config(base: &AoConfig, arm: DeltaMethod, p_dbm: f64) -> AoConfig {
    AoConfig {
        delta_method: arm,
        p_max_watts: dbm_to_watts(p_dbm),
        ..base.clone()
    }
}

/// Run every arm at every power on one trial seed. All runs share the same
/// scene, channels and optimizer seed.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Vec<TrialRecord> {
    let (scene_seed, channel_seed, ao_seed) = trial_seeds(seed);
    let setup = generate_scene(&config.scene, scene_seed)
        .and_then(|s| generate_channels(&s, channel_seed).map(|c| (s, c)));
    let mut out = Vec::new();
    for &p in &config.p_max_dbm {
        for &arm in &config.arms {
            let clock = Instant::now();
            let result = setup
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|(s, c)| {
                    run_ao(s, c, &arm_config(&config.ao, arm, p), ao_seed)
                        .map_err(|e| e.to_string())
                });
            let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
            out.push(match result {
                Ok((best, trace)) => TrialRecord {
                    seed,
                    arm,
                    p_max_dbm: p,
                    objective: trace.best_objective,
                    group_min_rates: trace.records[trace.best_iteration].group_min_rates.clone(),
                    iterations: trace.iterations(),
                    delta: best.delta,
                    wall_ms,
                    status: TrialStatus::Ok,
                },
                Err(msg) => TrialRecord {
                    seed,
                    arm,
                    p_max_dbm: p,
                    objective: f64::NAN,
                    group_min_rates: vec![f64::NAN; config.scene.num_groups],
                    iterations: 0,
                    delta: f64::NAN,
                    wall_ms,
                    status: TrialStatus::Failed(msg),
                },
            });
        }
    }
    out
}

fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.seed
            .cmp(&b.seed)
            .then(a.arm.cmp(&b.arm))
            .then(a.p_max_dbm.total_cmp(&b.p_max_dbm))
    });
}

fn with_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Run all trials; failed trials are kept with their status and excluded
/// from the summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    config.ao.validate()?;
    let seeds: Vec<u64> = (0..config.trials as u64)
        .map(|t| config.seed_base + t)
        .collect();
    let mut records: Vec<TrialRecord> = with_pool(config.threads, || {
        seeds
            .par_iter()
            .flat_map_iter(|&s| run_trial(config, s))
            .collect()
    })?;
    sort_records(&mut records);
    let summary = summarize(&records)?;
    Ok(Experiment { records, summary })
}

/// Per-iteration traces of every arm for one trial seed.
pub fn run_trace(
    config: &ExperimentConfig,
    seed: u64,
    p_dbm: f64,
) -> Result<Vec<(DeltaMethod, AoTrace)>> {
    let (scene_seed, channel_seed, ao_seed) = trial_seeds(seed);
    let scene = generate_scene(&config.scene, scene_seed)?;
    let channels = generate_channels(&scene, channel_seed)?;
    config
        .arms
        .iter()
        .map(|&arm| {
            run_ao(
                &scene,
                &channels,
                &arm_config(&config.ao, arm, p_dbm),
                ao_seed,
            )
            .map(|(_, t)| (arm, t))
        })
        .collect()
}

/// Mean, sample standard deviation and count per (arm, power), plus the
/// relative improvement over the fixed arm at the same power.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("no trial records"));
    }
    let mut groups: BTreeMap<(DeltaMethod, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == TrialStatus::Ok) {
        groups
            .entry((r.arm, r.p_max_dbm.to_bits()))
            .or_insert_with(|| (r.p_max_dbm, Vec::new()))
            .1
            .push(r.objective);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((arm, _), (p, values))| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                arm,
                p_max_dbm: p,
                mean,
                std,
                count,
                improvement_pct: None,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.arm.cmp(&b.arm).then(a.p_max_dbm.total_cmp(&b.p_max_dbm)));
    let fixed: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.arm == DeltaMethod::Fixed)
        .map(|r| (r.p_max_dbm, r.mean))
        .collect();
    for row in &mut rows {
        row.improvement_pct = fixed
            .iter()
            .find(|(p, _)| *p == row.p_max_dbm)
            .map(|(_, base)| improvement_pct(row.mean, *base));
    }
    Ok(rows)
}

pub fn improvement_pct(value: f64, baseline: f64) -> f64 {
    (value - baseline) / baseline * 100.0
}

pub fn write_trials_csv(out: impl Write, records: &[TrialRecord]) -> Result<()> {
    let groups = records
        .iter()
        .map(|r| r.group_min_rates.len())
        .max()
        .unwrap_or(0);
    let mut out = out;
    writeln!(out, "{TRIALS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["seed", "arm", "p_max_dbm", "objective"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=groups).map(|g| format!("group_min_rate_{g}")));
    header.extend(["iterations", "delta", "wall_ms", "status"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.seed.to_string(),
            r.arm.as_str().to_string(),
            r.p_max_dbm.to_string(),
            r.objective.to_string(),
        ];
        row.extend(r.group_min_rates.iter().map(|v| v.to_string()));
        row.push(r.iterations.to_string());
        row.push(r.delta.to_string());
        row.push(format!("{:.3}", r.wall_ms));
        row.push(match &r.status {
            TrialStatus::Ok => "ok".to_string(),
            TrialStatus::Failed(msg) => format!("failed: {msg}"),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidConfig(format!("bad CSV field {i} in {rec:?}")))
}

pub fn read_trials_csv(input: impl Read) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let groups = header
        .iter()
        .filter(|h| h.starts_with("group_min_rate_"))
        .count();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let arm = rec
            .get(1)
            .and_then(DeltaMethod::parse)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown arm in {rec:?}")))?;
        let status_field = rec.get(7 + groups).unwrap_or("");
        let status = match status_field.strip_prefix("failed: ") {
            Some(msg) => TrialStatus::Failed(msg.to_string()),
            None if status_field == "ok" => TrialStatus::Ok,
            None => return Err(Error::InvalidConfig(format!("bad status {status_field:?}"))),
        };
        out.push(TrialRecord {
            seed: parse_field(&rec, 0)?,
            arm,
            p_max_dbm: parse_field(&rec, 2)?,
            objective: parse_field(&rec, 3)?,
            group_min_rates: (0..groups)
                .map(|g| parse_field(&rec, 4 + g))
                .collect::<Result<_>>()?,
            iterations: parse_field(&rec, 4 + groups)?,
            delta: parse_field(&rec, 5 + groups)?,
            wall_ms: parse_field(&rec, 6 + groups)?,
            status,
        });
    }
    Ok(out)
}

pub fn write_summary_csv(out: impl Write, rows: &[SummaryRow]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{SUMMARY_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "arm",
        "p_max_dbm",
        "mean",
        "std",
        "count",
        "improvement_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.arm.as_str().to_string(),
            r.p_max_dbm.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.count.to_string(),
            r.improvement_pct.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
