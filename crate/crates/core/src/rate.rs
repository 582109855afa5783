//! Candidate solutions and the exact achievable-rate objective.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ChannelRealization, GainModel};
use crate::scene::Scene;

/// Precoder, RIS reflection vector and panel rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// `N x G` precoding matrix, one column per group.
    pub f: DMatrix<Complex64>,
    /// Unit-modulus reflection coefficients, one per RIS element.
    pub e: DVector<Complex64>,
    pub delta: f64,
}

impl Solution {
    pub fn transmit_power(&self) -> f64 {
        self.f.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Check the unit-modulus, power and rotation constraints.
    pub fn is_feasible(&self, p_max: f64) -> bool {
        self.e.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9)
            && self.transmit_power() <= p_max + 1e-9
            && self.delta.abs() < FRAC_PI_2
    }
}

/// `H_k = diag(h_k^H) H_BI`, the `M x N` cascaded channel of user `k`.
pub fn cascaded_channel(channels: &ChannelRealization, k: usize) -> DMatrix<Complex64> {
    let h = &channels.h_iu[k];
    let mut out = channels.h_bi.clone();
    for (mut row, hm) in out.row_iter_mut().zip(h.iter()) {
        row *= hm.conj();
    }
    out
}

/// `e^T H_k f_i` for every column `i` of `F`; equal to `h_k^H diag(e) H_BI f_i`.
pub fn link_amplitudes(
    cascaded: &DMatrix<Complex64>,
    e: &DVector<Complex64>,
    f: &DMatrix<Complex64>,
) -> Vec<Complex64> {
    let row = e.transpose() * cascaded;
    (0..f.ncols())
        .map(|i| (&row * f.column(i))[(0, 0)])
        .collect()
}

/// SINR rate of a user given its gain-scaled link amplitudes.
pub(crate) fn rate_from_amplitudes(amps: &[Complex64], group: usize, noise: f64) -> f64 {
    let signal = amps[group].norm_sqr();
    let interference: f64 = amps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != group)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    (1.0 + signal / (interference + noise)).log2()
}

/// Exact rate of user `k` in bits/s/Hz.
pub fn user_rate(sol: &Solution, scene: &Scene, channels: &ChannelRealization, k: usize) -> f64 {
    let gains = GainModel::new(scene, channels).products(sol.delta);
    user_rate_with_gains(sol, scene, channels, &gains, k)
}

fn user_rate_with_gains(
    sol: &Solution,
    scene: &Scene,
    channels: &ChannelRealization,
    gains: &[f64],
    k: usize,
) -> f64 {
    let g = scene.group_of_user[k];
    let hk = cascaded_channel(channels, k);
    let amps: Vec<Complex64> = link_amplitudes(&hk, &sol.e, &sol.f)
        .into_iter()
        .map(|a| a * gains[g])
        .collect();
    rate_from_amplitudes(&amps, g, scene.noise_power[k])
}

/// All user rates at once.
pub fn user_rates(sol: &Solution, scene: &Scene, channels: &ChannelRealization) -> Vec<f64> {
    let gains = GainModel::new(scene, channels).products(sol.delta);
    (0..scene.num_users())
        .map(|k| user_rate_with_gains(sol, scene, channels, &gains, k))
        .collect()
}

/// Minimum member value of each group.
pub fn group_minima(values: &[f64], scene: &Scene) -> Vec<f64> {
    let mut mins = vec![f64::INFINITY; scene.num_groups];
    for (k, &v) in values.iter().enumerate() {
        let g = scene.group_of_user[k];
        mins[g] = mins[g].min(v);
    }
    mins
}

/// Sum over groups of the minimum member rate.
pub fn objective(sol: &Solution, scene: &Scene, channels: &ChannelRealization) -> f64 {
    group_minima(&user_rates(sol, scene, channels), scene)
        .iter()
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::scene::{generate_scene, PathLoss, SceneConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_scene() -> (Scene, ChannelRealization) {
        let scene = Scene {
            bs_position: [1.0, 0.0, 0.0],
            ris_position: [0.0; 3],
            user_positions: vec![[1.0, 0.0, 0.0]],
            group_of_user: vec![0],
            num_groups: 1,
            bs_antennas: 1,
            ris_columns: 1,
            ris_rows: 1,
            pattern_exponent: 2.0,
            max_directivity: 1.0,
            noise_power: vec![1.0],
            rician_bi: 1.0,
            rician_iu: vec![1.0],
            path_loss: PathLoss::default(),
            boresight_azimuth: 0.0,
        };
        let ch = ChannelRealization {
            h_bi: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            h_iu: vec![DVector::from_element(1, Complex64::new(1.0, 0.0))],
            bs_azimuth: 0.0,
            group_azimuths: vec![0.0],
        };
        (scene, ch)
    }

    #[test]
    fn unit_sinr_gives_one_bit() {
        let (scene, ch) = unit_scene();
        let sol = Solution {
            f: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            e: DVector::from_element(1, Complex64::new(1.0, 0.0)),
            delta: 0.0,
        };
        assert!((user_rate(&sol, &scene, &ch, 0) - 1.0).abs() < 1e-15);
        let silent = Solution {
            f: DMatrix::zeros(1, 1),
            ..sol
        };
        assert_eq!(user_rate(&silent, &scene, &ch, 0), 0.0);
    }

    fn random_unit(m: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
        DVector::from_fn(m, |_, _| {
            Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
        })
    }

    fn random_matrix(r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, c, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
        })
    }

    /// Direct re-implementation of the SINR rate: h^H diag(e) H f, element by
    /// element, with the gains applied inside every magnitude.
    fn oracle_rate(sol: &Solution, scene: &Scene, ch: &ChannelRealization, k: usize) -> f64 {
        let dm = scene.max_directivity;
        let q = scene.pattern_exponent;
        let lambert = |t: f64| {
            if t.abs() >= FRAC_PI_2 {
                0.0
            } else {
                dm * t.cos().powf(q)
            }
        };
        let gt = lambert(ch.bs_azimuth - sol.delta);
        let g = scene.group_of_user[k];
        let gg = lambert(ch.group_azimuths[g] - sol.delta);
        let amp = |i: usize| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..ch.h_bi.nrows() {
                let mut hf = Complex64::new(0.0, 0.0);
                for n in 0..ch.h_bi.ncols() {
                    hf += ch.h_bi[(m, n)] * sol.f[(n, i)];
                }
                acc += ch.h_iu[k][m].conj() * sol.e[m] * hf;
            }
            (acc * gt * gg).norm_sqr()
        };
        let interference: f64 = (0..sol.f.ncols()).filter(|&i| i != g).map(amp).sum();
        (1.0 + amp(g) / (interference + scene.noise_power[k])).log2()
    }

    #[test]
    fn rate_matches_direct_formula() {
        let cfg = SceneConfig {
            num_users: 2,
            num_groups: 2,
            bs_antennas: 2,
            ris_columns: 2,
            ris_rows: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..10 {
            let scene = generate_scene(&cfg, seed).unwrap();
            let ch = generate_channels(&scene, seed + 100).unwrap();
            let sol = Solution {
                f: random_matrix(2, 2, 0.3, &mut rng),
                e: random_unit(2, &mut rng),
                delta: rng.random::<f64>() - 0.5,
            };
            for k in 0..2 {
                let a = user_rate(&sol, &scene, &ch, k);
                let b = oracle_rate(&sol, &scene, &ch, k);
                assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn objective_properties() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(&cfg, 2).unwrap();
        let ch = generate_channels(&scene, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = Solution {
            f: random_matrix(4, 2, 0.1, &mut rng),
            e: random_unit(32, &mut rng),
            delta: 0.2,
        };
        let rates = user_rates(&sol, &scene, &ch);
        let obj = objective(&sol, &scene, &ch);
        let mean_sum: f64 = (0..2)
            .map(|g| {
                let m: Vec<f64> = scene.members(g).map(|k| rates[k]).collect();
                m.iter().sum::<f64>() / m.len() as f64
            })
            .sum();
        assert!(obj <= mean_sum + 1e-12);

        // permuting users within a group
        let mut swapped_scene = scene.clone();
        swapped_scene.user_positions.swap(0, 1);
        let mut swapped_ch = ch.clone();
        swapped_ch.h_iu.swap(0, 1);
        assert!((objective(&sol, &swapped_scene, &swapped_ch) - obj).abs() < 1e-12);

        // common phase rotation of e
        let c = Complex64::from_polar(1.0, 1.1);
        let rotated = Solution {
            e: sol.e.map(|z| z * c),
            ..sol.clone()
        };
        assert!((objective(&rotated, &scene, &ch) - obj).abs() < 1e-10);
    }

    #[test]
    fn singleton_groups_sum_all_rates() {
        let cfg = SceneConfig {
            num_users: 3,
            num_groups: 3,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, 8).unwrap();
        let ch = generate_channels(&scene, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sol = Solution {
            f: random_matrix(4, 3, 0.1, &mut rng),
            e: random_unit(32, &mut rng),
            delta: -0.3,
        };
        let total: f64 = user_rates(&sol, &scene, &ch).iter().sum();
        assert!((objective(&sol, &scene, &ch) - total).abs() < 1e-12);
    }
}
