//! Rician channel realizations and the element radiation pattern.
//!
//! Array conventions: the BS is a half-wavelength ULA along the y axis. The
//! RIS is a half-wavelength UPA whose horizontal axis is perpendicular to the
//! boresight in the x-y plane and whose vertical axis is z. Element `m` of
//! the RIS sits at `(m / rows, m % rows)` on the (horizontal, vertical) grid.
//! Rotating the panel changes only the pattern gains; the complex channels
//! are held fixed.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS to RIS channel, `M x N`.
    pub h_bi: DMatrix<Complex64>,
    /// RIS to user channels, one `M`-vector per user.
    pub h_iu: Vec<DVector<Complex64>>,
    /// Azimuth of the BS seen from the RIS, relative to the zero-rotation
    /// boresight.
    pub bs_azimuth: f64,
    /// Azimuth of each group centroid seen from the RIS, same reference.
    pub group_azimuths: Vec<f64>,
}

/// Incidence angle `theta_t` and per-group departure angles `theta_g` at a
/// given panel rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveAngles {
    pub theta_t: f64,
    pub theta_g: Vec<f64>,
}

/// Single-side Lambertian gain `D_m cos^q(theta)`, zero outside the front
/// half-space.
pub fn pattern_gain(theta: f64, q: f64, max_directivity: f64) -> f64 {
    if theta.abs() >= FRAC_PI_2 {
        return 0.0;
    }
    max_directivity * theta.cos().max(0.0).powf(q)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub fn effective_angles(channels: &ChannelRealization, delta: f64) -> EffectiveAngles {
    EffectiveAngles {
        theta_t: wrap_angle(channels.bs_azimuth - delta).abs(),
        theta_g: channels
            .group_azimuths
            .iter()
            .map(|&az| wrap_angle(az - delta).abs())
            .collect(),
    }
}

/// Everything needed to evaluate `G_t(delta) G_g(delta)` without touching
/// the channel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    pub exponent: f64,
    pub max_directivity: f64,
    pub bs_azimuth: f64,
    pub group_azimuths: Vec<f64>,
}

impl GainModel {
    pub fn new(scene: &Scene, channels: &ChannelRealization) -> Self {
        Self {
            exponent: scene.pattern_exponent,
            max_directivity: scene.max_directivity,
            bs_azimuth: channels.bs_azimuth,
            group_azimuths: channels.group_azimuths.clone(),
        }
    }

    /// `G_t G_g` for every group at rotation `delta`.
    pub fn products(&self, delta: f64) -> Vec<f64> {
        let gt = pattern_gain(
            wrap_angle(self.bs_azimuth - delta).abs(),
            self.exponent,
            self.max_directivity,
        );
        self.group_azimuths
            .iter()
            .map(|&az| {
                gt * pattern_gain(
                    wrap_angle(az - delta).abs(),
                    self.exponent,
                    self.max_directivity,
                )
            })
            .collect()
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn unit(v: &[f64; 3]) -> [f64; 3] {
    let n = norm(v);
    if n == 0.0 {
        [0.0; 3]
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

/// Azimuth of `target` seen from `origin`, measured from `reference`.
fn relative_azimuth(origin: &[f64; 3], target: &[f64; 3], reference: f64) -> f64 {
    let d = sub(target, origin);
    wrap_angle(d[1].atan2(d[0]) - reference)
}

/// RIS response toward unit direction `u`.
pub fn ris_steering(scene: &Scene, u: &[f64; 3]) -> DVector<Complex64> {
    let b = scene.boresight_azimuth;
    let horizontal = [-b.sin(), b.cos(), 0.0];
    let ph = u[0] * horizontal[0] + u[1] * horizontal[1];
    let pv = u[2];
    let rows = scene.ris_rows;
    DVector::from_fn(scene.ris_elements(), |m, _| {
        let (ih, iv) = ((m / rows) as f64, (m % rows) as f64);
        Complex64::from_polar(1.0, PI * (ih * ph + iv * pv))
    })
}

/// BS ULA response toward unit direction `u`.
pub fn bs_steering(scene: &Scene, u: &[f64; 3]) -> DVector<Complex64> {
    DVector::from_fn(scene.bs_antennas, |n, _| {
        Complex64::from_polar(1.0, PI * n as f64 * u[1])
    })
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Centroid of each group's user positions.
pub fn group_centroids(scene: &Scene) -> Vec<[f64; 3]> {
    (0..scene.num_groups)
        .map(|g| {
            let mut acc = [0.0; 3];
            let mut count = 0.0;
            for k in scene.members(g) {
                for (a, p) in acc.iter_mut().zip(scene.user_positions[k]) {
                    *a += p;
                }
                count += 1.0;
            }
            acc.map(|a| a / count)
        })
        .collect()
}

/// Draw one realization of every link.
pub fn generate_channels(scene: &Scene, seed: u64) -> Result<ChannelRealization> {
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = scene.ris_elements();
    let n = scene.bs_antennas;

    let to_bs = sub(&scene.bs_position, &scene.ris_position);
    let d_bi = norm(&to_bs);
    let pl_bi = scene.path_loss.gain(d_bi, scene.path_loss.exponent_bi);
    let kappa = scene.rician_bi;
    let (w_los, w_nlos) = rician_weights(kappa);
    let arrival = ris_steering(scene, &unit(&to_bs));
    let departure = bs_steering(scene, &unit(&sub(&scene.ris_position, &scene.bs_position)));
    let los = &arrival * departure.adjoint();
    let h_bi = DMatrix::from_fn(m, n, |i, j| {
        (los[(i, j)] * w_los + complex_gaussian(&mut rng) * w_nlos) * pl_bi.sqrt()
    });

    let h_iu = scene
        .user_positions
        .iter()
        .zip(&scene.rician_iu)
        .map(|(pos, &kappa)| {
            let to_user = sub(pos, &scene.ris_position);
            let pl = scene
                .path_loss
                .gain(norm(&to_user), scene.path_loss.exponent_iu);
            let (w_los, w_nlos) = rician_weights(kappa);
            let steer = ris_steering(scene, &unit(&to_user));
            DVector::from_fn(m, |i, _| {
                (steer[i] * w_los + complex_gaussian(&mut rng) * w_nlos) * pl.sqrt()
            })
        })
        .collect();

    let bs_azimuth = relative_azimuth(
        &scene.ris_position,
        &scene.bs_position,
        scene.boresight_azimuth,
    );
    let group_azimuths = group_centroids(scene)
        .iter()
        .map(|c| relative_azimuth(&scene.ris_position, c, scene.boresight_azimuth))
        .collect();

    Ok(ChannelRealization {
        h_bi,
        h_iu,
        bs_azimuth,
        group_azimuths,
    })
}

fn rician_weights(kappa: f64) -> (f64, f64) {
    ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
}
