//! Concave minorizers of the per-user rates around an expansion point, and
//! their quadratic forms in the precoder and in the reflection vector.
//!
//! Writing `s_i = G e^T H_k f_i` for the gain-scaled link amplitudes of user
//! `k` (group `g`), the minorizer is
//!
//! ```text
//! R~_k = const_k + 2 Re{a_k s_g} - b_k sum_i |s_i|^2
//! ```
//!
//! with `zeta_k = conj(s_g^n)`, `eta_k = sum_{i != g} |s_i^n|^2 + sigma_k^2`,
//! `a_k = zeta_k / (eta_k ln 2)`, `b_k = |zeta_k|^2 / (eta_k (|zeta_k|^2 + eta_k) ln 2)`
//! and `const_k = R_k^n - |zeta_k|^2 / (eta_k ln 2) - b_k sigma_k^2`.
//! The `ln 2` factors convert the natural-log bound to bits.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ChannelRealization, GainModel};
use crate::error::{Error, Result};
use crate::rate::{cascaded_channel, link_amplitudes, rate_from_amplitudes, Solution};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct UserCoefficients {
    pub a: Complex64,
    pub b: f64,
    pub constant: f64,
    pub zeta: Complex64,
    pub eta: f64,
    pub group: usize,
    pub noise: f64,
    /// Exact rate at the expansion point.
    pub rate: f64,
    /// `H_k = diag(h_k^H) H_BI`.
    pub cascaded: DMatrix<Complex64>,
}

/// Minorizer coefficients of every user at one expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct MmCoefficients {
    pub users: Vec<UserCoefficients>,
    pub point: Solution,
    pub gains: GainModel,
    pub num_groups: usize,
}

pub fn build_mm_coefficients(
    point: &Solution,
    scene: &Scene,
    channels: &ChannelRealization,
) -> MmCoefficients {
    let gains = GainModel::new(scene, channels);
    let products = gains.products(point.delta);
    let users = (0..scene.num_users())
        .map(|k| {
            let g = scene.group_of_user[k];
            let noise = scene.noise_power[k];
            let cascaded = cascaded_channel(channels, k);
            let amps: Vec<Complex64> = link_amplitudes(&cascaded, &point.e, &point.f)
                .into_iter()
                .map(|a| a * products[g])
                .collect();
            let zeta = amps[g].conj();
            let eta = amps
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != g)
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
                + noise;
            let zeta2 = zeta.norm_sqr();
            let a = zeta / (eta * LN_2);
            let b = zeta2 / (eta * (zeta2 + eta) * LN_2);
            let rate = rate_from_amplitudes(&amps, g, noise);
            let constant = rate - zeta2 / (eta * LN_2) - b * noise;
            UserCoefficients {
                a,
                b,
                constant,
                zeta,
                eta,
                group: g,
                noise,
                rate,
                cascaded,
            }
        })
        .collect();
    MmCoefficients {
        users,
        point: point.clone(),
        gains,
        num_groups: scene.num_groups,
    }
}

impl MmCoefficients {
    fn check_dims(&self, cand: &Solution) -> Result<()> {
        let p = &self.point;
        if cand.f.shape() != p.f.shape() || cand.e.len() != p.e.len() {
            return Err(Error::Dimension(format!(
                "candidate F {:?}, e {} vs expansion F {:?}, e {}",
                cand.f.shape(),
                cand.e.len(),
                p.f.shape(),
                p.e.len()
            )));
        }
        Ok(())
    }

    /// Sum over groups of the minimum per-user value.
    pub fn sum_of_minima(&self, values: &[f64]) -> f64 {
        let mut mins = vec![f64::INFINITY; self.num_groups];
        for (u, &v) in self.users.iter().zip(values) {
            mins[u.group] = mins[u.group].min(v);
        }
        mins.iter().sum()
    }
}

/// Minorizer value of every user at `cand`, with gains evaluated at
/// `cand.delta`.
pub fn surrogate_rate(coeffs: &MmCoefficients, cand: &Solution) -> Result<Vec<f64>> {
    coeffs.check_dims(cand)?;
    let products = coeffs.gains.products(cand.delta);
    Ok(coeffs
        .users
        .iter()
        .map(|u| {
            let gain = products[u.group];
            let amps = link_amplitudes(&u.cascaded, &cand.e, &cand.f);
            let power: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            u.constant + 2.0 * (u.a * amps[u.group] * gain).re - u.b * gain * gain * power
        })
        .collect())
}

/// Surrogate sum-of-minima objective at `cand`.
pub fn surrogate_objective(coeffs: &MmCoefficients, cand: &Solution) -> Result<f64> {
    Ok(coeffs.sum_of_minima(&surrogate_rate(coeffs, cand)?))
}

/// Per-user form `const + 2 Re Tr[C^H F] - Tr[F^H B F]` with `B = v v^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct FUserForm {
    pub v: DVector<Complex64>,
    /// `N x G`; only column `group` is nonzero.
    pub c: DMatrix<Complex64>,
    pub constant: f64,
    pub group: usize,
}

impl FUserForm {
    pub fn b_matrix(&self) -> DMatrix<Complex64> {
        &self.v * self.v.adjoint()
    }

    pub fn value(&self, f: &DMatrix<Complex64>) -> f64 {
        let linear: Complex64 = self.c.iter().zip(f.iter()).map(|(c, x)| c.conj() * x).sum();
        let quad: f64 = f
            .column_iter()
            .map(|col| self.v.dotc(&col).norm_sqr())
            .sum();
        self.constant + 2.0 * linear.re - quad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FQuadraticForm {
    pub users: Vec<FUserForm>,
    pub num_groups: usize,
    pub antennas: usize,
}

impl FQuadraticForm {
    pub fn values(&self, f: &DMatrix<Complex64>) -> Vec<f64> {
        self.users.iter().map(|u| u.value(f)).collect()
    }

    pub fn sum_of_minima(&self, f: &DMatrix<Complex64>) -> f64 {
        sum_of_minima(
            self.users.iter().map(|u| (u.group, u.value(f))),
            self.num_groups,
        )
    }
}

/// Quadratic form in `F` with `e` and `delta` fixed at the expansion point.
pub fn f_quadratic_form(coeffs: &MmCoefficients) -> FQuadraticForm {
    f_quadratic_form_at(coeffs, &coeffs.point.e)
}

/// Quadratic form in `F` at an arbitrary fixed reflection vector.
pub fn f_quadratic_form_at(coeffs: &MmCoefficients, e: &DVector<Complex64>) -> FQuadraticForm {
    let products = coeffs.gains.products(coeffs.point.delta);
    let n = coeffs.point.f.nrows();
    let g_count = coeffs.num_groups;
    let users = coeffs
        .users
        .iter()
        .map(|u| {
            let gain = products[u.group];
            // H_k^H conj(e): its inner product with f gives e^T H_k f.
            let w = u.cascaded.adjoint() * e.map(|z| z.conj());
            let v = &w * Complex64::new(u.b.sqrt() * gain, 0.0);
            let mut c = DMatrix::zeros(n, g_count);
            c.set_column(u.group, &(&w * (u.a.conj() * gain)));
            FUserForm {
                v,
                c,
                constant: u.constant,
                group: u.group,
            }
        })
        .collect();
    FQuadraticForm {
        users,
        num_groups: g_count,
        antennas: n,
    }
}

/// Per-user form `const + 2 Re{a^H e} - e^H A e` with `A = L L^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct EUserForm {
    /// `M x G` factor of `A`.
    pub factor: DMatrix<Complex64>,
    pub a_vec: DVector<Complex64>,
    pub constant: f64,
    pub group: usize,
}

impl EUserForm {
    pub fn a_matrix(&self) -> DMatrix<Complex64> {
        &self.factor * self.factor.adjoint()
    }

    pub fn value(&self, e: &DVector<Complex64>) -> f64 {
        let linear = self.a_vec.dotc(e);
        let quad = (self.factor.adjoint() * e).norm_squared();
        self.constant + 2.0 * linear.re - quad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EQuadraticForm {
    pub users: Vec<EUserForm>,
    pub num_groups: usize,
    pub elements: usize,
}

impl EQuadraticForm {
    pub fn values(&self, e: &DVector<Complex64>) -> Vec<f64> {
        self.users.iter().map(|u| u.value(e)).collect()
    }

    pub fn sum_of_minima(&self, e: &DVector<Complex64>) -> f64 {
        sum_of_minima(
            self.users.iter().map(|u| (u.group, u.value(e))),
            self.num_groups,
        )
    }
}

/// Quadratic form in `e` with `F` and `delta` fixed at the expansion point.
pub fn e_quadratic_form(coeffs: &MmCoefficients) -> EQuadraticForm {
    e_quadratic_form_at(coeffs, &coeffs.point.f)
}

pub fn e_quadratic_form_at(coeffs: &MmCoefficients, f: &DMatrix<Complex64>) -> EQuadraticForm {
    let products = coeffs.gains.products(coeffs.point.delta);
    let m = coeffs.point.e.len();
    let users = coeffs
        .users
        .iter()
        .map(|u| {
            let gain = products[u.group];
            // columns conj(H_k f_i): e^H conj(x) = conj(x^T e)
            let x = (&u.cascaded * f).map(|z| z.conj());
            let factor = &x * Complex64::new(u.b.sqrt() * gain, 0.0);
            let a_vec = x.column(u.group) * (u.a.conj() * gain);
            EUserForm {
                factor,
                a_vec,
                constant: u.constant,
                group: u.group,
            }
        })
        .collect();
    EQuadraticForm {
        users,
        num_groups: coeffs.num_groups,
        elements: m,
    }
}

fn sum_of_minima(values: impl Iterator<Item = (usize, f64)>, groups: usize) -> f64 {
    let mut mins = vec![f64::INFINITY; groups];
    for (g, v) in values {
        mins[g] = mins[g].min(v);
    }
    mins.iter().sum()
}
