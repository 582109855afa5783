//! Scene geometry: where the base station, the RIS and the users sit, how the
//! users are grouped, and the physical constants of every link.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Distance-dependent path loss `PL(d) = PL0 * d^-alpha`, with `d` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLoss {
    /// Loss at the 1 m reference distance, in dB (negative).
    pub reference_db: f64,
    /// Exponent of the BS to RIS link.
    pub exponent_bi: f64,
    /// Exponent of the RIS to user links.
    pub exponent_iu: f64,
}

impl Default for PathLoss {
    /// The reference loss is chosen so that, with the default -164 dBm noise
    /// floor and 20 dBm transmit power, users see SINRs of a few dB to a few
    /// tens of dB (a handful of bits/s/Hz per group). A -30 dB reference with
    /// the same noise floor puts every link at 60-70 dB SINR, where the rate
    /// surrogates become extremely stiff.
    fn default() -> Self {
        Self {
            reference_db: -70.0,
            exponent_bi: 2.2,
            exponent_iu: 2.8,
        }
    }
}

impl PathLoss {
    /// Linear power gain at distance `d`. Distances below 1 m are clamped
    /// to the reference distance.
    pub fn gain(&self, distance: f64, exponent: f64) -> f64 {
        10f64.powf(self.reference_db / 10.0) * distance.max(1.0).powf(-exponent)
    }
}

/// Declarative description of a scene, read from the `[scene]` table of a
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    /// Lower-left corner of the square the users are dropped into.
    pub area_origin: [f64; 2],
    /// Side length of that square, meters.
    pub area_side: f64,
    pub user_height: f64,
    pub num_users: usize,
    pub num_groups: usize,
    pub bs_antennas: usize,
    /// RIS elements along the horizontal panel axis.
    pub ris_columns: usize,
    /// RIS elements along the vertical panel axis.
    pub ris_rows: usize,
    pub pattern_exponent: f64,
    pub max_directivity: f64,
    pub noise_dbm: f64,
    pub path_loss: PathLoss,
    pub rician_bi: f64,
    pub rician_iu: f64,
    /// Azimuth of the panel normal at zero rotation, radians from +x.
    pub boresight_azimuth: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bs_position: [100.0, 0.0, 0.0],
            ris_position: [0.0, 0.0, 0.0],
            area_origin: [0.0, 0.0],
            area_side: 100.0,
            user_height: 0.0,
            num_users: 4,
            num_groups: 2,
            bs_antennas: 4,
            ris_columns: 8,
            ris_rows: 4,
            pattern_exponent: 2.0,
            max_directivity: 6.0,
            noise_dbm: -164.0,
            path_loss: PathLoss::default(),
            rician_bi: 3.0,
            rician_iu: 3.0,
            boresight_azimuth: 0.0,
        }
    }
}

/// A concrete scene. Group indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_positions: Vec<[f64; 3]>,
    pub group_of_user: Vec<usize>,
    pub num_groups: usize,
    pub bs_antennas: usize,
    pub ris_columns: usize,
    pub ris_rows: usize,
    pub pattern_exponent: f64,
    pub max_directivity: f64,
    /// Per-user noise power, watts.
    pub noise_power: Vec<f64>,
    pub rician_bi: f64,
    /// Per-user Rician factor of the RIS to user link.
    pub rician_iu: Vec<f64>,
    pub path_loss: PathLoss,
    pub boresight_azimuth: f64,
}

impl Scene {
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Number of RIS elements `M`.
    pub fn ris_elements(&self) -> usize {
        self.ris_columns * self.ris_rows
    }

    /// Users belonging to group `g`, in index order.
    pub fn members(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of_user
            .iter()
            .enumerate()
            .filter(move |(_, &grp)| grp == g)
            .map(|(k, _)| k)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        let g = self.num_groups;
        if g == 0 || k < g {
            return Err(Error::InvalidConfig(format!(
                "need K >= G >= 1, got K={k}, G={g}"
            )));
        }
        if self.group_of_user.len() != k || self.noise_power.len() != k || self.rician_iu.len() != k
        {
            return Err(Error::Dimension(
                "per-user vectors must have length K".into(),
            ));
        }
        if let Some(bad) = self.group_of_user.iter().find(|&&grp| grp >= g) {
            return Err(Error::InvalidConfig(format!(
                "group index {bad} out of range"
            )));
        }
        for grp in 0..g {
            if self.members(grp).next().is_none() {
                return Err(Error::InvalidConfig(format!("group {grp} has no users")));
            }
        }
        if self.bs_antennas == 0 || self.ris_elements() == 0 {
            return Err(Error::InvalidConfig("array sizes must be positive".into()));
        }
        if self.noise_power.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig("noise power must be positive".into()));
        }
        if !(self.pattern_exponent >= 0.0) || !(self.max_directivity > 0.0) {
            return Err(Error::InvalidConfig("need q >= 0 and D_m > 0".into()));
        }
        if self.rician_bi < 0.0 || self.rician_iu.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidConfig("Rician factors must be >= 0".into()));
        }
        Ok(())
    }
}

/// Drop `K` users uniformly over the configured square and split them into
/// `G` contiguous blocks of (nearly) equal size.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    if config.num_groups == 0 || config.num_users < config.num_groups {
        return Err(Error::InvalidConfig(format!(
            "cannot split K={} users into G={} groups",
            config.num_users, config.num_groups
        )));
    }
    if !(config.area_side > 0.0) {
        return Err(Error::InvalidConfig("area side must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [x0, y0] = config.area_origin;
    let side = config.area_side;
    let user_positions: Vec<[f64; 3]> = (0..config.num_users)
        .map(|_| {
            let x = x0 + side * rng.random::<f64>();
            let y = y0 + side * rng.random::<f64>();
            [x, y, config.user_height]
        })
        .collect();
    let k = config.num_users;
    let g = config.num_groups;
    let group_of_user = (0..k).map(|u| u * g / k).collect();

    let scene = Scene {
        bs_position: config.bs_position,
        ris_position: config.ris_position,
        user_positions,
        group_of_user,
        num_groups: g,
        bs_antennas: config.bs_antennas,
        ris_columns: config.ris_columns,
        ris_rows: config.ris_rows,
        pattern_exponent: config.pattern_exponent,
        max_directivity: config.max_directivity,
        noise_power: vec![dbm_to_watts(config.noise_dbm); k],
        rician_bi: config.rician_bi,
        rician_iu: vec![config.rician_iu; k],
        path_loss: config.path_loss,
        boresight_azimuth: config.boresight_azimuth,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_splits_into_equal_groups() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(&cfg, 7).unwrap();
        assert_eq!(scene.group_of_user, vec![0, 0, 1, 1]);
        for p in &scene.user_positions {
            assert!((0.0..=100.0).contains(&p[0]) && (0.0..=100.0).contains(&p[1]));
        }
        assert_eq!(scene.bs_position, [100.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(
            generate_scene(&cfg, 11).unwrap(),
            generate_scene(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_scene(&cfg, 11).unwrap().user_positions,
            generate_scene(&cfg, 12).unwrap().user_positions
        );
    }

    #[test]
    fn rejects_more_groups_than_users() {
        let cfg = SceneConfig {
            num_users: 1,
            num_groups: 2,
            ..Default::default()
        };
        assert!(generate_scene(&cfg, 0).is_err());
        let cfg = SceneConfig {
            area_side: 0.0,
            ..Default::default()
        };
        assert!(generate_scene(&cfg, 0).is_err());
    }

    #[test]
    fn uneven_split_keeps_every_group_populated() {
        let cfg = SceneConfig {
            num_users: 5,
            num_groups: 3,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, 3).unwrap();
        assert_eq!(scene.group_of_user, vec![0, 0, 1, 1, 2]);
    }

    #[test]
    fn noise_conversion() {
        let w = dbm_to_watts(-164.0);
        assert!((w / 10f64.powf(-19.4) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
    }
}
