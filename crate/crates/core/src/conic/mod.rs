//! The two convex subproblems of each outer iteration, written as conic
//! programs over real variables, plus the unit-modulus projection.
//!
//! Complex unknowns `z` are split as `[Re z; Im z]`. A complex functional
//! `w^H z` contributes two real factor rows, so `|w^H z|^2` becomes a
//! squared Euclidean norm inside a rotated cone.

mod ipm;

pub use ipm::{solve, ConicProblem, IpmOptions, QuadCone, SocpSolveReport, SolveStatus};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::surrogate::{EQuadraticForm, FQuadraticForm};

/// Epigraph variables of the last subproblem solves: `gamma` from the
/// precoder step, `kappa` from the phase step. A single solve fills only its
/// own vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuxiliaryRates {
    pub gamma: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// Write the two real rows of `w^H z` into `factor`, where complex entry `j`
/// of `z` lives at real columns `base + j` and `base + imag_shift + j`.
fn put_functional(
    factor: &mut DMatrix<f64>,
    row: usize,
    w: &[Complex64],
    base: usize,
    imag_shift: usize,
) {
    for (j, wj) in w.iter().enumerate() {
        let (re, im) = (base + j, base + imag_shift + j);
        factor[(row, re)] = wj.re;
        factor[(row, im)] = wj.im;
        factor[(row + 1, re)] = -wj.im;
        factor[(row + 1, im)] = wj.re;
    }
}

/// `2 Re{c^H z}` as a real linear functional.
fn put_linear(linear: &mut DVector<f64>, c: &[Complex64], base: usize, imag_shift: usize) {
    for (j, cj) in c.iter().enumerate() {
        linear[base + j] += 2.0 * cj.re;
        linear[base + imag_shift + j] += 2.0 * cj.im;
    }
}

fn group_floor(constants: impl Iterator<Item = (usize, f64)>, groups: usize) -> Vec<f64> {
    let mut mins = vec![f64::INFINITY; groups];
    for (g, c) in constants {
        mins[g] = mins[g].min(c);
    }
    mins
}

/// Build the precoder program. Variables are the scaled precoder
/// `F / sqrt(P_max)` followed by `gamma`.
pub fn beamforming_problem(forms: &FQuadraticForm, p_max: f64) -> ConicProblem {
    let n = forms.antennas;
    let g_count = forms.num_groups;
    let nz = n * g_count;
    let vars = 2 * nz + g_count;
    let scale = p_max.sqrt();
    let mut cones = Vec::with_capacity(forms.users.len() + 1);
    for u in &forms.users {
        let mut factor = DMatrix::zeros(2 * g_count, vars);
        let v: Vec<Complex64> = u.v.iter().map(|z| z * scale).collect();
        for i in 0..g_count {
            put_functional(&mut factor, 2 * i, &v, i * n, nz);
        }
        let mut linear = DVector::zeros(vars);
        let c: Vec<Complex64> = u.c.column(u.group).iter().map(|z| z * scale).collect();
        put_linear(&mut linear, &c, u.group * n, nz);
        linear[2 * nz + u.group] = -1.0;
        cones.push(QuadCone {
            factor,
            linear,
            offset: u.constant,
        });
    }
    let mut factor = DMatrix::zeros(2 * nz, vars);
    for i in 0..2 * nz {
        factor[(i, i)] = 1.0;
    }
    cones.push(QuadCone {
        factor,
        linear: DVector::zeros(vars),
        offset: 1.0,
    });
    let mut cost = DVector::zeros(vars);
    for g in 0..g_count {
        cost[2 * nz + g] = -1.0;
    }
    ConicProblem { cost, cones }
}

/// Fraction of the way to the boundary at which a warm start is placed.
const WARM_SHRINK: f64 = 0.999;

/// Epigraph start strictly below each group's worst user value.
fn epigraph_start(values: &[f64], groups: &[usize], g_count: usize) -> Vec<f64> {
    let floor = group_floor(groups.iter().copied().zip(values.iter().copied()), g_count);
    floor.iter().map(|v| v - 1e-2 * (1.0 + v.abs())).collect()
}

/// Radii, as fractions of the feasible set, tried for a cold start.
const COLD_SCALES: [f64; 8] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0];

/// Maximize the sum of group epigraph variables over the total-power ball.
///
/// The start is the best of a few scalings of the direction in which the
/// linear terms grow fastest, zero included: from a poor start the epigraph
/// variables have a long way to climb along curved cone boundaries.
pub fn solve_beamforming(
    forms: &FQuadraticForm,
    p_max: f64,
    options: &IpmOptions,
) -> Result<(DMatrix<Complex64>, AuxiliaryRates, SocpSolveReport)> {
    let mut direction = DMatrix::zeros(forms.antennas, forms.num_groups);
    let (n, g_count) = direction.shape();
    if forms
        .users
        .iter()
        .any(|u| u.v.len() != n || u.c.shape() != (n, g_count))
    {
        // reported by the warm-start entry point
        return solve_beamforming_from(forms, p_max, &direction, options);
    }
    for u in &forms.users {
        direction += &u.c;
    }
    let norm = direction.norm();
    let unit = if norm > 0.0 {
        direction / Complex64::from(norm)
    } else {
        direction
    };
    let radius = p_max.max(0.0).sqrt();
    let start = COLD_SCALES
        .iter()
        .map(|s| &unit * Complex64::from(s * radius))
        .max_by(|a, b| forms.sum_of_minima(a).total_cmp(&forms.sum_of_minima(b)))
        .expect("candidate list is not empty");
    solve_beamforming_from(forms, p_max, &start, options)
}

/// As [`solve_beamforming`], warm-started from `start`, which is pulled
/// strictly inside the power ball. When `start` itself is feasible the
/// returned precoder never has a lower surrogate value than it.
pub fn solve_beamforming_from(
    forms: &FQuadraticForm,
    p_max: f64,
    start: &DMatrix<Complex64>,
    options: &IpmOptions,
) -> Result<(DMatrix<Complex64>, AuxiliaryRates, SocpSolveReport)> {
    let n = forms.antennas;
    let g_count = forms.num_groups;
    for u in &forms.users {
        if u.v.len() != n || u.c.shape() != (n, g_count) {
            return Err(Error::Dimension(
                "precoder form does not match antennas".into(),
            ));
        }
    }
    if !(p_max >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "P_max must be >= 0, got {p_max}"
        )));
    }
    let floor = group_floor(forms.users.iter().map(|u| (u.group, u.constant)), g_count);
    if p_max == 0.0 {
        let report = SocpSolveReport {
            status: SolveStatus::Optimal,
            objective_value: -floor.iter().sum::<f64>(),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        };
        let aux = AuxiliaryRates {
            gamma: floor,
            kappa: vec![],
        };
        return Ok((DMatrix::zeros(n, g_count), aux, report));
    }

    if start.shape() != (n, g_count) {
        return Err(Error::Dimension(
            "start precoder does not match forms".into(),
        ));
    }

    let problem = beamforming_problem(forms, p_max);
    let nz = n * g_count;
    let scale = p_max.sqrt();
    let radius = start.norm() / scale;
    let f0 = if radius > WARM_SHRINK {
        start * Complex64::from(WARM_SHRINK / radius)
    } else {
        start.clone()
    };
    let groups: Vec<usize> = forms.users.iter().map(|u| u.group).collect();
    let gamma0 = epigraph_start(&forms.values(&f0), &groups, g_count);
    let mut x0 = DVector::zeros(problem.cost.len());
    for (j, z) in f0.iter().enumerate() {
        x0[j] = z.re / scale;
        x0[nz + j] = z.im / scale;
    }
    for (g, v) in gamma0.iter().enumerate() {
        x0[2 * nz + g] = *v;
    }
    let (x, _, report) = solve(&problem, &x0, options)?;
    let f = DMatrix::from_fn(n, g_count, |r, c| {
        let j = c * n + r;
        Complex64::new(x[j], x[nz + j]) * scale
    });
    if start.norm() <= scale * (1.0 + 1e-12) && forms.sum_of_minima(&f) < forms.sum_of_minima(start)
    {
        let aux = AuxiliaryRates {
            gamma: group_floor(groups.iter().copied().zip(forms.values(start)), g_count),
            kappa: vec![],
        };
        return Ok((start.clone(), aux, report));
    }
    let aux = AuxiliaryRates {
        gamma: (0..g_count).map(|g| x[2 * nz + g]).collect(),
        kappa: vec![],
    };
    Ok((f, aux, report))
}

/// Build the relaxed phase program. Variables are `e` followed by `kappa`.
pub fn phase_problem(forms: &EQuadraticForm) -> ConicProblem {
    let m = forms.elements;
    let g_count = forms.num_groups;
    let vars = 2 * m + g_count;
    let mut cones = Vec::with_capacity(forms.users.len() + m);
    for u in &forms.users {
        let cols = u.factor.ncols();
        let mut factor = DMatrix::zeros(2 * cols, vars);
        for i in 0..cols {
            let w: Vec<Complex64> = u.factor.column(i).iter().copied().collect();
            put_functional(&mut factor, 2 * i, &w, 0, m);
        }
        let mut linear = DVector::zeros(vars);
        let a: Vec<Complex64> = u.a_vec.iter().copied().collect();
        put_linear(&mut linear, &a, 0, m);
        linear[2 * m + u.group] = -1.0;
        cones.push(QuadCone {
            factor,
            linear,
            offset: u.constant,
        });
    }
    for j in 0..m {
        let mut factor = DMatrix::zeros(2, vars);
        factor[(0, j)] = 1.0;
        factor[(1, m + j)] = 1.0;
        cones.push(QuadCone {
            factor,
            linear: DVector::zeros(vars),
            offset: 1.0,
        });
    }
    let mut cost = DVector::zeros(vars);
    for g in 0..g_count {
        cost[2 * m + g] = -1.0;
    }
    ConicProblem { cost, cones }
}

/// Maximize the sum of group epigraph variables over `|e_m| <= 1`, cold
/// started as in [`solve_beamforming`] from scaled phases of the summed
/// linear terms.
pub fn solve_phase_relaxed(
    forms: &EQuadraticForm,
    options: &IpmOptions,
) -> Result<(DVector<Complex64>, AuxiliaryRates, SocpSolveReport)> {
    let m = forms.elements;
    let mut direction = DVector::zeros(m);
    if forms
        .users
        .iter()
        .any(|u| u.factor.nrows() != m || u.a_vec.len() != m)
    {
        return solve_phase_relaxed_from(forms, &direction, options);
    }
    for u in &forms.users {
        direction += &u.a_vec;
    }
    let unit = direction.map(|z| {
        if z.norm() > 0.0 {
            z / z.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    let start = COLD_SCALES
        .iter()
        .map(|s| &unit * Complex64::from(*s))
        .max_by(|a, b| forms.sum_of_minima(a).total_cmp(&forms.sum_of_minima(b)))
        .expect("candidate list is not empty");
    solve_phase_relaxed_from(forms, &start, options)
}

/// As [`solve_phase_relaxed`], warm-started from `start`, which is pulled
/// strictly inside the element-wise unit discs. When `start` itself is
/// feasible the returned point never has a lower surrogate value than it.
pub fn solve_phase_relaxed_from(
    forms: &EQuadraticForm,
    start: &DVector<Complex64>,
    options: &IpmOptions,
) -> Result<(DVector<Complex64>, AuxiliaryRates, SocpSolveReport)> {
    let m = forms.elements;
    let g_count = forms.num_groups;
    for u in &forms.users {
        if u.factor.nrows() != m || u.a_vec.len() != m {
            return Err(Error::Dimension(
                "phase form does not match elements".into(),
            ));
        }
    }
    if start.len() != m {
        return Err(Error::Dimension(
            "start phase vector does not match forms".into(),
        ));
    }
    let problem = phase_problem(forms);
    let e0 = start.map(|z| {
        let r = z.norm();
        if r > WARM_SHRINK {
            z * (WARM_SHRINK / r)
        } else {
            z
        }
    });
    let groups: Vec<usize> = forms.users.iter().map(|u| u.group).collect();
    let kappa0 = epigraph_start(&forms.values(&e0), &groups, g_count);
    let mut x0 = DVector::zeros(problem.cost.len());
    for (j, z) in e0.iter().enumerate() {
        x0[j] = z.re;
        x0[m + j] = z.im;
    }
    for (g, v) in kappa0.iter().enumerate() {
        x0[2 * m + g] = *v;
    }
    let (x, _, report) = solve(&problem, &x0, options)?;
    let e = DVector::from_fn(m, |j, _| Complex64::new(x[j], x[m + j]));
    if start.iter().all(|z| z.norm() <= 1.0 + 1e-12)
        && forms.sum_of_minima(&e) < forms.sum_of_minima(start)
    {
        let aux = AuxiliaryRates {
            gamma: vec![],
            kappa: group_floor(groups.iter().copied().zip(forms.values(start)), g_count),
        };
        return Ok((start.clone(), aux, report));
    }
    let aux = AuxiliaryRates {
        gamma: vec![],
        kappa: (0..g_count).map(|g| x[2 * m + g]).collect(),
    };
    Ok((e, aux, report))
}

const DEGENERATE: f64 = 1e-12;

/// `exp(j angle(e_m / e_M))` element-wise. Fails when any entry is too small
/// for its phase to be defined.
pub fn project_unit_modulus(e_relaxed: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if let Some((index, z)) = e_relaxed
        .iter()
        .enumerate()
        .find(|(_, z)| z.norm() < DEGENERATE)
    {
        return Err(Error::DegenerateEntry {
            index,
            magnitude: z.norm(),
        });
    }
    Ok(project_unit_modulus_lenient(e_relaxed))
}

/// Same projection, mapping degenerate entries to phase zero. A degenerate
/// reference entry is treated as phase zero too.
pub fn project_unit_modulus_lenient(e_relaxed: &DVector<Complex64>) -> DVector<Complex64> {
    let reference = e_relaxed
        .iter()
        .next_back()
        .filter(|z| z.norm() >= DEGENERATE)
        .map(|z| z.arg())
        .unwrap_or(0.0);
    e_relaxed.map(|z| {
        if z.norm() < DEGENERATE {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, z.arg() - reference)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{EUserForm, FUserForm};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn projection_examples() {
        let u = DVector::from_vec(vec![c(0.0, 1.0), c(-1.0, 0.0), c(1.0, 0.0)]);
        let p = project_unit_modulus(&u).unwrap();
        assert!((p - &u).norm() < 1e-12);

        let scaled = u.map(|z| z * c(0.3, -2.0));
        let p = project_unit_modulus(&scaled).unwrap();
        assert!((p - &u).norm() < 1e-12);

        let two = DVector::from_vec(vec![c(0.5, 0.0), c(0.0, 0.5)]);
        let p = project_unit_modulus(&two).unwrap();
        assert!((p[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((p[1] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_entries() {
        let v = DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 2.0)]);
        assert!(matches!(
            project_unit_modulus(&v),
            Err(Error::DegenerateEntry { index: 0, .. })
        ));
        let p = project_unit_modulus_lenient(&v);
        assert_eq!(p[0], c(1.0, 0.0));
        assert!((p[1] - c(1.0, 0.0)).norm() < 1e-12);
        let p = project_unit_modulus_lenient(&DVector::from_vec(vec![c(0.0, 3.0), c(0.0, 0.0)]));
        assert!((p[0] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_power_returns_zero_precoder() {
        let forms = FQuadraticForm {
            users: vec![
                FUserForm {
                    v: DVector::from_vec(vec![c(1.0, 0.0)]),
                    c: DMatrix::from_element(1, 1, c(1.0, 0.0)),
                    constant: 0.5,
                    group: 0,
                },
                FUserForm {
                    v: DVector::from_vec(vec![c(1.0, 0.0)]),
                    c: DMatrix::from_element(1, 1, c(1.0, 0.0)),
                    constant: -0.25,
                    group: 0,
                },
            ],
            num_groups: 1,
            antennas: 1,
        };
        let (f, aux, rep) = solve_beamforming(&forms, 0.0, &IpmOptions::default()).unwrap();
        assert_eq!(f.norm(), 0.0);
        assert_eq!(aux.gamma, vec![-0.25]);
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!(solve_beamforming(&forms, -1.0, &IpmOptions::default()).is_err());
    }

    #[test]
    fn constant_phase_objective() {
        let forms = EQuadraticForm {
            users: vec![
                EUserForm {
                    factor: DMatrix::zeros(3, 1),
                    a_vec: DVector::zeros(3),
                    constant: 2.0,
                    group: 0,
                },
                EUserForm {
                    factor: DMatrix::zeros(3, 1),
                    a_vec: DVector::zeros(3),
                    constant: 1.5,
                    group: 0,
                },
            ],
            num_groups: 1,
            elements: 3,
        };
        let (e, aux, rep) = solve_phase_relaxed(&forms, &IpmOptions::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((aux.kappa[0] - 1.5).abs() < 1e-7);
        assert!(e.iter().all(|z| z.norm() <= 1.0 + 1e-7));
    }

    #[test]
    fn scalar_phase_matches_calculus() {
        // maximize const + 2 a e - A e^2 over |e| <= 1, optimum min(1, a/A)
        for &(a, big_a) in &[(0.3, 1.0), (2.0, 1.0), (0.7, 0.8)] {
            let forms = EQuadraticForm {
                users: vec![EUserForm {
                    factor: DMatrix::from_element(1, 1, c(f64::sqrt(big_a), 0.0)),
                    a_vec: DVector::from_element(1, c(a, 0.0)),
                    constant: 0.1,
                    group: 0,
                }],
                num_groups: 1,
                elements: 1,
            };
            let (e, _, _) = solve_phase_relaxed(&forms, &IpmOptions::default()).unwrap();
            let expected = (a / big_a).min(1.0);
            assert!(
                (e[0] - c(expected, 0.0)).norm() < 1e-6,
                "{} vs {expected}",
                e[0]
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let forms = EQuadraticForm {
            users: vec![EUserForm {
                factor: DMatrix::zeros(2, 1),
                a_vec: DVector::zeros(3),
                constant: 0.0,
                group: 0,
            }],
            num_groups: 1,
            elements: 3,
        };
        assert!(matches!(
            solve_phase_relaxed(&forms, &IpmOptions::default()),
            Err(Error::Dimension(_))
        ));
    }
}
