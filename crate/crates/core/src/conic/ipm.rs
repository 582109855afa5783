//! Primal-dual interior-point method for linear objectives over rotated
//! second-order cones.
//!
//! Every constraint has the form `||L x||^2 <= q.x + r`, i.e. the point
//! `(1/2, q.x + r, L x)` lies in a rotated second-order cone. Its
//! logarithmic barrier is `-log(q.x + r - ||L x||^2)`. The method follows
//! the standard primal-dual path: Newton steps on the perturbed KKT system,
//! a fraction-to-boundary rule on the multipliers, and a backtracking line
//! search that keeps the primal iterate strictly inside every cone.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `||factor * x||^2 <= linear . x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCone {
    pub factor: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub offset: f64,
}

impl QuadCone {
    /// Negative inside the cone.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        (&self.factor * x).norm_squared() - self.linear.dot(x) - self.offset
    }
}

/// `minimize cost . x` subject to every cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub cost: DVector<f64>,
    pub cones: Vec<QuadCone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpSolveReport {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

const MU: f64 = 20.0;
const ALPHA: f64 = 0.01;
const BETA: f64 = 0.5;
/// Centering stops once half the squared Newton decrement drops below this.
const CENTERING_TOL: f64 = 1e-9;
/// Largest multiple of a full Newton step tried when the barrier keeps
/// decreasing along the direction.
const MAX_EXPANSION: f64 = 1048576.0;

struct Prepared<'a> {
    problem: &'a ConicProblem,
    grams: Vec<DMatrix<f64>>,
}

impl Prepared<'_> {
    fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.grams.len(),
            self.problem
                .cones
                .iter()
                .zip(&self.grams)
                .map(|(c, _)| (&c.factor * x).norm_squared() - c.linear.dot(x) - c.offset),
        )
    }

    fn gradients(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.problem
            .cones
            .iter()
            .zip(&self.grams)
            .map(|(c, _)| c.factor.tr_mul(&(&c.factor * x)) * 2.0 - &c.linear)
            .collect()
    }

    /// `t c.x - sum log(-f_i)`, infinite outside the cones.
    fn barrier(&self, x: &DVector<f64>, t: f64) -> f64 {
        let f = self.slacks(x);
        if f.iter().any(|&v| v >= 0.0) {
            return f64::INFINITY;
        }
        t * self.problem.cost.dot(x) - f.iter().map(|v| (-v).ln()).sum::<f64>()
    }
}

/// Solve from a strictly feasible starting point `x0`.
///
/// Each outer stage centers on the barrier `t c.x - sum log(-f_i)` with
/// damped Newton steps, then raises `t`. On the central path the
/// multipliers `lambda_i = 1 / (t (-f_i))` are dual feasible and the
/// duality gap is `m / t`; both residuals in the report are measured with
/// these multipliers.
pub fn solve(
    problem: &ConicProblem,
    x0: &DVector<f64>,
    options: &IpmOptions,
) -> Result<(DVector<f64>, DVector<f64>, SocpSolveReport)> {
    let n = problem.cost.len();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "start point has {} entries, problem has {n}",
            x0.len()
        )));
    }
    for (i, c) in problem.cones.iter().enumerate() {
        if c.factor.ncols() != n || c.linear.len() != n {
            return Err(Error::Dimension(format!(
                "cone {i} does not match {n} variables"
            )));
        }
    }
    let prepared = Prepared {
        problem,
        grams: problem
            .cones
            .iter()
            .map(|c| c.factor.transpose() * &c.factor)
            .collect(),
    };
    let m = problem.cones.len();
    let mut x = x0.clone();
    if prepared.slacks(&x).iter().any(|&v| v >= 0.0) {
        return Err(Error::Solver("start point is not strictly feasible".into()));
    }
    if m == 0 {
        let status = if problem.cost.norm() == 0.0 {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        let report = SocpSolveReport {
            status,
            objective_value: problem.cost.dot(&x),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: problem.cost.norm(),
        };
        return Ok((x, DVector::zeros(0), report));
    }

    let tol = options.tolerance;
    let mut t = initial_weight(&prepared, &x);
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;
    'outer: loop {
        // centering
        loop {
            if iterations >= options.max_iterations {
                break 'outer;
            }
            let f = prepared.slacks(&x);
            let grads = prepared.gradients(&x);
            let mut grad = &problem.cost * t;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for i in 0..m {
                let inv = 1.0 / -f[i];
                grad.axpy(inv, &grads[i], 1.0);
                hess += &prepared.grams[i] * (2.0 * inv);
                hess.ger(inv * inv, &grads[i], &grads[i], 1.0);
            }
            let dx = newton_solve(hess, &(-&grad))
                .ok_or_else(|| Error::Solver("Newton system is singular".into()))?;
            let decrement = -grad.dot(&dx);
            if !(decrement.is_finite()) {
                return Err(Error::Solver("non-finite Newton step".into()));
            }
            let phi = prepared.barrier(&x, t);
            // Stop once the predicted decrease is below what the barrier
            // value can resolve.
            if decrement / 2.0 <= CENTERING_TOL || decrement <= 1e-13 * (1.0 + phi.abs()) {
                break;
            }
            iterations += 1;
            let mut step = 1.0;
            loop {
                let trial = &x + &dx * step;
                let value = prepared.barrier(&trial, t);
                if value <= phi - ALPHA * step * decrement {
                    x = trial;
                    if step == 1.0 {
                        // Far from the central path the barrier can be
                        // nearly linear along the Newton direction; keep
                        // going while it still decreases.
                        let mut best = value;
                        let mut longer = 2.0;
                        while longer <= MAX_EXPANSION {
                            let further = &x + &dx * (longer / 2.0);
                            let v = prepared.barrier(&further, t);
                            if !(v < best) {
                                break;
                            }
                            best = v;
                            x = further;
                            longer *= 2.0;
                        }
                    }
                    break;
                }
                step *= BETA;
                if step < 1e-16 {
                    // No representable progress left at this weight.
                    break;
                }
            }
            if step < 1e-16 {
                break;
            }
        }
        let scale = 1.0 + problem.cost.dot(&x).abs();
        if m as f64 / t <= tol * scale {
            status = SolveStatus::Optimal;
            break;
        }
        t *= MU;
    }

    let f = prepared.slacks(&x);
    let lambda = f.map(|v| 1.0 / (t * -v));
    let mut dual = problem.cost.clone();
    for (l, g) in lambda.iter().zip(prepared.gradients(&x)) {
        dual.axpy(*l, &g, 1.0);
    }
    let primal_residual = f.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let report = SocpSolveReport {
        status,
        objective_value: problem.cost.dot(&x),
        iterations,
        primal_residual,
        dual_residual: dual.norm(),
    };
    Ok((x, lambda, report))
}

/// Barrier weight that best balances the cost against the barrier gradient
/// at the starting point, kept within a sane range.
fn initial_weight(prepared: &Prepared<'_>, x: &DVector<f64>) -> f64 {
    let f = prepared.slacks(x);
    let mut bgrad = DVector::zeros(x.len());
    for (fi, g) in f.iter().zip(prepared.gradients(x)) {
        bgrad.axpy(1.0 / -fi, &g, 1.0);
    }
    let c = &prepared.problem.cost;
    let cc = c.norm_squared();
    if cc == 0.0 {
        return 1.0;
    }
    (-c.dot(&bgrad) / cc).clamp(1e-3, 1e3).max(1e-3)
}

fn newton_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let diag_scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(ch.solve(rhs));
        }
        reg = if reg == 0.0 {
            1e-14 * diag_scale
        } else {
            reg * 100.0
        };
    }
    h.lu().solve(rhs)
}

impl ConicProblem {
    /// Plain-text dump: a header line, the cost as `index value` pairs, then
    /// per cone its row count, offset, linear terms and the factor as
    /// `row col value` triplets. Zero entries are omitted.
    pub fn dump(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "rotaris-conic v1")?;
        writeln!(out, "variables {}", self.cost.len())?;
        writeln!(out, "cones {}", self.cones.len())?;
        writeln!(out, "cost")?;
        for (i, v) in self.cost.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(out, "{i} {v:e}")?;
        }
        for (k, cone) in self.cones.iter().enumerate() {
            writeln!(
                out,
                "cone {k} rows {} offset {:e}",
                cone.factor.nrows(),
                cone.offset
            )?;
            writeln!(out, "linear")?;
            for (i, v) in cone.linear.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                writeln!(out, "{i} {v:e}")?;
            }
            writeln!(out, "factor")?;
            for r in 0..cone.factor.nrows() {
                for c in 0..cone.factor.ncols() {
                    let v = cone.factor[(r, c)];
                    if v != 0.0 {
                        writeln!(out, "{r} {c} {v:e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}
