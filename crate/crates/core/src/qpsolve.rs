//! Dense convex quadratic programming with a verifiable accuracy contract.
//!
//! Problems are
//!
//! ```text
//!   minimize    x' P x + c' x
//!   subject to  A_ineq x >= b_ineq,   A_eq x = b_eq,   x >= lb
//! ```
//!
//! with `P` symmetric positive-semidefinite (the pure-LP case `P = 0` is
//! allowed). The solver runs a Mehrotra predictor-corrector interior-point
//! iteration and then polishes the result by re-solving the KKT system on the
//! detected active set, which restores dual feasibility and lets LP-like
//! problems finish on a vertex instead of the analytic center. A solution is
//! reported `Optimal` only when its measured KKT residuals actually meet the
//! configured tolerances, so callers can trust the status field rather than
//! the iteration log.
//!
//! Everything is deterministic: no randomness, fixed pivoting, fixed
//! iteration order. Solving the same problem twice returns bitwise-identical
//! vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Convex QP in standard form. `lb` entries may be `f64::NEG_INFINITY` for
/// unbounded variables.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    /// Symmetric PSD quadratic term; objective is `x' P x + c' x`.
    pub p: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// Inequality rows, `a_ineq * x >= b_ineq`.
    pub a_ineq: Vec<Vec<f64>>,
    pub b_ineq: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lb: Vec<f64>,
}

impl QpProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_cons(&self) -> usize {
        self.a_ineq.len() + self.a_eq.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for (i, row) in self.p.iter().enumerate() {
            let mut acc = 0.0;
            for (j, &pij) in row.iter().enumerate() {
                acc += pij * x[j];
            }
            quad += x[i] * acc;
        }
        quad + self.c.iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.p.len() != n || self.p.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid(format!("P must be {n}x{n}")));
        }
        if self.lb.len() != n {
            return Err(Error::Invalid(format!("lb must have length {n}")));
        }
        if self.a_ineq.len() != self.b_ineq.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(Error::Invalid(
                "constraint matrices and right-hand sides disagree in length".into(),
            ));
        }
        if self
            .a_ineq
            .iter()
            .chain(self.a_eq.iter())
            .any(|r| r.len() != n)
        {
            return Err(Error::Invalid(format!("constraint rows must have length {n}")));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (self.p[i][j] - self.p[j][i]).abs();
                let scale = self.p[i][j].abs().max(self.p[j][i].abs()).max(1.0);
                if diff > 1e-9 * scale {
                    return Err(Error::Invalid(format!(
                        "P is not symmetric at ({i},{j}): {} vs {}",
                        self.p[i][j], self.p[j][i]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Lagrange multipliers: `lambda_ineq` for inequality rows, `nu_eq` for
/// equality rows, `mu_lb` per variable (zero where `lb` is infinite).
#[derive(Clone, Debug, PartialEq)]
pub struct Duals {
    pub lambda_ineq: Vec<f64>,
    pub nu_eq: Vec<f64>,
    pub mu_lb: Vec<f64>,
}

/// Sup-norm residuals of the four KKT conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    /// Constraint violation: equality mismatch, inequality shortfall, bound
    /// shortfall.
    pub primal: f64,
    /// Negativity of inequality/bound multipliers.
    pub dual: f64,
    /// `|| 2 P x + c - A_ineq' lambda - A_eq' nu - mu_lb ||_inf`.
    pub stationarity: f64,
    /// `max_i |lambda_i * slack_i|` over inequalities and bounds.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.stationarity)
            .max(self.complementarity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub duals: Duals,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Maximum admissible constraint violation for `Optimal` status.
    pub feas_tol: f64,
    /// Maximum admissible KKT residual (all four) for `Optimal` status.
    pub kkt_tol: f64,
    /// Iteration cap; `None` means `50 * (n_vars + n_cons)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            kkt_tol: 1e-6,
            max_iterations: None,
        }
    }
}

/// Evaluate the KKT residuals of a candidate solution. The stationarity
/// gradient of the quadratic term is `2 P x` (the objective is `x' P x`, not
/// `x' P x / 2`).
pub fn kkt_residuals(p: &QpProblem, x: &[f64], duals: &Duals) -> KktResiduals {
    let mut grad: Vec<f64> = p
        .c
        .iter()
        .zip(&p.p)
        .map(|(&ci, p_row)| ci + 2.0 * dot(p_row, x))
        .collect();
    for (row, &l) in p.a_ineq.iter().zip(&duals.lambda_ineq) {
        for (g, &a) in grad.iter_mut().zip(row) {
            *g -= l * a;
        }
    }
    for (row, &v) in p.a_eq.iter().zip(&duals.nu_eq) {
        for (g, &a) in grad.iter_mut().zip(row) {
            *g -= v * a;
        }
    }
    for (g, &m) in grad.iter_mut().zip(&duals.mu_lb) {
        *g -= m;
    }
    let stationarity = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut primal = 0.0f64;
    let mut complementarity = 0.0f64;
    for (row, (&b, &l)) in p.a_ineq.iter().zip(p.b_ineq.iter().zip(&duals.lambda_ineq)) {
        let slack = dot(row, x) - b;
        primal = primal.max(-slack);
        complementarity = complementarity.max((l * slack).abs());
    }
    for (row, &b) in p.a_eq.iter().zip(&p.b_eq) {
        primal = primal.max((dot(row, x) - b).abs());
    }
    for ((&xi, &lbi), &mi) in x.iter().zip(&p.lb).zip(&duals.mu_lb) {
        if lbi.is_finite() {
            let slack = xi - lbi;
            primal = primal.max(-slack);
            complementarity = complementarity.max((mi * slack).abs());
        }
    }

    let dual = duals
        .lambda_ineq
        .iter()
        .chain(&duals.mu_lb)
        .fold(0.0f64, |m, &l| m.max(-l));

    KktResiduals {
        primal,
        dual,
        stationarity,
        complementarity,
    }
}

/// Internal canonical form: bounds folded into the inequality block, all
/// matrices dense.
struct Canonical {
    h: DMatrix<f64>, // 2P
    c: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>, // inequality rows, then one unit row per finite bound
    b_in: DVector<f64>,
    bound_vars: Vec<usize>,
    n: usize,
    me: usize,
    mi: usize,
}

impl Canonical {
    fn build(p: &QpProblem) -> Canonical {
        let n = p.n_vars();
        let me = p.a_eq.len();
        let bound_vars: Vec<usize> = (0..n).filter(|&i| p.lb[i].is_finite()).collect();
        let mi = p.a_ineq.len() + bound_vars.len();

        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = 2.0 * p.p[i][j];
            }
        }
        let c = DVector::from_column_slice(&p.c);
        let mut a_eq = DMatrix::zeros(me, n);
        for (i, row) in p.a_eq.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a_eq[(i, j)] = v;
            }
        }
        let b_eq = DVector::from_column_slice(&p.b_eq);
        let mut a_in = DMatrix::zeros(mi, n);
        let mut b_in = DVector::zeros(mi);
        for (i, row) in p.a_ineq.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a_in[(i, j)] = v;
            }
            b_in[i] = p.b_ineq[i];
        }
        for (k, &v) in bound_vars.iter().enumerate() {
            a_in[(p.a_ineq.len() + k, v)] = 1.0;
            b_in[p.a_ineq.len() + k] = p.lb[v];
        }
        Canonical {
            h,
            c,
            a_eq,
            b_eq,
            a_in,
            b_in,
            bound_vars,
            n,
            me,
            mi,
        }
    }

    fn split_duals(&self, p: &QpProblem, z: &DVector<f64>) -> Duals {
        let m_rows = p.a_ineq.len();
        let mut mu_lb = vec![0.0; self.n];
        for (k, &v) in self.bound_vars.iter().enumerate() {
            mu_lb[v] = z[m_rows + k];
        }
        Duals {
            lambda_ineq: z.as_slice()[..m_rows].to_vec(),
            nu_eq: Vec::new(),
            mu_lb,
        }
    }
}

const STEP_SHRINK: f64 = 0.995;
const REG: f64 = 1e-10;

/// Solve a convex QP. Returns `Err` only on malformed input; solver outcomes
/// (including infeasibility and iteration exhaustion) are reported in
/// [`QpSolution::status`].
pub fn solve(p: &QpProblem, options: &SolverOptions) -> Result<QpSolution> {
    p.validate()?;
    let can = Canonical::build(p);
    let max_iter = options
        .max_iterations
        .unwrap_or(50 * (p.n_vars() + p.n_cons()).max(1));

    let (state, iterations) = interior_point(&can, max_iter);
    let polished = polish(&can, &state).map(|ps| finish(p, &can, ps));
    let plain = finish(p, &can, state);

    let mut best = match polished {
        Some(pol) if pol.1.max() <= plain.1.max() => pol,
        _ => plain,
    };

    let status = if best.1.max() <= options.kkt_tol && best.1.primal <= options.feas_tol {
        QpStatus::Optimal
    } else if minimum_violation(&can, max_iter) > options.feas_tol.max(1e-9) {
        QpStatus::Infeasible
    } else {
        QpStatus::MaxIterations
    };

    let x = std::mem::take(&mut best.0);
    let duals = best.2;
    let kkt = best.1;
    Ok(QpSolution {
        objective: p.objective(&x),
        x,
        status,
        kkt,
        duals,
        iterations,
    })
}

struct IpmState {
    x: DVector<f64>,
    y: DVector<f64>, // equality duals
    z: DVector<f64>, // inequality duals (>= 0)
    s: DVector<f64>, // inequality slacks (>= 0)
}

/// Phase-1 feasibility measure: relax every constraint with a nonnegative
/// slack and minimize the total slack. A strictly positive optimum certifies
/// that the original constraint set is infeasible.
fn minimum_violation(can: &Canonical, max_iter: usize) -> f64 {
    let n = can.n;
    let rows = can.mi + 2 * can.me;
    if rows == 0 {
        return 0.0;
    }
    // Variables (x, t): minimize sum(t) s.t. relaxed rows, t >= 0.
    let nv = n + rows;
    let mut a_in = DMatrix::zeros(2 * rows, nv);
    let mut b_in = DVector::zeros(2 * rows);
    for r in 0..can.mi {
        for j in 0..n {
            a_in[(r, j)] = can.a_in[(r, j)];
        }
        a_in[(r, n + r)] = 1.0;
        b_in[r] = can.b_in[r];
    }
    for r in 0..can.me {
        for j in 0..n {
            a_in[(can.mi + 2 * r, j)] = can.a_eq[(r, j)];
            a_in[(can.mi + 2 * r + 1, j)] = -can.a_eq[(r, j)];
        }
        a_in[(can.mi + 2 * r, n + can.mi + 2 * r)] = 1.0;
        a_in[(can.mi + 2 * r + 1, n + can.mi + 2 * r + 1)] = 1.0;
        b_in[can.mi + 2 * r] = can.b_eq[r];
        b_in[can.mi + 2 * r + 1] = -can.b_eq[r];
    }
    // t >= 0 rows.
    for t in 0..rows {
        a_in[(rows + t, n + t)] = 1.0;
    }
    let mut c = DVector::zeros(nv);
    for t in 0..rows {
        c[n + t] = 1.0;
    }
    let phase1 = Canonical {
        h: DMatrix::zeros(nv, nv),
        c,
        a_eq: DMatrix::zeros(0, nv),
        b_eq: DVector::zeros(0),
        a_in,
        b_in,
        bound_vars: Vec::new(),
        n: nv,
        me: 0,
        mi: 2 * rows,
    };
    let (state, _) = interior_point(&phase1, max_iter);
    let best = polish(&phase1, &state).unwrap_or(state);
    (0..rows).map(|t| best.x[n + t].max(0.0)).sum()
}

fn finish(p: &QpProblem, can: &Canonical, state: IpmState) -> (Vec<f64>, KktResiduals, Duals) {
    let mut duals = can.split_duals(p, &state.z);
    duals.nu_eq = state.y.as_slice().to_vec();
    let x = state.x.as_slice().to_vec();
    let kkt = kkt_residuals(p, &x, &duals);
    (x, kkt, duals)
}

/// One Newton direction: steps for the primal variables, the equality duals,
/// the inequality duals, and the inequality slacks.
type NewtonDirection = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

fn interior_point(can: &Canonical, max_iter: usize) -> (IpmState, usize) {
    let (n, me, mi) = (can.n, can.me, can.mi);

    if mi == 0 {
        // No inequalities at all: one KKT solve is exact.
        let (x, y) = solve_equality_kkt(can, &[]);
        return (
            IpmState {
                x,
                y: y.rows(0, me).into_owned(),
                z: DVector::zeros(0),
                s: DVector::zeros(0),
            },
            1,
        );
    }

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(me);
    let mut s = DVector::from_fn(mi, |i, _| (-can.b_in[i]).max(1.0));
    let mut z = DVector::from_element(mi, 1.0);

    let b_scale = 1.0
        + can
            .b_in
            .amax()
            .max(if me > 0 { can.b_eq.amax() } else { 0.0 });
    let c_scale = 1.0 + can.c.amax();

    let mut best_merit = f64::INFINITY;
    let mut stall_merit = 0usize;
    let mut iterations = 0usize;

    for iter in 0..max_iter {
        iterations = iter + 1;

        // Residuals.
        let r_d = &can.h * &x + &can.c - can.a_eq.transpose() * &y - can.a_in.transpose() * &z;
        let r_e = &can.a_eq * &x - &can.b_eq;
        let r_i = &can.a_in * &x - &s - &can.b_in;
        let mu = s.dot(&z) / mi as f64;

        let viol = r_e.amax().max(r_i.amax());
        let dres = r_d.amax();
        let g_scale = c_scale + (&can.h * &x).amax();

        if viol <= 1e-11 * b_scale && dres <= 1e-11 * g_scale && mu <= 1e-12 * (1.0 + s.amax() * z.amax()) {
            break;
        }

        // Duals running away without feasibility progress is how an
        // infeasible problem looks from inside; no point iterating further
        // (the caller certifies infeasibility separately).
        let dual_norm = z.amax().max(if me > 0 { y.amax() } else { 0.0 });
        if dual_norm > 1e12 * c_scale && viol > 1e-9 * b_scale {
            break;
        }

        // General stagnation: once the iteration stops making progress it
        // never will (fixed arithmetic); stop and let the polish take over.
        let merit = viol.max(dres).max(mu);
        if merit < best_merit * 0.9 {
            best_merit = merit;
            stall_merit = 0;
        } else {
            stall_merit += 1;
            if stall_merit > 12 {
                break;
            }
        }

        // KKT matrix for this iteration.
        let dim = n + me + mi;
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (n, n)).copy_from(&can.h);
        for i in 0..n {
            m[(i, i)] += REG;
        }
        for r in 0..me {
            for c_ in 0..n {
                m[(n + r, c_)] = -can.a_eq[(r, c_)];
                m[(c_, n + r)] = -can.a_eq[(r, c_)];
            }
            m[(n + r, n + r)] = -REG;
        }
        for r in 0..mi {
            for c_ in 0..n {
                m[(n + me + r, c_)] = -can.a_in[(r, c_)];
                m[(c_, n + me + r)] = -can.a_in[(r, c_)];
            }
            m[(n + me + r, n + me + r)] = -(s[r] / z[r]) - REG;
        }
        let lu = m.lu();

        let solve_dir = |rc: &DVector<f64>| -> Option<NewtonDirection> {
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(-&r_d));
            rhs.rows_mut(n, me).copy_from(&r_e);
            let tail = &r_i + &DVector::from_fn(mi, |i, _| rc[i] / z[i]);
            rhs.rows_mut(n + me, mi).copy_from(&tail);
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let dz = sol.rows(n + me, mi).into_owned();
            let ds = &can.a_in * &dx + &r_i;
            Some((dx, dy, dz, ds))
        };

        // Affine (predictor) direction.
        let rc_aff = DVector::from_fn(mi, |i, _| s[i] * z[i]);
        let Some((_, _, dz_a, ds_a)) = solve_dir(&rc_aff) else {
            break;
        };
        let alpha_p_aff = max_step(&s, &ds_a);
        let alpha_d_aff = max_step(&z, &dz_a);
        let mu_aff = DVector::from_fn(mi, |i, _| {
            (s[i] + alpha_p_aff * ds_a[i]) * (z[i] + alpha_d_aff * dz_a[i])
        })
        .sum()
            / mi as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector direction.
        let rc = DVector::from_fn(mi, |i, _| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu);
        let Some((dx, dy, dz, ds)) = solve_dir(&rc) else {
            break;
        };
        let alpha_p = (STEP_SHRINK * max_step(&s, &ds)).min(1.0);
        let alpha_d = (STEP_SHRINK * max_step(&z, &dz)).min(1.0);

        x += alpha_p * &dx;
        s += alpha_p * &ds;
        y += alpha_d * &dy;
        z += alpha_d * &dz;

        // Keep the complementarity pair strictly positive despite rounding.
        for i in 0..mi {
            s[i] = s[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
    }

    (IpmState { x, y, z, s }, iterations)
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

/// Solve `[H G'; G 0] [x; w] = [-c; h]` for the equality-constrained QP with
/// constraint rows `G` = equalities plus the given active inequality rows;
/// returns `x` and the stacked multipliers (equalities first). Uses a tiny
/// symmetric regularization plus iterative refinement.
fn solve_equality_kkt(can: &Canonical, active: &[usize]) -> (DVector<f64>, DVector<f64>) {
    let n = can.n;
    let mg = can.me + active.len();
    let dim = n + mg;

    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (n, n)).copy_from(&can.h);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&can.c));
    for r in 0..can.me {
        for c_ in 0..n {
            m[(n + r, c_)] = can.a_eq[(r, c_)];
            m[(c_, n + r)] = can.a_eq[(r, c_)];
        }
        rhs[n + r] = can.b_eq[r];
    }
    for (k, &row) in active.iter().enumerate() {
        for c_ in 0..n {
            m[(n + can.me + k, c_)] = can.a_in[(row, c_)];
            m[(c_, n + can.me + k)] = can.a_in[(row, c_)];
        }
        rhs[n + can.me + k] = can.b_in[row];
    }

    let mut m_reg = m.clone();
    for i in 0..n {
        m_reg[(i, i)] += REG;
    }
    for i in n..dim {
        m_reg[(i, i)] -= REG;
    }
    let lu = m_reg.lu();
    let mut sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(dim));
    // Refine against the unregularized system.
    for _ in 0..3 {
        let resid = &rhs - &m * &sol;
        if resid.amax() < 1e-14 * (1.0 + rhs.amax()) {
            break;
        }
        if let Some(corr) = lu.solve(&resid) {
            sol += corr;
        } else {
            break;
        }
    }
    let x = sol.rows(0, n).into_owned();
    let w = -sol.rows(n, mg).into_owned();
    (x, w)
}

/// Active-set polish: re-solve on the constraints the interior point ended
/// on, dropping rows with negative multipliers and adding rows that get
/// violated, until the candidate satisfies both primal and dual feasibility.
fn polish(can: &Canonical, state: &IpmState) -> Option<IpmState> {
    if can.mi == 0 {
        return None;
    }
    let mut active: Vec<usize> = (0..can.mi).filter(|&i| state.z[i] >= state.s[i]).collect();
    let b_scale = 1.0 + can.b_in.amax();
    let d_scale = 1.0 + can.c.amax();

    for _ in 0..60 {
        let (x, w) = solve_equality_kkt(can, &active);
        let nu = w.rows(0, can.me).into_owned();
        let lam_act = w.rows(can.me, active.len()).into_owned();

        // Most negative multiplier among active rows -> drop that row.
        let mut worst_dual = 0.0;
        let mut drop_idx = None;
        for (k, &l) in lam_act.iter().enumerate() {
            if l < worst_dual {
                worst_dual = l;
                drop_idx = Some(k);
            }
        }
        if let Some(k) = drop_idx {
            if worst_dual < -1e-11 * d_scale {
                active.remove(k);
                continue;
            }
        }

        // Most violated inactive row -> activate it.
        let slack = &can.a_in * &x - &can.b_in;
        let mut worst_viol = 0.0;
        let mut add_idx = None;
        for i in 0..can.mi {
            if !active.contains(&i) && slack[i] < worst_viol {
                worst_viol = slack[i];
                add_idx = Some(i);
            }
        }
        if let Some(i) = add_idx {
            if worst_viol < -1e-11 * b_scale {
                active.push(i);
                active.sort_unstable();
                continue;
            }
        }

        let mut z = DVector::zeros(can.mi);
        for (k, &row) in active.iter().enumerate() {
            z[row] = lam_act[k].max(0.0);
        }
        let s = DVector::from_fn(can.mi, |i, _| slack[i].max(0.0));
        return Some(IpmState { x, y: nu, z, s });
    }
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
