//! Self-contained LP machinery for the restricted master problems.
//!
//! `solve_lp` is a bounded-variable revised simplex with a dense basis
//! inverse, two phases via artificial variables, and Bland's rule as an
//! anti-cycling fallback. `solve_ip_pool` is a small exact branch-and-bound
//! over an explicit pool of binary columns with LP bounding.

use std::time::{Duration, Instant};

pub const FEAS_TOL: f64 = 1e-7;
pub const INT_TOL: f64 = 1e-6;
pub const DUAL_GAP_TOL: f64 = 1e-6;
const PIVOT_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;
const DEGENERATE_PIVOT_LIMIT: usize = 1000;
const MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Sparse row: (variable index, coefficient).
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub costs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    /// Minimization problem over `num_vars` variables, all with bounds [0, inf).
    pub fn new(num_vars: usize, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), num_vars);
        LinearProgram {
            num_vars,
            costs,
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, c)| j < self.num_vars && c.is_finite()));
        self.rows.push(Constraint { coeffs, sense, rhs });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One dual per constraint row, in input order.
    pub duals: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("numerical failure in simplex: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize), // row index in the basis
    AtLower,
    AtUpper,
    Free, // nonbasic at value zero
}

struct Tableau {
    m: usize,
    /// Column-major sparse matrix over all variables (structural, slack, artificial).
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    /// Current values of every variable.
    value: Vec<f64>,
}

impl Tableau {
    fn nonbasic_value(lower: f64, upper: f64) -> (VarState, f64) {
        if lower.is_finite() {
            (VarState::AtLower, lower)
        } else if upper.is_finite() {
            (VarState::AtUpper, upper)
        } else {
            (VarState::Free, 0.0)
        }
    }

    fn col_times_binv(&self, j: usize) -> Vec<f64> {
        // w = B^-1 * A_j
        let mut w = vec![0.0; self.m];
        for &(i, a) in &self.cols[j] {
            if a == 0.0 {
                continue;
            }
            for r in 0..self.m {
                w[r] += self.binv[r][i] * a;
            }
        }
        w
    }

    fn recompute_basic_values(&mut self) {
        // x_B = B^-1 (b - A_N x_N)
        let mut resid = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            match self.state[j] {
                VarState::Basic(_) => {}
                _ => {
                    let v = self.value[j];
                    if v != 0.0 {
                        for &(i, a) in col {
                            resid[i] -= a * v;
                        }
                    }
                }
            }
        }
        for r in 0..self.m {
            let mut x = 0.0;
            for i in 0..self.m {
                x += self.binv[r][i] * resid[i];
            }
            self.value[self.basis[r]] = x;
        }
    }

    fn refactorize(&mut self) -> Result<(), LpError> {
        // Dense inversion of the basis matrix by Gauss-Jordan with partial pivoting.
        let m = self.m;
        let mut a = vec![vec![0.0; m]; m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i][r] = v;
            }
        }
        let mut inv = vec![vec![0.0; m]; m];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
                .unwrap();
            if a[piv][col].abs() < 1e-12 {
                return Err(LpError::NumericalFailure(format!(
                    "singular basis at column {col}"
                )));
            }
            a.swap(col, piv);
            inv.swap(col, piv);
            let d = a[col][col];
            for k in 0..m {
                a[col][k] /= d;
                inv[col][k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r][col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r][k] -= f * a[col][k];
                            inv[r][k] -= f * inv[col][k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basic_values();
        Ok(())
    }

    fn duals(&self, costs: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            for (r, &bj) in self.basis.iter().enumerate() {
                let c = costs[bj];
                if c != 0.0 {
                    y[i] += c * self.binv[r][i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], costs: &[f64]) -> f64 {
        let mut d = costs[j];
        for &(i, a) in &self.cols[j] {
            d -= y[i] * a;
        }
        d
    }

    /// Reduced cost plus the magnitude of the terms that were summed to get it,
    /// used to scale the optimality tolerance (cancellation between large costs
    /// leaves absolute noise far above a fixed tolerance).
    fn reduced_cost_scaled(&self, j: usize, y: &[f64], costs: &[f64]) -> (f64, f64) {
        let mut d = costs[j];
        let mut scale = costs[j].abs();
        for &(i, a) in &self.cols[j] {
            let t = y[i] * a;
            d -= t;
            scale += t.abs();
        }
        (d, RC_TOL * (1.0 + scale))
    }

    /// One simplex run with the given cost vector. Returns false on unboundedness.
    fn optimize(&mut self, costs: &[f64]) -> Result<bool, LpError> {
        let mut degenerate_streak = 0usize;
        let mut pivots_since_refactor = 0usize;
        for _iter in 0..MAX_ITERS {
            let bland = degenerate_streak >= DEGENERATE_PIVOT_LIMIT;
            let y = self.duals(costs);

            // Entering variable.
            let mut entering: Option<(usize, f64, f64)> = None; // (var, rc, dir)
            for j in 0..self.cols.len() {
                let (rc, dir) = match self.state[j] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => {
                        let (rc, tol) = self.reduced_cost_scaled(j, &y, costs);
                        if rc < -tol {
                            (rc, 1.0)
                        } else {
                            continue;
                        }
                    }
                    VarState::AtUpper => {
                        let (rc, tol) = self.reduced_cost_scaled(j, &y, costs);
                        if rc > tol {
                            (rc, -1.0)
                        } else {
                            continue;
                        }
                    }
                    VarState::Free => {
                        let (rc, tol) = self.reduced_cost_scaled(j, &y, costs);
                        if rc < -tol {
                            (rc, 1.0)
                        } else if rc > tol {
                            (rc, -1.0)
                        } else {
                            continue;
                        }
                    }
                };
                if bland {
                    entering = Some((j, rc, dir));
                    break;
                }
                match entering {
                    Some((_, best, _)) if rc.abs() <= best.abs() => {}
                    _ => entering = Some((j, rc, dir)),
                }
            }

            let Some((j_in, _rc, dir)) = entering else {
                return Ok(true); // optimal
            };

            // Ratio test.
            let w = self.col_times_binv(j_in);
            let own_range = self.upper[j_in] - self.lower[j_in];
            let mut limit = if own_range.is_finite() { own_range } else { f64::INFINITY };
            let mut leaving: Option<(usize, VarState)> = None; // (row, bound hit)
            for r in 0..self.m {
                let rate = -w[r] * dir; // d x_basic[r] / d step
                if rate.abs() < PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[r];
                let xv = self.value[bj];
                let (room, hit) = if rate > 0.0 {
                    (self.upper[bj] - xv, VarState::AtUpper)
                } else {
                    (xv - self.lower[bj], VarState::AtLower)
                };
                if !room.is_finite() {
                    continue;
                }
                let step = (room.max(0.0)) / rate.abs();
                let better = match leaving {
                    None => step < limit - 1e-12,
                    Some((cur, _)) => {
                        if bland {
                            step < limit - 1e-12
                                || (step <= limit + 1e-12 && self.basis[r] < self.basis[cur])
                        } else {
                            step < limit - 1e-12
                                || (step <= limit + 1e-12 && w[r].abs() > w[cur].abs())
                        }
                    }
                };
                if step <= limit + 1e-12 && better {
                    limit = step.min(limit);
                    leaving = Some((r, hit));
                }
            }

            if !limit.is_finite() {
                return Ok(false); // unbounded ray
            }

            if limit <= PIVOT_TOL {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }

            match leaving {
                None => {
                    // Bound flip: the entering variable moves to its other bound.
                    let step = limit;
                    self.value[j_in] += dir * step;
                    self.state[j_in] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                    for r in 0..self.m {
                        let bj = self.basis[r];
                        self.value[bj] -= w[r] * dir * step;
                    }
                }
                Some((r_out, hit)) => {
                    let step = limit;
                    let leaving_var = self.basis[r_out];
                    // Update all basic values, then swap.
                    for r in 0..self.m {
                        let bj = self.basis[r];
                        self.value[bj] -= w[r] * dir * step;
                    }
                    self.value[j_in] += dir * step;
                    self.value[leaving_var] = match hit {
                        VarState::AtLower => self.lower[leaving_var],
                        _ => self.upper[leaving_var],
                    };
                    self.state[leaving_var] = hit;
                    self.state[j_in] = VarState::Basic(r_out);
                    self.basis[r_out] = j_in;

                    // Product-form update of B^-1.
                    let piv = w[r_out];
                    if piv.abs() < PIVOT_TOL {
                        return Err(LpError::NumericalFailure(format!(
                            "pivot element {piv:.3e} below tolerance"
                        )));
                    }
                    for k in 0..self.m {
                        self.binv[r_out][k] /= piv;
                    }
                    for r in 0..self.m {
                        if r != r_out && w[r].abs() > 0.0 {
                            let f = w[r];
                            for k in 0..self.m {
                                self.binv[r][k] -= f * self.binv[r_out][k];
                            }
                        }
                    }
                    pivots_since_refactor += 1;
                    if pivots_since_refactor >= 64 {
                        self.refactorize()?;
                        pivots_since_refactor = 0;
                    }
                }
            }
        }
        Err(LpError::NumericalFailure("simplex iteration limit reached".into()))
    }
}

/// Solves the LP to optimality, returning primal values, row duals, and the objective.
///
/// Duals follow the minimization convention: `>=` rows carry nonnegative
/// duals and `<=` rows carry nonpositive duals. Strong duality and
/// complementary slackness are verified on every optimal result.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars;
    let m = lp.rows.len();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut rhs = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            cols[j].push((i, a));
        }
        rhs.push(row.rhs);
    }
    // Slack per row: a.x + s = b.
    for row in &lp.rows {
        let (lo, hi) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        cols.push(vec![(cols.len() - n, 1.0)]);
        lower.push(lo);
        upper.push(hi);
    }
    // Fix slack column row indices (the trick above computed them during push).
    for (k, col) in cols.iter_mut().enumerate().skip(n) {
        *col = vec![(k - n, 1.0)];
    }

    let mut state = Vec::with_capacity(n + m);
    let mut value = Vec::with_capacity(n + m);
    for j in 0..n {
        let (st, v) = Tableau::nonbasic_value(lower[j], upper[j]);
        state.push(st);
        value.push(v);
    }

    // Slack basis; rows whose slack value violates its bounds get an artificial.
    let mut basis = Vec::with_capacity(m);
    let mut resid = rhs.clone();
    for j in 0..n {
        if value[j] != 0.0 {
            for &(i, a) in &cols[j] {
                resid[i] -= a * value[j];
            }
        }
    }
    let mut artificials = Vec::new();
    let mut pending: Vec<(usize, f64)> = Vec::new(); // (row, residual after clamping)
    for i in 0..m {
        let s = n + i;
        if resid[i] >= lower[s] - FEAS_TOL && resid[i] <= upper[s] + FEAS_TOL {
            basis.push(s);
            state.push(VarState::Basic(i));
            value.push(resid[i].clamp(lower[s].max(f64::NEG_INFINITY), upper[s]));
        } else {
            // Clamp the slack to its nearest bound and cover the rest artificially.
            let sv = if resid[i] > upper[s] { upper[s] } else { lower[s] };
            state.push(if sv == upper[s] { VarState::AtUpper } else { VarState::AtLower });
            value.push(sv);
            basis.push(usize::MAX); // patched below once the artificial exists
            pending.push((i, resid[i] - sv));
        }
    }
    for (i, res) in pending {
        let a = cols.len();
        cols.push(vec![(i, if res >= 0.0 { 1.0 } else { -1.0 })]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
        state.push(VarState::Basic(i));
        value.push(res.abs());
        basis[i] = a;
        artificials.push(a);
    }

    let mut binv = vec![vec![0.0; m]; m];
    for (i, row) in binv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    // Artificial columns with coefficient -1 invert the identity row.
    for (r, &bj) in basis.iter().enumerate() {
        if bj >= n + m && cols[bj][0].1 < 0.0 {
            binv[r][r] = -1.0;
        }
    }

    let mut t = Tableau { m, cols, lower, upper, rhs, state, basis, binv, value };

    if !artificials.is_empty() {
        let mut phase1 = vec![0.0; t.cols.len()];
        for &a in &artificials {
            phase1[a] = 1.0;
        }
        if !t.optimize(&phase1)? {
            return Err(LpError::NumericalFailure("phase-1 reported unbounded".into()));
        }
        let infeas: f64 = artificials.iter().map(|&a| t.value[a]).sum();
        if infeas > 1e-6 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: vec![0.0; n],
                duals: vec![0.0; m],
                objective: f64::INFINITY,
            });
        }
        for &a in &artificials {
            t.lower[a] = 0.0;
            t.upper[a] = 0.0;
        }
    }

    let mut phase2 = vec![0.0; t.cols.len()];
    phase2[..n].copy_from_slice(&lp.costs);
    if !t.optimize(&phase2)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            primal: vec![0.0; n],
            duals: vec![0.0; m],
            objective: f64::NEG_INFINITY,
        });
    }

    t.refactorize()?;
    let y = t.duals(&phase2);
    let primal: Vec<f64> = t.value[..n].to_vec();
    let objective: f64 = primal.iter().zip(&lp.costs).map(|(x, c)| x * c).sum();

    // Strong duality: dual objective = y.b + sum of reduced costs at active finite bounds.
    let mut dual_obj: f64 = y.iter().zip(&t.rhs).map(|(yi, bi)| yi * bi).sum();
    for j in 0..n {
        match t.state[j] {
            VarState::AtLower if t.lower[j] != 0.0 => {
                dual_obj += t.reduced_cost(j, &y, &phase2) * t.lower[j];
            }
            VarState::AtUpper if t.upper[j] != 0.0 => {
                dual_obj += t.reduced_cost(j, &y, &phase2) * t.upper[j];
            }
            _ => {}
        }
    }
    if (objective - dual_obj).abs() > DUAL_GAP_TOL * (1.0 + objective.abs()) {
        return Err(LpError::NumericalFailure(format!(
            "duality gap {:.3e} exceeds tolerance (primal {objective:.9}, dual {dual_obj:.9})",
            (objective - dual_obj).abs()
        )));
    }
    // Complementary slackness: a row with nonzero dual must be tight.
    for (i, row) in lp.rows.iter().enumerate() {
        let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * primal[j]).sum();
        let slack = row.rhs - lhs;
        if y[i].abs() > 1e-6 && slack.abs() > 1e-5 * (1.0 + row.rhs.abs()) {
            return Err(LpError::NumericalFailure(format!(
                "complementary slackness violated on row {i} (dual {:.3e}, slack {:.3e})",
                y[i], slack
            )));
        }
    }

    Ok(LpSolution { status: LpStatus::Optimal, primal, duals: y, objective })
}

/// Exact branch-and-bound over an explicit pool of binary columns.
///
/// Returns the best integer point found (variable values) together with a
/// valid lower bound on the optimum. Depth-first, branching on the most
/// fractional variable; deterministic for fixed inputs within the limit.
pub fn solve_ip_pool(
    costs: &[f64],
    rows: &[Constraint],
    time_limit: Duration,
) -> Result<(Option<(Vec<f64>, f64)>, f64), LpError> {
    let n = costs.len();
    let start = Instant::now();

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut open_bound = f64::INFINITY; // best bound among abandoned nodes
    // Stack of (fixings, parent bound); fixings as (var, value).
    let mut stack: Vec<(Vec<(usize, f64)>, f64)> = vec![(Vec::new(), f64::NEG_INFINITY)];

    while let Some((fixings, parent_bound)) = stack.pop() {
        if start.elapsed() > time_limit {
            open_bound = open_bound.min(parent_bound);
            for (_, b) in &stack {
                open_bound = open_bound.min(*b);
            }
            break;
        }
        if let Some((_, ub)) = &incumbent {
            if parent_bound >= ub - 1e-9 {
                continue;
            }
        }

        let mut lp = LinearProgram::new(n, costs.to_vec());
        lp.upper = vec![1.0; n];
        lp.rows = rows.to_vec();
        for &(j, v) in &fixings {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        if let Some((_, ub)) = &incumbent {
            if sol.objective >= ub - 1e-9 {
                continue;
            }
        }

        // Most fractional variable.
        let mut branch: Option<(usize, f64)> = None;
        for (j, &x) in sol.primal.iter().enumerate() {
            let frac = (x - x.round()).abs();
            if frac > INT_TOL {
                match branch {
                    Some((_, best)) if frac <= best => {}
                    _ => branch = Some((j, frac)),
                }
            }
        }
        match branch {
            None => {
                let xs: Vec<f64> = sol.primal.iter().map(|x| x.round()).collect();
                incumbent = Some((xs, sol.objective));
            }
            Some((j, _)) => {
                // Push 0-branch first so the 1-branch is explored first (DFS).
                let mut f0 = fixings.clone();
                f0.push((j, 0.0));
                let mut f1 = fixings;
                f1.push((j, 1.0));
                stack.push((f0, sol.objective));
                stack.push((f1, sol.objective));
            }
        }
    }

    let bound = match &incumbent {
        Some((_, ub)) => ub.min(open_bound),
        None => {
            if open_bound.is_finite() {
                open_bound
            } else if stack.is_empty() && open_bound == f64::INFINITY {
                f64::INFINITY // proven infeasible
            } else {
                open_bound
            }
        }
    };
    Ok((incumbent, bound))
}
