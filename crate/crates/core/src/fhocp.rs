//! Scenario finite-horizon optimal control problem.
//!
//! For a state `x_t` and multisample `ω = (δ⁽¹⁾ … δ⁽ᴹ⁾)` the problem is
//!
//! ```text
//! min_{V, z, q}  z + α q
//! s.t.  Σ_{j<N} d(x⁽ⁱ⁾_j, X_f) + Σ_j v_jᵀ Λ v_j ≤ z        for all i
//!       G_x x⁽ⁱ⁾_j − g_x ≤ q·1                           j = 1..N−1
//!       G_u u⁽ⁱ⁾_j − g_u ≤ q·1                           j = 0..N−1
//!       x⁽ⁱ⁾_Nᵀ Q_f x⁽ⁱ⁾_N ≤ 1 + q,   q ≥ 0
//! ```
//!
//! with `x⁽ⁱ⁾_j` affine in `V` for the scenario's θ and γ. [`build`] lowers it
//! to a [`ConicProgram`] over the decision vector
//!
//! ```text
//! [ V (N·m) | z | q | w | (y_0, t_0) | (y_ij ∈ Rⁿ, t_ij) for i < M, 1 ≤ j < N ]
//! ```
//!
//! where `‖x_ij − y_ij‖ ≤ t_ij`, `‖Lᵀ y_ij‖ ≤ 1` (`Q_f = L Lᵀ`) encode the
//! distance epigraph (one shared pair for `j = 0`, where `x_i0 = x_t`; M
//! identical copies would make the program degenerate) and `w ≥ Σ v_jᵀ Λ v_j` is a rotated cone. The auxiliary
//! `(w, y, t)` block is existentially quantified: for fixed `(V, z, q)` it can
//! be completed iff the original constraints hold, so the number of
//! decision variables that matters for the sample-size bound is still
//! `N·m + 2`.

use crate::error::{check_dim, Error, Result};
use crate::model::{ConstraintData, Multisample, ScenarioDraw, UncertainModel};
use crate::prediction::{closed_loop, PredictionOperators};
use crate::rng::{Purpose, StreamKey};
use crate::solver::{self, ConicProgram, Cone, Residuals, SolverResult, SolverSettings, SparseMatrix, Status, VarMap};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Default violation weight.
pub const DEFAULT_ALPHA: f64 = 1e4;

/// Tolerance used when deciding whether a realization satisfies `h ≤ 0`.
pub const H_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FhocpConfig {
    pub horizon: usize,
    /// `m × m` input-correction weight.
    pub lambda: DMatrix<f64>,
    pub alpha: f64,
}

impl FhocpConfig {
    pub fn new(horizon: usize, lambda: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha = {alpha} must be positive")));
        }
        let cfg = FhocpConfig { horizon, lambda, alpha };
        cfg.lambda_factor()?;
        Ok(cfg)
    }

    /// `Λ = I`, `α = 10⁴`.
    pub fn with_defaults(model: &UncertainModel, horizon: usize) -> Result<Self> {
        Self::new(horizon, DMatrix::identity(model.m(), model.m()), DEFAULT_ALPHA)
    }

    /// Decision variables counted by the sample-size bound: `N·m + 2`.
    pub fn decision_dim(&self, model: &UncertainModel) -> usize {
        self.horizon * model.m() + 2
    }

    /// Upper factor `R` with `Rᵀ R = Λ`.
    fn lambda_factor(&self) -> Result<DMatrix<f64>> {
        let l = &self.lambda;
        if !l.is_square() || (l - l.transpose()).amax() > 1e-12 * (1.0 + l.amax()) {
            return Err(Error::CholeskyFailure("Lambda"));
        }
        let chol = l.clone().cholesky().ok_or(Error::CholeskyFailure("Lambda"))?;
        Ok(chol.l().transpose())
    }

    fn input_cost(&self, v: &DVector<f64>) -> f64 {
        let m = self.lambda.nrows();
        (0..self.horizon)
            .map(|j| {
                let vj = v.rows(j * m, m);
                (vj.transpose() * &self.lambda * vj)[(0, 0)]
            })
            .sum()
    }
}

/// Per-scenario data for a fixed `x_t`.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub ops: PredictionOperators,
    pub constraints: ConstraintData,
    /// `A_clʲ x_t + Υ_j γ` for `j = 0..=N`.
    pub free: Vec<DVector<f64>>,
    /// `K_f Φ_j + E_j`, mapping `V` to the input correction part of `u_j`.
    pub input_maps: Vec<DMatrix<f64>>,
}

impl PreparedScenario {
    pub fn new(x_t: &DVector<f64>, draw: &ScenarioDraw, model: &UncertainModel, horizon: usize) -> Result<Self> {
        check_dim("x_t", model.n(), x_t.len())?;
        check_dim("scenario horizon", horizon, draw.horizon())?;
        let (mats, constraints) = model.evaluate(&draw.theta)?;
        let a_cl = closed_loop(&mats.a, &mats.b, model.k_f())?;
        let ops = PredictionOperators::build(&a_cl, &mats.b, &mats.b_gamma, horizon)?;
        let free = ops.free_response(x_t, &draw.stacked_gamma())?;
        let m = model.m();
        let input_maps = (0..horizon)
            .map(|j| {
                let mut map = if j == 0 {
                    DMatrix::zeros(m, horizon * m)
                } else {
                    model.k_f() * &ops.phi[j - 1]
                };
                for k in 0..m {
                    map[(k, j * m + k)] += 1.0;
                }
                map
            })
            .collect();
        Ok(PreparedScenario {
            ops,
            constraints,
            free,
            input_maps,
        })
    }

    fn horizon(&self) -> usize {
        self.ops.horizon()
    }

    /// `x_j` for `j = 0..=N` under corrections `v`.
    pub fn states(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.free.len());
        out.push(self.free[0].clone());
        for j in 1..self.free.len() {
            out.push(&self.free[j] + &self.ops.phi[j - 1] * v);
        }
        out
    }

    /// `u_j = K_f x_j + v_j` for `j = 0..N−1`, given the states from [`Self::states`].
    pub fn inputs(&self, k_f: &DMatrix<f64>, states: &[DVector<f64>], v: &DVector<f64>) -> Vec<DVector<f64>> {
        let m = k_f.nrows();
        (0..self.horizon())
            .map(|j| k_f * &states[j] + v.rows(j * m, m))
            .collect()
    }
}

/// Pointwise maximum of all scenario constraint functions (`h`), using the
/// realization's own cost in place of the multisample worst case.
pub fn violation_of(
    prep: &PreparedScenario,
    v: &DVector<f64>,
    z: f64,
    q: f64,
    model: &UncertainModel,
    cfg: &FhocpConfig,
) -> f64 {
    let n_h = cfg.horizon;
    let xs = prep.states(v);
    let us = prep.inputs(model.k_f(), &xs, v);
    let terminal = model.terminal();
    let mut h = -q;
    for x in &xs[1..n_h] {
        h = h.max(prep.constraints.state_excess(x) - q);
    }
    for u in &us {
        h = h.max(prep.constraints.input_excess(u) - q);
    }
    h = h.max(terminal.level(&xs[n_h]) - 1.0 - q);
    let cost: f64 = xs[..n_h].iter().map(|x| terminal.distance(x)).sum::<f64>() + cfg.input_cost(v);
    h.max(cost - z)
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    nm: usize,
    horizon: usize,
}

impl Layout {
    fn z(&self) -> usize {
        self.nm
    }
    fn q(&self) -> usize {
        self.nm + 1
    }
    fn w(&self) -> usize {
        self.nm + 2
    }
    fn aux_start(&self) -> usize {
        self.nm + 3
    }
    /// Index of `y_ij[0]`; `t_ij` follows the `n` entries of `y_ij`. The
    /// `j = 0` state is `x_t` in every scenario, so that pair is shared.
    fn y(&self, i: usize, j: usize) -> usize {
        if j == 0 {
            self.aux_start()
        } else {
            self.aux_start() + (1 + i * (self.horizon - 1) + j - 1) * (self.n + 1)
        }
    }
    fn t(&self, i: usize, j: usize) -> usize {
        self.y(i, j) + self.n
    }
    fn num_vars(&self, scenarios: usize) -> usize {
        self.aux_start() + (1 + scenarios * (self.horizon - 1)) * (self.n + 1)
    }
}

/// Row-by-row builder of `A x + s = b`.
struct RowBuilder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl RowBuilder {
    fn next_row(&self) -> usize {
        self.b.len()
    }

    fn row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.next_row();
        for (c, v) in entries {
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.b.push(rhs);
    }
}

/// Lowers the scenario problem for already prepared scenarios.
pub fn build_prepared(scenarios: &[PreparedScenario], model: &UncertainModel, cfg: &FhocpConfig) -> Result<ConicProgram> {
    if scenarios.is_empty() {
        return Err(Error::InvalidConfig("multisample must contain at least one draw".into()));
    }
    let (n, m, nh) = (model.n(), model.m(), cfg.horizon);
    let lay = Layout { n, nm: nh * m, horizon: nh };
    let num_vars = lay.num_vars(scenarios.len());
    let r_lambda = cfg.lambda_factor()?;
    let l_t = model.terminal().chol_lower().transpose();
    let v_cols = |row: nalgebra::DVectorView<'_, f64>, scale: f64| {
        row.iter().enumerate().map(move |(c, &a)| (c, scale * a)).collect::<Vec<_>>()
    };
    let mut rb = RowBuilder {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
    };
    let mut cones = Vec::new();

    // Nonnegative block.
    rb.row([(lay.q(), -1.0)], 0.0);
    for (i, sc) in scenarios.iter().enumerate() {
        check_dim("scenario horizon", nh, sc.horizon())?;
        let mut entries: Vec<(usize, f64)> = (0..nh).map(|j| (lay.t(i, j), 1.0)).collect();
        entries.push((lay.w(), 1.0));
        entries.push((lay.z(), -1.0));
        rb.row(entries, 0.0);
    }
    for sc in scenarios {
        let cons = &sc.constraints;
        for j in 1..nh {
            let gphi = &cons.state_matrix * &sc.ops.phi[j - 1];
            let rhs = &cons.state_bound - &cons.state_matrix * &sc.free[j];
            for r in 0..cons.state_rows() {
                let mut e = v_cols(gphi.row(r).transpose().as_view(), 1.0);
                e.push((lay.q(), -1.0));
                rb.row(e, rhs[r]);
            }
        }
        for j in 0..nh {
            let gmap = &cons.input_matrix * &sc.input_maps[j];
            let rhs = &cons.input_bound - &cons.input_matrix * (model.k_f() * &sc.free[j]);
            for r in 0..cons.input_rows() {
                let mut e = v_cols(gmap.row(r).transpose().as_view(), 1.0);
                e.push((lay.q(), -1.0));
                rb.row(e, rhs[r]);
            }
        }
    }
    cones.push(Cone::Nonnegative(rb.next_row()));

    // Distance epigraphs: (t_ij, x_ij − y_ij) ∈ SOC and (1, Lᵀ y_ij) ∈ SOC.
    for (i, sc) in scenarios.iter().enumerate() {
        for j in (if i == 0 { 0 } else { 1 })..nh {
            rb.row([(lay.t(i, j), -1.0)], 0.0);
            for k in 0..n {
                let mut e = if j == 0 {
                    Vec::new()
                } else {
                    v_cols(sc.ops.phi[j - 1].row(k).transpose().as_view(), -1.0)
                };
                e.push((lay.y(i, j) + k, 1.0));
                rb.row(e, sc.free[j][k]);
            }
            cones.push(Cone::SecondOrder(n + 1));

            rb.row([], 1.0);
            for k in 0..n {
                rb.row((0..n).map(|c| (lay.y(i, j) + c, -l_t[(k, c)])), 0.0);
            }
            cones.push(Cone::SecondOrder(n + 1));
        }
    }

    // Input cost: 2 · w · ½ ≥ ‖R V‖².
    rb.row([(lay.w(), -1.0)], 0.0);
    rb.row([], 0.5);
    for blk in 0..nh {
        for k in 0..m {
            rb.row((0..m).map(|c| (blk * m + c, -r_lambda[(k, c)])), 0.0);
        }
    }
    cones.push(Cone::RotatedSecondOrder(2 + nh * m));

    // Terminal: 2 · (1 + q) · ½ ≥ ‖Lᵀ x_N‖².
    for sc in scenarios {
        rb.row([(lay.q(), -1.0)], 1.0);
        rb.row([], 0.5);
        let lphi = &l_t * &sc.ops.phi[nh - 1];
        let lfree = &l_t * &sc.free[nh];
        for k in 0..n {
            rb.row(v_cols(lphi.row(k).transpose().as_view(), -1.0), lfree[k]);
        }
        cones.push(Cone::RotatedSecondOrder(n + 2));
    }

    let mut c = vec![0.0; num_vars];
    c[lay.z()] = 1.0;
    c[lay.q()] = cfg.alpha;
    let mut var_map = VarMap::default();
    var_map.insert("V", 0..lay.nm);
    var_map.insert("z", lay.z()..lay.z() + 1);
    var_map.insert("q", lay.q()..lay.q() + 1);
    var_map.insert("w", lay.w()..lay.w() + 1);
    var_map.insert("aux", lay.aux_start()..num_vars);
    let nrows = rb.b.len();
    let prog = ConicProgram {
        c,
        a: SparseMatrix {
            nrows,
            ncols: num_vars,
            rows: rb.rows,
            cols: rb.cols,
            vals: rb.vals,
        },
        b: rb.b,
        cones,
        var_map,
    };
    prog.validate()?;
    Ok(prog)
}

/// Prepares every draw of `omega` at `x_t`.
pub fn prepare(x_t: &DVector<f64>, omega: &Multisample, model: &UncertainModel, cfg: &FhocpConfig) -> Result<Vec<PreparedScenario>> {
    if x_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("x_t must be finite".into()));
    }
    omega
        .draws
        .iter()
        .map(|d| PreparedScenario::new(x_t, d, model, cfg.horizon))
        .collect()
}

/// Lowers the scenario problem at `x_t` for the multisample `omega`.
pub fn build(x_t: &DVector<f64>, omega: &Multisample, model: &UncertainModel, cfg: &FhocpConfig) -> Result<ConicProgram> {
    let prepared = prepare(x_t, omega, model, cfg)?;
    build_prepared(&prepared, model, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FhocpSolution {
    pub v: Vec<f64>,
    pub z: f64,
    pub q: f64,
    pub status: Status,
    pub residuals: Residuals,
    pub objective: f64,
    pub iterations: u32,
    /// Scenarios present in the last program solved.
    pub scenarios_in_program: usize,
    /// Programs solved (0 when the zero solution was certified directly).
    pub solves: usize,
}

impl FhocpSolution {
    pub fn v_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }

    pub fn is_solved(&self) -> bool {
        self.status == Status::Solved
    }

    fn zero(nm: usize, scenarios: usize) -> Self {
        FhocpSolution {
            v: vec![0.0; nm],
            z: 0.0,
            q: 0.0,
            status: Status::Solved,
            residuals: Residuals::default(),
            objective: 0.0,
            iterations: 0,
            scenarios_in_program: scenarios,
            solves: 0,
        }
    }
}

/// Slices `(V, z, q)` out of a raw solver result.
pub fn extract(program: &ConicProgram, raw: &SolverResult) -> Result<FhocpSolution> {
    check_dim("raw solution", program.num_vars(), raw.x.len())?;
    if raw.status == Status::NumericalFailure {
        return Err(Error::StatusNotSolved(raw.status));
    }
    let slice = |name: &str| {
        program
            .var_map
            .get(name)
            .ok_or_else(|| Error::InvalidModel(format!("program has no variable {name:?}")))
    };
    let v = raw.x[slice("V")?].to_vec();
    let z = raw.x[slice("z")?.start];
    let mut q = raw.x[slice("q")?.start];
    if q < 0.0 && q > -H_TOL {
        q = 0.0;
    }
    Ok(FhocpSolution {
        v,
        z,
        q,
        status: raw.status,
        residuals: raw.residuals,
        objective: raw.primal_objective,
        iterations: raw.iters,
        scenarios_in_program: 0,
        solves: 1,
    })
}

/// How [`solve_fhocp`] handles large multisamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStrategy {
    /// One program containing every scenario.
    Full,
    /// Constraint generation: solve with a subset of scenarios, add the
    /// scenarios whose constraints the candidate violates, repeat. The
    /// restricted problem is a relaxation, so a candidate that satisfies
    /// every scenario is optimal for the full problem. Also returns the zero
    /// solution without solving when it is feasible for every scenario
    /// (the objective is nonnegative, so zero is then optimal).
    Incremental { initial: usize, batch: usize },
}

impl Default for SolveStrategy {
    fn default() -> Self {
        SolveStrategy::Incremental { initial: 2, batch: 2 }
    }
}

/// Builds and solves the scenario problem.
pub fn solve_fhocp(
    x_t: &DVector<f64>,
    omega: &Multisample,
    model: &UncertainModel,
    cfg: &FhocpConfig,
    settings: &SolverSettings,
    strategy: SolveStrategy,
) -> Result<FhocpSolution> {
    let prepared = prepare(x_t, omega, model, cfg)?;
    solve_prepared(&prepared, model, cfg, settings, strategy)
}

pub fn solve_prepared(
    prepared: &[PreparedScenario],
    model: &UncertainModel,
    cfg: &FhocpConfig,
    settings: &SolverSettings,
    strategy: SolveStrategy,
) -> Result<FhocpSolution> {
    let nm = cfg.horizon * model.m();
    match strategy {
        SolveStrategy::Full => {
            let prog = build_prepared(prepared, model, cfg)?;
            let raw = solver::solve(&prog, settings)?;
            let mut sol = extract(&prog, &raw)?;
            sol.scenarios_in_program = prepared.len();
            Ok(sol)
        }
        SolveStrategy::Incremental { initial, batch } => {
            let zero = DVector::zeros(nm);
            if prepared.iter().all(|p| violation_of(p, &zero, 0.0, 0.0, model, cfg) <= 0.0) {
                return Ok(FhocpSolution::zero(nm, 0));
            }
            let mut active: Vec<usize> = (0..prepared.len().min(initial.max(1))).collect();
            let mut in_active = vec![false; prepared.len()];
            active.iter().for_each(|&i| in_active[i] = true);
            let mut solves = 0;
            let mut iterations = 0;
            loop {
                let subset: Vec<PreparedScenario> = active.iter().map(|&i| prepared[i].clone()).collect();
                let prog = build_prepared(&subset, model, cfg)?;
                let raw = solver::solve(&prog, settings)?;
                let mut sol = extract(&prog, &raw)?;
                solves += 1;
                iterations += raw.iters;
                sol.solves = solves;
                sol.iterations = iterations;
                sol.scenarios_in_program = active.len();
                if !sol.is_solved() || active.len() == prepared.len() {
                    return Ok(sol);
                }
                let v = sol.v_vector();
                let tol = H_TOL * 0.1 * (1.0 + sol.z.abs());
                let mut violated: Vec<(usize, f64)> = (0..prepared.len())
                    .filter(|&i| !in_active[i])
                    .map(|i| (i, violation_of(&prepared[i], &v, sol.z, sol.q, model, cfg)))
                    .filter(|&(_, h)| h > tol)
                    .collect();
                if violated.is_empty() {
                    return Ok(sol);
                }
                violated.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                for &(i, _) in violated.iter().take(batch.max(1)) {
                    in_active[i] = true;
                    active.push(i);
                }
                active.sort_unstable();
            }
        }
    }
}

/// `h(s*, x_t, δ)` for one realization `delta`.
pub fn violation_h(
    sol: &FhocpSolution,
    x_t: &DVector<f64>,
    delta: &ScenarioDraw,
    model: &UncertainModel,
    cfg: &FhocpConfig,
) -> Result<f64> {
    let prep = PreparedScenario::new(x_t, delta, model, cfg.horizon)?;
    check_dim("V", cfg.horizon * model.m(), sol.v.len())?;
    Ok(violation_of(&prep, &sol.v_vector(), sol.z, sol.q, model, cfg))
}

/// Fraction of `count` fresh realizations with `h ≤ H_TOL`.
pub fn reliability_estimate(
    sol: &FhocpSolution,
    x_t: &DVector<f64>,
    model: &UncertainModel,
    cfg: &FhocpConfig,
    count: usize,
    key: StreamKey,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::InvalidConfig("need at least one validation draw".into()));
    }
    let key = StreamKey { purpose: Purpose::Validation, ..key };
    let omega = model.multisample(key, count, cfg.horizon);
    let mut ok = 0usize;
    for d in &omega.draws {
        if violation_h(sol, x_t, d, model, cfg)? <= H_TOL {
            ok += 1;
        }
    }
    Ok(ok as f64 / count as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{example_plant, SystemMatrices};

    pub(crate) fn scalar_model() -> UncertainModel {
        let one = DMatrix::from_element(1, 1, 1.0);
        let box_rows = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        UncertainModel::deterministic(
            "scalar",
            SystemMatrices {
                a: one.clone(),
                b: one.clone(),
                b_gamma: DMatrix::zeros(1, 1),
            },
            ConstraintData {
                state_matrix: box_rows.clone(),
                state_bound: DVector::from_element(2, 10.0),
                input_matrix: box_rows,
                input_bound: DVector::from_element(2, 10.0),
            },
            DMatrix::zeros(1, 1),
            one,
        )
        .unwrap()
    }

    fn omega(model: &UncertainModel, seed: u64, count: usize, horizon: usize) -> Multisample {
        model.multisample(StreamKey::new(seed, Purpose::Scenario), count, horizon)
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn smallest_instance_cone_layout() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 1).unwrap();
        let prog = build(&dv(&[5.0, 2.75]), &omega(&model, 1, 1, 1), &model, &cfg).unwrap();
        assert_eq!(
            prog.cones,
            vec![
                Cone::Nonnegative(4),
                Cone::SecondOrder(3),
                Cone::SecondOrder(3),
                Cone::RotatedSecondOrder(3),
                Cone::RotatedSecondOrder(4),
            ]
        );
        assert_eq!(prog.var_map.get("V"), Some(0..1));
        assert_eq!(prog.var_map.get("z"), Some(1..2));
        assert_eq!(prog.var_map.get("q"), Some(2..3));
        assert_eq!(prog.num_vars(), 3 + 1 + 3);
        assert_eq!(cfg.decision_dim(&model), 3);
    }

    #[test]
    fn origin_yields_zero_solution() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        let w = omega(&model, 2, 30, 10);
        let sol = solve_fhocp(&dv(&[0.0, 0.0]), &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        assert!(sol.is_solved());
        assert!(sol.v.iter().all(|v| v.abs() < 1e-6), "{:?}", sol.v);
        assert!(sol.z.abs() < 1e-6 && sol.q.abs() < 1e-6, "{} {}", sol.z, sol.q);
        let fast = solve_fhocp(&dv(&[0.0, 0.0]), &w, &model, &cfg, &settings(), SolveStrategy::default()).unwrap();
        assert_eq!(fast.solves, 0);
        assert_eq!((fast.z, fast.q), (0.0, 0.0));
    }

    #[test]
    fn scalar_hand_instance() {
        let model = scalar_model();
        let cfg = FhocpConfig::with_defaults(&model, 1).unwrap();
        let w = omega(&model, 3, 1, 1);
        let sol = solve_fhocp(&dv(&[3.0]), &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        assert!((sol.v[0] + 2.0).abs() < 1e-5, "{:?}", sol.v);
        assert!((sol.z - 6.0).abs() < 1e-5, "{}", sol.z);
        assert!(sol.q.abs() < 1e-5);
        let h = violation_h(&sol, &dv(&[3.0]), &w.draws[0], &model, &cfg).unwrap();
        assert!(h.abs() < 1e-5, "{h}");

        let inside = solve_fhocp(&dv(&[0.5]), &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        assert!(inside.v[0].abs() < 1e-6 && inside.z.abs() < 1e-6 && inside.q.abs() < 1e-6);
    }

    #[test]
    fn forced_violation_level_shows_in_h() {
        let model = scalar_model();
        let cfg = FhocpConfig::with_defaults(&model, 1).unwrap();
        let w = omega(&model, 3, 1, 1);
        let mut sol = solve_fhocp(&dv(&[0.5]), &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        sol.q = 10.0;
        sol.z = 1.0;
        let h = violation_h(&sol, &dv(&[0.5]), &w.draws[0], &model, &cfg).unwrap();
        assert!(h <= -1.0 + 1e-9, "{h}");
    }

    #[test]
    fn auxiliary_variables_project_to_worst_case_cost() {
        let model = example_plant();
        let nh = 4;
        let cfg = FhocpConfig::with_defaults(&model, nh).unwrap();
        let x = dv(&[3.0, -1.0]);
        let w = omega(&model, 4, 6, nh);
        let v = dv(&[-0.3, 0.2, 0.1, -0.05]);
        let q = 0.7;
        let mut prog = build(&x, &w, &model, &cfg).unwrap();
        let mut e = SparseMatrix::new(nh + 1, prog.num_vars());
        let mut f = vec![0.0; nh + 1];
        for k in 0..nh {
            e.push(k, k, 1.0);
            f[k] = v[k];
        }
        e.push(nh, nh + 1, 1.0);
        f[nh] = q;
        prog.add_equalities(&e, &f);
        let raw = solver::solve(&prog, &settings()).unwrap();
        let sol = extract(&prog, &raw).unwrap();
        let worst = w
            .draws
            .iter()
            .map(|d| {
                let p = PreparedScenario::new(&x, d, &model, nh).unwrap();
                let xs = p.states(&v);
                xs[..nh].iter().map(|s| model.terminal().distance(s)).sum::<f64>() + cfg.input_cost(&v)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((sol.z - worst).abs() < 1e-6 * (1.0 + worst), "{} vs {worst}", sol.z);
    }

    #[test]
    fn more_scenarios_never_lower_the_optimum() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        let x = dv(&[5.0, 2.75]);
        let full = omega(&model, 5, 30, 10);
        let mut prev = f64::NEG_INFINITY;
        for count in [1, 5, 15, 30] {
            let sub = Multisample {
                draws: full.draws[..count].to_vec(),
                key: full.key,
            };
            let sol = solve_fhocp(&x, &sub, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
            let obj = sol.z + cfg.alpha * sol.q;
            assert!((sol.objective - obj).abs() < 1e-6 * (1.0 + obj.abs()));
            assert!(obj >= prev - 1e-6, "{obj} < {prev}");
            prev = obj;
        }
    }

    #[test]
    fn incremental_matches_full() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        for (seed, x) in [(6, [5.0, 2.75]), (7, [-4.0, 1.0]), (8, [0.3, 0.2])] {
            let x = dv(&x);
            let w = omega(&model, seed, 120, 10);
            let a = solve_fhocp(&x, &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
            let b = solve_fhocp(&x, &w, &model, &cfg, &settings(), SolveStrategy::Incremental { initial: 10, batch: 5 }).unwrap();
            let oa = a.z + cfg.alpha * a.q;
            let ob = b.z + cfg.alpha * b.q;
            assert!((oa - ob).abs() < 1e-6 * (1.0 + oa), "{oa} vs {ob}");
            assert!((a.z - b.z).abs() < 1e-5 * (1.0 + a.z));
        }
    }

    #[test]
    fn solution_satisfies_its_own_scenarios() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        let x = dv(&[5.0, 2.75]);
        let w = omega(&model, 9, 42, 10);
        let sol = solve_fhocp(&x, &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        assert!(sol.z >= model.terminal().distance(&x) - 1e-6);
        for d in &w.draws {
            assert!(violation_h(&sol, &x, d, &model, &cfg).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn q_stays_zero_when_hard_problem_is_feasible() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        for (seed, x) in [(10, [5.0, 2.75]), (11, [2.0, -3.0])] {
            let x = dv(&x);
            let w = omega(&model, seed, 20, 10);
            let mut hard = build(&x, &w, &model, &cfg).unwrap();
            let mut e = SparseMatrix::new(1, hard.num_vars());
            e.push(0, hard.var_map.get("q").unwrap().start, 1.0);
            hard.add_equalities(&e, &[0.0]);
            let raw = solver::solve(&hard, &settings()).unwrap();
            if raw.status == Status::Solved {
                let soft = solve_fhocp(&x, &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
                assert!(soft.q <= 1e-6, "{}", soft.q);
            }
        }
    }

    #[test]
    fn deterministic_plant_is_fully_reliable() {
        let model = scalar_model();
        let cfg = FhocpConfig::with_defaults(&model, 1).unwrap();
        let w = omega(&model, 12, 1, 1);
        let sol = solve_fhocp(&dv(&[3.0]), &w, &model, &cfg, &settings(), SolveStrategy::Full).unwrap();
        let r = reliability_estimate(&sol, &dv(&[3.0]), &model, &cfg, 200, StreamKey::new(1, Purpose::Validation)).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        let model = example_plant();
        assert!(FhocpConfig::new(10, DMatrix::identity(1, 1), 0.0).is_err());
        assert!(FhocpConfig::new(0, DMatrix::identity(1, 1), 1.0).is_err());
        assert!(FhocpConfig::new(10, -DMatrix::identity(1, 1), 1.0).is_err());
        let cfg = FhocpConfig::with_defaults(&model, 3).unwrap();
        let w = omega(&model, 1, 0, 3);
        assert!(build(&dv(&[1.0, 1.0]), &w, &model, &cfg).is_err());
        let w = omega(&model, 1, 2, 3);
        assert!(matches!(
            build(&dv(&[1.0]), &w, &model, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
