//! Closed-loop and open-loop validation against the true uncertain plant.
//!
//! A trial draws one true θ (held for the whole trial) and a fresh true γ per
//! step. The finite-horizon check applies the initial optimal corrections
//! open loop for `N` steps and requires hard constraint satisfaction and
//! `x_N ∈ X_f`; the receding-horizon check runs the controller and requires
//! hard constraints over `t = 1..N+10` and `x_{N+10} ∈ X_f`. Both modes of a
//! trial share the true realization and the initial solve.

use crate::error::{check_dim, Error, Result};
use crate::fhocp::FhocpConfig;
use crate::model::{load_model, ConstraintData, ScenarioDraw, SystemMatrices, UncertainModel};
use crate::mpcs::{Case, ControllerState, Mpcs, MpcsConfig, ScenarioSolve, StepDiagnostics};
use crate::rng::{Purpose, StreamKey};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

/// Steps past the horizon used as the receding-horizon check window.
pub const RH_EXTRA_STEPS: usize = 10;

/// Trial count of the full-scale study.
pub const FULL_SCALE_TRIALS: usize = 100_000;

const STATE_TOL: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fh,
    Rh,
    Both,
}

impl Mode {
    fn fh(self) -> bool {
        matches!(self, Mode::Fh | Mode::Both)
    }

    fn rh(self) -> bool {
        matches!(self, Mode::Rh | Mode::Both)
    }
}

/// `Λ` as a scalar multiple of the identity or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl LambdaSpec {
    fn matrix(&self, m: usize) -> Result<DMatrix<f64>> {
        match self {
            LambdaSpec::Scalar(s) => Ok(DMatrix::identity(m, m) * *s),
            LambdaSpec::Matrix(rows) => {
                check_dim("lambda rows", m, rows.len())?;
                for r in rows {
                    check_dim("lambda columns", m, r.len())?;
                }
                Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            }
        }
    }
}

fn default_epsilon() -> f64 {
    crate::mpcs::DEFAULT_EPSILON
}

fn default_alpha() -> f64 {
    crate::fhocp::DEFAULT_ALPHA
}

fn default_lambda() -> LambdaSpec {
    LambdaSpec::Scalar(1.0)
}

fn default_mode() -> Mode {
    Mode::Both
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    /// `"paper-example"` or a path to a JSON model.
    pub model: String,
    pub x0: Vec<f64>,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(rename = "M", default)]
    pub m: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSpec,
    /// Closed-loop length; defaults to `N + 10`.
    #[serde(rename = "T_sim", default)]
    pub t_sim: Option<usize>,
    pub n_trials: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
}

impl TrialConfig {
    /// The benchmark setup: `x_0 = (5, 2.75)`, `N = 10`, `β = 10⁻⁹`, `Λ = 1`.
    pub fn paper_example(p: f64, n_trials: usize, seed: u64) -> Self {
        TrialConfig {
            model: crate::model::EXAMPLE_MODEL_NAME.into(),
            x0: vec![5.0, 2.75],
            horizon: 10,
            p: Some(p),
            beta: Some(1e-9),
            m: None,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            t_sim: None,
            n_trials,
            seed,
            mode: Mode::Both,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn window(&self) -> usize {
        self.horizon + RH_EXTRA_STEPS
    }

    pub fn t_sim(&self) -> usize {
        self.t_sim.unwrap_or(self.window())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.mode.rh() && self.t_sim() < self.window() {
            return Err(Error::InvalidConfig(format!(
                "T_sim = {} is shorter than the check window N + {RH_EXTRA_STEPS} = {}",
                self.t_sim(),
                self.window()
            )));
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<UncertainModel> {
        load_model(&self.model)
    }

    pub fn controller_config(&self, model: &UncertainModel) -> Result<MpcsConfig> {
        let fh = FhocpConfig::new(self.horizon, self.lambda.matrix(model.m())?, self.alpha)?;
        let mut cfg = match (self.m, self.p, self.beta) {
            (Some(m), _, _) => MpcsConfig::from_scenarios(m, fh),
            (None, Some(p), Some(beta)) => MpcsConfig::from_reliability(p, beta, fh),
            _ => return Err(Error::InvalidConfig("either M or both p and beta are required".into())),
        };
        cfg.p = self.p;
        cfg.beta = self.beta;
        cfg.epsilon = self.epsilon;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    None,
    State,
    Input,
    Terminal,
    /// The initial scenario problem could not be solved, so no control law exists.
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub theta: Vec<f64>,
    pub failure: bool,
    pub failure_kind: FailureKind,
    /// Time index of the first violated quantity (`x_t` or `u_t`).
    pub first_failure_t: Option<usize>,
}

impl TrialRecord {
    fn new(trial: u64, theta: &DVector<f64>, verdict: Option<(FailureKind, usize)>) -> Self {
        TrialRecord {
            trial,
            theta: theta.as_slice().to_vec(),
            failure: verdict.is_some(),
            failure_kind: verdict.map_or(FailureKind::None, |v| v.0),
            first_failure_t: verdict.map(|v| v.1),
        }
    }
}

/// Hard-constraint bookkeeping along one trajectory.
struct Checker<'a> {
    cons: &'a ConstraintData,
    first: Option<(FailureKind, usize)>,
}

impl Checker<'_> {
    fn flag(&mut self, kind: FailureKind, t: usize) {
        if self.first.is_none() {
            self.first = Some((kind, t));
        }
    }

    fn input(&mut self, u: &DVector<f64>, t: usize) {
        if self.cons.input_excess(u) > STATE_TOL {
            self.flag(FailureKind::Input, t);
        }
    }

    fn state(&mut self, x: &DVector<f64>, t: usize) {
        if self.cons.state_excess(x) > STATE_TOL {
            self.flag(FailureKind::State, t);
        }
    }
}

fn advance(mats: &SystemMatrices, x: &DVector<f64>, u: &DVector<f64>, gamma: &DVector<f64>) -> DVector<f64> {
    &mats.a * x + &mats.b * u + &mats.b_gamma * gamma
}

/// Applies `u_j = K_f x_j + v_j` open loop for `N` steps under `true_delta`.
pub fn simulate_fh(
    model: &UncertainModel,
    v_star: &DVector<f64>,
    true_delta: &ScenarioDraw,
    x0: &DVector<f64>,
    trial: u64,
) -> Result<TrialRecord> {
    let horizon = true_delta.horizon();
    let m = model.m();
    check_dim("V", horizon * m, v_star.len())?;
    check_dim("x_0", model.n(), x0.len())?;
    let (mats, cons) = model.evaluate(&true_delta.theta)?;
    let mut chk = Checker { cons: &cons, first: None };
    let mut x = x0.clone();
    for j in 0..horizon {
        let u = model.k_f() * &x + v_star.rows(j * m, m);
        chk.input(&u, j);
        x = advance(&mats, &x, &u, &true_delta.gamma_at(j));
        chk.state(&x, j + 1);
    }
    if !model.terminal().contains(&x) {
        chk.flag(FailureKind::Terminal, horizon);
    }
    Ok(TrialRecord::new(trial, &true_delta.theta, chk.first))
}

/// One row of a closed-loop trace; the last row carries the final state only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub diag: Option<StepDiagnostics>,
}

/// Writes `t, x1..xn, u1..um, case, z, q, z_star, q_star, dist, solver_iters`.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow], n: usize, m: usize) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend(["case", "z", "q", "z_star", "q_star", "dist", "solver_iters"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
    for r in rows {
        let mut cells = vec![r.t.to_string()];
        cells.extend(r.x.iter().map(|v| format!("{v:e}")));
        match &r.u {
            Some(u) => cells.extend(u.iter().map(|v| format!("{v:e}"))),
            None => cells.extend(std::iter::repeat_n(String::new(), m)),
        }
        match &r.diag {
            Some(d) => cells.extend([
                d.case.label().to_string(),
                format!("{:e}", d.z),
                format!("{:e}", d.q),
                opt(d.z_star),
                opt(d.q_star),
                format!("{:e}", d.dist),
                d.solver_iters.to_string(),
            ]),
            None => cells.extend(std::iter::repeat_n(String::new(), 7)),
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Everything a trial produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub fh: Option<TrialRecord>,
    pub rh: Option<TrialRecord>,
    /// Closed-loop trace (receding-horizon mode only).
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// True realization of a trial: θ and `γ_0 … γ_{T−1}`.
pub fn true_realization(model: &UncertainModel, seed: u64, trial: u64, steps: usize) -> ScenarioDraw {
    let mut s = StreamKey::new(seed, Purpose::TrueTheta).trial(trial).stream();
    let theta = model.sample_theta(&mut s);
    let mut gamma = DMatrix::zeros(steps, model.m_gamma());
    for t in 0..steps {
        let mut g = StreamKey::new(seed, Purpose::TrueGamma).trial(trial).step(t as u64).stream();
        gamma.set_row(t, &model.sample_gamma(&mut g).transpose());
    }
    ScenarioDraw { theta, gamma }
}

/// Runs one trial in the configured mode(s).
pub fn run_trial(model: &UncertainModel, cfg: &TrialConfig, ctl_cfg: &MpcsConfig, trial: u64) -> Result<TrialOutcome> {
    let x0 = DVector::from_column_slice(&cfg.x0);
    check_dim("x_0", model.n(), x0.len())?;
    let t_sim = if cfg.mode.rh() { cfg.t_sim() } else { cfg.horizon };
    let truth = true_realization(model, cfg.seed, trial, t_sim.max(cfg.horizon));
    let mut ctl = Mpcs::new(model, ctl_cfg, trial)?;
    let (state0, u0, diag0) = match ctl.init(&x0) {
        Ok(v) => v,
        Err(Error::StatusNotSolved(_)) => {
            let rec = TrialRecord::new(trial, &truth.theta, Some((FailureKind::Solver, 0)));
            return Ok(TrialOutcome {
                fh: cfg.mode.fh().then(|| rec.clone()),
                rh: cfg.mode.rh().then_some(rec),
                trace: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let fh = if cfg.mode.fh() {
        let fh_delta = ScenarioDraw {
            theta: truth.theta.clone(),
            gamma: truth.gamma.rows(0, cfg.horizon).into_owned(),
        };
        Some(simulate_fh(model, &state0.v, &fh_delta, &x0, trial)?)
    } else {
        None
    };
    let (rh, trace) = if cfg.mode.rh() {
        let (rec, trace) = closed_loop(model, &mut ctl, &truth, &x0, (state0, u0, diag0), cfg.window(), trial)?;
        (Some(rec), trace)
    } else {
        (None, Vec::new())
    };
    Ok(TrialOutcome { fh, rh, trace })
}

fn closed_loop(
    model: &UncertainModel,
    ctl: &mut Mpcs<'_, ScenarioSolve<'_>>,
    truth: &ScenarioDraw,
    x0: &DVector<f64>,
    first: (ControllerState, DVector<f64>, StepDiagnostics),
    window: usize,
    trial: u64,
) -> Result<(TrialRecord, Vec<TraceRow>)> {
    let (mats, cons) = model.evaluate(&truth.theta)?;
    let mut chk = Checker { cons: &cons, first: None };
    let t_sim = truth.horizon();
    let (mut state, mut u, mut diag) = first;
    let mut x = x0.clone();
    let mut trace = Vec::with_capacity(t_sim + 1);
    for t in 0..t_sim {
        if t < window {
            chk.input(&u, t);
        }
        trace.push(TraceRow {
            t,
            x: x.as_slice().to_vec(),
            u: Some(u.as_slice().to_vec()),
            diag: Some(diag.clone()),
        });
        x = advance(&mats, &x, &u, &truth.gamma_at(t));
        if t + 1 <= window {
            chk.state(&x, t + 1);
        }
        if t + 1 == window && !model.terminal().contains(&x) {
            chk.flag(FailureKind::Terminal, window);
        }
        if t + 1 < t_sim {
            (state, u, diag) = ctl.step(&state, &x)?;
        }
    }
    trace.push(TraceRow {
        t: t_sim,
        x: x.as_slice().to_vec(),
        u: None,
        diag: None,
    });
    Ok((TrialRecord::new(trial, &truth.theta, chk.first), trace))
}

/// Single closed-loop (and/or open-loop) run of trial 0, for inspection.
pub fn simulate(cfg: &TrialConfig) -> Result<TrialOutcome> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let ctl_cfg = cfg.controller_config(&model)?;
    run_trial(&model, cfg, &ctl_cfg, 0)
}

/// Per-mode failure tallies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeTally {
    pub n_failures: usize,
    pub failure_kinds: BTreeMap<FailureKind, usize>,
}

impl ModeTally {
    fn add(&mut self, rec: &TrialRecord) {
        if rec.failure {
            self.n_failures += 1;
            *self.failure_kinds.entry(rec.failure_kind).or_default() += 1;
        }
    }

    pub fn p_hat(&self, n_trials: usize) -> f64 {
        (n_trials - self.n_failures) as f64 / n_trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat_fh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat_rh: Option<f64>,
    pub n_trials: usize,
    /// Failures per mode (`"fh"`, `"rh"`).
    pub n_failures: BTreeMap<String, usize>,
    pub failure_kinds: BTreeMap<String, BTreeMap<FailureKind, usize>>,
    #[serde(rename = "M")]
    pub m: usize,
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// Runs `cfg.n_trials` independent trials in parallel and aggregates them.
pub fn monte_carlo(cfg: &TrialConfig) -> Result<Summary> {
    monte_carlo_with(cfg, |_| {})
}

/// [`monte_carlo`] with a hook called on every finished trial.
pub fn monte_carlo_with<F>(cfg: &TrialConfig, on_trial: F) -> Result<Summary>
where
    F: Fn(&TrialOutcome) + Sync,
{
    let model = cfg.load_model()?;
    monte_carlo_on(&model, cfg, on_trial)
}

/// Monte Carlo study on an already constructed model (`cfg.model` is ignored).
pub fn monte_carlo_on<F>(model: &UncertainModel, cfg: &TrialConfig, on_trial: F) -> Result<Summary>
where
    F: Fn(&TrialOutcome) + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let ctl_cfg = cfg.controller_config(model)?;
    let m = ctl_cfg.scenario_count(model)?;
    let trial_cfg = TrialConfig {
        t_sim: Some(cfg.window()),
        ..cfg.clone()
    };
    let outcomes: Vec<TrialOutcome> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut out = run_trial(model, &trial_cfg, &ctl_cfg, trial)?;
            out.trace.clear();
            on_trial(&out);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (mut fh, mut rh) = (ModeTally::default(), ModeTally::default());
    for o in &outcomes {
        if let Some(r) = &o.fh {
            fh.add(r);
        }
        if let Some(r) = &o.rh {
            rh.add(r);
        }
    }
    let mut n_failures = BTreeMap::new();
    let mut failure_kinds = BTreeMap::new();
    if cfg.mode.fh() {
        n_failures.insert("fh".to_string(), fh.n_failures);
        failure_kinds.insert("fh".to_string(), fh.failure_kinds.clone());
    }
    if cfg.mode.rh() {
        n_failures.insert("rh".to_string(), rh.n_failures);
        failure_kinds.insert("rh".to_string(), rh.failure_kinds.clone());
    }
    Ok(Summary {
        p_hat_fh: cfg.mode.fh().then(|| fh.p_hat(cfg.n_trials)),
        p_hat_rh: cfg.mode.rh().then(|| rh.p_hat(cfg.n_trials)),
        n_trials: cfg.n_trials,
        n_failures,
        failure_kinds,
        m,
        p: cfg.p,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        seed: cfg.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `√(p̂(1−p̂)/n)`.
pub fn binomial_se(p_hat: f64, n: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Whether a trace never fired case 3.a after initialization.
pub fn never_reset(trace: &[TraceRow]) -> bool {
    trace.iter().filter_map(|r| r.diag.as_ref()).all(|d| d.case != Case::A)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhocp::{solve_fhocp, SolveStrategy};
    use crate::model::{example_plant, IndependentDisturbance, ScalarDist};
    use crate::solver::SolverSettings;
    use std::sync::Arc;

    fn zero_uncertainty() -> UncertainModel {
        let plant = example_plant();
        plant
            .with_theta(vec![ScalarDist::fixed(0.0); 7])
            .unwrap()
            .with_disturbance(Arc::new(IndependentDisturbance(vec![ScalarDist::fixed(0.0); 2])))
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn scalar_open_loop_lands_in_terminal_set() {
        let model = crate::fhocp::tests::scalar_model();
        let delta = ScenarioDraw {
            theta: DVector::zeros(0),
            gamma: DMatrix::zeros(1, 1),
        };
        let rec = simulate_fh(&model, &dv(&[-2.0]), &delta, &dv(&[3.0]), 0).unwrap();
        assert!(!rec.failure);
        assert_eq!(rec.failure_kind, FailureKind::None);
        let bad = simulate_fh(&model, &dv(&[-1.0]), &delta, &dv(&[3.0]), 0).unwrap();
        assert_eq!((bad.failure_kind, bad.first_failure_t), (FailureKind::Terminal, Some(1)));
        let big = simulate_fh(&model, &dv(&[-15.0]), &delta, &dv(&[3.0]), 0).unwrap();
        assert_eq!((big.failure_kind, big.first_failure_t), (FailureKind::Input, Some(0)));
    }

    #[test]
    fn solved_scenario_is_not_a_failure() {
        let model = example_plant();
        let cfg = FhocpConfig::with_defaults(&model, 10).unwrap();
        let x0 = dv(&[5.0, 2.75]);
        let mut checked = 0;
        for seed in 0..5 {
            let w = model.multisample(StreamKey::new(seed, Purpose::Scenario), 42, 10);
            let sol = solve_fhocp(&x0, &w, &model, &cfg, &SolverSettings::default(), SolveStrategy::default()).unwrap();
            if sol.q > 1e-9 {
                continue;
            }
            for d in &w.draws {
                let rec = simulate_fh(&model, &sol.v_vector(), d, &x0, 0).unwrap();
                assert!(!rec.failure, "{rec:?}");
            }
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn terminal_set_is_invariant_without_uncertainty() {
        let model = example_plant();
        let delta = ScenarioDraw {
            theta: DVector::zeros(7),
            gamma: DMatrix::zeros(10, 2),
        };
        let rec = simulate_fh(&model, &DVector::zeros(10), &delta, &dv(&[1.0, 1.0]), 0).unwrap();
        assert!(model.terminal().contains(&dv(&[1.0, 1.0])));
        assert!(!rec.failure);
    }

    #[test]
    fn deterministic_closed_loop_converges() {
        let model = zero_uncertainty();
        let mut cfg = TrialConfig::paper_example(0.3, 1, 3);
        cfg.mode = Mode::Rh;
        let ctl_cfg = cfg.controller_config(&model).unwrap();
        let out = run_trial(&model, &cfg, &ctl_cfg, 0).unwrap();
        let rec = out.rh.unwrap();
        assert!(!rec.failure, "{rec:?}");
        assert_eq!(out.trace.len(), cfg.window() + 1);
        assert_eq!(out.trace.iter().filter(|r| r.diag.is_some()).count(), cfg.window());
        assert!(model.terminal().contains(&dv(&out.trace.last().unwrap().x)));
    }

    #[test]
    fn zero_uncertainty_study_never_fails() {
        let model = zero_uncertainty();
        let mut cfg = TrialConfig::paper_example(0.05, 3, 4);
        cfg.mode = Mode::Both;
        let s = monte_carlo_on(&model, &cfg, |_| {}).unwrap();
        assert_eq!(s.p_hat_fh, Some(1.0));
        assert_eq!(s.p_hat_rh, Some(1.0));
        assert_eq!(s.m, 23);
    }

    #[test]
    fn trials_are_reproducible() {
        let model = example_plant();
        let mut cfg = TrialConfig::paper_example(0.05, 1, 11);
        cfg.mode = Mode::Both;
        let ctl_cfg = cfg.controller_config(&model).unwrap();
        let a = run_trial(&model, &cfg, &ctl_cfg, 5).unwrap();
        let b = run_trial(&model, &cfg, &ctl_cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&model, &cfg, &ctl_cfg, 6).unwrap();
        assert_ne!(a.rh.unwrap().theta, c.rh.unwrap().theta);
    }

    #[test]
    fn p_hat_formula() {
        let mut t = ModeTally::default();
        let fail = TrialRecord::new(0, &DVector::zeros(0), Some((FailureKind::State, 3)));
        let ok = TrialRecord::new(0, &DVector::zeros(0), None);
        for i in 0..100 {
            t.add(if i < 7 { &fail } else { &ok });
        }
        assert!((t.p_hat(100) - 0.93).abs() < 1e-15);
        assert_eq!(t.failure_kinds[&FailureKind::State], 7);
    }

    #[test]
    fn config_json_schema() {
        let text = r#"{"model": "paper-example", "x0": [5, 2.75], "N": 10, "p": 0.95,
            "beta": 1e-9, "epsilon": 0.1, "alpha": 1e4, "lambda": 1, "T_sim": 20,
            "n_trials": 10, "seed": 7, "mode": "rh"}"#;
        let cfg = TrialConfig::from_json(text).unwrap();
        assert_eq!((cfg.horizon, cfg.t_sim(), cfg.mode, cfg.m), (10, 20, Mode::Rh, None));
        cfg.validate().unwrap();
        let short = TrialConfig { t_sim: Some(15), ..cfg.clone() };
        assert!(short.validate().is_err());
        let explicit = TrialConfig::from_json(r#"{"model": "paper-example", "x0": [5, 2.75], "N": 10,
            "M": 890, "lambda": [[2.0]], "n_trials": 1, "seed": 0, "mode": "fh"}"#)
        .unwrap();
        let model = example_plant();
        let c = explicit.controller_config(&model).unwrap();
        assert_eq!(c.scenario_count(&model).unwrap(), 890);
        assert_eq!(c.fhocp.lambda[(0, 0)], 2.0);
    }

    #[test]
    fn trace_csv_layout() {
        let model = zero_uncertainty();
        let mut cfg = TrialConfig::paper_example(0.05, 1, 3);
        cfg.mode = Mode::Rh;
        let ctl_cfg = cfg.controller_config(&model).unwrap();
        let out = run_trial(&model, &cfg, &ctl_cfg, 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace, 2, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,u1,case,z,q,z_star,q_star,dist,solver_iters");
        assert_eq!(lines.len(), out.trace.len() + 1);
        assert!(lines[1].starts_with("0,5e0,2.75e0,"));
        assert!(lines[1].contains(",init,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
    }
}
