//! Receding-horizon scenario MPC with a monotone cost certificate.
//!
//! Each step draws a fresh multisample and solves the scenario problem, but
//! accepts the fresh optimum only if it improves the running bound `z` by at
//! least `ε·d(x_{t−1}, X_f)`. Otherwise the previous correction sequence is
//! shifted by one step and the bound is either decreased by the distance
//! travelled or, when that would undercut the current distance, reset to 0.

use crate::error::{check_dim, Error, Result};
use crate::fhocp::{solve_fhocp, FhocpConfig, FhocpSolution, SolveStrategy};
use crate::model::UncertainModel;
use crate::rng::{Purpose, StreamKey};
use crate::samplesize::min_scenarios;
use crate::solver::{SolverSettings, Status};
use crate::terminal::TerminalSet;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Default improvement factor.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Absolute slack on the case predicates; ties go to the fresh solution.
pub const CASE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MpcsConfig {
    pub p: Option<f64>,
    pub beta: Option<f64>,
    /// Explicit scenario count; overrides `(p, β)` when set.
    pub m: Option<usize>,
    pub epsilon: f64,
    pub fhocp: FhocpConfig,
    pub seed: u64,
    pub solver: SolverSettings,
    pub strategy: SolveStrategy,
}

impl MpcsConfig {
    /// Scenario count from the sample-size bound for `(p, β)`.
    pub fn from_reliability(p: f64, beta: f64, fhocp: FhocpConfig) -> Self {
        MpcsConfig {
            p: Some(p),
            beta: Some(beta),
            m: None,
            epsilon: DEFAULT_EPSILON,
            fhocp,
            seed: 0,
            solver: SolverSettings::default(),
            strategy: SolveStrategy::default(),
        }
    }

    /// Fixed scenario count.
    pub fn from_scenarios(m: usize, fhocp: FhocpConfig) -> Self {
        MpcsConfig {
            p: None,
            beta: None,
            m: Some(m),
            ..Self::from_reliability(0.0, 0.0, fhocp)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon = {} must lie in (0, 1]", self.epsilon)));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        Ok(())
    }

    /// `M`: explicit if given, otherwise the smallest count meeting the
    /// bound for `d = N·m + 2`.
    pub fn scenario_count(&self, model: &UncertainModel) -> Result<usize> {
        if let Some(m) = self.m {
            return Ok(m);
        }
        match (self.p, self.beta) {
            (Some(p), Some(beta)) => {
                let d = self.fhocp.decision_dim(model) as u64;
                let m = min_scenarios(p, beta, d)?;
                usize::try_from(m).map_err(|_| Error::Overflow { cap: m })
            }
            _ => Err(Error::InvalidConfig("either M or both p and beta are required".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    #[serde(rename = "init")]
    Init,
    #[serde(rename = "3a")]
    A,
    #[serde(rename = "3b")]
    B,
    #[serde(rename = "3c")]
    C,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::Init => "init",
            Case::A => "3a",
            Case::B => "3b",
            Case::C => "3c",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Index of the step that produced this state.
    pub t: usize,
    pub v: DVector<f64>,
    pub z: f64,
    pub q: f64,
    pub last_case: Case,
    pub prev_x: DVector<f64>,
    pub prev_dist: f64,
}

/// Candidate `(V, z, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub v: DVector<f64>,
    pub z: f64,
    pub q: f64,
}

impl ControllerState {
    /// `z_{t−1} − ε·d(x_{t−1}, X_f)`.
    pub fn threshold(&self, epsilon: f64) -> f64 {
        self.z - epsilon * self.prev_dist
    }

    /// `(Ṽ, z̃, q̃)`: corrections shifted one step with a zero final block.
    pub fn shifted(&self, m: usize) -> Candidate {
        let len = self.v.len();
        let mut v = DVector::zeros(len);
        if len > m {
            v.rows_mut(0, len - m).copy_from(&self.v.rows(m, len - m));
        }
        Candidate {
            v,
            z: (self.z - self.prev_dist).max(0.0),
            q: self.q,
        }
    }
}

/// Which case fires. `z_star = None` stands for a failed solve (`+∞`).
pub fn select_case(threshold: f64, z_star: Option<f64>, z_tilde: f64, dist_now: f64) -> Case {
    match z_star {
        Some(z) if z <= threshold + CASE_TOL => Case::C,
        _ if z_tilde + CASE_TOL < dist_now => Case::A,
        _ => Case::B,
    }
}

/// One step's record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: usize,
    pub case: Case,
    pub z: f64,
    pub q: f64,
    pub z_star: Option<f64>,
    pub q_star: Option<f64>,
    pub dist: f64,
    pub scenarios: usize,
    pub solver_iters: u32,
    pub solver_status: Option<Status>,
}

/// Algorithm transition for an already obtained fresh solution.
///
/// `fresh = None` (or a non-solved status) counts as `z* = +∞`.
pub fn transition(
    state: &ControllerState,
    x_t: &DVector<f64>,
    dist_now: f64,
    fresh: Option<&FhocpSolution>,
    epsilon: f64,
    m: usize,
) -> (ControllerState, Case) {
    let usable = fresh.filter(|s| s.is_solved());
    let cand = state.shifted(m);
    let case = select_case(state.threshold(epsilon), usable.map(|s| s.z), cand.z, dist_now);
    let chosen = match case {
        Case::C => {
            let s = usable.expect("case C requires a fresh solution");
            Candidate {
                v: s.v_vector(),
                z: s.z.max(0.0),
                q: s.q.max(0.0),
            }
        }
        Case::A => Candidate { z: 0.0, ..cand },
        Case::B | Case::Init => cand,
    };
    let next = ControllerState {
        t: state.t + 1,
        v: chosen.v,
        z: chosen.z,
        q: chosen.q,
        last_case: case,
        prev_x: x_t.clone(),
        prev_dist: dist_now,
    };
    (next, case)
}

/// `d(x, X_f)` for `X_f = {x : xᵀ Q_f x ≤ 1}`.
pub fn distance_to_terminal(x: &DVector<f64>, q_f: &DMatrix<f64>) -> Result<f64> {
    Ok(TerminalSet::new(q_f.clone())?.distance(x))
}

/// Source of fresh scenario solutions, so the case logic can be driven by
/// synthetic optima in tests.
pub trait FreshSolve {
    fn fresh(&mut self, t: usize, x_t: &DVector<f64>) -> Result<FhocpSolution>;
}

/// Draws `ω_t` from the trial's scenario stream and solves.
pub struct ScenarioSolve<'a> {
    pub model: &'a UncertainModel,
    pub cfg: &'a MpcsConfig,
    pub scenarios: usize,
    pub trial: u64,
}

impl<'a> ScenarioSolve<'a> {
    pub fn new(model: &'a UncertainModel, cfg: &'a MpcsConfig, trial: u64) -> Result<Self> {
        cfg.validate()?;
        let scenarios = cfg.scenario_count(model)?;
        Ok(ScenarioSolve {
            model,
            cfg,
            scenarios,
            trial,
        })
    }
}

impl FreshSolve for ScenarioSolve<'_> {
    fn fresh(&mut self, t: usize, x_t: &DVector<f64>) -> Result<FhocpSolution> {
        let key = StreamKey::new(self.cfg.seed, Purpose::Scenario).trial(self.trial).step(t as u64);
        let omega = self.model.multisample(key, self.scenarios, self.cfg.fhocp.horizon);
        solve_fhocp(x_t, &omega, self.model, &self.cfg.fhocp, &self.cfg.solver, self.cfg.strategy)
    }
}

/// Controller bound to one model.
pub struct Mpcs<'a, S: FreshSolve> {
    model: &'a UncertainModel,
    epsilon: f64,
    scenarios: usize,
    horizon: usize,
    source: S,
}

impl<'a> Mpcs<'a, ScenarioSolve<'a>> {
    pub fn new(model: &'a UncertainModel, cfg: &'a MpcsConfig, trial: u64) -> Result<Self> {
        let source = ScenarioSolve::new(model, cfg, trial)?;
        Ok(Mpcs {
            model,
            epsilon: cfg.epsilon,
            scenarios: source.scenarios,
            horizon: cfg.fhocp.horizon,
            source,
        })
    }
}

impl<'a, S: FreshSolve> Mpcs<'a, S> {
    /// Controller fed by a custom solution source.
    pub fn with_source(model: &'a UncertainModel, epsilon: f64, horizon: usize, scenarios: usize, source: S) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon = {epsilon} must lie in (0, 1]")));
        }
        Ok(Mpcs {
            model,
            epsilon,
            scenarios,
            horizon,
            source,
        })
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    fn input(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let m = self.model.m();
        self.model.k_f() * x + v.rows(0, m)
    }

    /// Solves at `x_0`; a solver failure here is an error.
    pub fn init(&mut self, x0: &DVector<f64>) -> Result<(ControllerState, DVector<f64>, StepDiagnostics)> {
        check_dim("x_0", self.model.n(), x0.len())?;
        let sol = self.source.fresh(0, x0)?;
        if !sol.is_solved() {
            return Err(Error::StatusNotSolved(sol.status));
        }
        check_dim("V", self.horizon * self.model.m(), sol.v.len())?;
        let dist = self.model.terminal().distance(x0);
        let state = ControllerState {
            t: 0,
            v: sol.v_vector(),
            z: sol.z.max(0.0),
            q: sol.q.max(0.0),
            last_case: Case::Init,
            prev_x: x0.clone(),
            prev_dist: dist,
        };
        let u = self.input(x0, &state.v);
        let diag = StepDiagnostics {
            t: 0,
            case: Case::Init,
            z: state.z,
            q: state.q,
            z_star: Some(sol.z),
            q_star: Some(sol.q),
            dist,
            scenarios: self.scenarios,
            solver_iters: sol.iterations,
            solver_status: Some(sol.status),
        };
        Ok((state, u, diag))
    }

    /// One receding-horizon step at the observed state `x_t`.
    pub fn step(&mut self, state: &ControllerState, x_t: &DVector<f64>) -> Result<(ControllerState, DVector<f64>, StepDiagnostics)> {
        check_dim("x_t", self.model.n(), x_t.len())?;
        let t = state.t + 1;
        let dist = self.model.terminal().distance(x_t);
        let fresh = self.source.fresh(t, x_t).ok();
        let (next, case) = transition(state, x_t, dist, fresh.as_ref(), self.epsilon, self.model.m());
        let u = self.input(x_t, &next.v);
        let diag = StepDiagnostics {
            t,
            case,
            z: next.z,
            q: next.q,
            z_star: fresh.as_ref().filter(|s| s.is_solved()).map(|s| s.z),
            q_star: fresh.as_ref().filter(|s| s.is_solved()).map(|s| s.q),
            dist,
            scenarios: self.scenarios,
            solver_iters: fresh.as_ref().map_or(0, |s| s.iterations),
            solver_status: fresh.as_ref().map(|s| s.status),
        };
        Ok((next, u, diag))
    }
}
