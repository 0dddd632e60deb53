//! Uncertain discrete-time LTI plant `x⁺ = A(θ)x + B(θ)u + B_γ(θ)γ` with
//! θ-dependent polyhedral state/input constraints and an ellipsoidal
//! terminal set.

mod example;
mod json;

pub use example::{example_plant, example_gamma, ExampleDisturbance, ExamplePlant};
pub use json::{load_model, ModelSpec, EXAMPLE_MODEL_NAME};

use crate::error::{check_dim, Error, Result};
use crate::rng::{Stream, StreamKey};
use crate::terminal::TerminalSet;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Distribution of a single scalar random parameter.
#[derive(Clone)]
pub enum ScalarDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
    Custom(Arc<dyn Fn(&mut Stream) -> f64 + Send + Sync>),
}

impl ScalarDist {
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            ScalarDist::Uniform { lo, hi } => rng.uniform(*lo, *hi),
            ScalarDist::Gaussian { mean, std } => rng.gaussian(*mean, *std),
            ScalarDist::Custom(f) => f(rng),
        }
    }

    /// Point mass at `value`.
    pub fn fixed(value: f64) -> Self {
        ScalarDist::Uniform {
            lo: value,
            hi: value,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ScalarDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(Error::InvalidModel(format!("bad uniform bounds [{lo}, {hi}]")))
            }
            ScalarDist::Gaussian { mean, std } if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                Err(Error::InvalidModel(format!("bad gaussian ({mean}, {std})")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for ScalarDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarDist::Uniform { lo, hi } => write!(f, "Uniform[{lo}, {hi}]"),
            ScalarDist::Gaussian { mean, std } => write!(f, "Gaussian({mean}, {std})"),
            ScalarDist::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_gamma: DMatrix<f64>,
}

/// Affine constraint data `G_x x ≤ g_x`, `G_u u ≤ g_u` for one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintData {
    pub state_matrix: DMatrix<f64>,
    pub state_bound: DVector<f64>,
    pub input_matrix: DMatrix<f64>,
    pub input_bound: DVector<f64>,
}

impl ConstraintData {
    pub fn state_rows(&self) -> usize {
        self.state_bound.len()
    }

    pub fn input_rows(&self) -> usize {
        self.input_bound.len()
    }

    /// Largest entry of `G_x x − g_x`; `-∞` when there are no rows.
    pub fn state_excess(&self, x: &DVector<f64>) -> f64 {
        max_excess(&self.state_matrix, &self.state_bound, x)
    }

    pub fn input_excess(&self, u: &DVector<f64>) -> f64 {
        max_excess(&self.input_matrix, &self.input_bound, u)
    }
}

fn max_excess(g: &DMatrix<f64>, bound: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for r in 0..g.nrows() {
        let v = g.row(r).dot(&x.transpose()) - bound[r];
        worst = worst.max(v);
    }
    worst
}

/// θ-dependent plant data.
pub trait ParametricPlant: Send + Sync + fmt::Debug {
    fn matrices(&self, theta: &[f64]) -> SystemMatrices;
    fn constraints(&self, theta: &[f64]) -> ConstraintData;
}

/// Plant whose data does not depend on θ.
#[derive(Debug, Clone)]
pub struct FixedPlant {
    pub matrices: SystemMatrices,
    pub constraints: ConstraintData,
}

impl ParametricPlant for FixedPlant {
    fn matrices(&self, _theta: &[f64]) -> SystemMatrices {
        self.matrices.clone()
    }

    fn constraints(&self, _theta: &[f64]) -> ConstraintData {
        self.constraints.clone()
    }
}

/// Generator of one disturbance vector `γ_t`.
pub trait DisturbanceSampler: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut Stream) -> DVector<f64>;
}

/// Disturbance with independent scalar components.
#[derive(Debug, Clone)]
pub struct IndependentDisturbance(pub Vec<ScalarDist>);

impl DisturbanceSampler for IndependentDisturbance {
    fn sample(&self, rng: &mut Stream) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|d| d.sample(rng)))
    }
}

/// One extraction δ = (θ, γ₀..γ_{N−1}).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraw {
    pub theta: DVector<f64>,
    /// Row `j` holds `γ_j`.
    pub gamma: DMatrix<f64>,
}

impl ScenarioDraw {
    pub fn horizon(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma_at(&self, j: usize) -> DVector<f64> {
        self.gamma.row(j).transpose()
    }

    /// Disturbances stacked in step order.
    pub fn stacked_gamma(&self) -> DVector<f64> {
        let t = self.gamma.transpose();
        DVector::from_column_slice(t.as_slice())
    }
}

/// The multisample ω: `M` independent draws.
#[derive(Debug, Clone)]
pub struct Multisample {
    pub draws: Vec<ScenarioDraw>,
    /// Key of draw 0; draw `i` used `key.scenario(key.scenario + i)`.
    pub key: StreamKey,
}

impl Multisample {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct UncertainModel {
    pub name: String,
    n: usize,
    m: usize,
    m_gamma: usize,
    theta: Vec<ScalarDist>,
    plant: Arc<dyn ParametricPlant>,
    disturbance: Arc<dyn DisturbanceSampler>,
    k_f: DMatrix<f64>,
    terminal: TerminalSet,
    state_rows: usize,
    input_rows: usize,
}

impl UncertainModel {
    /// Builds a model and checks its structure at the nominal parameter
    /// (each θ component at its distribution's center, zero for custom).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        m_gamma: usize,
        theta: Vec<ScalarDist>,
        plant: Arc<dyn ParametricPlant>,
        disturbance: Arc<dyn DisturbanceSampler>,
        k_f: DMatrix<f64>,
        q_f: DMatrix<f64>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("state and input dimensions must be positive".into()));
        }
        for d in &theta {
            d.validate()?;
        }
        check_dim("K_f rows", m, k_f.nrows())?;
        check_dim("K_f columns", n, k_f.ncols())?;
        check_dim("Q_f rows", n, q_f.nrows())?;
        let terminal = TerminalSet::new(q_f)?;

        let nominal: Vec<f64> = theta
            .iter()
            .map(|d| match *d {
                ScalarDist::Uniform { lo, hi } => 0.5 * (lo + hi),
                ScalarDist::Gaussian { mean, .. } => mean,
                ScalarDist::Custom(_) => 0.0,
            })
            .collect();
        let cons = plant.constraints(&nominal);
        let model = UncertainModel {
            name: name.into(),
            n,
            m,
            m_gamma,
            theta,
            plant,
            disturbance,
            k_f,
            terminal,
            state_rows: cons.state_rows(),
            input_rows: cons.input_rows(),
        };
        model.evaluate(&DVector::from_vec(nominal))?;
        Ok(model)
    }

    /// Model without uncertainty: no θ and `γ ≡ 0`.
    pub fn deterministic(
        name: impl Into<String>,
        matrices: SystemMatrices,
        constraints: ConstraintData,
        k_f: DMatrix<f64>,
        q_f: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, m, m_gamma) = (matrices.a.nrows(), matrices.b.ncols(), matrices.b_gamma.ncols());
        let zero = IndependentDisturbance(vec![ScalarDist::fixed(0.0); m_gamma]);
        Self::new(
            name,
            n,
            m,
            m_gamma,
            Vec::new(),
            Arc::new(FixedPlant { matrices, constraints }),
            Arc::new(zero),
            k_f,
            q_f,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_gamma(&self) -> usize {
        self.m_gamma
    }

    pub fn theta_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta_dists(&self) -> &[ScalarDist] {
        &self.theta
    }

    pub fn k_f(&self) -> &DMatrix<f64> {
        &self.k_f
    }

    pub fn q_f(&self) -> &DMatrix<f64> {
        self.terminal.shape()
    }

    pub fn terminal(&self) -> &TerminalSet {
        &self.terminal
    }

    pub fn state_rows(&self) -> usize {
        self.state_rows
    }

    pub fn input_rows(&self) -> usize {
        self.input_rows
    }

    /// Replaces the θ distributions, keeping everything else.
    pub fn with_theta(mut self, theta: Vec<ScalarDist>) -> Result<Self> {
        check_dim("theta dimension", self.theta.len(), theta.len())?;
        for d in &theta {
            d.validate()?;
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_disturbance(mut self, disturbance: Arc<dyn DisturbanceSampler>) -> Self {
        self.disturbance = disturbance;
        self
    }

    pub fn sample_theta(&self, rng: &mut Stream) -> DVector<f64> {
        DVector::from_iterator(self.theta.len(), self.theta.iter().map(|d| d.sample(rng)))
    }

    pub fn sample_gamma(&self, rng: &mut Stream) -> DVector<f64> {
        self.disturbance.sample(rng)
    }

    /// `horizon` i.i.d. disturbances, one per row.
    pub fn sample_gamma_sequence(&self, rng: &mut Stream, horizon: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(horizon, self.m_gamma);
        for j in 0..horizon {
            let g = self.disturbance.sample(rng);
            debug_assert_eq!(g.len(), self.m_gamma);
            out.row_mut(j).copy_from(&g.transpose());
        }
        out
    }

    /// Draws θ then the disturbance sequence from the same stream.
    pub fn sample_draw(&self, rng: &mut Stream, horizon: usize) -> ScenarioDraw {
        let theta = self.sample_theta(rng);
        let gamma = self.sample_gamma_sequence(rng, horizon);
        ScenarioDraw { theta, gamma }
    }

    /// `count` draws, draw `i` from its own stream `key.scenario(key.scenario + i)`.
    pub fn multisample(&self, key: StreamKey, count: usize, horizon: usize) -> Multisample {
        let draws = (0..count)
            .map(|i| {
                let mut s = key.scenario(key.scenario + i as u64).stream();
                self.sample_draw(&mut s, horizon)
            })
            .collect();
        Multisample { draws, key }
    }

    /// Plant matrices and constraint data at `theta`.
    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<(SystemMatrices, ConstraintData)> {
        check_dim("theta", self.theta.len(), theta.len())?;
        let th = theta.as_slice();
        let mats = self.plant.matrices(th);
        let cons = self.plant.constraints(th);
        let non_finite = |what, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::NonFiniteMatrix {
                    what,
                    theta: th.to_vec(),
                })
            }
        };
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        check_dim("A rows", self.n, mats.a.nrows())?;
        check_dim("A columns", self.n, mats.a.ncols())?;
        check_dim("B rows", self.n, mats.b.nrows())?;
        check_dim("B columns", self.m, mats.b.ncols())?;
        check_dim("B_gamma rows", self.n, mats.b_gamma.nrows())?;
        check_dim("B_gamma columns", self.m_gamma, mats.b_gamma.ncols())?;
        non_finite("A", finite(&mats.a))?;
        non_finite("B", finite(&mats.b))?;
        non_finite("B_gamma", finite(&mats.b_gamma))?;

        check_dim("state constraint rows", self.state_rows, cons.state_matrix.nrows())?;
        check_dim("state bound length", self.state_rows, cons.state_bound.len())?;
        check_dim("state constraint columns", self.n, cons.state_matrix.ncols())?;
        check_dim("input constraint rows", self.input_rows, cons.input_matrix.nrows())?;
        check_dim("input bound length", self.input_rows, cons.input_bound.len())?;
        check_dim("input constraint columns", self.m, cons.input_matrix.ncols())?;
        non_finite("G_x", finite(&cons.state_matrix))?;
        non_finite("G_u", finite(&cons.input_matrix))?;
        non_finite("g_x", cons.state_bound.iter().all(|v| v.is_finite()))?;
        non_finite("g_u", cons.input_bound.iter().all(|v| v.is_finite()))?;
        if cons.state_bound.iter().chain(cons.input_bound.iter()).any(|&g| g <= 0.0) {
            return Err(Error::InvalidModel(format!(
                "constraint bounds must be strictly positive (origin in the interior) at theta = {th:?}"
            )));
        }
        Ok((mats, cons))
    }
}
