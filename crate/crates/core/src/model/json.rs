//! JSON model description.
//!
//! Matrix entries are numbers or expressions in `theta1 … thetaG` (1-based),
//! e.g. `"1/(1+theta1)"` or `"0.1*sin(theta4)"`. Supported functions:
//! `sin cos tan asin acos atan atan2 sinh cosh tanh exp ln sqrt abs min max`,
//! plus the constant `pi`. Matrices are row-major nested arrays.
//!
//! ```json
//! {
//!   "name": "double-integrator",
//!   "n": 2, "m": 1, "m_gamma": 2,
//!   "theta": [{"kind": "uniform", "lo": -0.1, "hi": 0.1}],
//!   "gamma": [{"kind": "uniform", "lo": -0.01, "hi": 0.01},
//!             {"kind": "gaussian", "mean": 0.0, "std": 0.001}],
//!   "a": [[1, "1+theta1"], [0, 1]],
//!   "b": [[0], [1]],
//!   "b_gamma": [[1, 0], [0, 1]],
//!   "state_constraints": {"matrix": [[1, 0], [-1, 0]], "bound": [10, 10]},
//!   "input_constraints": {"matrix": [[1], [-1]], "bound": [5, 5]},
//!   "k_f": [[-0.4, -1.2]],
//!   "q_f": [[0.05, 0.07], [0.07, 0.17]]
//! }
//! ```
//!
//! The name `"paper-example"` is reserved for the built-in benchmark, whose
//! disturbance generator has no JSON form.

use super::{
    example_plant, ConstraintData, IndependentDisturbance, ParametricPlant, ScalarDist,
    SystemMatrices, UncertainModel,
};
use crate::error::{Error, Result};
use meval::{ContextProvider, FuncEvalError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

pub const EXAMPLE_MODEL_NAME: &str = "paper-example";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistSpec {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl From<&DistSpec> for ScalarDist {
    fn from(d: &DistSpec) -> Self {
        match *d {
            DistSpec::Uniform { lo, hi } => ScalarDist::Uniform { lo, hi },
            DistSpec::Gaussian { mean, std } => ScalarDist::Gaussian { mean, std },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineSetSpec {
    pub matrix: Vec<Vec<Entry>>,
    pub bound: Vec<Entry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub m_gamma: usize,
    #[serde(default)]
    pub theta: Vec<DistSpec>,
    pub gamma: Vec<DistSpec>,
    pub a: Vec<Vec<Entry>>,
    pub b: Vec<Vec<Entry>>,
    pub b_gamma: Vec<Vec<Entry>>,
    pub state_constraints: AffineSetSpec,
    pub input_constraints: AffineSetSpec,
    pub k_f: Vec<Vec<f64>>,
    pub q_f: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Compiled {
    Const(f64),
    Expr(meval::Expr),
}

impl Compiled {
    fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            Compiled::Const(v) => *v,
            // Unknown names are rejected at compile time, so errors here can
            // only come from arithmetic; report them as NaN.
            Compiled::Expr(e) => e.eval_with_context(ThetaContext(theta)).unwrap_or(f64::NAN),
        }
    }
}

struct ThetaContext<'a>(&'a [f64]);

impl ContextProvider for ThetaContext<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        if name == "pi" {
            return Some(std::f64::consts::PI);
        }
        let idx: usize = name.strip_prefix("theta")?.parse().ok()?;
        idx.checked_sub(1).and_then(|i| self.0.get(i)).copied()
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        let unary = |f: fn(f64) -> f64| match args {
            [x] => Ok(f(*x)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        let binary = |f: fn(f64, f64) -> f64| match args {
            [x, y] => Ok(f(*x, *y)),
            _ => Err(FuncEvalError::NumberArgs(2)),
        };
        match name {
            "sin" => unary(f64::sin),
            "cos" => unary(f64::cos),
            "tan" => unary(f64::tan),
            "asin" => unary(f64::asin),
            "acos" => unary(f64::acos),
            "atan" => unary(f64::atan),
            "sinh" => unary(f64::sinh),
            "cosh" => unary(f64::cosh),
            "tanh" => unary(f64::tanh),
            "exp" => unary(f64::exp),
            "ln" => unary(f64::ln),
            "sqrt" => unary(f64::sqrt),
            "abs" => unary(f64::abs),
            "atan2" => binary(f64::atan2),
            "min" => binary(f64::min),
            "max" => binary(f64::max),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Compiled>,
}

impl CompiledMatrix {
    fn eval(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.entries.iter().map(|e| e.eval(theta)))
    }

    fn eval_vector(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.eval(theta)))
    }
}

/// Plant whose entries are compiled expressions in θ.
#[derive(Debug, Clone)]
struct ExpressionPlant {
    a: CompiledMatrix,
    b: CompiledMatrix,
    b_gamma: CompiledMatrix,
    state_matrix: CompiledMatrix,
    state_bound: CompiledMatrix,
    input_matrix: CompiledMatrix,
    input_bound: CompiledMatrix,
}

impl ParametricPlant for ExpressionPlant {
    fn matrices(&self, theta: &[f64]) -> SystemMatrices {
        SystemMatrices {
            a: self.a.eval(theta),
            b: self.b.eval(theta),
            b_gamma: self.b_gamma.eval(theta),
        }
    }

    fn constraints(&self, theta: &[f64]) -> ConstraintData {
        ConstraintData {
            state_matrix: self.state_matrix.eval(theta),
            state_bound: self.state_bound.eval_vector(theta),
            input_matrix: self.input_matrix.eval(theta),
            input_bound: self.input_bound.eval_vector(theta),
        }
    }
}

fn compile_entry(entry: &Entry, theta_dim: usize, what: &str) -> Result<Compiled> {
    match entry {
        Entry::Number(v) => Ok(Compiled::Const(*v)),
        Entry::Expr(text) => {
            let expr: meval::Expr = text
                .parse()
                .map_err(|e| Error::InvalidModel(format!("{what}: cannot parse {text:?}: {e}")))?;
            // Probe once so unknown variables or functions fail at load time.
            let probe = vec![0.0; theta_dim];
            match expr.eval_with_context(ThetaContext(&probe)) {
                Ok(_) => Ok(Compiled::Expr(expr)),
                Err(e) => Err(Error::InvalidModel(format!("{what}: {text:?}: {e}"))),
            }
        }
    }
}

fn compile_matrix(
    rows: &[Vec<Entry>],
    shape: (usize, usize),
    theta_dim: usize,
    what: &str,
) -> Result<CompiledMatrix> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::InvalidModel(format!(
            "{what}: expected a {}x{} row-major array",
            shape.0, shape.1
        )));
    }
    let entries = rows
        .iter()
        .flatten()
        .map(|e| compile_entry(e, theta_dim, what))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledMatrix {
        rows: shape.0,
        cols: shape.1,
        entries,
    })
}

fn numeric_matrix(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::InvalidModel(format!(
            "{what}: expected a {}x{} row-major array",
            shape.0, shape.1
        )));
    }
    Ok(DMatrix::from_row_iterator(
        shape.0,
        shape.1,
        rows.iter().flatten().copied(),
    ))
}

impl ModelSpec {
    pub fn build(&self) -> Result<UncertainModel> {
        let (n, m, mg, g) = (self.n, self.m, self.m_gamma, self.theta.len());
        if self.gamma.len() != mg {
            return Err(Error::InvalidModel(format!(
                "gamma: expected {mg} component distributions, got {}",
                self.gamma.len()
            )));
        }
        let r = self.state_constraints.matrix.len();
        let q = self.input_constraints.matrix.len();
        let column = |v: &[Entry]| v.iter().map(|e| vec![e.clone()]).collect::<Vec<_>>();
        let plant = ExpressionPlant {
            a: compile_matrix(&self.a, (n, n), g, "a")?,
            b: compile_matrix(&self.b, (n, m), g, "b")?,
            b_gamma: compile_matrix(&self.b_gamma, (n, mg), g, "b_gamma")?,
            state_matrix: compile_matrix(&self.state_constraints.matrix, (r, n), g, "state_constraints.matrix")?,
            state_bound: compile_matrix(&column(&self.state_constraints.bound), (r, 1), g, "state_constraints.bound")?,
            input_matrix: compile_matrix(&self.input_constraints.matrix, (q, m), g, "input_constraints.matrix")?,
            input_bound: compile_matrix(&column(&self.input_constraints.bound), (q, 1), g, "input_constraints.bound")?,
        };
        UncertainModel::new(
            self.name.clone().unwrap_or_else(|| "json-model".into()),
            n,
            m,
            mg,
            self.theta.iter().map(ScalarDist::from).collect(),
            Arc::new(plant),
            Arc::new(IndependentDisturbance(self.gamma.iter().map(ScalarDist::from).collect())),
            numeric_matrix(&self.k_f, (m, n), "k_f")?,
            numeric_matrix(&self.q_f, (n, n), "q_f")?,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Resolves `"paper-example"` or a path to a JSON model file.
pub fn load_model(source: &str) -> Result<UncertainModel> {
    if source == EXAMPLE_MODEL_NAME {
        return Ok(example_plant());
    }
    let text = std::fs::read_to_string(Path::new(source))?;
    ModelSpec::from_json(&text)?.build()
}
