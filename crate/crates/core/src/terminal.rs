//! Ellipsoidal terminal set `{x : xᵀ Q x ≤ 1}` and the Euclidean distance to it.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const PROJECTION_TOL: f64 = 1e-12;
const PROJECTION_MAX_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub struct TerminalSet {
    shape: DMatrix<f64>,
    /// Lower Cholesky factor `L` with `Q = L Lᵀ`.
    chol_lower: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl TerminalSet {
    pub fn new(shape: DMatrix<f64>) -> Result<Self> {
        if !shape.is_square() {
            return Err(Error::DimensionMismatch {
                context: "terminal shape matrix columns",
                expected: shape.nrows(),
                got: shape.ncols(),
            });
        }
        if shape.iter().any(|v| !v.is_finite()) {
            return Err(Error::CholeskyFailure("Q_f"));
        }
        let asym = (&shape - shape.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + shape.abs().max()) {
            return Err(Error::CholeskyFailure("Q_f"));
        }
        let chol = shape
            .clone()
            .cholesky()
            .ok_or(Error::CholeskyFailure("Q_f"))?;
        let eig = shape.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&mu| mu <= 0.0) {
            return Err(Error::CholeskyFailure("Q_f"));
        }
        Ok(TerminalSet {
            chol_lower: chol.l(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            shape,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    /// `xᵀ Q x`.
    pub fn level(&self, x: &DVector<f64>) -> f64 {
        let lx = self.chol_lower.tr_mul(x);
        lx.norm_squared()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.level(x) <= 1.0
    }

    /// Euclidean distance from `x` to the ellipsoid.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        self.project(x).1
    }

    /// Euclidean projection of `x` onto the ellipsoid, returning the
    /// projected point and the distance.
    ///
    /// For exterior `x` the projection is `(I + λQ)⁻¹ x` where `λ > 0` is the
    /// root of `g(λ) = Σ μᵢ x̃ᵢ² / (1 + λμᵢ)² − 1` in the eigenbasis of `Q`.
    /// `g` is convex and decreasing on `λ ≥ 0`, so Newton's method started
    /// at zero increases monotonically to the root.
    pub fn project(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        if self.contains(x) {
            return (x.clone(), 0.0);
        }
        let xt = self.eigenvectors.tr_mul(x);
        let mu = &self.eigenvalues;
        let mut lambda = 0.0;
        for _ in 0..PROJECTION_MAX_ITERS {
            let mut g = -1.0;
            let mut dg = 0.0;
            for i in 0..mu.len() {
                let s = 1.0 + lambda * mu[i];
                let a = mu[i] * xt[i] * xt[i];
                g += a / (s * s);
                dg -= 2.0 * a * mu[i] / (s * s * s);
            }
            if g <= PROJECTION_TOL || dg >= 0.0 {
                break;
            }
            let next = lambda - g / dg;
            if next <= lambda {
                break;
            }
            lambda = next;
        }
        let mut diff_sq = 0.0;
        let mut yt = DVector::zeros(xt.len());
        for i in 0..mu.len() {
            let s = 1.0 + lambda * mu[i];
            yt[i] = xt[i] / s;
            let r = lambda * mu[i] * xt[i] / s;
            diff_sq += r * r;
        }
        (&self.eigenvectors * yt, diff_sq.sqrt())
    }
}
