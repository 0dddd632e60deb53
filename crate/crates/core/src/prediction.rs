//! Affine state predictions `x_j = A_clʲ x₀ + Φ_j V + Υ_j γ` under the
//! input parameterization `u = K_f x + v`.

use crate::error::{check_dim, Result};
use nalgebra::{DMatrix, DVector};

/// `A + B K_f`.
pub fn closed_loop(a: &DMatrix<f64>, b: &DMatrix<f64>, k_f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("A columns", a.nrows(), a.ncols())?;
    check_dim("B rows", a.nrows(), b.nrows())?;
    check_dim("K_f rows", b.ncols(), k_f.nrows())?;
    check_dim("K_f columns", a.ncols(), k_f.ncols())?;
    Ok(a + b * k_f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOperators {
    /// `A_cl⁰ … A_clᴺ`.
    pub powers: Vec<DMatrix<f64>>,
    /// `Φ_1 … Φ_N`, each `n × N·m`; stored at index `j − 1`.
    pub phi: Vec<DMatrix<f64>>,
    /// `Υ_1 … Υ_N`, each `n × N·m_γ`; stored at index `j − 1`.
    pub upsilon: Vec<DMatrix<f64>>,
    m: usize,
    m_gamma: usize,
}

impl PredictionOperators {
    /// Builds the operators by the recursion
    /// `Φ_{j+1} = A_cl Φ_j + [0 … B … 0]` (B in block `j`), likewise `Υ`.
    pub fn build(a_cl: &DMatrix<f64>, b: &DMatrix<f64>, b_gamma: &DMatrix<f64>, horizon: usize) -> Result<Self> {
        let n = a_cl.nrows();
        check_dim("A_cl columns", n, a_cl.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("B_gamma rows", n, b_gamma.nrows())?;
        assert!(horizon >= 1, "horizon must be at least 1");
        let (m, mg) = (b.ncols(), b_gamma.ncols());

        let mut powers = Vec::with_capacity(horizon + 1);
        powers.push(DMatrix::identity(n, n));
        for j in 0..horizon {
            powers.push(a_cl * &powers[j]);
        }

        let mut phi = Vec::with_capacity(horizon);
        let mut upsilon = Vec::with_capacity(horizon);
        let mut cur_phi = DMatrix::zeros(n, horizon * m);
        let mut cur_ups = DMatrix::zeros(n, horizon * mg);
        for j in 0..horizon {
            if j > 0 {
                cur_phi = a_cl * &cur_phi;
                cur_ups = a_cl * &cur_ups;
            }
            cur_phi.view_mut((0, j * m), (n, m)).copy_from(b);
            cur_ups.view_mut((0, j * mg), (n, mg)).copy_from(b_gamma);
            phi.push(cur_phi.clone());
            upsilon.push(cur_ups.clone());
        }
        Ok(PredictionOperators {
            powers,
            phi,
            upsilon,
            m,
            m_gamma: mg,
        })
    }

    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    pub fn n(&self) -> usize {
        self.powers[0].nrows()
    }

    /// Free response `A_clʲ x₀ + Υ_j γ` for `j = 0..=N` (index 0 is `x₀`).
    pub fn free_response(&self, x0: &DVector<f64>, gamma: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_dim("x_t", self.n(), x0.len())?;
        check_dim("stacked gamma", self.horizon() * self.m_gamma, gamma.len())?;
        let mut out = Vec::with_capacity(self.horizon() + 1);
        out.push(x0.clone());
        for j in 1..=self.horizon() {
            out.push(&self.powers[j] * x0 + &self.upsilon[j - 1] * gamma);
        }
        Ok(out)
    }

    /// Predicted states `x_1 … x_N`.
    pub fn predict(&self, x0: &DVector<f64>, v: &DVector<f64>, gamma: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_dim("V", self.horizon() * self.m, v.len())?;
        let free = self.free_response(x0, gamma)?;
        Ok(free
            .into_iter()
            .skip(1)
            .zip(&self.phi)
            .map(|(f, phi)| f + phi * v)
            .collect())
    }
}

/// Equivalent to [`PredictionOperators::build`].
pub fn build_operators(a_cl: &DMatrix<f64>, b: &DMatrix<f64>, b_gamma: &DMatrix<f64>, horizon: usize) -> Result<PredictionOperators> {
    PredictionOperators::build(a_cl, b, b_gamma, horizon)
}
