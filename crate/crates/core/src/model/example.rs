//! The two-state benchmark plant with nonlinear parameter dependence and a
//! disconnected, non-convex disturbance set.

use super::{
    ConstraintData, DisturbanceSampler, ParametricPlant, ScalarDist, SystemMatrices,
    UncertainModel,
};
use crate::rng::Stream;
use nalgebra::{dmatrix, DMatrix, DVector};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

pub const EXAMPLE_K_F: [f64; 2] = [-0.4686, -1.4221];
pub const EXAMPLE_Q_F: [[f64; 2]; 2] = [[0.0539, 0.0724], [0.0724, 0.1724]];

/// θ ∈ R⁷: θ₁..θ₃ enter the dynamics, θ₄ and θ₅ couple the states and the
/// input gain, θ₆ and θ₇ shape the constraint bounds.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExamplePlant;

impl ParametricPlant for ExamplePlant {
    fn matrices(&self, th: &[f64]) -> SystemMatrices {
        let a = dmatrix![
            1.0 + th[0], 1.0 / (1.0 + th[0]);
            0.1 * th[3].sin(), 1.0 + th[1]
        ];
        let b = dmatrix![0.3 * th[4].atan(); 1.0 / (1.0 + th[2])];
        SystemMatrices {
            a,
            b,
            b_gamma: DMatrix::identity(2, 2),
        }
    }

    fn constraints(&self, th: &[f64]) -> ConstraintData {
        let (s7, c7) = th[6].sin_cos();
        let u_max = 5.0 / (1.0 + th[5] * s7);
        let x1_max = 10.0 / (1.0 - th[5] * s7);
        let x2_max = 10.0 / (1.0 + th[5] * c7);
        ConstraintData {
            state_matrix: dmatrix![
                1.0, 0.0;
                0.0, 1.0;
                -1.0, 0.0;
                0.0, -1.0
            ],
            state_bound: DVector::from_vec(vec![x1_max, x2_max, x1_max, x2_max]),
            input_matrix: dmatrix![1.0; -1.0],
            input_bound: DVector::from_vec(vec![u_max, u_max]),
        }
    }
}

/// Maps the auxiliary uniforms `η = (η₀, …, η₄)` to one disturbance.
pub fn example_gamma(eta: [f64; 5]) -> [f64; 2] {
    let [e0, e1, e2, e3, e4] = eta;
    if e0 >= 0.5 {
        let cap = (1.0 / (100.0 * (3.0 * e1 + 0.05)) - 0.05) / 3.0;
        [e1, e2.min(cap)]
    } else {
        let reach = 0.05 * e3.sin().abs();
        // sin(π/4)
        let e5 = (e4 * FRAC_1_SQRT_2).min(reach).max(-reach);
        [0.05 * e3.cos(), e5]
    }
}

/// Draws `η₀ ~ U[0,1]`, `η₁, η₂ ~ U[0,0.05]`, `η₃ ~ U[3π/4, 5π/4]`,
/// `η₄ ~ U[−0.05, 0.05]` (always all five, in that order) and applies
/// [`example_gamma`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExampleDisturbance;

impl DisturbanceSampler for ExampleDisturbance {
    fn sample(&self, rng: &mut Stream) -> DVector<f64> {
        let eta = [
            rng.uniform(0.0, 1.0),
            rng.uniform(0.0, 0.05),
            rng.uniform(0.0, 0.05),
            rng.uniform(0.75 * PI, 1.25 * PI),
            rng.uniform(-0.05, 0.05),
        ];
        let g = example_gamma(eta);
        DVector::from_vec(g.to_vec())
    }
}

pub fn example_theta() -> Vec<ScalarDist> {
    let small = ScalarDist::Uniform { lo: -0.1, hi: 0.1 };
    let normal = ScalarDist::Gaussian { mean: 0.0, std: 1.0 };
    vec![
        small.clone(),
        small.clone(),
        small,
        normal.clone(),
        normal.clone(),
        ScalarDist::Uniform { lo: -0.05, hi: 0.05 },
        normal,
    ]
}

/// The benchmark model, addressable as `"paper-example"`.
pub fn example_plant() -> UncertainModel {
    let k_f = DMatrix::from_row_slice(1, 2, &EXAMPLE_K_F);
    let q_f = DMatrix::from_row_slice(2, 2, &[
        EXAMPLE_Q_F[0][0],
        EXAMPLE_Q_F[0][1],
        EXAMPLE_Q_F[1][0],
        EXAMPLE_Q_F[1][1],
    ]);
    UncertainModel::new(
        "paper-example",
        2,
        1,
        2,
        example_theta(),
        Arc::new(ExamplePlant),
        Arc::new(ExampleDisturbance),
        k_f,
        q_f,
    )
    .expect("built-in example model is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::closed_loop;
    use crate::rng::{Purpose, StreamKey};
    use nalgebra::dvector;

    /// Largest |γ| over a grid of the auxiliary variables. The grid includes
    /// every interval endpoint.
    fn scan_gamma_bound(steps: usize) -> f64 {
        let grid = |lo: f64, hi: f64| (0..=steps).map(move |k| lo + (hi - lo) * k as f64 / steps as f64);
        let mut worst: f64 = 0.0;
        for e0 in [0.0, 0.49, 0.5, 1.0] {
            for e1 in grid(0.0, 0.05) {
                for e2 in grid(0.0, 0.05) {
                    for e3 in grid(0.75 * PI, 1.25 * PI) {
                        for e4 in grid(-0.05, 0.05) {
                            let g = example_gamma([e0, e1, e2, e3, e4]);
                            worst = worst.max(g[0].abs()).max(g[1].abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Bound recorded from `scan_gamma_bound(40)`: 0.05, attained by
    /// `0.05·|cos η₃|` at η₃ = π and by `η₁, η₂` at their upper ends.
    const GAMMA_BOUND: f64 = 0.05;

    #[test]
    fn gamma_scan_bound() {
        let b = scan_gamma_bound(40);
        assert!((b - GAMMA_BOUND).abs() < 1e-12, "scan bound {b}");
    }

    #[test]
    fn gamma_lower_branch_at_pi() {
        let g = example_gamma([0.3, 0.0, 0.0, PI, 0.0]);
        assert!((g[0] + 0.05).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gamma_upper_branch_at_zero() {
        assert_eq!(example_gamma([0.6, 0.0, 0.0, PI, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn gamma_draws_respect_bound() {
        let model = example_plant();
        let mut s = StreamKey::new(17, Purpose::Auxiliary).stream();
        for _ in 0..1_000_000 {
            let g = model.sample_gamma(&mut s);
            assert!(g.amax() <= GAMMA_BOUND + 1e-15);
        }
    }

    #[test]
    fn dimensions() {
        let m = example_plant();
        assert_eq!((m.n(), m.m(), m.m_gamma(), m.theta_dim()), (2, 1, 2, 7));
        assert_eq!((m.state_rows(), m.input_rows()), (4, 2));
        assert!(m.terminal().contains(&dvector![0.0, 0.0]));
        assert!(m.q_f().clone().cholesky().is_some());
    }

    #[test]
    fn nominal_evaluation() {
        let m = example_plant();
        let (mats, cons) = m.evaluate(&DVector::zeros(7)).unwrap();
        assert_eq!(mats.a, dmatrix![1.0, 1.0; 0.0, 1.0]);
        assert_eq!(mats.b, dmatrix![0.0; 1.0]);
        assert_eq!(mats.b_gamma, DMatrix::identity(2, 2));
        assert_eq!(cons.input_bound, dvector![5.0, 5.0]);
        assert_eq!(cons.state_bound, dvector![10.0, 10.0, 10.0, 10.0]);

        let a_cl = closed_loop(&mats.a, &mats.b, m.k_f()).unwrap();
        let expected = dmatrix![1.0, 1.0; -0.4686, -0.4221];
        assert!((a_cl - expected).amax() < 1e-15);
    }

    #[test]
    fn bounds_ignore_theta7_when_theta6_zero() {
        let m = example_plant();
        for t7 in [-3.0, -0.5, 0.7, 2.0] {
            let th = DVector::from_vec(vec![0.05, -0.02, 0.01, 1.0, -1.0, 0.0, t7]);
            let (_, cons) = m.evaluate(&th).unwrap();
            assert_eq!(cons.input_bound, dvector![5.0, 5.0]);
            assert_eq!(cons.state_bound, dvector![10.0, 10.0, 10.0, 10.0]);
        }
    }

    #[test]
    fn theta_draws() {
        let m = example_plant();
        let mut s = StreamKey::new(5, Purpose::Auxiliary).stream();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let th = m.sample_theta(&mut s);
            for k in 0..3 {
                assert!(th[k].abs() <= 0.1);
            }
            assert!(th[5].abs() <= 0.05);
            sum += th[0];
        }
        assert!((sum / n as f64).abs() < 0.005);
    }

    #[test]
    fn sampled_constraints_contain_origin() {
        let m = example_plant();
        let mut s = StreamKey::new(6, Purpose::Auxiliary).stream();
        for _ in 0..10_000 {
            let th = m.sample_theta(&mut s);
            let (_, cons) = m.evaluate(&th).unwrap();
            assert!(cons.state_bound.iter().all(|&g| g > 0.0));
            assert!(cons.input_bound.iter().all(|&g| g > 0.0));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = example_plant();
        let key = StreamKey::new(99, Purpose::Scenario).trial(4);
        let a = m.multisample(key, 5, 10);
        let b = m.multisample(key, 5, 10);
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.draws[0].gamma.shape(), (10, 2));
    }

    #[test]
    fn point_mass_theta_is_zero() {
        let m = example_plant()
            .with_theta(vec![ScalarDist::fixed(0.0); 7])
            .unwrap();
        let mut s = Stream::from_seed(1);
        assert_eq!(m.sample_theta(&mut s), DVector::zeros(7));
    }
}
