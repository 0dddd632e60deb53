//! Random cone programs with a known optimum.
//!
//! A complementary pair `(s*, y*)` is drawn block by block (`s*ᵀy* = 0`,
//! `s* ∈ K`, `y* ∈ K*`) together with a random `x*` and sparse `A`. Setting
//! `b = A x* + s*` and `c = −Aᵀ y*` makes `(x*, s*, y*)` satisfy the KKT
//! conditions, so the optimal value is `cᵀx*` regardless of how the
//! program is solved.

use super::{rotated_to_soc, ConicProgram, Cone, SparseMatrix, VarMap};
use crate::rng::Stream;

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub min_vars: usize,
    pub max_vars: usize,
    pub max_blocks: usize,
    pub max_cone_dim: usize,
    pub density: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            min_vars: 2,
            max_vars: 12,
            max_blocks: 8,
            max_cone_dim: 5,
            density: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedProgram {
    pub program: ConicProgram,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
}

fn pick(rng: &mut Stream, lo: usize, hi: usize) -> usize {
    lo + ((hi - lo + 1) as f64 * rng.uniform01()) as usize
}

/// Complementary boundary/interior pair in the second-order cone of size `k`.
fn soc_pair(rng: &mut Stream, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut s = vec![0.0; k];
    let mut y = vec![0.0; k];
    if k == 1 {
        if rng.uniform01() < 0.5 {
            s[0] = rng.uniform(0.1, 2.0);
        } else {
            y[0] = rng.uniform(0.1, 2.0);
        }
        return (s, y);
    }
    let mut dir: Vec<f64> = (1..k).map(|_| rng.standard_normal()).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|v| *v /= norm);
    let mode = rng.uniform01();
    if mode < 0.25 {
        // s interior, y = 0
        let r = rng.uniform(0.0, 1.0);
        s[0] = rng.uniform(r + 0.1, r + 2.0);
        for i in 1..k {
            s[i] = r * dir[i - 1];
        }
    } else if mode < 0.5 {
        let r = rng.uniform(0.0, 1.0);
        y[0] = rng.uniform(r + 0.1, r + 2.0);
        for i in 1..k {
            y[i] = r * dir[i - 1];
        }
    } else {
        let a = rng.uniform(0.1, 2.0);
        let b = rng.uniform(0.1, 2.0);
        s[0] = a;
        y[0] = b;
        for i in 1..k {
            s[i] = a * dir[i - 1];
            y[i] = -b * dir[i - 1];
        }
    }
    (s, y)
}

pub fn planted_program(rng: &mut Stream, spec: &PlantedSpec) -> PlantedProgram {
    let n = pick(rng, spec.min_vars, spec.max_vars);
    let blocks = pick(rng, 1, spec.max_blocks);
    let mut cones = Vec::new();
    let mut s = Vec::new();
    let mut y = Vec::new();
    for _ in 0..blocks {
        let kind = rng.uniform01();
        if kind < 0.15 {
            let k = pick(rng, 1, 2);
            cones.push(Cone::Zero(k));
            s.extend(std::iter::repeat_n(0.0, k));
            y.extend((0..k).map(|_| rng.standard_normal()));
        } else if kind < 0.45 {
            let k = pick(rng, 1, spec.max_cone_dim);
            cones.push(Cone::Nonnegative(k));
            for _ in 0..k {
                if rng.uniform01() < 0.5 {
                    s.push(rng.uniform(0.1, 2.0));
                    y.push(0.0);
                } else {
                    s.push(0.0);
                    y.push(rng.uniform(0.1, 2.0));
                }
            }
        } else if kind < 0.75 {
            let k = pick(rng, 2, spec.max_cone_dim.max(2));
            cones.push(Cone::SecondOrder(k));
            let (bs, by) = soc_pair(rng, k);
            s.extend(bs);
            y.extend(by);
        } else {
            let k = pick(rng, 3, spec.max_cone_dim.max(3));
            cones.push(Cone::RotatedSecondOrder(k));
            let (mut bs, mut by) = soc_pair(rng, k);
            // The map is an orthogonal involution between the two cones,
            // so membership and complementarity carry over.
            let (a, b) = rotated_to_soc(bs[0], bs[1]);
            bs[0] = a;
            bs[1] = b;
            let (a, b) = rotated_to_soc(by[0], by[1]);
            by[0] = a;
            by[1] = b;
            s.extend(bs);
            y.extend(by);
        }
    }
    let rows = s.len();
    let mut a = SparseMatrix::new(rows, n);
    for c in 0..n {
        let mut any = false;
        for r in 0..rows {
            if rng.uniform01() < spec.density {
                a.push(r, c, rng.standard_normal());
                any = true;
            }
        }
        if !any {
            let r = pick(rng, 0, rows - 1);
            a.push(r, c, 1.0 + rng.uniform01());
        }
    }
    let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let ax = a.mul_vec(&x);
    let b: Vec<f64> = ax.iter().zip(&s).map(|(ax, s)| ax + s).collect();
    let c: Vec<f64> = a.tr_mul_vec(&y).into_iter().map(|v| -v).collect();
    let objective = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let mut var_map = VarMap::default();
    var_map.insert("x", 0..n);
    PlantedProgram {
        program: ConicProgram {
            c,
            a,
            b,
            cones,
            var_map,
        },
        x,
        s,
        y,
        objective,
    }
}
