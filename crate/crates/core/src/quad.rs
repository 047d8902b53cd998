//! Gauss–Jacobi quadrature and matrix-valued integrals against weight matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::algebra::{Mat2, MatPoly, MatRational};
use crate::error::{BochnerError, Result};

pub const DEFAULT_NODES: usize = 200;
pub const DOUBLING_TOL: f64 = 1e-9;

/// `∫_{-1}^{1} (1-x)^α (1+x)^β dx = 2^{α+β+1} B(α+1, β+1)`.
pub fn jacobi_mass(alpha: f64, beta: f64) -> f64 {
    ((alpha + beta + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(alpha + beta + 2.0))
    .exp()
}

/// Monic Jacobi recurrence `x p_n = p_{n+1} + b_n p_n + c_n p_{n-1}` for `(1-x)^α (1+x)^β`.
pub fn jacobi_recurrence(alpha: f64, beta: f64, n: usize) -> (f64, f64) {
    let s = alpha + beta;
    let nf = n as f64;
    let b = if n == 0 {
        (beta - alpha) / (s + 2.0)
    } else {
        (beta * beta - alpha * alpha) / ((2.0 * nf + s) * (2.0 * nf + s + 2.0))
    };
    let c = match n {
        0 => 0.0,
        1 => 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + s).powi(2) * (3.0 + s)),
        _ => {
            let t = 2.0 * nf + s;
            4.0 * nf * (nf + alpha) * (nf + beta) * (nf + s) / (t * t * (t + 1.0) * (t - 1.0))
        }
    };
    (b, c)
}

/// Gauss rule for the weight `(1-x)^α (1+x)^β` on `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiRule {
    pub alpha: f64,
    pub beta: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl JacobiRule {
    /// Golub–Welsch: eigen-decomposition of the symmetric Jacobi matrix.
    pub fn new(alpha: f64, beta: f64, m: usize) -> Result<Self> {
        for e in [alpha, beta] {
            if !(e > -1.0) {
                return Err(BochnerError::NonIntegrableWeight { exponent: e });
            }
        }
        assert!(m >= 1, "node count must be positive");
        let mut jm = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let (b, _) = jacobi_recurrence(alpha, beta, k);
            jm[(k, k)] = b;
            if k + 1 < m {
                let (_, c) = jacobi_recurrence(alpha, beta, k + 1);
                let off = c.sqrt();
                jm[(k, k + 1)] = off;
                jm[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(jm);
        let mass = jacobi_mass(alpha, beta);
        let mut pairs: Vec<(f64, f64)> = (0..m)
            .map(|k| (eig.eigenvalues[k], mass * eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(JacobiRule { alpha, beta, nodes, weights })
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// One summand `(1-x)^α (1+x)^β S(x)` of a weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTerm {
    pub alpha: f64,
    pub beta: f64,
    pub smooth: MatRational,
}

impl WeightTerm {
    pub fn power(&self, x: f64) -> f64 {
        (1.0 - x).powf(self.alpha) * (1.0 + x).powf(self.beta)
    }
}

/// Weight matrix written as a finite sum of boundary powers times rational matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFn {
    pub terms: Vec<WeightTerm>,
}

impl WeightFn {
    pub fn single(alpha: f64, beta: f64, smooth: MatPoly) -> Self {
        WeightFn { terms: vec![WeightTerm { alpha, beta, smooth: MatRational::from_poly(smooth) }] }
    }

    /// `W(x)`, or `None` on a pole of a smooth part.
    pub fn eval(&self, x: f64) -> Option<Mat2> {
        let mut acc = Mat2::zero();
        for t in &self.terms {
            acc += t.smooth.eval(x)? * t.power(x);
        }
        Some(acc)
    }

    /// Smallest boundary exponent at `x = 1` and `x = -1`.
    pub fn exponents(&self) -> (f64, f64) {
        let a = self.terms.iter().map(|t| t.alpha).fold(f64::INFINITY, f64::min);
        let b = self.terms.iter().map(|t| t.beta).fold(f64::INFINITY, f64::min);
        (a, b)
    }

    /// Replace the weight by the Gauss nodes of each term with matrix masses.
    pub fn discretize(&self, m: usize) -> Result<DiscreteMeasure> {
        let mut nodes = Vec::new();
        let mut masses = Vec::new();
        for t in &self.terms {
            let rule = JacobiRule::new(t.alpha, t.beta, m)?;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = t.smooth.eval(*x).filter(Mat2::is_finite).ok_or(BochnerError::PoleOnSupport { x: *x })?;
                nodes.push(*x);
                masses.push(s * *w);
            }
        }
        Ok(DiscreteMeasure { nodes, masses })
    }
}

/// Finitely supported matrix measure `Σ_k δ_{x_k} W_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub nodes: Vec<f64>,
    pub masses: Vec<Mat2>,
}

impl DiscreteMeasure {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self, p: &MatPoly) -> Vec<Mat2> {
        self.nodes.iter().map(|x| p.eval(*x)).collect()
    }

    /// `Σ_k P_k W_k Q_kᵀ` for values tabulated on the nodes.
    pub fn pair(&self, p: &[Mat2], q: &[Mat2]) -> Mat2 {
        p.iter()
            .zip(&self.masses)
            .zip(q)
            .fold(Mat2::zero(), |acc, ((pk, wk), qk)| acc + *pk * *wk * qk.transpose())
    }

    /// `⟨P, Q⟩ = ∫ P W Qᵀ`.
    pub fn inner_product(&self, p: &MatPoly, q: &MatPoly) -> Mat2 {
        self.pair(&self.values(p), &self.values(q))
    }

    /// `∫ x^k W(x) dx`.
    pub fn moment(&self, k: u32) -> Mat2 {
        self.nodes
            .iter()
            .zip(&self.masses)
            .fold(Mat2::zero(), |acc, (x, w)| acc + *w * x.powi(k as i32))
    }

    /// Nodes at which the matrix mass is not symmetric positive definite.
    pub fn non_pd_nodes(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.masses)
            .filter(|(_, w)| !w.is_spd())
            .map(|(x, _)| *x)
            .collect()
    }

    /// Largest relative skew part of the masses.
    pub fn asymmetry(&self) -> f64 {
        self.masses.iter().map(|w| w.skew_defect() / w.norm_max().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
    }
}

/// `⟨P, Q⟩_W` with the doubling check `m` against `2m`.
pub fn inner_product(p: &MatPoly, q: &MatPoly, w: &WeightFn, m: usize) -> Result<Mat2> {
    doubled(w, m, |mu| {
        let scale = (mu.inner_product(p, p).norm_max() * mu.inner_product(q, q).norm_max()).sqrt();
        (mu.inner_product(p, q), scale)
    })
}

/// `∫ x^k W(x) dx` with the doubling check.
pub fn moment(k: u32, w: &WeightFn, m: usize) -> Result<Mat2> {
    doubled(w, m, |mu| {
        let scale = mu.nodes.iter().zip(&mu.masses).map(|(x, w)| w.norm_max() * x.abs().powi(k as i32)).sum();
        (mu.moment(k), scale)
    })
}

/// Evaluate at `m` and `2m` nodes; `f` returns the value and a magnitude for the relative test.
fn doubled(w: &WeightFn, m: usize, f: impl Fn(&DiscreteMeasure) -> (Mat2, f64) + Sync) -> Result<Mat2> {
    let (coarse, fine) = rayon::join(|| w.discretize(m).map(|mu| f(&mu)), || w.discretize(2 * m).map(|mu| f(&mu)));
    let (coarse, fine) = (coarse?, fine?);
    let diff = (coarse.0 - fine.0).norm_max();
    if diff > DOUBLING_TOL * fine.1.max(f64::MIN_POSITIVE) {
        return Err(BochnerError::EstimatedError { coarse: coarse.0.norm_max(), fine: fine.0.norm_max() });
    }
    Ok(fine.0)
}

/// Tabulate many integrals in parallel over the nodes.
pub fn par_moments(mu: &DiscreteMeasure, kmax: u32) -> Vec<Mat2> {
    (0..=kmax).into_par_iter().map(|k| mu.moment(k)).collect()
}
