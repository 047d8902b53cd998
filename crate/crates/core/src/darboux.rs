//! Darboux transformations of diagonal classical pairs: factorization, the swapped pair and intertwining.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{Mat2, MatPoly, MatRational, Poly, QuadCoeff};
use crate::classify::{certify, normalize_pair, weight_commutator_defect, BochnerPair, CertConfig, Certificate, Normalized};
use crate::error::{BochnerError, Result};
use crate::ops::DiffOp2;
use crate::quad::{self, JacobiRule, WeightFn, WeightTerm};
use crate::recurrence::generate_ops;

pub const DIAGONAL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-8;
pub const CONCOMITANT_TOL: f64 = 1e-8;
pub const CLASSICAL_TOL: f64 = 1e-10;
pub const PROBE_DEGREE: usize = 5;
/// Commutator defect of `W(x0)⁻¹W(x)` below which a weight counts as reducible.
pub const REDUCIBLE_TOL: f64 = 1e-6;

/// `P ↦ P' L(x) + P K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Op1 {
    pub lead: MatPoly,
    pub zeroth: Mat2,
}

impl Op1 {
    pub fn apply(&self, p: &MatPoly) -> MatPoly {
        p.deriv().mul(&self.lead).add(&p.right_mul(&self.zeroth))
    }
}

/// `P ↦ P'' L2(x) + P' L1(x) + P L0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Op2Poly {
    pub l2: MatPoly,
    pub l1: MatPoly,
    pub l0: Mat2,
}

/// `P ↦ (P·u)·v`: `P''(LM) + P'(L'M + KM + LN) + P KN` for `u = ∂L + K`, `v = ∂M + N`.
pub fn compose(u: &Op1, v: &Op1) -> Op2Poly {
    let l2 = u.lead.mul(&v.lead);
    let l1 = u.lead.deriv().mul(&v.lead).add(&v.lead.left_mul(&u.zeroth)).add(&u.lead.right_mul(&v.zeroth));
    Op2Poly { l2, l1, l0: u.zeroth * v.zeroth }
}

impl Op2Poly {
    pub fn apply(&self, p: &MatPoly) -> MatPoly {
        let d1 = p.deriv();
        d1.deriv().mul(&self.l2).add(&d1.mul(&self.l1)).add(&p.right_mul(&self.l0))
    }

    /// Largest off-diagonal coefficient entry.
    pub fn off_diagonal(&self) -> f64 {
        let off = |m: &Mat2| m.e[1].abs().max(m.e[2].abs());
        self.l2.coeffs.iter().chain(&self.l1.coeffs).chain(std::iter::once(&self.l0)).map(off).fold(0.0, f64::max)
    }

    /// The operator as a [`DiffOp2`] with leading coefficient `a2`, and the coefficient mismatch.
    pub fn to_diffop(&self, a2: QuadCoeff) -> (DiffOp2, f64) {
        let lead = MatPoly::new(vec![Mat2::scalar(a2.a20), Mat2::scalar(a2.a21), Mat2::scalar(a2.a22)]);
        let mismatch = self.l2.sub(&lead).norm_max().max(self.l1.coeffs.iter().skip(2).fold(0.0, |m, c| m.max(c.norm_max())));
        (DiffOp2::new(a2, self.l1.coeff(1), self.l1.coeff(0), self.l0), mismatch)
    }
}

/// `𝔘 = ∂S(x) + C` with `S(x) = S1 x + S0`; its partner is `𝔙 = ∂T(x) + F`, `T = sign·adj(S)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderOp {
    #[serde(rename = "S1")]
    pub s1: Mat2,
    #[serde(rename = "S0")]
    pub s0: Mat2,
    #[serde(rename = "C")]
    pub c: Mat2,
    pub sign: f64,
}

impl FirstOrderOp {
    pub fn s(&self) -> MatPoly {
        MatPoly::linear(self.s1, self.s0)
    }

    pub fn t(&self) -> MatPoly {
        MatPoly::linear(self.s1.adj() * self.sign, self.s0.adj() * self.sign)
    }

    /// `F = sign·(adj(A) + adj(C) + G)`.
    pub fn partner_f(&self, g: &Mat2) -> Mat2 {
        (self.s1.adj() + self.c.adj() + *g) * self.sign
    }

    pub fn u(&self) -> Op1 {
        Op1 { lead: self.s(), zeroth: self.c }
    }

    pub fn v(&self, g: &Mat2) -> Op1 {
        Op1 { lead: self.t(), zeroth: self.partner_f(g) }
    }

    /// Coefficient mismatch of `det S(x) = sign·a2(x)`.
    pub fn det_residual(&self, a2: &QuadCoeff) -> f64 {
        let (a, b) = (self.s1, self.s0);
        [a.det() - self.sign * a2.a22, (a * b.adj()).trace() - self.sign * a2.a21, b.det() - self.sign * a2.a20]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Scalar coefficients of `diag(𝔡₁, 𝔡₂) = 𝔘𝔙` with `𝔡ᵢ = ∂²a2 + ∂(αᵢx + βᵢ) + γᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalFactorization {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    /// Coefficient mismatch between the composed product and `diag(𝔡₁, 𝔡₂)`.
    pub product_residual: f64,
    /// Largest off-diagonal coefficient of the composed product.
    pub off_diagonal: f64,
}

fn off_diag(m: &Mat2) -> f64 {
    m.e[1].abs().max(m.e[2].abs())
}

/// Factor `diag(𝔡₁, 𝔡₂) = (∂(Ax+B) + C)(∂T(x) + F)` with `F = sign·(adj A + adj C + G)`; requires
/// `AG`, `BG` and `C(G + adj A)` diagonal, and then `γᵢ = sign·(det C + [C(G + adj A)]ᵢᵢ)`.
pub fn factor_diagonal(a: &Mat2, b: &Mat2, c: &Mat2, g: &Mat2, sign: f64, a2: &QuadCoeff) -> Result<DiagonalFactorization> {
    let f = FirstOrderOp { s1: *a, s0: *b, c: *c, sign };
    let scale = [a, b, c, g].iter().fold(1.0_f64, |m, x| m.max(x.norm_max()));
    let tol = DIAGONAL_TOL * scale * scale;
    let det = f.det_residual(a2);
    if !(det <= tol) {
        return Err(BochnerError::DeterminantMismatch { residual: det });
    }
    for (which, x) in [("C(G+adj A)", *c * (*g + a.adj())), ("AG", *a * *g), ("BG", *b * *g)] {
        let r = off_diag(&x);
        if !(r <= tol) {
            return Err(BochnerError::DiagonalityViolated { which, residual: r });
        }
    }
    let (ag, bg, cga) = (*a * *g, *b * *g, *c * (*g + a.adj()));
    let mut out = DiagonalFactorization {
        alpha: [0.0; 2],
        beta: [0.0; 2],
        gamma: [0.0; 2],
        product_residual: 0.0,
        off_diagonal: 0.0,
    };
    for i in 0..2 {
        out.alpha[i] = sign * (2.0 * a.det() + (*a * c.adj()).trace() + ag.get(i, i));
        out.beta[i] = sign * ((*b * c.adj()).trace() + (*a * b.adj()).trace() + bg.get(i, i));
        out.gamma[i] = sign * (c.det() + cga.get(i, i));
    }
    let prod = compose(&f.u(), &f.v(g));
    out.off_diagonal = prod.off_diagonal();
    let expected = Op2Poly {
        l2: MatPoly::new(vec![Mat2::scalar(a2.a20), Mat2::scalar(a2.a21), Mat2::scalar(a2.a22)]),
        l1: MatPoly::linear(Mat2::diag(out.alpha[0], out.alpha[1]), Mat2::diag(out.beta[0], out.beta[1])),
        l0: Mat2::diag(out.gamma[0], out.gamma[1]),
    };
    out.product_residual = prod
        .l2
        .sub(&expected.l2)
        .norm_max()
        .max(prod.l1.sub(&expected.l1).norm_max())
        .max((prod.l0 - expected.l0).norm_max());
    Ok(out)
}

/// Scalar pair `((1−x)^p (1+x)^q, ∂²a2 + ∂(αx + β) + γ)` with `a2 = 1 − x²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarClassicalPair {
    pub a2: QuadCoeff,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Exponent of `1 − x`.
    pub p: f64,
    /// Exponent of `1 + x`.
    pub q: f64,
}

/// Solve the scalar Pearson equation `(r a2)' = (αx + β) r` for the Jacobi exponents.
pub fn scalar_classical(a2: QuadCoeff, alpha: f64, beta: f64, gamma: f64) -> Result<ScalarClassicalPair> {
    if !a2.is_hypergeometric() {
        return Err(BochnerError::UnsupportedLeadingCoefficient);
    }
    let p = -(alpha + beta + 2.0) / 2.0;
    let q = (beta - alpha - 2.0) / 2.0;
    for e in [p, q] {
        if !(e > -1.0) {
            return Err(BochnerError::NonIntegrableWeight { exponent: e });
        }
    }
    Ok(ScalarClassicalPair { a2, alpha, beta, gamma, p, q })
}

impl ScalarClassicalPair {
    pub fn weight(&self, x: f64) -> f64 {
        (1.0 - x).powf(self.p) * (1.0 + x).powf(self.q)
    }

    /// `r'(x) / r(x)`.
    pub fn log_derivative(&self, x: f64) -> f64 {
        -self.p / (1.0 - x) + self.q / (1.0 + x)
    }

    /// `λ(n) = a22 n² + (α − a22) n + γ`.
    pub fn lambda(&self, n: f64) -> f64 {
        self.a2.a22 * n * n + (self.alpha - self.a2.a22) * n + self.gamma
    }

    /// `p'' a2 + p'(αx + β) + γ p`.
    pub fn apply(&self, p: &Poly) -> Poly {
        let d1 = p.deriv();
        d1.deriv().mul(&self.a2.poly()).add(&d1.mul(&Poly::new(vec![self.beta, self.alpha]))).add(&p.scale(self.gamma))
    }

    /// Monic orthogonal polynomials `p(x, 0..=n_max)` from the three-term recurrence.
    pub fn monic(&self, n_max: usize) -> Vec<Poly> {
        let mut out = vec![Poly::one()];
        let mut prev = Poly::default();
        for n in 0..n_max {
            let (b, c) = quad::jacobi_recurrence(self.p, self.q, n);
            let cur = &out[n];
            let next = cur.mul(&Poly::new(vec![-b, 1.0])).sub(&prev.scale(c));
            prev = cur.clone();
            out.push(next);
        }
        out
    }

    /// Largest `|∫ p_j p_k r| / √(∫p_j² r ∫p_k² r)` over `j ≠ k ≤ n_max`.
    pub fn orthogonality_residual(&self, n_max: usize, m: usize) -> Result<f64> {
        let rule = JacobiRule::new(self.p, self.q, m)?;
        let ps = self.monic(n_max);
        let gram: Vec<Vec<f64>> =
            ps.iter().map(|pj| ps.iter().map(|pk| rule.integrate(|x| pj.eval(x) * pk.eval(x))).collect()).collect();
        let mut worst = 0.0_f64;
        for j in 0..=n_max {
            for k in 0..j {
                worst = worst.max(gram[j][k].abs() / (gram[j][j] * gram[k][k]).sqrt());
            }
        }
        Ok(worst)
    }

    /// Largest coefficient of `p(·, n)·𝔡 − λ(n) p(·, n)` relative to `max(1, |λ(n)|)`.
    pub fn eigen_residual(&self, n_max: usize) -> f64 {
        self.monic(n_max)
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let lam = self.lambda(n as f64);
                let r = self.apply(p).sub(&p.scale(lam));
                r.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs())) / lam.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    fn matches(&self, alpha: f64, beta: f64, gamma: f64) -> f64 {
        (self.alpha - alpha).abs().max((self.beta - beta).abs()).max((self.gamma - gamma).abs())
    }
}

fn interior_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| -1.0 + 2.0 * (j as f64 + 1.0) / (n as f64 + 1.0)).collect()
}

/// `W(x) = T(x) diag(r₁, r₂) T(x)ᵀ / a2(x)` evaluated directly.
fn darboux_weight(t: &Mat2, r: [f64; 2], a2: f64) -> Mat2 {
    *t * Mat2::diag(r[0], r[1]) * t.transpose() * (1.0 / a2)
}

/// Residual of the symmetry condition `(P·𝔘) W = (P R T')' − P R Fᵀ` on probes `E_ij x^k`, `k ≤ 5`,
/// at interior points, each relative to the sum of the term norms.
pub fn symmetry_residual(f: &FirstOrderOp, g: &Mat2, r1: &ScalarClassicalPair, r2: &ScalarClassicalPair) -> f64 {
    let (s, t) = (f.s(), f.t());
    let (t1, ff) = (t.coeff(1), f.partner_f(g));
    let mut worst = 0.0_f64;
    for x in interior_points(21) {
        let a2 = r1.a2.eval(x);
        let r = [r1.weight(x), r2.weight(x)];
        let rm = Mat2::diag(r[0], r[1]);
        let rp = Mat2::diag(r[0] * r1.log_derivative(x), r[1] * r2.log_derivative(x));
        let (sx, tx) = (s.eval(x), t.eval(x));
        let w = darboux_weight(&tx, r, a2);
        let rtp = rp * tx.transpose() + rm * t1.transpose();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..=PROBE_DEGREE {
                    let e = Mat2::unit(i, j);
                    let pv = e * x.powi(k as i32);
                    let dp = if k == 0 { Mat2::zero() } else { e * (k as f64 * x.powi(k as i32 - 1)) };
                    let terms = [dp * sx * w, pv * f.c * w, dp * rm * tx.transpose(), pv * rtp, pv * rm * ff.transpose()];
                    let res = terms[0] + terms[1] - terms[2] - terms[3] + terms[4];
                    let scale: f64 = terms.iter().map(Mat2::norm_max).sum();
                    if scale > 0.0 {
                        worst = worst.max(res.norm_max() / scale);
                    }
                }
            }
        }
    }
    worst
}

/// Limit at `x = ±1` of the boundary term `R(x) T(x)ᵀ` left by integrating `𝔙` by parts.
pub fn concomitant(f: &FirstOrderOp, r1: &ScalarClassicalPair, r2: &ScalarClassicalPair) -> f64 {
    let t = f.t();
    let mut worst = 0.0_f64;
    for (x, exps) in [(1.0, [(r1.p, r1.q), (r2.p, r2.q)]), (-1.0, [(r1.q, r1.p), (r2.q, r2.p)])] {
        let tx = t.eval(x);
        for (i, (e, other)) in exps.iter().enumerate() {
            let row = tx.get(0, i).abs().max(tx.get(1, i).abs());
            let limit = if *e > 0.0 {
                0.0
            } else if *e == 0.0 {
                2f64.powf(*other)
            } else {
                f64::INFINITY
            };
            if row > 0.0 {
                worst = worst.max(limit * row);
            }
        }
    }
    worst
}

/// `W(x) = Σᵢ (1−x)^{pᵢ−1}(1+x)^{qᵢ−1} tᵢ(x) tᵢ(x)ᵀ` with `tᵢ` the columns of `T(x)`; equal exponents are merged.
pub fn darboux_weight_fn(f: &FirstOrderOp, r1: &ScalarClassicalPair, r2: &ScalarClassicalPair) -> WeightFn {
    let t = f.t();
    let column = |i: usize| {
        let sel = Mat2::diag(if i == 0 { 1.0 } else { 0.0 }, if i == 0 { 0.0 } else { 1.0 });
        t.right_mul(&sel).mul(&t.transpose())
    };
    let same = (r1.p - r2.p).abs() <= 1e-14 && (r1.q - r2.q).abs() <= 1e-14;
    let terms = if same {
        vec![WeightTerm { alpha: r1.p - 1.0, beta: r1.q - 1.0, smooth: MatRational::from_poly(column(0).add(&column(1))) }]
    } else {
        [r1, r2]
            .iter()
            .enumerate()
            .map(|(i, r)| WeightTerm { alpha: r.p - 1.0, beta: r.q - 1.0, smooth: MatRational::from_poly(column(i)) })
            .collect()
    };
    WeightFn { terms }
}

/// The Bochner pair `(T R Tᵀ / a2, 𝔙𝔘)` obtained by swapping the factors of `diag(𝔡₁, 𝔡₂) = 𝔘𝔙`.
pub fn darboux_pair(f: &FirstOrderOp, g: &Mat2, r1: &ScalarClassicalPair, r2: &ScalarClassicalPair) -> Result<BochnerPair> {
    if r1.a2 != r2.a2 || !r1.a2.is_hypergeometric() {
        return Err(BochnerError::UnsupportedLeadingCoefficient);
    }
    let fac = factor_diagonal(&f.s1, &f.s0, &f.c, g, f.sign, &r1.a2)?;
    for (i, r) in [r1, r2].iter().enumerate() {
        let d = r.matches(fac.alpha[i], fac.beta[i], fac.gamma[i]);
        if !(d <= CLASSICAL_TOL * (1.0 + r.alpha.abs() + r.beta.abs() + r.gamma.abs())) {
            return Err(BochnerError::ClassicalMismatch { index: i, residual: d });
        }
    }
    let sym = symmetry_residual(f, g, r1, r2);
    if !(sym <= SYMMETRY_TOL) {
        return Err(BochnerError::SymmetryConditionFailed { residual: sym });
    }
    let conc = concomitant(f, r1, r2);
    if !(conc <= CONCOMITANT_TOL) {
        return Err(BochnerError::BoundaryTermNonzero { residual: conc });
    }
    let weight = darboux_weight_fn(f, r1, r2);
    let (op, _) = compose(&f.v(g), &f.u()).to_diffop(r1.a2);
    let m0 = quad::moment(0, &weight, quad::DEFAULT_NODES)?;
    let m1 = quad::moment(1, &weight, quad::DEFAULT_NODES)?;
    let b0 = m1 * m0.inverse().ok_or(BochnerError::SingularNorm)?;
    Ok(BochnerPair { point: None, weight, op, gamma: 0.5 * (op.a11 * b0).trace(), family: None })
}

/// Largest coefficient mismatch of `(An + C) P(x, n) = diag(p₁', p₂') S(x) + diag(p₁, p₂) C` for `n ≤ n_max`,
/// relative to `max(1, ‖right side‖)`, with `P` the monic orthogonal polynomials of the pair's weight.
pub fn verify_intertwine(
    pair: &BochnerPair,
    f: &FirstOrderOp,
    r1: &ScalarClassicalPair,
    r2: &ScalarClassicalPair,
    n_max: usize,
) -> Result<f64> {
    let mu = pair.weight.discretize(quad::DEFAULT_NODES)?;
    let ops = generate_ops(&mu, n_max)?;
    let (p1, p2) = (r1.monic(n_max), r2.monic(n_max));
    let s = f.s();
    let mut worst = 0.0_f64;
    for n in 0..=n_max {
        let k = f.s1 * n as f64 + f.c;
        if k.det().abs() <= 1e-12 * k.norm_max().powi(2).max(f64::MIN_POSITIVE) {
            return Err(BochnerError::SingularIntertwiner { n });
        }
        let dm = |a: &Poly, b: &Poly| {
            let len = a.coeffs.len().max(b.coeffs.len());
            let at = |p: &Poly, i: usize| p.coeffs.get(i).copied().unwrap_or(0.0);
            MatPoly::new((0..len).map(|i| Mat2::diag(at(a, i), at(b, i))).collect())
        };
        let rhs = dm(&p1[n].deriv(), &p2[n].deriv()).mul(&s).add(&dm(&p1[n], &p2[n]).right_mul(&f.c));
        let lhs = ops.polys[n].left_mul(&k);
        worst = worst.max(lhs.sub(&rhs).norm_max() / rhs.norm_max().max(1.0));
    }
    Ok(worst)
}

/// Largest `‖Λ(n) − (An+C)⁻¹ diag(λ₁(n), λ₂(n)) (An+C)‖ / max(1, ‖Λ(n)‖)` for `n ≤ n_max`.
pub fn lambda_conjugation_residual(
    op: &DiffOp2,
    f: &FirstOrderOp,
    r1: &ScalarClassicalPair,
    r2: &ScalarClassicalPair,
    n_max: usize,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for n in 0..=n_max {
        let nf = n as f64;
        let k = f.s1 * nf + f.c;
        let ki = k.inverse().ok_or(BochnerError::SingularIntertwiner { n })?;
        let lam = op.lambda(nf);
        let conj = ki * Mat2::diag(r1.lambda(nf), r2.lambda(nf)) * k;
        worst = worst.max((lam - conj).norm_max() / lam.norm_max().max(1.0));
    }
    Ok(worst)
}

/// Unknowns `(A, B, C, G)` row-major.
fn unpack(v: &[f64]) -> [Mat2; 4] {
    [0, 4, 8, 12].map(|o| Mat2::new(v[o], v[o + 1], v[o + 2], v[o + 3]))
}

/// Residuals of an admissible factorization of a hypergeometric diagonal operator with `r₁ = r₂`:
/// `det S = sign·a2` (3), diagonality of `AG`, `BG`, `C(G + adj A)` (6), `α₁ = α₂`, `β₁ = β₂` (2),
/// and the coefficients of `C T Tᵀ − L Tᵀ − a2 T'ᵀ + a2 Fᵀ` with `L = diag((αᵢ+2)x + βᵢ)` (12).
/// Without `symmetric` only the first nine are returned.
pub fn factorization_residuals(v: &[f64], sign: f64, symmetric: bool) -> Vec<f64> {
    let [a, b, c, g] = unpack(v);
    let a2 = QuadCoeff::hypergeometric();
    let f = FirstOrderOp { s1: a, s0: b, c, sign };
    let mut r = vec![a.det() - sign * a2.a22, (a * b.adj()).trace() - sign * a2.a21, b.det() - sign * a2.a20];
    for x in [a * g, b * g, c * (g + a.adj())] {
        r.push(x.e[1]);
        r.push(x.e[2]);
    }
    if !symmetric {
        return r;
    }
    let (ag, bg) = (a * g, b * g);
    let al: Vec<f64> = (0..2).map(|i| sign * (2.0 * a.det() + (a * c.adj()).trace() + ag.get(i, i))).collect();
    let be: Vec<f64> = (0..2).map(|i| sign * ((b * c.adj()).trace() + (a * b.adj()).trace() + bg.get(i, i))).collect();
    r.push(al[0] - al[1]);
    r.push(be[0] - be[1]);
    let t = f.t();
    let tt = t.transpose();
    let l = MatPoly::linear(Mat2::diag(al[0] + 2.0, al[1] + 2.0), Mat2::diag(be[0], be[1]));
    let a2p = a2.poly();
    let m = t
        .mul(&tt)
        .left_mul(&c)
        .sub(&l.mul(&tt))
        .sub(&MatPoly::constant(t.coeff(1).transpose()).scalar_mul(&a2p))
        .add(&MatPoly::constant(f.partner_f(&g).transpose()).scalar_mul(&a2p));
    for k in 0..3 {
        r.extend_from_slice(&m.coeff(k).e);
    }
    r
}

struct SearchProblem {
    x: DVector<f64>,
    sign: f64,
    symmetric: bool,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for SearchProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_vec(factorization_residuals(self.x.as_slice(), self.sign, self.symmetric)))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.x.len();
        let m = factorization_residuals(self.x.as_slice(), self.sign, self.symmetric).len();
        let mut jac = DMatrix::zeros(m, n);
        let mut xp = self.x.clone();
        for j in 0..n {
            let h = 1e-6 * self.x[j].abs().max(1.0);
            let x0 = xp[j];
            xp[j] = x0 + h;
            let fp = factorization_residuals(xp.as_slice(), self.sign, self.symmetric);
            xp[j] = x0 - h;
            let fm = factorization_residuals(xp.as_slice(), self.sign, self.symmetric);
            xp[j] = x0;
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Some(jac)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarbouxSearchConfig {
    pub seed: u64,
    /// Stop after this many admissible factorizations.
    pub count: usize,
    pub max_restarts: usize,
    pub batch: usize,
    /// Largest admissible unknown.
    pub bound: f64,
    pub n_intertwine: usize,
    pub cert: CertConfig,
}

impl Default for DarbouxSearchConfig {
    fn default() -> Self {
        DarbouxSearchConfig {
            seed: 0,
            count: 5,
            max_restarts: 4096,
            batch: 64,
            bound: 20.0,
            n_intertwine: 10,
            cert: CertConfig::default(),
        }
    }
}

/// An admissible factorization together with the pair it produces and its checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarbouxCandidate {
    pub restart: usize,
    pub op: FirstOrderOp,
    #[serde(rename = "G")]
    pub g: Mat2,
    pub r1: ScalarClassicalPair,
    pub r2: ScalarClassicalPair,
    pub factorization: DiagonalFactorization,
    pub search_residual: f64,
    pub symmetry: f64,
    pub irreducibility: f64,
    pub pair: BochnerPair,
    pub certificate: Certificate,
    pub intertwine: f64,
    pub normalized: Option<Normalized>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarbouxSearchReport {
    pub seed: u64,
    pub restarts: usize,
    /// Restarts whose residual reached `1e-12`.
    pub converged: usize,
    pub candidates: Vec<DarbouxCandidate>,
}

/// One Levenberg–Marquardt solve from a seeded random start; returns the unknowns, sign and residual.
pub fn solve_restart(seed: u64, restart: usize, symmetric: bool) -> (Vec<f64>, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let sign = if restart % 2 == 0 { 1.0 } else { -1.0 };
    let x0: Vec<f64> = (0..16).map(|_| rng.random_range(-1.5..1.5)).collect();
    let problem = SearchProblem { x: DVector::from_vec(x0), sign, symmetric };
    let (solved, _) = LevenbergMarquardt::new().with_ftol(1e-15).with_xtol(1e-15).with_patience(400).minimize(problem);
    let x = solved.x.as_slice().to_vec();
    let res = factorization_residuals(&x, sign, symmetric).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (x, sign, res)
}

/// Structural admissibility and all checks for the solution of one restart.
fn evaluate_restart(restart: usize, x: &[f64], sign: f64, res: f64, cfg: &DarbouxSearchConfig) -> Option<DarbouxCandidate> {
    if !(res <= 1e-12) || x.iter().any(|v| !(v.abs() <= cfg.bound)) {
        return None;
    }
    let [a, b, c, g] = unpack(x);
    let op = FirstOrderOp { s1: a, s0: b, c, sign };
    let a2 = QuadCoeff::hypergeometric();
    let factorization = factor_diagonal(&a, &b, &c, &g, sign, &a2).ok()?;
    let r = |i: usize| scalar_classical(a2, factorization.alpha[i], factorization.beta[i], factorization.gamma[i]);
    let (r1, r2) = (r(0).ok()?, r(1).ok()?);
    let pair = darboux_pair(&op, &g, &r1, &r2).ok()?;
    let irreducibility = weight_commutator_defect(&pair.weight);
    if !(irreducibility > REDUCIBLE_TOL) {
        return None;
    }
    let mu = pair.weight.discretize(cfg.cert.m).ok()?;
    if !mu.non_pd_nodes().is_empty() {
        return None;
    }
    let certificate = certify(&pair, &cfg.cert).ok()?;
    let intertwine = verify_intertwine(&pair, &op, &r1, &r2, cfg.n_intertwine).unwrap_or(f64::INFINITY);
    let m0 = quad::moment(0, &pair.weight, cfg.cert.m).ok()?;
    let m1 = quad::moment(1, &pair.weight, cfg.cert.m).ok()?;
    let b0 = m1 * m0.inverse()?;
    let normalized = normalize_pair(&pair.op.a11, &pair.op.a10, &pair.op.a0, &b0).ok();
    Some(DarbouxCandidate {
        restart,
        op,
        g,
        r1,
        r2,
        factorization,
        search_residual: res,
        symmetry: symmetry_residual(&op, &g, &r1, &r2),
        irreducibility,
        pair,
        certificate,
        intertwine,
        normalized,
    })
}

/// Seeded multistart search for admissible factorizations; restarts run in parallel batches, results in restart order.
pub fn search(cfg: &DarbouxSearchConfig) -> DarbouxSearchReport {
    let mut candidates = Vec::new();
    let (mut restarts, mut converged) = (0, 0);
    while candidates.len() < cfg.count && restarts < cfg.max_restarts {
        let hi = (restarts + cfg.batch).min(cfg.max_restarts);
        let batch: Vec<(bool, Option<DarbouxCandidate>)> = (restarts..hi)
            .into_par_iter()
            .map(|i| {
                let (x, sign, res) = solve_restart(cfg.seed, i, true);
                (res <= 1e-12, evaluate_restart(i, &x, sign, res, cfg))
            })
            .collect();
        for (ok, cand) in batch {
            converged += ok as usize;
            if let Some(c) = cand {
                if candidates.len() < cfg.count {
                    candidates.push(c);
                }
            }
        }
        restarts = hi;
    }
    DarbouxSearchReport { seed: cfg.seed, restarts, converged, candidates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn found() -> &'static DarbouxSearchReport {
        static REPORT: OnceLock<DarbouxSearchReport> = OnceLock::new();
        REPORT.get_or_init(|| search(&DarbouxSearchConfig { count: 2, ..DarbouxSearchConfig::default() }))
    }

    fn swap() -> Mat2 {
        Mat2::new(0.0, 1.0, 1.0, 0.0)
    }

    #[test]
    fn composition_matches_sequential_application() {
        let u = Op1 { lead: MatPoly::linear(Mat2::new(0.3, -1.0, 2.0, 0.5), Mat2::new(1.0, 0.2, -0.4, 0.7)), zeroth: Mat2::new(0.1, 0.9, -0.3, 1.2) };
        let v = Op1 { lead: MatPoly::linear(Mat2::new(-0.6, 0.4, 0.8, 1.1), Mat2::new(0.5, -0.5, 0.25, 2.0)), zeroth: Mat2::new(1.5, -0.2, 0.6, 0.3) };
        let p = MatPoly::new(vec![Mat2::new(1.0, 2.0, 3.0, 4.0), Mat2::new(-1.0, 0.5, 0.0, 2.0), Mat2::new(0.3, 0.0, -0.7, 1.0), Mat2::new(0.0, 1.0, 1.0, 0.0)]);
        let direct = v.apply(&u.apply(&p));
        assert!(direct.sub(&compose(&u, &v).apply(&p)).norm_max() < 1e-12);
    }

    #[test]
    fn monomial_square_factorization() {
        let a2 = QuadCoeff::new(1.0, 0.0, 0.0);
        let f = factor_diagonal(&Mat2::diag(1.0, -1.0), &Mat2::zero(), &Mat2::zero(), &Mat2::zero(), -1.0, &a2).unwrap();
        assert_eq!(f.alpha, [2.0, 2.0]);
        assert_eq!(f.beta, [0.0, 0.0]);
        assert_eq!(f.gamma, [0.0, 0.0]);
        assert!(f.product_residual < 1e-12 && f.off_diagonal < 1e-12);
    }

    #[test]
    fn collapsed_coefficients_without_c_and_g() {
        let (a, b) = (swap(), Mat2::identity());
        let f = factor_diagonal(&a, &b, &Mat2::zero(), &Mat2::zero(), 1.0, &QuadCoeff::hypergeometric()).unwrap();
        for i in 0..2 {
            assert_eq!(f.alpha[i], 2.0 * a.det());
            assert_eq!(f.beta[i], (a * b.adj()).trace());
            assert_eq!(f.gamma[i], 0.0);
        }
        assert!(f.product_residual < 1e-12);
    }

    #[test]
    fn factorization_errors() {
        let hyp = QuadCoeff::hypergeometric();
        let r = factor_diagonal(&swap(), &Mat2::identity(), &Mat2::zero(), &Mat2::diag(1.0, 2.0), 1.0, &hyp);
        assert!(matches!(r, Err(BochnerError::DiagonalityViolated { which: "AG", .. })));
        let r = factor_diagonal(&swap(), &Mat2::scalar(2.0), &Mat2::zero(), &Mat2::zero(), 1.0, &hyp);
        assert!(matches!(r, Err(BochnerError::DeterminantMismatch { .. })));
    }

    #[test]
    fn legendre_scalar_pair() {
        let r = scalar_classical(QuadCoeff::hypergeometric(), -2.0, 0.0, 0.0).unwrap();
        assert_eq!((r.p, r.q), (0.0, 0.0));
        let p2 = &r.monic(2)[2];
        assert!((p2.eval(0.0) + 1.0 / 3.0).abs() < 1e-15 && (p2.coeffs[2] - 1.0).abs() < 1e-15);
        for n in 0..8 {
            assert_eq!(r.lambda(n as f64), -((n * (n + 1)) as f64));
        }
        assert!(r.eigen_residual(12) < 1e-10);
        assert!(r.orthogonality_residual(12, 64).unwrap() < 1e-10);
    }

    #[test]
    fn jacobi_first_monic() {
        let r = scalar_classical(QuadCoeff::hypergeometric(), -4.0, 1.0, 0.3).unwrap();
        assert_eq!((r.p, r.q), (0.5, 1.5));
        let p1 = &r.monic(1)[1];
        assert!((p1.eval(0.0) + (r.q - r.p) / (r.p + r.q + 2.0)).abs() < 1e-15);
        assert!(r.eigen_residual(12) < 1e-10);
        assert!(r.orthogonality_residual(12, 64).unwrap() < 1e-10);
    }

    #[test]
    fn non_integrable_scalar_weight() {
        let r = scalar_classical(QuadCoeff::hypergeometric(), 0.5, 0.0, 0.0);
        assert!(matches!(r, Err(BochnerError::NonIntegrableWeight { .. })));
        let r = scalar_classical(QuadCoeff::new(0.0, 0.0, 1.0), -2.0, 0.0, 0.0);
        assert!(matches!(r, Err(BochnerError::UnsupportedLeadingCoefficient)));
    }

    #[test]
    fn legendre_factorization_has_boundary_term() {
        let f = FirstOrderOp { s1: swap(), s0: Mat2::identity(), c: Mat2::zero(), sign: 1.0 };
        let r = scalar_classical(QuadCoeff::hypergeometric(), -2.0, 0.0, 0.0).unwrap();
        assert!(symmetry_residual(&f, &Mat2::zero(), &r, &r) < 1e-12);
        assert!(matches!(darboux_pair(&f, &Mat2::zero(), &r, &r), Err(BochnerError::BoundaryTermNonzero { .. })));
    }

    #[test]
    fn diagonal_factorization_gives_reducible_pair() {
        let (c1, c2) = (0.3, -0.2);
        let f = FirstOrderOp { s1: Mat2::diag(1.0, -1.0), s0: Mat2::identity(), c: Mat2::diag(c1, c2), sign: 1.0 };
        let hyp = QuadCoeff::hypergeometric();
        let fac = factor_diagonal(&f.s1, &f.s0, &f.c, &Mat2::zero(), 1.0, &hyp).unwrap();
        let r1 = scalar_classical(hyp, fac.alpha[0], fac.beta[0], fac.gamma[0]).unwrap();
        let r2 = scalar_classical(hyp, fac.alpha[1], fac.beta[1], fac.gamma[1]).unwrap();
        assert!((r1.p - 0.2).abs() < 1e-14 && (r1.q - 0.3).abs() < 1e-14);
        let pair = darboux_pair(&f, &Mat2::zero(), &r1, &r2).unwrap();
        assert!(weight_commutator_defect(&pair.weight) < 1e-12);
        let x = 0.4;
        let w = pair.weight.eval(x).unwrap();
        let expect = Mat2::diag((1.0 - x) / (1.0 + x), (1.0 + x) / (1.0 - x)) * r1.weight(x);
        assert!((w - expect).norm_max() < 1e-14);
        assert!(verify_intertwine(&pair, &f, &r1, &r2, 10).unwrap() < 1e-9);
    }

    #[test]
    fn search_candidates_pass_all_checks() {
        let rep = found();
        assert_eq!(rep.candidates.len(), 2);
        let tol = CertConfig::default().tol;
        for c in &rep.candidates {
            assert!(c.factorization.off_diagonal < 1e-12 && c.factorization.product_residual < 1e-12);
            assert!(c.certificate.passes(&tol), "{:?}", c.certificate.failures(&tol));
            assert!(c.intertwine < 1e-7);
            assert!(c.irreducibility > REDUCIBLE_TOL);
            let lam = lambda_conjugation_residual(&c.pair.op, &c.op, &c.r1, &c.r2, 10).unwrap();
            assert!(lam < 1e-9, "{lam}");
        }
    }

    #[test]
    fn weight_determinant_and_symmetry() {
        let c = &found().candidates[0];
        for x in [-0.7, -0.1, 0.35, 0.8] {
            let w = c.pair.weight.eval(x).unwrap();
            assert!(w.skew_defect() <= 1e-14 * w.norm_max());
            let a2 = 1.0 - x * x;
            let t = c.op.t().eval(x);
            let expect = c.r1.weight(x) * c.r2.weight(x) * t.det().powi(2) / (a2 * a2);
            assert!((w.det() - expect).abs() < 1e-12 * expect.abs());
        }
    }

    #[test]
    fn intertwine_degree_zero_is_c() {
        let c = &found().candidates[0];
        let one = verify_intertwine(&c.pair, &c.op, &c.r1, &c.r2, 0).unwrap();
        assert!(one < 1e-14);
    }

    #[test]
    fn search_is_deterministic() {
        let a = solve_restart(0, 3, true);
        let b = solve_restart(0, 3, true);
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn dropping_symmetry_breaks_the_pair() {
        let hyp = QuadCoeff::hypergeometric();
        let mut failures = 0;
        let mut built = 0;
        for i in 0..40 {
            let (x, sign, res) = solve_restart(7, i, false);
            if !(res < 1e-12) {
                continue;
            }
            let [a, b, c, g] = unpack(&x);
            let f = FirstOrderOp { s1: a, s0: b, c, sign };
            let fac = factor_diagonal(&a, &b, &c, &g, sign, &hyp).unwrap();
            let r = |i: usize| scalar_classical(hyp, fac.alpha[i], fac.beta[i], fac.gamma[i]);
            let (Ok(r1), Ok(r2)) = (r(0), r(1)) else { continue };
            if weight_commutator_defect(&darboux_weight_fn(&f, &r1, &r2)) < REDUCIBLE_TOL {
                continue;
            }
            built += 1;
            if matches!(darboux_pair(&f, &g, &r1, &r2), Err(BochnerError::SymmetryConditionFailed { .. })) {
                failures += 1;
            }
        }
        assert!(built > 0 && failures == built, "{failures} of {built}");
    }
}
