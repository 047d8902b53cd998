//! Monic orthogonal matrix polynomials, recurrence coefficients and the update equations they satisfy.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::algebra::{commutator, Mat2, MatPoly, QuadCoeff};
use crate::error::{BochnerError, Result};
use crate::ops::{DiffOp2, ShiftBandOp};
use crate::quad::DiscreteMeasure;

pub const GRAM_COND_LIMIT: f64 = 1e12;
pub const SINGULAR_TOL: f64 = 1e-10;

/// Monic orthogonal polynomials `P(x,0..=N)` with norms and recurrence coefficients (`C(0) = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct OpSeq {
    pub polys: Vec<MatPoly>,
    pub m: Vec<Mat2>,
    pub b: Vec<Mat2>,
    pub c: Vec<Mat2>,
}

fn spd_condition(m: &Mat2) -> f64 {
    match m.symmetric_part().real_eigenvalues() {
        Some((hi, lo)) if lo != 0.0 => (hi / lo).abs().max((lo / hi).abs()),
        _ => f64::INFINITY,
    }
}

/// Stieltjes procedure on the discrete measure: `P(n+1) = xP(n) − B(n)P(n) − C(n)P(n−1)`.
pub fn generate_ops(mu: &DiscreteMeasure, n_max: usize) -> Result<OpSeq> {
    let xs = &mu.nodes;
    let mut polys = vec![MatPoly::constant(Mat2::identity())];
    let mut vals: Vec<Mat2> = vec![Mat2::identity(); xs.len()];
    let mut prev_vals: Vec<Mat2> = vec![Mat2::zero(); xs.len()];
    let (mut ms, mut bs, mut cs) = (Vec::new(), Vec::new(), Vec::new());
    for n in 0..=n_max {
        let mn = mu.pair(&vals, &vals);
        let cond = spd_condition(&mn);
        let mn_inv = mn.inverse().filter(|_| cond <= GRAM_COND_LIMIT).ok_or(BochnerError::GramBreakdown { n, cond })?;
        let xvals: Vec<Mat2> = vals.iter().zip(xs).map(|(v, x)| *v * *x).collect();
        let bn = mu.pair(&xvals, &vals) * mn_inv;
        let cn = if n == 0 { Mat2::zero() } else { mn * ms.last().copied().and_then(|m: Mat2| m.inverse()).unwrap() };
        ms.push(mn);
        bs.push(bn);
        cs.push(cn);
        if n == n_max {
            break;
        }
        let next_vals: Vec<Mat2> =
            xvals.iter().zip(&vals).zip(&prev_vals).map(|((xv, v), pv)| *xv - bn * *v - cn * *pv).collect();
        let p = &polys[n];
        let mut next = p.shift_x().sub(&p.left_mul(&bn));
        if n > 0 {
            next = next.sub(&polys[n - 1].left_mul(&cn));
        }
        polys.push(next);
        prev_vals = vals;
        vals = next_vals;
    }
    Ok(OpSeq { polys, m: ms, b: bs, c: cs })
}

impl OpSeq {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Largest `‖⟨P_n, P_m⟩‖ / √(‖M_n‖‖M_m‖)` over `n ≠ m`.
    pub fn orthogonality_defect(&self, mu: &DiscreteMeasure) -> f64 {
        let vals: Vec<Vec<Mat2>> = self.polys.iter().map(|p| mu.values(p)).collect();
        let mut worst = 0.0_f64;
        for i in 0..vals.len() {
            for j in 0..i {
                let ip = mu.pair(&vals[i], &vals[j]).norm_max();
                worst = worst.max(ip / (self.m[i].norm_max() * self.m[j].norm_max()).sqrt());
            }
        }
        worst
    }

    /// Largest `‖lead(P_n) − I‖` together with degree mismatches.
    pub fn monicity_defect(&self) -> f64 {
        self.polys
            .iter()
            .enumerate()
            .map(|(n, p)| if p.degree() != n as i64 { f64::INFINITY } else { (p.leading() - Mat2::identity()).norm_max() })
            .fold(0.0, f64::max)
    }

    /// Coefficient residual of `xP(n) = P(n+1) + B(n)P(n) + C(n)P(n−1)`.
    pub fn three_term_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for n in 0..self.polys.len().saturating_sub(1) {
            let mut rhs = self.polys[n + 1].add(&self.polys[n].left_mul(&self.b[n]));
            if n > 0 {
                rhs = rhs.add(&self.polys[n - 1].left_mul(&self.c[n]));
            }
            let lhs = self.polys[n].shift_x();
            worst = worst.max(lhs.sub(&rhs).norm_max() / lhs.norm_max().max(1.0));
        }
        worst
    }

    /// `‖M(n) − C(n)⋯C(1)M(0)‖ / ‖M(n)‖`.
    pub fn norm_product_defect(&self) -> f64 {
        let mut acc = self.m[0];
        let mut worst = 0.0_f64;
        for n in 1..self.m.len() {
            acc = self.c[n] * acc;
            worst = worst.max((acc - self.m[n]).norm_max() / self.m[n].norm_max());
        }
        worst
    }
}

fn vec4(x: &Mat2) -> Vector4<f64> {
    Vector4::new(x.e[0], x.e[1], x.e[2], x.e[3])
}

fn unvec4(v: &Vector4<f64>) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

/// Matrix of the linear map `X ↦ f(X)` in row-major vectorization.
pub fn vectorize(f: impl Fn(Mat2) -> Mat2) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    for idx in 0..4 {
        let mut x = Mat2::zero();
        x.e[idx] = 1.0;
        out.set_column(idx, &vec4(&f(x)));
    }
    out
}

/// Linear systems governing the updates of `B(n)` and `C(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HkSystem {
    pub h1: Matrix4<f64>,
    pub h0: Matrix4<f64>,
    pub k1: Matrix4<f64>,
    pub k0: Matrix4<f64>,
    pub sigma: Vector4<f64>,
    pub op: DiffOp2,
}

impl HkSystem {
    pub fn h(&self, n: f64) -> Matrix4<f64> {
        self.h1 * n + self.h0
    }

    pub fn k(&self, n: f64) -> Matrix4<f64> {
        self.k1 * n + self.k0
    }

    /// `vec([B, [B, A11 n + A0]] − 2 a2(B))`.
    pub fn theta(&self, n: f64, b: &Mat2) -> Vector4<f64> {
        let l = self.op.a11 * n + self.op.a0;
        vec4(&(commutator(b, &commutator(b, &l)) - self.op.a2.eval_mat(b) * 2.0))
    }
}

pub fn build_hk(d: &DiffOp2) -> HkSystem {
    let a22 = d.a2.a22;
    let (a11, a0) = (d.a11, d.a0);
    HkSystem {
        h1: vectorize(|x| x * (2.0 * a22) - x * a11 + a11 * x),
        h0: vectorize(|x| x * (-2.0 * a22) + x * (a11 - a0) + a0 * x),
        k1: vectorize(|x| x * (4.0 * a22) - x * a11 + a11 * x),
        k0: vectorize(|x| x * (-6.0 * a22) + x * a11 * 2.0 - x * a0 + a0 * x),
        sigma: vec4(&Mat2::identity()),
        op: *d,
    }
}

fn solve4(a: &Matrix4<f64>, rhs: &Vector4<f64>, n: i64) -> Result<Vector4<f64>> {
    if is_singular4(a) {
        return Err(BochnerError::SingularUpdate { n });
    }
    a.lu().solve(rhs).ok_or(BochnerError::SingularUpdate { n })
}

/// `|det A| < 1e−10 ‖A‖⁴` with the Frobenius norm.
pub fn is_singular4(a: &Matrix4<f64>) -> bool {
    a.determinant().abs() < SINGULAR_TOL * a.norm().powi(4)
}

/// `B(n+1)` from `H(n+2) b(n+1) = H(n) b(n) − 2 a21 σ`.
pub fn b_update_step(b_n: &Mat2, n: i64, d: &DiffOp2) -> Result<Mat2> {
    let sys = build_hk(d);
    b_update_with(&sys, b_n, n)
}

pub fn b_update_with(sys: &HkSystem, b_n: &Mat2, n: i64) -> Result<Mat2> {
    let nf = n as f64;
    let rhs = sys.h(nf) * vec4(b_n) - sys.sigma * (2.0 * sys.op.a2.a21);
    solve4(&sys.h(nf + 2.0), &rhs, n).map(|v| unvec4(&v))
}

/// `C(n+1)` from `K(n+2) c(n+1) = K(n) c(n) + θ(n)`.
pub fn c_update_step(c_n: &Mat2, b_n: &Mat2, n: i64, d: &DiffOp2) -> Result<Mat2> {
    let sys = build_hk(d);
    c_update_with(&sys, c_n, b_n, n)
}

pub fn c_update_with(sys: &HkSystem, c_n: &Mat2, b_n: &Mat2, n: i64) -> Result<Mat2> {
    let nf = n as f64;
    let rhs = sys.k(nf) * vec4(c_n) + sys.theta(nf, b_n);
    solve4(&sys.k(nf + 2.0), &rhs, n).map(|v| unvec4(&v))
}

/// Iterate the `B` update from `B(0)`; returns `B(0..=n_max)`.
pub fn iterate_b(b0: &Mat2, d: &DiffOp2, n_max: usize) -> Result<Vec<Mat2>> {
    let sys = build_hk(d);
    let mut out = vec![*b0];
    for n in 0..n_max {
        let next = b_update_with(&sys, &out[n], n as i64)?;
        out.push(next);
    }
    Ok(out)
}

/// Normalized residual of the nonlinear norm update at `n`.
pub fn m_update_residual(m_prev: &Mat2, m_n: &Mat2, m_next: &Mat2, b_n: &Mat2, n: i64, d: &DiffOp2) -> Result<f64> {
    let mi = m_prev.inverse().ok_or(BochnerError::SingularNorm)?;
    let a22 = d.a2.a22;
    let nf = n as f64;
    let lam = d.lambda(nf);
    let a11 = d.a11;
    let lhs = *m_next * (2.0 * a22 * (2.0 * nf + 1.0)) + a11 * *m_next + *m_next * a11.transpose();
    let t1 = *m_n * (mi * (2.0 * a22 * (2.0 * nf - 3.0)) + mi * a11 + a11.transpose() * mi) * *m_n;
    let bl = commutator(b_n, &lam);
    let t2 = (*b_n * bl - bl * *b_n) * *m_n;
    let t3 = d.a2.eval_mat(b_n) * *m_n * 2.0;
    let res = lhs - (t1 + t2 - t3);
    let scale = lhs.norm_max() + t1.norm_max() + t2.norm_max() + t3.norm_max();
    Ok(res.norm_max() / scale.max(f64::MIN_POSITIVE))
}

/// `b(n) = H(n)⁻¹H(ℓ)H(n+1)⁻¹[H(ℓ+1)b(ℓ) − 2a21(n−ℓ)H((n+ℓ+1)/2)H(ℓ)⁻¹σ]`, valid for real `n`.
pub fn b_closed_form(ell: f64, b_ell: &Mat2, n: f64, sys: &HkSystem, a21: f64) -> Result<Mat2> {
    let inv = |k: f64| {
        let h = sys.h(k);
        if is_singular4(&h) {
            return Err(BochnerError::SingularH { k });
        }
        h.try_inverse().ok_or(BochnerError::SingularH { k })
    };
    let mut inner = sys.h(ell + 1.0) * vec4(b_ell);
    if a21 != 0.0 {
        inner -= sys.h((n + ell + 1.0) / 2.0) * inv(ell)? * sys.sigma * (2.0 * a21 * (n - ell));
    }
    Ok(unvec4(&(inv(n)? * sys.h(ell) * inv(n + 1.0)? * inner)))
}

/// Loci on which `det H(n)` vanishes identically in `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExceptionalCase {
    I,
    II,
    III,
    IV,
    V,
    /// `a22 ≠ 0`, `a = 0`, `λ = a22`, `b² − c² + d² = a22²`.
    VI,
}

impl ExceptionalCase {
    pub fn tag(&self) -> &'static str {
        match self {
            ExceptionalCase::I => "i",
            ExceptionalCase::II => "ii",
            ExceptionalCase::III => "iii",
            ExceptionalCase::IV => "iv",
            ExceptionalCase::V => "v",
            ExceptionalCase::VI => "vi",
        }
    }
}

pub const EXCEPTIONAL_TOL: f64 = 1e-10;

/// Operator in the normalized form `A11 = [[λ+d, b+c], [b−c, λ−d]]`, `A0 = diag(a, −a)`.
pub fn normalized_op(a2: QuadCoeff, a: f64, b: f64, c: f64, d: f64, lam: f64, a10: Mat2) -> DiffOp2 {
    DiffOp2::new(a2, Mat2::new(lam + d, b + c, b - c, lam - d), a10, Mat2::diag(a, -a))
}

/// Which exceptional conditions hold, each defining equation tested at `1e−10`.
pub fn exceptional_cases(a22: f64, a: f64, b: f64, c: f64, d: f64, lam: f64) -> BTreeSet<ExceptionalCase> {
    let z = |v: f64| v.abs() <= EXCEPTIONAL_TOL;
    let pm = z(b * b - c * c);
    let mut out = BTreeSet::new();
    if z(a22) {
        if z(lam * lam - (b * b - c * c + d * d)) && z(a) {
            out.insert(ExceptionalCase::I);
        }
        if pm && z(lam - d) {
            out.insert(ExceptionalCase::II);
        }
        if pm && z(lam + d) {
            out.insert(ExceptionalCase::III);
        }
    } else if z(a) && z(lam - a22) && z(b * b - c * c + d * d - a22 * a22) {
        out.insert(ExceptionalCase::VI);
    }
    if z(a22 - d) && pm && z(lam - (d + 2.0 * a)) {
        out.insert(ExceptionalCase::IV);
    }
    if z(a22 + d) && pm && z(lam + d + 2.0 * a) {
        out.insert(ExceptionalCase::V);
    }
    out
}

/// Direct test that `det H(n)`, a quartic in `n`, vanishes at six sample points.
pub fn det_h_vanishes(a22: f64, a: f64, b: f64, c: f64, d: f64, lam: f64) -> bool {
    let op = normalized_op(QuadCoeff::new(a22, 0.0, 0.0), a, b, c, d, lam, Mat2::zero());
    let sys = build_hk(&op);
    let scale = sys.h1.norm() + sys.h0.norm();
    [-1.7, -0.4, 0.3, 1.1, 2.6, 4.9].iter().all(|&n| sys.h(n).determinant().abs() <= 1e-9 * (scale * (1.0 + n.abs())).powi(4))
}

/// Band components `Z_k(n)` of `ad_ℒ²(Λ) − 2a2(ℒ)` for `k = 2, 1, 0, −1, −2`, with normalized norms.
#[derive(Clone, Debug, PartialEq)]
pub struct AdResiduals {
    /// `z[n][2 − k]` is `Z_k(n)`.
    pub z: Vec<[Mat2; 5]>,
    /// `‖Z_k(n)‖` over the largest `‖ad²_j(n)‖ + ‖2a2(ℒ)_j(n)‖` across the five bands.
    pub relative: Vec<[f64; 5]>,
}

impl AdResiduals {
    pub fn max_relative(&self, k: i64) -> f64 {
        self.relative.iter().map(|r| r[(2 - k) as usize]).fold(0.0, f64::max)
    }
}

fn lambda_op(d: &DiffOp2, lo: i64, hi: i64) -> ShiftBandOp {
    ShiftBandOp::diagonal(lo, hi, |n| d.lambda(n as f64))
}

fn band_residuals(l: &ShiftBandOp, lam: &ShiftBandOp, a2: &QuadCoeff, n_max: usize) -> Result<AdResiduals> {
    let ad2 = l.commutator(&l.commutator(lam));
    let rhs = l.a2_of(a2).scale(2.0);
    let mut z = Vec::with_capacity(n_max + 1);
    let mut relative = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max as i64 {
        let mut zn = [Mat2::zero(); 5];
        let mut rn = [0.0; 5];
        let mut s = 0.0_f64;
        for (i, k) in (-2..=2).rev().enumerate() {
            let x = ad2.coeff(k, n)?;
            let y = rhs.coeff(k, n)?;
            zn[i] = x - y;
            s = s.max(x.norm_max() + y.norm_max());
        }
        for i in 0..5 {
            rn[i] = if s > 0.0 { zn[i].norm_max() / s } else { 0.0 };
        }
        z.push(zn);
        relative.push(rn);
    }
    Ok(AdResiduals { z, relative })
}

/// `ad_ℒ²(Λ) − 2a2(ℒ)` for `ℒ` built from `B`, `C` (needs entries up to `n_max + 4`).
pub fn ad_residuals(b: &[Mat2], c: &[Mat2], d: &DiffOp2, n_max: usize) -> Result<AdResiduals> {
    let l = ShiftBandOp::jacobi(b, c, 3);
    let hi = b.len().min(c.len()) as i64 - 1;
    band_residuals(&l, &lambda_op(d, -3, hi), &d.a2, n_max)
}

/// Same as [`ad_residuals`] for an arbitrary band operator `ℒ`.
pub fn ad_residuals_op(l: &ShiftBandOp, d: &DiffOp2, n_max: usize) -> Result<AdResiduals> {
    let (lo, hi) = l.bands.values().fold((i64::MIN, i64::MAX), |r, b| (r.0.max(b.lo), r.1.min(b.hi())));
    band_residuals(l, &lambda_op(d, lo, hi), &d.a2, n_max)
}

/// `M̃(n) = [B(n), Λ(n)] J`.
pub fn m_from_b(b_n: &Mat2, lam_n: &Mat2) -> Result<Mat2> {
    let k = commutator(b_n, lam_n);
    if k.norm_max() <= 1e-12 * b_n.norm_max() * lam_n.norm_max() {
        return Err(BochnerError::NoCommutator);
    }
    Ok(k * Mat2::j())
}

/// `C(n+1) = β [B(n+1), Λ(n+1)] [B(n), Λ(n)]⁻¹`.
pub fn c_from_b(b_n: &Mat2, b_next: &Mat2, lam_n: &Mat2, lam_next: &Mat2, beta_ratio: f64) -> Result<Mat2> {
    let k = commutator(b_n, lam_n);
    let ki = k.inverse().ok_or(BochnerError::NoCommutator)?;
    Ok(commutator(b_next, lam_next) * ki * beta_ratio)
}

/// Angle in radians between two matrices viewed as vectors in R⁴, up to sign.
pub fn parallel_defect(x: &Mat2, y: &Mat2) -> f64 {
    let (nx, ny) = (x.norm_fro(), y.norm_fro());
    if nx == 0.0 || ny == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let (u, v) = (*x * (1.0 / nx), *y * (1.0 / ny));
    let d = (u - v).norm_fro().min((u + v).norm_fro());
    2.0 * (d / 2.0).min(1.0).asin()
}

/// Least-squares `β` with `M ≈ β M̃`.
pub fn proportionality(m_tilde: &Mat2, m: &Mat2) -> f64 {
    let dot: f64 = m_tilde.e.iter().zip(&m.e).map(|(a, b)| a * b).sum();
    dot / m_tilde.norm_fro().powi(2)
}

/// String equation in the symmetric frame `L̃ = M^{−1/2} ℒ M^{1/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StringResidual {
    pub residual: f64,
    pub skew_defect: f64,
}

/// Requires `ops` to hold at least `n_max + 5` entries.
pub fn string_equation_residual(ops: &OpSeq, d: &DiffOp2, n_max: usize) -> Result<StringResidual> {
    let roots: Vec<(Mat2, Mat2)> = ops
        .m
        .iter()
        .enumerate()
        .map(|(n, m)| {
            let r = m.spd_sqrt().ok_or(BochnerError::NotPositiveDefinite { n })?;
            let ri = r.inverse().ok_or(BochnerError::NotPositiveDefinite { n })?;
            Ok((r, ri))
        })
        .collect::<Result<_>>()?;
    let at = |n: i64| if n < 0 || n as usize >= roots.len() { (Mat2::identity(), Mat2::identity()) } else { roots[n as usize] };
    let l = ShiftBandOp::jacobi(&ops.b, &ops.c, 3).conjugate_by(|n| at(n).1, |n| at(n).0);
    let hi = ops.b.len() as i64 - 1;
    let lam = ShiftBandOp::diagonal(-3, hi, |n| at(n).1 * d.lambda(n as f64) * at(n).0);
    let o = l.commutator(&lam);
    let res = band_residuals(&l, &lam, &d.a2, n_max)?;
    let residual = (-2..=2).map(|k| res.max_relative(k)).fold(0.0, f64::max);
    let mut skew = 0.0_f64;
    let mut scale = 0.0_f64;
    for n in 0..=n_max as i64 {
        for k in -1..=1 {
            if n + k < 0 {
                continue;
            }
            let a = o.coeff(k, n)?;
            let b = o.coeff(-k, n + k)?;
            skew = skew.max((a.transpose() + b).norm_max());
            scale = scale.max(a.norm_max());
        }
    }
    Ok(StringResidual { residual, skew_defect: if scale > 0.0 { skew / scale } else { 0.0 } })
}

/// Closed-form `B(n)` entries 11, 21, 22 in the hypergeometric case (v); entry 12 is copied from `B0`.
pub fn case_v_closed_b(n: f64, a: f64, c: f64, b0: &Mat2) -> Result<Mat2> {
    let (b11, b12, b21, b22) = (b0.e[0], b0.e[1], b0.e[2], b0.e[3]);
    let den = [a + n, a + n - 1.0, a + n + 1.0, 2.0 * a + 2.0 * n - 1.0, 2.0 * a + 2.0 * n + 1.0];
    if den.iter().any(|v| v.abs() < 1e-12) {
        return Err(BochnerError::DegenerateDenominator { what: "case (v) closed form has a pole at this n" });
    }
    let q = (a + n) * (a + n - 1.0);
    let r = (a + n) * (a + n + 1.0);
    let s = (2.0 * a + 2.0 * n - 1.0) * (2.0 * a + 2.0 * n + 1.0);
    let e11 = b11 * a * (a - 1.0) / q
        + b21 * c * ((2.0 * a - 1.0) * (4.0 * a - 1.0) * n * n + (2.0 * a - 1.0) * (4.0 * a * a - 2.0 * a + 1.0) * n) / (q * s);
    let e21 = b21 * (4.0 * a * a - 1.0) / (4.0 * a * a + 8.0 * a * n + 4.0 * n * n - 1.0);
    let e22 = b22 * a * (a + 1.0) / r
        - b21 * c * ((2.0 * a + 1.0) * (4.0 * a + 1.0) * n * n + (2.0 * a + 1.0) * (4.0 * a * a + 2.0 * a + 1.0) * n) / (r * s);
    Ok(Mat2::new(e11, b12, e21, e22))
}

/// Reduced 3×3 update matrix acting on `(B11, B21, B22)` in case (v).
pub fn case_v_h_tilde(n: f64, a22: f64, a: f64, c: f64) -> Matrix3<f64> {
    Matrix3::new(
        2.0 * a22 * n - 2.0 * a - 2.0 * a22,
        2.0 * c * n,
        0.0,
        0.0,
        -2.0 * c * n + 2.0 * c,
        2.0 * a22 * n - 2.0 * a,
        0.0,
        4.0 * a22 * n - 4.0 * a - 2.0 * a22,
        0.0,
    )
}

fn reduced(b: &Mat2) -> Vector3<f64> {
    Vector3::new(b.e[0], b.e[2], b.e[3])
}

/// Relative residual of `H̃(n+2) v(n+1) = H̃(n) v(n) − 2 a21 (1, 0, 1)` for the closed form.
pub fn case_v_reduced_residual(n: f64, a22: f64, a21: f64, a: f64, c: f64, b0: &Mat2) -> Result<f64> {
    let v0 = reduced(&case_v_closed_b(n, a, c, b0)?);
    let v1 = reduced(&case_v_closed_b(n + 1.0, a, c, b0)?);
    let lhs = case_v_h_tilde(n + 2.0, a22, a, c) * v1;
    let rhs = case_v_h_tilde(n, a22, a, c) * v0 - Vector3::new(1.0, 0.0, 1.0) * (2.0 * a21);
    Ok((lhs - rhs).amax() / (lhs.amax() + rhs.amax()).max(1.0))
}

/// Left side minus right side of the extra scalar condition of case (v) at `n`, with its scale.
pub fn case_v_overdetermined(n: f64, a: f64, c: f64, b0: &Mat2) -> Result<(f64, f64)> {
    let b = case_v_closed_b(n, a, c, b0)?;
    let bn = case_v_closed_b(n + 1.0, a, c, b0)?;
    let terms = [
        (-2.0 * (n + 2.0) * c + 2.0 * c) * bn.e[0],
        2.0 * (n + 2.0) * c * bn.e[3],
        -(-2.0 * n * c + 2.0 * c) * b.e[0],
        -2.0 * n * c * b.e[3],
    ];
    Ok((terms.iter().sum(), terms.iter().map(|t| t.abs()).sum()))
}

/// Direct substitution: the extra condition holds at non-integer sample points `n = 0.37 + j`.
pub fn case_v_direct(a: f64, c: f64, b0: &Mat2) -> bool {
    (0..6).all(|j| match case_v_overdetermined(0.37 + j as f64, a, c, b0) {
        Ok((v, s)) => v.abs() <= 1e-9 * s.max(1.0),
        Err(_) => false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseV {
    A,
    B,
    C,
}

/// Constraint trichotomy for case (v).
pub fn case_v_classify(a: f64, c: f64, b0: &Mat2, tol: f64) -> Option<CaseV> {
    let (b11, b21, b22) = (b0.e[0], b0.e[2], b0.e[3]);
    let z = |v: f64| v.abs() <= tol;
    if z(c) {
        return Some(CaseV::A);
    }
    if z(a * a - 1.0) && z(b21) && z(a * (b11 - b22) - (b11 + b22)) {
        return Some(CaseV::B);
    }
    if z(b11 + 2.0 * c * b21 - b22) && z(2.0 * a * (b11 - b22) + b11 + b22) {
        return Some(CaseV::C);
    }
    None
}

/// Largest relative residual of a rational fit `p(t)/q(t)` with `t = n / n_max` to the samples.
pub fn rational_fit_residual(samples: &[(f64, f64)], deg_num: usize, deg_den: usize) -> f64 {
    let tmax = samples.iter().map(|s| s.0.abs()).fold(1.0, f64::max);
    let cols = deg_num + deg_den + 2;
    let mut a = DMatrix::<f64>::zeros(samples.len(), cols);
    let fmax = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for (r, (n, f)) in samples.iter().enumerate() {
        let t = n / tmax;
        for k in 0..=deg_num {
            a[(r, k)] = t.powi(k as i32);
        }
        for k in 0..=deg_den {
            a[(r, deg_num + 1 + k)] = -(f / fmax) * t.powi(k as i32);
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let imin = (0..svd.singular_values.len()).min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j])).unwrap();
    let coef = vt.row(imin);
    let mut worst = 0.0_f64;
    for (n, f) in samples {
        let t = n / tmax;
        let p: f64 = (0..=deg_num).map(|k| coef[k] * t.powi(k as i32)).sum();
        let q: f64 = (0..=deg_den).map(|k| coef[deg_num + 1 + k] * t.powi(k as i32)).sum();
        worst = worst.max((p / q * fmax - f).abs() / fmax);
    }
    worst
}
