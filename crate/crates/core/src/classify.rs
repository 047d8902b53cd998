//! The three families of irreducible 2×2 hypergeometric Bochner pairs: construction, certificates,
//! normalization, translation deformation and the case (iv) exclusion residual.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{commutator, Mat2, MatPoly, MatRational, Poly, QuadCoeff, RatFn};
use crate::error::{BochnerError, Result};
use crate::ops::{symmetry_defect, DiffOp2};
use crate::quad::{self, DiscreteMeasure, WeightFn, WeightTerm};
use crate::recurrence::{
    ad_residuals, b_closed_form, build_hk, c_update_with, exceptional_cases, generate_ops, iterate_b, ExceptionalCase,
};

pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Largest polynomial degree tried for the smooth factor of the weight.
pub const MAX_WEIGHT_DEGREE: usize = 6;
/// Relative size of the smallest singular value accepted as a null direction.
pub const NULLSPACE_TOL: f64 = 1e-9;
const DENOM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    I,
    II,
    III,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::I, Family::II, Family::III];

    pub fn name(&self) -> &'static str {
        match self {
            Family::I => "I",
            Family::II => "II",
            Family::III => "III",
        }
    }

    /// Names of the free sampling coordinates.
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            Family::I => &["a", "lambda", "B22"],
            Family::II => &["a", "lambda", "B21"],
            Family::III => &["b", "lambda", "B12", "B21", "dsign"],
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Family::I),
            "II" | "2" => Ok(Family::II),
            "III" | "3" => Ok(Family::III),
            other => Err(format!("unknown family {other:?}")),
        }
    }
}

/// A point `(a, b, c, d, λ, B(0))` of the classifying space together with its family tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPoint {
    pub family: Family,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(rename = "lambda")]
    pub lam: f64,
    #[serde(rename = "B0")]
    pub b0: Mat2,
}

impl ClassPoint {
    pub fn a11(&self) -> Mat2 {
        Mat2::new(self.lam + self.d, self.b + self.c, self.b - self.c, self.lam - self.d)
    }

    pub fn a0(&self) -> Mat2 {
        Mat2::diag(self.a, -self.a)
    }

    pub fn a10(&self) -> Mat2 {
        a10_from_b0(&self.a11(), &self.a0(), &self.b0)
    }

    /// The hypergeometric operator of the point.
    pub fn op(&self) -> DiffOp2 {
        DiffOp2::hypergeometric(self.a11(), self.a10(), self.a0())
    }
}

/// `A10 = [B(0), A0] − A11 B(0)`.
pub fn a10_from_b0(a11: &Mat2, a0: &Mat2, b0: &Mat2) -> Mat2 {
    commutator(b0, a0) - *a11 * *b0
}

fn nonzero(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() && v.abs() > DENOM_TOL {
        Ok(v)
    } else {
        Err(BochnerError::DegenerateDenominator { what })
    }
}

/// Family (I) from `(a, λ, B(0)22)`.
pub fn family_i(a: f64, lam: f64, b22: f64) -> Result<ClassPoint> {
    let am1 = nonzero(a - 1.0, "a - 1")?;
    let q = nonzero(4.0 * a * a - lam * lam, "4a^2 - lambda^2")?;
    let b11 = (a + 1.0) * b22 / am1;
    let b21 = (b22 * b22 * lam * lam / (am1 * am1) - 4.0) / q;
    Ok(ClassPoint { family: Family::I, a, b: 0.0, c: 0.0, d: 0.0, lam, b0: Mat2::new(b11, 1.0, b21, b22) })
}

/// Family (II) from `(a, λ, B(0)21)`.
pub fn family_ii(a: f64, lam: f64, b21: f64) -> Result<ClassPoint> {
    let m = nonzero(2.0 * lam - 1.0, "2 lambda - 1")?;
    let p = nonzero(2.0 * lam + 1.0, "2 lambda + 1")?;
    let t = 1.0 - 2.0 * a * b21;
    let b11 = (4.0 * a + 2.0) * b21 - 1.0 + 8.0 * a * t / m;
    let b22 = (4.0 * a - 2.0) * b21 - 1.0 + (8.0 * a - 4.0) * t / p;
    let b12 = -4.0 * b21 - 8.0 * t / p;
    Ok(ClassPoint { family: Family::II, a, b: 1.0, c: 1.0, d: -0.5, lam, b0: Mat2::new(b11, b12, b21, b22) })
}

/// Family (III) from `(b, λ, B(0)12, B(0)21)`; `dsign` selects the branch of `d`.
pub fn family_iii(b: f64, lam: f64, b12: f64, b21: f64, dsign: f64) -> Result<ClassPoint> {
    let r2 = 1.0 - lam * lam * b12 * b21;
    if !(r2 > DENOM_TOL) {
        return Err(BochnerError::DegenerateDenominator { what: "r^2 = 1 - lambda^2 B12 B21" });
    }
    let e = b21 + (b - 1.0) * b12;
    let d = nonzero(dsign.signum() * (lam * lam * e * e / r2).sqrt(), "d")?;
    let a = -(lam + 1.0) * (4.0 * (b - 1.0) + d * d) / (2.0 * d);
    let u = (b - 1.0) * b12 - b21;
    let b11 = (u * lam - 2.0 * b21) / d;
    let b22 = (u * lam + 2.0 * (b - 1.0) * b12) / d;
    Ok(ClassPoint { family: Family::III, a, b, c: 2.0 - b, d, lam, b0: Mat2::new(b11, b12, b21, b22) })
}

/// Defining equations of `fam` evaluated at the data of `p` (the tag of `p` is ignored).
pub fn family_residuals(p: &ClassPoint, fam: Family) -> Vec<f64> {
    let (a, b, c, d, lam) = (p.a, p.b, p.c, p.d, p.lam);
    let (b11, b12, b21, b22) = (p.b0.e[0], p.b0.e[1], p.b0.e[2], p.b0.e[3]);
    match fam {
        Family::I => vec![
            b,
            c,
            d,
            (a - 1.0) * b11 - (a + 1.0) * b22,
            b22 * b22 * lam * lam - ((4.0 * a * a - lam * lam) * b21 + 4.0) * (a - 1.0).powi(2),
            b12 - 1.0,
        ],
        Family::II => {
            let t = 1.0 - 2.0 * a * b21;
            vec![
                c - (2.0 - b),
                b - 1.0,
                d + 0.5,
                b11 - ((4.0 * a + 2.0) * b21 - 1.0 + 8.0 * a * t / (2.0 * lam - 1.0)),
                b22 - ((4.0 * a - 2.0) * b21 - 1.0 + (8.0 * a - 4.0) * t / (2.0 * lam + 1.0)),
                b12 - (-4.0 * b21 - 8.0 * t / (2.0 * lam + 1.0)),
            ]
        }
        Family::III => {
            let u = (b - 1.0) * b12 - b21;
            vec![
                c - (2.0 - b),
                2.0 * a * d + (lam + 1.0) * (4.0 * (b - 1.0) + d * d),
                b11 * d - (u * lam - 2.0 * b21),
                b22 * d - (u * lam + 2.0 * (b - 1.0) * b12),
                d * d * (1.0 - lam * lam * b12 * b21) - lam * lam * (b21 + (b - 1.0) * b12).powi(2),
            ]
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResiduals {
    pub family: Family,
    pub residuals: Vec<f64>,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducibilityFlags {
    /// `A11`, `A10` and `A0` are all diagonal.
    pub operator_diagonal: bool,
    /// `B(n)` commutes with `Λ(n)` for `n ≤ 4`.
    pub b_commutes_lambda: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub families: Vec<FamilyResiduals>,
    /// Largest residual of the point's own family.
    pub own: f64,
    /// Family with the smallest largest residual.
    pub best: Family,
    pub exceptional: Vec<String>,
    pub reducible: ReducibilityFlags,
}

impl Membership {
    pub fn passes(&self, tol: f64) -> bool {
        self.own < tol
    }
}

pub fn membership(p: &ClassPoint) -> Membership {
    let families: Vec<FamilyResiduals> = Family::ALL
        .iter()
        .map(|&f| {
            let residuals = family_residuals(p, f);
            let max = max_abs(&residuals);
            FamilyResiduals { family: f, residuals, max }
        })
        .collect();
    let own = families.iter().find(|f| f.family == p.family).map(|f| f.max).unwrap_or(f64::INFINITY);
    let best = families.iter().min_by(|x, y| x.max.total_cmp(&y.max)).map(|f| f.family).unwrap_or(p.family);
    let exceptional =
        exceptional_cases(-1.0, p.a, p.b, p.c, p.d, p.lam).iter().map(|e: &ExceptionalCase| e.tag().to_string()).collect();
    Membership { families, own, best, exceptional, reducible: reducibility(p) }
}

fn is_diagonal(m: &Mat2, scale: f64) -> bool {
    m.e[1].abs().max(m.e[2].abs()) <= 1e-12 * scale.max(1.0)
}

pub fn reducibility(p: &ClassPoint) -> ReducibilityFlags {
    let op = p.op();
    let scale = op.a11.norm_max().max(op.a10.norm_max()).max(op.a0.norm_max());
    let operator_diagonal = [op.a11, op.a10, op.a0].iter().all(|m| is_diagonal(m, scale));
    let b_commutes_lambda = match iterate_b(&p.b0, &op, 4) {
        Ok(bs) => bs.iter().enumerate().all(|(n, b)| {
            let l = op.lambda(n as f64);
            commutator(b, &l).norm_max() <= 1e-10 * (b.norm_max() * l.norm_max()).max(f64::MIN_POSITIVE)
        }),
        Err(_) => false,
    };
    ReducibilityFlags { operator_diagonal, b_commutes_lambda }
}

/// Family-specific scalars of a pair built from a [`ClassPoint`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub r: f64,
    pub s: f64,
    pub sigma_minus: i32,
    pub sigma_plus: i32,
    /// `γ` from the family's closed form.
    pub gamma_formula: f64,
}

pub fn family_params(p: &ClassPoint) -> Result<FamilyParams> {
    let (a, b, lam) = (p.a, p.b, p.lam);
    let (b12, b21, b22) = (p.b0.e[1], p.b0.e[2], p.b0.e[3]);
    let (r, s2, sigma, gamma) = match p.family {
        Family::I => {
            let r = lam / nonzero(a - 1.0, "a - 1")?;
            let den = nonzero(4.0 - r * r * b22 * b22, "4 - r^2 B22^2")?;
            let s2 = (r - 2.0) * (a - 1.0) * ((r + 2.0) * a - (r - 2.0)) / den;
            (r, s2, (0, 0), a * r * b22)
        }
        Family::II => {
            let r = 4.0 * a - 2.0 * lam - 1.0;
            let den = nonzero(b21 * r, "B21 (4a - 2 lambda - 1)")?;
            let s2 = 4.0 * a * (3.0 - 4.0 * a + 2.0 * lam) / den;
            (r, s2, (0, 1), r * (1.0 - 2.0 * a * b21) + lam)
        }
        Family::III => {
            let r2 = 1.0 - lam * lam * b12 * b21;
            if !(r2 > DENOM_TOL) {
                return Err(BochnerError::DegenerateDenominator { what: "r^2 = 1 - lambda^2 B12 B21" });
            }
            let r = -lam * (b21 + (b - 1.0) * b12) / nonzero(p.d, "d")?;
            let l = b21 * b21 * lam * lam;
            let s2 = (l + (b - 1.0) * (r - 1.0).powi(2)) * (l + (b - 1.0) * (r + 1.0).powi(2));
            let den = nonzero(l - (b - 1.0) * (r2 - 1.0), "B21^2 lambda^2 - (b-1)(r^2-1)")?;
            (r, s2, (1, 1), (lam + 1.0) * r * (l + (b - 1.0) * (r2 - 1.0)) / den)
        }
    };
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(BochnerError::ComplexScale { s2 });
    }
    Ok(FamilyParams { r, s: s2.sqrt(), sigma_minus: sigma.0, sigma_plus: sigma.1, gamma_formula: gamma })
}

/// A weight matrix together with a second-order operator symmetric for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BochnerPair {
    pub point: Option<ClassPoint>,
    pub weight: WeightFn,
    pub op: DiffOp2,
    /// `½ tr(A11 B(0))`.
    pub gamma: f64,
    pub family: Option<FamilyParams>,
}

/// Candidate boundary exponents of a weight for `op`: `−1 − (μi+μj)/4` at `x = 1`, `−1 + (νi+νj)/4` at `x = −1`,
/// with `μ = eig(A11 + A10)` and `ν = eig(A10 − A11)`. Only real candidates are returned.
pub fn local_exponents(op: &DiffOp2) -> (Vec<f64>, Vec<f64>) {
    let cands = |m: Mat2, sign: f64| -> Vec<f64> {
        let ev = m.eigenvalues();
        let mut out = Vec::new();
        for i in 0..2 {
            for j in i..2 {
                let (re, im) = (ev[i].0 + ev[j].0, ev[i].1 + ev[j].1);
                if im.abs() <= 1e-12 * (1.0 + re.abs()) {
                    out.push(-1.0 + sign * re / 4.0);
                }
            }
        }
        out
    };
    (cands(op.a11 + op.a10, -1.0), cands(op.a10 - op.a11, 1.0))
}

/// Quotient of a polynomial by `x − r`, dropping the remainder.
fn div_root(p: &Poly, r: f64) -> Poly {
    let n = p.coeffs.len();
    if n < 2 {
        return Poly::default();
    }
    let mut q = vec![0.0; n - 1];
    let mut acc = 0.0;
    for k in (1..n).rev() {
        acc = acc * r + p.coeffs[k];
        q[k - 1] = acc;
    }
    Poly::new(q)
}

/// `(h₊, h₋) = (a2/(1−x), a2/(1+x))`, polynomials when `a2(±1) = 0`.
fn boundary_quotients(a2: &QuadCoeff) -> (Poly, Poly) {
    let p = a2.poly();
    (div_root(&p, 1.0).scale(-1.0), div_root(&p, -1.0))
}

/// `(a2 W)'/f` for `W = f Q`, `f = (1−x)^α (1+x)^β`: `(a2 Q)' + (−α h₊ + β h₋) Q`.
fn stripped_flux(q: &MatPoly, a2: &QuadCoeff, alpha: f64, beta: f64) -> MatPoly {
    let (hp, hm) = boundary_quotients(a2);
    let g = hp.scale(-alpha).add(&hm.scale(beta));
    q.scalar_mul(&a2.poly()).deriv().add(&q.scalar_mul(&g))
}

/// Polynomial form of the Pearson equation for `W = f Q`.
pub fn pearson_stripped(q: &MatPoly, op: &DiffOp2, alpha: f64, beta: f64) -> MatPoly {
    let a1 = op.a1();
    stripped_flux(q, &op.a2, alpha, beta).scale(2.0).sub(&a1.mul(q)).sub(&q.mul(&a1.transpose()))
}

/// Polynomial form of the auxiliary equation for `W = f Q`, multiplied by `a2`.
pub fn aux_stripped(q: &MatPoly, op: &DiffOp2, alpha: f64, beta: f64) -> MatPoly {
    let a1 = op.a1();
    let s = q.mul(&a1.transpose()).sub(&a1.mul(q));
    let (hp, hm) = boundary_quotients(&op.a2);
    let g = hp.scale(-alpha).add(&hm.scale(beta));
    let a2 = op.a2.poly();
    let z = q.right_mul(&op.a0.transpose()).sub(&q.left_mul(&op.a0));
    s.deriv().scalar_mul(&a2).add(&s.scalar_mul(&g)).sub(&z.scalar_mul(&a2).scale(2.0))
}

fn push_coeffs(out: &mut [f64], offset: usize, p: &MatPoly) {
    for k in 0..=p.degree().max(-1) {
        let c = p.coeff(k as usize);
        out[offset + 4 * k as usize..offset + 4 * k as usize + 4].copy_from_slice(&c.e);
    }
}

/// Symmetric polynomial `Q` of degree `≤ dq` solving the Pearson and auxiliary equations for `W = f Q`,
/// or `None` when the coefficient system has no null direction.
pub fn solve_weight_polynomial(op: &DiffOp2, alpha: f64, beta: f64, dq: usize) -> Option<MatPoly> {
    let cols = 4 * (dq + 1);
    let (np, na, ns) = (4 * (dq + 2), 4 * (dq + 3), 4 * (dq + 1));
    let mut m = DMatrix::<f64>::zeros(np + na + ns, cols);
    for idx in 0..cols {
        let (k, r) = (idx / 4, idx % 4);
        let q = MatPoly::monomial(Mat2::unit(r / 2, r % 2), k);
        let mut col = vec![0.0; np + na + ns];
        push_coeffs(&mut col, 0, &pearson_stripped(&q, op, alpha, beta));
        push_coeffs(&mut col, np, &aux_stripped(&q, op, alpha, beta));
        push_coeffs(&mut col, np + na, &q.sub(&q.transpose()));
        for (i, v) in col.into_iter().enumerate() {
            m[(i, idx)] = v;
        }
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1))?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if !(*smin <= NULLSPACE_TOL * smax) {
        return None;
    }
    let coeffs = (0..=dq)
        .map(|k| Mat2::new(vt[(imin, 4 * k)], vt[(imin, 4 * k + 1)], vt[(imin, 4 * k + 2)], vt[(imin, 4 * k + 3)]).symmetric_part())
        .collect();
    let mut q = MatPoly::new(coeffs);
    let q0 = q.eval(0.0);
    if q0.e[0] < 0.0 {
        q = q.scale(-1.0);
    }
    let det = q0.det().abs();
    if det > 1e-300 {
        q = q.scale(1.0 / det.sqrt());
    }
    Some(q)
}

/// Weight `(1−x)^α (1+x)^β Q(x)` for `op`, with `α`, `β` the smallest real local exponents.
pub fn weight_for_op(op: &DiffOp2) -> Result<WeightFn> {
    let (ca, cb) = local_exponents(op);
    let alpha = ca.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta = cb.iter().cloned().fold(f64::INFINITY, f64::min);
    for e in [alpha, beta] {
        if !(e > -1.0) {
            return Err(BochnerError::NonIntegrableWeight { exponent: e });
        }
    }
    (0..=MAX_WEIGHT_DEGREE)
        .find_map(|dq| solve_weight_polynomial(op, alpha, beta, dq))
        .map(|q| WeightFn::single(alpha, beta, q))
        .ok_or(BochnerError::NoWeight { max_degree: MAX_WEIGHT_DEGREE })
}

/// Bochner pair of a member of one of the three families.
pub fn build_pair(p: &ClassPoint) -> Result<BochnerPair> {
    let own = max_abs(&family_residuals(p, p.family));
    if !(own < MEMBERSHIP_TOL) {
        return Err(BochnerError::NotMember { family: p.family.name(), residual: own });
    }
    let params = family_params(p)?;
    let op = p.op();
    let weight = weight_for_op(&op)?;
    Ok(BochnerPair { point: Some(*p), weight, op, gamma: 0.5 * (op.a11 * p.b0).trace(), family: Some(params) })
}

/// Pair for any point whose operator admits a weight; unlike [`build_pair`] family membership is not required.
pub fn pair_for_point(p: &ClassPoint) -> Result<BochnerPair> {
    let op = p.op();
    let weight = weight_for_op(&op)?;
    Ok(BochnerPair {
        point: Some(*p),
        weight,
        op,
        gamma: 0.5 * (op.a11 * p.b0).trace(),
        family: family_params(p).ok(),
    })
}

/// Certificate of a point; membership is reported rather than required.
pub fn certify_point(p: &ClassPoint, cfg: &CertConfig) -> Result<Certificate> {
    certify(&pair_for_point(p)?, cfg)
}

/// Max-norm residuals of the differential conditions on `W`; interior ones are relative to `‖W(x)‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    pub pearson: f64,
    pub aux: f64,
    pub second_order: f64,
    pub boundary: f64,
}

impl OdeResiduals {
    pub fn max_interior(&self) -> f64 {
        self.pearson.max(self.aux).max(self.second_order)
    }
}

struct Jet {
    w: Mat2,
    w1: Mat2,
    w2: Mat2,
}

fn weight_jet(weight: &WeightFn, derivs: &[(MatRational, MatRational)], x: f64) -> Option<Jet> {
    let mut jet = Jet { w: Mat2::zero(), w1: Mat2::zero(), w2: Mat2::zero() };
    for (t, (d1, d2)) in weight.terms.iter().zip(derivs) {
        let f = t.power(x);
        let g = -t.alpha / (1.0 - x) + t.beta / (1.0 + x);
        let g1 = -t.alpha / (1.0 - x).powi(2) - t.beta / (1.0 + x).powi(2);
        let (s, s1, s2) = (t.smooth.eval(x)?, d1.eval(x)?, d2.eval(x)?);
        jet.w += s * f;
        jet.w1 += (s * g + s1) * f;
        jet.w2 += (s * (g1 + g * g) + s1 * (2.0 * g) + s2) * f;
    }
    Some(jet)
}

fn rel(w: &Mat2, sum: Mat2) -> f64 {
    let scale = w.norm_max();
    if scale > 0.0 {
        sum.norm_max() / scale
    } else {
        0.0
    }
}

/// Interior grid `x_j = −1 + 2(j+1)/(grid+1)`.
pub fn interior_grid(grid: usize) -> Vec<f64> {
    (0..grid).map(|j| -1.0 + 2.0 * (j as f64 + 1.0) / (grid as f64 + 1.0)).collect()
}

/// Pearson, auxiliary and second-order residuals on an interior grid, and the exact boundary limits.
/// Requires `a2(±1) = 0`.
pub fn ode_residuals(pair: &BochnerPair, grid: usize) -> OdeResiduals {
    let op = &pair.op;
    let derivs: Vec<(MatRational, MatRational)> = pair
        .weight
        .terms
        .iter()
        .map(|t| {
            let d1 = t.smooth.deriv();
            let d2 = d1.deriv();
            (d1, d2)
        })
        .collect();
    let (a11, a0) = (op.a11, op.a0);
    let mut out = OdeResiduals { pearson: 0.0, aux: 0.0, second_order: 0.0, boundary: 0.0 };
    for x in interior_grid(grid) {
        let Some(j) = weight_jet(&pair.weight, &derivs, x) else {
            return OdeResiduals { pearson: f64::INFINITY, aux: f64::INFINITY, second_order: f64::INFINITY, boundary: f64::INFINITY };
        };
        let (a2, a2p, a2pp) = (op.a2.eval(x), op.a2.deriv(x), 2.0 * op.a2.a22);
        let a1 = a11 * x + op.a10;
        let flux = j.w1 * a2 + j.w * a2p;
        let flux1 = j.w2 * a2 + j.w1 * (2.0 * a2p) + j.w * a2pp;
        let (aw, wa) = (a1 * j.w, j.w * a1.transpose());
        out.pearson = out.pearson.max(rel(&j.w, flux * 2.0 - aw - wa));
        let parts = [j.w1 * a1.transpose(), j.w * a11.transpose(), a11 * j.w, a1 * j.w1, j.w * a0.transpose() * 2.0, a0 * j.w * 2.0];
        let aux = parts[0] + parts[1] - parts[2] - parts[3] - parts[4] + parts[5];
        out.aux = out.aux.max(rel(&j.w, aux));
        let parts = [flux1, j.w1 * a1.transpose(), j.w * a11.transpose(), j.w * a0.transpose(), a0 * j.w];
        let second = parts[0] - parts[1] - parts[2] + parts[3] - parts[4];
        out.second_order = out.second_order.max(rel(&j.w, second));
    }
    out.boundary = boundary_residual(pair);
    out
}

/// Taylor coefficients of `r(x0 + σu)` in `u` with a bound on the rounding scale of each,
/// or `None` when the denominator vanishes at `x0`.
fn taylor(r: &MatRational, x0: f64, sigma: f64, order: usize) -> Option<(Vec<Mat2>, Vec<f64>)> {
    let compose = |coeffs: &[Mat2], x0: f64, sigma: f64| -> Vec<Mat2> {
        let mut acc: Vec<Mat2> = vec![];
        for c in coeffs.iter().rev() {
            let mut next = vec![Mat2::zero(); acc.len() + 1];
            for (k, a) in acc.iter().enumerate() {
                next[k] += *a * x0;
                next[k + 1] += *a * sigma;
            }
            next[0] += *c;
            acc = next;
        }
        acc.resize(order + 1, Mat2::zero());
        acc.truncate(order + 1);
        acc
    };
    let abs = |m: &Mat2| Mat2 { e: m.e.map(f64::abs) };
    let num = compose(&r.numerator.coeffs, x0, sigma);
    let num_abs: Vec<f64> =
        compose(&r.numerator.coeffs.iter().map(abs).collect::<Vec<_>>(), x0.abs(), sigma.abs()).iter().map(|m| m.norm_max()).collect();
    let den_m: Vec<Mat2> = r.denominator.coeffs.iter().map(|c| Mat2::scalar(*c)).collect();
    let den: Vec<f64> = compose(&den_m, x0, sigma).iter().map(|m| m.e[0]).collect();
    if den[0].abs() <= 1e-14 * den.iter().fold(0.0_f64, |m, v| m.max(v.abs())) {
        return None;
    }
    let mut out: Vec<Mat2> = Vec::with_capacity(order + 1);
    let mut mag: Vec<f64> = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut v = num[k];
        let mut s = num_abs[k];
        for j in 1..=k {
            v -= out[k - j] * den[j];
            s += mag[k - j] * den[j].abs();
        }
        out.push(v * (1.0 / den[0]));
        mag.push(s / den[0].abs());
    }
    Some((out, mag))
}

/// Coefficients of `(2 − u)^e`.
fn binomial_series(e: f64, order: usize) -> Vec<f64> {
    let mut out = vec![2f64.powf(e)];
    for j in 1..=order {
        let prev = out[j - 1];
        out.push(prev * (e - (j as f64 - 1.0)) / j as f64 * -0.5);
    }
    out
}

/// Limits at `x = ±1` of `a2 W` and `(a2 W)' − A1 W`, computed from the local expansions of each term.
/// Each returned value is the norm of a nonvanishing coefficient of a nonpositive power of `1 ∓ x`,
/// relative to the sizes of the pieces that cancel in it.
pub fn boundary_residual(pair: &BochnerPair) -> f64 {
    let op = &pair.op;
    let a2p = op.a2.poly();
    let (hp, hm) = boundary_quotients(&op.a2);
    let a1 = op.a1();
    let mut worst = 0.0_f64;
    for (x0, sigma) in [(1.0, -1.0), (-1.0, 1.0)] {
        let own = |t: &WeightTerm| if x0 > 0.0 { (t.alpha, t.beta) } else { (t.beta, t.alpha) };
        let order = pair
            .weight
            .terms
            .iter()
            .map(|t| (-own(t).0).ceil().max(0.0) as usize + 1)
            .max()
            .unwrap_or(1)
            .min(12);
        // quantity index, exponent, value, magnitude
        let mut entries: Vec<(usize, f64, Mat2, f64)> = Vec::new();
        for t in &pair.weight.terms {
            let (e, other) = own(t);
            let (n, dn) = (&t.smooth.numerator, &t.smooth.denominator);
            let g = hp.scale(-t.alpha).add(&hm.scale(t.beta));
            let pieces: [(usize, MatRational); 4] = [
                (0, MatRational::new(n.scalar_mul(&a2p), dn.clone())),
                (1, MatRational::new(n.scalar_mul(&a2p), dn.clone()).deriv()),
                (1, MatRational::new(n.scalar_mul(&g).scale(1.0), dn.clone())),
                (1, MatRational::new(a1.mul(n).scale(-1.0), dn.clone())),
            ];
            let bin = binomial_series(other, order);
            for (qi, piece) in pieces {
                let Some((ser, mag)) = taylor(&piece, x0, sigma, order) else {
                    return f64::INFINITY;
                };
                for k in 0..=order {
                    let mut v = Mat2::zero();
                    let mut s = 0.0;
                    for j in 0..=k {
                        v += ser[j] * bin[k - j];
                        s += mag[j] * bin[k - j].abs();
                    }
                    entries.push((qi, e + k as f64, v, s));
                }
            }
        }
        let global = entries.iter().map(|e| e.3).fold(0.0, f64::max);
        let mut groups: Vec<(usize, f64, Mat2, f64)> = Vec::new();
        for (qi, e, v, mag) in entries {
            if e > 1e-9 {
                continue;
            }
            match groups.iter_mut().find(|g| g.0 == qi && (g.1 - e).abs() <= 1e-9) {
                Some(g) => {
                    g.2 += v;
                    g.3 += mag;
                }
                None => groups.push((qi, e, v, mag)),
            }
        }
        for (_, _, v, mag) in groups {
            let scale = mag.max(1e-14 * global).max(f64::MIN_POSITIVE);
            worst = worst.max(v.norm_max() / scale);
        }
    }
    worst
}

/// Relative variation over 20 interior points of `det W(x) (1−x)^{λ+2−γ} (1+x)^{λ+2+γ}`, `λ = ½ tr A11`.
pub fn det_w_check(pair: &BochnerPair) -> f64 {
    let lam = 0.5 * pair.op.a11.trace();
    let (e1, e2) = (-lam - 2.0 + pair.gamma, -lam - 2.0 - pair.gamma);
    let ratios: Vec<f64> = (0..20)
        .map(|j| {
            let x = -0.95 + 1.9 * j as f64 / 19.0;
            match pair.weight.eval(x) {
                Some(w) => w.det() / ((1.0 - x).powf(e1) * (1.0 + x).powf(e2)),
                None => f64::NAN,
            }
        })
        .collect();
    let r0 = ratios[0];
    ratios.iter().map(|r| (r / r0 - 1.0).abs()).fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
}

/// Largest commutator of `W(x0)⁻¹W(x)` over sample points; zero for weights reducible by a constant similarity.
pub fn weight_commutator_defect(w: &WeightFn) -> f64 {
    let xs = [-0.5, 0.3, 0.7];
    let Some(w0i) = w.eval(0.1).and_then(|m| m.inverse()) else {
        return 0.0;
    };
    let ms: Vec<Mat2> = xs.iter().filter_map(|x| w.eval(*x)).map(|m| w0i * m).collect();
    let mut worst = 0.0_f64;
    for i in 0..ms.len() {
        for j in 0..i {
            let s = ms[i].norm_max() * ms[j].norm_max();
            worst = worst.max(commutator(&ms[i], &ms[j]).norm_max() / s.max(f64::MIN_POSITIVE));
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub membership: f64,
    pub symmetry: f64,
    pub ode: f64,
    pub boundary: f64,
    pub det_w: f64,
    pub ad: f64,
    pub moment: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { membership: 1e-10, symmetry: 1e-8, ode: 1e-7, boundary: 1e-6, det_w: 1e-8, ad: 1e-8, moment: 1e-6 }
    }
}

impl Tolerances {
    pub fn scaled(&self, f: f64) -> Tolerances {
        Tolerances {
            membership: self.membership * f,
            symmetry: self.symmetry * f,
            ode: self.ode * f,
            boundary: self.boundary * f,
            det_w: self.det_w * f,
            ad: self.ad * f,
            moment: self.moment * f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    pub m: usize,
    pub dmax: usize,
    pub grid: usize,
    pub n_ad: usize,
    pub tol: Tolerances,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig { m: quad::DEFAULT_NODES, dmax: 6, grid: 64, n_ad: 20, tol: Tolerances::default() }
    }
}

/// Residuals that together certify a Bochner pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub membership: Option<f64>,
    pub symmetry: f64,
    pub ode: OdeResiduals,
    pub det_w: f64,
    pub ad_z2: f64,
    pub ad_z1: f64,
    pub ad_z0: f64,
    /// `moment(1) moment(0)⁻¹` against the point's `B(0)`.
    pub b0_roundtrip: Option<f64>,
    pub positive_definite: bool,
    pub quadrature_converged: bool,
}

impl Certificate {
    /// Names of the checks exceeding their tolerance.
    pub fn failures(&self, tol: &Tolerances) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut check = |ok: bool, name: &'static str| {
            if !ok {
                out.push(name);
            }
        };
        check(self.membership.is_none_or(|v| v < tol.membership), "membership");
        check(self.symmetry < tol.symmetry, "symmetry");
        check(self.ode.pearson < tol.ode, "pearson");
        check(self.ode.aux < tol.ode, "aux");
        check(self.ode.second_order < tol.ode, "second_order");
        check(self.ode.boundary < tol.boundary, "boundary");
        check(self.det_w < tol.det_w, "det_w");
        check(self.ad_z1 < tol.ad, "ad_z1");
        check(self.ad_z0 < tol.ad, "ad_z0");
        check(self.b0_roundtrip.is_none_or(|v| v < tol.moment), "b0_roundtrip");
        check(self.positive_definite, "positive_definite");
        check(self.quadrature_converged, "quadrature");
        out
    }

    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.failures(tol).is_empty()
    }
}

/// Full certificate of a pair: membership, symmetry defect, differential residuals, `det W`, ad-condition.
pub fn certify(pair: &BochnerPair, cfg: &CertConfig) -> Result<Certificate> {
    let mu = pair.weight.discretize(cfg.m)?;
    certify_with(pair, &mu, cfg)
}

fn certify_with(pair: &BochnerPair, mu: &DiscreteMeasure, cfg: &CertConfig) -> Result<Certificate> {
    let membership = pair.point.map(|p| max_abs(&family_residuals(&p, p.family)));
    let symmetry = symmetry_defect(&pair.op, mu, cfg.dmax);
    let ode = ode_residuals(pair, cfg.grid);
    let det_w = det_w_check(pair);
    let ops = generate_ops(mu, cfg.n_ad + 4)?;
    let ad = ad_residuals(&ops.b, &ops.c, &pair.op, cfg.n_ad)?;
    let quadrature_converged = (0..=2).all(|k| quad::moment(k, &pair.weight, cfg.m).is_ok());
    let b0_roundtrip = pair.point.map(|p| {
        let b0 = ops.b[0];
        (b0 - p.b0).norm_max() / p.b0.norm_max().max(1.0)
    });
    let positive_definite = mu.non_pd_nodes().is_empty() && ops.m[0].is_spd();
    Ok(Certificate {
        membership,
        symmetry,
        ode,
        det_w,
        ad_z2: ad.max_relative(2).max(ad.max_relative(-2)),
        ad_z1: ad.max_relative(1).max(ad.max_relative(-1)),
        ad_z0: ad.max_relative(0),
        b0_roundtrip,
        positive_definite,
        quadrature_converged,
    })
}

/// Sample one point of `fam` from the scan box; returns the raw coordinates as well.
pub fn draw_point(fam: Family, rng: &mut ChaCha8Rng) -> (Vec<f64>, Result<ClassPoint>) {
    match fam {
        Family::I => {
            let v = vec![rng.random_range(-3.0..3.0), rng.random_range(-5.0..3.0), rng.random_range(-2.0..2.0)];
            let p = family_i(v[0], v[1], v[2]);
            (v, p)
        }
        Family::II => {
            let v = vec![rng.random_range(-3.0..3.0), rng.random_range(-5.0..3.0), rng.random_range(-2.0..2.0)];
            let p = family_ii(v[0], v[1], v[2]);
            (v, p)
        }
        Family::III => {
            let mut v: Vec<f64> = vec![
                rng.random_range(-3.0..3.0),
                rng.random_range(-5.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            v.push(if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            let p = family_iii(v[0], v[1], v[2], v[3], v[4]);
            (v, p)
        }
    }
}

/// Accepted point of a scan with its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub draw: usize,
    pub params: Vec<f64>,
    pub point: ClassPoint,
    pub certificate: Certificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub family: Family,
    pub seed: u64,
    pub draws: usize,
    pub records: Vec<ScanRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub count: usize,
    pub seed: u64,
    pub max_draws: usize,
    pub batch: usize,
    pub cert: CertConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { count: 10, seed: 0, max_draws: 20_000, batch: 256, cert: CertConfig::default() }
    }
}

/// Accepted when the pair builds, both exponents exceed −1, `W` is positive definite at every node,
/// and the certificate can be evaluated.
fn evaluate_draw(p: &ClassPoint, cfg: &CertConfig) -> Option<Certificate> {
    let pair = build_pair(p).ok()?;
    let mu = pair.weight.discretize(cfg.m).ok()?;
    if !mu.non_pd_nodes().is_empty() {
        return None;
    }
    certify_with(&pair, &mu, cfg).ok()
}

/// Seeded scan of a family's sampling box; draws are evaluated in parallel and kept in draw order.
pub fn scan_family(fam: Family, cfg: &ScanConfig) -> ScanReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut draws = 0;
    while records.len() < cfg.count && draws < cfg.max_draws {
        let n = cfg.batch.min(cfg.max_draws - draws);
        let batch: Vec<(usize, Vec<f64>, Result<ClassPoint>)> = (0..n)
            .map(|i| {
                let (v, p) = draw_point(fam, &mut rng);
                (draws + i, v, p)
            })
            .collect();
        let evaluated: Vec<Option<ScanRecord>> = batch
            .into_par_iter()
            .map(|(draw, params, p)| {
                let point = p.ok()?;
                let certificate = evaluate_draw(&point, &cfg.cert)?;
                Some(ScanRecord { draw, params, point, certificate })
            })
            .collect();
        draws += n;
        for r in evaluated.into_iter().flatten() {
            if records.len() < cfg.count {
                records.push(r);
            }
        }
    }
    ScanReport { family: fam, seed: cfg.seed, draws, records }
}

/// Eigenvector of `m` for the real eigenvalue `mu`, scaled to unit length with positive largest entry.
fn eigenvector(m: &Mat2, mu: f64) -> (f64, f64) {
    let v1 = (m.e[1], mu - m.e[0]);
    let v2 = (mu - m.e[3], m.e[2]);
    let n1 = v1.0.hypot(v1.1);
    let n2 = v2.0.hypot(v2.1);
    let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    if n == 0.0 {
        return if mu == m.e[0] { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    let s = if v.0.abs() >= v.1.abs() { v.0.signum() } else { v.1.signum() };
    (v.0 * s / n, v.1 * s / n)
}

/// `P` with `P M P⁻¹ = diag(μ₁, μ₂)`, `μ₁ > μ₂` when `descending`.
fn diagonalizer(m: &Mat2, descending: bool) -> Result<Mat2> {
    let (hi, lo) = m.real_eigenvalues().ok_or(BochnerError::DegenerateEigen)?;
    if (hi - lo).abs() <= 1e-12 * m.norm_max().max(f64::MIN_POSITIVE) {
        return Err(BochnerError::DegenerateEigen);
    }
    let (e1, e2) = if descending { (hi, lo) } else { (lo, hi) };
    let (u1, u2) = (eigenvector(m, e1), eigenvector(m, e2));
    Mat2::new(u1.0, u2.0, u1.1, u2.1).inverse().ok_or(BochnerError::DegenerateEigen)
}

/// `(a, b, c, d, λ)` read off `A11` and `A0` in the normalized frame.
fn read_params(a11: &Mat2, a0: &Mat2) -> (f64, f64, f64, f64, f64) {
    let a = a0.e[0];
    let lam = 0.5 * a11.trace();
    let d = 0.5 * (a11.e[0] - a11.e[3]);
    let b = 0.5 * (a11.e[1] + a11.e[2]);
    let c = 0.5 * (a11.e[1] - a11.e[2]);
    (a, b, c, d, lam)
}

/// Group element taking raw operator data to the normalized frame:
/// `A0 ↦ U(A0 − tI)U⁻¹`, `X ↦ UXU⁻¹`, then optionally `x ↦ −x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub translation: f64,
    pub conjugation: Mat2,
    pub reflected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub point: ClassPoint,
    pub a11: Mat2,
    pub a10: Mat2,
    pub a0: Mat2,
    pub family_residual: f64,
    pub log: TransformLog,
}

/// Reflection `x ↦ −x` on hypergeometric data: `A10 ↦ −A10`, `B(0) ↦ −B(0)`.
pub fn reflect(a11: &Mat2, a10: &Mat2, a0: &Mat2, b0: &Mat2) -> (Mat2, Mat2, Mat2, Mat2) {
    (*a11, -*a10, *a0, -*b0)
}

/// Translate, conjugate and possibly reflect `(A11, A10, A0, B(0))` into the normalized form, choosing among
/// eigenvalue orders and reflections the frame whose best family residual is smallest. The first frame tried
/// keeps the order of an already diagonal `A0`, so canonical input maps to itself.
pub fn normalize_pair(a11: &Mat2, a10: &Mat2, a0: &Mat2, b0: &Mat2) -> Result<Normalized> {
    let t = 0.5 * a0.trace();
    let a0t = *a0 - Mat2::scalar(t);
    let scale = a11.norm_max().max(a0.norm_max()).max(1.0);
    if a0t.real_eigenvalues().is_none() {
        return Err(BochnerError::NonDiagonalizableA0);
    }
    let scalar_a0 = a0t.norm_max() <= 1e-14 * scale;
    let keep = a0t.e[1] == 0.0 && a0t.e[2] == 0.0 && a0t.e[0] < a0t.e[3];
    let mut best: Option<Normalized> = None;
    for descending in [!keep, keep] {
        let p0 = if scalar_a0 {
            Mat2::identity()
        } else {
            diagonalizer(&a0t, descending).map_err(|_| BochnerError::NonDiagonalizableA0)?
        };
        let p0i = p0.inverse().ok_or(BochnerError::NonDiagonalizableA0)?;
        let c0 = |x: &Mat2| p0 * *x * p0i;
        let (m11, mb) = (c0(a11), c0(b0));
        let s = if m11.e[1].abs() > 1e-9 * scale {
            2.0 / m11.e[1]
        } else if mb.e[1].abs() > 1e-12 {
            1.0 / mb.e[1]
        } else {
            1.0
        };
        let p = Mat2::diag(s, 1.0) * p0;
        let pi = p.inverse().ok_or(BochnerError::NormalizationImpossible)?;
        let c = |x: &Mat2| p * *x * pi;
        for reflected in [false, true] {
            let (n11, mut n10, mut n0, mut nb) = (c(a11), c(a10), c(&a0t), c(b0));
            if reflected {
                (_, n10, n0, nb) = reflect(&n11, &n10, &n0, &nb);
            }
            n0.e[1] = 0.0;
            n0.e[2] = 0.0;
            let (a, b, cc, d, lam) = read_params(&n11, &n0);
            let mut point = ClassPoint { family: Family::I, a, b, c: cc, d, lam, b0: nb };
            let (fam, res) = Family::ALL
                .iter()
                .map(|&f| (f, max_abs(&family_residuals(&point, f))))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            point.family = fam;
            let cand = Normalized {
                point,
                a11: n11,
                a10: n10,
                a0: n0,
                family_residual: res,
                log: TransformLog { translation: -t, conjugation: p, reflected },
            };
            if best.as_ref().is_none_or(|b| res < b.family_residual && !(b.family_residual <= MEMBERSHIP_TOL)) {
                best = Some(cand);
            }
        }
        if scalar_a0 {
            break;
        }
    }
    best.ok_or(BochnerError::NormalizationImpossible)
}

/// Result of the translation deformation by `k`, with `X ↦ U X U⁻¹` the frame change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deformed {
    pub point: ClassPoint,
    pub u: Mat2,
    pub u_inv: Mat2,
    /// `‖U A11 U⁻¹ − 2k − A11'‖ + ‖U(A11 k + A0)U⁻¹ − τ − A0'‖` against the mapped parameters.
    pub frame_residual: f64,
}

/// Translation deformation of a point with `c = 2 − b`.
pub fn translate_deform(p: &ClassPoint, k: f64) -> Result<Deformed> {
    let (a, b, d, lam) = (p.a, p.b, p.d, p.lam);
    if (p.c - (2.0 - b)).abs() > MEMBERSHIP_TOL {
        return Err(BochnerError::InvalidDeformation { what: "requires c = 2 - b" });
    }
    let den = 4.0 * k * k * (b - 1.0) + (a + k * d).powi(2);
    if !(den > 0.0) {
        return Err(BochnerError::InvalidDeformation { what: "4k^2(b-1) + (a+kd)^2 <= 0" });
    }
    let a2 = den.sqrt();
    let b2 = a * a * (b - 1.0) / den + 1.0;
    let d2 = (a * d + 4.0 * k * (b - 1.0) + k * d * d) / a2;
    let lam2 = lam - 2.0 * k;
    let op = p.op();
    let m = op.a11 * k + op.a0;
    let p0 = diagonalizer(&m, true)?;
    let p0i = p0.inverse().ok_or(BochnerError::DegenerateEigen)?;
    let off = (p0 * op.a11 * p0i).e[1];
    if off.abs() <= 1e-12 * op.a11.norm_max().max(1.0) {
        return Err(BochnerError::NormalizationImpossible);
    }
    let u = Mat2::diag(2.0 / off, 1.0) * p0;
    let u_inv = u.inverse().ok_or(BochnerError::NormalizationImpossible)?;
    let bk = b_closed_form(0.0, &p.b0, k, &build_hk(&op), op.a2.a21)?;
    let point = ClassPoint { family: p.family, a: a2, b: b2, c: 2.0 - b2, d: d2, lam: lam2, b0: u * bk * u_inv };
    let m2 = u * m * u_inv;
    let frame_residual = (u * op.a11 * u_inv - Mat2::scalar(2.0 * k) - point.a11()).norm_max()
        + (m2 - Mat2::scalar(0.5 * m2.trace()) - point.a0()).norm_max();
    Ok(Deformed { point, u, u_inv, frame_residual })
}

/// Residuals of the index shift at `k = 1`: the deformed data at `n` against the conjugated original data at `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftIdentity {
    pub b: f64,
    pub c: f64,
    /// Non-scalar part of `Λ'(n) − UΛ(n+1)U⁻¹`.
    pub lambda: f64,
}

impl ShiftIdentity {
    pub fn max(&self) -> f64 {
        self.b.max(self.c).max(self.lambda)
    }
}

/// Compare the deformed pair's `B(n)`, `C`-update and `Λ(n)` with the original's quadrature data shifted by one.
pub fn shift_identity(p: &ClassPoint, n_max: usize, m: usize) -> Result<ShiftIdentity> {
    let def = translate_deform(p, 1.0)?;
    let pair = build_pair(p)?;
    let ops = generate_ops(&pair.weight.discretize(m)?, n_max + 2)?;
    let (u, ui) = (def.u, def.u_inv);
    let conj = |x: &Mat2| u * *x * ui;
    let op1 = def.point.op();
    let op0 = p.op();
    let b1 = iterate_b(&def.point.b0, &op1, n_max)?;
    let sys1 = build_hk(&op1);
    let mut out = ShiftIdentity { b: 0.0, c: 0.0, lambda: 0.0 };
    for n in 0..=n_max {
        let target = conj(&ops.b[n + 1]);
        out.b = out.b.max((b1[n] - target).norm_max() / target.norm_max().max(1.0));
        let dl = op1.lambda(n as f64) - conj(&op0.lambda(n as f64 + 1.0));
        let off = dl - Mat2::scalar(0.5 * dl.trace());
        out.lambda = out.lambda.max(off.norm_max() / op0.lambda(n as f64 + 1.0).norm_max().max(1.0));
        if n < n_max {
            let cn = conj(&ops.c[n + 1]);
            let next = c_update_with(&sys1, &cn, &b1[n], n as i64)?;
            let target = conj(&ops.c[n + 2]);
            out.c = out.c.max((next - target).norm_max() / target.norm_max().max(1.0));
        }
    }
    Ok(out)
}

/// Incompatibility of the two first-order equations for `(1−x²)W12` in case (iv).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseIvReport {
    /// Normalized residual of the second equation on the solution family of the first.
    pub defect: f64,
    /// `𝔇` is diagonal: `c = 0` and `a = 1/2` or `B(0)12 = 0`.
    pub diagonal: bool,
    /// Exponents of `W22 = (1−x)^{e₊}(1+x)^{e₋}`.
    pub w22_exponents: (f64, f64),
    /// Mismatch between `W22'/W22` from the exponents and from the Pearson equation.
    pub w22_consistency: f64,
}

/// Case (iv) with `a2 = 1 − x²`, `d = −1`, `λ = 2a − 1`, `b = c` and symmetric `B(0)` (`B21 := B12`).
pub fn case_iv_dual_ode_check(a: f64, c: f64, b0: &Mat2) -> CaseIvReport {
    let b0 = Mat2::new(b0.e[0], b0.e[1], b0.e[1], b0.e[3]);
    let a11 = Mat2::new(2.0 * a - 2.0, 2.0 * c, 0.0, 2.0 * a);
    let a0 = Mat2::diag(a, -a);
    let a10 = a10_from_b0(&a11, &a0, &b0);
    let entry = |i: usize, j: usize| RatFn::poly(Poly::new(vec![a10.get(i, j), a11.get(i, j)]));
    let a2 = RatFn::poly(Poly::new(vec![1.0, 0.0, -1.0]));
    let a2p = RatFn::poly(Poly::new(vec![0.0, -2.0]));
    let (p11, p12, p22) = (entry(0, 0), entry(0, 1), entry(1, 1));
    let f = p11.add(&p22).div(&a2.scale(2.0)).unwrap();
    let g = p12.scale(0.5);
    let w = p22.sub(&a2p).div(&a2).unwrap();
    let pa = p22.div(&a2).unwrap();
    let fp = f.sub(&pa);
    let two_a = RatFn::constant(2.0 * a).div(&a2).unwrap();
    let xs = interior_grid(41);
    let diagonal = c.abs() <= MEMBERSHIP_TOL && ((a - 0.5).abs() <= MEMBERSHIP_TOL || b0.e[1].abs() <= MEMBERSHIP_TOL);
    let b22 = b0.e[3];
    let w22_exponents = (a * b22 - a - 1.0, -a * b22 - a - 1.0);
    let w22_consistency = xs
        .iter()
        .map(|&x| {
            let lhs = -w22_exponents.0 / (1.0 - x) + w22_exponents.1 / (1.0 + x);
            (lhs - w.eval(x)).abs() / lhs.abs().max(w.eval(x).abs()).max(1.0)
        })
        .fold(0.0, f64::max);
    let defect = match fp.div(&fp) {
        None => 0.0,
        Some(_) => {
            let ft = f.deriv().sub(&pa.deriv()).sub(&two_a).div(&fp).map(|r| r.scale(-1.0));
            let gt = g.deriv().add(&g.mul(&w)).div(&fp).map(|r| r.scale(-1.0));
            match (ft, gt) {
                (Some(ft), Some(gt)) => match gt.sub(&g).div(&f.sub(&ft)) {
                    Some(h) => {
                        let hp = h.deriv();
                        let (mut num, mut den) = (0.0_f64, 0.0_f64);
                        for &x in &xs {
                            let parts = [hp.eval(x), h.eval(x) * w.eval(x), f.eval(x) * h.eval(x), g.eval(x)];
                            num = num.max((parts[0] + parts[1] - parts[2] - parts[3]).abs());
                            den = den.max(parts.iter().map(|v| v.abs()).sum());
                        }
                        if den > 0.0 { num / den } else { 0.0 }
                    }
                    None => {
                        let (mut num, mut den) = (0.0_f64, 0.0_f64);
                        for &x in &xs {
                            num = num.max((gt.eval(x) - g.eval(x)).abs());
                            den = den.max(gt.eval(x).abs() + g.eval(x).abs());
                        }
                        if den > 0.0 { num / den } else { 0.0 }
                    }
                },
                _ => f64::INFINITY,
            }
        }
    };
    CaseIvReport { defect, diagonal, w22_exponents, w22_consistency }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_point(fam: Family) -> ClassPoint {
        let cfg = ScanConfig { count: 1, ..ScanConfig::default() };
        scan_family(fam, &cfg).records[0].point
    }

    #[test]
    fn family_constructors_satisfy_their_equations() {
        let p = family_i(1.7, -2.3, 0.4).unwrap();
        assert!(max_abs(&family_residuals(&p, Family::I)) < 1e-12);
        let p = family_ii(0.6, -1.3, 0.4).unwrap();
        assert!(max_abs(&family_residuals(&p, Family::II)) < 1e-12);
        let p = family_iii(1.7, -2.3, 0.2, -0.35, 1.0).unwrap();
        assert!(max_abs(&family_residuals(&p, Family::III)) < 1e-12);
    }

    #[test]
    fn family_i_b12_violation_is_reported() {
        let mut p = family_i(1.7, -2.3, 0.4).unwrap();
        p.b0.e[1] = 2.0;
        let m = membership(&p);
        assert!((m.own - 1.0).abs() < 1e-15);
    }

    #[test]
    fn a10_brackets() {
        let b0 = Mat2::new(0.3, -1.0, 2.0, 0.5);
        let a0 = Mat2::diag(0.7, -0.7);
        assert_eq!(a10_from_b0(&Mat2::identity(), &a0, &Mat2::zero()), Mat2::zero());
        assert_eq!(a10_from_b0(&Mat2::zero(), &a0, &b0), b0 * a0 - a0 * b0);
    }

    #[test]
    fn gamma_matches_family_forms() {
        for fam in Family::ALL {
            let p = scan_point(fam);
            let pair = build_pair(&p).unwrap();
            let g = pair.family.unwrap().gamma_formula;
            assert!((pair.gamma - g).abs() < 1e-9, "{fam:?}: {} vs {g}", pair.gamma);
        }
    }

    #[test]
    fn scanned_points_are_certified() {
        let cfg = CertConfig::default();
        for fam in Family::ALL {
            let rep = scan_family(fam, &ScanConfig { count: 3, ..ScanConfig::default() });
            assert_eq!(rep.records.len(), 3);
            for r in &rep.records {
                eprintln!("{fam:?} {:?}", r.certificate);
                assert!(r.certificate.passes(&cfg.tol), "{:?}", r.certificate.failures(&cfg.tol));
            }
        }
    }

    #[test]
    fn legendre_ode_residuals_vanish() {
        let pair = BochnerPair {
            point: None,
            weight: WeightFn::single(0.0, 0.0, MatPoly::constant(Mat2::identity())),
            op: DiffOp2::legendre(),
            gamma: 0.0,
            family: None,
        };
        let r = ode_residuals(&pair, 32);
        assert!(r.max_interior() < 1e-10 && r.boundary < 1e-10, "{r:?}");
    }

    #[test]
    fn perturbed_a0_breaks_aux() {
        let p = scan_point(Family::III);
        let mut pair = build_pair(&p).unwrap();
        pair.op.a0 = pair.op.a0 + Mat2::diag(1e-3, 0.0);
        let r = ode_residuals(&pair, 64);
        assert!(r.aux > 1e-4, "{r:?}");
    }

    fn canonical_iii() -> ClassPoint {
        family_iii(1.7, -2.3, 0.2, -0.35, 1.0).unwrap()
    }

    #[test]
    fn normalization_undoes_a_random_frame() {
        let p = canonical_iii();
        assert!(p.a > 0.0);
        let u = Mat2::new(1.3, -0.4, 0.7, 2.1);
        let ui = u.inverse().unwrap();
        let c = |x: Mat2| u * x * ui;
        let op = p.op();
        let n = normalize_pair(&c(op.a11), &c(op.a10), &c(op.a0 + Mat2::scalar(0.3)), &c(p.b0)).unwrap();
        assert_eq!(n.point.family, Family::III);
        assert!(n.family_residual < 1e-10);
        assert!((n.point.b0 - p.b0).norm_max() < 1e-10);
        assert!((n.point.a - p.a).abs() + (n.point.lam - p.lam).abs() + (n.point.d - p.d).abs() < 1e-10);
    }

    #[test]
    fn canonical_input_is_fixed() {
        for p in [canonical_iii(), family_i(1.7, -2.3, 0.4).unwrap(), family_ii(0.6, -1.3, 0.4).unwrap()] {
            let op = p.op();
            let n = normalize_pair(&op.a11, &op.a10, &op.a0, &p.b0).unwrap();
            assert!((n.log.conjugation - Mat2::identity()).norm_max() < 1e-12, "{:?}", n.log);
            assert!(!n.log.reflected && n.log.translation == 0.0);
            assert_eq!(n.point.family, p.family);
        }
    }

    #[test]
    fn reflection_negates_b0() {
        let p = canonical_iii();
        let op = p.op();
        let (a11, a10, a0, b0) = reflect(&op.a11, &op.a10, &op.a0, &p.b0);
        assert_eq!(a11, op.a11);
        assert_eq!(a0, op.a0);
        assert_eq!(a10, -op.a10);
        assert_eq!(b0, -p.b0);
    }

    #[test]
    fn zero_deformation_is_identity_for_positive_a() {
        let p = canonical_iii();
        let d = translate_deform(&p, 0.0).unwrap();
        assert!(d.frame_residual < 1e-12);
        assert!((d.point.b0 - p.b0).norm_max() < 1e-12);
        assert!((d.point.a - p.a).abs() + (d.point.b - p.b).abs() + (d.point.d - p.d).abs() < 1e-12);
    }

    #[test]
    fn deformation_round_trip() {
        let p = canonical_iii();
        for k in [0.1, -0.25, 0.5] {
            let d = translate_deform(&p, k).unwrap();
            assert!(d.frame_residual < 1e-10);
            let back = translate_deform(&d.point, -k).unwrap();
            assert!((back.point.b0 - p.b0).norm_max() < 1e-9, "k = {k}");
            assert!((back.point.a - p.a).abs() + (back.point.lam - p.lam).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_rejects_c_off_two_minus_b() {
        let mut p = canonical_iii();
        p.c += 0.5;
        assert!(matches!(translate_deform(&p, 0.3), Err(BochnerError::InvalidDeformation { .. })));
    }

    #[test]
    fn unit_shift_matches_index_shift() {
        let p = scan_point(Family::III);
        let s = shift_identity(&p, 10, 200).unwrap();
        assert!(s.max() < 1e-6, "{s:?}");
    }

    #[test]
    fn case_iv_examples() {
        let b0 = Mat2::new(0.3, -0.6, -0.6, 1.1);
        let r = case_iv_dual_ode_check(0.7, 1.0, &b0);
        assert!(r.defect > 1e-3 && !r.diagonal);
        assert!(r.w22_consistency < 1e-12);
        let r = case_iv_dual_ode_check(0.5, 0.0, &b0);
        assert!(r.diagonal && r.defect < 1e-12);
        let r = case_iv_dual_ode_check(0.8, 0.0, &b0);
        assert!(r.defect > 1e-3);
    }

    #[test]
    fn family_denominator_guards() {
        assert!(matches!(family_i(1.0, -2.0, 0.3), Err(BochnerError::DegenerateDenominator { .. })));
        assert!(matches!(family_i(0.7, 1.4, 0.3), Err(BochnerError::DegenerateDenominator { .. })));
        assert!(matches!(family_ii(0.3, 0.5, 0.1), Err(BochnerError::DegenerateDenominator { .. })));
        assert!(matches!(family_iii(0.5, -2.0, 1.0, 1.0, 1.0), Err(BochnerError::DegenerateDenominator { .. })));
    }
}
