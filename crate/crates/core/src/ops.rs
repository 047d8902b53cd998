//! Right-acting second-order differential operators and banded shift operators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algebra::{Mat2, MatPoly, QuadCoeff};
use crate::error::{BochnerError, Result};
use crate::quad::DiscreteMeasure;

/// `𝔇 = ∂² a2(x) I + ∂ (A11 x + A10) + A0`, acting on the right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffOp2 {
    pub a2: QuadCoeff,
    pub a11: Mat2,
    pub a10: Mat2,
    pub a0: Mat2,
}

impl DiffOp2 {
    pub fn new(a2: QuadCoeff, a11: Mat2, a10: Mat2, a0: Mat2) -> Self {
        DiffOp2 { a2, a11, a10, a0 }
    }

    pub fn hypergeometric(a11: Mat2, a10: Mat2, a0: Mat2) -> Self {
        DiffOp2::new(QuadCoeff::hypergeometric(), a11, a10, a0)
    }

    /// Legendre operator on both diagonal entries.
    pub fn legendre() -> Self {
        DiffOp2::hypergeometric(Mat2::scalar(-2.0), Mat2::zero(), Mat2::zero())
    }

    pub fn is_hypergeometric(&self) -> bool {
        self.a2.is_hypergeometric()
    }

    pub fn a1(&self) -> MatPoly {
        MatPoly::linear(self.a11, self.a10)
    }

    /// `P'' a2 + P' A1 + P A0`.
    pub fn apply_right(&self, p: &MatPoly) -> MatPoly {
        let d1 = p.deriv();
        let d2 = d1.deriv();
        d2.scalar_mul(&self.a2.poly()).add(&d1.mul(&self.a1())).add(&p.right_mul(&self.a0))
    }

    /// `Λ(n) = a22 n² + (A11 − a22 I) n + A0`, also for real `n`.
    pub fn lambda(&self, n: f64) -> Mat2 {
        Mat2::scalar(self.a2.a22 * n * n) + (self.a11 - Mat2::scalar(self.a2.a22)) * n + self.a0
    }

    /// `ad_x^k(𝔇)` applied to `P`, with `ad_x(𝔇)(P) = (xP)·𝔇 − x(P·𝔇)`.
    pub fn ad_x_power(&self, k: u32, p: &MatPoly) -> MatPoly {
        if k == 0 {
            return self.apply_right(p);
        }
        self.ad_x_power(k - 1, &p.shift_x()).sub(&self.ad_x_power(k - 1, p).shift_x())
    }

    pub fn translated(&self, alpha: f64) -> Self {
        DiffOp2 { a0: self.a0 + Mat2::scalar(alpha), ..*self }
    }

    pub fn conjugated(&self, u: &Mat2, u_inv: &Mat2) -> Self {
        let c = |x: Mat2| *u * x * *u_inv;
        DiffOp2 { a2: self.a2, a11: c(self.a11), a10: c(self.a10), a0: c(self.a0) }
    }

    /// `x ↦ −x`.
    pub fn reflected(&self) -> Self {
        DiffOp2 {
            a2: QuadCoeff::new(self.a2.a22, -self.a2.a21, self.a2.a20),
            a11: self.a11,
            a10: -self.a10,
            a0: self.a0,
        }
    }
}

/// Monomial basis `E_ij x^k` for `k ≤ dmax`.
pub fn monomial_basis(dmax: usize) -> Vec<MatPoly> {
    let mut out = Vec::with_capacity(4 * (dmax + 1));
    for k in 0..=dmax {
        for i in 0..2 {
            for j in 0..2 {
                out.push(MatPoly::monomial(Mat2::unit(i, j), k));
            }
        }
    }
    out
}

/// Largest normalized `‖⟨P𝔇, Q⟩ − ⟨P, Q𝔇⟩‖` over the monomial basis.
///
/// Each pair is scaled by `√(‖⟨P𝔇,P𝔇⟩‖‖⟨Q,Q⟩‖) + √(‖⟨P,P⟩‖‖⟨Q𝔇,Q𝔇⟩‖)`, the Cauchy–Schwarz bound of the
/// two terms.
pub fn symmetry_defect(d: &DiffOp2, mu: &DiscreteMeasure, dmax: usize) -> f64 {
    let basis = monomial_basis(dmax);
    let vals: Vec<Vec<Mat2>> = basis.iter().map(|p| mu.values(p)).collect();
    let dvals: Vec<Vec<Mat2>> = basis.iter().map(|p| mu.values(&d.apply_right(p))).collect();
    let norms: Vec<f64> = vals.iter().map(|v| mu.pair(v, v).norm_max()).collect();
    let dnorms: Vec<f64> = dvals.iter().map(|v| mu.pair(v, v).norm_max()).collect();
    let mut worst = 0.0_f64;
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            let diff = mu.pair(&dvals[i], &vals[j]) - mu.pair(&vals[i], &dvals[j]);
            let scale = (dnorms[i] * norms[j]).sqrt() + (norms[i] * dnorms[j]).sqrt();
            if scale > 0.0 {
                worst = worst.max(diff.norm_max() / scale);
            }
        }
    }
    worst
}

/// Coefficient sequence `n ↦ C(n)` tabulated for `n ∈ [lo, lo + len)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub lo: i64,
    pub values: Vec<Mat2>,
}

impl Band {
    pub fn new(lo: i64, values: Vec<Mat2>) -> Self {
        Band { lo, values }
    }

    pub fn constant(m: Mat2, lo: i64, hi: i64) -> Self {
        Band::from_fn(lo, hi, |_| m)
    }

    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> Mat2) -> Self {
        Band { lo, values: (lo..=hi).map(f).collect() }
    }

    /// Last tabulated index; below `lo` when empty.
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> Option<Mat2> {
        if n < self.lo {
            return None;
        }
        self.values.get((n - self.lo) as usize).copied()
    }
}

/// Banded difference operator `Σ_k C_k(n) 𝒮^k` with `(𝒮F)(n) = F(n+1)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ShiftBandOp {
    pub bands: BTreeMap<i64, Band>,
}

impl ShiftBandOp {
    pub fn new() -> Self {
        ShiftBandOp::default()
    }

    pub fn with_band(mut self, offset: i64, band: Band) -> Self {
        self.bands.insert(offset, band);
        self
    }

    pub fn identity(lo: i64, hi: i64) -> Self {
        ShiftBandOp::new().with_band(0, Band::constant(Mat2::identity(), lo, hi))
    }

    /// `𝒮`
    pub fn shift(lo: i64, hi: i64) -> Self {
        ShiftBandOp::new().with_band(1, Band::constant(Mat2::identity(), lo, hi))
    }

    /// `𝒮*`
    pub fn shift_adjoint(lo: i64, hi: i64) -> Self {
        ShiftBandOp::new().with_band(-1, Band::constant(Mat2::identity(), lo, hi))
    }

    /// Left multiplication by `n ↦ D(n)`.
    pub fn diagonal(lo: i64, hi: i64, f: impl Fn(i64) -> Mat2) -> Self {
        ShiftBandOp::new().with_band(0, Band::from_fn(lo, hi, f))
    }

    /// `ℒ = 𝒮 + B(n) + C(n) 𝒮*`, with `B(n) = C(n) = 0` for `n < 0` down to `-pad`.
    pub fn jacobi(b: &[Mat2], c: &[Mat2], pad: i64) -> Self {
        let hi = b.len().min(c.len()) as i64 - 1;
        let get = |v: &[Mat2], n: i64| if n < 0 { Mat2::zero() } else { v[n as usize] };
        ShiftBandOp::new()
            .with_band(1, Band::constant(Mat2::identity(), -pad, hi))
            .with_band(0, Band::from_fn(-pad, hi, |n| get(b, n)))
            .with_band(-1, Band::from_fn(-pad, hi, |n| get(c, n)))
    }

    /// Largest `|k|` over stored bands.
    pub fn bandwidth(&self) -> i64 {
        self.bands.keys().map(|k| k.abs()).max().unwrap_or(0)
    }

    /// Coefficient of `𝒮^offset` at `n`; absent bands are identically zero.
    pub fn coeff(&self, offset: i64, n: i64) -> Result<Mat2> {
        match self.bands.get(&offset) {
            None => Ok(Mat2::zero()),
            Some(b) => b.get(n).ok_or(BochnerError::TruncationError { offset, n }),
        }
    }

    fn combine(&self, other: &ShiftBandOp, f: impl Fn(Mat2, Mat2) -> Mat2) -> ShiftBandOp {
        let mut out = ShiftBandOp::new();
        let keys: std::collections::BTreeSet<i64> = self.bands.keys().chain(other.bands.keys()).copied().collect();
        for k in keys {
            let band = match (self.bands.get(&k), other.bands.get(&k)) {
                (Some(a), Some(b)) => {
                    let lo = a.lo.max(b.lo);
                    let hi = a.hi().min(b.hi());
                    Band::from_fn(lo, hi, |n| f(a.get(n).unwrap(), b.get(n).unwrap()))
                }
                (Some(a), None) => Band::from_fn(a.lo, a.hi(), |n| f(a.get(n).unwrap(), Mat2::zero())),
                (None, Some(b)) => Band::from_fn(b.lo, b.hi(), |n| f(Mat2::zero(), b.get(n).unwrap())),
                (None, None) => unreachable!(),
            };
            out.bands.insert(k, band);
        }
        out
    }

    pub fn add(&self, other: &ShiftBandOp) -> ShiftBandOp {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ShiftBandOp) -> ShiftBandOp {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> ShiftBandOp {
        let bands = self
            .bands
            .iter()
            .map(|(k, b)| (*k, Band::new(b.lo, b.values.iter().map(|v| *v * s).collect())))
            .collect();
        ShiftBandOp { bands }
    }

    /// `(C_j(n) 𝒮^j)(D_k(n) 𝒮^k) = C_j(n) D_k(n+j) 𝒮^{j+k}` on the common valid range.
    pub fn compose(&self, other: &ShiftBandOp) -> ShiftBandOp {
        let mut ranges: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
        for (j, a) in &self.bands {
            for (k, b) in &other.bands {
                let lo = a.lo.max(b.lo - j);
                let hi = a.hi().min(b.hi() - j);
                ranges
                    .entry(j + k)
                    .and_modify(|r| {
                        r.0 = r.0.max(lo);
                        r.1 = r.1.min(hi);
                    })
                    .or_insert((lo, hi));
            }
        }
        let mut out = ShiftBandOp::new();
        for (m, (lo, hi)) in ranges {
            let band = Band::from_fn(lo, hi, |n| {
                let mut acc = Mat2::zero();
                for (j, a) in &self.bands {
                    if let Some(b) = other.bands.get(&(m - j)) {
                        acc += a.get(n).unwrap() * b.get(n + j).unwrap();
                    }
                }
                acc
            });
            out.bands.insert(m, band);
        }
        out
    }

    pub fn commutator(&self, other: &ShiftBandOp) -> ShiftBandOp {
        self.compose(other).sub(&other.compose(self))
    }

    /// `a22 ℒ² + a21 ℒ + a20 I`.
    pub fn a2_of(&self, a2: &QuadCoeff) -> ShiftBandOp {
        let (lo, hi) = self.bands.values().fold((i64::MIN, i64::MAX), |r, b| (r.0.max(b.lo), r.1.min(b.hi())));
        self.compose(self)
            .scale(a2.a22)
            .add(&self.scale(a2.a21))
            .add(&ShiftBandOp::identity(lo, hi).scale(a2.a20))
    }

    /// `L̃ = D(n)⁻¹ ℒ D(n)`-style conjugation: band `k` at `n` becomes `P(n) C_k(n) Q(n+k)`.
    pub fn conjugate_by(&self, p: impl Fn(i64) -> Mat2, q: impl Fn(i64) -> Mat2) -> ShiftBandOp {
        let bands = self
            .bands
            .iter()
            .map(|(k, b)| (*k, Band::from_fn(b.lo, b.hi(), |n| p(n) * b.get(n).unwrap() * q(n + k))))
            .collect();
        ShiftBandOp { bands }
    }
}

pub fn shift_compose(a: &ShiftBandOp, b: &ShiftBandOp) -> ShiftBandOp {
    a.compose(b)
}

pub fn shift_commutator(a: &ShiftBandOp, b: &ShiftBandOp) -> ShiftBandOp {
    a.commutator(b)
}

pub fn a2_of_l(l: &ShiftBandOp, a2: &QuadCoeff) -> ShiftBandOp {
    l.a2_of(a2)
}
