//! 2×2 real matrices, matrix polynomials and matrix rational functions.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Real 2×2 matrix stored row-major as `[e11, e12, e21, e22]`.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2 {
    pub e: [f64; 4],
}

impl From<[[f64; 2]; 2]> for Mat2 {
    fn from(r: [[f64; 2]; 2]) -> Self {
        Mat2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        m.rows()
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{:e}, {:e}], [{:e}, {:e}]]", self.e[0], self.e[1], self.e[2], self.e[3])
    }
}

impl Mat2 {
    pub const fn new(e11: f64, e12: f64, e21: f64, e22: f64) -> Self {
        Mat2 { e: [e11, e12, e21, e22] }
    }
    pub const fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }
    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }
    pub fn scalar(s: f64) -> Self {
        Mat2::new(s, 0.0, 0.0, s)
    }
    pub fn diag(d1: f64, d2: f64) -> Self {
        Mat2::new(d1, 0.0, 0.0, d2)
    }
    /// The symplectic matrix `[[0,1],[-1,0]]`.
    pub const fn j() -> Self {
        Mat2::new(0.0, 1.0, -1.0, 0.0)
    }
    /// Elementary matrix with a one at `(i, j)` (zero-based).
    pub fn unit(i: usize, j: usize) -> Self {
        let mut m = Mat2::zero();
        m.e[2 * i + j] = 1.0;
        m
    }
    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.e[0], self.e[1]], [self.e[2], self.e[3]]]
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[2 * i + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.e[2 * i + j] = v;
    }
    pub fn transpose(&self) -> Self {
        Mat2::new(self.e[0], self.e[2], self.e[1], self.e[3])
    }
    pub fn det(&self) -> f64 {
        self.e[0] * self.e[3] - self.e[1] * self.e[2]
    }
    pub fn trace(&self) -> f64 {
        self.e[0] + self.e[3]
    }
    pub fn adj(&self) -> Self {
        adjugate(self)
    }
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        let scale = self.norm_max().powi(2);
        if d == 0.0 || !d.is_finite() || d.abs() <= 1e-300_f64.max(1e-15 * scale) {
            return None;
        }
        Some(self.adj() * (1.0 / d))
    }
    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.e.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
    pub fn norm_fro(&self) -> f64 {
        self.e.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    pub fn is_finite(&self) -> bool {
        self.e.iter().all(|v| v.is_finite())
    }
    /// `‖X − Xᵀ‖_max`.
    pub fn skew_defect(&self) -> f64 {
        (self.e[1] - self.e[2]).abs()
    }
    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()) * 0.5
    }
    /// Eigenvalues as `(re, im)` pairs, ordered by decreasing real part.
    pub fn eigenvalues(&self) -> [(f64, f64); 2] {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        if disc >= 0.0 {
            let s = disc.sqrt();
            [(half_tr + s, 0.0), (half_tr - s, 0.0)]
        } else {
            let s = (-disc).sqrt();
            [(half_tr, s), (half_tr, -s)]
        }
    }
    /// Real eigenvalues, largest first, or `None` when they are complex.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let ev = self.eigenvalues();
        (ev[0].1 == 0.0).then_some((ev[0].0, ev[1].0))
    }
    /// Symmetric positive definite test via leading minors.
    pub fn is_spd(&self) -> bool {
        self.skew_defect() <= 1e-10 * self.norm_max() && self.e[0] > 0.0 && self.det() > 0.0
    }
    /// Symmetric square root of an SPD matrix.
    pub fn spd_sqrt(&self) -> Option<Self> {
        if !self.is_spd() {
            return None;
        }
        let s = self.symmetric_part();
        let d = s.det().sqrt();
        let t = (s.trace() + 2.0 * d).sqrt();
        Some((s + Mat2::scalar(d)) * (1.0 / t))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.e[0] + o.e[0], self.e[1] + o.e[1], self.e[2] + o.e[2], self.e[3] + o.e[3])
    }
}
impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.e[0] - o.e[0], self.e[1] - o.e[1], self.e[2] - o.e[2], self.e[3] - o.e[3])
    }
}
impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}
impl SubAssign for Mat2 {
    fn sub_assign(&mut self, o: Mat2) {
        *self = *self - o;
    }
}
impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self * -1.0
    }
}
impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.e;
        let b = &o.e;
        Mat2::new(
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        )
    }
}
impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.e[0] * s, self.e[1] * s, self.e[2] * s, self.e[3] * s)
    }
}
impl Mul<Mat2> for f64 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        m * self
    }
}

/// `adj([[a,b],[c,d]]) = [[d,-b],[-c,a]]`.
pub fn adjugate(x: &Mat2) -> Mat2 {
    Mat2::new(x.e[3], -x.e[1], -x.e[2], x.e[0])
}

pub fn commutator(x: &Mat2, y: &Mat2) -> Mat2 {
    *x * *y - *y * *x
}

/// Max-norm of `X adj(Y) + Y adj(X) − tr(Y adj(X)) I`.
pub fn trace_identity_check(x: &Mat2, y: &Mat2) -> f64 {
    let lhs = *x * y.adj() + *y * x.adj();
    (lhs - Mat2::scalar((*y * x.adj()).trace())).norm_max()
}

/// Scalar real polynomial, coefficient `k` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }
    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }
    pub fn one() -> Self {
        Poly::constant(1.0)
    }
    /// `(x − r)`
    pub fn linear_root(r: f64) -> Self {
        Poly::new(vec![-r, 1.0])
    }
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
    pub fn deriv(&self) -> Poly {
        Poly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }
    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::default();
        }
        let mut out = vec![0.0; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let c = (0..n)
            .map(|k| self.coeffs.get(k).copied().unwrap_or(0.0) + o.coeffs.get(k).copied().unwrap_or(0.0))
            .collect();
        Poly::new(c)
    }
    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }
    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1.0))
    }
    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| acc.mul(self))
    }
}

/// Scalar rational function `num / den`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatFn {
    pub num: Poly,
    pub den: Poly,
}

impl RatFn {
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "denominator must not be identically zero");
        RatFn { num, den }
    }
    pub fn poly(p: Poly) -> Self {
        RatFn::new(p, Poly::one())
    }
    pub fn constant(c: f64) -> Self {
        RatFn::poly(Poly::constant(c))
    }
    pub fn eval(&self, x: f64) -> f64 {
        self.num.eval(x) / self.den.eval(x)
    }
    pub fn add(&self, o: &RatFn) -> RatFn {
        if self.den == o.den {
            return RatFn::new(self.num.add(&o.num), self.den.clone());
        }
        RatFn::new(self.num.mul(&o.den).add(&o.num.mul(&self.den)), self.den.mul(&o.den))
    }
    pub fn sub(&self, o: &RatFn) -> RatFn {
        self.add(&o.scale(-1.0))
    }
    pub fn mul(&self, o: &RatFn) -> RatFn {
        RatFn::new(self.num.mul(&o.num), self.den.mul(&o.den))
    }
    /// `None` when `o` is the zero function.
    pub fn div(&self, o: &RatFn) -> Option<RatFn> {
        (!o.num.is_zero()).then(|| RatFn::new(self.num.mul(&o.den), self.den.mul(&o.num)))
    }
    pub fn scale(&self, s: f64) -> RatFn {
        RatFn::new(self.num.scale(s), self.den.clone())
    }
    pub fn deriv(&self) -> RatFn {
        let num = self.num.deriv().mul(&self.den).sub(&self.num.mul(&self.den.deriv()));
        RatFn::new(num, self.den.mul(&self.den))
    }
    /// Numerator coefficients all below `tol` times the largest coefficient seen while forming it.
    pub fn is_negligible(&self, tol: f64, scale: f64) -> bool {
        self.num.coeffs.iter().all(|c| c.abs() <= tol * scale)
    }
}

/// Polynomial in `x` with `Mat2` coefficients; `coeffs[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MatPoly {
    pub coeffs: Vec<Mat2>,
}

impl MatPoly {
    pub fn new(mut coeffs: Vec<Mat2>) -> Self {
        while coeffs.last().is_some_and(|m| *m == Mat2::zero()) {
            coeffs.pop();
        }
        MatPoly { coeffs }
    }
    pub fn zero() -> Self {
        MatPoly::default()
    }
    pub fn constant(m: Mat2) -> Self {
        MatPoly::new(vec![m])
    }
    /// `A x + B`
    pub fn linear(a: Mat2, b: Mat2) -> Self {
        MatPoly::new(vec![b, a])
    }
    /// `M x^k`
    pub fn monomial(m: Mat2, k: usize) -> Self {
        let mut c = vec![Mat2::zero(); k + 1];
        c[k] = m;
        MatPoly::new(c)
    }
    /// Degree, with `-1` for the zero polynomial.
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }
    pub fn coeff(&self, k: usize) -> Mat2 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }
    pub fn leading(&self) -> Mat2 {
        self.coeffs.last().copied().unwrap_or_default()
    }
    pub fn eval(&self, x: f64) -> Mat2 {
        self.coeffs.iter().rev().fold(Mat2::zero(), |acc, c| acc * x + *c)
    }
    pub fn add(&self, o: &MatPoly) -> MatPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        MatPoly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }
    pub fn sub(&self, o: &MatPoly) -> MatPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        MatPoly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }
    pub fn mul(&self, o: &MatPoly) -> MatPoly {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return MatPoly::zero();
        }
        let mut out = vec![Mat2::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] += *a * *b;
            }
        }
        MatPoly::new(out)
    }
    pub fn scale(&self, s: f64) -> MatPoly {
        MatPoly::new(self.coeffs.iter().map(|c| *c * s).collect())
    }
    /// `M · P(x)`
    pub fn left_mul(&self, m: &Mat2) -> MatPoly {
        MatPoly::new(self.coeffs.iter().map(|c| *m * *c).collect())
    }
    /// `P(x) · M`
    pub fn right_mul(&self, m: &Mat2) -> MatPoly {
        MatPoly::new(self.coeffs.iter().map(|c| *c * *m).collect())
    }
    pub fn scalar_mul(&self, p: &Poly) -> MatPoly {
        if self.coeffs.is_empty() || p.is_zero() {
            return MatPoly::zero();
        }
        let mut out = vec![Mat2::zero(); self.coeffs.len() + p.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in p.coeffs.iter().enumerate() {
                out[i + j] += *a * *b;
            }
        }
        MatPoly::new(out)
    }
    pub fn deriv(&self) -> MatPoly {
        MatPoly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, c)| *c * k as f64).collect())
    }
    /// Multiplication by `x`.
    pub fn shift_x(&self) -> MatPoly {
        if self.coeffs.is_empty() {
            return MatPoly::zero();
        }
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(Mat2::zero());
        c.extend_from_slice(&self.coeffs);
        MatPoly::new(c)
    }
    pub fn transpose(&self) -> MatPoly {
        MatPoly::new(self.coeffs.iter().map(Mat2::transpose).collect())
    }
    /// Largest absolute coefficient entry.
    pub fn norm_max(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm_max()))
    }
    /// Extract the scalar polynomial of entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.get(i, j)).collect())
    }
    /// Divide by `(x − r)`, returning quotient and remainder.
    pub fn div_linear(&self, r: f64) -> (MatPoly, Mat2) {
        if self.coeffs.is_empty() {
            return (MatPoly::zero(), Mat2::zero());
        }
        let n = self.coeffs.len();
        let mut q = vec![Mat2::zero(); n - 1];
        let mut carry = Mat2::zero();
        for k in (0..n).rev() {
            let v = self.coeffs[k] + carry * r;
            if k == 0 {
                return (MatPoly::new(q), v);
            }
            q[k - 1] = v;
            carry = v;
        }
        unreachable!()
    }
}

/// Matrix polynomial over a common scalar denominator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatRational {
    pub numerator: MatPoly,
    pub denominator: Poly,
}

impl MatRational {
    pub fn new(numerator: MatPoly, denominator: Poly) -> Self {
        assert!(!denominator.is_zero(), "denominator must not be identically zero");
        MatRational { numerator, denominator }
    }
    pub fn from_poly(p: MatPoly) -> Self {
        MatRational::new(p, Poly::one())
    }
    /// Value at `x`, or `None` on a root of the denominator.
    pub fn eval(&self, x: f64) -> Option<Mat2> {
        let d = self.denominator.eval(x);
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.numerator.eval(x) * (1.0 / d))
    }
    /// Quotient-rule derivative, exact in the coefficients.
    pub fn deriv(&self) -> MatRational {
        if self.denominator.degree() <= 0 {
            let c = self.denominator.coeffs[0];
            return MatRational::new(self.numerator.deriv().scale(1.0 / c), Poly::one());
        }
        let num = self
            .numerator
            .deriv()
            .scalar_mul(&self.denominator)
            .sub(&self.numerator.scalar_mul(&self.denominator.deriv()));
        MatRational::new(num, self.denominator.mul(&self.denominator))
    }
    pub fn transpose(&self) -> MatRational {
        MatRational::new(self.numerator.transpose(), self.denominator.clone())
    }
}

/// `a2(x) = a22 x² + a21 x + a20`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeff {
    pub a22: f64,
    pub a21: f64,
    pub a20: f64,
}

impl QuadCoeff {
    pub const fn new(a22: f64, a21: f64, a20: f64) -> Self {
        QuadCoeff { a22, a21, a20 }
    }
    /// `1 − x²`
    pub const fn hypergeometric() -> Self {
        QuadCoeff::new(-1.0, 0.0, 1.0)
    }
    pub fn is_hypergeometric(&self) -> bool {
        *self == QuadCoeff::hypergeometric()
    }
    pub fn eval(&self, x: f64) -> f64 {
        (self.a22 * x + self.a21) * x + self.a20
    }
    pub fn deriv(&self, x: f64) -> f64 {
        2.0 * self.a22 * x + self.a21
    }
    pub fn poly(&self) -> Poly {
        Poly::new(vec![self.a20, self.a21, self.a22])
    }
    /// `a22 X² + a21 X + a20 I` for a matrix argument.
    pub fn eval_mat(&self, x: &Mat2) -> Mat2 {
        *x * *x * self.a22 + *x * self.a21 + Mat2::scalar(self.a20)
    }
}

/// Row-major vectorization `vec(X)[2i + j] = X_ij`.
pub fn vec4(x: &Mat2) -> [f64; 4] {
    x.e
}

pub fn unvec4(v: &[f64]) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjugate_examples() {
        assert_eq!(adjugate(&Mat2::identity()), Mat2::identity());
        assert_eq!(adjugate(&Mat2::j()), Mat2::new(0.0, -1.0, 1.0, 0.0));
        let x = Mat2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(adjugate(&x), Mat2::new(4.0, -2.0, -3.0, 1.0));
        assert_eq!(x + adjugate(&x), Mat2::scalar(5.0));
    }

    #[test]
    fn commutator_examples() {
        let x = Mat2::new(0.3, -1.0, 2.0, 0.7);
        assert_eq!(commutator(&x, &x), Mat2::zero());
        assert_eq!(commutator(&Mat2::identity(), &x), Mat2::zero());
        let e12 = Mat2::unit(0, 1);
        let e21 = Mat2::unit(1, 0);
        assert_eq!(commutator(&e12, &e21), Mat2::diag(1.0, -1.0));
    }

    #[test]
    fn matpoly_examples() {
        let p = MatPoly::linear(Mat2::new(1.0, 2.0, 3.0, 4.0), Mat2::new(5.0, 6.0, 7.0, 8.0));
        assert_eq!(p.mul(&MatPoly::zero()).degree(), -1);
        let ix = MatPoly::linear(Mat2::identity(), Mat2::zero());
        assert_eq!(ix.mul(&ix), MatPoly::monomial(Mat2::identity(), 2));
        assert_eq!(p.eval(0.0), Mat2::new(5.0, 6.0, 7.0, 8.0));
    }

    #[test]
    fn div_linear_roundtrip() {
        let p = MatPoly::new(vec![Mat2::new(1.0, 2.0, 0.0, 1.0), Mat2::identity(), Mat2::j()]);
        let prod = p.mul(&MatPoly::linear(Mat2::identity(), Mat2::scalar(-0.5)));
        let (q, r) = prod.div_linear(0.5);
        assert!(r.norm_max() < 1e-15);
        assert!(q.sub(&p).norm_max() < 1e-15);
    }

    #[test]
    fn rational_derivative() {
        let r = MatRational::new(MatPoly::monomial(Mat2::identity(), 2), Poly::new(vec![1.0, 0.0, -1.0]));
        // d/dx x²/(1−x²) = 2x/(1−x²)²
        let x = 0.3;
        let d = r.deriv().eval(x).unwrap();
        let exact = 2.0 * x / (1.0 - x * x).powi(2);
        assert!((d.get(0, 0) - exact).abs() < 1e-14);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let m = Mat2::new(2.0, 0.5, 0.5, 1.0);
        let s = m.spd_sqrt().unwrap();
        assert!((s * s - m).norm_max() < 1e-14);
    }
}
