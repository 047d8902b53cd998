mod common;

use bochner_core::algebra::{Mat2, MatPoly, QuadCoeff};
use bochner_core::classify::Family;
use bochner_core::ops::{monomial_basis, symmetry_defect, Band, DiffOp2, ShiftBandOp};
use bochner_core::quad::WeightFn;
use bochner_core::recurrence::generate_ops;
use proptest::prelude::*;

fn mat() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-3.0..3.0_f64).prop_map(|e| Mat2 { e })
}

fn op() -> impl Strategy<Value = DiffOp2> {
    (prop::array::uniform3(-2.0..2.0_f64), mat(), mat(), mat())
        .prop_map(|(q, a11, a10, a0)| DiffOp2::new(QuadCoeff::new(q[0], q[1], q[2]), a11, a10, a0))
}

fn band_op(lo: i64, hi: i64) -> impl Strategy<Value = ShiftBandOp> {
    let len = (hi - lo + 1) as usize;
    prop::collection::vec(prop::collection::vec(mat(), len), 3).prop_map(move |bands| {
        let mut out = ShiftBandOp::new();
        for (k, v) in (-1..=1).zip(bands) {
            out = out.with_band(k, Band::new(lo, v));
        }
        out
    })
}

fn bands_close(a: &ShiftBandOp, b: &ShiftBandOp, lo: i64, hi: i64, tol: f64) -> bool {
    let keys: std::collections::BTreeSet<i64> = a.bands.keys().chain(b.bands.keys()).copied().collect();
    keys.iter().all(|k| (lo..=hi).all(|n| (a.coeff(*k, n).unwrap() - b.coeff(*k, n).unwrap()).norm_max() <= tol))
}

#[test]
fn scalar_operator_is_symmetric_for_any_weight() {
    let w = WeightFn::single(0.3, -0.2, MatPoly::new(vec![Mat2::new(2.0, 0.5, 0.5, 1.0), Mat2::new(0.1, 0.2, 0.2, -0.3)]));
    let mu = w.discretize(40).unwrap();
    let d = DiffOp2::new(QuadCoeff::new(0.0, 0.0, 0.0), Mat2::zero(), Mat2::zero(), Mat2::identity());
    assert_eq!(symmetry_defect(&d, &mu, 4), 0.0);
}

#[test]
fn legendre_operator_is_symmetric() {
    let mu = WeightFn::single(0.0, 0.0, MatPoly::constant(Mat2::identity())).discretize(40).unwrap();
    assert!(symmetry_defect(&DiffOp2::legendre(), &mu, 6) < 1e-10);
}

#[test]
fn family_operators_are_symmetric_and_diagonalize_the_ops() {
    for fam in Family::ALL {
        for p in common::scanned(fam) {
            let pair = common::pair(p);
            let mu = pair.weight.discretize(200).unwrap();
            assert!(symmetry_defect(&pair.op, &mu, 6) < 1e-8, "family {}", fam.name());
            let ops = generate_ops(&mu, 8).unwrap();
            for (n, pn) in ops.polys.iter().enumerate() {
                let lhs = pair.op.apply_right(pn);
                let rhs = pn.left_mul(&pair.op.lambda(n as f64));
                assert!(lhs.sub(&rhs).norm_max() <= 1e-8 * rhs.norm_max().max(1.0), "family {} n {n}", fam.name());
            }
        }
    }
}

#[test]
fn legendre_square_middle_band() {
    let n_max = 30;
    let c: Vec<Mat2> = (0..=n_max).map(|n| Mat2::scalar((n * n) as f64 / (4.0 * (n * n) as f64 - 1.0))).collect();
    let b = vec![Mat2::zero(); n_max + 1];
    let l = ShiftBandOp::jacobi(&b, &c, 2);
    let l2 = l.compose(&l);
    assert_eq!(l2.bandwidth(), 2);
    for n in 0..(n_max as i64) {
        let expect = c[n as usize + 1] + c[n as usize];
        assert!((l2.coeff(0, n).unwrap() - expect).norm_max() < 1e-15);
        assert_eq!(l2.coeff(2, n).unwrap(), Mat2::identity());
    }
}

proptest! {
    #[test]
    fn leading_coefficient_is_lambda(d in op(), x in mat(), n in 0usize..8) {
        let p = MatPoly::monomial(x, n);
        let out = d.apply_right(&p);
        let expect = x * d.lambda(n as f64);
        prop_assert!(out.degree() <= n as i64);
        prop_assert!((out.coeff(n) - expect).norm_max() <= 1e-12 * expect.norm_max().max(1.0));
    }

    #[test]
    fn ad_x_identities(d in op()) {
        for p in monomial_basis(6) {
            let two = p.scalar_mul(&d.a2.poly()).scale(2.0);
            let ad2 = d.ad_x_power(2, &p);
            prop_assert!(ad2.sub(&two).norm_max() <= 1e-10 * two.norm_max().max(1.0));
            prop_assert!(d.ad_x_power(3, &p).norm_max() <= 1e-10);
        }
    }

    #[test]
    fn compose_is_bilinear_with_additive_bandwidth(a in band_op(-6, 6), b in band_op(-6, 6), c in band_op(-6, 6), s in -2.0..2.0_f64) {
        let ab = a.compose(&b);
        prop_assert_eq!(ab.bandwidth(), a.bandwidth() + b.bandwidth());
        let lhs = a.add(&b.scale(s)).compose(&c);
        let rhs = a.compose(&c).add(&b.compose(&c).scale(s));
        prop_assert!(bands_close(&lhs, &rhs, -4, 4, 1e-11));
        let lhs = c.compose(&a.add(&b));
        let rhs = c.compose(&a).add(&c.compose(&b));
        prop_assert!(bands_close(&lhs, &rhs, -4, 4, 1e-11));
        let assoc_l = a.compose(&b).compose(&c);
        let assoc_r = a.compose(&b.compose(&c));
        prop_assert!(bands_close(&assoc_l, &assoc_r, -3, 3, 1e-10));
    }
}
