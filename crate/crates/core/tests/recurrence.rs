mod common;

use bochner_core::algebra::{commutator, Mat2, MatPoly, QuadCoeff};
use bochner_core::classify::Family;
use bochner_core::error::BochnerError;
use bochner_core::ops::DiffOp2;
use bochner_core::quad::WeightFn;
use bochner_core::recurrence::{
    ad_residuals, b_update_step, build_hk, c_from_b, c_update_step, det_h_vanishes, exceptional_cases, generate_ops,
    iterate_b, m_from_b, m_update_residual, normalized_op, proportionality, vectorize, ExceptionalCase, OpSeq,
};
use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

fn mat() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-3.0..3.0_f64).prop_map(|e| Mat2 { e })
}

fn family_ops(fam: Family, n_max: usize) -> Vec<(DiffOp2, OpSeq)> {
    common::scanned(fam)
        .iter()
        .map(|p| {
            let pair = common::pair(p);
            (pair.op, generate_ops(&pair.weight.discretize(200).unwrap(), n_max).unwrap())
        })
        .collect()
}

fn vec4(x: &Mat2) -> Vector4<f64> {
    Vector4::new(x.e[0], x.e[1], x.e[2], x.e[3])
}

#[test]
fn family_sequences_satisfy_the_recurrence_invariants() {
    for fam in Family::ALL {
        for (_, ops) in family_ops(fam, 25) {
            let mu_check = ops.three_term_defect();
            assert!(mu_check < 1e-8, "family {} three-term {mu_check}", fam.name());
            assert!(ops.monicity_defect() < 1e-12);
            assert!(ops.norm_product_defect() < 1e-8, "family {}", fam.name());
            for n in 1..ops.len() {
                let c = ops.m[n] * ops.m[n - 1].inverse().unwrap();
                assert!((c - ops.c[n]).norm_max() <= 1e-12 * c.norm_max().max(1.0));
                assert!(ops.m[n].is_spd(), "family {} M({n}) not positive definite", fam.name());
            }
        }
    }
}

#[test]
fn family_sequences_are_orthogonal() {
    for fam in Family::ALL {
        let p = &common::scanned(fam)[0];
        let mu = common::pair(p).weight.discretize(200).unwrap();
        let ops = generate_ops(&mu, 15).unwrap();
        assert!(ops.orthogonality_defect(&mu) < 1e-8, "family {}", fam.name());
    }
}

#[test]
fn h_matrix_matches_the_explicit_display() {
    let (a22, a, b, c, d, y) = (-1.0, 0.7, 1.3, -0.4, 0.25, -2.1);
    let sys = build_hk(&normalized_op(QuadCoeff::new(a22, 0.0, 1.0), a, b, c, d, y, Mat2::zero()));
    #[rustfmt::skip]
    let h1 = Matrix4::new(
        2.0 * a22, c - b, c + b, 0.0,
        -(c + b), 2.0 * a22 + 2.0 * d, 0.0, c + b,
        -(c - b), 0.0, 2.0 * a22 - 2.0 * d, c - b,
        0.0, -(c - b), -(c + b), 2.0 * a22,
    );
    #[rustfmt::skip]
    let h0 = Matrix4::new(
        y - 2.0 * a22 + d, -(c - b), 0.0, 0.0,
        c + b, y - 2.0 * a22 + 2.0 * a - d, 0.0, 0.0,
        0.0, 0.0, y - 2.0 * a22 - 2.0 * a + d, -(c - b),
        0.0, 0.0, c + b, y - 2.0 * a22 - d,
    );
    assert!((sys.h1 - h1).amax() < 1e-15, "{}", sys.h1);
    assert!((sys.h0 - h0).amax() < 1e-15, "{}", sys.h0);
}

#[test]
fn b_stepping_reproduces_the_computed_sequence() {
    for fam in Family::ALL {
        for (op, ops) in family_ops(fam, 12) {
            let bs = iterate_b(&ops.b[0], &op, 12).unwrap();
            for n in 0..=12 {
                let err = (bs[n] - ops.b[n]).norm_max() / ops.b[n].norm_max().max(1.0);
                assert!(err < 1e-6, "family {} n {n}: {err}", fam.name());
            }
            for n in 1..11 {
                let next = c_update_step(&ops.c[n], &ops.b[n], n as i64, &op).unwrap();
                let err = (next - ops.c[n + 1]).norm_max() / ops.c[n + 1].norm_max();
                assert!(err < 1e-6, "family {} C({}) {err}", fam.name(), n + 1);
            }
        }
    }
}

#[test]
fn case_iv_update_is_singular() {
    let a = 0.8;
    let (b, c, d, lam) = (0.6, 0.6, -1.0, 2.0 * a - 1.0);
    assert!(exceptional_cases(-1.0, a, b, c, d, lam).contains(&ExceptionalCase::IV));
    assert!(det_h_vanishes(-1.0, a, b, c, d, lam));
    let op = normalized_op(QuadCoeff::hypergeometric(), a, b, c, d, lam, Mat2::zero());
    assert!(matches!(b_update_step(&Mat2::new(0.1, 0.2, 0.3, 0.4), 2, &op), Err(BochnerError::SingularUpdate { n: 2 })));
}

#[test]
fn generic_parameters_are_not_exceptional() {
    assert!(exceptional_cases(-1.0, 0.7, 1.3, -0.4, 0.25, -2.1).is_empty());
    assert!(!det_h_vanishes(-1.0, 0.7, 1.3, -0.4, 0.25, -2.1));
    assert!(exceptional_cases(0.0, 0.0, 0.5, 0.5, 1.0, 1.0).contains(&ExceptionalCase::I));
    assert!(det_h_vanishes(0.0, 0.0, 0.5, 0.5, 1.0, 1.0));
    assert!(exceptional_cases(-1.0, 0.3, 0.5, -0.5, 1.0, -1.6).contains(&ExceptionalCase::V));
    assert!(det_h_vanishes(-1.0, 0.3, 0.5, -0.5, 1.0, -1.6));
}

#[test]
fn norm_update_holds_and_detects_perturbation() {
    let mu = WeightFn::single(0.0, 0.0, MatPoly::constant(Mat2::identity())).discretize(60).unwrap();
    let ops = generate_ops(&mu, 12).unwrap();
    let leg = DiffOp2::legendre();
    for n in 1..11 {
        let r = m_update_residual(&ops.m[n - 1], &ops.m[n], &ops.m[n + 1], &ops.b[n], n as i64, &leg).unwrap();
        assert!(r < 1e-10, "Legendre n {n}: {r}");
    }
    for (op, ops) in family_ops(Family::II, 12) {
        for n in 1..11 {
            let r = m_update_residual(&ops.m[n - 1], &ops.m[n], &ops.m[n + 1], &ops.b[n], n as i64, &op).unwrap();
            assert!(r < 1e-7, "family II n {n}: {r}");
        }
        let bad = ops.m[6] * 1.001;
        let r = m_update_residual(&ops.m[4], &ops.m[5], &bad, &ops.b[5], 5, &op).unwrap();
        assert!(r > 1e-4, "perturbed residual {r}");
    }
}

#[test]
fn norms_and_c_follow_from_commutators() {
    for (op, ops) in family_ops(Family::III, 10) {
        let mt: Vec<Mat2> = (0..=10).map(|n| m_from_b(&ops.b[n], &op.lambda(n as f64)).unwrap()).collect();
        let beta: Vec<f64> = (0..=10).map(|n| proportionality(&mt[n], &ops.m[n])).collect();
        for n in 0..10 {
            let c = c_from_b(&ops.b[n], &ops.b[n + 1], &op.lambda(n as f64), &op.lambda(n as f64 + 1.0), beta[n + 1] / beta[n])
                .unwrap();
            let err = (c - ops.c[n + 1]).norm_max() / ops.c[n + 1].norm_max();
            assert!(err < 1e-6, "n {n}: {err}");
        }
    }
}

#[test]
fn ad_condition_bands_vanish_on_family_points() {
    for fam in Family::ALL {
        for (op, ops) in family_ops(fam, 24) {
            let r = ad_residuals(&ops.b, &ops.c, &op, 20).unwrap();
            for k in [2, 1, 0, -1] {
                assert!(r.max_relative(k) < 1e-8, "family {} Z{k} = {}", fam.name(), r.max_relative(k));
            }
        }
    }
}

#[test]
fn scalar_lambda_gives_commuting_b() {
    let op = DiffOp2::hypergeometric(Mat2::scalar(-3.0), Mat2::diag(0.5, -0.25), Mat2::zero());
    assert!(commutator(&op.lambda(4.0), &op.lambda(7.0)).norm_max() == 0.0);
    assert!(matches!(m_from_b(&Mat2::new(0.2, 0.1, -0.3, 0.4), &op.lambda(3.0)), Err(BochnerError::NoCommutator)));
}

proptest! {
    #[test]
    fn vectorized_h_matches_matrix_form(a11 in mat(), a0 in mat(), x in mat(), a22 in -2.0..2.0_f64, n in -3.0..10.0_f64) {
        let op = DiffOp2::new(QuadCoeff::new(a22, 0.0, 0.0), a11, Mat2::zero(), a0);
        let sys = build_hk(&op);
        let lhs = sys.h(n) * vec4(&x);
        let l = a11 * n + a0;
        let rhs = vec4(&(x * (2.0 * a22 * (n - 1.0)) + commutator(&l, &x) + x * a11));
        prop_assert!((lhs - rhs).amax() <= 1e-12 * rhs.amax().max(1.0));
        let v = vectorize(|y| a11 * y);
        prop_assert!((v * vec4(&x) - vec4(&(a11 * x))).amax() <= 1e-12 * x.norm_max().max(1.0) * a11.norm_max().max(1.0));
    }

    #[test]
    fn commutator_norms_are_symmetric(b in mat(), l in mat()) {
        if let Ok(m) = m_from_b(&b, &l) {
            prop_assert!(m.skew_defect() <= 1e-13 * m.norm_max().max(1.0));
        }
    }
}
