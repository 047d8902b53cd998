mod common;

use bochner_core::algebra::{Mat2, MatPoly};
use bochner_core::classify::Family;
use bochner_core::quad::{self, jacobi_mass, JacobiRule, WeightFn};
use proptest::prelude::*;

fn legendre_weight() -> WeightFn {
    WeightFn::single(0.0, 0.0, MatPoly::constant(Mat2::identity()))
}

#[test]
fn semicircle_mass() {
    assert!((jacobi_mass(0.5, 0.5) - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    let rule = JacobiRule::new(0.5, 0.5, 10).unwrap();
    assert!((rule.integrate(|_| 1.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
}

#[test]
fn legendre_second_moment() {
    let x = MatPoly::linear(Mat2::identity(), Mat2::zero());
    let ip = quad::inner_product(&x, &x, &legendre_weight(), 20).unwrap();
    assert!((ip - Mat2::scalar(2.0 / 3.0)).norm_max() < 1e-14);
    let m0 = quad::moment(0, &legendre_weight(), 20).unwrap();
    assert!((m0 - Mat2::scalar(2.0)).norm_max() < 1e-14);
}

#[test]
fn nodes_are_sorted_interior_and_weights_positive() {
    let rule = JacobiRule::new(-0.5, 1.5, 50).unwrap();
    assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    assert!(rule.nodes.iter().all(|x| x.abs() < 1.0));
    assert!(rule.weights.iter().all(|w| *w > 0.0));
}

#[test]
fn scanned_weights_are_positive_and_reproduce_b0() {
    for fam in Family::ALL {
        for p in common::scanned(fam) {
            let w = common::pair(p).weight;
            let m0 = quad::moment(0, &w, 200).unwrap();
            let m1 = quad::moment(1, &w, 200).unwrap();
            assert!(m0.is_spd(), "family {}: moment 0 not positive definite", fam.name());
            let b0 = m1 * m0.inverse().unwrap();
            assert!((b0 - p.b0).norm_max() / p.b0.norm_max().max(1.0) < 1e-8, "family {}", fam.name());
            assert!(w.discretize(200).unwrap().asymmetry() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn gauss_rule_exact_to_degree_2m_minus_1(alpha in -0.9..3.0_f64, beta in -0.9..3.0_f64, j in 0i32..16) {
        let rule = JacobiRule::new(alpha, beta, 8).unwrap();
        let got = rule.integrate(|x| (1.0 - x).powi(j));
        let exact = jacobi_mass(alpha + j as f64, beta);
        prop_assert!((got - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn inner_product_transposes(
        s in prop::array::uniform3(-1.0..1.0_f64),
        p in prop::collection::vec(prop::array::uniform4(-2.0..2.0_f64), 1..5),
        q in prop::collection::vec(prop::array::uniform4(-2.0..2.0_f64), 1..5),
        alpha in -0.5..2.0_f64,
        beta in -0.5..2.0_f64,
    ) {
        let sym = Mat2::new(s[0], s[1], s[1], s[2]);
        let w = WeightFn::single(alpha, beta, MatPoly::new(vec![Mat2::scalar(3.0), sym]));
        let mu = w.discretize(30).unwrap();
        let p = MatPoly::new(p.into_iter().map(|e| Mat2 { e }).collect());
        let q = MatPoly::new(q.into_iter().map(|e| Mat2 { e }).collect());
        let pq = mu.inner_product(&p, &q);
        let qp = mu.inner_product(&q, &p);
        prop_assert!((pq - qp.transpose()).norm_max() <= 1e-12 * pq.norm_max().max(1.0));
        let pp = mu.inner_product(&p, &p);
        prop_assert!(pp.skew_defect() <= 1e-12 * pp.norm_max().max(1.0));
    }
}
