mod common;

use bochner_core::algebra::Mat2;
use bochner_core::classify::{
    certify, family_iii, family_residuals, membership, normalize_pair, ode_residuals, CertConfig, ClassPoint, Family,
    MEMBERSHIP_TOL,
};

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn scanned_points_satisfy_their_family_equations() {
    for fam in Family::ALL {
        for p in common::scanned(fam) {
            let m = membership(p);
            assert!(m.own < 1e-12, "family {}: {}", fam.name(), m.own);
            assert_eq!(m.best, fam);
            for other in Family::ALL.iter().filter(|f| **f != fam) {
                assert!(max_abs(&family_residuals(p, *other)) > 1e-3, "family {} also fits {}", fam.name(), other.name());
            }
        }
    }
}

#[test]
fn scanned_points_carry_full_certificates() {
    let cfg = CertConfig::default();
    for fam in Family::ALL {
        for p in common::scanned(fam) {
            let cert = certify(&common::pair(p), &cfg).unwrap();
            assert!(cert.passes(&cfg.tol), "family {}: {:?}", fam.name(), cert.failures(&cfg.tol));
        }
    }
}

#[test]
fn membership_is_invariant_under_frame_changes() {
    let frames = [
        (Mat2::new(1.3, -0.4, 0.7, 2.1), 0.3),
        (Mat2::new(-0.5, 1.2, 0.9, 0.4), -1.7),
        (Mat2::new(2.0, 0.0, 0.0, 0.5), 0.0),
    ];
    for fam in Family::ALL {
        for p in common::scanned(fam) {
            let op = p.op();
            for (u, shift) in frames {
                let ui = u.inverse().unwrap();
                let c = |x: Mat2| u * x * ui;
                let n = normalize_pair(&c(op.a11), &c(op.a10), &c(op.a0 + Mat2::scalar(shift)), &c(p.b0)).unwrap();
                assert_eq!(n.point.family, fam);
                assert!(n.family_residual < MEMBERSHIP_TOL, "family {}: {}", fam.name(), n.family_residual);
                assert!((n.log.translation + shift).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn perturbing_a0_breaks_the_auxiliary_equation() {
    for fam in Family::ALL {
        let mut pair = common::pair(&common::scanned(fam)[0]);
        assert!(ode_residuals(&pair, 64).aux < 1e-7);
        pair.op.a0 = pair.op.a0 + Mat2::diag(1e-3, 0.0);
        let aux = ode_residuals(&pair, 64).aux;
        assert!(aux > 1e-4, "family {}: {aux}", fam.name());
    }
}

/// Family III point with `B(0)12 = 1/t`, `B(0)21 = ντt`, `b = 1 + ντt²`, read in the frame `diag(t, 1)`.
fn conjugated_iii(lam: f64, nu: f64, t: f64) -> ClassPoint {
    let tau = (1.0 - 4.0 * lam * lam * nu * nu) / (lam * lam * nu);
    let p = family_iii(1.0 + nu * tau * t * t, lam, 1.0 / t, nu * tau * t, (tau * t).signum()).unwrap();
    assert!((p.d - tau * t).abs() < 1e-9 * t.max(1e-3));
    let u = Mat2::diag(t, 1.0);
    let ui = Mat2::diag(1.0 / t, 1.0);
    let a11 = u * p.a11() * ui;
    ClassPoint {
        family: Family::I,
        b: 0.5 * (a11.e[1] + a11.e[2]),
        c: 0.5 * (a11.e[1] - a11.e[2]),
        b0: u * p.b0 * ui,
        ..p
    }
}

#[test]
fn diagonal_conjugation_of_family_iii_approaches_family_i_except_one_equation() {
    let (lam, nu) = (-2.3, 0.35);
    let mut prev = f64::INFINITY;
    for t in [1e-1, 1e-2, 1e-3, 1e-4] {
        let q = conjugated_iii(lam, nu, t);
        let r = family_residuals(&q, Family::I);
        let others = max_abs(&[r[0], r[1], r[2], r[3], r[5]]);
        assert!(others < 10.0 * t, "t {t}: {r:?}");
        assert!(others < prev);
        prev = others;
        // The B21 equation tends to 4ν²λ² − (4 − λ²ντ) = −3 with r² = 1 − λ²ντ = 4ν²λ².
        assert!((r[4] + 3.0).abs() < 50.0 * t, "t {t}: {}", r[4]);
    }
}
