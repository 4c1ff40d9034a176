use num_traits::Zero;
use trinet::bound::{slp_bound, CorrelatorModel, Direction, SlpOptions};
use trinet::certify::{active_outcomes, active_rows, certify, combine, face_zeros, CertifyError, ACTIVE_TOL};
use trinet::constraint::{build_constraints, Mode};
use trinet::scalar::{rat, Scalar};

#[test]
fn hexagon_certificate() {
    let cert = certify(6).unwrap();
    assert_eq!(cert.active.len(), 22);
    assert_eq!(cert.cancelled, 20);
    assert_eq!(cert.targets, ["1", "jj0000", "jj0jj0"]);
    assert_eq!(cert.coefficients, [rat(1, 256), rat(-1, 128), rat(-1, 256)]);
    assert_eq!(cert.root.to_string(), "sqrt(2)-1");
    assert!((cert.root.to_f64() - cert.bound).abs() < 1e-4);
    println!("{}", cert.to_text());
}

#[test]
fn hexagon_combination_cancels_exactly() {
    let cs = build_constraints(6, Mode::Single).unwrap();
    let r = slp_bound(&cs, Direction::Max, &SlpOptions::default()).unwrap();
    let model = CorrelatorModel::new(&cs);
    let active = face_zeros(&model, &r.point, r.bound, &active_outcomes(&cs, &r.point, ACTIVE_TOL)).unwrap();
    let cert = certify(6).unwrap();
    let combo = combine(&active_rows(&model, &active), &cert.q);
    let nonzero = combo.iter().filter(|v| !v.is_zero()).count();
    assert_eq!(nonzero, 3);
}

#[test]
fn residual_sign_holds_at_feasible_points() {
    let cert = certify(6).unwrap();
    let [c0, c1, c2] = cert.coefficients.clone().map(|c| c.to_f64());
    let cs = build_constraints(6, Mode::Single).unwrap();
    let min = slp_bound(&cs, Direction::Min, &SlpOptions::default()).unwrap().bound;
    // noisy point, lowest feasible value and the optimum itself
    for e in [0.0, min, cert.bound] {
        assert!(c0 + c1 * e + c2 * e * e >= -1e-9, "E={e}");
    }
}

#[test]
fn triangle_certificate_is_linear() {
    let cert = certify(3).unwrap();
    assert_eq!(cert.active.len(), 2);
    assert!(cert.coefficients[2].is_zero());
    assert_eq!(cert.root.to_string(), "1");
}

#[test]
fn heptagon_has_no_certificate() {
    assert_eq!(certify(7).unwrap_err(), CertifyError::NoCertificate);
}
