//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use imptrack::analysis::wrap_phase;
use imptrack::identifier::{lyapunov_value, project_theta, ErrorCoordinates, IdentifierConfig};
use imptrack::numcore::{solve_lyapunov_2x2, symmetric_2x2_eigenvalues, Mat, Vector};
use imptrack::reference::ReferenceSpec;

/// Hurwitz 2x2 from random eigenvalues and a similarity transform.
fn hurwitz_strategy() -> impl Strategy<Value = Mat> {
    (
        -10.0f64..-0.1,
        -10.0f64..-0.1,
        prop::array::uniform4(-1.0f64..1.0),
    )
        .prop_filter_map("transform must be well-conditioned", |(l1, l2, t)| {
            let det = t[0] * t[3] - t[1] * t[2];
            if det.abs() < 0.25 {
                return None;
            }
            let tm = Mat::from_rows(&[&[t[0], t[1]], &[t[2], t[3]]]).ok()?;
            let tinv =
                Mat::from_rows(&[&[t[3] / det, -t[1] / det], &[-t[2] / det, t[0] / det]]).ok()?;
            tm.matmul(&Mat::diag(&[l1, l2])).ok()?.matmul(&tinv).ok()
        })
}

fn spd_strategy() -> impl Strategy<Value = Mat> {
    prop::array::uniform4(-1.0f64..1.0).prop_map(|g| {
        let gm = Mat::from_rows(&[&[g[0], g[1]], &[g[2], g[3]]]).unwrap();
        gm.transpose()
            .matmul(&gm)
            .unwrap()
            .add(&Mat::diag(&[0.1, 0.1]))
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_solution_is_symmetric_definite_small_residual(
        a in hurwitz_strategy(),
        q in spd_strategy(),
    ) {
        let p = solve_lyapunov_2x2(&a, &q).unwrap();
        // Structural symmetry is exact.
        prop_assert_eq!(p[(0, 1)], p[(1, 0)]);
        let residual = a
            .transpose()
            .matmul(&p)
            .unwrap()
            .add(&p.matmul(&a).unwrap())
            .unwrap()
            .add(&q)
            .unwrap()
            .frobenius_norm();
        prop_assert!(residual < 1e-10, "residual {}", residual);
        let (pmin, _) = symmetric_2x2_eigenvalues(&p);
        prop_assert!(pmin > 0.0, "min eigenvalue {}", pmin);
    }

    #[test]
    fn projection_clamps_and_is_idempotent(theta in -100.0f64..100.0) {
        let cfg = IdentifierConfig::default();
        let once = project_theta(theta, &cfg);
        prop_assert!(once <= -cfg.theta_cap());
        prop_assert_eq!(project_theta(once, &cfg), once);
        if theta <= -cfg.theta_cap() {
            prop_assert_eq!(once, theta);
        }
    }

    #[test]
    fn lyapunov_value_is_positive_definite_quadratic(
        dr1 in -5.0f64..5.0,
        dr2 in -5.0f64..5.0,
        dth in -50.0f64..50.0,
    ) {
        let cfg = IdentifierConfig::default();
        let err = ErrorCoordinates {
            delta_r: Vector::from(vec![dr1, dr2]),
            delta_theta: dth,
        };
        let v = lyapunov_value(&err, &cfg);
        prop_assert!(v >= 0.0);
        if dr1 != 0.0 || dr2 != 0.0 || dth != 0.0 {
            prop_assert!(v > 0.0);
        }
        let scaled = ErrorCoordinates {
            delta_r: Vector::from(vec![2.0 * dr1, 2.0 * dr2]),
            delta_theta: 2.0 * dth,
        };
        let v4 = lyapunov_value(&scaled, &cfg);
        prop_assert!((v4 - 4.0 * v).abs() <= 1e-12 * v4.abs().max(1.0));
    }

    #[test]
    fn wrapped_phase_stays_in_range(x in -1000.0f64..1000.0) {
        let w = wrap_phase(x);
        let pi = std::f64::consts::PI;
        prop_assert!(w > -pi && w <= pi, "wrap({}) = {}", x, w);
        let shifted = wrap_phase(x + 2.0 * pi);
        prop_assert!((shifted - w).abs() < 1e-9);
    }

    #[test]
    fn reference_state_satisfies_exosystem_identity(
        amp in 0.0f64..5.0,
        freq in 0.05f64..3.0,
        phase in -3.0f64..3.0,
        t in 0.0f64..100.0,
    ) {
        // r2 = r1' and r2' = -w0^2 r1, checked through the closed form.
        let spec = ReferenceSpec::from_freq_hz(amp, freq, phase).unwrap();
        let r = spec.state(t);
        let dt = 1e-6;
        let rp = spec.state(t + dt);
        let rm = spec.state(t - dt);
        let r1_dot = (rp[0] - rm[0]) / (2.0 * dt);
        let r2_dot = (rp[1] - rm[1]) / (2.0 * dt);
        let scale = spec.amplitude().max(1.0) * spec.omega0().max(1.0);
        prop_assert!((r1_dot - r[1]).abs() < 1e-6 * scale);
        prop_assert!(
            (r2_dot - spec.theta_true() * r[0]).abs()
                < 1e-6 * scale * spec.omega0()
        );
    }
}
