//! Randomized structural invariants of the map and the minimizers.

use nalgebra::dvector;
use proptest::prelude::*;

use twistkam_core::action::{minimize_endpoints, triangle_gap, MinimizeOpts};
use twistkam_core::dynamics::{conjugacy, shift, tangent, twist_step, twist_step_back, PhasePoint};
use twistkam_core::genfun::families;

fn opts() -> MinimizeOpts {
    MinimizeOpts {
        multistarts: 1,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_minimum_is_closed_form(
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
        n in 2usize..6,
    ) {
        let s = families::quadratic_1d(1.0);
        let r = minimize_endpoints(&s, &dvector![x], &dvector![y], n, &opts()).unwrap();
        let expect = 0.5 * (y - x) * (y - x) / n as f64;
        prop_assert!((r.value - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
    }

    #[test]
    fn twist_step_roundtrip(x in -1.0f64..1.0, p in -1.5f64..1.5) {
        let s = families::standard(1.0);
        let pt = PhasePoint::new(dvector![x], dvector![p]);
        let fwd = twist_step(&s, &pt).unwrap();
        let back = twist_step_back(&s, &fwd).unwrap();
        prop_assert!(pt.dist(&back) <= 1e-9);
    }

    #[test]
    fn conjugacy_commutes_with_dynamics(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let s = families::coupled_standard(0.6, 0.02);
        let (xv, yv) = (dvector![x, -0.3 * x], dvector![y, 0.4 * y]);
        let next = shift(&s, &xv, &yv).unwrap();
        let a = twist_step(&s, &conjugacy(&s, &xv, &yv)).unwrap();
        let b = conjugacy(&s, &yv, &next);
        prop_assert!(a.dist(&b) <= 1e-9);
    }

    #[test]
    fn tangent_map_is_symplectic(x in -1.0f64..1.0, p in -1.0f64..1.0) {
        let s = families::standard(1.3);
        let j = tangent(&s, &PhasePoint::new(dvector![x], dvector![p])).unwrap();
        prop_assert!(j.symplectic_residual() <= 1e-10);
    }

    #[test]
    fn concatenation_never_beats_direct(
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
        z in -1.0f64..1.0,
    ) {
        let s = families::quadratic_1d(1.0);
        let gap = triangle_gap(
            &s,
            &dvector![x],
            &dvector![y],
            &dvector![z],
            2,
            2,
            &opts(),
        )
        .unwrap();
        prop_assert!(gap >= -1e-10);
    }

    #[test]
    fn minimized_value_translation_invariant(
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
        k in -3i64..=3,
    ) {
        let s = families::standard(0.9);
        let a = minimize_endpoints(&s, &dvector![x], &dvector![y], 3, &opts())
            .unwrap()
            .value;
        let b = minimize_endpoints(
            &s,
            &dvector![x + k as f64],
            &dvector![y + k as f64],
            3,
            &opts(),
        )
        .unwrap()
        .value;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
