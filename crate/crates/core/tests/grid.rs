use proptest::collection::vec;
use proptest::prelude::*;
use wfpc_core::grid::{d_dx, integrate, interpolate, laplacian, pairing};
use wfpc_core::{GridMeasure, SpaceGrid};

const N: usize = 24;

fn space() -> SpaceGrid {
    SpaceGrid::new(1.7, N).unwrap()
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    vec(-5.0f64..5.0, N)
}

fn measure() -> impl Strategy<Value = GridMeasure> {
    vec(0.01f64..3.0, N).prop_map(|w| GridMeasure::from_weights(space(), w).unwrap())
}

proptest! {
    #[test]
    fn integrate_is_linear(m in measure(), f in samples(), g in samples(), a in -3.0f64..3.0) {
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
        let lhs = integrate(&m, &combo);
        let rhs = a * integrate(&m, &f) + integrate(&m, &g);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn central_difference_sums_by_parts(f in samples(), g in samples()) {
        let s = space();
        let lhs = pairing(&s, &d_dx(&s, &f), &g);
        let rhs = -pairing(&s, &f, &d_dx(&s, &g));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn laplacian_is_symmetric_and_telescopes(f in samples(), g in samples()) {
        let s = space();
        let lf = laplacian(&s, &f);
        prop_assert!(lf.iter().sum::<f64>().abs() <= 1e-9 * (1.0 + lf.iter().map(|v| v.abs()).sum::<f64>()));
        let lhs = pairing(&s, &lf, &g);
        let rhs = pairing(&s, &f, &laplacian(&s, &g));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert!(pairing(&s, &lf, &f) <= 1e-9);
    }

    #[test]
    fn interpolation_hits_nodes_and_is_periodic(f in samples(), i in 0usize..N, shift in -3i32..3) {
        let s = space();
        let x = s.x(i) + f64::from(shift) * s.length();
        prop_assert!((interpolate(&s, &f, x) - f[i]).abs() <= 1e-9);
    }

    #[test]
    fn mixing_keeps_unit_mass(a in measure(), b in measure(), w in 0.0f64..1.0) {
        let m = a.mix(&b, w);
        prop_assert!((m.mass() - 1.0).abs() <= 1e-12);
        prop_assert!(m.density().iter().all(|d| *d >= 0.0));
    }
}
