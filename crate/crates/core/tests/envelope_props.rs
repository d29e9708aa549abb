mod common;

use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use rigid_formation::envelopes::{barrier_p, barrier_sym, DistanceEnvelope, ExpPerf};

const TOL: f64 = 1e-6;

#[test]
fn distance_barrier_gradient() {
    let worst = common::distance_gradient_worst(101, 1000);
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn orientation_barrier_gradient() {
    let worst = common::symmetric_gradient_worst::<3>(102, 1000);
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn velocity_barrier_gradient() {
    let worst = common::symmetric_gradient_worst::<6>(103, 1000);
    assert!(worst < TOL, "worst relative error {worst}");
}

fn envelope() -> impl Strategy<Value = DistanceEnvelope> {
    (0.1f64..30.0, 0.1f64..30.0, 0.01f64..0.1, 0.0f64..5.0)
        .prop_map(|(a, b, rho, l)| DistanceEnvelope::new(a, b, rho, l).unwrap())
}

proptest! {
    #[test]
    fn distance_barrier_increasing(env in envelope(), u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let span = env.c_col + env.c_con;
        let (a, b) = (u.min(w), u.max(w));
        prop_assume!(b - a > 1e-9);
        let x = -env.c_col + span * (0.001 + 0.998 * a);
        let y = -env.c_col + span * (0.001 + 0.998 * b);
        prop_assert!(barrier_p(x, &env).unwrap().0 < barrier_p(y, &env).unwrap().0);
        prop_assert!(barrier_p(x, &env).unwrap().1 > 0.0);
    }

    #[test]
    fn distance_barrier_rejects_outside(env in envelope(), s in 0.0f64..10.0) {
        prop_assert!(barrier_p(-env.c_col - s, &env).is_err());
        prop_assert!(barrier_p(env.c_con + s, &env).is_err());
        prop_assert_eq!(barrier_p(0.0, &env).unwrap().0, 0.0);
    }

    #[test]
    fn symmetric_barrier_odd_and_increasing(a in -0.999f64..0.999, b in -0.999f64..0.999) {
        let (ea, ra) = barrier_sym(&Vector3::new(a, -a, 0.0)).unwrap();
        prop_assert_eq!(ea[0], -ea[1]);
        prop_assert_eq!(ea[2], 0.0);
        prop_assert!(ra[0] >= 2.0);
        prop_assume!(a != b);
        let (lo, hi) = (a.min(b), a.max(b));
        let e = barrier_sym(&Vector6::new(lo, hi, 0.0, 0.0, 0.0, 0.0)).unwrap().0;
        prop_assert!(e[0] < e[1]);
    }

    #[test]
    fn performance_decreasing_to_floor(rho_inf in 0.001f64..1.0, extra in 0.001f64..5.0, l in 0.01f64..5.0,
                                        t in 0.0f64..20.0, dt in 0.0f64..5.0) {
        let f = ExpPerf::new(rho_inf + extra, rho_inf, l).unwrap();
        let (v, rate) = f.eval(t);
        prop_assert!(v >= rho_inf);
        prop_assert!(rate < 0.0 || v == rho_inf);
        if dt > 1e-6 && l * (t + dt) < 30.0 {
            prop_assert!(f.value(t + dt) < v);
        }
    }

    #[test]
    fn distance_envelope_starts_at_one(env in envelope()) {
        prop_assert_eq!(env.rho.value(0.0), 1.0);
        let (lo, hi) = env.bounds(0.0);
        prop_assert_eq!((lo, hi), (-env.c_col, env.c_con));
    }
}
