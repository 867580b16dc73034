use kds_core::charts::{build_extension, default_delta, Chart, ChartMaps, ChartPoint, Covector};
use kds_core::flow::{FlowKind, FlowSystem};
use kds_core::kv::{parse_kv, to_kv};
use kds_core::par::{map_indexed, Exec};
use kds_core::radial::{h_eval, h_form_scale, lambda_interval, HForm};
use kds_core::sampling::{random_subextremal, stream_rng};
use kds_core::symbols::{classify_s_pm, conformal_dual_norm, mode_rot_grad, wave_symbol_q, SClass};
use kds_core::trapping::{characteristic_covector, trapped_radius};
use kds_core::Spacetime;
use proptest::prelude::*;
use rand::RngCore;

fn triple(seed: u64) -> Spacetime {
    random_subextremal(&mut stream_rng(seed, 0), 0.0, 1.05).expect("triple")
}

fn interior(st: &Spacetime, u: f64) -> f64 {
    let h = &st.horizons;
    h.r_e + (0.02 + 0.96 * u) * (h.r_c - h.r_e)
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

const CHARTS: [Chart; 4] = [Chart::Rot, Chart::Bl, Chart::Star, Chart::StarRot];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_forms_agree_and_h_is_negative(seed in any::<u64>(), u in 0.0f64..1.0) {
        let st = triple(seed);
        let r = interior(&st, u);
        let p = &st.params;
        let reference = h_eval(p, r, HForm::Quartic).unwrap();
        let scale = h_form_scale(p, r);
        for form in HForm::ALL {
            let v = h_eval(p, r, form).unwrap();
            prop_assert!(rel(v, reference, scale) < 1e-12, "{form:?}: {v} vs {reference}");
        }
        prop_assert!(reference < 0.0);
    }

    #[test]
    fn horizons_are_simple_roots(seed in any::<u64>()) {
        let st = triple(seed);
        let h = &st.horizons;
        prop_assert!(h.r_e < h.r0 && h.r0 < h.r_c);
        prop_assert!(h.invariant_violations(&st.params, 1e-10).is_empty());
        prop_assert!(st.params.mu_prime(h.r_e) > 0.0 && st.params.mu_prime(h.r_c) < 0.0);
    }

    #[test]
    fn schwarzschild_interval_upper_end(m in 0.1f64..10.0) {
        let iv = lambda_interval(0.0, m).unwrap();
        prop_assert!(!iv.empty);
        prop_assert_eq!(iv.lambda0, 0.0);
        prop_assert!(rel(iv.lambda1, 1.0 / (9.0 * m * m), iv.lambda1) < 1e-12);
    }

    #[test]
    fn chart_maps_round_trip(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        theta in 0.2f64..2.9,
        t in -50.0f64..50.0,
        ang in -3.0f64..3.0,
        xi in prop::array::uniform4(-1.0f64..1.0),
        from in 0usize..4,
        to in 0usize..4,
    ) {
        let st = triple(seed);
        let pr = build_extension(&st, default_delta(&st)).unwrap();
        let maps = ChartMaps::new(&pr);
        let r = interior(&st, u);
        let p = ChartPoint::new(CHARTS[from], [t, r, ang, theta]);
        let c = Covector::new(CHARTS[from], xi);
        let p2 = maps.point(&p, CHARTS[to]).unwrap();
        let c2 = maps.covector(&p, &c, CHARTS[to]).unwrap();
        let back = maps.point(&p2, CHARTS[from]).unwrap();
        let cback = maps.covector(&p2, &c2, CHARTS[from]).unwrap();
        for i in 0..4 {
            prop_assert!((back.coords[i] - p.coords[i]).abs() < 1e-9 * (1.0 + p.coords[i].abs()));
            prop_assert!((cback.xi[i] - c.xi[i]).abs() < 1e-9 * (1.0 + c2.norm()));
        }
        let q1 = conformal_dual_norm(&pr, CHARTS[from], r, theta, &xi);
        let q2 = conformal_dual_norm(&pr, CHARTS[to], r, theta, &c2.xi);
        let scale = (1.0 + st.horizons.r_c.powi(2)) * (c.norm().powi(2) + c2.norm().powi(2)) / st.params.c_theta(theta);
        prop_assert!(rel(q1, q2, scale) < 1e-10, "{q1} vs {q2}");
    }

    #[test]
    fn wave_symbol_is_quadratic(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        theta in 0.1f64..3.0,
        xi in prop::array::uniform4(-1.0f64..1.0),
        s in -20.0f64..20.0,
    ) {
        let st = triple(seed);
        let r = interior(&st, u);
        let q = wave_symbol_q(&st, r, theta, &xi);
        let scaled = xi.map(|v| s * v);
        let qs = wave_symbol_q(&st, r, theta, &scaled);
        prop_assert!(rel(qs, s * s * q, s * s * (1.0 + q.abs())) < 1e-9);
    }

    #[test]
    fn mode_symbol_is_the_stationary_wave_symbol(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        theta in 0.1f64..3.0,
        xi in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let st = triple(seed);
        let r = interior(&st, u);
        let mode = mode_rot_grad(&st, r, theta, &xi).value;
        let wave = wave_symbol_q(&st, r, theta, &[0.0, xi[0], xi[1], xi[2]]);
        prop_assert!(rel(mode, wave, 1.0 + mode.abs()) < 1e-9, "{mode} vs {wave}");
    }

    #[test]
    fn hamilton_field_matches_finite_differences(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        theta in 0.3f64..2.8,
        xi in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let st = triple(seed);
        let pr = build_extension(&st, default_delta(&st)).unwrap();
        let sys = FlowSystem::new(FlowKind::WaveRot, &pr);
        let y = [0.0, interior(&st, u), 0.4, theta, xi[0], xi[1], xi[2], xi[3]];
        let d = sys.ham_rhs(&y).unwrap();
        let fd = |i: usize| {
            let h = 1e-6 * (1.0 + y[i].abs());
            let (mut yp, mut ym) = (y, y);
            yp[i] += h;
            ym[i] -= h;
            (sys.q(&yp) - sys.q(&ym)) / (2.0 * h)
        };
        let scale = sys.q_scale(&y) + 1.0;
        for i in 0..4 {
            prop_assert!(rel(d[i], fd(4 + i), scale) < 1e-6, "dx[{i}]");
        }
        prop_assert!(rel(d[5], -fd(1), scale) < 1e-6);
        prop_assert!(rel(d[7], -fd(3), scale) < 1e-6);
    }

    #[test]
    fn s_classes_swap_under_negation(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        theta in 0.3f64..2.8,
        consts in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let st = triple(seed);
        let pr = build_extension(&st, default_delta(&st)).unwrap();
        let maps = ChartMaps::new(&pr);
        let r = interior(&st, u);
        let xi_rot = characteristic_covector(&st, consts[0], consts[1], r, theta, consts[2]);
        prop_assume!(xi_rot.is_some());
        let p = ChartPoint::new(Chart::Rot, [0.0, r, 0.0, theta]);
        let ps = maps.point(&p, Chart::StarRot).unwrap();
        let xs = maps.covector(&p, &Covector::new(Chart::Rot, xi_rot.unwrap()), Chart::StarRot).unwrap();
        let neg = Covector::new(Chart::StarRot, xs.xi.map(|v| -v));
        let a = classify_s_pm(&pr, &ps, &xs, 1e-8);
        let b = classify_s_pm(&pr, &ps, &neg, 1e-8);
        prop_assume!(a.is_ok() && b.is_ok());
        let (a, b) = (a.unwrap(), b.unwrap());
        prop_assert_ne!(a, b);
        prop_assert!(a == SClass::Plus || b == SClass::Plus);
    }

    #[test]
    fn trapped_radius_is_homogeneous(
        seed in any::<u64>(),
        angle in 0.0f64..std::f64::consts::TAU,
        s in 0.01f64..100.0,
    ) {
        let st = triple(seed);
        let (xi_phi, xi_t) = angle.sin_cos();
        prop_assume!(xi_t.abs() > 1e-3);
        let a = trapped_radius(&st, xi_t, xi_phi, 1e-14).unwrap();
        let b = trapped_radius(&st, s * xi_t, s * xi_phi, 1e-14).unwrap();
        prop_assert_eq!(a.case, b.case);
        if a.has_trapped_radius() {
            prop_assert!((a.r_trap - b.r_trap).abs() < 1e-10 * a.r_trap);
            prop_assert!(a.r_trap > st.horizons.r_e && a.r_trap < st.horizons.r_c);
        }
    }

    #[test]
    fn kv_text_round_trips(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let text = to_kv(&serde_json::json!({ "values": values })).unwrap();
        let map = parse_kv(&text).unwrap();
        prop_assert_eq!(map.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            let parsed: f64 = map[&format!("values.{i}")].parse().unwrap();
            prop_assert_eq!(parsed, *v);
        }
    }

    #[test]
    fn parallel_map_preserves_order(n in 0usize..2000, k in any::<u64>()) {
        let f = |i: usize| stream_rng(k, i as u64).next_u64();
        prop_assert_eq!(map_indexed(Exec::Sequential, n, f), map_indexed(Exec::Parallel, n, f));
    }
}
