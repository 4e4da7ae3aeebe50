mod common;

use std::f64::consts::TAU;

use leoshot::link::{
    achievable_rate, dbi_to_linear, dbm_to_watts, free_space_path_loss, linear_to_db, snr, transfer_time, LinkParams,
    PayloadSpec,
};
use leoshot::orbit::{
    compute_visibility_windows, orbital_period, orbital_velocity, propagate_satellite, slant_range, visible_at,
    write_windows_csv, ConstellationSpec, GroundStation, PhysicalConstants, SatId,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_constellation() -> ConstellationSpec {
    ConstellationSpec::walker_delta(5, 8, 500e3, 80f64.to_radians(), TAU, None).unwrap()
}

fn rolla() -> GroundStation {
    GroundStation::new(37.95f64.to_radians(), (-91.77f64).to_radians(), 10f64.to_radians()).unwrap()
}

#[test]
fn transfer_time_matches_independent_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let p_dbm = rng.random_range(0.0..60.0);
        let g_sat = rng.random_range(0.0..20.0);
        let g_gs = rng.random_range(0.0..40.0);
        let temperature = rng.random_range(50.0..1000.0);
        let bandwidth = rng.random_range(1e5..1e8);
        let frequency = rng.random_range(1e9..3e10);
        let fixed = (i % 2 == 0).then(|| rng.random_range(1e6..1e9));
        let t_m = rng.random_range(0.0..1.0);
        let t_s = rng.random_range(0.0..1.0);
        let distance = rng.random_range(4e5..3e6);
        let params_count = rng.random_range(1..5_000_000usize);
        let link = LinkParams {
            tx_power: dbm_to_watts(p_dbm),
            gain_sat: dbi_to_linear(g_sat),
            gain_gs: dbi_to_linear(g_gs),
            noise_temperature: temperature,
            bandwidth,
            carrier_frequency: frequency,
            fixed_rate: fixed,
            processing_delay_sat: t_m,
            processing_delay_gs: t_s,
            ..LinkParams::default()
        };
        let payload = PayloadSpec::model(params_count);
        let got = transfer_time(&payload, &link, distance).unwrap();
        let want = common::transfer_time_by_hand(
            64.0 * params_count as f64,
            distance,
            p_dbm,
            g_sat,
            g_gs,
            temperature,
            bandwidth,
            frequency,
            fixed,
            t_m,
            t_s,
        );
        worst = worst.max((got - want).abs() / want);
    }
    assert!(worst <= 1e-12, "worst relative error {worst:e}");
}

#[test]
fn fspl_reference_point() {
    let l = free_space_path_loss(1e6, 2.4e9, 299_792_458.0).unwrap();
    assert!((linear_to_db(l) - 160.05).abs() <= 0.01, "{}", linear_to_db(l));
}

#[test]
fn period_and_velocity_near_reference() {
    let c = PhysicalConstants::default();
    let t = orbital_period(500e3, &c).unwrap();
    let v = orbital_velocity(500e3, &c).unwrap();
    assert!((t / 5668.0 - 1.0).abs() < 1e-3, "{t}");
    assert!((v / 7616.6 - 1.0).abs() < 1e-3, "{v}");
}

#[test]
fn every_orbit_sees_the_station_within_three_days() {
    let spec = reference_constellation();
    let windows = compute_visibility_windows(&spec, &rolla(), 0.0, 3.0 * 86_400.0, 10.0).unwrap();
    for o in 0..5 {
        assert!(windows.iter().any(|w| w.sat.orbit == o), "orbit {o} never visible");
    }
}

#[test]
fn window_edges_are_tight_and_interiors_visible() {
    let spec = reference_constellation();
    let gs = rolla();
    let windows = compute_visibility_windows(&spec, &gs, 0.0, 86_400.0, 10.0).unwrap();
    assert!(!windows.is_empty());
    for w in &windows {
        assert!(w.start < w.end);
        let steps = 20;
        for i in 0..=steps {
            let t = w.start + (w.end - w.start) * i as f64 / steps as f64;
            assert!(visible_at(&spec, &gs, w.sat, t).unwrap(), "{w:?} invisible at {t}");
        }
        if w.start > 0.0 {
            assert!(!visible_at(&spec, &gs, w.sat, w.start - 1.01).unwrap(), "{w:?} starts late");
        }
        if w.end < 86_400.0 {
            assert!(!visible_at(&spec, &gs, w.sat, w.end + 1.01).unwrap(), "{w:?} ends early");
        }
    }
    // Windows of one satellite never overlap.
    for a in &windows {
        for b in windows.iter().filter(|b| b.sat == a.sat && b.start > a.start) {
            assert!(b.start > a.end);
        }
    }
}

#[test]
fn windows_csv_has_the_documented_columns() {
    let spec = reference_constellation();
    let windows = compute_visibility_windows(&spec, &rolla(), 0.0, 20_000.0, 10.0).unwrap();
    let mut buf = Vec::new();
    write_windows_csv(&windows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("sat_orbit,sat_slot,start_s,end_s\n"));
    assert_eq!(text.lines().count(), windows.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn velocity_decreases_with_altitude(h in 1e5f64..4e7, dh in 1.0f64..1e6) {
        let c = PhysicalConstants::default();
        prop_assert!(orbital_velocity(h + dh, &c).unwrap() < orbital_velocity(h, &c).unwrap());
        prop_assert!(orbital_period(h + dh, &c).unwrap() > orbital_period(h, &c).unwrap());
    }

    #[test]
    fn propagation_stays_on_the_orbit_sphere(o in 0usize..5, s in 0usize..8, t in 0.0f64..3e5) {
        let spec = reference_constellation();
        let st = propagate_satellite(&spec, SatId::new(o, s), t).unwrap();
        let r = (st.position[0].powi(2) + st.position[1].powi(2) + st.position[2].powi(2)).sqrt();
        prop_assert!((r - spec.orbit_radius(o)).abs() < 1e-6 * r);
    }

    #[test]
    fn satellite_returns_after_one_period(o in 0usize..5, s in 0usize..8, t in 0.0f64..1e5) {
        let spec = reference_constellation();
        let period = orbital_period(500e3, &spec.consts).unwrap();
        let a = propagate_satellite(&spec, SatId::new(o, s), t).unwrap().position;
        let b = propagate_satellite(&spec, SatId::new(o, s), t + period).unwrap().position;
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        prop_assert!(d < 1e-3, "drift {d} m");
    }

    #[test]
    fn visible_range_is_bounded_by_geometry(o in 0usize..5, s in 0usize..8, t in 0.0f64..2e5) {
        let spec = reference_constellation();
        let gs = rolla();
        let sat = SatId::new(o, s);
        if visible_at(&spec, &gs, sat, t).unwrap() {
            let d = slant_range(&spec, &gs, sat, t).unwrap();
            // Slant range at 10° elevation for a 500 km orbit is below 1700 km.
            prop_assert!((500e3 - 1.0..1.7e6).contains(&d), "{d}");
        }
    }

    #[test]
    fn snr_falls_and_delay_grows_with_distance(d in 1e5f64..5e6, k in 1.01f64..10.0, n in 1usize..1_000_000) {
        let mut link = LinkParams::default();
        prop_assert!(snr(&link, d * k).unwrap() < snr(&link, d).unwrap());
        link.fixed_rate = None;
        prop_assert!(achievable_rate(&link, d * k).unwrap() < achievable_rate(&link, d).unwrap());
        let p = PayloadSpec::model(n);
        prop_assert!(transfer_time(&p, &link, d * k).unwrap() > transfer_time(&p, &link, d).unwrap());
    }
}

#[test]
fn non_physical_inputs_are_domain_errors() {
    let c = PhysicalConstants::default();
    assert!(orbital_period(0.0, &c).is_err());
    assert!(orbital_velocity(-1.0, &c).is_err());
    assert!(free_space_path_loss(0.0, 2.4e9, 3e8).is_err());
    assert!(transfer_time(&PayloadSpec::model(10), &LinkParams::default(), f64::NAN).is_err());
}
