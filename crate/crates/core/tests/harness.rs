use nalgebra::Vector3;
use pokegrasp::geometry::Pose;
use pokegrasp::harness::catalog::{default_catalog, place, CatalogEntry, Placement};
use pokegrasp::harness::seed::rng;
use pokegrasp::harness::*;
use pokegrasp::imgeo::Ellipse;
use pokegrasp::plan::{GraspKind, GraspProposal, PokePlan, RegionTopology};
use pokegrasp::scene::{CameraModel, ObjectModel, Scene, Shape};
use pokegrasp::tactile::{detect_contact, frame_from_heights, surface_heights};

fn cup(r: f64, h: f64, wall: f64, mass: f64) -> ObjectModel {
    ObjectModel {
        id: 1,
        name: "cup".into(),
        shape: Shape::Revolution {
            profile: vec![[r, 0.0], [r, h]],
            open_top: true,
        },
        wall_thickness: wall,
        mass,
        pose: Pose::identity(),
    }
}

fn scene(o: ObjectModel) -> Scene {
    Scene::new(CameraModel::default(), vec![o])
}

fn plan_at(x: f64, y: f64) -> PokePlan {
    PokePlan {
        point_px: (0, 0),
        point_world: Vector3::new(x, y, 0.0),
        ellipse: Ellipse {
            centroid: (0.0, 0.0),
            semi_major: 1.0,
            semi_minor: 1.0,
            rotation_angle: 0.0,
        },
        region_topology: RegionTopology::SimplyConnected,
    }
}

fn entry(name: &str) -> CatalogEntry {
    default_catalog().into_iter().find(|e| e.name == name).unwrap()
}

#[test]
fn tipping_force_examples() {
    assert!((tipping_max_force(1.0, 0.05, 0.5).unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(tipping_max_force(1.0, 0.0, 0.5).unwrap(), 0.0);
    assert!(matches!(tipping_max_force(1.0, 0.05, 0.0), Err(HarnessError::InvalidGeometry(_))));
    assert!(tipping_max_force(1.0, 0.05, -0.1).is_err());
}

#[test]
fn disposable_cup_tips_near_a_tenth_of_a_newton() {
    let e = entry("small_disposable_cup");
    let o = e.instantiate(1, Pose::identity());
    // Push on the middle of the rim, 1.5 mm inside the 35 mm outer radius.
    let rho = 0.035 - 0.0015;
    let (d1, d2) = lever_arms(&o, &Vector3::new(rho, 0.0, 0.09)).unwrap();
    let f = tipping_max_force(e.mass * 9.81, d1, d2).unwrap();
    let by_hand = 0.006 * 9.81 * 0.022 / (0.0335 - 0.022);
    assert!((f - by_hand).abs() < 1e-12);
    assert!(f > 0.08 && f < 0.15, "{f}");
    // Pushing over the base cannot tip it.
    assert!(lever_arms(&o, &Vector3::new(0.01, 0.0, 0.09)).is_none());
}

#[test]
fn calibration_error_draws() {
    let cfg = TrialConfig::default();
    assert_eq!(inject_calibration_error(&cfg, 5), Pose::identity());
    let cfg = TrialConfig {
        calib_range: 0.012,
        ..cfg
    };
    assert_eq!(inject_calibration_error(&cfg, 9), inject_calibration_error(&cfg, 9));
    let xs: Vec<f64> = (0..1000u64)
        .map(|s| {
            let p = inject_calibration_error(&cfg, s);
            assert_eq!(p.translation().y, 0.0);
            assert_eq!(p.translation().z, 0.0);
            p.translation().x
        })
        .collect();
    assert!(xs.iter().all(|x| (-0.012..=0.012).contains(x)));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 0.0012, "{mean}");
}

#[test]
fn poke_on_rim_succeeds_and_through_opening_misses() {
    let s = scene(cup(0.035, 0.1, 0.003, 0.25));
    let cfg = TrialConfig::default();
    let hit = simulate_poke(&s, &plan_at(0.0335, 0.0), &cfg, 1);
    assert_eq!(hit.status, PokeStatus::Success);
    let c = hit.contact_point.unwrap();
    assert!((c.z - 0.1).abs() < 1e-9);
    assert!(c.x > 0.028 && c.x < 0.035, "{c:?}");
    let miss = simulate_poke(&s, &plan_at(0.0, 0.0), &cfg, 1);
    assert_eq!(miss.status, PokeStatus::Miss);
    assert!(miss.contact_point.is_none());
}

#[test]
fn light_cup_topples_heavy_cup_does_not() {
    let cfg = TrialConfig::default();
    let e = entry("small_disposable_cup");
    let light = scene(e.local());
    assert_eq!(simulate_poke(&light, &plan_at(0.0335, 0.0), &cfg, 0).status, PokeStatus::Topple);
    let heavy = scene(ObjectModel { mass: 0.3, ..e.local() });
    assert_eq!(simulate_poke(&heavy, &plan_at(0.0335, 0.0), &cfg, 0).status, PokeStatus::Success);
    // A straight wall stands on its full rim radius: no lever beyond the base.
    let straight = scene(cup(0.035, 0.09, 0.003, 0.006));
    assert_eq!(simulate_poke(&straight, &plan_at(0.0335, 0.0), &cfg, 0).status, PokeStatus::Success);
    // The light cup upside down rests on its rim and is pushed on its base.
    let mut flipped = e.local();
    flipped.pose = Pose::from_axis_angle(Vector3::x(), std::f64::consts::PI, Vector3::new(0.0, 0.0, 0.09));
    assert_eq!(simulate_poke(&scene(flipped), &plan_at(0.0, 0.0), &cfg, 0).status, PokeStatus::Success);
}

#[test]
fn lying_cylinder_rolls_when_poked_off_its_top_line() {
    let e = entry("jar");
    let pose = place(&e, Placement::Side, 0.0, &mut rng(4));
    let o = e.instantiate(1, pose);
    let axis = pose.transform_vector(&Vector3::z());
    let across = Vector3::z().cross(&axis).normalize();
    let mid = pose.transform_point(&Vector3::new(0.0, 0.0, 0.04));
    let s = scene(o);
    let cfg = TrialConfig::default();
    let on_top = simulate_poke(&s, &plan_at(mid.x, mid.y), &cfg, 0);
    assert_eq!(on_top.status, PokeStatus::Success);
    let side = mid + 0.015 * across;
    assert_eq!(simulate_poke(&s, &plan_at(side.x, side.y), &cfg, 0).status, PokeStatus::Topple);
}

/// Steps the sensor down one increment at a time and runs the detector on
/// every frame.
fn brute_force_contact_height(s: &Scene, x: f64, y: f64, cfg: &TrialConfig) -> Option<f64> {
    let sensor = cfg.sensor.at(Vector3::new(x, y, 0.0));
    let heights = surface_heights(s, &sensor);
    let top = heights.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = top + 0.002;
    let reference = frame_from_heights(&heights, &sensor, start, 0);
    let mut k = 0u64;
    loop {
        let z = start - k as f64 * cfg.poke_step;
        if z < cfg.h_stop {
            return None;
        }
        let f = frame_from_heights(&heights, &sensor, z, k);
        if detect_contact(&reference, &f, cfg.contact.value_threshold, cfg.contact.count_threshold)
            .unwrap()
            .0
        {
            return Some(z);
        }
        k += 1;
    }
}

#[test]
fn contact_height_matches_stepwise_descent() {
    let cfg = TrialConfig::default();
    let tapered = ObjectModel {
        shape: Shape::Revolution {
            profile: vec![[0.02, 0.0], [0.03, 0.05], [0.034, 0.11]],
            open_top: false,
        },
        ..cup(0.0, 0.0, 0.003, 1.0)
    };
    let mut lying = cup(0.03, 0.1, 0.003, 1.0);
    lying.pose = Pose::from_axis_angle(Vector3::x(), -std::f64::consts::FRAC_PI_2, Vector3::new(0.0, -0.05, 0.03));
    let cases = [
        (cup(0.035, 0.1, 0.003, 1.0), 0.0335, 0.0),
        (cup(0.035, 0.1, 0.003, 1.0), 0.03, 0.01),
        (tapered.clone(), 0.0, 0.0),
        (tapered, 0.03, 0.0),
        (lying, 0.001, 0.0),
    ];
    for (o, x, y) in cases {
        let s = scene(o);
        let out = simulate_poke(&s, &plan_at(x, y), &cfg, 0);
        let expected = brute_force_contact_height(&s, x, y, &cfg);
        let got = out.frame.as_ref().map(|f| f.pose.translation().z);
        match (expected, got) {
            (Some(e), Some(g)) => assert!((e - g).abs() < 1e-12, "{e} vs {g} at ({x}, {y})"),
            (e, g) => assert_eq!(e.is_some(), g.is_some() || out.status == PokeStatus::Topple),
        }
    }
}

fn proposal(x: f64, y: f64, z: f64, w: f64, theta: f64, kind: GraspKind) -> GraspProposal {
    GraspProposal { x, y, z, w, theta, kind }
}

#[test]
fn centroid_grasp_on_box_succeeds() {
    let b = ObjectModel {
        shape: Shape::Box { w: 0.06, d: 0.05, h: 0.09 },
        ..cup(0.0, 0.0, 0.003, 0.2)
    };
    let s = scene(b);
    let cfg = TrialConfig::default();
    for theta in [0.0, 0.4, std::f64::consts::FRAC_PI_2] {
        let g = proposal(0.0, 0.0, 0.09, 0.085, theta, GraspKind::Centroid);
        let out = simulate_grasp(&s, &g, &cfg, 0);
        assert!(out.is_success(), "theta {theta}: {:?}", out.reason);
    }
}

#[test]
fn offset_grasp_on_narrow_jar_fails() {
    let jar = ObjectModel {
        shape: Shape::Revolution {
            profile: vec![[0.03, 0.0], [0.03, 0.1]],
            open_top: false,
        },
        ..cup(0.0, 0.0, 0.003, 0.3)
    };
    let s = scene(jar);
    let cfg = TrialConfig::default();
    let good = proposal(0.0, 0.0, 0.1, 0.085, 0.0, GraspKind::Centroid);
    assert!(simulate_grasp(&s, &good, &cfg, 0).is_success());
    for (dx, dy) in [(0.03, 0.0), (0.0, 0.03), (0.025, 0.025), (-0.03, 0.0)] {
        let g = proposal(dx, dy, 0.1, 0.085, 0.0, GraspKind::Centroid);
        assert!(!simulate_grasp(&s, &g, &cfg, 0).is_success(), "({dx}, {dy})");
    }
}

#[test]
fn edge_grasp_width_decides_far_wall_collision() {
    // The max-width jaw lands on the far wall exactly when the cup's inner
    // radius is half the opening minus the rim offset.
    let (r, wall) = (0.02225, 0.002);
    let s = scene(cup(r, 0.1, wall, 0.2));
    let cfg = TrialConfig::default();
    let d = r - 0.5 * wall;
    let edge = proposal(d, 0.0, 0.1, 2.0 * d, 0.0, GraspKind::Edge);
    let out = simulate_grasp(&s, &edge, &cfg, 0);
    assert!(out.is_success(), "{:?}", out.reason);
    let wide = GraspProposal { w: 0.085, ..edge };
    let out = simulate_grasp(&s, &wide, &cfg, 0);
    assert_eq!(out.reason, Some(FailureReason::Collision));
}

#[test]
fn grasp_below_table_fails() {
    let s = scene(cup(0.03, 0.1, 0.003, 0.2));
    let g = proposal(0.0, 0.0, 0.015, 0.085, 0.0, GraspKind::Centroid);
    let out = simulate_grasp(&s, &g, &TrialConfig::default(), 0);
    assert_eq!(out.reason, Some(FailureReason::BelowTable));
}

#[test]
fn zero_attempts_give_an_empty_table() {
    let r = run_benchmark(&default_catalog(), &CameraModel::default(), &Guidance::ALL, 0, &TrialConfig::default())
        .unwrap();
    assert!(r.trials.is_empty() && r.poke_rates.is_empty() && r.grasp_rates.is_empty());
    assert_eq!(rates_csv(&r.poke_rates), "object,mode,successes,attempts,rate\n");
}

#[test]
fn trials_reproduce_from_their_indices() {
    let cat = default_catalog();
    let cfg = TrialConfig {
        calib_range: 0.005,
        master_seed: 17,
        ..TrialConfig::default()
    };
    let cam = CameraModel::default();
    for (o, a) in [(0, 1), (6, 9)] {
        let t1 = run_trial(&cat[o], o, a, Guidance::PokingRegion, &cam, &cfg);
        let t2 = run_trial(&cat[o], o, a, Guidance::PokingRegion, &cam, &cfg);
        assert_eq!(serde_json::to_string(&t1).unwrap(), serde_json::to_string(&t2).unwrap());
    }
}

#[test]
fn ideal_pokes_on_upright_closed_objects_always_succeed() {
    let cat: Vec<CatalogEntry> = default_catalog().into_iter().filter(|e| !e.local().is_open()).collect();
    assert_eq!(cat.len(), 2);
    let cfg = TrialConfig {
        depth_noise: DepthNoise { dropout_p: 0.0, sigma: 0.0 },
        ..TrialConfig::default()
    };
    // Attempts 0..4 are the upright placements.
    let r = run_benchmark(&cat, &CameraModel::default(), &[Guidance::PokingRegion], 4, &cfg).unwrap();
    assert_eq!(r.poke_rate(Guidance::PokingRegion), Some(1.0));
    assert_eq!(r.trials.len(), 8);
    assert!(r.trials.iter().all(|t| t.placement == Placement::Upright));
}

#[test]
fn unknown_mode_is_a_config_error() {
    assert_eq!("pr".parse::<Guidance>().unwrap(), Guidance::PokingRegion);
    assert!(matches!("centroid".parse::<Guidance>(), Err(HarnessError::InvalidConfig(_))));
}

#[test]
fn config_validation() {
    assert!(TrialConfig::default().validate().is_ok());
    let bad = [
        TrialConfig { f_stop: 0.0, ..Default::default() },
        TrialConfig { h_stop: -1.0, ..Default::default() },
        TrialConfig { adhesion_p: 1.5, ..Default::default() },
        TrialConfig { calib_range: -0.1, ..Default::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err());
    }
}
