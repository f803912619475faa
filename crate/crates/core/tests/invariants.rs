mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use common::{random_camera, random_points, rng};
use tilerecon::euclidean::{fit_rigid, icp_align, IcpConfig, RigidTransform};
use tilerecon::evaluation::{completeness, error_map, rasterize, DemGrid};
use tilerecon::geometry::{factorize_two_view, fit_affine_upgrade, triangulate_multiview};
use tilerecon::{AffineCamera, AffineUpgrade, Correspondence2D2D, Point2, Point3};

/// Coordinates on a 1/64 lattice, so that whole-cell shifts are exact.
fn lattice_cloud() -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec((0i32..1280, 0i32..1280, -640i32..640), 1..60).prop_map(|v| {
        v.into_iter()
            .map(|(x, y, z)| Point3::new(x as f64 / 64.0, y as f64 / 64.0, z as f64 / 64.0))
            .collect()
    })
}

fn grid(values: &[Option<f64>], width: usize) -> DemGrid {
    let mut g = DemGrid::empty((0.0, 0.0), 1.0, width, values.len() / width).unwrap();
    for (k, v) in values.iter().enumerate() {
        g.set(k % width, k / width, *v);
    }
    g
}

fn well_conditioned_upgrade(seed: u64) -> AffineUpgrade {
    use rand::Rng;
    let mut r = rng(seed);
    loop {
        let l = Matrix3::from_fn(|_, _| r.random_range(-3.0..3.0));
        let sv = l.singular_values();
        if sv.min() / sv.max() > 0.1 {
            let t = Vector3::from_fn(|_, _| r.random_range(-100.0..100.0));
            return AffineUpgrade::from_parts(l, t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rasterize_commutes_with_whole_cell_shifts(cloud in lattice_cloud(), dx in -5i32..5, dy in -5i32..5) {
        let a = rasterize(&cloud, (0.0, 0.0), 1.0, 20, 20).unwrap();
        let moved: Vec<Point3> = cloud.iter().map(|p| Point3::new(p.x + dx as f64, p.y + dy as f64, p.z)).collect();
        let b = rasterize(&moved, (dx as f64, dy as f64), 1.0, 20, 20).unwrap();
        prop_assert_eq!(a.heights, b.heights);
    }

    #[test]
    fn rasterize_coverage_grows_with_the_cloud(cloud in lattice_cloud(), extra in lattice_cloud()) {
        let a = rasterize(&cloud, (0.0, 0.0), 1.0, 20, 20).unwrap();
        let all: Vec<Point3> = cloud.iter().chain(&extra).copied().collect();
        let b = rasterize(&all, (0.0, 0.0), 1.0, 20, 20).unwrap();
        for (x, y) in a.heights.iter().zip(&b.heights) {
            prop_assert!(x.is_none() || y.is_some());
        }
    }

    #[test]
    fn completeness_is_bounded_and_monotone(
        cells in prop::collection::vec((prop::option::of(-5.0f64..5.0), prop::option::of(-5.0f64..5.0)), 1..100),
        t1 in 0.0f64..6.0,
        t2 in 0.0f64..6.0,
    ) {
        let test: Vec<Option<f64>> = cells.iter().map(|c| c.0).collect();
        let mut truth: Vec<Option<f64>> = cells.iter().map(|c| c.1).collect();
        truth[0] = Some(0.0);
        let map = error_map(&grid(&test, 1), &grid(&truth, 1)).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let (a, b) = (completeness(&map, lo).unwrap(), completeness(&map, hi).unwrap());
        prop_assert!((0.0..=100.0).contains(&a) && (0.0..=100.0).contains(&b));
        prop_assert!(a <= b);
    }

    #[test]
    fn upgrade_fit_round_trips(seed in any::<u64>(), n in 4usize..40) {
        let h = well_conditioned_upgrade(seed);
        let pts = random_points(&mut rng(seed ^ 1), n);
        let pairs: Vec<(Point3, Point3)> = pts.iter().map(|p| (*p, h.apply(p))).collect();
        let fit = fit_affine_upgrade(&pairs).unwrap();
        let inv = fit.inverse().unwrap();
        for p in &pts {
            prop_assert!(fit.apply(p).distance(&h.apply(p)) <= 1e-8);
            prop_assert!(inv.apply(&fit.apply(p)).distance(p) <= 1e-8);
        }
    }

    #[test]
    fn camera_parameters_and_crops_round_trip(seed in any::<u64>(), col in 0.0f64..500.0, row in 0.0f64..500.0) {
        let mut r = rng(seed);
        let cam = random_camera(&mut r);
        prop_assert_eq!(AffineCamera::from_params(&cam.to_params()), cam);
        let crop = cam.cropped(col, row);
        for p in random_points(&mut r, 5) {
            let (full, local) = (cam.project(&p), crop.project(&p));
            prop_assert!((full.x - col - local.x).abs() <= 1e-9 && (full.y - row - local.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn exact_points_triangulate_exactly(seed in any::<u64>(), views in 2usize..6) {
        let mut r = rng(seed);
        let cams: Vec<AffineCamera> = (0..views).map(|_| random_camera(&mut r)).collect();
        for p in random_points(&mut r, 5) {
            let obs: Vec<Point2> = cams.iter().map(|c| c.project(&p)).collect();
            let q = triangulate_multiview(&cams, &obs).unwrap();
            prop_assert!(q.distance(&p) <= 1e-8 * (1.0 + p.to_vector().norm()));
        }
    }

    #[test]
    fn factorization_residual_ignores_image_translation(seed in any::<u64>(), sx in -500.0f64..500.0, sy in -500.0f64..500.0) {
        use rand::Rng;
        let mut r = rng(seed);
        let corrs: Vec<Correspondence2D2D> = (0..30)
            .map(|_| {
                let a = Point2::new(r.random_range(0.0..200.0), r.random_range(0.0..200.0));
                let b = Point2::new(r.random_range(0.0..200.0), r.random_range(0.0..200.0));
                Correspondence2D2D::new(a, b)
            })
            .collect();
        let moved: Vec<Correspondence2D2D> =
            corrs.iter().map(|c| Correspondence2D2D::new(c.a, Point2::new(c.b.x + sx, c.b.y + sy))).collect();
        let (f, g) = (factorize_two_view(&corrs).unwrap(), factorize_two_view(&moved).unwrap());
        prop_assert!((f.residual_sq - g.residual_sq).abs() <= 1e-9 * f.residual_sq.max(1.0));
    }

    #[test]
    fn rigid_fit_is_proper_and_exact(seed in any::<u64>(), angle in -3.0f64..3.0) {
        use rand::Rng;
        let mut r = rng(seed);
        let axis = nalgebra::Unit::new_normalize(Vector3::from_fn(|_, _| r.random_range(-1.0..1.0)));
        let tf = RigidTransform {
            r: nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner(),
            t: Vector3::from_fn(|_, _| r.random_range(-10.0..10.0)),
        };
        let pairs: Vec<(Point3, Point3)> = random_points(&mut r, 10).into_iter().map(|p| (p, tf.apply(&p))).collect();
        let fit = fit_rigid(&pairs).unwrap();
        prop_assert!((fit.r.determinant() - 1.0).abs() <= 1e-9);
        for (s, t) in &pairs {
            prop_assert!(fit.apply(s).distance(t) <= 1e-8);
        }
    }

    #[test]
    fn icp_history_never_increases(seed in any::<u64>(), angle in -4.0f64..4.0, tx in -1.5f64..1.5) {
        use rand::Rng;
        let mut r = rng(seed);
        let phase = r.random_range(0.0..6.0);
        let target: Vec<Point3> = (0..30 * 30)
            .map(|k| {
                let (x, y) = ((k % 30) as f64, (k / 30) as f64);
                Point3::new(x, y, 3.0 * (0.3 * x + phase).sin() + 2.0 * (0.2 * y).cos())
            })
            .collect();
        let tf = RigidTransform {
            r: nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle.to_radians()).into_inner(),
            t: Vector3::new(tx, 0.5, 0.2),
        };
        let source: Vec<Point3> = target.iter().map(|p| tf.apply(p)).collect();
        let rep = icp_align(&source, &target, &IcpConfig::default()).unwrap();
        prop_assert!(rep.rms_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(rep.iterations >= 1);
    }
}
