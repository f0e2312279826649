mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sere::spline::{coefficient_matrix, interpolate, normalized_time, SegmentControlPoints};
use sere::{KinematicOrder, KnotGrid, RcpState};

const ORDERS: [KinematicOrder; 3] = [KinematicOrder::Position, KinematicOrder::Velocity, KinematicOrder::Acceleration];

fn points(d: usize, n: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), n)
        .prop_map(|v| v.into_iter().map(DVector::from_vec).collect())
}

/// Grid, segment index, and a timestamp at normalized time `u` inside that segment.
fn segment() -> impl Strategy<Value = (KnotGrid, i64, f64)> {
    (-100.0..100.0f64, 0.01..10.0f64, 1i64..50, 1e-6..=1.0f64).prop_map(|(origin, tau, seg, u)| {
        let grid = KnotGrid::new(origin, tau, 60).unwrap();
        (grid, seg, grid.knot(seg) + u * tau)
    })
}

fn segment_with_points() -> impl Strategy<Value = (KnotGrid, i64, f64, Vec<DVector<f64>>)> {
    (1usize..=4, segment()).prop_flat_map(|(d, (g, s, t))| (Just(g), Just(s), Just(t), points(d, 4)))
}

fn ctrl(p: &[DVector<f64>]) -> SegmentControlPoints {
    SegmentControlPoints::new([p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_form_partition_of_unity((grid, seg, t) in segment()) {
        let nt = normalized_time(&grid, t, seg).unwrap();
        let w = nt.weights(KinematicOrder::Position);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let oracle = common::blend(nt.u(), 0, grid.tau);
        for (a, b) in w.iter().zip(oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_interpolate_affinely(
        (grid, seg, t) in segment(),
        a in prop::collection::vec(-10.0..10.0f64, 3),
        b in prop::collection::vec(-10.0..10.0f64, 3),
    ) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let pts: Vec<_> = (0..4).map(|j| &a + &b * j as f64).collect();
        let nt = normalized_time(&grid, t, seg).unwrap();
        let p = interpolate(&ctrl(&pts), &nt, KinematicOrder::Position);
        // c_j = a + j b traces a + (1 + u) b over the segment
        let expected = &a + &b * (1.0 + nt.u());
        let scale = a.amax().max(b.amax()).max(1.0);
        prop_assert!((p - expected).amax() / scale < 1e-10);
        let v = interpolate(&ctrl(&pts), &nt, KinematicOrder::Velocity);
        prop_assert!((v - &b / grid.tau).amax() * grid.tau / scale < 1e-10);
    }

    #[test]
    fn adjacent_segments_join_with_c2_continuity(
        origin in -100.0..100.0f64,
        tau in 0.01..10.0f64,
        n in 5usize..50,
        d in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let pts: Vec<_> = (0..5).map(|_| common::random_vector(&mut rng, d, 5.0)).collect();
        let grid = KnotGrid::new(origin, tau, n).unwrap();
        let knot = grid.knot(n as i64 - 1);
        let left = normalized_time(&grid, knot, n as i64 - 2).unwrap();
        prop_assert_eq!(left.u(), 1.0);
        let mean = DVector::from_iterator(4 * d, pts[1..].iter().flat_map(|p| p.iter().copied()));
        let right = RcpState::new(mean, DMatrix::identity(4 * d, 4 * d), grid).unwrap();
        for (k, order) in ORDERS.iter().enumerate() {
            let a = interpolate(&ctrl(&pts[..4]), &left, *order);
            let b = right.interpolate(knot, *order).unwrap();
            let scale = 5.0 / tau.powi(k as i32);
            prop_assert!((a - b).amax() / scale < 1e-9);
        }
    }

    #[test]
    fn coefficient_matrix_matches_interpolation((grid, seg, t, pts) in segment_with_points()) {
        let nt = normalized_time(&grid, t, seg).unwrap();
        let c = ctrl(&pts);
        for order in ORDERS {
            let lambda = coefficient_matrix(&nt, order, c.dim()).unwrap().lambda;
            let direct = interpolate(&c, &nt, order);
            let scale = direct.amax().max(1.0);
            prop_assert!((lambda * c.stacked() - direct).amax() / scale < 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences(
        (grid, seg, pts) in (1usize..=4, segment()).prop_flat_map(|(d, (g, s, _))| (Just(g), Just(s), points(d, 4))),
        u in 0.01..0.99f64,
    ) {
        let tau = grid.tau;
        let t = grid.knot(seg) + u * tau;
        let h = 1e-5 * tau;
        let c = ctrl(&pts);
        let eval = |t: f64, order| interpolate(&c, &normalized_time(&grid, t, seg).unwrap(), order);
        let spread = pts.iter().map(|p| (p - &pts[0]).amax()).fold(1e-3, f64::max);
        for (k, (lower, upper)) in [
            (KinematicOrder::Position, KinematicOrder::Velocity),
            (KinematicOrder::Velocity, KinematicOrder::Acceleration),
        ]
        .into_iter()
        .enumerate()
        {
            let fd = (eval(t + h, lower) - eval(t - h, lower)) / (2.0 * h);
            let analytic = eval(t, upper);
            let scale = analytic.amax().max(spread / tau.powi(k as i32 + 1));
            prop_assert!((fd - analytic).amax() / scale < 1e-6);
        }
    }
}
