use proptest::prelude::*;

use arcbo::bo::expected_improvement;
use arcbo::gp::{GpModel, Warp};
use arcbo::kernel::{arc_distance, ArcParams, BaseCovariance, KernelInput, KernelParams};
use arcbo::space::{Dimension, ParameterSpace, Point};

fn space() -> ParameterSpace {
    ParameterSpace::new(
        2,
        vec![
            Dimension::new("lr", -4.0, 0.0, 0),
            Dimension::new("units", 8.0, 256.0, 1),
            Dimension::new("dropout", 0.0, 0.9, 2),
        ],
    )
    .unwrap()
}

fn point() -> impl Strategy<Value = Point> {
    (0usize..=2, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(d, a, b, c)| {
        let s = space();
        s.make_point(d as f64, &s.denormalize(&[a, b, c])).unwrap()
    })
}

fn params() -> impl Strategy<Value = ArcParams> {
    (
        prop::collection::vec(0.05..4.0f64, 3),
        prop::collection::vec(0.0..=1.0f64, 3),
        0.1..3.0f64,
    )
        .prop_map(|(w, r, a)| ArcParams::new(w, r, a, BaseCovariance::Matern52).unwrap())
}

proptest! {
    #[test]
    fn triangle_inequality(p in params(), a in point(), b in point(), c in point()) {
        let s = space();
        let d = |x: &Point, y: &Point| arc_distance(&s, &p, x, y).unwrap();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-10);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0.0);
    }

    #[test]
    fn predictions_ignore_irrelevant_coordinates(
        p in params(),
        train in prop::collection::vec(point(), 1..12),
        probe in point(),
        junk in prop::collection::vec(0.0..=1.0f64, 3),
    ) {
        let s = space();
        let inputs: Vec<KernelInput> = train.iter().map(|x| KernelInput::conditional(&s, x)).collect();
        let y: Vec<f64> = (0..train.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let model = GpModel::fit(&KernelParams::Arc(p), &inputs, &y, 1e-2, None, Warp::Identity).unwrap();
        let mut values = probe.values().to_vec();
        let junk_values = s.denormalize(&junk);
        for i in 0..3 {
            if !probe.mask()[i] {
                values[i] = junk_values[i];
            }
        }
        let twin = s.make_point(probe.depth() as f64, &values).unwrap();
        prop_assert!(twin.conditionally_eq(&probe));
        let a = model.predict(&KernelInput::conditional(&s, &probe)).unwrap();
        let b = model.predict(&KernelInput::conditional(&s, &twin)).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn ei_is_nonnegative_and_bounded_below_by_gap(mean in -5.0..5.0f64, var in 0.0..10.0f64, best in -5.0..5.0f64) {
        let ei = expected_improvement(mean, var, best);
        prop_assert!(ei >= 0.0);
        prop_assert!(ei >= (best - mean).max(0.0) - 1e-12);
    }
}
