use mrforge::mr::MrKind;
use mrforge::stats::welch_t;
use mrforge::transforms::{self, GrayImage};
use proptest::prelude::*;

fn image() -> impl Strategy<Value = GrayImage> {
    (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f32..=1.0, h * w)
            .prop_map(move |d| GrayImage::new(h, w, d).unwrap())
    })
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..1.0, 2..12)
}

fn in_range(img: &GrayImage) -> bool {
    img.pixels().iter().all(|&p| (0.0..=1.0).contains(&p))
}

proptest! {
    #[test]
    fn kernels_preserve_dims_and_range(
        img in image(),
        deg in -360.0f64..360.0,
        dx in -15i64..15,
        dy in -15i64..15,
        factor in 0.1f64..4.0,
        alpha in 0.0f64..20.0,
        sigma in 0.3f64..6.0,
        seed in any::<u64>(),
    ) {
        let outs = [
            transforms::rotate(&img, deg),
            transforms::shift(&img, dx, dy),
            transforms::scale(&img, factor).unwrap(),
            transforms::vmirror(&img),
            transforms::elastic(&img, alpha, sigma, seed).unwrap(),
        ];
        for out in &outs {
            prop_assert_eq!(out.dims(), img.dims());
            prop_assert!(in_range(out));
        }
    }

    #[test]
    fn identity_parameters_are_bit_exact(img in image(), sigma in 0.3f64..6.0, seed in any::<u64>()) {
        prop_assert_eq!(&transforms::rotate(&img, 0.0), &img);
        prop_assert_eq!(&transforms::shift(&img, 0, 0), &img);
        prop_assert_eq!(&transforms::scale(&img, 1.0).unwrap(), &img);
        prop_assert_eq!(&transforms::elastic(&img, 0.0, sigma, seed).unwrap(), &img);
    }

    #[test]
    fn vmirror_is_an_involution(img in image()) {
        prop_assert_eq!(transforms::vmirror(&transforms::vmirror(&img)), img);
    }

    #[test]
    fn welch_is_scale_invariant(a in sample(), b in sample(), c in 0.01f64..100.0) {
        prop_assume!(welch_t(&a, &b).is_ok());
        let r = welch_t(&a, &b).unwrap();
        let scaled = |xs: &[f64]| xs.iter().map(|x| x * c).collect::<Vec<_>>();
        let s = welch_t(&scaled(&a), &scaled(&b)).unwrap();
        prop_assert!((r.t_stat - s.t_stat).abs() <= 1e-12 * r.t_stat.abs().max(1.0));
        prop_assert!((r.p_value - s.p_value).abs() <= 1e-12);
    }

    #[test]
    fn welch_is_shift_invariant(a in sample(), b in sample(), c in -10.0f64..10.0) {
        prop_assume!(welch_t(&a, &b).is_ok());
        let r = welch_t(&a, &b).unwrap();
        let moved = |xs: &[f64]| xs.iter().map(|x| x + c).collect::<Vec<_>>();
        let s = welch_t(&moved(&a), &moved(&b)).unwrap();
        // Adding c rounds each value, so agreement is relative to the spread.
        prop_assert!((r.t_stat - s.t_stat).abs() <= 1e-8 * r.t_stat.abs().max(1.0));
        prop_assert!((r.p_value - s.p_value).abs() <= 1e-8);
    }

    #[test]
    fn raising_b_raises_t(a in sample(), b in sample(), lift in 0.001f64..0.5) {
        prop_assume!(welch_t(&a, &b).is_ok());
        let r = welch_t(&a, &b).unwrap();
        let raised: Vec<f64> = b.iter().map(|x| x + lift).collect();
        let s = welch_t(&a, &raised).unwrap();
        prop_assert!(s.t_stat > r.t_stat);
        prop_assert!(s.p_value <= r.p_value);
    }

    #[test]
    fn swapping_samples_negates_t(a in sample(), b in sample()) {
        prop_assume!(welch_t(&a, &b).is_ok());
        let (r, s) = (welch_t(&a, &b).unwrap(), welch_t(&b, &a).unwrap());
        prop_assert!((r.t_stat + s.t_stat).abs() <= 1e-12 * r.t_stat.abs().max(1.0));
        prop_assert!((r.p_value + s.p_value - 1.0).abs() <= 1e-12);
    }
}

fn plan() -> impl Strategy<Value = (usize, usize, MrKind, u64)> {
    (
        4usize..400,
        prop::sample::select(MrKind::ALL.to_vec()),
        any::<u64>(),
    )
        .prop_flat_map(|(k, kind, seed)| {
            // Labels cycle 0–9, so only 0, 1 and 8 (about 30%) can be vmirror sources.
            let max_half = if kind == MrKind::Vmirror {
                (k - 1) / 10 * 3 + 1
            } else {
                k / 2
            };
            let max_half = max_half.min((k - 2) / 2).max(1);
            (1..=max_half).prop_map(move |half| (k, 2 * half, kind, seed))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn protocol_arithmetic((k, m, kind, seed) in plan()) {
        prop_assert_eq!(mrforge_validation::protocol::check(k, m, kind, seed), Ok(()));
    }
}
