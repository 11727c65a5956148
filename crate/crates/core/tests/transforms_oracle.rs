use mrforge::transforms;
use mrforge_validation::warp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;
const IMAGES: usize = 20;

#[test]
fn rotate_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..IMAGES {
        let img = warp::random_image(&mut rng);
        let deg = rng.gen_range(-180.0..180.0);
        let d = warp::max_diff(
            &transforms::rotate(&img, deg),
            &warp::affine(&img, warp::rotation(deg)),
        );
        assert!(d <= TOL, "rotate {deg}: {d}");
    }
}

#[test]
fn scale_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..IMAGES {
        let img = warp::random_image(&mut rng);
        let f = rng.gen_range(0.5..2.0);
        let d = warp::max_diff(
            &transforms::scale(&img, f).unwrap(),
            &warp::affine(&img, warp::scaling(f)),
        );
        assert!(d <= TOL, "scale {f}: {d}");
    }
}

#[test]
fn elastic_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..IMAGES as u64 {
        let img = warp::random_image(&mut rng);
        let (alpha, sigma) = (rng.gen_range(1.0..12.0), rng.gen_range(1.0..5.0));
        let got = transforms::elastic(&img, alpha, sigma, 100 + n).unwrap();
        let d = warp::max_diff(&got, &warp::elastic(&img, alpha, sigma, 100 + n));
        assert!(d <= TOL, "elastic α={alpha} σ={sigma}: {d}");
    }
}

#[test]
fn shift_and_mirror_match_index_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..IMAGES {
        let img = warp::random_image(&mut rng);
        let (dx, dy) = (rng.gen_range(-5..=5), rng.gen_range(-5..=5));
        let shifted = transforms::shift(&img, dx, dy);
        let mirrored = transforms::vmirror(&img);
        for r in 0..28i64 {
            for c in 0..28i64 {
                let i = (r * 28 + c) as usize;
                assert_eq!(
                    shifted.pixels()[i] as f64,
                    warp::pixel(&img, r - dy, c - dx)
                );
                assert_eq!(mirrored.pixels()[i] as f64, warp::pixel(&img, r, 27 - c));
            }
        }
    }
}
