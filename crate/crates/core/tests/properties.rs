use std::f64::consts::PI;

use fins_core::besov::{chi, phi};
use fins_core::interp::bilinear_clamped;
use fins_core::sample;
use fins_core::snapshot::Snapshot;
use fins_core::spectral::{divergence_norm, fractional_laplacian, heat_semigroup, leray_project};
use fins_core::{FractionalParams, Grid2D, ScalarField, VectorField2};
use proptest::prelude::*;

fn grid() -> Grid2D {
    Grid2D::new(16, 2.0 * PI).unwrap()
}

fn random_vector(seed: u64) -> VectorField2 {
    let g = grid();
    let mut r = sample::rng(seed);
    let a = sample::band_limited(&g, 1.0, 6.0, 0.0, &mut r);
    let b = sample::band_limited(&g, 1.0, 6.0, 0.0, &mut r);
    VectorField2::new(a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leray_is_idempotent_and_divergence_free(seed in 0u64..10_000) {
        let p = leray_project(&random_vector(seed));
        prop_assert!(divergence_norm(&p) < 1e-12);
        let pp = leray_project(&p);
        prop_assert!(pp.sub(&p).unwrap().l2_norm() <= 1e-12 * (1.0 + p.l2_norm()));
    }

    #[test]
    fn fractional_powers_compose(seed in 0u64..10_000, a in 0.1f64..1.0, b in 0.1f64..1.0) {
        let f = sample::band_limited(&grid(), 1.0, 6.0, 0.0, &mut sample::rng(seed));
        let two = fractional_laplacian(&fractional_laplacian(&f, a).unwrap(), b).unwrap();
        let one = fractional_laplacian(&f, a + b).unwrap();
        prop_assert!(two.sub(&one).unwrap().max_abs() <= 1e-10 * (1.0 + one.max_abs()));
    }

    #[test]
    fn heat_semigroup_composes_and_contracts(seed in 0u64..10_000, s in 0.0f64..0.5, t in 0.0f64..0.5, alpha in 0.55f64..1.0) {
        let params = FractionalParams::new(alpha, 1.0).unwrap();
        let f = sample::band_limited(&grid(), 1.0, 6.0, 0.0, &mut sample::rng(seed));
        let two = heat_semigroup(&heat_semigroup(&f, s, &params).unwrap(), t, &params).unwrap();
        let one = heat_semigroup(&f, s + t, &params).unwrap();
        prop_assert!(two.sub(&one).unwrap().max_abs() < 1e-12);
        prop_assert!(one.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn dyadic_profiles_sum_to_one(xi in 0.0f64..1e4) {
        let mut total = chi(xi);
        let mut scale = 1.0;
        while scale <= 2.0 * xi.max(1.0) {
            total += phi(xi / scale);
            scale *= 2.0;
        }
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&phi(xi)));
    }

    #[test]
    fn clamped_interpolation_stays_within_extremes(seed in 0u64..10_000, x in -10.0f64..10.0, y in -10.0f64..10.0) {
        let f = sample::band_limited(&grid(), 1.0, 6.0, 0.0, &mut sample::rng(seed));
        let v = bilinear_clamped(&f, x, y);
        prop_assert!(v >= f.min() - 1e-14 && v <= f.max() + 1e-14);
    }

    #[test]
    fn snapshot_bytes_round_trip(seed in 0u64..10_000, t in 0.0f64..10.0, alpha in 0.5f64..1.0) {
        let g = grid();
        let f = sample::band_limited(&g, 1.0, 6.0, 0.0, &mut sample::rng(seed));
        let mut snap = Snapshot::new(&g, t, alpha);
        snap.push("rho", &f).unwrap();
        snap.push("u1", &f.scale(-2.0)).unwrap();
        let back = Snapshot::from_bytes(&snap.to_bytes()).unwrap();
        prop_assert_eq!(&back, &snap);
        prop_assert_eq!(back.field("rho").unwrap().data, f.data);
    }
}

#[test]
fn truncated_snapshot_is_rejected() {
    let g = grid();
    let mut snap = Snapshot::new(&g, 0.0, 0.75);
    snap.push("rho", &ScalarField::constant(&g, 1.0)).unwrap();
    let bytes = snap.to_bytes();
    assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Snapshot::from_bytes(&bad).is_err());
}

#[test]
fn snapshot_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.fins");
    let g = grid();
    let mut snap = Snapshot::new(&g, 0.5, 0.75);
    snap.push("rho", &ScalarField::from_fn(&g, |x, y| 1.0 + 0.1 * x.sin() * y.cos())).unwrap();
    snap.write(&path).unwrap();
    assert_eq!(Snapshot::read(&path).unwrap(), snap);
}
