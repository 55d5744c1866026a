use phi4_core::lattice::massive_operator;
use phi4_core::{apply_green, convolve, discrete_laplacian, green_function, LatticeField, TorusLattice};
use proptest::prelude::*;

fn lattice() -> impl Strategy<Value = TorusLattice> {
    (prop::sample::select(vec![2.0, 4.0, 8.0]), prop::sample::select(vec![1.0, 0.5, 0.25]), 0.1f64..4.0)
        .prop_map(|(side, eps, mass)| TorusLattice::new(side, eps, mass).unwrap())
}

fn lattice_and_fields(count: usize) -> impl Strategy<Value = (TorusLattice, Vec<LatticeField>)> {
    lattice().prop_flat_map(move |lat| {
        let n = lat.n_sites();
        let l = lat.clone();
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), count)
            .prop_map(move |vs| (l.clone(), vs.into_iter().map(|v| LatticeField::new(&l, v).unwrap()).collect()))
    })
}

fn max_diff(a: &LatticeField, b: &LatticeField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiplier_is_even_and_bounded_below(lat in lattice()) {
        let mu = lat.multiplier();
        prop_assert_eq!(mu.get(0), lat.mass());
        for k in 0..lat.n_sites() {
            prop_assert!(mu.get(k) >= lat.mass());
            prop_assert_eq!(mu.get(k), mu.get(lat.conj_mode(k)));
        }
    }

    #[test]
    fn stencil_matches_symbol_on_plane_waves(lat in lattice(), mode in 0usize..4096) {
        let k = mode % lat.n_sites();
        let (xi1, xi2) = lat.frequency(k);
        let wave = LatticeField::from_fn(&lat, |s| {
            let (x, y) = lat.position(s);
            (2.0 * std::f64::consts::PI * (xi1 * x + xi2 * y)).cos()
        });
        let lap = discrete_laplacian(&wave);
        let want = wave.scaled(-lat.laplacian_symbol(k));
        let scale = lat.laplacian_symbol(k).max(1.0);
        prop_assert!(max_diff(&lap, &want) <= 1e-10 * scale);
    }

    #[test]
    fn delta_identity(lat in lattice()) {
        let inv = 1.0 / lat.cell();
        let lhs = massive_operator(&green_function(&lat));
        let delta = LatticeField::delta(&lat, 0);
        prop_assert!(max_diff(&lhs, &delta) < 1e-10 * inv);
    }

    #[test]
    fn pairing_is_symmetric_and_bilinear((lat, f) in lattice_and_fields(3), a in -2.0f64..2.0) {
        let (x, y, z) = (&f[0], &f[1], &f[2]);
        prop_assert_eq!(x.pairing(y), y.pairing(x));
        let lin = x.zip_with(y, |p, q| a * p + q);
        let want = a * x.pairing(z) + y.pairing(z);
        prop_assert!((lin.pairing(z) - want).abs() < 1e-12 * lat.side() * lat.side());
    }

    #[test]
    fn green_operator_is_linear_and_self_dual((_lat, f) in lattice_and_fields(2), a in -2.0f64..2.0) {
        let (x, y) = (&f[0], &f[1]);
        let gx = apply_green(x);
        let gy = apply_green(y);
        prop_assert!((gx.pairing(y) - x.pairing(&gy)).abs() < 1e-12 * (1.0 + gx.pairing(y).abs()));
        let combo = apply_green(&x.zip_with(y, |p, q| a * p + q));
        let want = gx.zip_with(&gy, |p, q| a * p + q);
        prop_assert!(max_diff(&combo, &want) < 1e-12);
    }

    #[test]
    fn green_operator_is_positivity_improving((lat, f) in lattice_and_fields(1)) {
        let nonneg = f[0].map(f64::abs);
        prop_assume!(nonneg.sup_norm() > 1e-3);
        let g = apply_green(&nonneg);
        prop_assert!(g.values().iter().all(|&v| v > 0.0), "{:?}", lat);
    }

    #[test]
    fn green_operator_is_convolution_with_c((lat, f) in lattice_and_fields(1)) {
        let by_fft = apply_green(&f[0]);
        let by_conv = convolve(&green_function(&lat), &f[0]).unwrap();
        prop_assert!(max_diff(&by_fft, &by_conv) < 1e-12);
    }

    #[test]
    fn convolution_commutes_with_translation((lat, f) in lattice_and_fields(2), shift in 0usize..4096) {
        let s = shift % lat.n_sites();
        let lhs = convolve(&f[0].translated(s), &f[1]).unwrap();
        let rhs = convolve(&f[0], &f[1]).unwrap().translated(s);
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
    }
}

#[test]
fn refinement_changes_green_function_by_a_small_amount() {
    // common sites of the eps = 1/2 and eps = 1/4 lattices at M = 4
    let coarse = green_function(&TorusLattice::new(4.0, 0.5, 1.0).unwrap());
    let fine_lat = TorusLattice::new(4.0, 0.25, 1.0).unwrap();
    let fine = green_function(&fine_lat);
    let n = coarse.lattice().n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == 0 && j == 0 {
                continue;
            }
            let c = coarse.at(coarse.lattice().site(i, j));
            let f = fine.at(fine_lat.site(2 * i, 2 * j));
            worst = worst.max((c - f).abs() / f.abs());
        }
    }
    assert!(worst < 0.25, "{worst}");
}
