//! Invariants of the local sizes on sampled fields and trees.

use bht_core::embedding::{embed, product_field, EmbeddedField, GammaMap, Grid3, Mask};
use bht_core::geometry::{boundary_of, Band, Region, Tree};
use bht_core::signal::SampledSignal;
use bht_core::sizes::{lacunary_size, lebesgue_size, product_size, sio_size, ProductVariant, SizeSpec};
use bht_core::wavepacket::{make_mother_packet, packet_family, WavePacket};
use bht_core::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R: f64 = 0.25;

fn phi() -> WavePacket<f64> {
    make_mother_packet(R, 0.5).unwrap()
}

fn grid() -> Grid3<f64> {
    Grid3::new(-8.0, 0.002, 8001, -2.0, 1.0 / 16.0, 65, 1.0 / 64.0, 2f64.powf(0.25), 29).unwrap()
}

fn signal(rng: &mut ChaCha8Rng) -> SampledSignal<f64> {
    let mut terms = Vec::new();
    for k in -6..=6 {
        if rng.gen_bool(0.7) {
            terms.push((k as f64 / 8.0, Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
    }
    SampledSignal::from_fourier_series(256, 1.0 / 16.0, -8.0, &terms).unwrap()
}

fn random_tree(rng: &mut ChaCha8Rng) -> Tree<f64> {
    Tree::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(0.25..1.0), Band::symmetric(1.0)).unwrap()
}

fn forest_mask(rng: &mut ChaCha8Rng, g: &Grid3<f64>, keep_inside: bool) -> Mask<f64> {
    let trees = (0..rng.gen_range(1..4)).map(|_| Region::tree(random_tree(rng))).collect();
    let b = boundary_of(&Region::union(trees), &g.plane()).unwrap();
    if keep_inside {
        Mask::Below(b)
    } else {
        Mask::AtOrAbove(b)
    }
}

fn specs() -> Vec<SizeSpec<f64>> {
    vec![
        SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY),
        SizeSpec::lebesgue(2.0, f64::INFINITY),
        SizeSpec::lebesgue(1.0, 2.0),
        SizeSpec::lebesgue(3.0, 1.0),
    ]
}

fn size(f: &EmbeddedField<f64>, t: &Tree<f64>, spec: &SizeSpec<f64>) -> f64 {
    lebesgue_size(f, t, spec).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sizes_are_homogeneous(seed in 0u64..10_000, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = grid();
        let f = embed(&signal(&mut rng), &g, &[phi()], None).unwrap().with_mask(forest_mask(&mut rng, &g, false));
        let t = random_tree(&mut rng);
        let lambda = Complex::new(re, im);
        for spec in specs() {
            let (a, b) = (size(&f, &t, &spec), size(&f.scaled(lambda), &t, &spec));
            if a.is_infinite() {
                prop_assert!(b.is_infinite() || lambda.norm() == 0.0);
            } else {
                prop_assert!((b - lambda.norm() * a).abs() <= 1e-12 * b.max(1e-300), "{} vs {}", b, lambda.norm() * a);
            }
        }
    }

    #[test]
    fn sizes_satisfy_minkowski(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = grid();
        let (f1, f2) = (signal(&mut rng), signal(&mut rng));
        let mask = forest_mask(&mut rng, &g, false);
        let e = |f: &SampledSignal<f64>| embed(f, &g, &[phi()], None).unwrap().with_mask(mask.clone());
        let sum = e(&f1.add(&f2).unwrap());
        let t = random_tree(&mut rng);
        for spec in specs() {
            let lhs = size(&sum, &t, &spec);
            let rhs = size(&e(&f1), &t, &spec) + size(&e(&f2), &t, &spec);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{} > {}", lhs, rhs);
        }
    }

    #[test]
    fn removing_a_forest_does_not_increase_sizes(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = grid();
        let f = embed(&signal(&mut rng), &g, &[phi()], None).unwrap();
        let removed = f.with_mask(forest_mask(&mut rng, &g, false));
        let t = random_tree(&mut rng);
        for spec in specs() {
            prop_assert!(size(&removed, &t, &spec) <= size(&f, &t, &spec));
        }
        let spec = SizeSpec::lebesgue(2.0, 2.0);
        prop_assert!(lacunary_size(&removed, &t, &spec).unwrap().value <= lacunary_size(&f, &t, &spec).unwrap().value);
    }
}

#[test]
fn finite_family_sup_is_stable_under_enlargement() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = grid();
    let small = packet_family(&phi(), false, 3).unwrap();
    let large = packet_family(&phi(), true, 12).unwrap();
    assert_eq!(large.len(), 4 * small.len());
    let spec = SizeSpec::lebesgue(2.0, f64::INFINITY);
    let mut c: f64 = 1.0;
    for _ in 0..20 {
        let f = signal(&mut rng);
        let t = random_tree(&mut rng);
        let a = size(&embed(&f, &g, &small, None).unwrap(), &t, &spec);
        let b = size(&embed(&f, &g, &large, None).unwrap(), &t, &spec);
        assert!(b >= a * (1.0 - 1e-12), "the larger family contains the smaller one");
        if a > 0.0 {
            c = c.max(b / a);
        }
    }
    println!("family stability constant C = {c:.4}");
    assert!(c < 4.0, "C = {c}");
}

#[test]
fn sio_size_is_dominated_by_lebesgue_and_lacunary_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = grid();
    let enlarged = packet_family(&phi(), true, 4).unwrap();
    let sio_spec = SizeSpec::lebesgue(2.0, f64::INFINITY);
    let (sup, lac) = (SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY), SizeSpec::lebesgue(2.0, 2.0));
    let ratios: Vec<f64> = (0..50)
        .map(|_| {
            let f = signal(&mut rng);
            let mask = forest_mask(&mut rng, &g, true);
            let t = random_tree(&mut rng);
            let plain = embed(&f, &g, &[phi()], None).unwrap().with_mask(mask.clone());
            let big = embed(&f, &g, &enlarged, None).unwrap().with_mask(mask);
            let lhs = sio_size(&plain, &t, &sio_spec).unwrap().value;
            let rhs = size(&big, &t, &sup) + lacunary_size(&big, &t, &lac).unwrap().value;
            assert!(rhs.is_finite());
            if rhs == 0.0 {
                assert_eq!(lhs, 0.0);
                0.0
            } else {
                lhs / rhs
            }
        })
        .collect();
    let fitted = ratios[..25].iter().cloned().fold(0.0, f64::max);
    let held_out = ratios[25..].iter().cloned().fold(0.0, f64::max);
    println!("SIO domination: fitted C = {fitted:.4}, held-out max ratio = {held_out:.4}");
    assert!(fitted > 0.0 && held_out <= 2.0 * fitted);
}

#[test]
fn product_size_obeys_hoelder() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let g = grid();
    let (g2, g3) = (GammaMap::gamma2(0.5).unwrap(), GammaMap::gamma3(0.5).unwrap());
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u2: f64 = rng.gen_range(1.2..6.0);
        let u3 = u2 / (u2 - 1.0);
        let e2 = embed(&signal(&mut rng), &g, &[phi()], Some(g2)).unwrap();
        let e3 = embed(&signal(&mut rng), &g, &[phi()], Some(g3)).unwrap();
        let t = Tree::new(rng.gen_range(-0.25..0.25), rng.gen_range(-0.5..0.5), 1.0, Band::symmetric(2.0)).unwrap();
        let lhs = product_size(&product_field(&e2, &e3).unwrap(), &t, ProductVariant::PhiPhi, &SizeSpec::lebesgue(1.0, f64::INFINITY))
            .unwrap()
            .value;
        let rhs = size(&e2, &t, &SizeSpec::lebesgue(u2, f64::INFINITY)) * size(&e3, &t, &SizeSpec::lebesgue(u3, f64::INFINITY));
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    println!("Hoelder: worst ratio = {worst:.6}");
    assert!(worst <= 1.0 + 1e-12);
}
