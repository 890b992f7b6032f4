//! Invariants of outer measures, outer Lebesgue quasi-norms and the covering algorithms.

use bht_core::embedding::{embed, GammaMap, Grid3};
use bht_core::geometry::{Band, Point, Region, Strip, Tree};
use bht_core::outer::*;
use bht_core::signal::SampledSignal;
use bht_core::sizes::{Ext, SizeSpec};
use bht_core::wavepacket::make_mother_packet;
use bht_core::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn band() -> Band<f64> {
    Band::symmetric(1.0)
}

fn spec(agg: Aggregation) -> OuterSpec<f64> {
    let lattice = Lattice { s_max: 1.0, n_scales: 4, x_lo: -2.0, x_hi: 2.0, x_step: 0.5, xi_lo: -1.0, xi_hi: 1.0, xi_step: 0.25 };
    let window = SampleWindow { eta: (-3.0, 3.0), n_eta: 24, y: (-2.0, 2.0), n_y: 64, t: (1.0 / 16.0, 2.0), n_t: 24 };
    OuterSpec::new(Generator::Trees { band: band() }, agg, lattice, window)
}

fn random_tree(rng: &mut ChaCha8Rng) -> Tree<f64> {
    let s = 2f64.powi(-rng.gen_range(0..3));
    Tree::new(rng.gen_range(-0.75..0.75), rng.gen_range(-1.0 + s..1.0 - s + 1e-9), s, band()).unwrap()
}

/// Point masses placed inside random trees.
fn point_field(rng: &mut ChaCha8Rng, kind: PointSize) -> PointField<f64> {
    let mut pts = Vec::new();
    for _ in 0..rng.gen_range(1..5) {
        let t = random_tree(rng);
        for _ in 0..rng.gen_range(1..6) {
            let p = t.from_model(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9), rng.gen_range(0.05..0.95)).unwrap();
            pts.push((p, rng.gen_range(0.1..3.0)));
        }
    }
    PointField::new(pts, kind).unwrap()
}

fn opts() -> LpOptions {
    LpOptions { levels: 48, span_log2: 24.0, ..LpOptions::default() }
}

#[test]
fn chebyshev_and_weak_below_strong() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sp = spec(Aggregation::L1);
    for _ in 0..30 {
        let f = point_field(&mut rng, PointSize::Mass);
        for p in [1.0, 2.0, 3.5] {
            let prof = outer_lp_profile(&f, &sp, Ext(p), &Cut::everything(), &opts()).unwrap();
            assert!(prof.converged);
            assert!(prof.weak <= prof.strong * (1.0 + 1e-12), "p={p}: {} > {}", prof.weak, prof.strong);
            for l in &prof.levels {
                assert!(l.lambda.powf(p) * l.measure <= prof.strong.powf(p) * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn quasi_norms_are_log_convex_in_the_exponent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sp = spec(Aggregation::L1);
    for _ in 0..30 {
        let f = point_field(&mut rng, PointSize::Mass);
        let n = |p: f64| outer_lp_profile(&f, &sp, Ext(p), &Cut::everything(), &opts()).unwrap().strong;
        let (p0, p1, th) = (1.0, 4.0, 0.4);
        let p = 1.0 / ((1.0 - th) / p0 + th / p1);
        assert!(n(p) <= n(p0).powf(1.0 - th) * n(p1).powf(th) * (1.0 + 1e-9));
    }
}

#[test]
fn atomic_decomposition_sum_is_within_four_times_the_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sp = spec(Aggregation::L1);
    for _ in 0..30 {
        let f = point_field(&mut rng, PointSize::Mass);
        let p = [1.0, 2.0, 3.0][rng.gen_range(0..3)];
        let d = atomic_decompose(&f, &sp, p, &Cut::everything(), 16).unwrap();
        assert!(d.sum <= 4.0 * d.norm_p * (1.0 + 1e-12), "p={p}: {} vs {}", d.sum, d.norm_p);
        assert!(d.slices_bounded);
    }
}

#[test]
fn atomic_remainders_shrink_as_the_range_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sp = spec(Aggregation::L1);
    let lat = sp.lattice.sets(&sp.generator).unwrap();
    for _ in 0..10 {
        let f = point_field(&mut rng, PointSize::Mass);
        let d = atomic_decompose(&f, &sp, 2.0, &Cut::everything(), 12).unwrap();
        let mut last = f64::INFINITY;
        for w in 0..=d.k_top - d.k_lo {
            let cut = d.remainder_cut(&Cut::everything(), d.k_top - w, d.k_top);
            let rest = f.sizes(&lat, &cut).unwrap().into_iter().fold(0.0, f64::max);
            assert!(rest <= last * (1.0 + 1e-12));
            last = rest;
        }
    }
}

#[test]
fn greedy_postconditions_on_point_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sp = spec(Aggregation::L1);
    let samples: Vec<Point<f64>> = sp.window.points().unwrap().into_iter().map(|p| p.0).collect();
    for _ in 0..20 {
        let f = point_field(&mut rng, PointSize::Mass);
        let top = f.sizes(&sp.lattice.sets(&sp.generator).unwrap(), &Cut::everything()).unwrap().into_iter().fold(0.0, f64::max);
        let lam = top * rng.gen_range(0.05..0.9);
        let c = greedy_cover(&f, lam, &sp, &Cut::everything()).unwrap();
        assert!(c.residual_size <= lam);
        assert!(c.distinguished_disjoint(&samples, &Cut::everything()));
        if let Some(r) = c.min_mass_ratio() {
            assert!(r >= band().width() / 2.0 * (1.0 - 1e-12), "{r}");
        }
        for s in &c.distinguished_subsets {
            assert!(s.size > lam);
        }
    }
}

#[test]
fn greedy_postconditions_on_an_embedded_field() {
    let phi = make_mother_packet(0.25, 0.5).unwrap();
    let g = Grid3::new(-8.0, 0.002, 8001, -2.0, 1.0 / 16.0, 65, 1.0 / 64.0, 2f64.powf(0.25), 29).unwrap();
    let f = SampledSignal::from_fourier_series(256, 1.0 / 16.0, -8.0, &[(0.25, Complex::new(1.0, 0.0)), (-0.5, Complex::new(0.0, 0.7))]).unwrap();
    let e = embed(&f, &g, &[phi], None).unwrap();
    let size = FieldSize::new(e, SizeSpec::lebesgue(2.0, f64::INFINITY)).unwrap();
    let lattice = Lattice { s_max: 1.0, n_scales: 2, x_lo: -1.0, x_hi: 1.0, x_step: 1.0, xi_lo: -0.5, xi_hi: 0.5, xi_step: 0.5 };
    let window = SampleWindow { eta: (-3.0, 3.0), n_eta: 16, y: (-1.0, 1.0), n_y: 32, t: (1.0 / 32.0, 2.0), n_t: 16 };
    let sp = OuterSpec::new(Generator::Trees { band: Band::symmetric(1.0) }, Aggregation::L1, lattice, window);
    let top = size.sizes(&lattice.sets(&sp.generator).unwrap(), &Cut::everything()).unwrap().into_iter().fold(0.0, f64::max);
    assert!(top > 0.0 && top.is_finite());
    let c = greedy_cover(&size, 0.5 * top, &sp, &Cut::everything()).unwrap();
    assert!(!c.selected.is_empty());
    assert!(c.residual_size <= 0.5 * top);
    assert!(c.distinguished_subsets.iter().all(|s| s.size > 0.5 * top));
}

#[test]
fn greedy_is_within_twice_brute_force_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sp = spec(Aggregation::L1);
    for _ in 0..20 {
        let trees: Vec<Tree<f64>> = (0..rng.gen_range(1..4)).map(|_| random_tree(&mut rng)).collect();
        let e = Region::Forest { trees: trees.clone() };
        let mut cands: Vec<GenSet<f64>> = trees.iter().map(|t| GenSet::Tree(*t)).collect();
        while cands.len() < 12 {
            cands.push(GenSet::Tree(random_tree(&mut rng)));
        }
        let g = outer_measure(&e, &sp, &CoverMode::greedy()).unwrap().value;
        let b = outer_measure(&e, &sp, &CoverMode::Brute { candidates: cands }).unwrap().value;
        assert!(g <= 2.0 * b + 1e-12, "{g} vs {b}");
    }
}

#[test]
fn greedy_measure_is_subadditive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sp = spec(Aggregation::L1);
    for _ in 0..10 {
        let a = Region::tree(random_tree(&mut rng));
        let b = Region::tree(random_tree(&mut rng));
        let m = |r: &Region<f64>| outer_measure(r, &sp, &CoverMode::greedy()).unwrap().value;
        let u = m(&Region::union(vec![a.clone(), b.clone()]));
        assert!(u <= m(&a) + m(&b) + 1e-12);
    }
}

#[test]
fn linf_measure_is_at_most_one_for_a_single_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sp = spec(Aggregation::LInf);
    for _ in 0..10 {
        let t = random_tree(&mut rng);
        let m = outer_measure(&Region::tree(t), &sp, &CoverMode::Brute { candidates: vec![GenSet::Tree(t)] }).unwrap();
        assert_eq!(m.value, 1.0);
    }
}

#[test]
fn pushed_covers_bound_the_measure_of_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sp = spec(Aggregation::L1);
    for beta in [1.0, 0.5, 0.125] {
        let g = GammaMap::gamma2(beta).unwrap();
        let psp = sp.pushed(&g).unwrap();
        for _ in 0..5 {
            let e = Region::Forest { trees: (0..2).map(|_| random_tree(&mut rng)).collect() };
            let m = outer_measure(&e, &sp, &CoverMode::greedy()).unwrap();
            let img = SampledSet::of(&e, &sp.window).unwrap().pushed(&g).unwrap();
            let cover: Vec<GenSet<f64>> = m.cover.iter().map(|c| c.pushed(&g).unwrap()).collect();
            assert!(cover.len() <= BRUTE_MAX);
            let pm = measure_of_samples(&img, &[], &psp, &CoverMode::Brute { candidates: cover }).unwrap();
            assert!(pm.value <= m.value + 1e-12);
        }
        // strips: ν is unchanged
        let d = Strip::new(0.25, 0.5, beta).unwrap();
        let pd = match GenSet::Strip(d).pushed(&g).unwrap() {
            GenSet::Strip(s) => s,
            _ => unreachable!(),
        };
        assert_eq!(strip_measure(&[pd]).unwrap(), strip_measure(&[d]).unwrap());
    }
}

#[test]
fn localized_x_size_with_equal_exponents_is_the_mu1_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sp = spec(Aggregation::L1);
    for _ in 0..5 {
        let f = point_field(&mut rng, PointSize::Mass);
        let v = [Strip::new(rng.gen_range(-0.5..0.5), 1.0, 1.0).unwrap()];
        let q = Ext(2.0);
        let x = localized_norm(&f, LocalizedKind::Xqr { q, r: q, plus: false }, &v, &Cut::everything(), &sp, &opts()).unwrap();
        let m = localized_norm(&f, LocalizedKind::FLqMu1 { q, plus: false }, &v, &Cut::everything(), &sp, &opts()).unwrap();
        assert!((x.value - m.value).abs() <= 1e-12 * m.value.max(1.0));
        let xp = localized_norm(&f, LocalizedKind::Xqr { q, r: Ext(1.0), plus: true }, &v, &Cut::everything(), &sp, &opts()).unwrap();
        assert!(xp.value >= x.value * (1.0 - 1e-12));
    }
}

#[test]
fn refinement_caps_counting_functions_and_keeps_the_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let covers: Vec<(i64, Vec<Tree<f64>>)> = (0..3)
            .map(|k| {
                let n = rng.gen_range(5..40);
                (k, (0..n).map(|_| random_tree(&mut rng)).collect())
            })
            .collect();
        let budget = rng.gen_range(1.0..50.0);
        let r = refine_to_linfty(&covers, 1.0, 2.0, budget, 1.0).unwrap();
        assert!(r.nu_ecc <= budget / 2.0);
        for l in &r.levels {
            assert!(l.max_count as f64 <= 3.0 * l.threshold);
            assert_eq!(l.kept.len() + l.dropped.len(), covers.iter().find(|c| c.0 == l.k).unwrap().1.len());
        }
    }
}

#[test]
fn measure_comparison_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sp = spec(Aggregation::L1);
    for _ in 0..20 {
        let beta = [1.0, 0.5, 0.25][rng.gen_range(0..3)];
        let w: Vec<Tree<f64>> = (0..rng.gen_range(1..4)).map(|_| random_tree(&mut rng)).collect();
        let v: Vec<Strip<f64>> = (0..rng.gen_range(1..3))
            .map(|_| Strip::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.05..0.5) * beta, beta).unwrap())
            .collect();
        let r = measure_compare(&w, &v, &sp).unwrap();
        assert!(r.holds, "{r:?}");
    }
}
