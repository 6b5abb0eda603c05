use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavediff_core::volume::VolumeGrid;
use wavediff_core::wavelet::{
    analyze_1d, decompose, dwt3_coarse, idwt3_coarse, reconstruct_full, reflect, synthesize_1d,
    FilterBank, FILTER_NAMES,
};

fn random_volume(n: usize, seed: u64) -> VolumeGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VolumeGrid::from_fn(n, 0.45, |_, _, _| rng.random_range(-1.0..1.0))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let d = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / max_abs(b).max(1e-300)
}

fn banks() -> Vec<FilterBank> {
    FILTER_NAMES
        .iter()
        .map(|n| FilterBank::by_name(n).unwrap())
        .collect()
}

/// `out[i,j,k] = Σ h[a] h[b] h[c] · x[2i−a, 2j−b, 2k−c]` under symmetric
/// extension, evaluated with no separability.
fn direct_coarse(x: &VolumeGrid, fb: &FilterBank) -> Vec<f64> {
    let n = x.resolution();
    let h: Vec<(isize, f64)> = fb.analysis_lowpass.indices().collect();
    let mut out = Vec::with_capacity((n / 2).pow(3));
    for i in 0..n / 2 {
        for j in 0..n / 2 {
            for k in 0..n / 2 {
                let mut acc = 0.0;
                for &(a, ha) in &h {
                    for &(b, hb) in &h {
                        for &(c, hc) in &h {
                            acc += ha
                                * hb
                                * hc
                                * x.get(
                                    reflect(2 * i as isize - a, n),
                                    reflect(2 * j as isize - b, n),
                                    reflect(2 * k as isize - c, n),
                                );
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn one_level_perfect_reconstruction(len_idx in 0usize..3, seed in any::<u64>()) {
        let n = [32, 64, 128][len_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for fb in banks() {
            let (lo, hi) = analyze_1d(&x, &fb).unwrap();
            let y = synthesize_1d(&lo, &hi, &fb).unwrap();
            prop_assert!(rel_linf(&y, &x) <= 1e-10, "{}: {}", fb.name, rel_linf(&y, &x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_pyramid_is_lossless(big in any::<bool>(), levels in 1usize..=3, seed in any::<u64>()) {
        let n = if big { 64 } else { 32 };
        let v = random_volume(n, seed);
        let fb = FilterBank::bior68();
        let back = reconstruct_full(&decompose(&v, &fb, levels).unwrap(), &fb).unwrap();
        prop_assert!(rel_linf(back.values(), v.values()) <= 1e-8);
    }

    #[test]
    fn decomposition_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let fb = FilterBank::bior68();
        let (v, w) = (random_volume(16, seed), random_volume(16, seed ^ 0x9e37));
        let mix = v.zip_map(&w, |x, y| a * x + b * y).unwrap();
        let (pm, pv, pw) = (
            decompose(&mix, &fb, 2).unwrap(),
            decompose(&v, &fb, 2).unwrap(),
            decompose(&w, &fb, 2).unwrap(),
        );
        let bands = |p: &wavediff_core::wavelet::PyramidLevels| {
            p.coarse.iter().chain(&p.detail).flat_map(|g| g.values().to_vec()).collect::<Vec<f64>>()
        };
        let (m, x, y) = (bands(&pm), bands(&pv), bands(&pw));
        for ((m, x), y) in m.iter().zip(&x).zip(&y) {
            prop_assert!((m - (a * x + b * y)).abs() <= 1e-10 * (1.0 + a.abs() + b.abs()));
        }
    }

    #[test]
    fn pyramid_resolutions(levels in 1usize..=4) {
        let v = random_volume(32, levels as u64);
        let p = decompose(&v, &FilterBank::bior68(), levels).unwrap();
        let mut parent = 32;
        for (c, d) in p.coarse.iter().zip(&p.detail) {
            prop_assert_eq!(c.resolution(), parent / 2);
            prop_assert_eq!(d.resolution(), parent);
            parent /= 2;
        }
    }
}

#[test]
fn separable_matches_direct_filtering() {
    for (s, fb) in banks().into_iter().enumerate() {
        let v = random_volume(8, s as u64);
        let fast = dwt3_coarse(&v, &fb).unwrap();
        let slow = direct_coarse(&v, &fb);
        assert!(rel_linf(fast.values(), &slow) < 1e-12, "{}", fb.name);
    }
}

#[test]
fn impulse_gives_outer_product_of_lowpass() {
    let fb = FilterBank::bior68();
    let n = 32;
    let c = (n / 2) as isize;
    let v = VolumeGrid::from_fn(
        n,
        0.45,
        |i, j, k| if (i, j, k) == (16, 16, 16) { 1.0 } else { 0.0 },
    );
    let out = dwt3_coarse(&v, &fb).unwrap();
    let h = |i: usize| fb.analysis_lowpass.at(2 * i as isize - c);
    for i in 0..n / 2 {
        for j in 0..n / 2 {
            for k in 0..n / 2 {
                assert!((out.get(i, j, k) - h(i) * h(j) * h(k)).abs() < 1e-15);
            }
        }
    }
}

fn gaussian_smooth(v: &VolumeGrid, sigma: f64) -> VolumeGrid {
    let n = v.resolution();
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut data = v.values().to_vec();
    let stride = [n * n, n, 1];
    for s in stride {
        let src = data.clone();
        for (idx, out) in data.iter_mut().enumerate() {
            let pos = (idx / s) % n;
            let base = idx - pos * s;
            *out = kernel
                .iter()
                .enumerate()
                .map(|(m, w)| w * src[base + reflect(pos as isize + m as isize - r, n) * s])
                .sum::<f64>()
                / norm;
        }
    }
    VolumeGrid::new(n, v.extent(), data).unwrap()
}

#[test]
fn coarse_round_trip_of_smooth_volume_is_close() {
    let v = gaussian_smooth(&random_volume(32, 9), 4.0);
    let fb = FilterBank::bior68();
    let back = idwt3_coarse(&dwt3_coarse(&v, &fb).unwrap(), &fb).unwrap();
    let rms = |x: &[f64]| (x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64).sqrt();
    let diff: Vec<f64> = back
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .collect();
    let centered: Vec<f64> = v.values().iter().map(|x| x - v.mean()).collect();
    let rel = rms(&diff) / rms(&centered);
    assert!(rel < 0.05, "relative RMS {rel}");
}
