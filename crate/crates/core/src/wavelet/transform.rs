//! One-level analysis and synthesis with whole-sample symmetric extension.
//!
//! A signal `x` of even length `N` is extended as `x[-i] = x[i]`,
//! `x[N-1+i] = x[N-1-i]` (period `2N - 2`). The lowpass band keeps the even
//! samples of `h̃ * x`, the highpass band the odd samples of `g̃ * x`; both
//! bands stay symmetric under the same extension, so `N/2 + N/2`
//! coefficients reconstruct the signal exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::VolumeGrid;

use super::filters::{Filter, FilterBank};

/// Folds any integer index into `[0, n)` under whole-sample symmetric
/// extension.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n as isize - 2;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// `out[k] = Σ_j f[j] · x[2k + phase − j]`.
fn filter_down(x: &[f64], f: &Filter, phase: isize, out: &mut [f64]) {
    let n = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        let center = 2 * k as isize + phase;
        *o = f
            .indices()
            .map(|(j, c)| c * x[reflect(center - j, n)])
            .sum();
    }
}

/// Adds `Σ_j f[j] · U(m − j)` to `out[m]`, where `U` is the band upsampled
/// onto positions of parity `phase` of the symmetric extension.
fn filter_up_add(band: &[f64], f: &Filter, phase: usize, out: &mut [f64]) {
    let n = out.len();
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, c) in f.indices() {
            let p = reflect(m as isize - j, n);
            if p % 2 == phase {
                acc += c * band[p / 2];
            }
        }
        *o += acc;
    }
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid_input(format!(
            "signal length {n} must be even and >= 2"
        )));
    }
    Ok(())
}

/// Lowpass and highpass bands of one analysis level.
pub fn analyze_1d(x: &[f64], fb: &FilterBank) -> Result<(Vec<f64>, Vec<f64>)> {
    check_even(x.len())?;
    let half = x.len() / 2;
    let mut lo = vec![0.0; half];
    let mut hi = vec![0.0; half];
    filter_down(x, &fb.analysis_lowpass, 0, &mut lo);
    filter_down(x, &fb.analysis_highpass, 1, &mut hi);
    Ok((lo, hi))
}

/// Inverse of [`analyze_1d`].
pub fn synthesize_1d(lo: &[f64], hi: &[f64], fb: &FilterBank) -> Result<Vec<f64>> {
    if lo.len() != hi.len() {
        return Err(Error::invalid_input("band lengths differ"));
    }
    let mut out = vec![0.0; 2 * lo.len()];
    filter_up_add(lo, &fb.synthesis_lowpass, 0, &mut out);
    filter_up_add(hi, &fb.synthesis_highpass, 1, &mut out);
    Ok(out)
}

/// Applies `op` to every line along the last axis of a `[d0, d1, d2]` array
/// and returns the result with axes rotated to `[m, d0, d1]`, where `m` is
/// the output line length. Three calls visit every axis and restore the
/// original axis order.
fn pass_and_rotate(
    data: &[f64],
    dims: [usize; 3],
    out_len: usize,
    op: impl Fn(&[f64], &mut [f64]) + Sync,
) -> (Vec<f64>, [usize; 3]) {
    let [d0, d1, d2] = dims;
    let mut lines = vec![0.0; d0 * d1 * out_len];
    lines
        .par_chunks_mut(out_len)
        .zip(data.par_chunks(d2))
        .for_each(|(out, line)| op(line, out));
    let mut rotated = vec![0.0; lines.len()];
    for (row, line) in lines.chunks(out_len).enumerate() {
        for (m, &v) in line.iter().enumerate() {
            rotated[m * d0 * d1 + row] = v;
        }
    }
    (rotated, [out_len, d0, d1])
}

/// Separable lowpass analysis along all three axes, keeping even samples:
/// `N³ → (N/2)³`.
pub fn dwt3_coarse(volume: &VolumeGrid, fb: &FilterBank) -> Result<VolumeGrid> {
    let n = volume.resolution();
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid_input(format!(
            "coarse analysis needs an even resolution, got {n}"
        )));
    }
    let half = n / 2;
    let f = &fb.analysis_lowpass;
    let op = |line: &[f64], out: &mut [f64]| filter_down(line, f, 0, out);
    let (a, dims) = pass_and_rotate(volume.values(), [n, n, n], half, op);
    let (b, dims) = pass_and_rotate(&a, dims, half, op);
    let (c, _) = pass_and_rotate(&b, dims, half, op);
    VolumeGrid::new(half, volume.extent(), c)
}

/// Separable lowpass synthesis with all detail bands zero: `N³ → (2N)³`.
pub fn idwt3_coarse(coarse: &VolumeGrid, fb: &FilterBank) -> Result<VolumeGrid> {
    let n = coarse.resolution();
    let full = 2 * n;
    let f = &fb.synthesis_lowpass;
    let op = |line: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        filter_up_add(line, f, 0, out)
    };
    let (a, dims) = pass_and_rotate(coarse.values(), [n, n, n], full, op);
    let (b, dims) = pass_and_rotate(&a, dims, full, op);
    let (c, _) = pass_and_rotate(&b, dims, full, op);
    VolumeGrid::new(full, coarse.extent(), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reflect_is_whole_sample_symmetric() {
        let n = 4;
        let got: Vec<usize> = (-4..9).map(|i| reflect(i, n)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn perfect_reconstruction_short_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in super::super::filters::FILTER_NAMES {
            let fb = FilterBank::by_name(name).unwrap();
            for &n in &[2usize, 4, 8, 18] {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (lo, hi) = analyze_1d(&x, &fb).unwrap();
                let y = synthesize_1d(&lo, &hi, &fb).unwrap();
                for (a, b) in x.iter().zip(&y) {
                    assert!((a - b).abs() < 1e-12, "{name} n={n}");
                }
            }
        }
    }

    #[test]
    fn odd_length_is_rejected() {
        let fb = FilterBank::haar();
        assert!(analyze_1d(&[1.0, 2.0, 3.0], &fb).is_err());
        let v = VolumeGrid::zeros(3, 1.0);
        assert!(matches!(dwt3_coarse(&v, &fb), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn constant_volume_scales_by_dc_gain() {
        let fb = FilterBank::bior68();
        let v = VolumeGrid::filled(16, 1.0, 0.7);
        let c = dwt3_coarse(&v, &fb).unwrap();
        assert_eq!(c.resolution(), 8);
        let want = 0.7 * 2f64.powf(1.5);
        assert!(c.values().iter().all(|x| (x - want).abs() < 1e-12));
        let back = idwt3_coarse(&c, &fb).unwrap();
        assert!(back.values().iter().all(|x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn resolution_bookkeeping() {
        let fb = FilterBank::bior68();
        assert_eq!(
            dwt3_coarse(&VolumeGrid::zeros(64, 1.0), &fb)
                .unwrap()
                .resolution(),
            32
        );
        let up = idwt3_coarse(&VolumeGrid::zeros(16, 1.0), &fb).unwrap();
        assert_eq!(up.resolution(), 32);
        assert!(up.values().iter().all(|&x| x == 0.0));
    }
}
