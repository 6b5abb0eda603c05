//! Tensor-level wrappers around the convolution kernels.

use crate::error::{Error, Result};

use super::kernels;
use super::tensor::Tensor;

fn conv_dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, [usize; 3], usize)> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 5 {
        return Err(Error::invalid_input(format!(
            "conv input must be [B, C, D, H, W], got {xs:?}"
        )));
    }
    if ws.len() != 5 || ws[1] != xs[1] || ws[2..] != [3, 3, 3] {
        return Err(Error::invalid_input(format!(
            "conv weight {ws:?} does not fit input {xs:?}"
        )));
    }
    Ok((xs[0], xs[1], [xs[2], xs[3], xs[4]], ws[0]))
}

/// 3×3×3, stride 1, zero padding 1 cross-correlation.
pub fn conv3d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, cin, d, cout) = conv_dims(x, w)?;
    if b.shape() != [cout] {
        return Err(Error::invalid_input(
            "conv bias must have one entry per output channel",
        ));
    }
    let y = kernels::conv3d(x.data(), batch, cin, d, w.data(), b.data(), cout);
    Tensor::new(vec![batch, cout, d[0], d[1], d[2]], y)
}

/// Returns `(grad_x, grad_w, grad_b)` for [`conv3d_forward`].
pub fn conv3d_backward(
    grad_out: &Tensor,
    x: &Tensor,
    w: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, cin, d, cout) = conv_dims(x, w)?;
    if grad_out.shape() != [batch, cout, d[0], d[1], d[2]] {
        return Err(Error::invalid_input(
            "conv output gradient has the wrong shape",
        ));
    }
    let (gx, gw, gb) = kernels::conv3d_backward(
        grad_out.data(),
        x.data(),
        batch,
        cin,
        d,
        w.data(),
        cout,
        true,
    );
    Ok((
        Tensor::new(x.shape().to_vec(), gx)?,
        Tensor::new(w.shape().to_vec(), gw)?,
        Tensor::new(vec![cout], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(vec![2, 1, 3, 4, 5], &mut rng);
        let mut w = Tensor::zeros(vec![1, 1, 3, 3, 3]);
        w.data_mut()[13] = 1.0;
        let y = conv3d_forward(&x, &w, &Tensor::zeros(vec![1])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::new(vec![1, 1, 5, 5, 5], vec![0.5; 125]).unwrap();
        let w = Tensor::new(vec![1, 1, 3, 3, 3], vec![1.0; 27]).unwrap();
        let y = conv3d_forward(&x, &w, &Tensor::zeros(vec![1])).unwrap();
        for z in 1..4 {
            for yy in 1..4 {
                for xx in 1..4 {
                    assert!((y.data()[(z * 5 + yy) * 5 + xx] - 13.5).abs() < 1e-12);
                }
            }
        }
        // corner sees 8 of the 27 taps
        assert!((y.data()[0] - 4.0).abs() < 1e-12);
    }

    /// Six-nested-loop reference.
    fn reference(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let s = x.shape();
        let (cin, d, h, wd) = (s[1], s[2] as isize, s[3] as isize, s[4] as isize);
        let cout = w.shape()[0];
        let mut out = Vec::new();
        for co in 0..cout {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for kz in 0..3isize {
                                for ky in 0..3isize {
                                    for kx in 0..3isize {
                                        let (sz, sy, sx) = (z + kz - 1, y + ky - 1, xx + kx - 1);
                                        if sz < 0
                                            || sy < 0
                                            || sx < 0
                                            || sz >= d
                                            || sy >= h
                                            || sx >= wd
                                        {
                                            continue;
                                        }
                                        let xi = ((ci as isize * d + sz) * h + sy) * wd + sx;
                                        let wi =
                                            (co * cin + ci) * 27 + (kz * 9 + ky * 3 + kx) as usize;
                                        acc += w.data()[wi] * x.data()[xi as usize];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(vec![1, 2, 4, 4, 4], &mut rng);
        let w = random(vec![3, 2, 3, 3, 3], &mut rng);
        let b = random(vec![3], &mut rng);
        let y = conv3d_forward(&x, &w, &b).unwrap();
        for (a, r) in y.data().iter().zip(reference(&x, &w, &b)) {
            assert!((a - r).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(vec![2, 2, 3, 4, 2], &mut rng);
        let w = random(vec![3, 2, 3, 3, 3], &mut rng);
        let zero = Tensor::zeros(vec![2, 3, 3, 4, 2]);
        let (gx, gw, gb) = conv3d_backward(&zero, &x, &w).unwrap();
        assert!(gx
            .data()
            .iter()
            .chain(gw.data())
            .chain(gb.data())
            .all(|&v| v == 0.0));
        let go = random(vec![2, 3, 3, 4, 2], &mut rng);
        let (_, _, gb) = conv3d_backward(&go, &x, &w).unwrap();
        for c in 0..3 {
            let want: f64 = (0..2)
                .map(|b| {
                    go.data()[(b * 3 + c) * 24..(b * 3 + c + 1) * 24]
                        .iter()
                        .sum::<f64>()
                })
                .sum();
            assert!((gb.data()[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Tensor::zeros(vec![1, 2, 4, 4, 4]);
        let w = Tensor::zeros(vec![1, 3, 3, 3, 3]);
        assert!(conv3d_forward(&x, &w, &Tensor::zeros(vec![1])).is_err());
    }
}
