//! Raw forward/backward kernels on row-major slices.

/// `c = beta·c + op(a)·op(b)` with `op(a)` of size m×k and `op(b)` k×n.
/// `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial dims `[d, h, w]` of a volume tensor.
pub(crate) type Dims = [usize; 3];

fn volume(d: Dims) -> usize {
    d[0] * d[1] * d[2]
}

/// Unfolds one `[c, d, h, w]` item into `[c·27, d·h·w]` columns for a
/// 3×3×3 kernel with zero padding 1. Kernel tap `kz·9 + ky·3 + kx` reads
/// offset `(kz−1, ky−1, kx−1)`.
fn im2col(x: &[f64], c: usize, d: Dims, col: &mut [f64]) {
    let v = volume(d);
    let [dd, hh, ww] = d;
    for ci in 0..c {
        let src = &x[ci * v..(ci + 1) * v];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = ci * 27 + kz * 9 + ky * 3 + kx;
                    let dst = &mut col[row * v..(row + 1) * v];
                    let (x_lo, x_hi) = (1usize.saturating_sub(kx), (ww + 1 - kx).min(ww));
                    for z in 0..dd {
                        let sz = z + kz;
                        for y in 0..hh {
                            let sy = y + ky;
                            let out = &mut dst[(z * hh + y) * ww..(z * hh + y + 1) * ww];
                            if sz == 0 || sz > dd || sy == 0 || sy > hh {
                                out.fill(0.0);
                                continue;
                            }
                            let base = ((sz - 1) * hh + (sy - 1)) * ww;
                            out[..x_lo].fill(0.0);
                            out[x_hi..].fill(0.0);
                            out[x_lo..x_hi]
                                .copy_from_slice(&src[base + x_lo + kx - 1..base + x_hi + kx - 1]);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `[c, d, h, w]`.
fn col2im(col: &[f64], c: usize, d: Dims, x: &mut [f64]) {
    let v = volume(d);
    let [dd, hh, ww] = d;
    for ci in 0..c {
        let dst = &mut x[ci * v..(ci + 1) * v];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = ci * 27 + kz * 9 + ky * 3 + kx;
                    let src = &col[row * v..(row + 1) * v];
                    let (x_lo, x_hi) = (1usize.saturating_sub(kx), (ww + 1 - kx).min(ww));
                    for z in 0..dd {
                        let sz = z + kz;
                        if sz == 0 || sz > dd {
                            continue;
                        }
                        for y in 0..hh {
                            let sy = y + ky;
                            if sy == 0 || sy > hh {
                                continue;
                            }
                            let base = ((sz - 1) * hh + (sy - 1)) * ww;
                            let row_src = &src[(z * hh + y) * ww + x_lo..(z * hh + y) * ww + x_hi];
                            let row_dst = &mut dst[base + x_lo + kx - 1..base + x_hi + kx - 1];
                            row_dst.iter_mut().zip(row_src).for_each(|(d, s)| *d += s);
                        }
                    }
                }
            }
        }
    }
}

/// Same-size 3×3×3 cross-correlation. `x: [b, cin, d]`, `w: [cout, cin, 27]`.
pub(crate) fn conv3d(
    x: &[f64],
    batch: usize,
    cin: usize,
    d: Dims,
    w: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let v = volume(d);
    let mut out = vec![0.0; batch * cout * v];
    let mut col = vec![0.0; cin * 27 * v];
    for b in 0..batch {
        im2col(&x[b * cin * v..(b + 1) * cin * v], cin, d, &mut col);
        let o = &mut out[b * cout * v..(b + 1) * cout * v];
        for (co, chunk) in o.chunks_mut(v).enumerate() {
            chunk.fill(bias[co]);
        }
        gemm(cout, cin * 27, v, w, false, &col, false, 1.0, o);
    }
    out
}

/// Gradients of [`conv3d`]; returns `(grad_x, grad_w, grad_b)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3d_backward(
    gout: &[f64],
    x: &[f64],
    batch: usize,
    cin: usize,
    d: Dims,
    w: &[f64],
    cout: usize,
    need_gx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let v = volume(d);
    let mut gx = if need_gx {
        vec![0.0; batch * cin * v]
    } else {
        Vec::new()
    };
    let mut gw = vec![0.0; cout * cin * 27];
    let mut gb = vec![0.0; cout];
    let mut col = vec![0.0; cin * 27 * v];
    for b in 0..batch {
        let go = &gout[b * cout * v..(b + 1) * cout * v];
        for (co, chunk) in go.chunks(v).enumerate() {
            gb[co] += chunk.iter().sum::<f64>();
        }
        im2col(&x[b * cin * v..(b + 1) * cin * v], cin, d, &mut col);
        gemm(cout, v, cin * 27, go, false, &col, true, 1.0, &mut gw);
        if need_gx {
            gemm(cin * 27, cout, v, w, true, go, false, 0.0, &mut col);
            col2im(&col, cin, d, &mut gx[b * cin * v..(b + 1) * cin * v]);
        }
    }
    (gx, gw, gb)
}

/// `y[b, o] = Σ_i w[o, i] x[b, i] + bias[o]`.
pub(crate) fn linear(
    x: &[f64],
    batch: usize,
    fin: usize,
    w: &[f64],
    bias: &[f64],
    fout: usize,
) -> Vec<f64> {
    let mut y: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
    gemm(batch, fin, fout, x, false, w, true, 1.0, &mut y);
    y
}

pub(crate) fn linear_backward(
    gy: &[f64],
    x: &[f64],
    batch: usize,
    fin: usize,
    w: &[f64],
    fout: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; batch * fin];
    gemm(batch, fout, fin, gy, false, w, false, 0.0, &mut gx);
    let mut gw = vec![0.0; fout * fin];
    gemm(fout, batch, fin, gy, true, x, false, 0.0, &mut gw);
    let mut gb = vec![0.0; fout];
    for row in gy.chunks(fout) {
        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    (gx, gw, gb)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// 2×2×2 mean pooling over `[planes, d]`.
pub(crate) fn avg_pool2(x: &[f64], planes: usize, d: Dims) -> Vec<f64> {
    let o = [d[0] / 2, d[1] / 2, d[2] / 2];
    let (v, vo) = (volume(d), volume(o));
    let mut y = vec![0.0; planes * vo];
    for p in 0..planes {
        let src = &x[p * v..(p + 1) * v];
        let dst = &mut y[p * vo..(p + 1) * vo];
        for z in 0..d[0] {
            for yy in 0..d[1] {
                for xx in 0..d[2] {
                    dst[((z / 2) * o[1] + yy / 2) * o[2] + xx / 2] +=
                        src[(z * d[1] + yy) * d[2] + xx];
                }
            }
        }
    }
    y.iter_mut().for_each(|v| *v *= 0.125);
    y
}

pub(crate) fn avg_pool2_backward(gy: &[f64], planes: usize, d: Dims) -> Vec<f64> {
    let mut gx = upsample2(gy, planes, [d[0] / 2, d[1] / 2, d[2] / 2]);
    gx.iter_mut().for_each(|v| *v *= 0.125);
    gx
}

/// Nearest-neighbour 2× upsampling of `[planes, d]`.
pub(crate) fn upsample2(x: &[f64], planes: usize, d: Dims) -> Vec<f64> {
    let o = [d[0] * 2, d[1] * 2, d[2] * 2];
    let (v, vo) = (volume(d), volume(o));
    let mut y = vec![0.0; planes * vo];
    for p in 0..planes {
        let src = &x[p * v..(p + 1) * v];
        let dst = &mut y[p * vo..(p + 1) * vo];
        for z in 0..o[0] {
            for yy in 0..o[1] {
                for xx in 0..o[2] {
                    dst[(z * o[1] + yy) * o[2] + xx] =
                        src[((z / 2) * d[1] + yy / 2) * d[2] + xx / 2];
                }
            }
        }
    }
    y
}

pub(crate) fn upsample2_backward(gy: &[f64], planes: usize, d: Dims) -> Vec<f64> {
    let mut gx = avg_pool2(gy, planes, [d[0] * 2, d[1] * 2, d[2] * 2]);
    gx.iter_mut().for_each(|v| *v *= 8.0);
    gx
}

/// `[dim]` sinusoidal encoding of a step: `sin(t ω_i)` for the first half,
/// `cos(t ω_i)` for the second, `ω_i = 10000^(−i / (dim/2))`.
pub(crate) fn sinusoidal(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let w = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (t * w).sin();
        out[half + i] = (t * w).cos();
    }
    out
}

/// Saved activations of one attention item.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    o: Vec<f64>,
}

/// Projection weights `[wq, bq, wk, bk, wv, bv, wo, bo]`, each `w` `[c, c]`.
pub(crate) type AttentionParams<'a> = [&'a [f64]; 8];

fn project(w: &[f64], b: &[f64], x: &[f64], c: usize, n: usize) -> Vec<f64> {
    let mut y: Vec<f64> = b
        .iter()
        .flat_map(|&bi| std::iter::repeat_n(bi, n))
        .collect();
    gemm(c, c, n, w, false, x, false, 1.0, &mut y);
    y
}

/// Single-head self-attention over the `n` positions of one `[c, n]` item,
/// with residual: `y = x + Wo (V softmax(QᵀK/√c)ᵀ) + bo`.
pub(crate) fn attention(
    x: &[f64],
    c: usize,
    n: usize,
    p: AttentionParams,
) -> (Vec<f64>, AttentionCache) {
    let q = project(p[0], p[1], x, c, n);
    let k = project(p[2], p[3], x, c, n);
    let v = project(p[4], p[5], x, c, n);
    let mut a = vec![0.0; n * n];
    gemm(n, c, n, &q, true, &k, false, 0.0, &mut a);
    let scale = 1.0 / (c as f64).sqrt();
    for row in a.chunks_mut(n) {
        let m = row.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s * scale));
        let mut sum = 0.0;
        for s in row.iter_mut() {
            *s = (*s * scale - m).exp();
            sum += *s;
        }
        row.iter_mut().for_each(|s| *s /= sum);
    }
    let mut o = vec![0.0; c * n];
    gemm(c, n, n, &v, false, &a, true, 0.0, &mut o);
    let mut y = project(p[6], p[7], &o, c, n);
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += xi);
    (y, AttentionCache { q, k, v, a, o })
}

/// Gradients of [`attention`]: `grad_x` then the eight parameter grads in
/// the order of [`AttentionParams`].
pub(crate) fn attention_backward(
    gy: &[f64],
    x: &[f64],
    c: usize,
    n: usize,
    p: AttentionParams,
    cache: &AttentionCache,
) -> (Vec<f64>, [Vec<f64>; 8]) {
    let mut gx = gy.to_vec();
    let mut grads: [Vec<f64>; 8] =
        std::array::from_fn(|i| vec![0.0; if i % 2 == 0 { c * c } else { c }]);
    // output projection
    gemm(c, n, c, gy, false, &cache.o, true, 0.0, &mut grads[6]);
    row_sums(gy, n, &mut grads[7]);
    let mut go = vec![0.0; c * n];
    gemm(c, c, n, p[6], true, gy, false, 0.0, &mut go);
    // o = v aᵀ
    let mut gv = vec![0.0; c * n];
    gemm(c, n, n, &go, false, &cache.a, false, 0.0, &mut gv);
    let mut ga = vec![0.0; n * n];
    gemm(n, c, n, &go, true, &cache.v, false, 0.0, &mut ga);
    // softmax rows, then the 1/√c scale
    let scale = 1.0 / (c as f64).sqrt();
    for (g_row, a_row) in ga.chunks_mut(n).zip(cache.a.chunks(n)) {
        let dot: f64 = g_row.iter().zip(a_row).map(|(g, a)| g * a).sum();
        for (g, a) in g_row.iter_mut().zip(a_row) {
            *g = a * (*g - dot) * scale;
        }
    }
    let gs = ga;
    let mut gq = vec![0.0; c * n];
    gemm(c, n, n, &cache.k, false, &gs, true, 0.0, &mut gq);
    let mut gk = vec![0.0; c * n];
    gemm(c, n, n, &cache.q, false, &gs, false, 0.0, &mut gk);
    for (slot, g) in [(0, &gq), (2, &gk), (4, &gv)] {
        gemm(c, n, c, g, false, x, true, 0.0, &mut grads[slot]);
        row_sums(g, n, &mut grads[slot + 1]);
        gemm(c, c, n, p[slot], true, g, false, 1.0, &mut gx);
    }
    (gx, grads)
}

fn row_sums(m: &[f64], n: usize, out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks(n)) {
        *o = row.iter().sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [0.0; 4];
        gemm(2, 3, 2, &at, true, &bt, true, 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn pool_and_upsample_are_adjoint_up_to_scale() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let px = avg_pool2(&x, 1, [4, 4, 4]);
        let uy = upsample2(&y, 1, [2, 2, 2]);
        let lhs: f64 = px.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&uy).map(|(a, b)| a * b).sum::<f64>() / 8.0;
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
