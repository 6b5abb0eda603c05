//! Reverse-mode autodiff over a linear record of tensor ops.

use crate::error::{Error, Result};

use super::kernels::{self, AttentionCache, Dims};
use super::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Silu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ChannelBias {
        x: NodeId,
        bias: NodeId,
    },
    AvgPool2 {
        x: NodeId,
    },
    Upsample2 {
        x: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Attention {
        x: NodeId,
        p: [NodeId; 8],
        caches: Vec<AttentionCache>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Offset of this leaf in a flat parameter vector.
    param_offset: Option<usize>,
}

/// Records ops as they execute; [`Tape::backward`] then fills gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn spatial(shape: &[usize]) -> Result<(usize, usize, Dims)> {
    if shape.len() != 5 {
        return Err(Error::invalid_input(format!(
            "expected [B, C, D, H, W], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], [shape[2], shape[3], shape[4]]))
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param_offset: None,
        });
        self.nodes.len() - 1
    }

    /// Constant input; set `requires_grad` to receive its gradient.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param_offset: None,
        });
        self.nodes.len() - 1
    }

    /// Trainable leaf backed by `params[offset..offset + shape.product()]`.
    pub fn param(&mut self, params: &[f64], offset: usize, shape: Vec<usize>) -> NodeId {
        let n: usize = shape.iter().product();
        let value =
            Tensor::new(shape, params[offset..offset + n].to_vec()).expect("slice matches shape");
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param_offset: Some(offset),
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id].value.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv3d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (batch, cin, d) = spatial(self.value(x).shape())?;
        let ws = self.value(w).shape();
        if ws.len() != 5 || ws[1] != cin || ws[2..] != [3, 3, 3] {
            return Err(Error::invalid_input(format!(
                "conv weight {ws:?} incompatible with {cin} input channels"
            )));
        }
        let cout = ws[0];
        if self.value(b).shape() != [cout] {
            return Err(Error::invalid_input(
                "conv bias must have one entry per output channel",
            ));
        }
        let y = kernels::conv3d(
            self.value(x).data(),
            batch,
            cin,
            d,
            self.value(w).data(),
            self.value(b).data(),
            cout,
        );
        let t = Tensor::new(vec![batch, cout, d[0], d[1], d[2]], y)?;
        Ok(self.push(t, Op::Conv3d { x, w, b }, &[x, w, b]))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] || self.value(b).shape() != [ws[0]] {
            return Err(Error::invalid_input(format!(
                "linear shapes {xs:?} x {ws:?} do not match"
            )));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[0]);
        let y = kernels::linear(
            self.value(x).data(),
            batch,
            fin,
            self.value(w).data(),
            self.value(b).data(),
            fout,
        );
        let t = Tensor::new(vec![batch, fout], y)?;
        Ok(self.push(t, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let t = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| kernels::silu(a)).collect(),
        )
        .unwrap();
        self.push(t, Op::Silu { x }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::invalid_input("add of differently shaped tensors"));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(p, q)| p + q)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add { a, b }, &[a, b]))
    }

    /// Adds `bias[b, c]` to every voxel of channel `c` in item `b`.
    pub fn channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (batch, c, d) = spatial(self.value(x).shape())?;
        if self.value(bias).shape() != [batch, c] {
            return Err(Error::invalid_input("channel bias must be [B, C]"));
        }
        let v = d[0] * d[1] * d[2];
        let bv = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(v)
            .zip(bv)
            .flat_map(|(plane, &s)| plane.iter().map(move |p| p + s))
            .collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push(t, Op::ChannelBias { x, bias }, &[x, bias]))
    }

    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (batch, c, d) = spatial(self.value(x).shape())?;
        if d.iter().any(|&s| s % 2 != 0) {
            return Err(Error::invalid_input(format!(
                "cannot pool odd spatial size {d:?}"
            )));
        }
        let y = kernels::avg_pool2(self.value(x).data(), batch * c, d);
        let t = Tensor::new(vec![batch, c, d[0] / 2, d[1] / 2, d[2] / 2], y)?;
        Ok(self.push(t, Op::AvgPool2 { x }, &[x]))
    }

    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId> {
        let (batch, c, d) = spatial(self.value(x).shape())?;
        let y = kernels::upsample2(self.value(x).data(), batch * c, d);
        let t = Tensor::new(vec![batch, c, d[0] * 2, d[1] * 2, d[2] * 2], y)?;
        Ok(self.push(t, Op::Upsample2 { x }, &[x]))
    }

    /// Channel concatenation `[B, Ca, ..] ++ [B, Cb, ..]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ba, ca, da) = spatial(self.value(a).shape())?;
        let (bb, cb, db) = spatial(self.value(b).shape())?;
        if ba != bb || da != db {
            return Err(Error::invalid_input("concat of mismatched tensors"));
        }
        let v = da[0] * da[1] * da[2];
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ba * (ca + cb) * v);
        for i in 0..ba {
            data.extend_from_slice(&xa[i * ca * v..(i + 1) * ca * v]);
            data.extend_from_slice(&xb[i * cb * v..(i + 1) * cb * v]);
        }
        let t = Tensor::new(vec![ba, ca + cb, da[0], da[1], da[2]], data)?;
        Ok(self.push(t, Op::Concat { a, b }, &[a, b]))
    }

    /// Residual self-attention over spatial positions. `p` holds
    /// `[wq, bq, wk, bk, wv, bv, wo, bo]` with `w: [C, C]`, `b: [C]`.
    pub fn attention(&mut self, x: NodeId, p: [NodeId; 8]) -> Result<NodeId> {
        let (batch, c, d) = spatial(self.value(x).shape())?;
        for (i, &id) in p.iter().enumerate() {
            let want: &[usize] = if i % 2 == 0 { &[c, c] } else { &[c] };
            if self.value(id).shape() != want {
                return Err(Error::invalid_input("attention projection shape mismatch"));
            }
        }
        let n = d[0] * d[1] * d[2];
        let params: Vec<&[f64]> = p.iter().map(|&id| self.value(id).data()).collect();
        let params: [&[f64]; 8] = params.try_into().unwrap();
        let xs = self.value(x).data();
        let mut data = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(batch);
        for item in xs.chunks(c * n) {
            let (y, cache) = kernels::attention(item, c, n, params);
            data.extend(y);
            caches.push(cache);
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        let mut inputs = vec![x];
        inputs.extend(p);
        Ok(self.push(t, Op::Attention { x, p, caches }, &inputs))
    }

    /// Back-propagates `seed` (the gradient of a scalar loss with respect to
    /// node `out`) through every recorded op.
    pub fn backward(&mut self, out: NodeId, seed: Vec<f64>) -> Result<()> {
        if seed.len() != self.value(out).len() {
            return Err(Error::invalid_input(
                "gradient seed does not match output size",
            ));
        }
        self.nodes[out].value.accumulate_grad(&seed);
        for id in (0..=out).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].value.grad.take() else {
                continue;
            };
            let contributions = self.local_backward(id, &g);
            self.nodes[id].value.grad = Some(g);
            for (target, grad) in contributions {
                if self.nodes[target].requires_grad {
                    self.nodes[target].value.accumulate_grad(&grad);
                }
            }
        }
        Ok(())
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    fn local_backward(&self, id: NodeId, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        match &self.nodes[id].op {
            Op::Leaf => Vec::new(),
            &Op::Conv3d { x, w, b } => {
                let (batch, cin, d) = spatial(self.value(x).shape()).unwrap();
                let cout = self.value(w).shape()[0];
                let (gx, gw, gb) = kernels::conv3d_backward(
                    g,
                    self.value(x).data(),
                    batch,
                    cin,
                    d,
                    self.value(w).data(),
                    cout,
                    self.needs(x),
                );
                let mut out = vec![(w, gw), (b, gb)];
                if self.needs(x) {
                    out.push((x, gx));
                }
                out
            }
            &Op::Linear { x, w, b } => {
                let xs = self.value(x).shape();
                let fout = self.value(w).shape()[0];
                let (gx, gw, gb) = kernels::linear_backward(
                    g,
                    self.value(x).data(),
                    xs[0],
                    xs[1],
                    self.value(w).data(),
                    fout,
                );
                vec![(x, gx), (w, gw), (b, gb)]
            }
            &Op::Silu { x } => {
                let gx = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&a, gi)| gi * kernels::silu_grad(a))
                    .collect();
                vec![(x, gx)]
            }
            &Op::Add { a, b } => vec![(a, g.to_vec()), (b, g.to_vec())],
            &Op::ChannelBias { x, bias } => {
                let (_, _, d) = spatial(self.value(x).shape()).unwrap();
                let v = d[0] * d[1] * d[2];
                let gb = g.chunks(v).map(|plane| plane.iter().sum()).collect();
                vec![(x, g.to_vec()), (bias, gb)]
            }
            &Op::AvgPool2 { x } => {
                let (batch, c, d) = spatial(self.value(x).shape()).unwrap();
                vec![(x, kernels::avg_pool2_backward(g, batch * c, d))]
            }
            &Op::Upsample2 { x } => {
                let (batch, c, d) = spatial(self.value(x).shape()).unwrap();
                vec![(x, kernels::upsample2_backward(g, batch * c, d))]
            }
            &Op::Concat { a, b } => {
                let (batch, ca, d) = spatial(self.value(a).shape()).unwrap();
                let cb = self.value(b).shape()[1];
                let v = d[0] * d[1] * d[2];
                let (mut ga, mut gb) = (
                    Vec::with_capacity(batch * ca * v),
                    Vec::with_capacity(batch * cb * v),
                );
                for item in g.chunks((ca + cb) * v) {
                    ga.extend_from_slice(&item[..ca * v]);
                    gb.extend_from_slice(&item[ca * v..]);
                }
                vec![(a, ga), (b, gb)]
            }
            Op::Attention { x, p, caches } => {
                let (_, c, d) = spatial(self.value(*x).shape()).unwrap();
                let n = d[0] * d[1] * d[2];
                let params: Vec<&[f64]> = p.iter().map(|&id| self.value(id).data()).collect();
                let params: [&[f64]; 8] = params.try_into().unwrap();
                let mut gx = Vec::with_capacity(g.len());
                let mut gp: [Vec<f64>; 8] =
                    std::array::from_fn(|i| vec![0.0; self.value(p[i]).len()]);
                for ((gi, xi), cache) in g
                    .chunks(c * n)
                    .zip(self.value(*x).data().chunks(c * n))
                    .zip(caches)
                {
                    let (gxi, gpi) = kernels::attention_backward(gi, xi, c, n, params, cache);
                    gx.extend(gxi);
                    for (acc, part) in gp.iter_mut().zip(gpi) {
                        acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
                    }
                }
                let mut out = vec![(*x, gx)];
                out.extend(p.iter().copied().zip(gp));
                out
            }
        }
    }

    /// Adds every parameter leaf's gradient into `grads` at its offset.
    pub fn accumulate_param_grads(&self, grads: &mut [f64]) {
        for node in &self.nodes {
            if let (Some(off), Some(g)) = (node.param_offset, &node.value.grad) {
                grads[off..off + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, b)| *a += b);
            }
        }
    }
}
