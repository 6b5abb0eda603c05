use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kernels;
use super::params::{Init, ParamLayout};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Largest number of bottleneck positions attention is allowed to cover.
pub const MAX_ATTENTION_POSITIONS: usize = 8 * 8 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// ε-predictor with time conditioning; output shape equals input shape.
    Denoiser,
    /// Coarse-to-detail regressor; output is 2× the input per axis.
    Detail,
}

/// Architecture descriptor stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub kind: NetKind,
    /// Channels per resolution stage, finest first.
    pub widths: Vec<usize>,
    pub convs_per_block: usize,
    /// Width of the step encoding and its MLP (denoiser only).
    pub embed_dim: usize,
    /// Extra convolutions after the 2× head (detail only).
    pub head_convs: usize,
}

impl ArchConfig {
    pub fn denoiser(widths: Vec<usize>) -> ArchConfig {
        ArchConfig {
            kind: NetKind::Denoiser,
            widths,
            convs_per_block: 2,
            embed_dim: 32,
            head_convs: 0,
        }
    }

    pub fn detail(widths: Vec<usize>) -> ArchConfig {
        ArchConfig {
            kind: NetKind::Detail,
            widths,
            convs_per_block: 2,
            embed_dim: 0,
            head_convs: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::invalid_config("every stage needs a positive width"));
        }
        if self.convs_per_block == 0 {
            return Err(Error::invalid_config(
                "blocks need at least one convolution",
            ));
        }
        if self.kind == NetKind::Denoiser && (self.embed_dim < 2 || self.embed_dim % 2 != 0) {
            return Err(Error::invalid_config(
                "denoiser embedding width must be even and >= 2",
            ));
        }
        Ok(())
    }

    fn stages(&self) -> usize {
        self.widths.len()
    }

    /// Checks that a cubic input of side `n` fits the stage plan.
    pub fn check_resolution(&self, n: usize) -> Result<()> {
        let down = 1usize << (self.stages() - 1);
        if n == 0 || n % down != 0 {
            return Err(Error::invalid_config(format!(
                "resolution {n} is not divisible by 2^{} for {} stages",
                self.stages() - 1,
                self.stages()
            )));
        }
        let side = n / down;
        if side * side * side > MAX_ATTENTION_POSITIONS {
            return Err(Error::invalid_config(format!(
                "bottleneck {side}^3 exceeds 8^3 attention positions at resolution {n}; add encoder stages"
            )));
        }
        Ok(())
    }
}

/// Parameter layout and initializers for an architecture, in declaration
/// order.
fn build_layout(arch: &ArchConfig) -> (ParamLayout, Vec<Init>) {
    struct B {
        layout: ParamLayout,
        inits: Vec<Init>,
    }
    impl B {
        fn block(&mut self, name: String, shape: Vec<usize>, init: Init) {
            self.layout.declare(name, shape);
            self.inits.push(init);
        }
        fn conv(&mut self, name: &str, cin: usize, cout: usize, zero: bool) {
            let init = if zero {
                Init::Zeros
            } else {
                Init::FanIn {
                    fan_in: cin * 27,
                    gain: 2.0,
                }
            };
            self.block(format!("{name}.w"), vec![cout, cin, 3, 3, 3], init);
            self.block(format!("{name}.b"), vec![cout], Init::Zeros);
        }
        fn linear(&mut self, name: &str, fin: usize, fout: usize) {
            self.block(
                format!("{name}.w"),
                vec![fout, fin],
                Init::FanIn {
                    fan_in: fin,
                    gain: 1.0,
                },
            );
            self.block(format!("{name}.b"), vec![fout], Init::Zeros);
        }
    }
    let mut b = B {
        layout: ParamLayout::default(),
        inits: Vec::new(),
    };
    let w = &arch.widths;
    let timed = arch.kind == NetKind::Denoiser;
    let e = arch.embed_dim;
    if timed {
        b.linear("time.0", e, e);
        b.linear("time.1", e, e);
    }
    b.conv("in", 1, w[0], false);
    for l in 0..arch.stages() {
        let cin = if l == 0 { w[0] } else { w[l - 1] };
        for c in 0..arch.convs_per_block {
            b.conv(
                &format!("enc{l}.conv{c}"),
                if c == 0 { cin } else { w[l] },
                w[l],
                false,
            );
        }
        if timed {
            b.linear(&format!("enc{l}.time"), e, w[l]);
        }
    }
    let c = w[arch.stages() - 1];
    for (i, p) in ["q", "k", "v", "o"].iter().enumerate() {
        // zero value projection: the residual block is the identity at init
        let init = if i == 2 {
            Init::Zeros
        } else {
            Init::FanIn {
                fan_in: c,
                gain: 1.0,
            }
        };
        b.block(format!("mid.{p}.w"), vec![c, c], init);
        b.block(format!("mid.{p}.b"), vec![c], Init::Zeros);
    }
    for l in (0..arch.stages() - 1).rev() {
        b.conv(&format!("up{l}"), w[l + 1], w[l], false);
        for c in 0..arch.convs_per_block {
            b.conv(
                &format!("dec{l}.conv{c}"),
                if c == 0 { 2 * w[l] } else { w[l] },
                w[l],
                false,
            );
        }
        if timed {
            b.linear(&format!("dec{l}.time"), e, w[l]);
        }
    }
    if arch.kind == NetKind::Detail {
        for c in 0..arch.head_convs {
            b.conv(&format!("head{c}"), w[0], w[0], false);
        }
    }
    b.conv("out", w[0], 1, true);
    (b.layout, b.inits)
}

/// A U-Net with bottleneck self-attention. Parameters live in one flat
/// vector described by [`Network::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl Network {
    /// Fresh network with seeded random initialization.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Network> {
        arch.validate()?;
        let (layout, inits) = build_layout(&arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout.initialize(&inits, &mut rng);
        Ok(Network {
            arch,
            layout,
            params,
        })
    }

    pub fn from_params(arch: ArchConfig, params: Vec<f64>) -> Result<Network> {
        arch.validate()?;
        let (layout, _) = build_layout(&arch);
        if layout.total() != params.len() {
            return Err(Error::Incompatible {
                expected: format!("{} parameters", layout.total()),
                found: format!("{} parameters", params.len()),
            });
        }
        Ok(Network {
            arch,
            layout,
            params,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn p(&self, tape: &mut Tape, name: &str) -> NodeId {
        let spec = self.layout.get(name);
        tape.param(&self.params, spec.offset, spec.shape.clone())
    }

    fn conv(&self, tape: &mut Tape, x: NodeId, name: &str) -> Result<NodeId> {
        let w = self.p(tape, &format!("{name}.w"));
        let b = self.p(tape, &format!("{name}.b"));
        tape.conv3d(x, w, b)
    }

    fn linear(&self, tape: &mut Tape, x: NodeId, name: &str) -> Result<NodeId> {
        let w = self.p(tape, &format!("{name}.w"));
        let b = self.p(tape, &format!("{name}.b"));
        tape.linear(x, w, b)
    }

    /// Convolutions of one stage; the first is followed by the step bias.
    fn block(
        &self,
        tape: &mut Tape,
        mut h: NodeId,
        name: &str,
        time: Option<NodeId>,
    ) -> Result<NodeId> {
        for c in 0..self.arch.convs_per_block {
            h = self.conv(tape, h, &format!("{name}.conv{c}"))?;
            if c == 0 {
                if let Some(e) = time {
                    let bias = self.linear(tape, e, &format!("{name}.time"))?;
                    h = tape.channel_bias(h, bias)?;
                }
            }
            h = tape.silu(h);
        }
        Ok(h)
    }

    /// `silu(MLP(sinusoid(t)))` for each step in the batch, shape `[B, E]`.
    fn embed_steps(&self, tape: &mut Tape, ts: &[usize]) -> Result<NodeId> {
        let e = self.arch.embed_dim;
        let mut pe = Vec::with_capacity(ts.len() * e);
        for &t in ts {
            if t == 0 {
                return Err(Error::invalid_input("diffusion steps start at 1"));
            }
            pe.extend(kernels::sinusoidal(t as f64, e));
        }
        let x = tape.input(Tensor::new(vec![ts.len(), e], pe)?, false);
        let h = self.linear(tape, x, "time.0")?;
        let h = tape.silu(h);
        let h = self.linear(tape, h, "time.1")?;
        Ok(tape.silu(h))
    }

    /// Step embedding `SiLU(MLP(sinusoid(t)))` before the conditioning
    /// projections; `[E]`.
    pub fn time_embedding(&self, t: usize) -> Result<Tensor> {
        if self.arch.kind != NetKind::Denoiser {
            return Err(Error::invalid_config(
                "only the denoiser has a step embedding",
            ));
        }
        let mut tape = Tape::new();
        let e = self.embed_steps(&mut tape, &[t])?;
        let v = tape.value(e);
        Tensor::new(vec![self.arch.embed_dim], v.data().to_vec())
    }

    /// Records the forward pass on `tape`. `x` must be `[B, 1, n, n, n]`;
    /// `steps` holds one step per batch item for the denoiser.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        x: NodeId,
        steps: Option<&[usize]>,
    ) -> Result<NodeId> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 5 || shape[1] != 1 || shape[2] != shape[3] || shape[3] != shape[4] {
            return Err(Error::invalid_input(format!(
                "network input must be [B, 1, n, n, n], got {shape:?}"
            )));
        }
        self.arch.check_resolution(shape[2])?;
        let time = match self.arch.kind {
            NetKind::Denoiser => {
                let ts =
                    steps.ok_or_else(|| Error::invalid_input("denoiser needs diffusion steps"))?;
                if ts.len() != shape[0] {
                    return Err(Error::invalid_input(
                        "one diffusion step per batch item required",
                    ));
                }
                Some(self.embed_steps(tape, ts)?)
            }
            NetKind::Detail => None,
        };
        let stages = self.arch.stages();
        let mut h = self.conv(tape, x, "in")?;
        let mut skips = Vec::new();
        for l in 0..stages {
            h = self.block(tape, h, &format!("enc{l}"), time)?;
            if l + 1 < stages {
                skips.push(h);
                h = tape.avg_pool2(h)?;
            }
        }
        let attn: Vec<NodeId> = ["q", "k", "v", "o"]
            .iter()
            .flat_map(|p| [format!("mid.{p}.w"), format!("mid.{p}.b")])
            .map(|name| self.p(tape, &name))
            .collect();
        h = tape.attention(h, attn.try_into().unwrap())?;
        for l in (0..stages - 1).rev() {
            h = tape.upsample2(h)?;
            h = self.conv(tape, h, &format!("up{l}"))?;
            h = tape.concat(h, skips[l])?;
            h = self.block(tape, h, &format!("dec{l}"), time)?;
        }
        if self.arch.kind == NetKind::Detail {
            h = tape.upsample2(h)?;
            for c in 0..self.arch.head_convs {
                h = self.conv(tape, h, &format!("head{c}"))?;
                h = tape.silu(h);
            }
        }
        self.conv(tape, h, "out")
    }

    pub fn forward(&self, x: &Tensor, steps: Option<&[usize]>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.input(x.clone(), false);
        let out = self.forward_on(&mut tape, input, steps)?;
        let y = tape.value(out).clone();
        if !y.is_finite() {
            return Err(Error::Numerical(
                "network produced non-finite values".into(),
            ));
        }
        Ok(y)
    }
}

/// ε-predictor network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet(pub Network);

/// Coarse-to-detail regression network.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailNet(pub Network);

impl DenoiserNet {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        if arch.kind != NetKind::Denoiser {
            return Err(Error::invalid_config("denoiser architecture expected"));
        }
        Network::new(arch, seed).map(DenoiserNet)
    }

    /// Batched prediction on `[B, 1, n, n, n]`.
    pub fn predict(&self, x: &Tensor, steps: &[usize]) -> Result<Tensor> {
        self.0.forward(x, Some(steps))
    }
}

impl DetailNet {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        if arch.kind != NetKind::Detail {
            return Err(Error::invalid_config("detail architecture expected"));
        }
        Network::new(arch, seed).map(DetailNet)
    }

    /// `[B, 1, n, n, n]` → `[B, 1, 2n, 2n, 2n]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.0.forward(x, None)
    }
}
