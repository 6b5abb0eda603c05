//! Central finite-difference checks of every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavediff_core::nn::{ArchConfig, Network, NodeId, Tape, Tensor};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Evaluates `Σ r·f(inputs)` and checks its gradient with respect to up to
/// `probes` entries of every input.
fn check(
    inputs: Vec<Tensor>,
    probes: usize,
    seed: u64,
    f: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = ins.iter().map(|t| tape.input(t.clone(), true)).collect();
        let out = f(&mut tape, &ids);
        (tape, ids, out)
    };
    let (mut tape, ids, out) = run(&inputs);
    let r: Vec<f64> = (0..tape.value(out).len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let loss = |t: &Tape, o: NodeId| {
        t.value(o)
            .data()
            .iter()
            .zip(&r)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    tape.backward(out, r.clone()).unwrap();
    let mut worst: f64 = 0.0;
    for (k, &id) in ids.iter().enumerate() {
        let analytic = tape.grad(id).expect("input reached by backward").to_vec();
        for _ in 0..probes.min(inputs[k].len()) {
            let i = rng.random_range(0..inputs[k].len());
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= H;
            let (tp, _, op) = run(&plus);
            let (tm, _, om) = run(&minus);
            let numeric = (loss(&tp, op) - loss(&tm, om)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

#[test]
fn conv3d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = vec![
        random(&[2, 2, 3, 4, 3], &mut rng),
        random(&[3, 2, 3, 3, 3], &mut rng),
        random(&[3], &mut rng),
    ];
    let e = check(ins, 50, 11, |t, i| t.conv3d(i[0], i[1], i[2]).unwrap());
    assert!(e <= TOL, "conv3d rel err {e}");
}

#[test]
fn linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ins = vec![
        random(&[3, 5], &mut rng),
        random(&[4, 5], &mut rng),
        random(&[4], &mut rng),
    ];
    let e = check(ins, 50, 12, |t, i| t.linear(i[0], i[1], i[2]).unwrap());
    assert!(e <= TOL, "linear rel err {e}");
}

#[test]
fn silu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = check(vec![random(&[40], &mut rng)], 40, 13, |t, i| t.silu(i[0]));
    assert!(e <= TOL, "silu rel err {e}");
}

#[test]
fn pooling_upsampling_concat_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = check(vec![random(&[2, 2, 4, 4, 2], &mut rng)], 50, 14, |t, i| {
        t.avg_pool2(i[0]).unwrap()
    });
    assert!(e <= TOL, "pool rel err {e}");
    let e = check(vec![random(&[1, 2, 2, 2, 2], &mut rng)], 16, 15, |t, i| {
        t.upsample2(i[0]).unwrap()
    });
    assert!(e <= TOL, "upsample rel err {e}");
    let ins = vec![
        random(&[2, 1, 2, 2, 2], &mut rng),
        random(&[2, 3, 2, 2, 2], &mut rng),
    ];
    let e = check(ins, 30, 16, |t, i| t.concat(i[0], i[1]).unwrap());
    assert!(e <= TOL, "concat rel err {e}");
    let ins = vec![
        random(&[2, 3, 2, 2, 2], &mut rng),
        random(&[2, 3], &mut rng),
    ];
    let e = check(ins, 30, 17, |t, i| t.channel_bias(i[0], i[1]).unwrap());
    assert!(e <= TOL, "channel bias rel err {e}");
    let ins = vec![random(&[6], &mut rng), random(&[6], &mut rng)];
    let e = check(ins, 6, 18, |t, i| t.add(i[0], i[1]).unwrap());
    assert!(e <= TOL, "add rel err {e}");
}

#[test]
fn attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = 3;
    let mut ins = vec![random(&[2, c, 2, 2, 2], &mut rng)];
    for _ in 0..4 {
        ins.push(random(&[c, c], &mut rng));
        ins.push(random(&[c], &mut rng));
    }
    let e = check(ins, 50, 19, |t, i| {
        t.attention(i[0], [i[1], i[2], i[3], i[4], i[5], i[6], i[7], i[8]])
            .unwrap()
    });
    assert!(e <= TOL, "attention rel err {e}");
}

#[test]
fn attention_zero_value_is_identity_and_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = 2;
    let x = random(&[1, c, 2, 2, 2], &mut rng);
    let mut p: Vec<Tensor> = (0..8)
        .map(|i| random(&if i % 2 == 0 { vec![c, c] } else { vec![c] }, &mut rng))
        .collect();
    let apply = |x: &Tensor, p: &[Tensor]| {
        let mut t = Tape::new();
        let xi = t.input(x.clone(), false);
        let ids: Vec<NodeId> = p.iter().map(|q| t.input(q.clone(), false)).collect();
        let o = t.attention(xi, ids.try_into().unwrap()).unwrap();
        t.value(o).data().to_vec()
    };
    // permute the 8 positions
    let perm = [3, 7, 0, 5, 1, 6, 2, 4];
    let permute = |v: &[f64]| -> Vec<f64> {
        (0..c)
            .flat_map(|ch| perm.iter().map(move |&j| v[ch * 8 + j]))
            .collect()
    };
    let px = Tensor::new(x.shape().to_vec(), permute(x.data())).unwrap();
    let y = apply(&x, &p);
    let py = apply(&px, &p);
    for (a, b) in permute(&y).iter().zip(&py) {
        assert!((a - b).abs() < 1e-12);
    }
    p[4] = Tensor::zeros(vec![c, c]);
    p[5] = Tensor::zeros(vec![c]);
    p[7] = Tensor::zeros(vec![c]);
    assert_eq!(apply(&x, &p), x.data());
}

/// Randomizes every parameter so no zero-initialized block hides a path.
fn perturbed(arch: ArchConfig, seed: u64) -> Network {
    let net = Network::new(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let params = net
        .params()
        .iter()
        .map(|p| p + rng.random_range(-0.3..0.3))
        .collect();
    Network::from_params(net.arch().clone(), params).unwrap()
}

/// Checks 50 random parameters of a whole network under an MSE loss.
fn network_check(net: &Network, x: &Tensor, steps: Option<&[usize]>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_of = |net: &Network| {
        let y = net.forward(x, steps).unwrap();
        y.data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (i as f64 * 0.1).sin()).powi(2))
            .sum::<f64>()
    };
    let mut tape = Tape::new();
    let xi = tape.input(x.clone(), false);
    let out = net.forward_on(&mut tape, xi, steps).unwrap();
    let seed_grad = tape
        .value(out)
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| 2.0 * (v - (i as f64 * 0.1).sin()))
        .collect();
    tape.backward(out, seed_grad).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    tape.accumulate_param_grads(&mut grads);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let i = rng.random_range(0..net.param_count());
        let mut plus = net.clone();
        plus.params_mut()[i] += H;
        let mut minus = net.clone();
        minus.params_mut()[i] -= H;
        let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * H);
        worst = worst.max(rel_err(grads[i], numeric));
    }
    worst
}

#[test]
fn denoiser_network() {
    let net = perturbed(ArchConfig::denoiser(vec![2, 3]), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[2, 1, 4, 4, 4], &mut rng);
    let e = network_check(&net, &x, Some(&[3, 640]), 20);
    assert!(e <= TOL, "denoiser rel err {e}");
}

#[test]
fn time_embedding_mlp() {
    // probes only the step-MLP and conditioning projections
    let net = perturbed(ArchConfig::denoiser(vec![2, 3]), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random(&[1, 1, 4, 4, 4], &mut rng);
    let time_params: Vec<usize> = net
        .layout()
        .specs()
        .iter()
        .filter(|s| s.name.starts_with("time.") || s.name.contains(".time."))
        .flat_map(|s| s.offset..s.offset + s.len())
        .collect();
    let loss_of = |net: &Network| {
        net.forward(&x, Some(&[77]))
            .unwrap()
            .data()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
    };
    let mut tape = Tape::new();
    let xi = tape.input(x.clone(), false);
    let out = net.forward_on(&mut tape, xi, Some(&[77])).unwrap();
    let seed: Vec<f64> = tape.value(out).data().iter().map(|v| 2.0 * v).collect();
    tape.backward(out, seed).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    tape.accumulate_param_grads(&mut grads);
    for _ in 0..30 {
        let i = time_params[rng.random_range(0..time_params.len())];
        let mut plus = net.clone();
        plus.params_mut()[i] += H;
        let mut minus = net.clone();
        minus.params_mut()[i] -= H;
        let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * H);
        let e = rel_err(grads[i], numeric);
        assert!(e <= TOL, "time param {i}: {} vs {numeric}", grads[i]);
    }
}

#[test]
fn detail_network() {
    let net = perturbed(ArchConfig::detail(vec![2, 3]), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[1, 1, 4, 4, 4], &mut rng);
    let e = network_check(&net, &x, None, 21);
    assert!(e <= TOL, "detail rel err {e}");
}
