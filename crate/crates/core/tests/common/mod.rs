#![allow(dead_code)]

use arche_core::entropy::{gaussian_likelihood, gmm_likelihood, softmax_weights, EntropyParams, EntropyVariant, FactorizedPrior};
use arche_core::layers::{gdn, masked_conv, se_block, GdnParams, MaskType, MaskedKernel, SeParams};
use arche_core::tensors::{Reduce, Tensor, Var};
use arche_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(lo..hi))
}

/// Uniform values in `[lo, hi]` with random sign, so `|x| >= lo`.
pub fn away_from_zero(shape: &[usize], lo: f64, hi: f64, r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v = r.gen_range(lo..hi);
        if r.gen::<bool>() {
            v
        } else {
            -v
        }
    })
}

/// Symmetric error between an analytic and a numeric derivative; `floor`
/// keeps near-zero derivatives from dividing by roundoff.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error over every input element of
/// `sum(f(inputs) * probe)` for a fixed random probe.
pub fn check_op(inputs: &[Tensor], f: &dyn Fn(&[Var]) -> Result<Var>, seed: u64) -> f64 {
    let leaves: Vec<Var> = inputs.iter().map(|t| Var::leaf(t.clone())).collect();
    let out = f(&leaves).expect("op evaluates");
    let mut r = rng(seed);
    let probe = uniform(out.shape(), -1.0, 1.0, &mut r);
    let loss = |out: &Var| out.value().dot(&probe);
    out.mul(&Var::constant(probe.clone())).unwrap().sum().backward().unwrap();
    let grads: Vec<Tensor> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| Tensor::zeros(l.shape())))
        .collect();
    let mut worst = 0.0f64;
    for (k, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let eval = |delta: f64| {
                let vars: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let mut s = s.clone();
                        if j == k {
                            s.data_mut()[i] += delta;
                        }
                        Var::constant(s)
                    })
                    .collect();
                loss(&f(&vars).unwrap())
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[k].data()[i], numeric, 1e-3));
        }
    }
    worst
}

pub type OpFn = Box<dyn Fn(&[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub f: OpFn,
}

fn case(name: &'static str, inputs: Vec<Tensor>, f: impl Fn(&[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase { name, inputs, f: Box::new(f) }
}

/// Every differentiable op and layer, on inputs kept away from kinks.
pub fn op_cases() -> Vec<OpCase> {
    let mut r = rng(7);
    let r = &mut r;
    let x = |r: &mut ChaCha8Rng| uniform(&[2, 3], -2.0, 2.0, r);
    let img = |r: &mut ChaCha8Rng, h, w, c| uniform(&[h, w, c], -1.0, 1.0, r);
    let mut v = vec![
        case("relu", vec![away_from_zero(&[2, 3], 0.1, 2.0, r)], |a| Ok(a[0].relu())),
        case("sigmoid", vec![x(r)], |a| Ok(a[0].sigmoid())),
        case("softsign", vec![x(r)], |a| Ok(a[0].softsign())),
        case("softplus", vec![x(r)], |a| Ok(a[0].softplus())),
        case("tanh", vec![x(r)], |a| Ok(a[0].tanh())),
        case("exp", vec![x(r)], |a| Ok(a[0].exp())),
        case("ln", vec![uniform(&[2, 3], 0.2, 3.0, r)], |a| Ok(a[0].ln())),
        case("abs", vec![away_from_zero(&[2, 3], 0.1, 2.0, r)], |a| Ok(a[0].abs())),
        case("square", vec![x(r)], |a| Ok(a[0].square())),
        case("sqrt", vec![uniform(&[2, 3], 0.2, 3.0, r)], |a| Ok(a[0].sqrt())),
        case("normal_cdf", vec![x(r)], |a| Ok(a[0].normal_cdf())),
        case("add", vec![x(r), x(r)], |a| a[0].add(&a[1])),
        case("sub", vec![x(r), x(r)], |a| a[0].sub(&a[1])),
        case("mul", vec![x(r), x(r)], |a| a[0].mul(&a[1])),
        case("div", vec![x(r), uniform(&[2, 3], 0.5, 2.0, r)], |a| a[0].div(&a[1])),
        case("mul_scalar_broadcast", vec![x(r), Tensor::scalar(0.7)], |a| a[0].mul(&a[1])),
        case("div_scalar_left", vec![Tensor::scalar(1.3), uniform(&[2, 3], 0.5, 2.0, r)], |a| a[0].div(&a[1])),
        case("affine", vec![x(r)], |a| Ok(a[0].affine(-1.5, 0.25))),
        case("clamp_min", vec![away_from_zero(&[2, 3], 0.1, 2.0, r)], |a| Ok(a[0].clamp_min(0.0))),
        case("reshape", vec![x(r)], |a| a[0].reshape(&[3, 2])),
        case("sum", vec![x(r)], |a| Ok(a[0].sum())),
        case("mean", vec![x(r)], |a| Ok(a[0].mean())),
        case("reduce_axis", vec![img(r, 2, 3, 4)], |a| a[0].reduce(Reduce::Sum, &[0, 2])),
        case("reduce_mean_axis", vec![img(r, 2, 3, 4)], |a| a[0].reduce(Reduce::Mean, &[1])),
        case("slice_flat", vec![x(r)], |a| a[0].slice_flat(1, 4)),
        case("matmul", vec![uniform(&[2, 3], -1.0, 1.0, r), uniform(&[3, 4], -1.0, 1.0, r)], |a| a[0].matmul(&a[1])),
        case("conv_s1", vec![img(r, 5, 4, 2), uniform(&[3, 3, 2, 3], -1.0, 1.0, r)], |a| a[0].conv2d(&a[1], 1, false)),
        case("conv_s2", vec![img(r, 6, 5, 2), uniform(&[5, 5, 2, 3], -1.0, 1.0, r)], |a| a[0].conv2d(&a[1], 2, false)),
        case("deconv_s2", vec![img(r, 3, 2, 3), uniform(&[5, 5, 2, 3], -1.0, 1.0, r)], |a| a[0].conv2d(&a[1], 2, true)),
        case("add_channels", vec![img(r, 2, 2, 3), uniform(&[3], -1.0, 1.0, r)], |a| a[0].add_channels(&a[1])),
        case("mul_channels", vec![img(r, 2, 2, 3), uniform(&[3], -1.0, 1.0, r)], |a| a[0].mul_channels(&a[1])),
        case("concat_channels", vec![img(r, 2, 2, 3), img(r, 2, 2, 2)], |a| Var::concat_channels(a)),
        case("slice_channels", vec![img(r, 2, 2, 5)], |a| a[0].slice_channels(1, 4)),
        case("crop", vec![img(r, 4, 5, 2)], |a| a[0].crop(3, 2)),
    ];
    let c = 4;
    let gdn_inputs = |r: &mut ChaCha8Rng| {
        vec![
            img(r, 3, 3, c),
            uniform(&[c], 0.5, 1.5, r),
            uniform(&[c, c], 0.0, 0.3, r),
        ]
    };
    v.push(case("gdn", gdn_inputs(r), |a| {
        gdn(&a[0], &GdnParams { beta: a[1].clone(), gamma: a[2].clone(), inverse: false })
    }));
    v.push(case("igdn", gdn_inputs(r), |a| {
        gdn(&a[0], &GdnParams { beta: a[1].clone(), gamma: a[2].clone(), inverse: true })
    }));
    for (name, mask) in [("masked_conv_a", MaskType::A), ("masked_conv_b", MaskType::B), ("masked_conv_cross", MaskType::Cross)] {
        v.push(case(name, vec![img(r, 4, 4, 2), uniform(&[3, 3, 2, 3], -1.0, 1.0, r)], move |a| {
            masked_conv(&a[0], &MaskedKernel { kernel: a[1].clone(), mask_type: mask })
        }));
    }
    v.push(case(
        "se_block",
        vec![img(r, 3, 3, 8), uniform(&[8, 2], -1.0, 1.0, r), uniform(&[2, 8], -1.0, 1.0, r)],
        |a| se_block(&a[0], &SeParams { w1: a[1].clone(), w2: a[2].clone() }),
    ));
    v.push(case(
        "gaussian_likelihood",
        vec![
            away_from_zero(&[2, 2, 3], 0.1, 2.0, r),
            Tensor::zeros(&[2, 2, 3]),
            uniform(&[2, 2, 3], 0.3, 2.0, r),
        ],
        |a| gaussian_likelihood(&a[0], &a[1], &a[2]),
    ));
    v.push(case(
        "gmm_likelihood",
        vec![
            away_from_zero(&[2, 2, 3], 1.6, 2.5, r),
            uniform(&[2, 2, 3], -1.0, 1.0, r),
            uniform(&[2, 2, 3], -1.0, 1.0, r),
            uniform(&[2, 2, 3], 0.3, 2.0, r),
            uniform(&[2, 2, 3], 0.3, 2.0, r),
            uniform(&[2, 2, 3], -1.0, 1.0, r),
            uniform(&[2, 2, 3], -1.0, 1.0, r),
        ],
        |a| {
            let w = softmax_weights(&a[5..7])?;
            gmm_likelihood(&a[0], &a[1..3], &a[3..5], &w)
        },
    ));
    v.push(case(
        "entropy_params_gmm",
        vec![uniform(&[2, 2, 9], -1.0, 1.0, r), uniform(&[2, 2, 1], 1.6, 2.5, r)],
        |a| EntropyParams::from_raw(&a[0], 1, EntropyVariant::Gmm { k: 3 })?.likelihood(&a[1]),
    ));
    let hd = 2;
    let mut prior_params: Vec<(String, Tensor)> = FactorizedPrior::init(hd, r);
    for (_, t) in prior_params.iter_mut() {
        *t = t.map(|v| v + 0.3);
    }
    let names: Vec<String> = prior_params.iter().map(|(n, _)| n.clone()).collect();
    let mut inputs = vec![uniform(&[3, hd], -2.0, 2.0, r)];
    inputs.extend(prior_params.into_iter().map(|(_, t)| t));
    v.push(case("factorized_prior", inputs, move |a| {
        let prior = FactorizedPrior::from_params(hd, |n| {
            let i = names.iter().position(|m| m == n).expect("known name");
            Ok(a[1 + i].clone())
        })?;
        prior.likelihood(&a[0])
    }));
    v
}
