mod common;

use arche_core::coder::encode_image;
use arche_core::entropy::{element_params, EntropyVariant};
use arche_core::model::{init_weights, is_anchor, ContextVariant, ModelConfig, ModelWeights, Net};
use arche_core::tensors::Var;
use arche_core::training::synthetic_image;
use common::{rng, uniform};

fn softsign(v: f64) -> f64 {
    v / (1.0 + v.abs())
}

#[test]
fn synthesis_of_analysis_keeps_the_input_shape() {
    let w = init_weights(&ModelConfig::desk(), 1).unwrap();
    let net = Net::new(&w, false);
    for (h, wd) in [(16, 16), (32, 48), (64, 16)] {
        let x = Var::constant(uniform(&[h, wd, 3], 0.0, 1.0, &mut rng(h as u64)));
        let y = net.analysis(&x).unwrap();
        assert_eq!(y.shape(), [h / 16, wd / 16, 64]);
        assert_eq!(net.synthesis(&y).unwrap().shape(), [h, wd, 3]);
    }
    let big = Var::constant(uniform(&[256, 256, 3], 0.0, 1.0, &mut rng(0)));
    assert_eq!(net.analysis(&big).unwrap().shape(), [16, 16, 64]);
    assert_eq!(ModelConfig::paper().latent_depth, 320);
}

/// `-log2 p` of every coded element recomputed on the full grid from the
/// decoded latent, as a product over slices and positions.
fn product_form_bits(w: &ModelWeights, latents: &arche_core::coder::Latents, h: usize, wd: usize) -> Vec<f64> {
    let net = Net::new(w, false);
    let cfg = &w.config;
    let prior = net.prior().unwrap();
    let hd = cfg.hyper_depth;
    let z_bits: f64 = latents.z_symbols.iter().enumerate().map(|(i, &s)| -prior.bin_mass(s, i % hd).log2()).sum();
    let hyper = net.hyper_synthesis(&Var::constant(latents.zhat.clone()), h, wd).unwrap();
    let mut per_slice = vec![z_bits];
    let mut refined = Vec::new();
    for (m, &width) in cfg.slice_widths.iter().enumerate() {
        let cond = net.conditioning(m, &hyper, &refined).unwrap();
        let st = net.slice_transform(m, &cond).unwrap();
        let yhat = Var::constant(latents.yhat[m].clone());
        let ctx = net.context_features(m, &yhat).unwrap().map(|c| {
            if cfg.context_variant == ContextVariant::Checkerboard {
                let cw = c.shape()[2];
                let mut t = c.value().clone();
                for p in 0..h * wd {
                    if is_anchor(p / wd, p % wd) {
                        t.data_mut()[p * cw..(p + 1) * cw].fill(0.0);
                    }
                }
                Var::constant(t)
            } else {
                c
            }
        });
        let raw = net.param_net(m, &st, ctx.as_ref()).unwrap();
        let pc = raw.shape()[2];
        let mut bits = 0.0;
        for p in 0..h * wd {
            let px = &raw.value().data()[p * pc..(p + 1) * pc];
            for c in 0..width {
                let ep = element_params(px, c, width, cfg.entropy).snapped().unwrap();
                bits -= ep.mass(latents.symbols[m][p * width + c]).log2();
            }
        }
        per_slice.push(bits);
        refined.push(net.lrp(m, &cond, &yhat).unwrap());
    }
    per_slice
}

#[test]
fn sequential_rate_equals_the_product_form() {
    let configs = [
        ModelConfig::desk(),
        ModelConfig { entropy: EntropyVariant::Gmm { k: 3 }, ..ModelConfig::desk() },
        ModelConfig::desk_checkerboard(),
        ModelConfig::desk().without_context(),
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let w = init_weights(cfg, 40 + i as u64).unwrap();
        let img = synthetic_image(48, 64, &mut rng(i as u64));
        let enc = encode_image(&w, &img.to_tensor(), None).unwrap();
        let seq = enc.latents.stats.rate_bits;
        let parts = product_form_bits(&w, &enc.latents, 3, 4);
        let forward: f64 = parts.iter().sum();
        let backward: f64 = parts.iter().rev().sum();
        assert!((forward - seq).abs() <= 1e-12 * seq, "config {i}: {forward} vs {seq}");
        assert!((forward - backward).abs() <= 1e-12 * seq);
        for (a, b) in parts.iter().zip(&enc.latents.stats.segment_bits) {
            assert!((a - b).abs() <= 1e-9 * seq.max(1.0), "config {i}: segment {a} vs {b}");
        }
    }
}

#[test]
fn lrp_correction_is_strictly_bounded() {
    let w = init_weights(&ModelConfig::desk(), 2).unwrap();
    let net = Net::new(&w, false);
    let cfg = &w.config;
    let mut r = rng(12);
    for m in 0..cfg.num_slices() {
        let width = cfg.slice_widths[m];
        let scale = w.params.get(&format!("slice{m}.lrp.scale")).unwrap().clone();
        for amp in [1.0, 1e2, 1e4] {
            let refs: Vec<Var> =
                (0..m).map(|k| Var::constant(uniform(&[2, 3, cfg.slice_widths[k]], -amp, amp, &mut r))).collect();
            let hyper = Var::constant(uniform(&[2, 3, cfg.hyper_features()], -amp, amp, &mut r));
            let cond = net.conditioning(m, &hyper, &refs).unwrap();
            let yhat = Var::constant(uniform(&[2, 3, width], -amp, amp, &mut r));
            let out = net.lrp(m, &cond, &yhat).unwrap();
            let residual = net.lrp_residual(m, &cond, &yhat).unwrap();
            for (i, (a, b)) in out.value().data().iter().zip(yhat.value().data()).enumerate() {
                let bound = scale.data()[0].abs();
                let correction = softsign(residual.value().data()[i]) * scale.data()[0];
                assert!(correction.abs() < bound);
                assert!((a - b - correction).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
            }
        }
    }
}
