use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::entropy::{rate_bits_var, EntropyParams, FactorizedPrior};
use crate::error::{Error, Result};
use crate::layers::{gdn, se_block, GdnParams, MaskType, MaskedKernel, SeParams};
use crate::model::{BoundParams, ContextVariant, ModelConfig, ModelWeights, ParamStore};
use crate::tensors::kernels::{conv_point, Geom};
use crate::tensors::{Tensor, Var};

/// Checkerboard anchors are the positions with even `i + j`.
pub fn is_anchor(i: usize, j: usize) -> bool {
    (i + j) % 2 == 0
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    /// `N(0, gain / fan_in)`; gain 2 ahead of a relu, 1 otherwise.
    fn normal(&mut self, name: String, shape: &[usize], fan_in: usize, gain: f64) -> Result<()> {
        let normal = Normal::new(0.0, (gain / fan_in.max(1) as f64).sqrt()).expect("positive std");
        let rng = &mut self.rng;
        self.store.insert(name, Tensor::from_fn(shape, |_| normal.sample(rng)))
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) -> Result<()> {
        self.normal(format!("{name}.w"), &[k, k, cin, cout], k * k * cin, 2.0)?;
        self.store.insert(format!("{name}.b"), Tensor::zeros(&[cout]))
    }

    fn linear(&mut self, name: &str, k: usize, cin: usize, cout: usize) -> Result<()> {
        self.normal(format!("{name}.w"), &[k, k, cin, cout], k * k * cin, 1.0)?;
        self.store.insert(format!("{name}.b"), Tensor::zeros(&[cout]))
    }

    /// Transposed conv from `cin` to `cout` channels; the kernel is stored in
    /// forward orientation `[k, k, cout, cin]`.
    fn deconv(&mut self, name: &str, k: usize, cin: usize, cout: usize, stride: usize) -> Result<()> {
        self.normal(format!("{name}.w"), &[k, k, cout, cin], k * k * cin / (stride * stride), 1.0)?;
        self.store.insert(format!("{name}.b"), Tensor::zeros(&[cout]))
    }

    fn gdn(&mut self, name: &str, c: usize) -> Result<()> {
        self.store.insert(format!("{name}.beta"), Tensor::full(&[c], 1.0))?;
        self.store.insert(
            format!("{name}.gamma"),
            Tensor::from_fn(&[c, c], |i| if i / c == i % c { 0.01 } else { 0.0 }),
        )
    }
}

/// Fresh weights for `cfg`, deterministic in `seed`.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut b = Builder { store: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(seed) };
    let (c, l, hd, hh) = (cfg.main_channels, cfg.latent_depth, cfg.hyper_depth, cfg.hyper_hidden);

    b.linear("g_a.0", 5, 3, c)?;
    for i in 0..3 {
        b.gdn(&format!("g_a.gdn{i}"), c)?;
        b.linear(&format!("g_a.{}", i + 1), 5, c, if i == 2 { l } else { c })?;
    }
    b.deconv("g_s.0", 5, l, c, 2)?;
    for i in 0..3 {
        b.gdn(&format!("g_s.igdn{i}"), c)?;
        b.deconv(&format!("g_s.{}", i + 1), 5, c, if i == 2 { 3 } else { c }, 2)?;
    }

    b.conv("h_a.0", 3, l, l)?;
    b.conv("h_a.1", 5, l, hh)?;
    b.linear("h_a.2", 5, hh, hd)?;
    b.deconv("h_s.0", 5, hd, hd, 2)?;
    if cfg.hyper_masked {
        b.conv("h_s.mask0", 3, hd, hd)?;
    }
    b.deconv("h_s.1", 5, hd, hh, 2)?;
    if cfg.hyper_masked {
        b.conv("h_s.mask1", 3, hh, hh)?;
    }
    b.linear("h_s.2", 3, hh, cfg.hyper_features())?;
    for (name, t) in FactorizedPrior::init(hd, &mut b.rng) {
        b.store.insert(format!("prior.{name}"), t)?;
    }

    let p = cfg.entropy.params_per_channel();
    for (m, &w) in cfg.slice_widths.iter().enumerate() {
        let s = format!("slice{m}");
        if cfg.channel_conditioning && m > 0 {
            b.conv(&format!("{s}.cc.0"), 3, cfg.slice_offset(m), cfg.channel_width)?;
            b.conv(&format!("{s}.cc.1"), 3, cfg.channel_width, cfg.channel_width)?;
        }
        let cond = cond_width(cfg);
        b.conv(&format!("{s}.st.0"), 5, cond, cfg.slice_hidden)?;
        if cfg.use_se {
            let r = cfg.slice_hidden / cfg.se_reduction;
            b.normal(format!("{s}.se.w1"), &[cfg.slice_hidden, r], cfg.slice_hidden, 2.0)?;
            b.normal(format!("{s}.se.w2"), &[r, cfg.slice_hidden], r, 1.0)?;
        }
        b.conv(&format!("{s}.st.1"), 5, cfg.slice_hidden, cfg.slice_mid)?;
        b.linear(&format!("{s}.st.2"), 3, cfg.slice_mid, w)?;
        match cfg.context_variant {
            ContextVariant::MaskedRaster => {
                for i in 0..cfg.context_layers {
                    let name = format!("{s}.ctx.{i}");
                    let cin = if i == 0 { w } else { cfg.context_width };
                    if i + 1 < cfg.context_layers {
                        b.conv(&name, 3, cin, cfg.context_width)?;
                    } else {
                        b.linear(&name, 3, cin, cfg.context_width)?;
                    }
                }
            }
            ContextVariant::Checkerboard => {
                b.conv(&format!("{s}.ctx.0"), 3, w, cfg.context_width)?;
                b.linear(&format!("{s}.ctx.1"), 1, cfg.context_width, cfg.context_width)?;
            }
            ContextVariant::None => {}
        }
        b.conv(&format!("{s}.ep.0"), 1, w + ctx_width(cfg), cfg.param_hidden)?;
        b.linear(&format!("{s}.ep.1"), 1, cfg.param_hidden, p * w)?;
        b.conv(&format!("{s}.lrp.0"), 3, cond + w, cfg.lrp_hidden)?;
        b.linear(&format!("{s}.lrp.1"), 3, cfg.lrp_hidden, w)?;
        b.store.insert(format!("{s}.lrp.scale"), Tensor::scalar(cfg.lrp_init))?;
    }
    Ok(ModelWeights { config: cfg.clone(), params: b.store })
}

fn cond_width(cfg: &ModelConfig) -> usize {
    cfg.hyper_features() + if cfg.channel_conditioning { cfg.channel_width } else { 0 }
}

fn ctx_width(cfg: &ModelConfig) -> usize {
    match cfg.context_variant {
        ContextVariant::None => 0,
        _ => cfg.context_width,
    }
}

/// Mask type of layer `i` in the raster context stack.
fn raster_mask(i: usize) -> MaskType {
    if i == 0 {
        MaskType::A
    } else {
        MaskType::B
    }
}

/// Outputs of one training-mode pass.
pub struct TrainForward {
    pub xhat: Var,
    pub z_bits: Var,
    pub y_bits: Var,
    /// `z_bits + y_bits`.
    pub bits: Var,
    pub y: Var,
    /// Refined latent fed to the synthesis transform.
    pub yhat_refined: Var,
}

/// The network bound to one set of parameters.
pub struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub params: BoundParams<'a>,
}

impl<'a> Net<'a> {
    /// Binds `weights`; `trainable` makes every parameter a gradient leaf.
    pub fn new(weights: &'a ModelWeights, trainable: bool) -> Self {
        Self { cfg: &weights.config, params: weights.params.bind(trainable) }
    }

    fn p(&self, name: &str) -> Result<Var> {
        self.params.get(name)
    }

    fn conv(&self, name: &str, x: &Var, stride: usize) -> Result<Var> {
        x.conv2d(&self.p(&format!("{name}.w"))?, stride, false)?.add_channels(&self.p(&format!("{name}.b"))?)
    }

    fn deconv(&self, name: &str, x: &Var, stride: usize) -> Result<Var> {
        x.conv2d(&self.p(&format!("{name}.w"))?, stride, true)?.add_channels(&self.p(&format!("{name}.b"))?)
    }

    fn masked(&self, name: &str, x: &Var, mask: MaskType) -> Result<Var> {
        let mk = MaskedKernel { kernel: self.p(&format!("{name}.w"))?, mask_type: mask };
        x.conv2d(&mk.effective()?, 1, false)?.add_channels(&self.p(&format!("{name}.b"))?)
    }

    fn gdn(&self, name: &str, x: &Var, inverse: bool) -> Result<Var> {
        let params = GdnParams {
            beta: self.p(&format!("{name}.beta"))?,
            gamma: self.p(&format!("{name}.gamma"))?,
            inverse,
        };
        gdn(x, &params)
    }

    /// `[H, W, 3] -> [H/16, W/16, latent_depth]`.
    pub fn analysis(&self, x: &Var) -> Result<Var> {
        let (h, w, c) = x.value().hwc()?;
        if c != 3 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Shape(format!("analysis needs [16a, 16b, 3], got {:?}", x.shape())));
        }
        let mut t = self.conv("g_a.0", x, 2)?;
        for i in 0..3 {
            t = self.gdn(&format!("g_a.gdn{i}"), &t, false)?;
            t = self.conv(&format!("g_a.{}", i + 1), &t, 2)?;
        }
        Ok(t)
    }

    pub fn synthesis(&self, y: &Var) -> Result<Var> {
        let mut t = self.deconv("g_s.0", y, 2)?;
        for i in 0..3 {
            t = self.gdn(&format!("g_s.igdn{i}"), &t, true)?;
            t = self.deconv(&format!("g_s.{}", i + 1), &t, 2)?;
        }
        Ok(t)
    }

    pub fn hyper_analysis(&self, y: &Var) -> Result<Var> {
        let t = self.conv("h_a.0", y, 1)?.relu();
        let t = self.conv("h_a.1", &t, 2)?.relu();
        self.conv("h_a.2", &t, 2)
    }

    /// Hyper features `[h, w, 2 * latent_depth]` on the latent grid `h x w`.
    pub fn hyper_synthesis(&self, zhat: &Var, h: usize, w: usize) -> Result<Var> {
        let mut t = self.deconv("h_s.0", zhat, 2)?.relu();
        if self.cfg.hyper_masked {
            t = self.masked("h_s.mask0", &t, MaskType::B)?.relu();
        }
        t = self.deconv("h_s.1", &t, 2)?.relu();
        if self.cfg.hyper_masked {
            t = self.masked("h_s.mask1", &t, MaskType::B)?.relu();
        }
        self.conv("h_s.2", &t, 1)?.crop(h, w)
    }

    pub fn prior(&self) -> Result<FactorizedPrior> {
        FactorizedPrior::from_params(self.cfg.hyper_depth, |n| self.p(&format!("prior.{n}")))
    }

    fn check_slice(&self, m: usize) -> Result<usize> {
        self.cfg
            .slice_widths
            .get(m)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("slice {m} out of range ({} slices)", self.cfg.num_slices())))
    }

    /// Conditioning tensor for slice `m`: hyper features, then channel
    /// features of the refined slices `prev` (zeros for the first slice).
    pub fn conditioning(&self, m: usize, hyper: &Var, prev: &[Var]) -> Result<Var> {
        self.check_slice(m)?;
        if !self.cfg.channel_conditioning {
            return Ok(hyper.clone());
        }
        let (h, w, _) = hyper.value().hwc()?;
        if prev.len() != m {
            return Err(Error::Invalid(format!("slice {m} conditioned on {} previous slices", prev.len())));
        }
        let cc = if m == 0 {
            Var::constant(Tensor::zeros(&[h, w, self.cfg.channel_width]))
        } else {
            let s = format!("slice{m}");
            let t = self.conv(&format!("{s}.cc.0"), &Var::concat_channels(prev)?, 1)?.relu();
            self.conv(&format!("{s}.cc.1"), &t, 1)?.relu()
        };
        Var::concat_channels(&[hyper.clone(), cc])
    }

    /// 5x5 (with SE) -> 5x5 -> 3x3 transform of the conditioning tensor.
    pub fn slice_transform(&self, m: usize, cond: &Var) -> Result<Var> {
        self.check_slice(m)?;
        let s = format!("slice{m}");
        let mut t = self.conv(&format!("{s}.st.0"), cond, 1)?.relu();
        if self.cfg.use_se {
            let se = SeParams { w1: self.p(&format!("{s}.se.w1"))?, w2: self.p(&format!("{s}.se.w2"))? };
            t = se_block(&t, &se)?;
        }
        let t = self.conv(&format!("{s}.st.1"), &t, 1)?.relu();
        self.conv(&format!("{s}.st.2"), &t, 1)
    }

    /// Spatial context of slice `m` from its quantized values, evaluated over
    /// the whole grid. `None` for the context-free variant.
    ///
    /// Raster: masked stack (type A then type B). Checkerboard: features at
    /// non-anchors from the anchor values only, zero at anchors.
    pub fn context_features(&self, m: usize, yhat_m: &Var) -> Result<Option<Var>> {
        self.check_slice(m)?;
        let s = format!("slice{m}");
        match self.cfg.context_variant {
            ContextVariant::None => Ok(None),
            ContextVariant::MaskedRaster => {
                let n = self.cfg.context_layers;
                let mut t = yhat_m.clone();
                for i in 0..n {
                    t = self.masked(&format!("{s}.ctx.{i}"), &t, raster_mask(i))?;
                    if i + 1 < n {
                        t = t.relu();
                    }
                }
                Ok(Some(t))
            }
            ContextVariant::Checkerboard => {
                let (h, w, c) = yhat_m.value().hwc()?;
                let anchors = Var::constant(parity_mask(h, w, c, true));
                let t = yhat_m.mul(&anchors)?;
                let t = self.masked(&format!("{s}.ctx.0"), &t, MaskType::Cross)?.relu();
                let t = self.conv(&format!("{s}.ctx.1"), &t, 1)?;
                let keep = Var::constant(parity_mask(h, w, self.cfg.context_width, false));
                Ok(Some(t.mul(&keep)?))
            }
        }
    }

    /// Raw distribution parameters `[h, w, P * width]`.
    pub fn param_net(&self, m: usize, st: &Var, ctx: Option<&Var>) -> Result<Var> {
        let s = format!("slice{m}");
        let input = match ctx {
            Some(c) => Var::concat_channels(&[st.clone(), c.clone()])?,
            None => st.clone(),
        };
        let t = self.conv(&format!("{s}.ep.0"), &input, 1)?.relu();
        self.conv(&format!("{s}.ep.1"), &t, 1)
    }

    /// `yhat + scale * softsign(r)` with `r` predicted from the conditioning
    /// and the quantized slice.
    pub fn lrp(&self, m: usize, cond: &Var, yhat_m: &Var) -> Result<Var> {
        let s = format!("slice{m}");
        let r = self.lrp_residual(m, cond, yhat_m)?;
        let scale = self.p(&format!("{s}.lrp.scale"))?;
        yhat_m.add(&r.softsign().mul(&scale)?)
    }

    pub fn lrp_residual(&self, m: usize, cond: &Var, yhat_m: &Var) -> Result<Var> {
        let s = format!("slice{m}");
        let input = Var::concat_channels(&[cond.clone(), yhat_m.clone()])?;
        let t = self.conv(&format!("{s}.lrp.0"), &input, 1)?.relu();
        self.conv(&format!("{s}.lrp.1"), &t, 1)
    }

    /// Training pass with additive-noise quantization. Rates are the
    /// noise-relaxed bin masses of `z` under the factorized prior and of each
    /// slice under its conditional model.
    pub fn forward_train(&self, x: &Var, rng: &mut impl Rng) -> Result<TrainForward> {
        let y = self.analysis(x)?;
        let (h, w, _) = y.value().hwc()?;
        let z = self.hyper_analysis(&y)?;
        let zhat = z.add(&Var::constant(uniform_noise(z.shape(), rng)))?;
        let z_bits = rate_bits_var(&self.prior()?.likelihood(&zhat)?);
        let hyper = self.hyper_synthesis(&zhat, h, w)?;

        let mut refined: Vec<Var> = Vec::with_capacity(self.cfg.num_slices());
        let mut y_bits: Option<Var> = None;
        for (m, &width) in self.cfg.slice_widths.iter().enumerate() {
            let off = self.cfg.slice_offset(m);
            let cond = self.conditioning(m, &hyper, &refined)?;
            let st = self.slice_transform(m, &cond)?;
            let y_m = y.slice_channels(off, off + width)?;
            let yhat_m = y_m.add(&Var::constant(uniform_noise(y_m.shape(), rng)))?;
            let ctx = self.context_features(m, &yhat_m)?;
            let raw = self.param_net(m, &st, ctx.as_ref())?;
            let params = EntropyParams::from_raw(&raw, width, self.cfg.entropy)?;
            let bits = rate_bits_var(&params.likelihood(&yhat_m)?);
            y_bits = Some(match y_bits {
                None => bits,
                Some(acc) => acc.add(&bits)?,
            });
            refined.push(self.lrp(m, &cond, &yhat_m)?);
        }
        let y_bits = y_bits.expect("at least one slice");
        let yhat_refined = Var::concat_channels(&refined)?;
        let xhat = self.synthesis(&yhat_refined)?;
        let bits = z_bits.add(&y_bits)?;
        Ok(TrainForward { xhat, z_bits, y_bits, bits, y, yhat_refined })
    }

    /// Per-position evaluators for the raster context stack of slice `m`.
    pub fn raster_context(&self, m: usize, h: usize, w: usize) -> Result<RasterContext> {
        let s = format!("slice{m}");
        let mut layers = Vec::with_capacity(self.cfg.context_layers);
        for i in 0..self.cfg.context_layers {
            let mk = MaskedKernel { kernel: self.p(&format!("{s}.ctx.{i}.w"))?, mask_type: raster_mask(i) };
            layers.push(PointConv::new(mk.effective()?.value(), self.p(&format!("{s}.ctx.{i}.b"))?.value())?);
        }
        Ok(RasterContext::new(layers, h, w))
    }

    pub fn param_net_point(&self, m: usize) -> Result<ParamNetPoint> {
        let s = format!("slice{m}");
        let l0 = PointConv::new(self.p(&format!("{s}.ep.0.w"))?.value(), self.p(&format!("{s}.ep.0.b"))?.value())?;
        let l1 = PointConv::new(self.p(&format!("{s}.ep.1.w"))?.value(), self.p(&format!("{s}.ep.1.b"))?.value())?;
        Ok(ParamNetPoint { l0, l1 })
    }
}

fn uniform_noise(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen::<f64>() - 0.5)
}

/// 1 at anchors (or non-anchors), 0 elsewhere, replicated over `c` channels.
fn parity_mask(h: usize, w: usize, c: usize, anchors: bool) -> Tensor {
    Tensor::from_fn(&[h, w, c], |i| {
        let pix = i / c;
        if is_anchor(pix / w, pix % w) == anchors {
            1.0
        } else {
            0.0
        }
    })
}

/// A stride-1 conv evaluated one output position at a time, with the same
/// accumulation order as the full-grid op.
#[derive(Clone, Debug)]
pub struct PointConv {
    kernel: Vec<f64>,
    bias: Vec<f64>,
    k: usize,
    cin: usize,
    cout: usize,
}

impl PointConv {
    pub fn new(kernel: &Tensor, bias: &Tensor) -> Result<Self> {
        match *kernel.shape() {
            [k, k2, cin, cout] if k == k2 && bias.len() == cout => Ok(Self {
                kernel: kernel.data().to_vec(),
                bias: bias.data().to_vec(),
                k,
                cin,
                cout,
            }),
            _ => Err(Error::Shape(format!("point conv kernel {:?} bias {:?}", kernel.shape(), bias.shape()))),
        }
    }

    pub fn cout(&self) -> usize {
        self.cout
    }

    /// Writes the output at `(oy, ox)` of the `[g.h, g.w, cin]` input `x`.
    pub fn at(&self, x: &[f64], g: Geom, oy: usize, ox: usize, out: &mut [f64]) {
        debug_assert_eq!(g.c, self.cin);
        out.fill(0.0);
        conv_point(x, g, &self.kernel, self.k, self.cout, 1, oy, ox, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
}

/// Incremental raster-order evaluation of a masked context stack: calling
/// [`Self::advance`] for positions in raster order produces the context at
/// each position from the values decoded so far.
#[derive(Clone, Debug)]
pub struct RasterContext {
    layers: Vec<PointConv>,
    bufs: Vec<Vec<f64>>,
    h: usize,
    w: usize,
}

impl RasterContext {
    fn new(layers: Vec<PointConv>, h: usize, w: usize) -> Self {
        let bufs = layers.iter().map(|l| vec![0.0; h * w * l.cout]).collect();
        Self { layers, bufs, h, w }
    }

    /// Context features at `(i, j)`. `yhat` is the slice `[h, w, width]`; only
    /// raster-earlier positions are read.
    pub fn advance(&mut self, yhat: &[f64], width: usize, i: usize, j: usize) -> &[f64] {
        let n = self.layers.len();
        let pix = i * self.w + j;
        for l in 0..n {
            let cout = self.layers[l].cout;
            let (done, rest) = self.bufs.split_at_mut(l);
            let (input, cin) = if l == 0 { (yhat, width) } else { (&done[l - 1][..], self.layers[l - 1].cout) };
            let out = &mut rest[0][pix * cout..(pix + 1) * cout];
            self.layers[l].at(input, Geom::new(self.h, self.w, cin), i, j, out);
            if l + 1 < n {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        let cout = self.layers[n - 1].cout;
        &self.bufs[n - 1][pix * cout..(pix + 1) * cout]
    }
}

/// Pointwise parameter network evaluated on one pixel.
#[derive(Clone, Debug)]
pub struct ParamNetPoint {
    l0: PointConv,
    l1: PointConv,
}

impl ParamNetPoint {
    /// Raw parameters from the slice-transform pixel and the context pixel.
    pub fn eval(&self, st: &[f64], ctx: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(st.len() + ctx.len());
        input.extend_from_slice(st);
        input.extend_from_slice(ctx);
        let mut hidden = vec![0.0; self.l0.cout];
        self.l0.at(&input, Geom::new(1, 1, input.len()), 0, 0, &mut hidden);
        for v in hidden.iter_mut() {
            *v = v.max(0.0);
        }
        let mut out = vec![0.0; self.l1.cout];
        self.l1.at(&hidden, Geom::new(1, 1, hidden.len()), 0, 0, &mut out);
        out
    }
}
