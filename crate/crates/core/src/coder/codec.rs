//! Image encoder and decoder sharing one schedule driver.
//!
//! The driver walks the side latent and then every slice in decode order,
//! rebuilding each element's table from already-coded content only. The
//! encoder and decoder differ only in how a symbol crosses the table, so
//! both sides see identical tables by construction.

use crate::coder::bitstream::{Bitstream, Header};
use crate::coder::range::{RangeDecoder, RangeEncoder, PROB_SCALE};
use crate::coder::CdfTable;
use crate::entropy::{element_params, RateMeter};
use crate::error::{Error, Result};
use crate::model::{is_anchor, lambda_index, ContextVariant, ModelConfig, ModelWeights, Net};
use crate::tensors::kernels::strided_extent;
use crate::tensors::scalar::round_half_away;
use crate::tensors::{Tensor, Var};

/// Sequential coding steps per slice on an `h x w` latent grid.
pub fn schedule_steps(variant: ContextVariant, h: usize, w: usize) -> usize {
    match variant {
        ContextVariant::MaskedRaster => h * w,
        ContextVariant::Checkerboard => 2,
        ContextVariant::None => 1,
    }
}

/// Side-latent grid for an `h x w` latent grid.
pub fn side_grid(h: usize, w: usize) -> (usize, usize) {
    (strided_extent(strided_extent(h, 2), 2), strided_extent(strided_extent(w, 2), 2))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodecStats {
    /// Sequential steps taken for each slice.
    pub steps: Vec<usize>,
    /// `-sum log2 mass` of every coded symbol under its snapped parameters.
    pub rate_bits: f64,
    /// Per segment, same order as the bitstream.
    pub segment_bits: Vec<f64>,
    /// `-sum log2` of the quantized table probabilities actually coded with.
    pub table_bits: f64,
    /// Masses that hit the floor.
    pub floored: usize,
    /// Encoder symbols moved to the table bounds.
    pub clamped: usize,
}

/// Everything one side of the codec reconstructs from the symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents {
    pub zhat: Tensor,
    pub z_symbols: Vec<i32>,
    /// Per slice, `[h, w, width]` row-major.
    pub symbols: Vec<Vec<i32>>,
    /// Quantized slices before refinement.
    pub yhat: Vec<Tensor>,
    /// Refined latent `[h, w, latent_depth]`.
    pub yhat_refined: Tensor,
    pub stats: CodecStats,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub bitstream: Bitstream,
    pub latents: Latents,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    /// Reconstruction in `[0, 1]`, cropped to the original extents.
    pub image: Tensor,
    pub latents: Latents,
}

trait SymbolIo {
    fn begin(&mut self, segment: usize);
    /// Moves one symbol for element `index` of the current segment.
    fn transfer(&mut self, table: &CdfTable, index: usize, center: f64) -> i32;
    fn end(&mut self, segment: usize);
}

struct EncoderIo<'a> {
    sources: Vec<&'a [f64]>,
    current: usize,
    enc: Option<RangeEncoder>,
    segments: Vec<Vec<u8>>,
    clamped: usize,
}

impl SymbolIo for EncoderIo<'_> {
    fn begin(&mut self, segment: usize) {
        self.current = segment;
        self.enc = Some(RangeEncoder::new());
    }

    fn transfer(&mut self, table: &CdfTable, index: usize, center: f64) -> i32 {
        let v = self.sources[self.current][index];
        let raw = round_half_away(v - center).clamp(i32::MIN as f64, i32::MAX as f64) as i32;
        let s = table.clamp(raw);
        if s != raw {
            self.clamped += 1;
        }
        self.enc.as_mut().expect("segment open").encode_symbol(table, s);
        s
    }

    fn end(&mut self, _segment: usize) {
        self.segments.push(self.enc.take().expect("segment open").finish());
    }
}

struct DecoderIo<'a> {
    segments: &'a [Vec<u8>],
    dec: Option<RangeDecoder<'a>>,
}

impl SymbolIo for DecoderIo<'_> {
    fn begin(&mut self, segment: usize) {
        self.dec = Some(RangeDecoder::new(&self.segments[segment]));
    }

    fn transfer(&mut self, table: &CdfTable, _index: usize, _center: f64) -> i32 {
        self.dec.as_mut().expect("segment open").decode_symbol(table)
    }

    fn end(&mut self, _segment: usize) {
        self.dec = None;
    }
}

fn check_variant(cfg: &ModelConfig, variant: ContextVariant) -> Result<()> {
    if variant == cfg.context_variant || variant == ContextVariant::None {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "model was built for the {} context; cannot code with {}",
            cfg.context_variant.name(),
            variant.name()
        )))
    }
}

fn table_cost(table: &CdfTable, symbol: i32) -> f64 {
    -(table.count(symbol) as f64 / PROB_SCALE as f64).log2()
}

fn run_schedule(net: &Net, variant: ContextVariant, h: usize, w: usize, io: &mut impl SymbolIo) -> Result<Latents> {
    let cfg = net.cfg;
    let mut meter = RateMeter::default();
    let mut stats = CodecStats::default();

    // Side latent, zero-centred under the factorized prior.
    let prior = net.prior()?;
    let (zh, zw) = side_grid(h, w);
    let hd = cfg.hyper_depth;
    let tables = (0..hd).map(|c| CdfTable::for_prior(&prior, c)).collect::<Result<Vec<_>>>()?;
    let mut z_symbols = vec![0i32; zh * zw * hd];
    io.begin(0);
    for (i, sym) in z_symbols.iter_mut().enumerate() {
        let c = i % hd;
        *sym = io.transfer(&tables[c], i, 0.0);
        meter.add_mass(prior.bin_mass(*sym, c));
        stats.table_bits += table_cost(&tables[c], *sym);
    }
    io.end(0);
    stats.segment_bits.push(meter.bits);
    let zhat = Tensor::new(vec![zh, zw, hd], z_symbols.iter().map(|&s| s as f64).collect())?;
    let hyper = net.hyper_synthesis(&Var::constant(zhat.clone()), h, w)?;

    let ctx_width = match cfg.context_variant {
        ContextVariant::None => 0,
        _ => cfg.context_width,
    };
    let mut refined: Vec<Var> = Vec::new();
    let mut symbols = Vec::new();
    let mut yhats = Vec::new();
    for (m, &width) in cfg.slice_widths.iter().enumerate() {
        let before = meter.bits;
        let cond = net.conditioning(m, &hyper, &refined)?;
        let st = net.slice_transform(m, &cond)?;
        let st = st.value().data();
        let pnet = net.param_net_point(m)?;
        let mut yhat = vec![0.0; h * w * width];
        let mut syms = vec![0i32; h * w * width];
        let zeros = vec![0.0; ctx_width];

        io.begin(m + 1);
        let table_bits = &mut stats.table_bits;
        let mut code_pixel = |pix: usize, ctx: &[f64], yhat: &mut [f64]| -> Result<()> {
            let raw = pnet.eval(&st[pix * width..(pix + 1) * width], ctx);
            for c in 0..width {
                let ep = element_params(&raw, c, width, cfg.entropy).snapped()?;
                let table = CdfTable::for_element(&ep)?;
                let center = ep.center();
                let idx = pix * width + c;
                let s = io.transfer(&table, idx, center);
                *table_bits += table_cost(&table, s);
                syms[idx] = s;
                yhat[idx] = s as f64 + center;
                meter.add_mass(ep.mass(s));
            }
            Ok(())
        };

        // A step is one evaluation of the context model; every element
        // coded within a step depends only on earlier steps.
        let mut steps = 0;
        match variant {
            ContextVariant::MaskedRaster => {
                let mut rc = net.raster_context(m, h, w)?;
                for i in 0..h {
                    for j in 0..w {
                        let ctx = rc.advance(&yhat, width, i, j).to_vec();
                        steps += 1;
                        code_pixel(i * w + j, &ctx, &mut yhat)?;
                    }
                }
            }
            ContextVariant::Checkerboard => {
                steps += 1;
                for pix in (0..h * w).filter(|p| is_anchor(p / w, p % w)) {
                    code_pixel(pix, &zeros, &mut yhat)?;
                }
                let current = Var::constant(Tensor::new(vec![h, w, width], yhat.clone())?);
                let ctx = net.context_features(m, &current)?.expect("checkerboard context");
                let ctx = ctx.value().data();
                steps += 1;
                for pix in (0..h * w).filter(|p| !is_anchor(p / w, p % w)) {
                    code_pixel(pix, &ctx[pix * ctx_width..(pix + 1) * ctx_width], &mut yhat)?;
                }
            }
            ContextVariant::None => {
                steps += 1;
                for pix in 0..h * w {
                    code_pixel(pix, &zeros, &mut yhat)?;
                }
            }
        }
        io.end(m + 1);
        stats.steps.push(steps);
        stats.segment_bits.push(meter.bits - before);

        let yhat = Tensor::new(vec![h, w, width], yhat)?;
        refined.push(net.lrp(m, &cond, &Var::constant(yhat.clone()))?);
        yhats.push(yhat);
        symbols.push(syms);
    }
    stats.rate_bits = meter.bits;
    stats.floored = meter.floored;
    let yhat_refined = Var::concat_channels(&refined)?.value().clone();
    Ok(Latents { zhat, z_symbols, symbols, yhat: yhats, yhat_refined, stats })
}

/// Mirror-pads an `[H, W, C]` image (edge not repeated) so both extents are
/// multiples of `multiple`.
pub fn reflect_pad(x: &Tensor, multiple: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if (ph, pw) == (h, w) {
        return Ok(x.clone());
    }
    let reflect = |i: usize, n: usize| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        let r = i % period;
        if r < n {
            r
        } else {
            period - r
        }
    };
    let src = x.data();
    Ok(Tensor::from_fn(&[ph, pw, c], |idx| {
        let (pix, ch) = (idx / c, idx % c);
        let (i, j) = (reflect(pix / pw, h), reflect(pix % pw, w));
        src[(i * w + j) * c + ch]
    }))
}

/// Top-left `[oh, ow]` window.
pub fn crop(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return Err(Error::Shape(format!("crop {oh}x{ow} of {h}x{w}")));
    }
    let src = x.data();
    Ok(Tensor::from_fn(&[oh, ow, c], |idx| {
        let (pix, ch) = (idx / c, idx % c);
        src[((pix / ow) * w + pix % ow) * c + ch]
    }))
}

/// Encodes an `[H, W, 3]` image in `[0, 1]`, padding to a multiple of 16.
/// `variant` defaults to the model's own context; `None` is always allowed.
pub fn encode_image(weights: &ModelWeights, x: &Tensor, variant: Option<ContextVariant>) -> Result<Encoded> {
    let cfg = &weights.config;
    let variant = variant.unwrap_or(cfg.context_variant);
    check_variant(cfg, variant)?;
    let (h0, w0, c) = x.hwc()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected an RGB image, got {c} channels")));
    }
    let (height, width) = match (u16::try_from(h0), u16::try_from(w0)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(Error::Invalid(format!("image {h0}x{w0} exceeds 65535 pixels per side"))),
    };
    let slices = u8::try_from(cfg.num_slices()).map_err(|_| Error::Config("more than 255 slices".into()))?;
    let net = Net::new(weights, false);
    let padded = reflect_pad(x, 16)?;
    let y = net.analysis(&Var::constant(padded))?;
    let z = net.hyper_analysis(&y)?;
    let (h, w, _) = y.value().hwc()?;
    let mut slices_y = Vec::new();
    for (m, &width) in cfg.slice_widths.iter().enumerate() {
        let off = cfg.slice_offset(m);
        slices_y.push(y.slice_channels(off, off + width)?.value().clone());
    }
    let mut sources: Vec<&[f64]> = vec![z.value().data()];
    sources.extend(slices_y.iter().map(|t| t.data()));
    let mut io = EncoderIo { sources, current: 0, enc: None, segments: Vec::new(), clamped: 0 };
    let mut latents = run_schedule(&net, variant, h, w, &mut io)?;
    latents.stats.clamped = io.clamped;
    let header = Header {
        height,
        width,
        variant,
        lambda_index: lambda_index(cfg.lambda),
        slices,
        digest: weights.digest(),
    };
    Ok(Encoded { bitstream: Bitstream { header, segments: io.segments }, latents })
}

/// Latents only, without running the synthesis transform.
pub fn decode_latents(weights: &ModelWeights, bs: &Bitstream) -> Result<Latents> {
    let cfg = &weights.config;
    let hdr = &bs.header;
    let digest = weights.digest();
    if hdr.digest != digest {
        return Err(Error::DigestMismatch { expected: digest, found: hdr.digest });
    }
    if hdr.slices as usize != cfg.num_slices() || bs.segments.len() != cfg.num_slices() + 1 {
        return Err(Error::format("bitstream", format!("{} slices for a {}-slice model", hdr.slices, cfg.num_slices())));
    }
    check_variant(cfg, hdr.variant)?;
    let h = (hdr.height as usize).div_ceil(16);
    let w = (hdr.width as usize).div_ceil(16);
    let net = Net::new(weights, false);
    let mut io = DecoderIo { segments: &bs.segments, dec: None };
    run_schedule(&net, hdr.variant, h, w, &mut io)
}

/// Synthesis of a refined latent, clamped to `[0, 1]` and cropped.
pub fn reconstruct(weights: &ModelWeights, yhat_refined: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let net = Net::new(weights, false);
    let xhat = net.synthesis(&Var::constant(yhat_refined.clone()))?;
    crop(&xhat.value().map(|v| v.clamp(0.0, 1.0)), height, width)
}

pub fn decode_image(weights: &ModelWeights, bs: &Bitstream) -> Result<Decoded> {
    let latents = decode_latents(weights, bs)?;
    let image = reconstruct(weights, &latents.yhat_refined, bs.header.height as usize, bs.header.width as usize)?;
    Ok(Decoded { image, latents })
}
