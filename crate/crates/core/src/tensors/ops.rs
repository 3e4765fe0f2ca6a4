//! Differentiable operations on [`Var`].

use crate::error::{Error, Result};
use crate::tensors::kernels::{self, Geom};
use crate::tensors::scalar;
use crate::tensors::{Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Softsign,
    Softplus,
    Tanh,
    Exp,
    Ln,
    Abs,
    Square,
    Sqrt,
    NormalCdf,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Softsign => "softsign",
            Unary::Softplus => "softplus",
            Unary::Tanh => "tanh",
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Abs => "abs",
            Unary::Square => "square",
            Unary::Sqrt => "sqrt",
            Unary::NormalCdf => "normal_cdf",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Sigmoid => scalar::sigmoid(x),
            Unary::Softsign => scalar::softsign(x),
            Unary::Softplus => scalar::softplus(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::NormalCdf => scalar::std_normal_cdf(x),
        }
    }

    /// Derivative given input `x` and output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Softsign => scalar::softsign_grad(x),
            Unary::Softplus => scalar::sigmoid(x),
            Unary::Tanh => 1.0 - y * y,
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Sqrt => 0.5 / y,
            Unary::NormalCdf => scalar::std_normal_pdf(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

/// Broadcast mode for a binary op: equal shapes, or one side is a scalar.
#[derive(Clone, Copy)]
enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn bcast(a: &Tensor, b: &Tensor) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if a.is_scalar() {
        Ok(Bcast::LeftScalar)
    } else if b.is_scalar() {
        Ok(Bcast::RightScalar)
    } else {
        Err(Error::Shape(format!(
            "cannot broadcast {:?} with {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

fn reduce_to(g: Vec<f64>, scalar_side: bool, shape: &[usize]) -> Tensor {
    if scalar_side {
        Tensor::scalar(g.iter().sum())
    } else {
        Tensor::from_parts(shape.to_vec(), g)
    }
}

impl Var {
    pub fn unary(&self, f: Unary) -> Var {
        let y = self.value().map(|v| f.eval(v));
        let x = self.clone();
        let yc = y.clone();
        Var::record(f.name(), y, vec![self.clone()], move |g, _| {
            let xs = x.value().data();
            let ys = yc.data();
            let d = g
                .data()
                .iter()
                .zip(xs.iter().zip(ys))
                .map(|(&gv, (&xv, &yv))| gv * f.deriv(xv, yv))
                .collect();
            vec![Some(Tensor::from_parts(x.shape().to_vec(), d))]
        })
    }

    pub fn relu(&self) -> Var {
        self.unary(Unary::Relu)
    }
    pub fn sigmoid(&self) -> Var {
        self.unary(Unary::Sigmoid)
    }
    pub fn softsign(&self) -> Var {
        self.unary(Unary::Softsign)
    }
    pub fn softplus(&self) -> Var {
        self.unary(Unary::Softplus)
    }
    pub fn tanh(&self) -> Var {
        self.unary(Unary::Tanh)
    }
    pub fn exp(&self) -> Var {
        self.unary(Unary::Exp)
    }
    pub fn ln(&self) -> Var {
        self.unary(Unary::Ln)
    }
    pub fn abs(&self) -> Var {
        self.unary(Unary::Abs)
    }
    pub fn square(&self) -> Var {
        self.unary(Unary::Square)
    }
    pub fn sqrt(&self) -> Var {
        self.unary(Unary::Sqrt)
    }
    pub fn normal_cdf(&self) -> Var {
        self.unary(Unary::NormalCdf)
    }

    pub fn binary(&self, other: &Var, op: Binary) -> Result<Var> {
        let mode = bcast(self.value(), other.value())?;
        let (a, b) = (self.value(), other.value());
        let out_shape = match mode {
            Bcast::LeftScalar => b.shape().to_vec(),
            _ => a.shape().to_vec(),
        };
        let data = match op {
            Binary::Add => zip_bcast(a.data(), b.data(), mode, |x, y| x + y),
            Binary::Sub => zip_bcast(a.data(), b.data(), mode, |x, y| x - y),
            Binary::Mul => zip_bcast(a.data(), b.data(), mode, |x, y| x * y),
            Binary::Div => zip_bcast(a.data(), b.data(), mode, |x, y| x / y),
        };
        let name = match op {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        };
        let (pa, pb) = (self.clone(), other.clone());
        let out = Tensor::from_parts(out_shape, data);
        Ok(Var::record(name, out, vec![self.clone(), other.clone()], move |g, need| {
            let (a, b) = (pa.value(), pb.value());
            let av = |i: usize| if let Bcast::LeftScalar = mode { a.data()[0] } else { a.data()[i] };
            let bv = |i: usize| if let Bcast::RightScalar = mode { b.data()[0] } else { b.data()[i] };
            let gd = g.data();
            let ga = need[0].then(|| {
                let v: Vec<f64> = match op {
                    Binary::Add | Binary::Sub => gd.to_vec(),
                    Binary::Mul => gd.iter().enumerate().map(|(i, &gv)| gv * bv(i)).collect(),
                    Binary::Div => gd.iter().enumerate().map(|(i, &gv)| gv / bv(i)).collect(),
                };
                reduce_to(v, matches!(mode, Bcast::LeftScalar), a.shape())
            });
            let gb = need[1].then(|| {
                let v: Vec<f64> = match op {
                    Binary::Add => gd.to_vec(),
                    Binary::Sub => gd.iter().map(|&gv| -gv).collect(),
                    Binary::Mul => gd.iter().enumerate().map(|(i, &gv)| gv * av(i)).collect(),
                    Binary::Div => gd
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| -gv * av(i) / (bv(i) * bv(i)))
                        .collect(),
                };
                reduce_to(v, matches!(mode, Bcast::RightScalar), b.shape())
            });
            vec![ga, gb]
        }))
    }

    pub fn add(&self, o: &Var) -> Result<Var> {
        self.binary(o, Binary::Add)
    }
    pub fn sub(&self, o: &Var) -> Result<Var> {
        self.binary(o, Binary::Sub)
    }
    pub fn mul(&self, o: &Var) -> Result<Var> {
        self.binary(o, Binary::Mul)
    }
    pub fn div(&self, o: &Var) -> Result<Var> {
        self.binary(o, Binary::Div)
    }

    /// `a * x + b` with constant `a`, `b`.
    pub fn affine(&self, a: f64, b: f64) -> Var {
        let y = self.value().map(|v| a * v + b);
        let shape = self.shape().to_vec();
        Var::record("affine", y, vec![self.clone()], move |g, _| {
            vec![Some(Tensor::from_parts(shape.clone(), g.data().iter().map(|&v| a * v).collect()))]
        })
    }

    pub fn scale(&self, a: f64) -> Var {
        self.affine(a, 0.0)
    }

    pub fn add_scalar(&self, b: f64) -> Var {
        self.affine(1.0, b)
    }

    /// `max(x, floor)`; gradient passes where `x > floor`.
    pub fn clamp_min(&self, floor: f64) -> Var {
        let y = self.value().map(|v| v.max(floor));
        let x = self.clone();
        Var::record("clamp_min", y, vec![self.clone()], move |g, _| {
            let d = g
                .data()
                .iter()
                .zip(x.value().data())
                .map(|(&gv, &xv)| if xv > floor { gv } else { 0.0 })
                .collect();
            vec![Some(Tensor::from_parts(x.shape().to_vec(), d))]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let y = self.value().reshape(shape)?;
        let orig = self.shape().to_vec();
        Ok(Var::record("reshape", y, vec![self.clone()], move |g, _| {
            vec![Some(Tensor::from_parts(orig.clone(), g.data().to_vec()))]
        }))
    }

    pub fn sum(&self) -> Var {
        let all: Vec<usize> = (0..self.shape().len()).collect();
        self.reduce(Reduce::Sum, &all).expect("full reduction is always valid")
    }

    pub fn mean(&self) -> Var {
        let all: Vec<usize> = (0..self.shape().len()).collect();
        self.reduce(Reduce::Mean, &all).expect("full reduction is always valid")
    }

    /// Reduces over `axes`, which are removed from the shape (a full
    /// reduction yields shape `[1]`). An empty axis list is the identity.
    pub fn reduce(&self, op: Reduce, axes: &[usize]) -> Result<Var> {
        let shape = self.shape().to_vec();
        let rank = shape.len();
        if let Some(&bad) = axes.iter().find(|&&a| a >= rank) {
            return Err(Error::Shape(format!("axis {bad} out of range for {shape:?}")));
        }
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        let mut reduced = vec![false; rank];
        for &a in &axes {
            reduced[a] = true;
        }
        let mut out_shape: Vec<usize> =
            (0..rank).filter(|&i| !reduced[i]).map(|i| shape[i]).collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let map = reduction_map(&shape, &reduced);
        let n_out: usize = out_shape.iter().product();
        let mut out = vec![0.0; n_out];
        for (i, &v) in self.value().data().iter().enumerate() {
            out[map[i]] += v;
        }
        let factor = match op {
            Reduce::Sum => 1.0,
            Reduce::Mean => 1.0 / count as f64,
        };
        if factor != 1.0 {
            for v in &mut out {
                *v *= factor;
            }
        }
        let y = Tensor::from_parts(out_shape, out);
        Ok(Var::record("reduce", y, vec![self.clone()], move |g, _| {
            let gd = g.data();
            let d = map.iter().map(|&j| gd[j] * factor).collect();
            vec![Some(Tensor::from_parts(shape.clone(), d))]
        }))
    }

    /// Contiguous `[start, start + len)` range of the flattened tensor, as a
    /// rank-1 tensor.
    pub fn slice_flat(&self, start: usize, len: usize) -> Result<Var> {
        let n = self.value().len();
        if len == 0 || start + len > n {
            return Err(Error::Shape(format!("flat slice {start}+{len} of {n}")));
        }
        let y = Tensor::from_parts(vec![len], self.value().data()[start..start + len].to_vec());
        let shape = self.shape().to_vec();
        Ok(Var::record("slice_flat", y, vec![self.clone()], move |g, _| {
            let mut d = vec![0.0; n];
            d[start..start + len].copy_from_slice(g.data());
            vec![Some(Tensor::from_parts(shape.clone(), d))]
        }))
    }

    /// 2-D matrix product `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let (a, b) = (self.value(), other.value());
        let (m, k, n) = match (a.shape(), b.shape()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            (sa, sb) => return Err(Error::Shape(format!("matmul {sa:?} x {sb:?}"))),
        };
        let y = matmul_raw(a.data(), b.data(), m, k, n);
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Var::record(
            "matmul",
            Tensor::from_parts(vec![m, n], y),
            vec![self.clone(), other.clone()],
            move |g, need| {
                let gd = g.data();
                let ga = need[0].then(|| {
                    // g [m,n] x b^T [n,k]
                    let bd = pb.value().data();
                    let mut out = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..k {
                            out[i * k + j] = (0..n).map(|c| gd[i * n + c] * bd[j * n + c]).sum();
                        }
                    }
                    Tensor::from_parts(vec![m, k], out)
                });
                let gb = need[1].then(|| {
                    let ad = pa.value().data();
                    let mut out = vec![0.0; k * n];
                    for i in 0..m {
                        for j in 0..k {
                            let av = ad[i * k + j];
                            for c in 0..n {
                                out[j * n + c] += av * gd[i * n + c];
                            }
                        }
                    }
                    Tensor::from_parts(vec![k, n], out)
                });
                vec![ga, gb]
            },
        ))
    }

    /// Zero-padded same convolution. `kernel` is `[k, k, Cin, Cout]`.
    ///
    /// Forward: input `[H, W, Cin]` -> `[ceil(H/s), ceil(W/s), Cout]`.
    /// Transposed: the exact adjoint of the forward conv with the same kernel,
    /// so the input carries `Cout` channels and the output is
    /// `[H*s, W*s, Cin]`.
    pub fn conv2d(&self, kernel: &Var, stride: usize, transposed: bool) -> Result<Var> {
        let (h, w, c) = self.value().hwc()?;
        let (k, kcin, kcout) = match kernel.shape() {
            [k1, k2, ci, co] if k1 == k2 && k1 % 2 == 1 => (*k1, *ci, *co),
            s => return Err(Error::Shape(format!("kernel must be [k,k,Cin,Cout] with odd k, got {s:?}"))),
        };
        if stride == 0 {
            return Err(Error::Shape("stride must be positive".into()));
        }
        let expect = if transposed { kcout } else { kcin };
        if c != expect {
            return Err(Error::Shape(format!(
                "input has {c} channels but kernel {:?} expects {expect}{}",
                kernel.shape(),
                if transposed { " (transposed)" } else { "" }
            )));
        }
        let (x, kv) = (self.clone(), kernel.clone());
        if !transposed {
            let xg = Geom::new(h, w, c);
            let (y, yg) = kernels::conv_forward(self.value().data(), xg, kernel.value().data(), k, kcout, stride);
            let out = Tensor::from_parts(vec![yg.h, yg.w, yg.c], y);
            Ok(Var::record("conv2d", out, vec![self.clone(), kernel.clone()], move |g, need| {
                let gx = need[0].then(|| {
                    let d = kernels::conv_adjoint(g.data(), yg, kv.value().data(), k, xg, stride);
                    Tensor::from_parts(vec![xg.h, xg.w, xg.c], d)
                });
                let gk = need[1].then(|| {
                    let d = kernels::conv_kernel_grad(x.value().data(), xg, g.data(), yg, k, stride);
                    Tensor::from_parts(vec![k, k, kcin, kcout], d)
                });
                vec![gx, gk]
            }))
        } else {
            let yg = Geom::new(h, w, c);
            let xg = Geom::new(h * stride, w * stride, kcin);
            let d = kernels::conv_adjoint(self.value().data(), yg, kernel.value().data(), k, xg, stride);
            let out = Tensor::from_parts(vec![xg.h, xg.w, xg.c], d);
            Ok(Var::record("conv2d_t", out, vec![self.clone(), kernel.clone()], move |g, need| {
                let gy = need[0].then(|| {
                    let (d, _) = kernels::conv_forward(g.data(), xg, kv.value().data(), k, kcout, stride);
                    Tensor::from_parts(vec![yg.h, yg.w, yg.c], d)
                });
                let gk = need[1].then(|| {
                    let d = kernels::conv_kernel_grad(g.data(), xg, x.value().data(), yg, k, stride);
                    Tensor::from_parts(vec![k, k, kcin, kcout], d)
                });
                vec![gy, gk]
            }))
        }
    }

    /// Adds a per-channel vector `[C]` to every position of `[.., C]`.
    pub fn add_channels(&self, bias: &Var) -> Result<Var> {
        let c = *self.shape().last().unwrap();
        if bias.value().len() != c {
            return Err(Error::Shape(format!("bias {:?} vs {c} channels", bias.shape())));
        }
        let bd = bias.value().data();
        let mut y = self.value().clone();
        for row in y.data_mut().chunks_exact_mut(c) {
            for (v, b) in row.iter_mut().zip(bd) {
                *v += b;
            }
        }
        let (xs, bs) = (self.shape().to_vec(), bias.shape().to_vec());
        Ok(Var::record("add_channels", y, vec![self.clone(), bias.clone()], move |g, need| {
            let gx = need[0].then(|| Tensor::from_parts(xs.clone(), g.data().to_vec()));
            let gb = need[1].then(|| {
                let mut acc = vec![0.0; c];
                for row in g.data().chunks_exact(c) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::from_parts(bs.clone(), acc)
            });
            vec![gx, gb]
        }))
    }

    /// Scales channel `c` of `[.., C]` by `gates[c]`.
    pub fn mul_channels(&self, gates: &Var) -> Result<Var> {
        let c = *self.shape().last().unwrap();
        if gates.value().len() != c {
            return Err(Error::Shape(format!("gates {:?} vs {c} channels", gates.shape())));
        }
        let gd = gates.value().data();
        let mut y = self.value().clone();
        for row in y.data_mut().chunks_exact_mut(c) {
            for (v, s) in row.iter_mut().zip(gd) {
                *v *= s;
            }
        }
        let (x, gv) = (self.clone(), gates.clone());
        Ok(Var::record("mul_channels", y, vec![self.clone(), gates.clone()], move |g, need| {
            let gx = need[0].then(|| {
                let mut d = g.data().to_vec();
                for row in d.chunks_exact_mut(c) {
                    for (v, s) in row.iter_mut().zip(gv.value().data()) {
                        *v *= s;
                    }
                }
                Tensor::from_parts(x.shape().to_vec(), d)
            });
            let gg = need[1].then(|| {
                let mut acc = vec![0.0; c];
                for (grow, xrow) in g.data().chunks_exact(c).zip(x.value().data().chunks_exact(c)) {
                    for i in 0..c {
                        acc[i] += grow[i] * xrow[i];
                    }
                }
                Tensor::from_parts(gv.shape().to_vec(), acc)
            });
            vec![gx, gg]
        }))
    }

    /// Concatenates `[H, W, C_i]` tensors along channels.
    pub fn concat_channels(parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (h, w, _) = first.value().hwc()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (ph, pw, pc) = p.value().hwc()?;
            if (ph, pw) != (h, w) {
                return Err(Error::Shape(format!("concat spatial mismatch {:?} vs {:?}", p.shape(), first.shape())));
            }
            widths.push(pc);
        }
        if parts.len() == 1 {
            return Ok(first.clone());
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; h * w * total];
        for pix in 0..h * w {
            let mut off = 0;
            for (p, &pc) in parts.iter().zip(&widths) {
                out[pix * total + off..pix * total + off + pc]
                    .copy_from_slice(&p.value().data()[pix * pc..(pix + 1) * pc]);
                off += pc;
            }
        }
        let y = Tensor::from_parts(vec![h, w, total], out);
        Ok(Var::record("concat", y, parts.to_vec(), move |g, need| {
            let gd = g.data();
            let mut off = 0;
            let mut res = Vec::with_capacity(widths.len());
            for (i, &pc) in widths.iter().enumerate() {
                res.push(need[i].then(|| {
                    let mut d = vec![0.0; h * w * pc];
                    for pix in 0..h * w {
                        d[pix * pc..(pix + 1) * pc]
                            .copy_from_slice(&gd[pix * total + off..pix * total + off + pc]);
                    }
                    Tensor::from_parts(vec![h, w, pc], d)
                }));
                off += pc;
            }
            res
        }))
    }

    /// Channels `[start, end)` of an `[H, W, C]` tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Var> {
        let (h, w, c) = self.value().hwc()?;
        if start >= end || end > c {
            return Err(Error::Shape(format!("channel slice {start}..{end} of {c}")));
        }
        let n = end - start;
        let src = self.value().data();
        let mut out = Vec::with_capacity(h * w * n);
        for pix in 0..h * w {
            out.extend_from_slice(&src[pix * c + start..pix * c + end]);
        }
        let y = Tensor::from_parts(vec![h, w, n], out);
        Ok(Var::record("slice_channels", y, vec![self.clone()], move |g, _| {
            let mut d = vec![0.0; h * w * c];
            for pix in 0..h * w {
                d[pix * c + start..pix * c + end].copy_from_slice(&g.data()[pix * n..(pix + 1) * n]);
            }
            vec![Some(Tensor::from_parts(vec![h, w, c], d))]
        }))
    }

    /// Top-left `[oh, ow]` window of an `[H, W, C]` tensor.
    pub fn crop(&self, oh: usize, ow: usize) -> Result<Var> {
        let (h, w, c) = self.value().hwc()?;
        if oh > h || ow > w || oh == 0 || ow == 0 {
            return Err(Error::Shape(format!("crop {oh}x{ow} of {h}x{w}")));
        }
        if (oh, ow) == (h, w) {
            return Ok(self.clone());
        }
        let src = self.value().data();
        let mut out = Vec::with_capacity(oh * ow * c);
        for y in 0..oh {
            out.extend_from_slice(&src[(y * w) * c..(y * w + ow) * c]);
        }
        let t = Tensor::from_parts(vec![oh, ow, c], out);
        Ok(Var::record("crop", t, vec![self.clone()], move |g, _| {
            let mut d = vec![0.0; h * w * c];
            for y in 0..oh {
                d[(y * w) * c..(y * w + ow) * c].copy_from_slice(&g.data()[y * ow * c..(y + 1) * ow * c]);
            }
            vec![Some(Tensor::from_parts(vec![h, w, c], d))]
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

fn reduction_map(shape: &[usize], reduced: &[bool]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let rank = shape.len();
    // Output strides over the kept axes.
    let mut out_stride = vec![0usize; rank];
    let mut s = 1;
    for i in (0..rank).rev() {
        if !reduced[i] {
            out_stride[i] = s;
            s *= shape[i];
        }
    }
    let mut idx = vec![0usize; rank];
    let mut map = Vec::with_capacity(n);
    for _ in 0..n {
        map.push(idx.iter().zip(&out_stride).map(|(a, b)| a * b).sum());
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    map
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut y[i * n..(i + 1) * n];
        for j in 0..k {
            let av = a[i * k + j];
            for (r, &bv) in row.iter_mut().zip(&b[j * n..(j + 1) * n]) {
                *r += av * bv;
            }
        }
    }
    y
}

fn zip_bcast(a: &[f64], b: &[f64], mode: Bcast, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match mode {
        Bcast::LeftScalar => b.iter().map(|&y| f(a[0], y)).collect(),
        Bcast::RightScalar => a.iter().map(|&x| f(x, b[0])).collect(),
        _ => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
    }
}
