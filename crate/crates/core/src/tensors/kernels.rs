//! Raw convolution kernels over `[H, W, C]` buffers.
//!
//! Geometry: zero same-padding with the kernel centred on `out * stride`.
//! A forward conv maps `H -> ceil(H / stride)`; its adjoint maps back to the
//! caller-supplied input extents. Every output pixel is accumulated in a fixed
//! `(ky, kx, cin)` order so single-position evaluation is bit-identical to the
//! full-grid pass.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Geom {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn strided_extent(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

#[inline]
fn tap(o: usize, stride: usize, kk: usize, radius: usize, n: usize) -> Option<usize> {
    let i = (o * stride + kk) as isize - radius as isize;
    (i >= 0 && (i as usize) < n).then_some(i as usize)
}

/// Accumulates the conv output at `(oy, ox)` into `acc` (length `cout`).
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn conv_point(
    x: &[f64],
    xg: Geom,
    kern: &[f64],
    k: usize,
    cout: usize,
    stride: usize,
    oy: usize,
    ox: usize,
    acc: &mut [f64],
) {
    let r = k / 2;
    let cin = xg.c;
    for ky in 0..k {
        let Some(iy) = tap(oy, stride, ky, r, xg.h) else { continue };
        for kx in 0..k {
            let Some(ix) = tap(ox, stride, kx, r, xg.w) else { continue };
            let xin = &x[(iy * xg.w + ix) * cin..][..cin];
            let kbase = (ky * k + kx) * cin * cout;
            for (ci, &v) in xin.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let wrow = &kern[kbase + ci * cout..][..cout];
                for (a, &wv) in acc.iter_mut().zip(wrow) {
                    *a += v * wv;
                }
            }
        }
    }
}

/// Forward cross-correlation; kernel layout `[k, k, cin, cout]`.
pub fn conv_forward(x: &[f64], xg: Geom, kern: &[f64], k: usize, cout: usize, stride: usize) -> (Vec<f64>, Geom) {
    let og = Geom::new(strided_extent(xg.h, stride), strided_extent(xg.w, stride), cout);
    let mut out = vec![0.0; og.len()];
    for oy in 0..og.h {
        for ox in 0..og.w {
            let acc = &mut out[(oy * og.w + ox) * cout..][..cout];
            conv_point(x, xg, kern, k, cout, stride, oy, ox, acc);
        }
    }
    (out, og)
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Adjoint of [`conv_forward`]: maps an output-shaped buffer back onto the
/// input grid `xg` (whose channel count is the kernel's `cin`).
pub fn conv_adjoint(gy: &[f64], yg: Geom, kern: &[f64], k: usize, xg: Geom, stride: usize) -> Vec<f64> {
    let r = k / 2;
    let cin = xg.c;
    let cout = yg.c;
    let mut gx = vec![0.0; xg.len()];
    for oy in 0..yg.h {
        for ox in 0..yg.w {
            let g = &gy[(oy * yg.w + ox) * cout..][..cout];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ky in 0..k {
                let Some(iy) = tap(oy, stride, ky, r, xg.h) else { continue };
                for kx in 0..k {
                    let Some(ix) = tap(ox, stride, kx, r, xg.w) else { continue };
                    let dst = &mut gx[(iy * xg.w + ix) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (ci, d) in dst.iter_mut().enumerate() {
                        *d += dot(g, &kern[kbase + ci * cout..][..cout]);
                    }
                }
            }
        }
    }
    gx
}

/// Gradient of `<conv_forward(x, K), gy>` with respect to `K`.
pub fn conv_kernel_grad(x: &[f64], xg: Geom, gy: &[f64], yg: Geom, k: usize, stride: usize) -> Vec<f64> {
    let r = k / 2;
    let cin = xg.c;
    let cout = yg.c;
    let mut gk = vec![0.0; k * k * cin * cout];
    for oy in 0..yg.h {
        for ox in 0..yg.w {
            let g = &gy[(oy * yg.w + ox) * cout..][..cout];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ky in 0..k {
                let Some(iy) = tap(oy, stride, ky, r, xg.h) else { continue };
                for kx in 0..k {
                    let Some(ix) = tap(ox, stride, kx, r, xg.w) else { continue };
                    let xin = &x[(iy * xg.w + ix) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (ci, &v) in xin.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let dst = &mut gk[kbase + ci * cout..][..cout];
                        for (d, &gv) in dst.iter_mut().zip(g) {
                            *d += v * gv;
                        }
                    }
                }
            }
        }
    }
    gk
}
