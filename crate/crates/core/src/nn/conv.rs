use super::{gemm, NnError, Tensor, Trans};

/// Zero padding applied to each side of the spatial extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Padding { top: p, bottom: p, left: p, right: p }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: Padding,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }
}

fn out_extent(n: usize, before: usize, after: usize, k: usize, stride: usize, axis: &str) -> Result<usize, NnError> {
    let padded = n + before + after;
    if stride == 0 || padded < k || !(padded - k).is_multiple_of(stride) {
        return Err(NnError::Extent {
            op: "conv2d",
            detail: format!("{axis}: ({n} + {before} + {after} - {k}) / {stride} + 1"),
        });
    }
    Ok((padded - k) / stride + 1)
}

fn geometry(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize, pad: Padding) -> Result<Geometry, NnError> {
    let (batch, cin, h, w) = input.dims4("conv2d")?;
    let (cout, kc, kh, kw) = kernels.dims4("conv2d")?;
    if kc != cin {
        return Err(NnError::shape(
            "conv2d",
            format!("input has {cin} channels, kernels expect {kc}"),
        ));
    }
    if bias.shape() != [cout] {
        return Err(NnError::shape("conv2d", format!("bias {:?} vs {cout} output channels", bias.shape())));
    }
    let oh = out_extent(h, pad.top, pad.bottom, kh, stride, "height")?;
    let ow = out_extent(w, pad.left, pad.right, kw, stride, "width")?;
    Ok(Geometry { batch, cin, h, w, cout, kh, kw, oh, ow, stride, pad })
}

/// Unfolds one image `[cin, h, w]` into `[cin·kh·kw, oh·ow]`.
fn im2col(g: &Geometry, image: &[f32], col: &mut [f32]) {
    let npix = g.out_pixels();
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * npix..(row + 1) * npix];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad.top as isize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad.left as isize;
                        dst[oy * g.ow + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            image[(c * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Folds a column buffer back, accumulating into `image`.
fn col2im(g: &Geometry, col: &[f32], image: &mut [f32]) {
    let npix = g.out_pixels();
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * npix..(row + 1) * npix];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad.top as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad.left as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            image[(c * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `[batch, cin, h, w]` with `[cout, cin, kh, kw]` kernels.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: Padding,
) -> Result<Tensor, NnError> {
    let g = geometry(input, kernels, bias, stride, pad)?;
    let npix = g.out_pixels();
    let in_size = g.cin * g.h * g.w;
    let out_size = g.cout * npix;
    let mut col = vec![0.0; g.patch() * npix];
    let mut out = vec![0.0; g.batch * out_size];
    for b in 0..g.batch {
        im2col(&g, &input.data()[b * in_size..(b + 1) * in_size], &mut col);
        let dst = &mut out[b * out_size..(b + 1) * out_size];
        for (o, row) in dst.chunks_exact_mut(npix).enumerate() {
            row.fill(bias.data()[o]);
        }
        gemm(g.cout, g.patch(), npix, kernels.data(), Trans::No, &col, Trans::No, 1.0, dst);
    }
    Tensor::new(vec![g.batch, g.cout, g.oh, g.ow], out)
}

/// Returns `(d_input, d_kernels, d_bias)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: Padding,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let g = geometry(input, kernels, bias, stride, pad)?;
    if grad_out.shape() != [g.batch, g.cout, g.oh, g.ow] {
        return Err(NnError::shape(
            "conv2d_backward",
            format!("upstream gradient {:?}, expected [{}, {}, {}, {}]", grad_out.shape(), g.batch, g.cout, g.oh, g.ow),
        ));
    }
    let npix = g.out_pixels();
    let in_size = g.cin * g.h * g.w;
    let out_size = g.cout * npix;
    let mut col = vec![0.0; g.patch() * npix];
    let mut dcol = vec![0.0; g.patch() * npix];
    let mut dx = vec![0.0; input.len()];
    let mut dk = vec![0.0; kernels.len()];
    let mut db = vec![0.0; g.cout];
    for b in 0..g.batch {
        let gb = &grad_out.data()[b * out_size..(b + 1) * out_size];
        im2col(&g, &input.data()[b * in_size..(b + 1) * in_size], &mut col);
        gemm(g.cout, npix, g.patch(), gb, Trans::No, &col, Trans::Yes, 1.0, &mut dk);
        gemm(g.patch(), g.cout, npix, kernels.data(), Trans::Yes, gb, Trans::No, 0.0, &mut dcol);
        col2im(&g, &dcol, &mut dx[b * in_size..(b + 1) * in_size]);
        for (o, row) in gb.chunks_exact(npix).enumerate() {
            db[o] += row.iter().sum::<f32>();
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(kernels.shape().to_vec(), dk)?,
        Tensor::from_vec(db),
    ))
}
