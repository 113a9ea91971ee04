//! Batched forward/backward kernels over flat `(rows, features...)` buffers.
//!
//! A "row" is one (timestep, sample) pair. Spike inputs are mostly zero, so
//! the input-driven loops skip zero entries.

use crate::neuron::{atan_relaxed, atan_surrogate, heaviside_scalar, NeuronConfig};

/// How the forward pass turns membrane potential into spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Heaviside step; surrogate slope only in backward.
    #[default]
    Heaviside,
    /// Smooth arctangent primitive in forward, whose exact derivative is the
    /// surrogate. Used to check gradients against finite differences.
    Relaxed,
}

/// `y[r, :] = b + x[r, :] W` with `W` stored `(in, out)`.
pub fn linear_forward(x: &[f64], rows: usize, n_in: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_out = b.len();
    let mut y = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        for (j, &v) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let wj = &w[j * n_out..(j + 1) * n_out];
            for (acc, &wv) in yr.iter_mut().zip(wj) {
                *acc += v * wv;
            }
        }
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx` when `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    n_in: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let n_out = db.len();
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        for (acc, &g) in db.iter_mut().zip(dyr) {
            *acc += g;
        }
        for (j, &v) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (acc, &g) in dw[j * n_out..(j + 1) * n_out].iter_mut().zip(dyr) {
                *acc += v * g;
            }
        }
    }
    if !need_dx {
        return None;
    }
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        for j in 0..n_in {
            let wj = &w[j * n_out..(j + 1) * n_out];
            dx[r * n_in + j] = wj.iter().zip(dyr).map(|(a, b)| a * b).sum();
        }
    }
    Some(dx)
}

/// Geometry of a 2-D convolution over `(C, H, W)` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn in_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn out_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    /// Output coordinate hit by input coordinate `i` through kernel tap `k`.
    #[inline]
    fn target(&self, i: usize, k: usize, extent: usize) -> Option<usize> {
        let t = (i + self.padding).checked_sub(k)?;
        if t % self.stride != 0 {
            return None;
        }
        let o = t / self.stride;
        (o < extent).then_some(o)
    }

    /// Weights `(oc, ic, ky, kx)` reordered to `(ic, ky, kx, oc)`.
    fn channels_last_weights(&self, w: &[f64]) -> Vec<f64> {
        let (ic_n, oc_n, k) = (self.in_channels, self.out_channels, self.kernel);
        let mut out = vec![0.0; w.len()];
        for oc in 0..oc_n {
            for ic in 0..ic_n {
                for ky in 0..k {
                    for kx in 0..k {
                        let src = ((oc * ic_n + ic) * k + ky) * k + kx;
                        let dst = ((ic * k + ky) * k + kx) * oc_n + oc;
                        out[dst] = w[src];
                    }
                }
            }
        }
        out
    }
}

pub fn conv2d_forward(x: &[f64], rows: usize, g: &ConvGeom, w: &[f64], b: &[f64]) -> Vec<f64> {
    let (oh, ow, oc_n, k) = (g.out_height(), g.out_width(), g.out_channels, g.kernel);
    let wt = g.channels_last_weights(w);
    let mut y = vec![0.0; rows * g.out_len()];
    // Per-row accumulator in (oy, ox, oc) order.
    let mut acc = vec![0.0; oh * ow * oc_n];
    for r in 0..rows {
        for pix in acc.chunks_mut(oc_n) {
            pix.copy_from_slice(b);
        }
        let xr = &x[r * g.in_len()..(r + 1) * g.in_len()];
        for ic in 0..g.in_channels {
            for iy in 0..g.height {
                for ix in 0..g.width {
                    let v = xr[(ic * g.height + iy) * g.width + ix];
                    if v == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let Some(oy) = g.target(iy, ky, oh) else { continue };
                        for kx in 0..k {
                            let Some(ox) = g.target(ix, kx, ow) else { continue };
                            let wk = &wt[((ic * k + ky) * k + kx) * oc_n..][..oc_n];
                            let dst = &mut acc[(oy * ow + ox) * oc_n..][..oc_n];
                            for (d, &wv) in dst.iter_mut().zip(wk) {
                                *d += v * wv;
                            }
                        }
                    }
                }
            }
        }
        let yr = &mut y[r * g.out_len()..(r + 1) * g.out_len()];
        for oc in 0..oc_n {
            for p in 0..oh * ow {
                yr[oc * oh * ow + p] = acc[p * oc_n + oc];
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    g: &ConvGeom,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let (oh, ow, oc_n, ic_n, k) = (
        g.out_height(),
        g.out_width(),
        g.out_channels,
        g.in_channels,
        g.kernel,
    );
    let wt = g.channels_last_weights(w);
    let mut dwt = vec![0.0; wt.len()];
    let mut dx = need_dx.then(|| vec![0.0; rows * g.in_len()]);
    let mut dy_t = vec![0.0; oh * ow * oc_n];
    for r in 0..rows {
        let dyr = &dy[r * g.out_len()..(r + 1) * g.out_len()];
        for oc in 0..oc_n {
            for p in 0..oh * ow {
                let gv = dyr[oc * oh * ow + p];
                dy_t[p * oc_n + oc] = gv;
                db[oc] += gv;
            }
        }
        let xr = &x[r * g.in_len()..(r + 1) * g.in_len()];
        for ic in 0..ic_n {
            for iy in 0..g.height {
                for ix in 0..g.width {
                    let xi = (ic * g.height + iy) * g.width + ix;
                    let v = xr[xi];
                    let mut grad_in = 0.0;
                    for ky in 0..k {
                        let Some(oy) = g.target(iy, ky, oh) else { continue };
                        for kx in 0..k {
                            let Some(ox) = g.target(ix, kx, ow) else { continue };
                            let tap = ((ic * k + ky) * k + kx) * oc_n;
                            let src = &dy_t[(oy * ow + ox) * oc_n..][..oc_n];
                            if v != 0.0 {
                                for (d, &gv) in dwt[tap..tap + oc_n].iter_mut().zip(src) {
                                    *d += v * gv;
                                }
                            }
                            if dx.is_some() {
                                grad_in += wt[tap..tap + oc_n]
                                    .iter()
                                    .zip(src)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            }
                        }
                    }
                    if let Some(dx) = dx.as_mut() {
                        dx[r * g.in_len() + xi] = grad_in;
                    }
                }
            }
        }
    }
    for oc in 0..oc_n {
        for ic in 0..ic_n {
            for ky in 0..k {
                for kx in 0..k {
                    dw[((oc * ic_n + ic) * k + ky) * k + kx] += dwt[((ic * k + ky) * k + kx) * oc_n + oc];
                }
            }
        }
    }
    dx
}

/// Non-overlapping `k × k` average pooling; trailing rows/cols that do not
/// fill a window are dropped.
pub fn avg_pool_forward(x: &[f64], rows: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut y = vec![0.0; rows * c * oh * ow];
    for rc in 0..rows * c {
        let src = &x[rc * h * w..(rc + 1) * h * w];
        let dst = &mut y[rc * oh * ow..(rc + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        s += src[(oy * k + dy) * w + ox * k + dx];
                    }
                }
                dst[oy * ow + ox] = s * scale;
            }
        }
    }
    y
}

pub fn avg_pool_backward(dy: &[f64], rows: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut dx = vec![0.0; rows * c * h * w];
    for rc in 0..rows * c {
        let src = &dy[rc * oh * ow..(rc + 1) * oh * ow];
        let dst = &mut dx[rc * h * w..(rc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = src[oy * ow + ox] * scale;
                for dy in 0..k {
                    for dx in 0..k {
                        dst[(oy * k + dy) * w + ox * k + dx] = g;
                    }
                }
            }
        }
    }
    dx
}

/// Runs IF neurons over `steps` timesteps of `width` neurons each.
///
/// `drive` is `(steps, width)`. Returns `(spikes, potentials)`, both
/// `(steps, width)`; potentials are post-integration, pre-reset values.
pub fn if_forward(
    drive: &[f64],
    steps: usize,
    width: usize,
    cfg: &NeuronConfig,
    mode: SpikeMode,
) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; width];
    let mut s_prev = vec![0.0; width];
    let mut spikes = Vec::with_capacity(steps * width);
    let mut potentials = Vec::with_capacity(steps * width);
    for t in 0..steps {
        let d = &drive[t * width..(t + 1) * width];
        for i in 0..width {
            let v = (1.0 - s_prev[i]) * u[i] + d[i];
            u[i] = v;
            let s = match mode {
                SpikeMode::Heaviside => heaviside_scalar(v, cfg.v_th),
                SpikeMode::Relaxed => atan_relaxed(v - cfg.v_th, cfg.alpha),
            };
            s_prev[i] = s;
        }
        potentials.extend_from_slice(&u);
        spikes.extend_from_slice(&s_prev);
    }
    (spikes, potentials)
}

/// Gradient w.r.t. the drive, given the gradient w.r.t. emitted spikes.
///
/// The reset gate `1 - s(t-1)` is a constant here: gradient flows through the
/// carried potential but not through the spike that gated it.
pub fn if_backward(
    d_spikes: &[f64],
    spikes: &[f64],
    potentials: &[f64],
    steps: usize,
    width: usize,
    cfg: &NeuronConfig,
) -> Vec<f64> {
    let mut d_drive = vec![0.0; steps * width];
    let mut carry = vec![0.0; width];
    for t in (0..steps).rev() {
        for i in 0..width {
            let at = t * width + i;
            let du = d_spikes[at] * atan_surrogate(potentials[at] - cfg.v_th, cfg.alpha) + carry[i];
            d_drive[at] = du;
            let gate = if t == 0 { 1.0 } else { 1.0 - spikes[at - width] };
            carry[i] = du * gate;
        }
    }
    d_drive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], g: &ConvGeom, w: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
        let mut y = vec![0.0; g.out_len()];
        for oc in 0..g.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[oc];
                    for ic in 0..g.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                    continue;
                                }
                                let xi = (ic * g.height + iy as usize) * g.width + ix as usize;
                                s += x[xi] * w[((oc * g.in_channels + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    y[(oc * oh + oy) * ow + ox] = s;
                }
            }
        }
        y
    }

    fn pseudo(n: usize, salt: u64) -> Vec<f64> {
        let mut r = crate::rng::SeededRng::new(salt);
        (0..n)
            .map(|_| if r.unit() < 0.3 { 0.0 } else { r.symmetric(1.0) })
            .collect()
    }

    #[test]
    fn conv_matches_direct_gather() {
        for (stride, padding, kernel) in [(1, 1, 3), (2, 0, 3), (2, 1, 2), (1, 0, 1)] {
            let g = ConvGeom {
                in_channels: 2,
                out_channels: 3,
                height: 6,
                width: 5,
                kernel,
                stride,
                padding,
            };
            let w = pseudo(3 * 2 * kernel * kernel, 1);
            let b = pseudo(3, 2);
            let x = pseudo(2 * g.in_len(), 3);
            let y = conv2d_forward(&x, 2, &g, &w, &b);
            for r in 0..2 {
                let want = naive_conv(&x[r * g.in_len()..(r + 1) * g.in_len()], &g, &w, &b);
                for (a, e) in y[r * g.out_len()..(r + 1) * g.out_len()].iter().zip(&want) {
                    assert!((a - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let g = ConvGeom {
            in_channels: 2,
            out_channels: 2,
            height: 4,
            width: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let w = pseudo(2 * 2 * 9, 4);
        let b = pseudo(2, 5);
        let x = pseudo(g.in_len(), 6);
        let probe = pseudo(g.out_len(), 7);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
            conv2d_forward(x, 1, &g, w, b).iter().zip(&probe).map(|(a, p)| a * p).sum()
        };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; 2];
        let dx = conv2d_backward(&x, &probe, 1, &g, &w, &mut dw, &mut db, true).unwrap();
        let h = 1e-6;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (loss(&x, &wp, &b) - loss(&x, &wm, &b)) / (2.0 * h);
            assert!((fd - dw[i]).abs() < 1e-7, "dw[{i}]");
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&xp, &w, &b) - loss(&xm, &w, &b)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}]");
        }
        let total: f64 = probe.iter().take(16).sum();
        assert!((db[0] - total).abs() < 1e-12);
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let (rows, n_in, n_out) = (3, 4, 2);
        let w = pseudo(n_in * n_out, 8);
        let b = pseudo(n_out, 9);
        let x = pseudo(rows * n_in, 10);
        let probe = pseudo(rows * n_out, 11);
        let loss = |x: &[f64], w: &[f64]| -> f64 {
            linear_forward(x, rows, n_in, w, &b).iter().zip(&probe).map(|(a, p)| a * p).sum()
        };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; n_out];
        let dx = linear_backward(&x, &probe, rows, n_in, &w, &mut dw, &mut db, true).unwrap();
        let h = 1e-6;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            assert!(((loss(&x, &wp) - loss(&x, &wm)) / (2.0 * h) - dw[i]).abs() < 1e-8);
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            assert!(((loss(&xp, &w) - loss(&xm, &w)) / (2.0 * h) - dx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn pool_round_trip_scaling() {
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let y = avg_pool_forward(&x, 1, 1, 4, 4, 2);
        assert_eq!(y, vec![2.5, 4.5, 10.5, 12.5]);
        let dx = avg_pool_backward(&[1.0, 0.0, 0.0, 4.0], 1, 1, 4, 4, 2);
        assert_eq!(dx[0], 0.25);
        assert_eq!(dx[15], 1.0);
        assert_eq!(dx[2], 0.0);
    }

    #[test]
    fn if_forward_hard_resets() {
        let cfg = NeuronConfig::default();
        let (s, u) = if_forward(&[0.6, 0.6, 0.6, 0.6], 4, 1, &cfg, SpikeMode::Heaviside);
        assert_eq!(s, vec![0.0, 1.0, 0.0, 1.0]);
        assert!((u[1] - 1.2).abs() < 1e-15);
        assert_eq!(u[2], 0.6);
    }
}
