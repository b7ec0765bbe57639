//! Stacked GRU with a Gaussian output head, forward and backward passes over
//! one window.
//!
//! Flat parameter layout, per layer (input width `D`, hidden `H`):
//! `W` as `3H x D` (gates z, r, n), `U` as `3H x H`, `b` as `3H`.
//! The head follows the last layer: `w_mu (H)`, `b_mu`, `w_sigma (H)`, `b_sigma`.

use crate::error::{Error, Result};

use super::NetConfig;

/// Lower bound added to the softplus scale output.
pub const SIGMA_FLOOR: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerLayout {
    pub offset: usize,
    pub input: usize,
}

impl LayerLayout {
    fn w(&self) -> usize {
        self.offset
    }
    fn u(&self, h: usize) -> usize {
        self.offset + 3 * h * self.input
    }
    fn b(&self, h: usize) -> usize {
        self.offset + 3 * h * (self.input + h)
    }
    fn size(&self, h: usize) -> usize {
        3 * h * (self.input + h + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub hidden: usize,
    pub layers: Vec<LayerLayout>,
    pub head: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(num_layers: usize, hidden: usize) -> Self {
        let mut layers = Vec::with_capacity(num_layers);
        let mut offset = 0;
        for l in 0..num_layers {
            let lay = LayerLayout {
                offset,
                input: if l == 0 { 1 } else { hidden },
            };
            offset += lay.size(hidden);
            layers.push(lay);
        }
        Layout {
            hidden,
            layers,
            head: offset,
            total: offset + 2 * hidden + 2,
        }
    }

    pub fn from_config(config: &NetConfig) -> Self {
        Layout::new(config.num_layers, config.hidden_size)
    }

    /// Parameter range `[start, end)` of layer `l`.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let lay = &self.layers[l];
        lay.offset..lay.offset + lay.size(self.hidden)
    }

    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.head..self.total
    }

    pub fn mu_weights(&self) -> std::ops::Range<usize> {
        self.head..self.head + self.hidden
    }
    pub fn mu_bias(&self) -> usize {
        self.head + self.hidden
    }
    pub fn sigma_weights(&self) -> std::ops::Range<usize> {
        self.head + self.hidden + 1..self.head + 2 * self.hidden + 1
    }
    pub fn sigma_bias(&self) -> usize {
        self.head + 2 * self.hidden + 1
    }
}

/// Closed-form parameter count: `3H(1+H+1) + (L-1)·3H(2H+1) + 2H + 2`.
pub fn param_count(num_layers: usize, hidden: usize) -> usize {
    if num_layers == 0 {
        return 2 * hidden + 2;
    }
    3 * hidden * (hidden + 2) + (num_layers - 1) * 3 * hidden * (2 * hidden + 1) + 2 * hidden + 2
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-step Gaussian predictive distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianHead {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianHead {
    pub fn nll(&self, y: f64) -> f64 {
        let e = (y - self.mu) / self.sigma;
        HALF_LN_2PI + self.sigma.ln() + 0.5 * e * e
    }
}

fn head(params: &[f64], layout: &Layout, h: &[f64]) -> (GaussianHead, f64) {
    let mu = dot(&params[layout.mu_weights()], h) + params[layout.mu_bias()];
    let a = dot(&params[layout.sigma_weights()], h) + params[layout.sigma_bias()];
    (
        GaussianHead {
            mu,
            sigma: softplus(a) + SIGMA_FLOOR,
        },
        a,
    )
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One GRU step. Writes gates into `z`, `r`, `n` and the new state into `out`.
#[allow(clippy::too_many_arguments)]
fn gru_step(
    params: &[f64],
    lay: &LayerLayout,
    hid: usize,
    x: &[f64],
    hp: &[f64],
    z: &mut [f64],
    r: &mut [f64],
    n: &mut [f64],
    out: &mut [f64],
) {
    let d = lay.input;
    let w = &params[lay.w()..lay.u(hid)];
    let u = &params[lay.u(hid)..lay.b(hid)];
    let b = &params[lay.b(hid)..lay.b(hid) + 3 * hid];
    for i in 0..hid {
        let az = b[i] + dot(&w[i * d..(i + 1) * d], x) + dot(&u[i * hid..(i + 1) * hid], hp);
        let ri = hid + i;
        let ar = b[ri] + dot(&w[ri * d..(ri + 1) * d], x) + dot(&u[ri * hid..(ri + 1) * hid], hp);
        z[i] = sigmoid(az);
        r[i] = sigmoid(ar);
    }
    for i in 0..hid {
        let ni = 2 * hid + i;
        let mut an = b[ni] + dot(&w[ni * d..(ni + 1) * d], x);
        let urow = &u[ni * hid..(ni + 1) * hid];
        for j in 0..hid {
            an += urow[j] * r[j] * hp[j];
        }
        n[i] = an.tanh();
    }
    for i in 0..hid {
        out[i] = (1.0 - z[i]) * n[i] + z[i] * hp[i];
    }
}

/// Recurrent state for step-by-step inference.
#[derive(Clone, Debug)]
pub(crate) struct State {
    h: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    input: Vec<f64>,
}

impl State {
    pub fn new(layout: &Layout) -> Self {
        State {
            h: vec![vec![0.0; layout.hidden]; layout.layers.len()],
            scratch: vec![0.0; 4 * layout.hidden],
            input: vec![0.0; layout.hidden.max(1)],
        }
    }

    /// Feeds one scaled value and returns the head output for the next step.
    pub fn step(&mut self, params: &[f64], layout: &Layout, x: f64) -> GaussianHead {
        let hid = layout.hidden;
        self.input[0] = x;
        let mut width = 1;
        for (l, lay) in layout.layers.iter().enumerate() {
            let (z, rest) = self.scratch.split_at_mut(hid);
            let (r, rest) = rest.split_at_mut(hid);
            let (n, out) = rest.split_at_mut(hid);
            gru_step(params, lay, hid, &self.input[..width], &self.h[l], z, r, n, out);
            self.h[l].copy_from_slice(out);
            self.input[..hid].copy_from_slice(out);
            width = hid;
        }
        let top = &self.input[..width];
        if layout.layers.is_empty() {
            return head(params, layout, &vec![0.0; hid]).0;
        }
        head(params, layout, top).0
    }
}

/// Cached activations of one layer over a window.
struct LayerTrace {
    /// Inputs, `T x D` (after dropout for layers above the first).
    x: Vec<f64>,
    /// States `h[0..=T]`, `(T+1) x H`, `h[0] = 0`.
    h: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

/// Dropout multipliers on the input of every layer above the first,
/// laid out as `(num_layers - 1) x T x H`.
pub(crate) struct DropoutMasks<'a> {
    pub scales: &'a [f64],
}

/// Mean Gaussian NLL over the target part of a scaled window, teacher forced.
///
/// `window` holds `context + prediction` scaled values. Input at step `t` is
/// `window[t]`; the head after that step predicts `window[t + 1]`. Only
/// predictions of indices `>= context` enter the loss. When `grad` is given,
/// the gradient is accumulated into it for layers `>= min_layer` and the head.
pub(crate) fn window_loss(
    params: &[f64],
    layout: &Layout,
    window: &[f64],
    context: usize,
    dropout: Option<DropoutMasks<'_>>,
    grad: Option<(&mut [f64], usize)>,
) -> Result<f64> {
    let hid = layout.hidden;
    let steps = window.len() - 1;
    let num_layers = layout.layers.len();
    let targets = window.len() - context;
    debug_assert!(context >= 1 && targets >= 1);

    let mut traces: Vec<LayerTrace> = Vec::with_capacity(num_layers);
    for (l, lay) in layout.layers.iter().enumerate() {
        let d = lay.input;
        let mut x = vec![0.0; steps * d];
        if l == 0 {
            x.copy_from_slice(&window[..steps]);
        } else {
            let below = &traces[l - 1].h;
            for t in 0..steps {
                let src = &below[(t + 1) * hid..(t + 2) * hid];
                let dst = &mut x[t * d..(t + 1) * d];
                match &dropout {
                    Some(m) => {
                        let s = &m.scales[((l - 1) * steps + t) * hid..((l - 1) * steps + t + 1) * hid];
                        for j in 0..hid {
                            dst[j] = src[j] * s[j];
                        }
                    }
                    None => dst.copy_from_slice(src),
                }
            }
        }
        let mut tr = LayerTrace {
            x,
            h: vec![0.0; (steps + 1) * hid],
            z: vec![0.0; steps * hid],
            r: vec![0.0; steps * hid],
            n: vec![0.0; steps * hid],
        };
        for t in 0..steps {
            let (hp, hn) = tr.h.split_at_mut((t + 1) * hid);
            gru_step(
                params,
                lay,
                hid,
                &tr.x[t * d..(t + 1) * d],
                &hp[t * hid..],
                &mut tr.z[t * hid..(t + 1) * hid],
                &mut tr.r[t * hid..(t + 1) * hid],
                &mut tr.n[t * hid..(t + 1) * hid],
                &mut hn[..hid],
            );
        }
        traces.push(tr);
    }

    let zeros = vec![0.0; hid];
    let top_h = |t: usize| -> &[f64] {
        match traces.last() {
            Some(tr) => &tr.h[(t + 1) * hid..(t + 2) * hid],
            None => &zeros,
        }
    };

    let mut loss = 0.0;
    let mut heads = Vec::with_capacity(targets);
    for t in context - 1..steps {
        let (g, a) = head(params, layout, top_h(t));
        let term = g.nll(window[t + 1]);
        if !term.is_finite() {
            return Err(Error::NonFiniteStep { step: t + 1 });
        }
        loss += term;
        heads.push((g, a));
    }
    loss /= targets as f64;

    let Some((grad, min_layer)) = grad else {
        return Ok(loss);
    };

    let inv = 1.0 / targets as f64;
    let mut dh: Vec<Vec<f64>> = vec![vec![0.0; hid]; num_layers];
    let mut dhp = vec![0.0; hid];
    let mut dx = vec![0.0; hid.max(1)];
    let mut dan = vec![0.0; hid];
    let mut dar = vec![0.0; hid];
    let mut daz = vec![0.0; hid];

    for t in (0..steps).rev() {
        if t + 1 >= context {
            let (g, a) = heads[t + 1 - context];
            let y = window[t + 1];
            let e = y - g.mu;
            let dmu = -e / (g.sigma * g.sigma) * inv;
            let dsigma = (1.0 / g.sigma - e * e / (g.sigma * g.sigma * g.sigma)) * inv;
            let da = dsigma * sigmoid(a);
            let h = top_h(t);
            for (j, gw) in grad[layout.mu_weights()].iter_mut().enumerate() {
                *gw += dmu * h[j];
            }
            grad[layout.mu_bias()] += dmu;
            for (j, gw) in grad[layout.sigma_weights()].iter_mut().enumerate() {
                *gw += da * h[j];
            }
            grad[layout.sigma_bias()] += da;
            if let Some(top) = dh.last_mut() {
                let wm = &params[layout.mu_weights()];
                let ws = &params[layout.sigma_weights()];
                for j in 0..hid {
                    top[j] += dmu * wm[j] + da * ws[j];
                }
            }
        }

        for l in (min_layer..num_layers).rev() {
            let lay = &layout.layers[l];
            let d = lay.input;
            let tr = &traces[l];
            let x = &tr.x[t * d..(t + 1) * d];
            let hp = &tr.h[t * hid..(t + 1) * hid];
            let z = &tr.z[t * hid..(t + 1) * hid];
            let r = &tr.r[t * hid..(t + 1) * hid];
            let n = &tr.n[t * hid..(t + 1) * hid];
            let u = &params[lay.u(hid)..lay.b(hid)];
            let w = &params[lay.w()..lay.u(hid)];
            let cur = &dh[l];

            for i in 0..hid {
                let dn = cur[i] * (1.0 - z[i]);
                dan[i] = dn * (1.0 - n[i] * n[i]);
                let dz = cur[i] * (hp[i] - n[i]);
                daz[i] = dz * z[i] * (1.0 - z[i]);
                dhp[i] = cur[i] * z[i];
            }
            // candidate gate sees r ⊙ h_prev
            for j in 0..hid {
                let mut drh = 0.0;
                for i in 0..hid {
                    drh += u[(2 * hid + i) * hid + j] * dan[i];
                }
                let dr = drh * hp[j];
                dar[j] = dr * r[j] * (1.0 - r[j]);
                dhp[j] += drh * r[j];
            }
            for j in 0..hid {
                let mut acc = 0.0;
                for i in 0..hid {
                    acc += u[i * hid + j] * daz[i] + u[(hid + i) * hid + j] * dar[i];
                }
                dhp[j] += acc;
            }

            let (gw, rest) = grad[lay.offset..].split_at_mut(3 * hid * d);
            let (gu, gb) = rest.split_at_mut(3 * hid * hid);
            for (gate, da) in [(0usize, &daz), (1, &dar), (2, &dan)] {
                for i in 0..hid {
                    let row = gate * hid + i;
                    let g = da[i];
                    if g == 0.0 {
                        continue;
                    }
                    gb[row] += g;
                    for (k, xv) in x.iter().enumerate() {
                        gw[row * d + k] += g * xv;
                    }
                    let urow = &mut gu[row * hid..(row + 1) * hid];
                    if gate == 2 {
                        for k in 0..hid {
                            urow[k] += g * r[k] * hp[k];
                        }
                    } else {
                        for k in 0..hid {
                            urow[k] += g * hp[k];
                        }
                    }
                }
            }

            if l > min_layer {
                for k in 0..d {
                    let mut acc = 0.0;
                    for i in 0..hid {
                        acc += w[i * d + k] * daz[i]
                            + w[(hid + i) * d + k] * dar[i]
                            + w[(2 * hid + i) * d + k] * dan[i];
                    }
                    dx[k] = acc;
                }
                if let Some(m) = &dropout {
                    let s = &m.scales[((l - 1) * steps + t) * hid..((l - 1) * steps + t + 1) * hid];
                    for k in 0..d {
                        dx[k] *= s[k];
                    }
                }
                let below = &mut dh[l - 1];
                for k in 0..d {
                    below[k] += dx[k];
                }
            }
            dh[l].copy_from_slice(&dhp);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteStep { step: window.len() - 1 });
    }
    Ok(loss)
}
