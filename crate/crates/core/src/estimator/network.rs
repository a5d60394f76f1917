//! Gated-feedback LSTM with a softmax read-out.
//!
//! Every unfolding step feeds the normalized measurements to the bottom
//! layer. Layer `j` at step `t` receives `in = x` (bottom) or `h^{j-1}_t`
//! and computes
//!
//! ```text
//! [i f o] = σ(in·Wx[:, :3H] + h^j_{t-1}·Wh + b[:3H])
//! r       = σ(in·Wg + h*_{t-1}·Ug + bg)            one gate per source layer
//! c~      = tanh(in·Wx[:, 3H:] + Σ_s r_s·(h^s_{t-1}·Uc_s) + b[3H:])
//! c       = f⊙c_{t-1} + i⊙c~,   h = o⊙tanh(c)
//! ```
//!
//! where `h*_{t-1}` concatenates the previous hidden states of all layers.
//! The top hidden state after the last step goes through an affine map and
//! a softmax. Parameters live in one flat vector; [`Layout`] maps it to
//! matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to `max(y)` before normalizing the input.
pub const INPUT_FLOOR: f64 = 1e-300;
/// Lower clamp for probabilities inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Signal dimension; the output has `n - 1` entries.
    pub n: usize,
    /// Measurement length, the input dimension.
    pub m: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub unfold_steps: usize,
}

impl Arch {
    pub fn desk(n: usize, m: usize) -> Self {
        Arch {
            n,
            m,
            hidden_size: 128,
            num_layers: 2,
            unfold_steps: 5,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.n - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < self.n {
            return Err(Error::Dimension(format!("need 2 <= n <= m (n = {}, m = {})", self.n, self.m)));
        }
        if self.hidden_size == 0 || self.num_layers == 0 || self.unfold_steps == 0 {
            return Err(Error::InvalidInput("hidden size, layers and unfold steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerOffsets {
    in_dim: usize,
    wx: usize,
    wh: usize,
    b: usize,
    uc: Vec<usize>,
    wg: usize,
    ug: usize,
    bg: usize,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone)]
pub struct Layout {
    arch: Arch,
    layers: Vec<LayerOffsets>,
    wout: usize,
    bout: usize,
    len: usize,
}

struct LayerRef<'a> {
    wx: ArrayView2<'a, f64>,
    wh: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
    uc: Vec<ArrayView2<'a, f64>>,
    wg: ArrayView2<'a, f64>,
    ug: ArrayView2<'a, f64>,
    bg: ArrayView1<'a, f64>,
}

struct LayerMut<'a> {
    wx: ArrayViewMut2<'a, f64>,
    wh: ArrayViewMut2<'a, f64>,
    b: ArrayViewMut1<'a, f64>,
    uc: Vec<ArrayViewMut2<'a, f64>>,
    wg: ArrayViewMut2<'a, f64>,
    ug: ArrayViewMut2<'a, f64>,
    bg: ArrayViewMut1<'a, f64>,
}

struct NetRef<'a> {
    layers: Vec<LayerRef<'a>>,
    wout: ArrayView2<'a, f64>,
    bout: ArrayView1<'a, f64>,
}

struct NetMut<'a> {
    layers: Vec<LayerMut<'a>>,
    wout: ArrayViewMut2<'a, f64>,
    bout: ArrayViewMut1<'a, f64>,
}

fn take_mut<'a>(rest: &mut &'a mut [f64], len: usize) -> &'a mut [f64] {
    let (head, tail) = std::mem::take(rest).split_at_mut(len);
    *rest = tail;
    head
}

impl Layout {
    pub fn new(arch: Arch) -> Self {
        let (h, l) = (arch.hidden_size, arch.num_layers);
        let mut off = 0;
        let mut next = |len: usize| {
            let o = off;
            off += len;
            o
        };
        let mut layers = Vec::with_capacity(l);
        for j in 0..l {
            let d = if j == 0 { arch.m } else { h };
            layers.push(LayerOffsets {
                in_dim: d,
                wx: next(d * 4 * h),
                wh: next(h * 3 * h),
                b: next(4 * h),
                uc: (0..l).map(|_| next(h * h)).collect(),
                wg: next(d * l),
                ug: next(l * h * l),
                bg: next(l),
            });
        }
        let wout = next(h * (arch.n - 1));
        let bout = next(arch.n - 1);
        Layout {
            arch,
            layers,
            wout,
            bout,
            len: off,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn view<'a>(&self, theta: &'a [f64]) -> NetRef<'a> {
        let (h, l) = (self.arch.hidden_size, self.arch.num_layers);
        let mat = |off: usize, r: usize, c: usize| ArrayView2::from_shape((r, c), &theta[off..off + r * c]).expect("layout");
        let vec = |off: usize, r: usize| ArrayView1::from(&theta[off..off + r]);
        NetRef {
            layers: self
                .layers
                .iter()
                .map(|lo| LayerRef {
                    wx: mat(lo.wx, lo.in_dim, 4 * h),
                    wh: mat(lo.wh, h, 3 * h),
                    b: vec(lo.b, 4 * h),
                    uc: lo.uc.iter().map(|&o| mat(o, h, h)).collect(),
                    wg: mat(lo.wg, lo.in_dim, l),
                    ug: mat(lo.ug, l * h, l),
                    bg: vec(lo.bg, l),
                })
                .collect(),
            wout: mat(self.wout, h, self.arch.n - 1),
            bout: vec(self.bout, self.arch.n - 1),
        }
    }

    /// Blocks are laid out in declaration order, so the flat vector can be
    /// carved up front to back.
    fn view_mut<'a>(&self, theta: &'a mut [f64]) -> NetMut<'a> {
        let (h, l) = (self.arch.hidden_size, self.arch.num_layers);
        let mut rest: &'a mut [f64] = theta;
        let mut mat = |r: usize, c: usize| ArrayViewMut2::from_shape((r, c), take_mut(&mut rest, r * c)).expect("layout");
        let mut layers = Vec::with_capacity(l);
        for lo in &self.layers {
            let wx = mat(lo.in_dim, 4 * h);
            let wh = mat(h, 3 * h);
            let b = mat(1, 4 * h).into_shape_with_order(4 * h).expect("layout");
            let uc = (0..l).map(|_| mat(h, h)).collect();
            let wg = mat(lo.in_dim, l);
            let ug = mat(l * h, l);
            let bg = mat(1, l).into_shape_with_order(l).expect("layout");
            layers.push(LayerMut { wx, wh, b, uc, wg, ug, bg });
        }
        let wout = mat(h, self.arch.n - 1);
        let bout = mat(1, self.arch.n - 1).into_shape_with_order(self.arch.n - 1).expect("layout");
        NetMut { layers, wout, bout }
    }

    /// Uniform weights in `±1/√fan_in`, zero biases, forget-gate biases 1.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.len];
        let h = self.arch.hidden_size;
        let mut fill = |theta: &mut [f64], off: usize, len: usize, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in &mut theta[off..off + len] {
                *v = rng.random_range(-a..a);
            }
        };
        let l = self.arch.num_layers;
        for lo in &self.layers {
            fill(&mut theta, lo.wx, lo.in_dim * 4 * h, lo.in_dim);
            fill(&mut theta, lo.wh, h * 3 * h, h);
            for &o in &lo.uc {
                fill(&mut theta, o, h * h, h);
            }
            fill(&mut theta, lo.wg, lo.in_dim * l, lo.in_dim);
            fill(&mut theta, lo.ug, l * h * l, l * h);
        }
        fill(&mut theta, self.wout, h * (self.arch.n - 1), h);
        for lo in &self.layers {
            theta[lo.b + h..lo.b + 2 * h].fill(1.0);
        }
        theta
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y/max(y)` with the maximum floored at [`INPUT_FLOOR`].
pub fn normalize_input(y: &[f64]) -> Vec<f64> {
    let top = y.iter().cloned().fold(0.0f64, f64::max).max(INPUT_FLOOR);
    y.iter().map(|v| v / top).collect()
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - top).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// `c += a·b`.
fn gemm_acc(a: &ArrayView2<f64>, b: &ArrayView2<f64>, c: &mut ArrayViewMut2<f64>) {
    general_mat_mul(1.0, a, b, 1.0, c);
}

struct StepCache {
    input: Array2<f64>,
    /// Sigmoid gates `[i f o]`, `B × 3H`.
    ifo: Array2<f64>,
    cand: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
    /// Reset gates, `B × L`.
    r: Array2<f64>,
    /// `h^s_{t-1}·Uc_s` per source layer.
    proj: Vec<Array2<f64>>,
}

/// Forward pass over a batch of prepared inputs; returns the caches
/// (`[t][j]`) and the softmax outputs.
fn forward_cached(layout: &Layout, theta: &[f64], x: &ArrayView2<f64>) -> (Vec<Vec<StepCache>>, Array2<f64>) {
    let arch = layout.arch;
    let (h, l) = (arch.hidden_size, arch.num_layers);
    let batch = x.nrows();
    let net = layout.view(theta);
    let mut steps: Vec<Vec<StepCache>> = Vec::with_capacity(arch.unfold_steps);

    for t in 0..arch.unfold_steps {
        let mut layer_caches: Vec<StepCache> = Vec::with_capacity(l);
        let hstar = (t > 0).then(|| {
            let mut hs = Array2::zeros((batch, l * h));
            for (s, prev) in steps[t - 1].iter().enumerate() {
                hs.slice_mut(s![.., s * h..(s + 1) * h]).assign(&prev.h);
            }
            hs
        });
        for (j, w) in net.layers.iter().enumerate() {
            let input = if j == 0 { x.to_owned() } else { layer_caches[j - 1].h.clone() };
            let mut a = input.dot(&w.wx);
            a += &w.b;
            let mut rpre = input.dot(&w.wg);
            rpre += &w.bg;
            let mut proj = Vec::new();
            if t > 0 {
                let prev = &steps[t - 1];
                gemm_acc(&prev[j].h.view(), &w.wh, &mut a.slice_mut(s![.., ..3 * h]));
                gemm_acc(&hstar.as_ref().expect("t > 0").view(), &w.ug, &mut rpre.view_mut());
                proj = (0..l).map(|s| prev[s].h.dot(&w.uc[s])).collect();
            }
            let r = rpre.mapv(sigmoid);
            let mut cand_pre = a.slice(s![.., 3 * h..]).to_owned();
            for (s, p) in proj.iter().enumerate() {
                Zip::from(&mut cand_pre)
                    .and_broadcast(&r.slice(s![.., s..s + 1]))
                    .and(p)
                    .for_each(|c, &g, &p| *c += g * p);
            }
            let ifo = a.slice(s![.., ..3 * h]).mapv(sigmoid);
            let cand = cand_pre.mapv(f64::tanh);
            let mut c = &ifo.slice(s![.., ..h]) * &cand;
            if t > 0 {
                Zip::from(&mut c)
                    .and(&ifo.slice(s![.., h..2 * h]))
                    .and(&steps[t - 1][j].c)
                    .for_each(|c, &f, &cp| *c += f * cp);
            }
            let tanh_c = c.mapv(f64::tanh);
            let hid = &ifo.slice(s![.., 2 * h..]) * &tanh_c;
            layer_caches.push(StepCache {
                input,
                ifo,
                cand,
                c,
                tanh_c,
                h: hid,
                r,
                proj,
            });
        }
        steps.push(layer_caches);
    }

    let top = &steps[arch.unfold_steps - 1][l - 1].h;
    let mut z = top.dot(&net.wout);
    z += &net.bout;
    softmax_rows(&mut z);
    (steps, z)
}

/// Softmax outputs for a batch of prepared (normalized) inputs, `B × m`.
pub fn forward_batch(layout: &Layout, theta: &[f64], x: &ArrayView2<f64>) -> Array2<f64> {
    forward_cached(layout, theta, x).1
}

/// Cross-entropy summed over the batch rows (each row already divided by
/// the output dimension), clamped at [`LOG_CLAMP`].
fn batch_ce(p: &Array2<f64>, targets: &ArrayView2<f64>) -> f64 {
    let g = p.ncols() as f64;
    Zip::from(p).and(targets).fold(0.0, |acc, &p, &t| {
        if t != 0.0 {
            acc - t * p.max(LOG_CLAMP).ln() / g
        } else {
            acc
        }
    })
}

/// Sum over the batch of the per-sample loss, and its gradient (also summed)
/// accumulated into `grad`.
pub fn loss_and_grad_sum(layout: &Layout, theta: &[f64], x: &ArrayView2<f64>, targets: &ArrayView2<f64>, grad: &mut [f64]) -> f64 {
    let arch = layout.arch;
    let (h, l) = (arch.hidden_size, arch.num_layers);
    let batch = x.nrows();
    let (steps, p) = forward_cached(layout, theta, x);
    let loss = batch_ce(&p, targets);

    // d loss / d logits, exact under the clamp
    let g = p.ncols() as f64;
    let mut dz = Array2::zeros(p.raw_dim());
    for ((mut dzr, pr), tr) in dz.rows_mut().into_iter().zip(p.rows()).zip(targets.rows()) {
        let live: f64 = pr.iter().zip(tr.iter()).filter(|(p, _)| **p >= LOG_CLAMP).map(|(_, t)| t).sum();
        for ((d, &p), &t) in dzr.iter_mut().zip(pr.iter()).zip(tr.iter()) {
            let own = if p >= LOG_CLAMP { t } else { 0.0 };
            *d = (p * live - own) / g;
        }
    }

    let net = layout.view(theta);
    let mut gnet = layout.view_mut(grad);
    let top = &steps[arch.unfold_steps - 1][l - 1].h;
    gemm_acc(&top.t(), &dz.view(), &mut gnet.wout);
    gnet.bout += &dz.sum_axis(Axis(0));

    let mut dh: Vec<Array2<f64>> = (0..l).map(|_| Array2::zeros((batch, h))).collect();
    let mut dc: Vec<Array2<f64>> = (0..l).map(|_| Array2::zeros((batch, h))).collect();
    dh[l - 1] = dz.dot(&net.wout.t());

    for t in (0..arch.unfold_steps).rev() {
        let mut dh_prev: Vec<Array2<f64>> = (0..l).map(|_| Array2::zeros((batch, h))).collect();
        let mut dc_prev: Vec<Array2<f64>> = (0..l).map(|_| Array2::zeros((batch, h))).collect();
        for j in (0..l).rev() {
            let cache = &steps[t][j];
            let w = &net.layers[j];
            let gw = &mut gnet.layers[j];
            let (i_g, f_g, o_g) = (
                cache.ifo.slice(s![.., ..h]),
                cache.ifo.slice(s![.., h..2 * h]),
                cache.ifo.slice(s![.., 2 * h..]),
            );

            let mut da = Array2::<f64>::zeros((batch, 4 * h));
            // dc_total = dc + dh ⊙ o ⊙ (1 - tanh²c)
            let mut dct = dc[j].clone();
            Zip::from(&mut dct)
                .and(&dh[j])
                .and(&o_g)
                .and(&cache.tanh_c)
                .for_each(|d, &dh, &o, &th| *d += dh * o * (1.0 - th * th));
            Zip::from(da.slice_mut(s![.., 2 * h..3 * h]))
                .and(&dh[j])
                .and(&cache.tanh_c)
                .and(&o_g)
                .for_each(|d, &dh, &th, &o| *d = dh * th * o * (1.0 - o));
            Zip::from(da.slice_mut(s![.., ..h]))
                .and(&dct)
                .and(&cache.cand)
                .and(&i_g)
                .for_each(|d, &dc, &cand, &i| *d = dc * cand * i * (1.0 - i));
            Zip::from(da.slice_mut(s![.., 3 * h..]))
                .and(&dct)
                .and(&i_g)
                .and(&cache.cand)
                .for_each(|d, &dc, &i, &cand| *d = dc * i * (1.0 - cand * cand));
            if t > 0 {
                let c_prev = &steps[t - 1][j].c;
                Zip::from(da.slice_mut(s![.., h..2 * h]))
                    .and(&dct)
                    .and(c_prev)
                    .and(&f_g)
                    .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
                Zip::from(&mut dc_prev[j]).and(&dct).and(&f_g).for_each(|d, &dc, &f| *d = dc * f);
            }

            gemm_acc(&cache.input.t(), &da.view(), &mut gw.wx);
            gw.b += &da.sum_axis(Axis(0));
            // the bottom layer's input is data, so its gradient is not needed
            let mut d_in = (j > 0).then(|| da.dot(&w.wx.t()));

            if t > 0 {
                let prev = &steps[t - 1];
                let da_ifo = da.slice(s![.., ..3 * h]);
                gemm_acc(&prev[j].h.t(), &da_ifo, &mut gw.wh);
                gemm_acc(&da_ifo, &w.wh.t(), &mut dh_prev[j].view_mut());

                let dcand = da.slice(s![.., 3 * h..]);
                let mut dr = Array2::<f64>::zeros((batch, l));
                for s in 0..l {
                    let rs = cache.r.slice(s![.., s..s + 1]);
                    // reset-gate gradient through r_s·proj_s
                    let col: Array1<f64> = (&dcand * &cache.proj[s]).sum_axis(Axis(1));
                    dr.column_mut(s).assign(&col);
                    let dp = &dcand * &rs;
                    gemm_acc(&prev[s].h.t(), &dp.view(), &mut gw.uc[s]);
                    gemm_acc(&dp.view(), &w.uc[s].t(), &mut dh_prev[s].view_mut());
                }
                Zip::from(&mut dr).and(&cache.r).for_each(|d, &r| *d *= r * (1.0 - r));
                gemm_acc(&cache.input.t(), &dr.view(), &mut gw.wg);
                gw.bg += &dr.sum_axis(Axis(0));
                if let Some(d_in) = d_in.as_mut() {
                    gemm_acc(&dr.view(), &w.wg.t(), &mut d_in.view_mut());
                }
                let mut hstar = Array2::zeros((batch, l * h));
                for (s, p) in prev.iter().enumerate() {
                    hstar.slice_mut(s![.., s * h..(s + 1) * h]).assign(&p.h);
                }
                gemm_acc(&hstar.t(), &dr.view(), &mut gw.ug);
                let dhs = dr.dot(&w.ug.t());
                for (s, dhp) in dh_prev.iter_mut().enumerate() {
                    *dhp += &dhs.slice(s![.., s * h..(s + 1) * h]);
                }
            }

            if let Some(d_in) = d_in {
                dh[j - 1] += &d_in;
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }
    loss
}
