//! Slice-level kernels with hand-written backward passes.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and is gradient-checked in `f64`. Layouts are row-major: dense weights are
//! `[out][in]`, convolution weights `[out][in][k]`, sequences channel-major
//! `[channel][position]`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dot product with eight independent accumulators so the compiler can
/// vectorize without reassociating a single running sum.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = T::zero();
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`.
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn linear_forward<T: Scalar>(w: &[T], b: &[T], x: &[T], y: &mut [T]) {
    let inp = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = b[o] + dot(&w[o * inp..(o + 1) * inp], x);
    }
}

/// Accumulates parameter gradients; writes `dx` when requested.
pub fn linear_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let inp = x.len();
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        if g != T::zero() {
            axpy(g, x, &mut dw[o * inp..(o + 1) * inp]);
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = T::zero());
        for (o, &g) in dy.iter().enumerate() {
            if g != T::zero() {
                axpy(g, &w[o * inp..(o + 1) * inp], dx);
            }
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `dy` where the ReLU output was zero.
pub fn relu_backward<T: Scalar>(out: &[T], dy: &mut [T]) {
    for (g, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Gate forward: `weights = sigmoid(w·x + b)` (optionally with a ReLU before
/// the sigmoid), `gated = x ⊙ weights`. `param_index(c, t)` selects the
/// parameter slot for element `(c, t)`.
pub struct GateShape {
    pub channels: usize,
    pub len: usize,
    pub per_position: bool,
    pub relu: bool,
}

impl GateShape {
    #[inline]
    fn param(&self, c: usize, t: usize) -> usize {
        if self.per_position {
            c * self.len + t
        } else {
            c
        }
    }

    pub fn n_params(&self) -> usize {
        if self.per_position {
            self.channels * self.len
        } else {
            self.channels
        }
    }
}

pub fn gate_forward<T: Scalar>(
    shape: &GateShape,
    w: &[T],
    b: &[T],
    x: &[T],
    gated: &mut [T],
    weights: &mut [T],
) {
    for c in 0..shape.channels {
        let row = c * shape.len..(c + 1) * shape.len;
        if shape.per_position {
            for t in row.clone() {
                let mut a = w[t] * x[t] + b[t];
                if shape.relu && a < T::zero() {
                    a = T::zero();
                }
                let s = sigmoid(a);
                weights[t] = s;
                gated[t] = x[t] * s;
            }
        } else {
            let (wc, bc) = (w[c], b[c]);
            for t in row {
                let mut a = wc * x[t] + bc;
                if shape.relu && a < T::zero() {
                    a = T::zero();
                }
                let s = sigmoid(a);
                weights[t] = s;
                gated[t] = x[t] * s;
            }
        }
    }
}

/// Gate backward. Input gradients are not needed (gates sit on raw inputs).
pub fn gate_backward<T: Scalar>(
    shape: &GateShape,
    w: &[T],
    b: &[T],
    x: &[T],
    weights: &[T],
    dgated: &[T],
    dw: &mut [T],
    db: &mut [T],
) {
    for c in 0..shape.channels {
        for t in 0..shape.len {
            let i = c * shape.len + t;
            let p = shape.param(c, t);
            let s = weights[i];
            // d gated / d a = x * s (1 - s), zero where the ReLU clipped.
            let mut da = dgated[i] * x[i] * s * (T::one() - s);
            if shape.relu && w[p] * x[i] + b[p] <= T::zero() {
                da = T::zero();
            }
            dw[p] += da * x[i];
            db[p] += da;
        }
    }
}

/// Group normalization over `[channels][len]`.
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub const NORM_EPS: f64 = 1e-5;

pub fn group_norm_forward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    y: &mut [T],
) -> NormCache<T> {
    let per = channels / groups;
    let n = per * len;
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    let nt: T = cast(n as f64);
    for g in 0..groups {
        let range = g * n..(g + 1) * n;
        let seg = &x[range.clone()];
        let mean = seg.iter().copied().sum::<T>() / nt;
        let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
        let is = T::one() / (var + cast(NORM_EPS)).sqrt();
        inv_std.push(is);
        for (h, &v) in xhat[range].iter_mut().zip(seg) {
            *h = (v - mean) * is;
        }
    }
    for c in 0..channels {
        let (gc, bc) = (gamma[c], beta[c]);
        for t in c * len..(c + 1) * len {
            y[t] = gc * xhat[t] + bc;
        }
    }
    NormCache { xhat, inv_std }
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    channels: usize,
    len: usize,
    groups: usize,
    gamma: &[T],
    dy: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: Option<&mut [T]>,
) {
    let xhat = &cache.xhat;
    for c in 0..channels {
        let row = c * len..(c + 1) * len;
        dgamma[c] += dot(&dy[row.clone()], &xhat[row.clone()]);
        dbeta[c] += dy[row].iter().copied().sum::<T>();
    }
    let Some(dx) = dx else { return };
    let per = channels / groups;
    let n = per * len;
    let nt: T = cast(n as f64);
    for g in 0..groups {
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for c in g * per..(g + 1) * per {
            for t in c * len..(c + 1) * len {
                let d = dy[t] * gamma[c];
                sum_d += d;
                sum_dx += d * xhat[t];
            }
        }
        let is = cache.inv_std[g];
        for c in g * per..(g + 1) * per {
            for t in c * len..(c + 1) * len {
                let d = dy[t] * gamma[c];
                dx[t] = is * (d - sum_d / nt - xhat[t] * sum_dx / nt);
            }
        }
    }
}

/// Same-padded 1D convolution (odd kernel), stride 1.
pub fn conv1d_forward<T: Scalar>(
    w: &[T],
    b: &[T],
    x: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    len: usize,
    y: &mut [T],
) {
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let yo = &mut y[o * len..(o + 1) * len];
        yo.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..cin {
            let xi = &x[i * len..(i + 1) * len];
            for kk in 0..k {
                let wv = w[(o * cin + i) * k + kk];
                let shift = kk as isize - pad;
                let t0 = (-shift).max(0) as usize;
                let t1 = (len as isize - shift).min(len as isize) as usize;
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + shift) as usize;
                axpy(wv, &xi[s0..s0 + (t1 - t0)], &mut yo[t0..t1]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    len: usize,
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let pad = (k / 2) as isize;
    if let Some(dx) = dx.as_deref_mut() {
        dx.iter_mut().for_each(|v| *v = T::zero());
    }
    for o in 0..cout {
        let dyo = &dy[o * len..(o + 1) * len];
        db[o] += dyo.iter().copied().sum::<T>();
        for i in 0..cin {
            let xi = &x[i * len..(i + 1) * len];
            for kk in 0..k {
                let widx = (o * cin + i) * k + kk;
                let shift = kk as isize - pad;
                let t0 = (-shift).max(0) as usize;
                let t1 = (len as isize - shift).min(len as isize) as usize;
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + shift) as usize;
                let n = t1 - t0;
                dw[widx] += dot(&dyo[t0..t1], &xi[s0..s0 + n]);
                if let Some(dx) = dx.as_deref_mut() {
                    axpy(w[widx], &dyo[t0..t1], &mut dx[i * len + s0..i * len + s0 + n]);
                }
            }
        }
    }
}

/// ReLU followed by non-overlapping max pooling. Returns pooled values and,
/// per output, the source index (or `usize::MAX` when the ReLU clipped it).
pub fn relu_maxpool_forward<T: Scalar>(
    x: &[T],
    channels: usize,
    len: usize,
    pool: usize,
) -> (Vec<T>, Vec<usize>) {
    let out_len = len / pool;
    let mut y = vec![T::zero(); channels * out_len];
    let mut idx = vec![usize::MAX; channels * out_len];
    for c in 0..channels {
        for j in 0..out_len {
            let start = c * len + j * pool;
            let mut best = start;
            for t in start + 1..start + pool {
                if x[t] > x[best] {
                    best = t;
                }
            }
            if x[best] > T::zero() {
                y[c * out_len + j] = x[best];
                idx[c * out_len + j] = best;
            }
        }
    }
    (y, idx)
}

pub fn relu_maxpool_backward<T: Scalar>(idx: &[usize], dy: &[T], dx: &mut [T]) {
    dx.iter_mut().for_each(|v| *v = T::zero());
    for (&i, &g) in idx.iter().zip(dy) {
        if i != usize::MAX {
            dx[i] += g;
        }
    }
}

/// Single-layer GRU (reset, update, candidate gate order) over a
/// channel-major input `[input][steps]`, starting from a zero state.
pub struct GruShape {
    pub input: usize,
    pub hidden: usize,
    pub steps: usize,
}

pub struct GruCache<T> {
    /// Time-major inputs `[steps][input]`.
    pub xs: Vec<T>,
    /// States `h_0..=h_T`, `[steps + 1][hidden]`.
    pub hs: Vec<T>,
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    /// `W_hn h + b_hn` per step.
    pub hn: Vec<T>,
}

pub fn gru_forward<T: Scalar>(
    shape: &GruShape,
    w_ih: &[T],
    w_hh: &[T],
    b_ih: &[T],
    b_hh: &[T],
    x: &[T],
) -> GruCache<T> {
    let (inp, hid, steps) = (shape.input, shape.hidden, shape.steps);
    let mut xs = vec![T::zero(); steps * inp];
    for i in 0..inp {
        for t in 0..steps {
            xs[t * inp + i] = x[i * steps + t];
        }
    }
    let mut hs = vec![T::zero(); (steps + 1) * hid];
    let mut r = vec![T::zero(); steps * hid];
    let mut z = vec![T::zero(); steps * hid];
    let mut n = vec![T::zero(); steps * hid];
    let mut hn = vec![T::zero(); steps * hid];
    let mut gi = vec![T::zero(); 3 * hid];
    let mut gh = vec![T::zero(); 3 * hid];
    for t in 0..steps {
        let xt = &xs[t * inp..(t + 1) * inp];
        linear_forward(w_ih, b_ih, xt, &mut gi);
        let (prev, next) = hs.split_at_mut((t + 1) * hid);
        let h = &prev[t * hid..];
        linear_forward(w_hh, b_hh, h, &mut gh);
        let hnext = &mut next[..hid];
        for j in 0..hid {
            let rj = sigmoid(gi[j] + gh[j]);
            let zj = sigmoid(gi[hid + j] + gh[hid + j]);
            let nj = (gi[2 * hid + j] + rj * gh[2 * hid + j]).tanh();
            r[t * hid + j] = rj;
            z[t * hid + j] = zj;
            n[t * hid + j] = nj;
            hn[t * hid + j] = gh[2 * hid + j];
            hnext[j] = (T::one() - zj) * nj + zj * h[j];
        }
    }
    GruCache { xs, hs, r, z, n, hn }
}

impl<T: Scalar> GruCache<T> {
    pub fn last(&self, hidden: usize) -> &[T] {
        &self.hs[self.hs.len() - hidden..]
    }
}

/// Backpropagation through time from a gradient on the final state.
#[allow(clippy::too_many_arguments)]
pub fn gru_backward<T: Scalar>(
    shape: &GruShape,
    w_ih: &[T],
    w_hh: &[T],
    cache: &GruCache<T>,
    dh_last: &[T],
    dw_ih: &mut [T],
    dw_hh: &mut [T],
    db_ih: &mut [T],
    db_hh: &mut [T],
    dx: Option<&mut [T]>,
) {
    let (inp, hid, steps) = (shape.input, shape.hidden, shape.steps);
    let mut dh = dh_last.to_vec();
    let mut gi = vec![T::zero(); 3 * hid];
    let mut gh = vec![T::zero(); 3 * hid];
    let mut dh_prev = vec![T::zero(); hid];
    let mut dxt = vec![T::zero(); inp];
    let mut dxs = dx.as_ref().map(|_| vec![T::zero(); steps * inp]);
    for t in (0..steps).rev() {
        let h = &cache.hs[t * hid..(t + 1) * hid];
        for j in 0..hid {
            let k = t * hid + j;
            let (r, z, n, hn) = (cache.r[k], cache.z[k], cache.n[k], cache.hn[k]);
            let d = dh[j];
            let dn = d * (T::one() - z);
            let dz = d * (h[j] - n);
            dh_prev[j] = d * z;
            let dn_pre = dn * (T::one() - n * n);
            let dr = dn_pre * hn;
            let dr_pre = dr * r * (T::one() - r);
            let dz_pre = dz * z * (T::one() - z);
            gi[j] = dr_pre;
            gi[hid + j] = dz_pre;
            gi[2 * hid + j] = dn_pre;
            gh[j] = dr_pre;
            gh[hid + j] = dz_pre;
            gh[2 * hid + j] = dn_pre * r;
        }
        let xt = &cache.xs[t * inp..(t + 1) * inp];
        linear_backward(w_ih, xt, &gi, dw_ih, db_ih, dxs.as_ref().map(|_| &mut dxt[..]));
        if let Some(dxs) = dxs.as_mut() {
            dxs[t * inp..(t + 1) * inp].copy_from_slice(&dxt);
        }
        let mut dh_from_hh = vec![T::zero(); hid];
        linear_backward(w_hh, h, &gh, dw_hh, db_hh, Some(&mut dh_from_hh));
        for j in 0..hid {
            dh[j] = dh_prev[j] + dh_from_hh[j];
        }
    }
    if let (Some(dx), Some(dxs)) = (dx, dxs) {
        for i in 0..inp {
            for t in 0..steps {
                dx[i * steps + t] = dxs[t * inp + i];
            }
        }
    }
}
