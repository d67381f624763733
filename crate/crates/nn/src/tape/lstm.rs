//! Single-direction LSTM over a `[B, T, D]` sequence with BPTT.
//!
//! Gate layout along the `4H` axis is input, forget, cell candidate, output.
//! Initial hidden and cell states are zero. A reversed LSTM walks the time
//! axis from `T-1` down to `0` but still writes `h_t` at position `t`.

use crate::tensor::gemm;
use crate::Float;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
}

impl LstmDims {
    fn order(&self) -> Vec<usize> {
        if self.reverse {
            (0..self.steps).rev().collect()
        } else {
            (0..self.steps).collect()
        }
    }
}

/// Time-major activations saved for the backward pass.
pub(crate) struct LstmCache<T> {
    /// `[T, B, 4H]` post-nonlinearity gate values.
    gates: Vec<T>,
    /// `[T, B, H]` cell states.
    cells: Vec<T>,
    /// `[T, B, H]` hidden states.
    hidden: Vec<T>,
}

fn sigmoid<T: Float>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn forward<T: Float>(x: &[T], w_ih: &[T], w_hh: &[T], bias: &[T], d: LstmDims) -> (Vec<T>, LstmCache<T>) {
    let (b, t_len, h) = (d.batch, d.steps, d.hidden);
    let g4 = 4 * h;
    // Input projections for every (b, t) row at once.
    let mut xw = vec![T::zero(); b * t_len * g4];
    gemm(b * t_len, d.input, g4, x, false, w_ih, false, T::zero(), &mut xw);

    let mut gates = vec![T::zero(); t_len * b * g4];
    let mut cells = vec![T::zero(); t_len * b * h];
    let mut hidden = vec![T::zero(); t_len * b * h];
    let mut z = vec![T::zero(); b * g4];
    let mut prev: Option<usize> = None;
    for t in d.order() {
        match prev {
            Some(p) => gemm(b, h, g4, &hidden[p * b * h..(p + 1) * b * h], false, w_hh, false, T::zero(), &mut z),
            None => z.iter_mut().for_each(|v| *v = T::zero()),
        }
        for bi in 0..b {
            let zrow = &mut z[bi * g4..(bi + 1) * g4];
            let xrow = &xw[(bi * t_len + t) * g4..(bi * t_len + t + 1) * g4];
            for j in 0..g4 {
                zrow[j] += xrow[j] + bias[j];
            }
            let grow = &mut gates[(t * b + bi) * g4..(t * b + bi + 1) * g4];
            for j in 0..h {
                grow[j] = sigmoid(zrow[j]);
                grow[h + j] = sigmoid(zrow[h + j]);
                grow[2 * h + j] = zrow[2 * h + j].tanh();
                grow[3 * h + j] = sigmoid(zrow[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = prev.map_or(T::zero(), |p| cells[(p * b + bi) * h + j]);
                let c = grow[h + j] * c_prev + grow[j] * grow[2 * h + j];
                cells[(t * b + bi) * h + j] = c;
                hidden[(t * b + bi) * h + j] = grow[3 * h + j] * c.tanh();
            }
        }
        prev = Some(t);
    }

    let mut out = vec![T::zero(); b * t_len * h];
    for t in 0..t_len {
        for bi in 0..b {
            out[(bi * t_len + t) * h..(bi * t_len + t + 1) * h]
                .copy_from_slice(&hidden[(t * b + bi) * h..(t * b + bi + 1) * h]);
        }
    }
    (out, LstmCache { gates, cells, hidden })
}

pub(crate) struct LstmGrads<T> {
    pub dx: Vec<T>,
    pub dw_ih: Vec<T>,
    pub dw_hh: Vec<T>,
    pub dbias: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Float>(
    grad: &[T],
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    cache: &LstmCache<T>,
    d: LstmDims,
) -> LstmGrads<T> {
    let (b, t_len, h) = (d.batch, d.steps, d.hidden);
    let g4 = 4 * h;
    let one = T::one();
    let mut dz_all = vec![T::zero(); b * t_len * g4];
    let mut dw_hh = vec![T::zero(); h * g4];
    let mut dh_next = vec![T::zero(); b * h];
    let mut dc_next = vec![T::zero(); b * h];
    let mut dz = vec![T::zero(); b * g4];

    let order = d.order();
    for (k, &t) in order.iter().enumerate().rev() {
        let prev = if k > 0 { Some(order[k - 1]) } else { None };
        for bi in 0..b {
            let grow = &cache.gates[(t * b + bi) * g4..(t * b + bi + 1) * g4];
            let dzrow = &mut dz[bi * g4..(bi + 1) * g4];
            for j in 0..h {
                let (i, f, g, o) = (grow[j], grow[h + j], grow[2 * h + j], grow[3 * h + j]);
                let c = cache.cells[(t * b + bi) * h + j];
                let c_prev = prev.map_or(T::zero(), |p| cache.cells[(p * b + bi) * h + j]);
                let tc = c.tanh();
                let dh = grad[(bi * t_len + t) * h + j] + dh_next[bi * h + j];
                let dc = dh * o * (one - tc * tc) + dc_next[bi * h + j];
                dzrow[j] = dc * g * i * (one - i);
                dzrow[h + j] = dc * c_prev * f * (one - f);
                dzrow[2 * h + j] = dc * i * (one - g * g);
                dzrow[3 * h + j] = dh * tc * o * (one - o);
                dc_next[bi * h + j] = dc * f;
            }
            dz_all[(bi * t_len + t) * g4..(bi * t_len + t + 1) * g4].copy_from_slice(dzrow);
        }
        match prev {
            Some(p) => {
                let h_prev = &cache.hidden[p * b * h..(p + 1) * b * h];
                gemm(h, b, g4, h_prev, true, &dz, false, T::one(), &mut dw_hh);
                gemm(b, g4, h, &dz, false, w_hh, true, T::zero(), &mut dh_next);
            }
            None => dh_next.iter_mut().for_each(|v| *v = T::zero()),
        }
    }

    let rows = b * t_len;
    let mut dw_ih = vec![T::zero(); d.input * g4];
    gemm(d.input, rows, g4, x, true, &dz_all, false, T::zero(), &mut dw_ih);
    let mut dx = vec![T::zero(); rows * d.input];
    gemm(rows, g4, d.input, &dz_all, false, w_ih, true, T::zero(), &mut dx);
    let mut dbias = vec![T::zero(); g4];
    for row in dz_all.chunks_exact(g4) {
        for (acc, &v) in dbias.iter_mut().zip(row) {
            *acc += v;
        }
    }
    LstmGrads { dx, dw_ih, dw_hh, dbias }
}
