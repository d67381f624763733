//! Parameterized layers: each owns [`ParamId`]s into a [`ParamStore`] and
//! records its computation on a [`Tape`].

use rand::Rng;

use crate::{Float, NnError, NormMode, ParamId, ParamStore, Result, RunningStatsUpdate, Tape, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Glorot/Xavier uniform initialization.
pub fn glorot_uniform<T: Float, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape, data).expect("glorot shape")
}

/// Affine map `x · W + b` on `[N, in]` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight =
            store.insert(format!("{name}.weight"), glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, rng), true)?;
        let bias =
            if with_bias { Some(store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]), true)?) } else { None };
        Ok(Linear { weight, bias, in_dim, out_dim })
    }

    /// Re-binds to parameters already present in `store` (after loading).
    pub fn bind<T: Float>(store: &ParamStore<T>, name: &str, with_bias: bool) -> Result<Self> {
        let weight = store.id(&format!("{name}.weight"))?;
        let &[in_dim, out_dim] = store.value(weight).shape() else {
            return Err(NnError::shape("Linear::bind", format!("`{name}.weight` must be 2-D")));
        };
        let bias = if with_bias { Some(store.id(&format!("{name}.bias"))?) } else { None };
        Ok(Linear { weight, bias, in_dim, out_dim })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Valid 2-D convolution without bias (always followed by batch norm here).
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub stride: (usize, usize),
}

impl Conv2d {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: [usize; 4],
        stride: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let [kh, kw, ci, co] = kernel;
        let k = glorot_uniform(&kernel, kh * kw * ci, kh * kw * co, rng);
        Ok(Conv2d { kernel: store.insert(format!("{name}.kernel"), k, true)?, stride })
    }

    pub fn bind<T: Float>(store: &ParamStore<T>, name: &str, stride: (usize, usize)) -> Result<Self> {
        Ok(Conv2d { kernel: store.id(&format!("{name}.kernel"))?, stride })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let k = tape.param(store, self.kernel);
        tape.conv2d(x, k, self.stride)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, features: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.insert(format!("{name}.gamma"), Tensor::full(&[features], T::one()), true)?,
            beta: store.insert(format!("{name}.beta"), Tensor::zeros(&[features]), true)?,
            running_mean: store.insert(format!("{name}.running_mean"), Tensor::zeros(&[features]), false)?,
            running_var: store.insert(format!("{name}.running_var"), Tensor::full(&[features], T::one()), false)?,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    pub fn bind<T: Float>(store: &ParamStore<T>, name: &str) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.id(&format!("{name}.gamma"))?,
            beta: store.id(&format!("{name}.beta"))?,
            running_mean: store.id(&format!("{name}.running_mean"))?,
            running_var: store.id(&format!("{name}.running_var"))?,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    /// In [`NormMode::Train`] the observed batch statistics are pushed to
    /// `updates`; the caller folds them into the store after the step.
    pub fn forward<T: Float>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: NormMode,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Var> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        let running = match mode {
            NormMode::RunningStatsEval => {
                Some((store.value(self.running_mean).data(), store.value(self.running_var).data()))
            }
            _ => None,
        };
        let (y, stats) = tape.batch_norm(x, gamma, beta, running, self.eps)?;
        if let (NormMode::Train, Some((batch_mean, batch_var))) = (mode, stats) {
            updates.push(RunningStatsUpdate {
                mean: self.running_mean,
                var: self.running_var,
                batch_mean,
                batch_var,
                momentum: self.momentum,
            });
        }
        Ok(y)
    }
}

/// One LSTM direction; see [`Tape::lstm`] for the gate layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
    pub reverse: bool,
}

impl Lstm {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let g4 = 4 * hidden;
        let w_ih = store.insert(format!("{name}.w_ih"), glorot_uniform(&[input, g4], input, g4, rng), true)?;
        let w_hh = store.insert(format!("{name}.w_hh"), glorot_uniform(&[hidden, g4], hidden, g4, rng), true)?;
        // forget-gate bias starts at 1
        let mut b = vec![T::zero(); g4];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        let bias = store.insert(format!("{name}.bias"), Tensor::new(&[g4], b)?, true)?;
        Ok(Lstm { w_ih, w_hh, bias, hidden, reverse })
    }

    pub fn bind<T: Float>(store: &ParamStore<T>, name: &str, reverse: bool) -> Result<Self> {
        let w_hh = store.id(&format!("{name}.w_hh"))?;
        Ok(Lstm {
            w_ih: store.id(&format!("{name}.w_ih"))?,
            w_hh,
            bias: store.id(&format!("{name}.bias"))?,
            hidden: store.value(w_hh).shape()[0],
            reverse,
        })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w_ih = tape.param(store, self.w_ih);
        let w_hh = tape.param(store, self.w_hh);
        let bias = tape.param(store, self.bias);
        tape.lstm(x, w_ih, w_hh, bias, self.reverse)
    }
}

/// Forward and backward LSTMs over the same sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, false, rng)?,
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, true, rng)?,
        })
    }

    pub fn bind<T: Float>(store: &ParamStore<T>, name: &str) -> Result<Self> {
        Ok(BiLstm {
            fwd: Lstm::bind(store, &format!("{name}.fwd"), false)?,
            bwd: Lstm::bind(store, &format!("{name}.bwd"), true)?,
        })
    }

    /// Returns `(f, b)`, each `[B, T, H]`: the left-to-right and right-to-left
    /// hidden states at every position.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        if tape.value(x).shape().get(1).copied().unwrap_or(0) == 0 {
            return Err(NnError::invalid("bi_lstm", "empty sequence"));
        }
        Ok((self.fwd.forward(tape, store, x)?, self.bwd.forward(tape, store, x)?))
    }
}
