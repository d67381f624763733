//! Central finite-difference verification of tape gradients.

use crate::{ParamStore, Result, Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-3;

/// `‖analytic − numeric‖ / max(‖numeric‖, 1e-8)` over all checked entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckResult {
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub entries: usize,
}

impl CheckResult {
    fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let (mut diff, mut an, mut nu) = (0.0, 0.0, 0.0);
        for &(a, n) in pairs {
            diff += (a - n) * (a - n);
            an += a * a;
            nu += n * n;
        }
        CheckResult {
            rel_error: diff.sqrt() / nu.sqrt().max(1e-8),
            analytic_norm: an.sqrt(),
            numeric_norm: nu.sqrt(),
            entries: pairs.len(),
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error < tol
    }
}

/// Checks gradients with respect to `inputs`. `build` must be deterministic:
/// it is re-run once per perturbed entry.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> Result<CheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss)[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut pairs = Vec::new();
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.wrt(*v).unwrap_or(&zeros);
        for j in 0..inputs[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            pairs.push((analytic.data()[j], (up - down) / (2.0 * h)));
        }
    }
    Ok(CheckResult::from_pairs(&pairs))
}

/// Checks gradients with respect to every trainable parameter in `store`.
pub fn check_params<F>(store: &ParamStore<f64>, h: f64, build: F) -> Result<CheckResult>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, s)?;
        Ok(tape.value(loss)[0])
    };
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    let grads = tape.backward(loss)?;

    let mut pairs = Vec::new();
    let mut work = store.clone();
    for id in store.trainable_ids() {
        let zeros = Tensor::zeros(store.value(id).shape());
        let analytic = grads.param(id).unwrap_or(&zeros);
        for j in 0..analytic.numel() {
            let orig = work.value(id).data()[j];
            work.value_mut(id).data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig;
            pairs.push((analytic.data()[j], (up - down) / (2.0 * h)));
        }
    }
    Ok(CheckResult::from_pairs(&pairs))
}

/// Reduces any output to a scalar with fixed weights so that no gradient
/// direction is trivially zero (a plain sum would be blind to softmax).
pub fn project(tape: &mut Tape<f64>, y: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}


/// One entry of [`layer_suite`].
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub layer: &'static str,
    pub shape: String,
    pub result: CheckResult,
}

/// Finite-difference checks for every op family on five small random shapes
/// each, in `f64` with step `h`.
pub fn layer_suite(seed: u64, h: f64) -> Result<Vec<SuiteEntry>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let mut rng = StdRng::seed_from_u64(seed);
    let normal = |shape: &[usize], rng: &mut StdRng| -> Tensor<f64> {
        let n = shape.iter().product();
        // sum of uniforms: cheap, smooth enough, and bounded
        let data = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 0.6).collect();
        Tensor::new(shape, data).expect("shape")
    };
    let mut out = Vec::new();
    let mut push = |layer, shape: String, result| out.push(SuiteEntry { layer, shape, result });

    // convolution: input and kernel
    for &(n, hh, w, ci, kh, kw, co, s) in &[
        (1, 5, 4, 1, 3, 4, 2, (1, 1)),
        (2, 9, 6, 1, 3, 6, 3, (2, 6)),
        (2, 7, 1, 3, 4, 1, 2, (2, 1)),
        (1, 8, 3, 2, 2, 2, 4, (1, 1)),
        (3, 10, 1, 2, 4, 1, 3, (2, 1)),
    ] {
        let x = normal(&[n, hh, w, ci], &mut rng);
        let k = normal(&[kh, kw, ci, co], &mut rng);
        let oh = (hh - kh) / s.0 + 1;
        let ow = (w - kw) / s.1 + 1;
        let r = normal(&[n, oh, ow, co], &mut rng);
        let res = check_inputs(&[x, k], h, |t, v| {
            let y = t.conv2d(v[0], v[1], s)?;
            project(t, y, &r)
        })?;
        push("conv2d", format!("x[{n},{hh},{w},{ci}] k[{kh},{kw},{ci},{co}] s{s:?}"), res);
    }

    // affine map with bias
    for &(n, i, o) in &[(1, 1, 1), (2, 3, 4), (4, 5, 2), (3, 7, 7), (6, 2, 9)] {
        let x = normal(&[n, i], &mut rng);
        let w = normal(&[i, o], &mut rng);
        let b = normal(&[o], &mut rng);
        let r = normal(&[n, o], &mut rng);
        let res = check_inputs(&[x, w, b], h, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            project(t, y, &r)
        })?;
        push("linear", format!("[{n},{i}]x[{i},{o}]"), res);
    }

    // batch norm with batch statistics
    for shape in [vec![2, 1], vec![4, 3], vec![8, 5], vec![3, 4, 1, 2], vec![2, 5, 1, 6]] {
        let c = *shape.last().unwrap();
        let x = normal(&shape, &mut rng);
        let g = normal(&[c], &mut rng);
        let b = normal(&[c], &mut rng);
        let r = normal(&shape, &mut rng);
        let res = check_inputs(&[x, g, b], h, |t, v| {
            let (y, _) = t.batch_norm(v[0], v[1], v[2], None, 1e-5)?;
            project(t, y, &r)
        })?;
        push("batch_norm", format!("{shape:?}"), res);
    }

    // pointwise activations and softmax
    type Unary = fn(&mut Tape<f64>, Var) -> Var;
    let unaries: [(&str, Unary); 4] = [
        ("relu", |t, x| t.relu(x)),
        ("tanh", |t, x| t.tanh(x)),
        ("sigmoid", |t, x| t.sigmoid(x)),
        ("softmax", |t, x| t.softmax(x)),
    ];
    for (name, f) in unaries {
        for shape in [vec![1, 2], vec![2, 3], vec![4, 7], vec![3, 2, 5], vec![1, 16]] {
            let mut x = normal(&shape, &mut rng);
            if name == "relu" {
                // keep clear of the kink
                x = x.map(|v| v + 0.05 * v.signum());
            }
            let r = normal(&shape, &mut rng);
            let res = check_inputs(&[x], h, |t, v| {
                let y = f(t, v[0]);
                project(t, y, &r)
            })?;
            push(name, format!("{shape:?}"), res);
        }
    }

    // time max-pool on well separated values
    for &(n, tt, c) in &[(1, 2, 1), (2, 5, 3), (3, 14, 4), (1, 31, 2), (4, 3, 6)] {
        let len = n * tt * c;
        let mut vals: Vec<f64> = (0..len).map(|i| i as f64 * 0.05 - 1.0).collect();
        for i in (1..len).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::new(&[n, tt, 1, c], vals)?;
        let r = normal(&[n, c], &mut rng);
        let res = check_inputs(&[x], h, |t, v| {
            let y = t.time_max_pool(v[0])?;
            project(t, y, &r)
        })?;
        push("time_max_pool", format!("[{n},{tt},1,{c}]"), res);
    }

    // bidirectional LSTM
    for &(b, tt, d, hd) in &[(1, 1, 1, 1), (1, 3, 2, 2), (2, 4, 3, 2), (2, 2, 4, 3), (3, 5, 2, 1)] {
        let mut inputs = vec![normal(&[b, tt, d], &mut rng)];
        for _ in 0..2 {
            inputs.push(normal(&[d, 4 * hd], &mut rng).map(|v| v * 0.7));
            inputs.push(normal(&[hd, 4 * hd], &mut rng).map(|v| v * 0.7));
            inputs.push(normal(&[4 * hd], &mut rng));
        }
        let rf = normal(&[b, tt, hd], &mut rng);
        let rb = normal(&[b, tt, hd], &mut rng);
        let res = check_inputs(&inputs, h, |t, v| {
            let f = t.lstm(v[0], v[1], v[2], v[3], false)?;
            let bw = t.lstm(v[0], v[4], v[5], v[6], true)?;
            let lf = project(t, f, &rf)?;
            let lb = project(t, bw, &rb)?;
            t.add(lf, lb)
        })?;
        push("bi_lstm", format!("x[{b},{tt},{d}] h{hd}"), res);
    }

    // probabilities kept away from 0 and 1, where the third derivative of ln p
    // makes the central difference itself inaccurate at this step size
    for &(n, c) in &[(1, 1), (2, 3), (4, 2), (3, 7), (5, 5)] {
        let p = Tensor::new(&[n, c], (0..n * c).map(|_| rng.random_range(0.2..0.8)).collect())?;
        let y = Tensor::new(&[n, c], (0..n * c).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect())?;
        let res = check_inputs(&[p], h, |t, v| t.binary_cross_entropy(v[0], &y))?;
        push("binary_cross_entropy", format!("[{n},{c}]"), res);
    }
    for &(n, c) in &[(1, 2), (2, 3), (4, 2), (3, 7), (5, 5)] {
        let x = normal(&[n, c], &mut rng);
        let mut y = vec![0.0; n * c];
        for i in 0..n {
            y[i * c + rng.random_range(0..c)] = 1.0;
        }
        let y = Tensor::new(&[n, c], y)?;
        let res = check_inputs(&[x], h, |t, v| {
            let p = t.softmax(v[0]);
            t.categorical_cross_entropy(p, &y)
        })?;
        push("categorical_cross_entropy", format!("[{n},{c}]"), res);
    }

    // attention fusion: late (over chunk predictions) and early (over embeddings)
    for &(b, tt, c) in &[(1, 1, 2), (1, 3, 2), (2, 4, 3), (3, 2, 5), (2, 8, 4)] {
        let scores = normal(&[b, tt], &mut rng);
        let logits = normal(&[b, tt, c], &mut rng);
        let r = normal(&[b, c], &mut rng);
        let res = check_inputs(&[scores, logits], h, |t, v| {
            let a = t.softmax(v[0]);
            let p = t.softmax(v[1]);
            let y = t.weighted_sum(a, p)?;
            project(t, y, &r)
        })?;
        push("late_fusion", format!("[{b},{tt},{c}]"), res);
    }
    for &(b, tt, d, c) in &[(1, 1, 2, 2), (1, 3, 4, 2), (2, 4, 3, 3), (3, 2, 5, 4), (2, 8, 4, 6)] {
        let scores = normal(&[b, tt], &mut rng);
        let emb = normal(&[b, tt, d], &mut rng);
        let w = normal(&[d, c], &mut rng);
        let r = normal(&[b, c], &mut rng);
        let res = check_inputs(&[scores, emb, w], h, |t, v| {
            let a = t.softmax(v[0]);
            let ctx = t.weighted_sum(a, v[1])?;
            let y = t.matmul(ctx, v[2])?;
            let y = t.softmax(y);
            project(t, y, &r)
        })?;
        push("early_fusion", format!("[{b},{tt},{d}]->{c}"), res);
    }
    Ok(out)
}
