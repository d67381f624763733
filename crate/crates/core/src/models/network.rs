use highlighter_nn::layers::{BatchNorm, BiLstm, Conv2d, Linear};
use highlighter_nn::{Float, NormMode, ParamStore, RunningStatsUpdate, Tape, Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{positional_encoding, AttentionCurve, ModelConfig, Prediction};
use crate::audio::MelChunk;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum AttentionHead {
    Nam { hidden: [Linear; 3], bns: [BatchNorm; 3], score: Linear },
    Rnam { lstm: BiLstm, w_f: Linear, w_b: Linear, score: Linear },
}

#[derive(Clone, Debug, PartialEq)]
struct Layers {
    convs: [Conv2d; 3],
    conv_bns: [BatchNorm; 3],
    attention: AttentionHead,
    hidden: Linear,
    hidden_bn: BatchNorm,
    out: Linear,
}

/// Values recorded by [`Model::record`].
#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    /// `[B, M]` per chunk, flattened as `[B * T, M]`.
    pub embeddings: Var,
    /// `[B, T]`, rows sum to one.
    pub attention: Var,
    /// `[B, T, C]`; absent for early fusion.
    pub chunk_predictions: Option<Var>,
    /// `[B, C]`.
    pub song_prediction: Var,
}

/// Parameters plus the layer wiring for one [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Float = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    layers: Layers,
}

impl<T: Float> Model<T> {
    /// Glorot-uniform weights drawn from a seeded stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let [c1, c2, c3] = config.conv_channels;
        let kernels = [[3, config.n_mels, 1, c1], [4, 1, c1, c2], [4, 1, c2, c3]];
        let strides = [(2, config.n_mels), (2, 1), (2, 1)];
        let mut convs = Vec::new();
        let mut conv_bns = Vec::new();
        for (i, (k, stride)) in kernels.iter().zip(strides).enumerate() {
            convs.push(Conv2d::new(&mut s, &format!("features.conv{}", i + 1), *k, stride, &mut rng)?);
            conv_bns.push(BatchNorm::new(&mut s, &format!("features.bn{}", i + 1), k[3])?);
        }
        let m = config.embed_dim();
        let a = config.attention_hidden;
        let attention = if config.variant.is_recurrent() {
            let h = config.lstm_hidden;
            AttentionHead::Rnam {
                lstm: BiLstm::new(&mut s, "attention.lstm", m, h, &mut rng)?,
                w_f: Linear::new(&mut s, "attention.w_f", h, a, false, &mut rng)?,
                w_b: Linear::new(&mut s, "attention.w_b", h, a, true, &mut rng)?,
                score: Linear::new(&mut s, "attention.score", a, 1, false, &mut rng)?,
            }
        } else {
            let mut hidden = Vec::new();
            let mut bns = Vec::new();
            for i in 0..3 {
                let input = if i == 0 { m } else { a };
                hidden.push(Linear::new(&mut s, &format!("attention.fc{}", i + 1), input, a, false, &mut rng)?);
                bns.push(BatchNorm::new(&mut s, &format!("attention.bn{}", i + 1), a)?);
            }
            AttentionHead::Nam {
                hidden: hidden.try_into().expect("three layers"),
                bns: bns.try_into().expect("three layers"),
                score: Linear::new(&mut s, "attention.score", a, 1, true, &mut rng)?,
            }
        };
        let p = config.predictor_hidden;
        let layers = Layers {
            convs: convs.try_into().expect("three layers"),
            conv_bns: conv_bns.try_into().expect("three layers"),
            attention,
            hidden: Linear::new(&mut s, "predictor.fc1", m, p, false, &mut rng)?,
            hidden_bn: BatchNorm::new(&mut s, "predictor.bn1", p)?,
            out: Linear::new(&mut s, "predictor.out", p, config.n_classes, true, &mut rng)?,
        };
        Ok(Model { config, params: s, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// The same network with parameters converted to another float type.
    pub fn cast<U: Float>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast(), layers: self.layers.clone() }
    }

    /// Stacks chunks into a `[N, frames, mels, 1]` input tensor.
    pub fn input_tensor(&self, chunks: &[&MelChunk]) -> Result<Tensor<T>> {
        let (f, m) = (self.config.frames_per_chunk, self.config.n_mels);
        let mut data = Vec::with_capacity(chunks.len() * f * m);
        for c in chunks {
            if c.data.len() != f * m {
                return Err(Error::invalid(format!("chunk has {} values, model expects {f}x{m}", c.data.len())));
            }
            data.extend(c.data.iter().map(|&v| T::lit(v as f64)));
        }
        Ok(Tensor::new(&[chunks.len(), f, m, 1], data)?)
    }

    fn bn(
        &self,
        tape: &mut Tape<T>,
        bn: &BatchNorm,
        x: Var,
        norm: NormMode,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Var> {
        let v = tape.value(x);
        let rows = v.numel() / v.last_dim();
        let norm = if norm == NormMode::BatchStatsEval && rows < 2 { NormMode::RunningStatsEval } else { norm };
        Ok(bn.forward(tape, &self.params, x, norm, updates)?)
    }

    fn dropout(&self, tape: &mut Tape<T>, x: Var, rng: &mut Option<&mut dyn RngCore>) -> Result<Var> {
        match rng {
            Some(r) => Ok(tape.dropout(x, self.config.dropout, true, &mut **r)?),
            None => Ok(x),
        }
    }

    /// `[N, frames, mels, 1]` chunks to `[N, M]` embeddings.
    pub fn record_embeddings(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        norm: NormMode,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Var> {
        let shape = tape.value(input).shape().to_vec();
        let want = [self.config.frames_per_chunk, self.config.n_mels, 1];
        if shape.len() != 4 || shape[1..] != want {
            return Err(Error::invalid(format!("input {shape:?} does not match chunks of {want:?}")));
        }
        let mut h = input;
        for (conv, bn) in self.layers.convs.iter().zip(&self.layers.conv_bns) {
            h = conv.forward(tape, &self.params, h)?;
            h = self.bn(tape, bn, h, norm, updates)?;
            h = tape.relu(h);
        }
        Ok(tape.time_max_pool(h)?)
    }

    /// `[B * T, M]` embeddings to `[B, T]` attention weights.
    pub fn record_attention(
        &self,
        tape: &mut Tape<T>,
        embeddings: Var,
        songs: usize,
        norm: NormMode,
        rng: &mut Option<&mut dyn RngCore>,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Var> {
        let m = self.config.embed_dim();
        let rows = tape.value(embeddings).shape()[0];
        if songs == 0 || !rows.is_multiple_of(songs) {
            return Err(Error::invalid(format!("{rows} chunks cannot be split into {songs} songs")));
        }
        let t = rows / songs;
        let scores = match &self.layers.attention {
            AttentionHead::Nam { hidden, bns, score } => {
                let mut x = embeddings;
                if self.config.variant.uses_positions() {
                    let mut pos = Vec::with_capacity(rows * m);
                    let table: Vec<Vec<f64>> = (1..=t).map(|i| positional_encoding(i, m)).collect::<Result<_>>()?;
                    for _ in 0..songs {
                        for row in &table {
                            pos.extend(row.iter().map(|&v| T::lit(v)));
                        }
                    }
                    let p = tape.constant(Tensor::new(&[rows, m], pos)?);
                    x = tape.add(x, p)?;
                }
                for (i, (fc, bn)) in hidden.iter().zip(bns).enumerate() {
                    x = self.dropout(tape, x, rng)?;
                    x = fc.forward(tape, &self.params, x)?;
                    x = self.bn(tape, bn, x, norm, updates)?;
                    x = if i < 2 { tape.relu(x) } else { tape.tanh(x) };
                }
                x = self.dropout(tape, x, rng)?;
                score.forward(tape, &self.params, x)?
            }
            AttentionHead::Rnam { lstm, w_f, w_b, score } => {
                let seq = tape.reshape(embeddings, &[songs, t, m])?;
                let (f, b) = lstm.forward(tape, &self.params, seq)?;
                let hd = self.config.lstm_hidden;
                let f = tape.reshape(f, &[rows, hd])?;
                let b = tape.reshape(b, &[rows, hd])?;
                let zf = w_f.forward(tape, &self.params, f)?;
                let zb = w_b.forward(tape, &self.params, b)?;
                let z = tape.add(zf, zb)?;
                let z = tape.tanh(z);
                score.forward(tape, &self.params, z)?
            }
        };
        let scores = tape.reshape(scores, &[songs, t])?;
        Ok(tape.softmax(scores))
    }

    /// `[N, M]` to `[N, C]` class probabilities.
    fn record_predictor(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        norm: NormMode,
        rng: &mut Option<&mut dyn RngCore>,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Var> {
        let x = self.dropout(tape, x, rng)?;
        let x = self.layers.hidden.forward(tape, &self.params, x)?;
        let x = self.bn(tape, &self.layers.hidden_bn, x, norm, updates)?;
        let x = tape.relu(x);
        let x = self.dropout(tape, x, rng)?;
        let x = self.layers.out.forward(tape, &self.params, x)?;
        Ok(tape.softmax(x))
    }

    /// Records the whole network for `songs` songs whose chunks are stacked
    /// song-major in `input`. Dropout is active iff `rng` is given.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        songs: usize,
        norm: NormMode,
        mut rng: Option<&mut dyn RngCore>,
        updates: &mut Vec<RunningStatsUpdate<T>>,
    ) -> Result<Outputs> {
        let embeddings = self.record_embeddings(tape, input, norm, updates)?;
        let rows = tape.value(embeddings).shape()[0];
        let attention = self.record_attention(tape, embeddings, songs, norm, &mut rng, updates)?;
        let t = rows / songs;
        let (chunk_predictions, song_prediction) = if self.config.variant.is_early_fusion() {
            let seq = tape.reshape(embeddings, &[songs, t, self.config.embed_dim()])?;
            let context = tape.weighted_sum(attention, seq)?;
            (None, self.record_predictor(tape, context, norm, &mut rng, updates)?)
        } else {
            let per_chunk = self.record_predictor(tape, embeddings, norm, &mut rng, updates)?;
            let per_chunk = tape.reshape(per_chunk, &[songs, t, self.config.n_classes])?;
            (Some(per_chunk), tape.weighted_sum(attention, per_chunk)?)
        };
        Ok(Outputs { embeddings, attention, chunk_predictions, song_prediction })
    }

    /// Inference on one song, chunks normalized by their own statistics.
    pub fn predict(&self, chunks: &[MelChunk]) -> Result<(Prediction, AttentionCurve)> {
        self.predict_with(chunks, NormMode::BatchStatsEval)
    }

    pub fn predict_with(&self, chunks: &[MelChunk], norm: NormMode) -> Result<(Prediction, AttentionCurve)> {
        if chunks.is_empty() {
            return Err(Error::invalid("song has no chunks"));
        }
        if norm == NormMode::Train {
            return Err(Error::invalid("inference cannot use training-mode normalization"));
        }
        let mut tape = Tape::new();
        let refs: Vec<&MelChunk> = chunks.iter().collect();
        let input = tape.constant(self.input_tensor(&refs)?);
        let out = self.record(&mut tape, input, 1, norm, None, &mut Vec::new())?;
        let to_f64 = |v: &Tensor<T>| v.data().iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let chunk_level = out
            .chunk_predictions
            .map(|v| to_f64(tape.value(v)).chunks(self.config.n_classes).map(<[f64]>::to_vec).collect());
        let prediction = Prediction { chunk_level, song_level: to_f64(tape.value(out.song_prediction)) };
        let curve =
            AttentionCurve { scores: to_f64(tape.value(out.attention)), chunk_seconds: self.config.chunk_seconds };
        Ok((prediction, curve))
    }
}
