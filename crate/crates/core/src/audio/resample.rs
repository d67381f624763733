use std::f64::consts::PI;

/// Zero crossings of the interpolation kernel on each side, at the lower of
/// the two rates.
const HALF_ZEROS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling by windowed-sinc interpolation (Hann window).
/// Returns the input unchanged when the rates match.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    // cutoff in cycles per input sample
    let cutoff = 0.5 * ROLLOFF * ratio.min(1.0);
    let half_width = HALF_ZEROS / (2.0 * cutoff);
    let n_out = ((samples.len() as f64) * ratio).round().max(1.0) as usize;
    (0..n_out)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(samples.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in samples.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let window = 0.5 + 0.5 * (PI * d / half_width).cos();
                acc += x as f64 * 2.0 * cutoff * sinc(2.0 * cutoff * d) * window;
            }
            acc.clamp(-1.0, 1.0) as f32
        })
        .collect()
}
