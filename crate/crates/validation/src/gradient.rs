//! Central finite differences on the f64 network.

use mrforge::mr::LabeledSample;
use mrforge::nn::{self, ActivationPattern, NetworkParams, Workspace};
use mrforge::transforms::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Relative errors are taken against max(|analytic|, |numeric|, FLOOR).
pub const FLOOR: f64 = 1e-6;
pub const PER_LAYER: usize = 100;
pub const LAYERS: [&str; 5] = ["conv1", "conv2", "fc1", "fc2", "fc3"];

#[derive(Debug)]
pub struct LayerReport {
    pub name: &'static str,
    pub checked: usize,
    /// Components redrawn because a ReLU or pool switch fell inside ±STEP.
    pub kinked: usize,
    pub worst: f64,
}

fn patterns(params: &NetworkParams<f64>, data: &[LabeledSample]) -> Vec<ActivationPattern> {
    let mut ws = Workspace::new();
    data.iter()
        .map(|s| {
            nn::forward_with(params, &s.image, &mut ws).unwrap();
            ws.activation_pattern()
        })
        .collect()
}

/// Compares `PER_LAYER` random components per layer; errors name the first mismatch.
pub fn check(seed: u64) -> Result<Vec<LayerReport>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: NetworkParams<f64> = nn::init_params(seed);
    // Nonzero biases so no unit sits exactly on a ReLU kink.
    for (i, t) in params.tensors_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            t.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let data: Vec<LabeledSample> = (0..3u8)
        .map(|n| {
            let img = GrayImage::from_fn(28, 28, |_, _| rng.gen_range(0.0..1.0));
            LabeledSample::new(img, n * 3).unwrap()
        })
        .collect();
    let (_, grads) = nn::loss_and_grads(&params, &data).map_err(|e| e.to_string())?;

    let mut reports = Vec::new();
    for (layer, &name) in LAYERS.iter().enumerate() {
        let (w_len, b_len) = {
            let t = params.tensors();
            (t[2 * layer].len(), t[2 * layer + 1].len())
        };
        let mut report = LayerReport {
            name,
            checked: 0,
            kinked: 0,
            worst: 0.0,
        };
        while report.checked < PER_LAYER {
            let j = rng.gen_range(0..w_len + b_len);
            let (tensor, idx) = if j < w_len {
                (2 * layer, j)
            } else {
                (2 * layer + 1, j - w_len)
            };
            let analytic = grads.tensors()[tensor][idx];
            let original = params.tensors()[tensor][idx];

            params.tensors_mut()[tensor][idx] = original + STEP;
            let up = nn::mean_loss(&params, &data).unwrap();
            let up_pattern = patterns(&params, &data);
            params.tensors_mut()[tensor][idx] = original - STEP;
            let down = nn::mean_loss(&params, &data).unwrap();
            let down_pattern = patterns(&params, &data);
            params.tensors_mut()[tensor][idx] = original;

            if up_pattern != down_pattern {
                report.kinked += 1;
                if report.kinked > 4 * PER_LAYER {
                    return Err(format!("{name}: too many components straddle a kink"));
                }
                continue;
            }
            let numeric = (up - down) / (2.0 * STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            if rel.is_nan() || rel >= MAX_REL_ERR {
                return Err(format!(
                    "{name} tensor {tensor}[{idx}]: analytic {analytic:e}, numeric {numeric:e}, rel {rel:e}"
                ));
            }
            report.worst = report.worst.max(rel);
            report.checked += 1;
        }
        reports.push(report);
    }
    Ok(reports)
}
