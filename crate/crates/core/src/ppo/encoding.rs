use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::update::clip_grad_norm;
use crate::error::Result;
use crate::group::GaussianEmbedding;
use crate::nn::{adam_update, AdamConfig, Graph, TrajectoryEncoder};

/// The last `history` tuples of an agent's trajectory.
pub fn latest_window(tuples: &[Vec<f64>], history: usize) -> &[Vec<f64>] {
    &tuples[tuples.len().saturating_sub(history)..]
}

/// Embed every agent's most recent window.
pub fn embed_agents(
    encoder: &TrajectoryEncoder,
    tuples: &[Vec<Vec<f64>>],
    history: usize,
) -> Result<Vec<GaussianEmbedding>> {
    tuples
        .iter()
        .map(|t| encoder.lstm_encode(latest_window(t, history)))
        .collect()
}

/// One optimizer step of the autoencoding objective on `batch` random
/// windows of `history + 1` tuples. Returns the mean loss, or `None` when
/// no trajectory is long enough.
pub fn train_encoder<R: Rng + ?Sized>(
    encoder: &mut TrajectoryEncoder,
    tuples: &[Vec<Vec<f64>>],
    history: usize,
    batch: usize,
    lr: f64,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let eligible: Vec<usize> = (0..tuples.len())
        .filter(|&i| tuples[i].len() >= 2)
        .collect();
    if eligible.is_empty() || batch == 0 {
        return Ok(None);
    }
    let latent = encoder.latent_dim();
    let mut picks = Vec::with_capacity(batch);
    for _ in 0..batch {
        let agent = eligible[rng.gen_range(0..eligible.len())];
        let len = tuples[agent].len();
        let end = rng.gen_range(2..=len);
        let start = end.saturating_sub(history + 1);
        let noise: Vec<f64> = (0..latent).map(|_| StandardNormal.sample(rng)).collect();
        picks.push((agent, start, end, noise));
    }
    encoder.param_sets().iter().for_each(|s| s.zero_grad());
    let value = {
        let mut g = Graph::new();
        let mut losses = Vec::with_capacity(batch);
        for (agent, start, end, noise) in &picks {
            if let Some(l) = encoder.loss_graph(&mut g, &tuples[*agent][*start..*end], noise)? {
                losses.push(l);
            }
        }
        let total = g.add_all(&losses);
        let loss = g.scale(total, 1.0 / losses.len() as f64);
        g.check()?;
        g.backward(loss)?;
        g.scalar(loss)
    };
    clip_grad_norm(&encoder.param_sets(), max_grad_norm);
    let adam = AdamConfig::default();
    for set in encoder.param_sets_mut() {
        adam_update(set, lr, &adam);
    }
    Ok(Some(value))
}
