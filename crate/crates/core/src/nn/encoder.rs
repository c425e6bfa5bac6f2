use rand::Rng;

use super::graph::{Graph, NodeId};
use super::lstm::Lstm;
use super::mlp::Mlp;
use super::tensor::ParamSet;
use crate::error::{Error, Result};
use crate::group::kl::{GaussianEmbedding, LOGVAR_CLAMP};

/// Variational LSTM summarizing a window of `(state slice, action, reward)`
/// tuples as a diagonal Gaussian.
///
/// Trained as a sequence autoencoder: the latent sample from all but the last
/// tuple must predict the last tuple, with a KL pull toward `N(0, I)`.
#[derive(Debug)]
pub struct TrajectoryEncoder {
    lstm: Lstm,
    mean_map: Mlp,
    logvar_map: Mlp,
    decoder: Mlp,
    pub kl_weight: f64,
}

impl TrajectoryEncoder {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        latent: usize,
        kl_weight: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            lstm: Lstm::new(input, hidden, rng),
            mean_map: Mlp::new(&[hidden, latent], 1.0, rng),
            logvar_map: Mlp::new(&[hidden, latent], 0.1, rng),
            decoder: Mlp::new(&[latent, input], 1.0, rng),
            kl_weight,
        }
    }

    pub fn from_parts(
        lstm: Lstm,
        mean_map: Mlp,
        logvar_map: Mlp,
        decoder: Mlp,
        kl_weight: f64,
    ) -> Result<Self> {
        let h = lstm.hidden_dim();
        let latent = mean_map.output_dim();
        let ok = mean_map.sizes() == [h, latent]
            && logvar_map.sizes() == [h, latent]
            && decoder.sizes() == [latent, lstm.input_dim()];
        if !ok {
            return Err(Error::Checkpoint(
                "encoder component shapes disagree".into(),
            ));
        }
        Ok(Self {
            lstm,
            mean_map,
            logvar_map,
            decoder,
            kl_weight,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_map.output_dim()
    }

    pub fn lstm(&self) -> &Lstm {
        &self.lstm
    }

    pub fn mean_map(&self) -> &Mlp {
        &self.mean_map
    }

    pub fn logvar_map(&self) -> &Mlp {
        &self.logvar_map
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn param_sets(&self) -> [&ParamSet; 4] {
        [
            self.lstm.params(),
            self.mean_map.params(),
            self.logvar_map.params(),
            self.decoder.params(),
        ]
    }

    pub fn param_sets_mut(&mut self) -> [&mut ParamSet; 4] {
        [
            self.lstm.params_mut(),
            self.mean_map.params_mut(),
            self.logvar_map.params_mut(),
            self.decoder.params_mut(),
        ]
    }

    fn check_window(&self, window: &[Vec<f64>]) -> Result<()> {
        match window.iter().find(|x| x.len() != self.input_dim()) {
            Some(bad) => Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: bad.len(),
            }),
            None => Ok(()),
        }
    }

    /// Record encoding of a nonempty window; returns `(mean, clamped logvar)`.
    pub fn encode_graph<'p>(
        &'p self,
        g: &mut Graph<'p>,
        window: &[Vec<f64>],
    ) -> Result<(NodeId, NodeId)> {
        if window.is_empty() {
            return Err(Error::Validation(
                "cannot encode an empty window on a graph".into(),
            ));
        }
        self.check_window(window)?;
        let xs: Vec<NodeId> = window.iter().map(|x| g.input(x.clone())).collect();
        let h = self.lstm.forward_seq(g, &xs);
        let mean = self.mean_map.forward(g, h);
        let lv = self.logvar_map.forward(g, h);
        let lv = g.clamp(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP);
        Ok((mean, lv))
    }

    /// Embedding of a window; an empty window maps to `N(0, I)`.
    pub fn lstm_encode(&self, window: &[Vec<f64>]) -> Result<GaussianEmbedding> {
        if window.is_empty() {
            return Ok(GaussianEmbedding::standard(self.latent_dim()));
        }
        let mut g = Graph::new();
        let (mean, lv) = self.encode_graph(&mut g, window)?;
        g.check()?;
        Ok(GaussianEmbedding {
            mean: g.value(mean).to_vec(),
            logvar: g.value(lv).to_vec(),
        })
    }

    /// Reparameterized sample `mean + exp(logvar / 2) · noise`.
    pub fn sample_graph(g: &mut Graph<'_>, mean: NodeId, logvar: NodeId, noise: &[f64]) -> NodeId {
        let half = g.scale(logvar, 0.5);
        let std = g.exp(half);
        let eps = g.input(noise.to_vec());
        let spread = g.mul(std, eps);
        g.add(mean, spread)
    }

    /// Autoencoding loss for one window, or `None` if it has fewer than two tuples.
    pub fn loss_graph<'p>(
        &'p self,
        g: &mut Graph<'p>,
        window: &[Vec<f64>],
        noise: &[f64],
    ) -> Result<Option<NodeId>> {
        if window.len() < 2 {
            return Ok(None);
        }
        let (context, target) = window.split_at(window.len() - 1);
        let (mean, lv) = self.encode_graph(g, context)?;
        let z = Self::sample_graph(g, mean, lv, noise);
        let pred = self.decoder.forward(g, z);
        let tgt = g.input(target[0].clone());
        let err = g.sub(pred, tgt);
        let sq = g.square(err);
        let mse = g.mean(sq);
        // KL(N(μ, σ²) ‖ N(0, 1)) = ½ Σ (σ² + μ² − 1 − log σ²).
        let var = g.exp(lv);
        let m2 = g.square(mean);
        let s = g.add(var, m2);
        let s = g.sub(s, lv);
        let s = g.offset(s, -1.0);
        let kl = g.sum(s);
        let kl = g.scale(kl, 0.5 * self.kl_weight);
        Ok(Some(g.add(mse, kl)))
    }
}
