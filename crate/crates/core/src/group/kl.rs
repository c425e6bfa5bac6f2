use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude bound on encoder log-variances.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Diagonal Gaussian over the trajectory latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEmbedding {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl GaussianEmbedding {
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mean.len() != logvar.len() {
            return Err(Error::ShapeMismatch {
                expected: mean.len(),
                got: logvar.len(),
            });
        }
        let logvar = logvar
            .into_iter()
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))
            .collect();
        Ok(Self { mean, logvar })
    }

    /// Zero mean, unit variance.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Closed-form `KL(p ‖ q)` between diagonal Gaussians.
pub fn gaussian_kl(p: &GaussianEmbedding, q: &GaussianEmbedding) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::ShapeMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut kl = 0.0;
    for i in 0..p.dim() {
        let diff = p.mean[i] - q.mean[i];
        kl +=
            q.logvar[i] - p.logvar[i] + (p.logvar[i].exp() + diff * diff) / q.logvar[i].exp() - 1.0;
    }
    Ok((0.5 * kl).max(0.0))
}

/// `KL(p ‖ q) + KL(q ‖ p)`, the unhalved sum used by the merge rule.
pub fn symmetric_kl(p: &GaussianEmbedding, q: &GaussianEmbedding) -> Result<f64> {
    Ok(gaussian_kl(p, q)? + gaussian_kl(q, p)?)
}

/// Moment-averaged centroid: mean of member means, mean of member variances.
///
/// Dimensions where all members agree are copied exactly, so a group of
/// identical members has that member as its centroid bit for bit.
pub fn centroid(members: &[&GaussianEmbedding]) -> Result<GaussianEmbedding> {
    let first = members.first().ok_or(Error::EmptyGroup)?;
    let dim = first.dim();
    if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let n = members.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut logvar = vec![0.0; dim];
    for i in 0..dim {
        if members.iter().all(|m| m.mean[i] == first.mean[i]) {
            mean[i] = first.mean[i];
        } else {
            mean[i] = members.iter().map(|m| m.mean[i]).sum::<f64>() / n;
        }
        if members.iter().all(|m| m.logvar[i] == first.logvar[i]) {
            logvar[i] = first.logvar[i];
        } else {
            let var = members.iter().map(|m| m.logvar[i].exp()).sum::<f64>() / n;
            logvar[i] = var.ln().clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
        }
    }
    Ok(GaussianEmbedding { mean, logvar })
}

/// Mean over members of `½(KL(z ‖ μ) + KL(μ ‖ z))` against the group centroid.
pub fn intra_divergence(members: &[&GaussianEmbedding]) -> Result<f64> {
    let mu = centroid(members)?;
    let mut total = 0.0;
    for z in members {
        total += 0.5 * symmetric_kl(z, &mu)?;
    }
    Ok(total / members.len() as f64)
}
