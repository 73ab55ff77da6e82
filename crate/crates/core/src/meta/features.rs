use nalgebra::DMatrix;

use super::MetaError;
use crate::spec::AgentSpec;

pub const HISTOGRAM_BINS: usize = 8;
/// 8 spec bits, recent training loss, 8-bin intensity histogram.
pub const FEATURE_DIM: usize = 8 + 1 + HISTOGRAM_BINS;

/// Node feature matrix `H^(0)`, one row per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(pub DMatrix<f64>);

/// Fractions of pixels falling in 8 equal-width bins over `[0, 1]`.
fn intensity_histogram(pred: &[f64]) -> [f64; HISTOGRAM_BINS] {
    let mut bins = [0.0; HISTOGRAM_BINS];
    if pred.is_empty() {
        return bins;
    }
    for v in pred {
        let b = ((v.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1.0;
    }
    let n = pred.len() as f64;
    bins.map(|c| c / n)
}

pub fn build_node_features(
    specs: &[AgentSpec],
    recent_losses: &[f64],
    predictions: &[Vec<f64>],
) -> Result<NodeFeatures, MetaError> {
    let n = specs.len();
    if recent_losses.len() != n || predictions.len() != n {
        return Err(MetaError::Dimension(format!(
            "{n} specs, {} losses, {} predictions",
            recent_losses.len(),
            predictions.len()
        )));
    }
    let mut h = DMatrix::zeros(n, FEATURE_DIM);
    for i in 0..n {
        if !recent_losses[i].is_finite() {
            return Err(MetaError::NonFiniteInput("node features"));
        }
        let row = specs[i]
            .as_features()
            .into_iter()
            .chain([recent_losses[i]])
            .chain(intensity_histogram(&predictions[i]));
        for (k, v) in row.enumerate() {
            h[(i, k)] = v;
        }
    }
    Ok(NodeFeatures(h))
}
