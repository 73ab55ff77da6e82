use super::{ConnectivityMode, Edge, GraphError, ModelGraph};
use crate::knowledge::{KnowledgeBase, KnowledgeRecord};
use crate::spec::{AgentSpec, SpecError};

/// Mode-specific parameters for [`build_graph`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    /// PCF agreement threshold on per-sample mean squared difference.
    pub tau: f64,
    /// Bandwidth of the per-sample Gaussian kernel.
    pub sigma: f64,
    /// Which cached sample the per-sample mode reads from the knowledge base.
    pub sample_id: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            tau: 0.01,
            sigma: 0.1,
            sample_id: 0,
        }
    }
}

/// Number of traits carrying the same flag in both specs; shared zeros
/// count as agreement.
pub fn ccf(a: &AgentSpec, b: &AgentSpec) -> Result<u32, GraphError> {
    if !a.iter().map(|(t, _)| t).eq(b.iter().map(|(t, _)| t)) {
        return Err(SpecError::TraitSetMismatch {
            left: a.trait_names(),
            right: b.trait_names(),
        }
        .into());
    }
    Ok(a.iter().zip(b.iter()).filter(|(x, y)| x.1 == y.1).count() as u32)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// Number of samples on which the two agents' cached outputs differ by a
/// mean squared error below `tau`.
pub fn pcf(a: &KnowledgeRecord, b: &KnowledgeRecord, tau: f64) -> Result<usize, GraphError> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(GraphError::NonPositive {
            name: "tau",
            value: tau,
        });
    }
    if a.outputs.len() != b.outputs.len()
        || a.outputs
            .iter()
            .zip(&b.outputs)
            .any(|(x, y)| x.sample_id != y.sample_id)
    {
        return Err(GraphError::SampleSetMismatch {
            left: a.outputs.len(),
            right: b.outputs.len(),
        });
    }
    let mut agree = 0;
    for (x, y) in a.outputs.iter().zip(&b.outputs) {
        if x.output.len() != y.output.len() {
            return Err(GraphError::Length {
                left: x.output.len(),
                right: y.output.len(),
            });
        }
        if mse(&x.output, &y.output) < tau {
            agree += 1;
        }
    }
    Ok(agree)
}

/// `ccf / n_traits + pcf / n_samples`, in `[0, 2]`.
pub fn hybrid_weight(ccf_val: u32, pcf_val: usize, n_traits: usize, n_samples: usize) -> f64 {
    f64::from(ccf_val) / n_traits as f64 + pcf_val as f64 / n_samples as f64
}

/// `exp(-mse(y_i, y_j) / sigma^2)`, in `(0, 1]` for moderate distances.
pub fn per_sample_weight(a: &[f64], b: &[f64], sigma: f64) -> Result<f64, GraphError> {
    if a.len() != b.len() {
        return Err(GraphError::Length {
            left: a.len(),
            right: b.len(),
        });
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(GraphError::NonPositive {
            name: "sigma",
            value: sigma,
        });
    }
    Ok((-mse(a, b) / (sigma * sigma)).exp())
}

/// Graph over per-agent outputs for a single sample.
pub fn per_sample_graph(outputs: &[Vec<f64>], sigma: f64) -> Result<ModelGraph, GraphError> {
    let n = outputs.len();
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(Edge::new(
                i,
                j,
                per_sample_weight(&outputs[i], &outputs[j], sigma)?,
            ));
        }
    }
    ModelGraph::new(n, edges, ConnectivityMode::PerSample)
}

/// Enumerates every unordered agent pair of the knowledge base and weights
/// it with the chosen connectivity function.
pub fn build_graph(
    kb: &KnowledgeBase,
    mode: ConnectivityMode,
    params: &GraphParams,
) -> Result<ModelGraph, GraphError> {
    let records = kb.records();
    let n = records.len();
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    if mode == ConnectivityMode::PerSample {
        let outputs = records
            .iter()
            .map(|r| {
                r.outputs
                    .get(params.sample_id)
                    .map(|o| o.output.clone())
                    .ok_or(GraphError::SampleSetMismatch {
                        left: params.sample_id + 1,
                        right: r.outputs.len(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        return per_sample_graph(&outputs, params.sigma);
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&records[i], &records[j]);
            let w = match mode {
                ConnectivityMode::Ccf => f64::from(ccf(&a.spec, &b.spec)?),
                ConnectivityMode::Pcf => pcf(a, b, params.tau)? as f64,
                ConnectivityMode::Hybrid => hybrid_weight(
                    ccf(&a.spec, &b.spec)?,
                    pcf(a, b, params.tau)?,
                    a.spec.len(),
                    kb.n_samples().max(1),
                ),
                ConnectivityMode::PerSample => unreachable!(),
            };
            edges.push(Edge::new(i, j, w));
        }
    }
    ModelGraph::new(n, edges, mode)
}
