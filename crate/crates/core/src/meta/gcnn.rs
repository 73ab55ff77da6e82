use nalgebra::{DMatrix, DVector};

use super::loss::{
    composite_loss, cross_entropy, cross_entropy_grad, laplacian_grad, laplacian_loss, mean_upper,
    pairwise_sym_kl, weighted_diversity, weighted_diversity_grad, LossBreakdown,
};
use super::{DiversityMode, MetaError, MetaGradients, MetaModel, NodeFeatures};
use crate::textio::Fnv1a;

/// `D^{-1/2} A D^{-1/2}` without self loops.
pub fn normalize_adjacency(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MetaError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(MetaError::Dimension(format!(
            "adjacency shape {:?}",
            a.shape()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() || v < 0.0 || v != a[(j, i)] {
                return Err(MetaError::BadAdjacency);
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg = a.row(i).sum();
            if deg > 0.0 {
                Ok(1.0 / deg.sqrt())
            } else {
                Err(MetaError::ZeroDegree(i))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        a[(i, j)] * (inv_sqrt[i.min(j)] * inv_sqrt[i.max(j)])
    }))
}

fn relu(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(|v| v.max(0.0))
}

/// Runs every layer, returning the final embeddings and per-layer
/// pre-activations `Z^(l) = M H^(l) W^(l)`.
pub fn gcnn_forward(
    m: &DMatrix<f64>,
    h0: &NodeFeatures,
    model: &MetaModel,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), MetaError> {
    model.validate()?;
    let n = h0.0.nrows();
    if m.shape() != (n, n) {
        return Err(MetaError::Dimension(format!(
            "normalized adjacency {:?} for {n} nodes",
            m.shape()
        )));
    }
    if h0.0.ncols() != model.layer_weights[0].nrows() {
        return Err(MetaError::Dimension(format!(
            "features have width {}, first layer expects {}",
            h0.0.ncols(),
            model.layer_weights[0].nrows()
        )));
    }
    let mut h = h0.0.clone();
    let mut pre = Vec::with_capacity(model.layer_weights.len());
    for w in &model.layer_weights {
        let z = m * &h * w;
        h = relu(&z);
        pre.push(z);
    }
    Ok((h, pre))
}

fn check_readout(h: &DMatrix<f64>, model: &MetaModel) -> Result<(), MetaError> {
    if h.ncols() != model.readout_weight.len() {
        return Err(MetaError::Dimension(format!(
            "embeddings have width {}, readout expects {}",
            h.ncols(),
            model.readout_weight.len()
        )));
    }
    Ok(())
}

/// `s_i = w . h_i + b`.
pub fn readout_scores(h: &DMatrix<f64>, model: &MetaModel) -> Result<DVector<f64>, MetaError> {
    check_readout(h, model)?;
    Ok(h * &model.readout_weight + DVector::from_element(h.nrows(), model.readout_bias))
}

fn softmax(s: &DVector<f64>) -> DVector<f64> {
    let max = s.max();
    let e = s.map(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

/// Softmax over agents of the readout scores.
pub fn head_weights(h: &DMatrix<f64>, model: &MetaModel) -> Result<DVector<f64>, MetaError> {
    Ok(softmax(&readout_scores(h, model)?))
}

/// `sum_i pi_i * pred_i`.
pub fn blend(pi: &[f64], preds: &[Vec<f64>]) -> Result<Vec<f64>, MetaError> {
    if pi.len() != preds.len() || preds.is_empty() {
        return Err(MetaError::Dimension(format!(
            "{} weights for {} predictions",
            pi.len(),
            preds.len()
        )));
    }
    let d = preds[0].len();
    if let Some(bad) = preds.iter().position(|p| p.len() != d) {
        return Err(MetaError::Dimension(format!(
            "prediction {bad} has length {}, expected {d}",
            preds[bad].len()
        )));
    }
    let mut out = vec![0.0; d];
    for (w, p) in pi.iter().zip(preds) {
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Everything one loss evaluation needs for a single sample and tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInputs {
    /// Spanning-tree adjacency `A_MST`.
    pub adjacency: DMatrix<f64>,
    pub features: NodeFeatures,
    /// Each agent's denoised estimate, values in `[0, 1]`.
    pub predictions: Vec<Vec<f64>>,
    /// Ground-truth image.
    pub target: Vec<f64>,
}

impl SampleInputs {
    fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        let mut put = |v: f64| h.update(&v.to_bits().to_le_bytes());
        self.adjacency.iter().for_each(|v| put(*v));
        self.features.0.iter().for_each(|v| put(*v));
        self.predictions.iter().flatten().for_each(|v| put(*v));
        self.target.iter().for_each(|v| put(*v));
        h.update(&(self.adjacency.nrows() as u64).to_le_bytes());
        h.update(&(self.target.len() as u64).to_le_bytes());
        h.finish()
    }
}

/// Intermediate values retained for [`backward`], bound to the inputs and
/// parameters that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    normalized: Option<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
    embeddings: DMatrix<f64>,
    kl: Option<DMatrix<f64>>,
    input_fingerprint: u64,
    param_fingerprint: u64,
}

impl ForwardCache {
    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub pi: Vec<f64>,
    pub blended: Vec<f64>,
    pub loss: LossBreakdown,
    pub cache: ForwardCache,
}

/// Blending weights for a sample, without the loss.
pub(crate) fn blend_weights(
    model: &MetaModel,
    adjacency: &DMatrix<f64>,
    features: &NodeFeatures,
) -> Result<Vec<f64>, MetaError> {
    let n = features.0.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let m = normalize_adjacency(adjacency)?;
    let (h, _) = gcnn_forward(&m, features, model)?;
    Ok(head_weights(&h, model)?.iter().copied().collect())
}

/// Forward pass and loss for one sample. A single agent bypasses the GCNN
/// with `pi = [1]`.
pub fn evaluate(model: &MetaModel, inputs: &SampleInputs) -> Result<Evaluation, MetaError> {
    let n = inputs.predictions.len();
    if n == 0 {
        return Err(MetaError::TooFewAgents { need: 1, got: 0 });
    }
    if inputs.features.0.nrows() != n || inputs.adjacency.shape() != (n, n) {
        return Err(MetaError::Dimension(format!(
            "{n} predictions, {} feature rows, adjacency {:?}",
            inputs.features.0.nrows(),
            inputs.adjacency.shape()
        )));
    }
    let input_fingerprint = inputs.fingerprint();
    let param_fingerprint = model.fingerprint();
    if n == 1 {
        let blended = inputs.predictions[0].clone();
        let c = cross_entropy(&blended, &inputs.target)?;
        return Ok(Evaluation {
            pi: vec![1.0],
            blended,
            loss: composite_loss(c, 0.0, 0.0, model.lambda, model.gamma),
            cache: ForwardCache {
                normalized: None,
                pre_activations: Vec::new(),
                embeddings: DMatrix::zeros(1, model.readout_weight.len()),
                kl: None,
                input_fingerprint,
                param_fingerprint,
            },
        });
    }
    let m = normalize_adjacency(&inputs.adjacency)?;
    let (h, pre) = gcnn_forward(&m, &inputs.features, model)?;
    let pi: Vec<f64> = head_weights(&h, model)?.iter().copied().collect();
    let blended = blend(&pi, &inputs.predictions)?;
    let c = cross_entropy(&blended, &inputs.target)?;
    let kl = pairwise_sym_kl(&inputs.predictions)?;
    let d = match model.diversity {
        DiversityMode::AgentOutputs => mean_upper(&kl),
        DiversityMode::BlendWeighted => weighted_diversity(&pi, &kl),
    };
    let lap = laplacian_loss(&inputs.adjacency, &h)?;
    Ok(Evaluation {
        pi,
        blended,
        loss: composite_loss(c, d, lap, model.lambda, model.gamma),
        cache: ForwardCache {
            normalized: Some(m),
            pre_activations: pre,
            embeddings: h,
            kl: Some(kl),
            input_fingerprint,
            param_fingerprint,
        },
    })
}

/// Analytic gradient of the total loss of `eval` with respect to every
/// meta-parameter.
pub fn backward(
    model: &MetaModel,
    inputs: &SampleInputs,
    eval: &Evaluation,
) -> Result<MetaGradients, MetaError> {
    let cache = &eval.cache;
    if cache.input_fingerprint != inputs.fingerprint()
        || cache.param_fingerprint != model.fingerprint()
    {
        return Err(MetaError::StaleCache);
    }
    let mut grads = MetaGradients::zeros_like(model);
    let (Some(m), Some(kl)) = (&cache.normalized, &cache.kl) else {
        return Ok(grads);
    };
    let n = eval.pi.len();
    let g_blend = cross_entropy_grad(&eval.blended, &inputs.target);
    let mut g_pi: Vec<f64> = inputs
        .predictions
        .iter()
        .map(|p| p.iter().zip(&g_blend).map(|(a, b)| a * b).sum())
        .collect();
    if model.diversity == DiversityMode::BlendWeighted && model.lambda != 0.0 {
        for (g, dd) in g_pi.iter_mut().zip(weighted_diversity_grad(&eval.pi, kl)) {
            *g += model.lambda * dd;
        }
    }
    let dot: f64 = eval.pi.iter().zip(&g_pi).map(|(p, g)| p * g).sum();
    let ds = DVector::from_fn(n, |i, _| eval.pi[i] * (g_pi[i] - dot));

    let h_l = &cache.embeddings;
    grads.readout_weight = h_l.transpose() * &ds;
    grads.readout_bias = ds.sum();
    let mut dh = &ds * model.readout_weight.transpose();
    if model.gamma != 0.0 {
        dh += laplacian_grad(&inputs.adjacency, h_l) * model.gamma;
    }

    for l in (0..model.layer_weights.len()).rev() {
        let z = &cache.pre_activations[l];
        let dz = dh.zip_map(z, |g, zv| if zv > 0.0 { g } else { 0.0 });
        let h_in = if l == 0 {
            inputs.features.0.clone()
        } else {
            relu(&cache.pre_activations[l - 1])
        };
        let propagated = m * &h_in;
        grads.layers[l] = propagated.transpose() * &dz;
        if l > 0 {
            dh = m.transpose() * (&dz * model.layer_weights[l].transpose());
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(dims: &[usize], seed: u64) -> MetaModel {
        MetaModel::new(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(normalize_adjacency(&a).unwrap(), a);

        let p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let m = normalize_adjacency(&p).unwrap();
        assert!((m[(0, 1)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((m[(1, 2)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
        let scaled = normalize_adjacency(&(p * 3.5)).unwrap();
        assert!((scaled - m).abs().max() < 1e-15);
    }

    #[test]
    fn normalization_rejects_isolated_and_asymmetric() {
        let iso = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            normalize_adjacency(&iso),
            Err(MetaError::ZeroDegree(2))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(
            normalize_adjacency(&asym),
            Err(MetaError::BadAdjacency)
        ));
    }

    #[test]
    fn forward_hand_case_and_zero_weights() {
        let mut mdl = model(&[1, 1], 0);
        mdl.layer_weights[0] = DMatrix::from_element(1, 1, 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let h0 = NodeFeatures(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]));
        let (h, _) = gcnn_forward(&m, &h0, &mdl).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 1, &[2.0, 1.0]));

        let mut zero = model(&[3, 4, 2], 1);
        zero.layer_weights.iter_mut().for_each(|w| w.fill(0.0));
        let h0 = NodeFeatures(DMatrix::from_element(2, 3, 0.5));
        let (h, _) = gcnn_forward(&m, &h0, &zero).unwrap();
        assert_eq!(h, DMatrix::zeros(2, 2));

        let bad = NodeFeatures(DMatrix::zeros(2, 5));
        assert!(gcnn_forward(&m, &bad, &zero).is_err());
    }

    #[test]
    fn softmax_readout_examples() {
        let mut mdl = model(&[1, 1], 0);
        mdl.readout_weight = DVector::from_element(1, 1.0);
        let h = DMatrix::from_row_slice(2, 1, &[0.0, 3f64.ln()]);
        let pi = head_weights(&h, &mdl).unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-15 && (pi[1] - 0.75).abs() < 1e-15);
        mdl.readout_bias = 10.0;
        let shifted = head_weights(&h, &mdl).unwrap();
        assert!((shifted - pi).abs().max() < 1e-15);
        let same = head_weights(&DMatrix::from_element(4, 1, 0.3), &mdl).unwrap();
        assert!(same.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn blend_examples() {
        let preds = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(blend(&[0.25, 0.75], &preds).unwrap(), vec![0.75, 0.75]);
        assert_eq!(blend(&[0.0, 1.0], &preds).unwrap(), preds[1]);
        assert!(blend(&[1.0], &preds).is_err());
    }

    #[test]
    fn stale_cache_is_detected() {
        let mdl = model(&[2, 2], 3);
        let inputs = SampleInputs {
            adjacency: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            features: NodeFeatures(DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4])),
            predictions: vec![vec![0.2, 0.4], vec![0.6, 0.3]],
            target: vec![0.0, 1.0],
        };
        let eval = evaluate(&mdl, &inputs).unwrap();
        backward(&mdl, &inputs, &eval).unwrap();
        let mut other = inputs.clone();
        other.target[0] = 0.5;
        assert!(matches!(
            backward(&mdl, &other, &eval),
            Err(MetaError::StaleCache)
        ));
        let mut moved = mdl.clone();
        moved.readout_bias = 1.0;
        assert!(matches!(
            backward(&moved, &inputs, &eval),
            Err(MetaError::StaleCache)
        ));
    }
}
