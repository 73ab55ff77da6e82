use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::MetaError;
use crate::textio::{push_hex_values, read_container, ContainerWriter, Fnv1a, FormatError, Line};

/// How the diversity term `D` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiversityMode {
    /// Negated mean pairwise symmetric KL of the agents' raw predictions.
    /// Independent of the meta-parameters.
    #[default]
    AgentOutputs,
    /// Pairwise KL weighted by `pi_i * pi_j`, rescaled so uniform `pi`
    /// reproduces [`DiversityMode::AgentOutputs`]. Carries a gradient.
    BlendWeighted,
}

impl DiversityMode {
    pub fn name(self) -> &'static str {
        match self {
            DiversityMode::AgentOutputs => "agents",
            DiversityMode::BlendWeighted => "weighted",
        }
    }
}

impl fmt::Display for DiversityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiversityMode {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agents" => Ok(DiversityMode::AgentOutputs),
            "weighted" => Ok(DiversityMode::BlendWeighted),
            _ => Err(MetaError::Config(format!("unknown diversity mode {s:?}"))),
        }
    }
}

/// GCNN layer weights, readout and loss hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    /// `W^(l)` with shape `d^(l) x d^(l+1)`.
    pub layer_weights: Vec<DMatrix<f64>>,
    pub readout_weight: DVector<f64>,
    pub readout_bias: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k_mst: usize,
    pub diversity: DiversityMode,
}

/// Gradients with the same layout as [`MetaModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradients {
    pub layers: Vec<DMatrix<f64>>,
    pub readout_weight: DVector<f64>,
    pub readout_bias: f64,
}

impl MetaGradients {
    pub fn zeros_like(model: &MetaModel) -> Self {
        MetaGradients {
            layers: model
                .layer_weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            readout_weight: DVector::zeros(model.readout_weight.len()),
            readout_bias: 0.0,
        }
    }

    pub fn add_scaled(&mut self, other: &MetaGradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += b * scale;
        }
        self.readout_weight += &other.readout_weight * scale;
        self.readout_bias += other.readout_bias * scale;
    }

    /// Flattened in the same order as [`MetaModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.layers {
            out.extend(w.iter());
        }
        out.extend(self.readout_weight.iter());
        out.push(self.readout_bias);
        out
    }
}

impl MetaModel {
    /// Xavier-uniform layers and readout, zero bias. `dims` lists
    /// `d^(0), ..., d^(L)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, MetaError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(MetaError::Config(format!(
                "need at least one layer with positive widths, got {dims:?}"
            )));
        }
        let layer_weights = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                DMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(-bound..bound))
            })
            .collect();
        let last = *dims.last().expect("non-empty");
        let bound = (6.0 / (last + 1) as f64).sqrt();
        let readout_weight = DVector::from_fn(last, |_, _| rng.random_range(-bound..bound));
        Ok(MetaModel {
            layer_weights,
            readout_weight,
            readout_bias: 0.0,
            lambda: 0.1,
            gamma: 0.01,
            k_mst: 1,
            diversity: DiversityMode::default(),
        })
    }

    pub fn with_hyper(mut self, lambda: f64, gamma: f64, k_mst: usize) -> Result<Self, MetaError> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(MetaError::NegativeHyper {
                name: "lambda",
                value: lambda,
            });
        }
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(MetaError::NegativeHyper {
                name: "gamma",
                value: gamma,
            });
        }
        if k_mst == 0 {
            return Err(MetaError::Config("k_mst must be at least 1".into()));
        }
        self.lambda = lambda;
        self.gamma = gamma;
        self.k_mst = k_mst;
        Ok(self)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layer_weights.iter().map(|w| w.nrows()).collect();
        d.extend(self.layer_weights.last().map(|w| w.ncols()));
        d
    }

    /// Checks that each layer's output width feeds the next layer and the
    /// readout.
    pub fn validate(&self) -> Result<(), MetaError> {
        if self.layer_weights.is_empty() {
            return Err(MetaError::Dimension("model has no layers".into()));
        }
        for (l, pair) in self.layer_weights.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(MetaError::Dimension(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].ncols(),
                    l + 1,
                    pair[1].nrows()
                )));
            }
        }
        let last = self.layer_weights.last().expect("non-empty").ncols();
        if self.readout_weight.len() != last {
            return Err(MetaError::Dimension(format!(
                "readout has {} weights for embedding width {last}",
                self.readout_weight.len()
            )));
        }
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.layer_weights {
            out.extend(w.iter());
        }
        out.extend(self.readout_weight.iter());
        out.push(self.readout_bias);
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), MetaError> {
        let expected = self.parameters().len();
        if params.len() != expected {
            return Err(MetaError::Dimension(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for w in &mut self.layer_weights {
            for v in w.iter_mut() {
                *v = it.next().expect("length checked");
            }
        }
        for v in self.readout_weight.iter_mut() {
            *v = it.next().expect("length checked");
        }
        self.readout_bias = it.next().expect("length checked");
        Ok(())
    }

    /// `theta <- theta - eta * grad`.
    pub fn apply_gradient(&mut self, grad: &MetaGradients, eta: f64) {
        for (w, g) in self.layer_weights.iter_mut().zip(&grad.layers) {
            *w -= g * eta;
        }
        self.readout_weight -= &grad.readout_weight * eta;
        self.readout_bias -= eta * grad.readout_bias;
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        for p in self.parameters() {
            h.update(&p.to_bits().to_le_bytes());
        }
        h.update(&self.lambda.to_bits().to_le_bytes());
        h.update(&self.gamma.to_bits().to_le_bytes());
        h.update(self.diversity.name().as_bytes());
        h.finish()
    }

    /// `LGRAD-M v1` checkpoint text.
    pub fn to_text(&self) -> String {
        let mut w = ContainerWriter::new();
        w.line(&format!("LGRAD-M v1 {}", self.layer_weights.len()));
        let mut hyper = String::from("hyper lambda ");
        hyper.push_str(&crate::textio::format_hex_f64(self.lambda));
        hyper.push_str(" gamma ");
        hyper.push_str(&crate::textio::format_hex_f64(self.gamma));
        hyper.push_str(&format!(
            " k_mst {} diversity {}",
            self.k_mst, self.diversity
        ));
        w.line(&hyper);
        for (l, m) in self.layer_weights.iter().enumerate() {
            w.line(&format!("layer {l} {} {}", m.nrows(), m.ncols()));
            for r in 0..m.nrows() {
                let mut line = String::from("row");
                let row: Vec<f64> = m.row(r).iter().copied().collect();
                push_hex_values(&mut line, &row);
                w.line(&line);
            }
        }
        let mut line = format!("readout {}", self.readout_weight.len());
        push_hex_values(&mut line, self.readout_weight.as_slice());
        w.line(&line);
        w.line(&format!(
            "bias {}",
            crate::textio::format_hex_f64(self.readout_bias)
        ));
        w.finish()
    }

    pub fn from_text<'a>(text: &'a str) -> Result<Self, MetaError> {
        let lines = read_container(text)?;
        let end = lines.len() + 1;
        let mut it = lines.iter();
        let next = |it: &mut std::slice::Iter<'_, Line<'a>>, what: &str| {
            it.next()
                .copied()
                .ok_or_else(|| FormatError::parse(end, format!("missing {what}")))
        };
        let header = next(&mut it, "header")?;
        let mut f = header.fields();
        f.expect("LGRAD-M")?;
        f.expect("v1")?;
        let n_layers = f.next_usize("layer count")?;
        f.finish()?;

        let hyper = next(&mut it, "hyper line")?;
        let mut f = hyper.fields();
        f.expect("hyper")?;
        f.expect("lambda")?;
        let lambda = f.next_f64("lambda")?;
        f.expect("gamma")?;
        let gamma = f.next_f64("gamma")?;
        f.expect("k_mst")?;
        let k_mst = f.next_usize("k_mst")?;
        f.expect("diversity")?;
        let diversity: DiversityMode = f
            .next_str("diversity")?
            .parse()
            .map_err(|e: MetaError| hyper.error(e.to_string()))?;
        f.finish()?;

        let mut layer_weights = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let line = next(&mut it, "layer line")?;
            let mut f = line.fields();
            f.expect("layer")?;
            let idx = f.next_usize("layer index")?;
            if idx != l {
                return Err(line
                    .error(format!("expected layer {l}, found {idx}"))
                    .into());
            }
            let rows = f.next_usize("rows")?;
            let cols = f.next_usize("cols")?;
            f.finish()?;
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                let line = next(&mut it, "row line")?;
                let mut f = line.fields();
                f.expect("row")?;
                for (c, v) in f.hex_values(cols, "weight")?.into_iter().enumerate() {
                    m[(r, c)] = v;
                }
                f.finish()?;
            }
            layer_weights.push(m);
        }
        let line = next(&mut it, "readout line")?;
        let mut f = line.fields();
        f.expect("readout")?;
        let d = f.next_usize("readout width")?;
        let readout_weight = DVector::from_vec(f.hex_values(d, "readout weight")?);
        f.finish()?;
        let line = next(&mut it, "bias line")?;
        let mut f = line.fields();
        f.expect("bias")?;
        let readout_bias = f.next_f64("bias")?;
        f.finish()?;
        if let Some(extra) = it.next() {
            return Err(extra.error("unexpected trailing line").into());
        }
        let model = MetaModel {
            layer_weights,
            readout_weight,
            readout_bias,
            lambda,
            gamma,
            k_mst,
            diversity,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), MetaError> {
        fs::write(path, self.to_text()).map_err(|source| MetaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MetaError> {
        let text = fs::read_to_string(path).map_err(|source| MetaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shape_and_hyper() {
        let m = MetaModel::new(&[17, 16, 8], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.dims(), vec![17, 16, 8]);
        assert_eq!(m.k_mst, 1);
        assert_eq!(m.parameters().len(), 17 * 16 + 16 * 8 + 8 + 1);
        m.validate().unwrap();
    }

    #[test]
    fn broken_chain_is_rejected() {
        let mut m = MetaModel::new(&[4, 3, 2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        m.layer_weights[1] = DMatrix::zeros(5, 2);
        assert!(m.validate().is_err());
        assert!(MetaModel::new(&[4], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MetaModel::new(&[5, 4, 3], &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap()
            .with_hyper(0.3, 0.02, 2)
            .unwrap();
        let back = MetaModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn parameter_flattening_round_trip() {
        let mut m = MetaModel::new(&[3, 2], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut p = m.parameters();
        p.iter_mut().for_each(|v| *v += 1.0);
        m.set_parameters(&p).unwrap();
        assert_eq!(m.parameters(), p);
        assert!(m.set_parameters(&p[1..]).is_err());
    }
}
