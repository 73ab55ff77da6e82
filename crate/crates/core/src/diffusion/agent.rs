use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{forward_noise, DiffusionError, NoiseSchedule, ToyDataset};
use crate::spec::{AgentSpec, Trait};
use crate::textio::{push_hex_values, read_container, ContainerWriter, FormatError};

const NARROW: usize = 32;
const WIDE: usize = 64;
const DROPOUT: f64 = 0.1;

/// Network shape implied by an [`AgentSpec`].
///
/// `wide` doubles the hidden width, `deep` adds a second hidden layer,
/// `skip` adds a learned per-pixel pass-through of `x_t` to the output and
/// `dr` enables dropout on hidden units during training. The remaining
/// traits are descriptive only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub skip: bool,
    pub dropout: bool,
}

impl Architecture {
    pub fn for_spec(spec: &AgentSpec, d_img: usize, n_classes: usize) -> Self {
        let width = if spec.has(Trait::Wide) { WIDE } else { NARROW };
        let depth = if spec.has(Trait::Deep) { 2 } else { 1 };
        Architecture {
            input: d_img + 1 + n_classes,
            hidden: vec![width; depth],
            output: d_img,
            skip: spec.has(Trait::Skip),
            dropout: spec.has(Trait::Dr),
        }
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        let dense: usize = self.layers().iter().map(|(i, o)| i * o + o).sum();
        dense + if self.skip { self.output } else { 0 }
    }
}

/// Small fully connected noise predictor conditioned on `t / T` and a
/// one-hot label.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyAgent {
    pub spec: AgentSpec,
    pub parameters: Vec<f64>,
    pub conditioning_dim: usize,
    pub d_img: usize,
    /// Diffusion horizon `T` used to scale the step feature.
    pub horizon: usize,
    arch: Architecture,
}

struct Trace {
    /// Inputs to each dense layer (the first is the conditioned input).
    inputs: Vec<Vec<f64>>,
    /// `tanh` outputs of each hidden layer before the dropout mask.
    activations: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
    output: Vec<f64>,
}

impl ToyAgent {
    pub fn zeroed(spec: AgentSpec, d_img: usize, n_classes: usize, horizon: usize) -> Self {
        let arch = Architecture::for_spec(&spec, d_img, n_classes);
        ToyAgent {
            parameters: vec![0.0; arch.parameter_count()],
            spec,
            conditioning_dim: n_classes,
            d_img,
            horizon,
            arch,
        }
    }

    /// Xavier-uniform dense weights, zero biases and zero skip scales.
    pub fn initialized<R: Rng + ?Sized>(
        spec: AgentSpec,
        d_img: usize,
        n_classes: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Self {
        let mut agent = Self::zeroed(spec, d_img, n_classes, horizon);
        let mut offset = 0;
        for (fan_in, fan_out) in agent.arch.layers() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut agent.parameters[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        agent
    }

    pub fn with_parameters(mut self, parameters: Vec<f64>) -> Result<Self, DiffusionError> {
        if parameters.len() != self.arch.parameter_count() {
            return Err(DiffusionError::Length {
                expected: self.arch.parameter_count(),
                got: parameters.len(),
            });
        }
        self.parameters = parameters;
        Ok(self)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    fn conditioned_input(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        if label >= self.conditioning_dim {
            return Err(DiffusionError::LabelRange {
                label,
                classes: self.conditioning_dim,
            });
        }
        if xt.len() != self.d_img {
            return Err(DiffusionError::Length {
                expected: self.d_img,
                got: xt.len(),
            });
        }
        let mut input = Vec::with_capacity(self.arch.input);
        input.extend_from_slice(xt);
        input.push(t as f64 / self.horizon.max(1) as f64);
        input.extend((0..self.conditioning_dim).map(|c| if c == label { 1.0 } else { 0.0 }));
        Ok(input)
    }

    fn run<R: Rng + ?Sized>(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Trace, DiffusionError> {
        let layers = self.arch.layers();
        let mut inputs = vec![self.conditioned_input(xt, t, label)?];
        let mut activations = Vec::new();
        let mut masks = Vec::new();
        let mut offset = 0;
        let mut output = Vec::new();
        for (li, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let w = &self.parameters[offset..offset + fan_in * fan_out];
            let b =
                &self.parameters[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let x = inputs.last().expect("input present");
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if li + 1 == layers.len() {
                output = z;
            } else {
                let act: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                let mask = match (&mut dropout_rng, self.arch.dropout) {
                    (Some(rng), true) => Some(
                        (0..fan_out)
                            .map(|_| {
                                if rng.random::<f64>() < DROPOUT {
                                    0.0
                                } else {
                                    1.0 / (1.0 - DROPOUT)
                                }
                            })
                            .collect::<Vec<f64>>(),
                    ),
                    _ => None,
                };
                let h = match &mask {
                    Some(m) => act.iter().zip(m).map(|(a, m)| a * m).collect(),
                    None => act.clone(),
                };
                activations.push(act);
                masks.push(mask);
                inputs.push(h);
            }
        }
        if self.arch.skip {
            let scale = &self.parameters[offset..offset + self.d_img];
            for ((o, s), x) in output.iter_mut().zip(scale).zip(xt) {
                *o += s * x;
            }
        }
        Ok(Trace {
            inputs,
            activations,
            masks,
            output,
        })
    }

    /// Deterministic noise prediction `eps_hat(x_t, t, label)`.
    pub fn predict_noise(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        Ok(self
            .run::<rand_chacha::ChaCha8Rng>(xt, t, label, None)?
            .output)
    }

    fn backward(&self, trace: &Trace, upstream: &[f64]) -> Vec<f64> {
        let layers = self.arch.layers();
        let mut grad = vec![0.0; self.parameters.len()];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &(i, o) in &layers {
            offsets.push(offset);
            offset += i * o + o;
        }
        if self.arch.skip {
            let xt = &trace.inputs[0][..self.d_img];
            for k in 0..self.d_img {
                grad[offset + k] = upstream[k] * xt[k];
            }
        }
        let mut delta = upstream.to_vec();
        for li in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[li];
            let base = offsets[li];
            let x = &trace.inputs[li];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                    for (g, xv) in row.iter_mut().zip(x) {
                        *g += d * xv;
                    }
                }
                grad[base + fan_in * fan_out + o] += d;
            }
            if li == 0 {
                break;
            }
            let w = &self.parameters[base..base + fan_in * fan_out];
            let mut dx = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                for (acc, wv) in dx.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *acc += d * wv;
                }
            }
            let act = &trace.activations[li - 1];
            let mask = &trace.masks[li - 1];
            delta = dx
                .iter()
                .enumerate()
                .map(|(j, g)| {
                    let m = mask.as_ref().map_or(1.0, |m| m[j]);
                    g * m * (1.0 - act[j] * act[j])
                })
                .collect();
        }
        grad
    }

    /// Vector-Jacobian product `upstream^T d eps_hat / d parameters`.
    pub fn noise_vjp(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
        upstream: &[f64],
    ) -> Result<Vec<f64>, DiffusionError> {
        if upstream.len() != self.d_img {
            return Err(DiffusionError::Length {
                expected: self.d_img,
                got: upstream.len(),
            });
        }
        let trace = self.run::<rand_chacha::ChaCha8Rng>(xt, t, label, None)?;
        Ok(self.backward(&trace, upstream))
    }

    /// Mean-squared noise-prediction loss and its parameter gradient,
    /// evaluated without dropout.
    pub fn loss_and_gradient(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
        eps: &[f64],
    ) -> Result<(f64, Vec<f64>), DiffusionError> {
        let trace = self.run::<rand_chacha::ChaCha8Rng>(xt, t, label, None)?;
        Ok(self.mse_backward(&trace, eps))
    }

    fn mse_backward(&self, trace: &Trace, eps: &[f64]) -> (f64, Vec<f64>) {
        let d = self.d_img as f64;
        let diff: Vec<f64> = trace.output.iter().zip(eps).map(|(a, b)| a - b).collect();
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / d;
        let upstream: Vec<f64> = diff.iter().map(|v| 2.0 * v / d).collect();
        (loss, self.backward(trace, &upstream))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentTrainConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for AgentTrainConfig {
    fn default() -> Self {
        AgentTrainConfig {
            epochs: 200,
            lr: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAgent {
    pub agent: ToyAgent,
    /// Mean per-sample loss of every epoch.
    pub loss_history: Vec<f64>,
}

/// Per-sample gradient descent on the noise-prediction MSE. Each epoch
/// visits the dataset in a fresh random order and draws `t` uniformly.
pub fn train_agent<R: Rng + ?Sized>(
    dataset: &ToyDataset,
    spec: AgentSpec,
    sched: &NoiseSchedule,
    config: &AgentTrainConfig,
    rng: &mut R,
) -> Result<TrainedAgent, DiffusionError> {
    if config.epochs == 0 {
        return Err(DiffusionError::Config("epochs must be at least 1".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(DiffusionError::Config(format!(
            "lr must be positive, got {}",
            config.lr
        )));
    }
    if dataset.is_empty() {
        return Err(DiffusionError::Config("dataset is empty".into()));
    }
    let mut agent = ToyAgent::initialized(
        spec,
        dataset.d_img(),
        dataset.n_classes(),
        sched.steps(),
        rng,
    );
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &dataset.samples()[i];
            let t = rng.random_range(1..=sched.steps());
            let (xt, eps) = forward_noise(&s.image, t, sched, rng)?;
            let trace = agent.run(&xt, t, s.label, Some(&mut *rng))?;
            let (loss, grad) = agent.mse_backward(&trace, &eps);
            if !loss.is_finite() {
                return Err(DiffusionError::NonFinite { epoch, sample: i });
            }
            total += loss;
            for (p, g) in agent.parameters.iter_mut().zip(&grad) {
                *p -= config.lr * g;
            }
        }
        history.push(total / dataset.len() as f64);
    }
    Ok(TrainedAgent {
        agent,
        loss_history: history,
    })
}

/// `LGRAD-AG v1 <n_agents>` followed by one line per agent:
/// `agent <id> spec <bits> d_img <d> classes <c> horizon <T> params <count> <hex-floats...>`.
pub fn agents_to_text(agents: &[ToyAgent]) -> String {
    let mut w = ContainerWriter::new();
    w.line(&format!("LGRAD-AG v1 {}", agents.len()));
    for (id, a) in agents.iter().enumerate() {
        let mut line = format!(
            "agent {id} spec {} d_img {} classes {} horizon {} params {}",
            a.spec,
            a.d_img,
            a.conditioning_dim,
            a.horizon,
            a.parameters.len()
        );
        push_hex_values(&mut line, &a.parameters);
        w.line(&line);
    }
    w.finish()
}

pub fn agents_from_text(text: &str) -> Result<Vec<ToyAgent>, DiffusionError> {
    let lines = read_container(text)?;
    let header = lines
        .first()
        .ok_or_else(|| FormatError::parse(1, "missing header"))?;
    let mut f = header.fields();
    f.expect("LGRAD-AG")?;
    f.expect("v1")?;
    let n = f.next_usize("agent count")?;
    f.finish()?;
    if lines.len() != n + 1 {
        return Err(FormatError::parse(lines.len(), format!("expected {n} agent lines")).into());
    }
    let mut agents = Vec::with_capacity(n);
    for (id, line) in lines[1..].iter().enumerate() {
        let mut f = line.fields();
        f.expect("agent")?;
        let got = f.next_usize("agent id")?;
        if got != id {
            return Err(line
                .error(format!("expected agent id {id}, found {got}"))
                .into());
        }
        f.expect("spec")?;
        let spec: AgentSpec = f
            .next_str("spec bits")?
            .parse()
            .map_err(|e: crate::spec::SpecError| line.error(e.to_string()))?;
        f.expect("d_img")?;
        let d_img = f.next_usize("d_img")?;
        f.expect("classes")?;
        let classes = f.next_usize("class count")?;
        f.expect("horizon")?;
        let horizon = f.next_usize("horizon")?;
        f.expect("params")?;
        let count = f.next_usize("parameter count")?;
        let params = f.hex_values(count, "parameter")?;
        f.finish()?;
        let agent = ToyAgent::zeroed(spec, d_img, classes, horizon)
            .with_parameters(params)
            .map_err(|e| line.error(e.to_string()))?;
        agents.push(agent);
    }
    Ok(agents)
}

pub fn save_agents(agents: &[ToyAgent], path: &Path) -> Result<(), DiffusionError> {
    fs::write(path, agents_to_text(agents)).map_err(|source| DiffusionError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_agents(path: &Path) -> Result<Vec<ToyAgent>, DiffusionError> {
    let text = fs::read_to_string(path).map_err(|source| DiffusionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    agents_from_text(&text)
}
