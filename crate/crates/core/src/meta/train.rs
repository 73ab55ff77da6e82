use rand::seq::SliceRandom;
use rand::Rng;

use super::gcnn::blend_weights;
use super::{
    backward, blend, build_node_features, evaluate, DiversityMode, LossBreakdown, MetaError,
    MetaGradients, MetaModel, NodeFeatures, SampleInputs, FEATURE_DIM,
};
use crate::diffusion::{
    denoise_estimate, forward_noise, sample, NoiseSchedule, ToyAgent, ToyDataset,
};
use crate::graph::{
    build_graph, k_maximum_spanning_trees, per_sample_graph, ConnectivityMode, GraphParams,
    SpanningTree,
};
use crate::knowledge::KnowledgeBase;

type Images = Vec<Vec<f64>>;

/// Training hyperparameters for the meta-model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub epochs: usize,
    pub k_mst: usize,
    /// Kernel width of the per-sample graph.
    pub sigma: f64,
    /// Layer widths `d^(0), ..., d^(L)`; `d^(0)` must equal [`FEATURE_DIM`].
    pub dims: Vec<usize>,
    pub diversity: DiversityMode,
    /// Edge weighting. [`ConnectivityMode::PerSample`] rebuilds the graph
    /// for every sample; the other modes use one graph from the knowledge
    /// base.
    pub connectivity: ConnectivityMode,
    /// Agreement threshold for PCF/HYBRID graphs.
    pub tau: f64,
    /// Window for the recent-loss node feature.
    pub loss_window: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            lambda: 0.1,
            gamma: 0.01,
            eta: 0.01,
            epochs: 20,
            k_mst: 1,
            sigma: 0.1,
            dims: vec![FEATURE_DIM, 16, 8],
            diversity: DiversityMode::AgentOutputs,
            connectivity: ConnectivityMode::PerSample,
            tau: 0.01,
            loss_window: 10,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("eta", self.eta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MetaError::NegativeHyper { name, value: v });
            }
        }
        if self.k_mst == 0 {
            return Err(MetaError::Config("k_mst must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(MetaError::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.dims.first() != Some(&FEATURE_DIM) {
            return Err(MetaError::Config(format!(
                "first layer width must be {FEATURE_DIM}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            tau: self.tau,
            sigma: self.sigma,
            sample_id: 0,
        }
    }
}

/// Source of the spanning trees the GCNN runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphPolicy {
    /// Gaussian-kernel graph over the agents' current denoised estimates.
    PerSample { sigma: f64 },
    /// Fixed trees, reused for every sample.
    Static(Vec<SpanningTree>),
}

/// A pool of trained agents plus what the meta-model needs to weight them.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub agents: Vec<ToyAgent>,
    pub recent_losses: Vec<f64>,
    pub policy: GraphPolicy,
    pub k_mst: usize,
}

impl Ensemble {
    /// Pairs agents with their knowledge-base records (same order) and
    /// resolves the graph policy from `config`.
    pub fn new(
        kb: &KnowledgeBase,
        agents: Vec<ToyAgent>,
        config: &MetaConfig,
    ) -> Result<Self, MetaError> {
        if kb.len() != agents.len() {
            return Err(MetaError::Dimension(format!(
                "knowledge base has {} agents, pool has {}",
                kb.len(),
                agents.len()
            )));
        }
        if agents.is_empty() {
            return Err(MetaError::TooFewAgents { need: 1, got: 0 });
        }
        for (rec, agent) in kb.records().iter().zip(&agents) {
            if rec.spec != agent.spec {
                return Err(MetaError::Config(format!(
                    "agent {} spec {} does not match knowledge base spec {}",
                    rec.agent_id, agent.spec, rec.spec
                )));
            }
        }
        let recent_losses = kb
            .records()
            .iter()
            .map(|r| r.recent_loss(config.loss_window))
            .collect();
        let policy = match config.connectivity {
            ConnectivityMode::PerSample => GraphPolicy::PerSample {
                sigma: config.sigma,
            },
            _ if agents.len() == 1 => GraphPolicy::Static(Vec::new()),
            mode => {
                let g = build_graph(kb, mode, &config.graph_params())?;
                GraphPolicy::Static(k_maximum_spanning_trees(&g, config.k_mst)?)
            }
        };
        Ok(Ensemble {
            agents,
            recent_losses,
            policy,
            k_mst: config.k_mst,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Each agent's noise prediction and clamped one-shot estimate of `x0`.
    pub fn predict(
        &self,
        xt: &[f64],
        t: usize,
        label: usize,
        sched: &NoiseSchedule,
    ) -> Result<(Images, Images), MetaError> {
        let mut eps = Vec::with_capacity(self.len());
        let mut x0 = Vec::with_capacity(self.len());
        for a in &self.agents {
            let e = a.predict_noise(xt, t, label)?;
            x0.push(denoise_estimate(xt, &e, t, sched));
            eps.push(e);
        }
        Ok((eps, x0))
    }

    /// Spanning trees for the current estimates.
    pub fn trees(&self, x0_hats: &[Vec<f64>]) -> Result<Vec<SpanningTree>, MetaError> {
        if self.len() == 1 {
            return Ok(Vec::new());
        }
        match &self.policy {
            GraphPolicy::PerSample { sigma } => {
                let g = per_sample_graph(x0_hats, *sigma)?;
                Ok(k_maximum_spanning_trees(&g, self.k_mst)?)
            }
            GraphPolicy::Static(trees) => Ok(trees.clone()),
        }
    }

    pub fn features(&self, x0_hats: &[Vec<f64>]) -> Result<NodeFeatures, MetaError> {
        let specs: Vec<_> = self.agents.iter().map(|a| a.spec.clone()).collect();
        build_node_features(&specs, &self.recent_losses, x0_hats)
    }

    fn tree_inputs(
        &self,
        x0_hats: &[Vec<f64>],
        target: &[f64],
    ) -> Result<Vec<SampleInputs>, MetaError> {
        let features = self.features(x0_hats)?;
        let trees = self.trees(x0_hats)?;
        let adjacencies = if trees.is_empty() {
            vec![nalgebra::DMatrix::zeros(self.len(), self.len())]
        } else {
            trees.into_iter().map(|t| t.adjacency).collect()
        };
        Ok(adjacencies
            .into_iter()
            .map(|adjacency| SampleInputs {
                adjacency,
                features: features.clone(),
                predictions: x0_hats.to_vec(),
                target: target.to_vec(),
            })
            .collect())
    }

    /// Blending weights at state `xt`, averaged over the spanning trees.
    pub fn blend_weights(
        &self,
        model: &MetaModel,
        x0_hats: &[Vec<f64>],
    ) -> Result<Vec<f64>, MetaError> {
        if self.len() == 1 {
            return Ok(vec![1.0]);
        }
        let features = self.features(x0_hats)?;
        let trees = self.trees(x0_hats)?;
        let mut pi = vec![0.0; self.len()];
        for t in &trees {
            for (acc, p) in pi
                .iter_mut()
                .zip(blend_weights(model, &t.adjacency, &features)?)
            {
                *acc += p;
            }
        }
        let k = trees.len() as f64;
        Ok(pi.into_iter().map(|p| p / k).collect())
    }

    /// Full reverse chain driven by the blended noise prediction, with the
    /// weights recomputed at every step.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        model: &MetaModel,
        label: usize,
        sched: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<Vec<f64>, MetaError> {
        let d_img = self.agents[0].d_img;
        sample(
            |xt: &[f64], t: usize, label: usize| -> Result<Vec<f64>, MetaError> {
                let (eps, x0) = self.predict(xt, t, label, sched)?;
                let pi = self.blend_weights(model, &x0)?;
                blend(&pi, &eps)
            },
            label,
            d_img,
            sched,
            rng,
        )
    }
}

#[derive(Debug, Clone)]
pub struct MetaTraining {
    pub model: MetaModel,
    /// Mean breakdown per epoch.
    pub history: Vec<LossBreakdown>,
    /// Breakdown of every sample step, averaged over trees.
    pub steps: Vec<LossBreakdown>,
}

/// Gradient descent on the composite loss, one update per training sample.
pub fn train_meta<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    dataset: &ToyDataset,
    sched: &NoiseSchedule,
    config: &MetaConfig,
    rng: &mut R,
) -> Result<MetaTraining, MetaError> {
    config.validate()?;
    if ensemble.len() < 2 {
        return Err(MetaError::TooFewAgents {
            need: 2,
            got: ensemble.len(),
        });
    }
    let mut model =
        MetaModel::new(&config.dims, rng)?.with_hyper(config.lambda, config.gamma, config.k_mst)?;
    model.diversity = config.diversity;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut steps = Vec::with_capacity(config.epochs * dataset.len());
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_parts = Vec::with_capacity(order.len());
        for &idx in &order {
            let s = &dataset.samples()[idx];
            let t = rng.random_range(1..=sched.steps());
            let (xt, _) = forward_noise(&s.image, t, sched, rng)?;
            let (_, x0_hats) = ensemble.predict(&xt, t, s.label, sched)?;
            let inputs = ensemble.tree_inputs(&x0_hats, &s.image)?;

            let mut grad = MetaGradients::zeros_like(&model);
            let mut parts = Vec::with_capacity(inputs.len());
            let scale = 1.0 / inputs.len() as f64;
            for inp in &inputs {
                let eval = evaluate(&model, inp)?;
                if !eval.loss.total.is_finite() {
                    return Err(MetaError::NonFinite {
                        epoch,
                        sample: s.id,
                    });
                }
                grad.add_scaled(&backward(&model, inp, &eval)?, scale);
                parts.push(eval.loss);
            }
            if grad.flatten().iter().any(|g| !g.is_finite()) {
                return Err(MetaError::NonFinite {
                    epoch,
                    sample: s.id,
                });
            }
            model.apply_gradient(&grad, config.eta);
            let step = LossBreakdown::mean(&parts, model.lambda, model.gamma);
            steps.push(step);
            epoch_parts.push(step);
        }
        history.push(LossBreakdown::mean(&epoch_parts, model.lambda, model.gamma));
    }
    Ok(MetaTraining {
        model,
        history,
        steps,
    })
}
