//! In-memory experiment pipeline shared by the commands and the ablations.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{seeds, ExperimentConfig, HarnessError};
use crate::diffusion::{
    denoise_estimate, forward_noise, load_agents, make_sprite_dataset, train_agent, NoiseSchedule,
    ToyAgent, ToyDataset, TrainedAgent,
};
use crate::knowledge::KnowledgeBase;
use crate::meta::{blend, train_meta, Ensemble, MetaConfig, MetaModel, MetaTraining};
use crate::metrics::{diversity, frechet_distance, reconstruction_error, SampleSet};

pub const DATASET_FILE: &str = "dataset.txt";
pub const AGENTS_FILE: &str = "agents.txt";
pub const KB_FILE: &str = "kb.txt";
pub const META_FILE: &str = "meta.txt";

/// Dataset, trained agents and their knowledge base.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: ToyDataset,
    pub agents: Vec<ToyAgent>,
    pub kb: KnowledgeBase,
}

fn rng(seed: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seeds::derive(seed, role))
}

/// Records every agent's one-shot estimate of each training image at
/// `probe_step`, using the same noised input for all agents.
pub fn build_knowledge_base(
    dataset: &ToyDataset,
    trained: &[TrainedAgent],
    sched: &NoiseSchedule,
    probe_step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KnowledgeBase, HarnessError> {
    let noised = dataset
        .samples()
        .iter()
        .map(|s| forward_noise(&s.image, probe_step, sched, rng).map(|(xt, _)| xt))
        .collect::<Result<Vec<_>, _>>()?;
    let mut kb = KnowledgeBase::new(dataset.fingerprint(), dataset.len());
    for t in trained {
        let mut outputs = Vec::with_capacity(dataset.len());
        let mut errors = Vec::with_capacity(dataset.len());
        for (s, xt) in dataset.samples().iter().zip(&noised) {
            let eps = t.agent.predict_noise(xt, probe_step, s.label)?;
            let x0 = denoise_estimate(xt, &eps, probe_step, sched);
            errors.push(reconstruction_error(&x0, &s.image)?);
            outputs.push(x0);
        }
        kb.record_agent(
            t.agent.spec.clone(),
            outputs,
            errors,
            t.loss_history.clone(),
        )?;
    }
    Ok(kb)
}

impl Prepared {
    /// Generates the dataset and trains every configured agent.
    pub fn train(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let sched = cfg.noise_schedule()?;
        let dataset = make_sprite_dataset(
            cfg.dataset.n_per_class,
            cfg.dataset.d_side,
            &mut rng(cfg.seed, seeds::DATASET),
        )?;
        let specs = cfg.agent_specs()?;
        let trained = specs
            .into_par_iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut r = rng(cfg.seed, seeds::AGENTS + i as u64);
                train_agent(&dataset, spec, &sched, &cfg.agent_train_config(i), &mut r)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let kb = build_knowledge_base(
            &dataset,
            &trained,
            &sched,
            cfg.probe_step(),
            &mut rng(cfg.seed, seeds::PROBE),
        )?;
        Ok(Prepared {
            dataset,
            agents: trained.into_iter().map(|t| t.agent).collect(),
            kb,
        })
    }

    /// Reads the files written by `train-agents` and checks they belong
    /// together.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let need = |name: &str| {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(HarnessError::MissingInput {
                    path: p,
                    hint: "run `lgrad train-agents` first",
                })
            }
        };
        let dataset = ToyDataset::load(&need(DATASET_FILE)?)?;
        let agents = load_agents(&need(AGENTS_FILE)?)?;
        let kb = KnowledgeBase::load(&need(KB_FILE)?)?;
        if kb.dataset_fingerprint() != dataset.fingerprint() {
            return Err(HarnessError::Mismatch(format!(
                "knowledge base was built from dataset {:016x}, found {:016x}",
                kb.dataset_fingerprint(),
                dataset.fingerprint()
            )));
        }
        if kb.len() != agents.len() {
            return Err(HarnessError::Mismatch(format!(
                "knowledge base has {} agents, agent file has {}",
                kb.len(),
                agents.len()
            )));
        }
        Ok(Prepared {
            dataset,
            agents,
            kb,
        })
    }

    pub fn ensemble(&self, ids: &[usize], config: &MetaConfig) -> Result<Ensemble, HarnessError> {
        let kb = self.kb.subset(ids)?;
        let agents = ids
            .iter()
            .map(|&i| {
                self.agents.get(i).cloned().ok_or_else(|| {
                    HarnessError::Config(format!(
                        "agent {i} out of range for {}",
                        self.agents.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Ensemble::new(&kb, agents, config)?)
    }
}

/// Generation and reconstruction quality of one ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean over classes of the toy-Fréchet distance between generated
    /// images and that class's training images.
    pub toy_frechet: f64,
    /// Mean over classes of the pairwise distance among generated images.
    pub diversity: f64,
    /// Mean squared error of the blended one-shot estimate at the probe
    /// step.
    pub recon_mse: f64,
}

/// Model passed where the GCNN is bypassed (single-agent pools).
pub fn placeholder_model(config: &MetaConfig) -> Result<MetaModel, HarnessError> {
    Ok(MetaModel::new(
        &config.dims,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?)
}

/// Generated images per class, drawn with per-class streams so every
/// ensemble sees the same noise.
pub fn generate_by_class(
    ens: &Ensemble,
    model: &MetaModel,
    dataset: &ToyDataset,
    sched: &NoiseSchedule,
    n_generated: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>, HarnessError> {
    (0..dataset.n_classes())
        .map(|c| {
            let mut r = rng(seed, seeds::GENERATE + c as u64);
            (0..n_generated)
                .map(|_| Ok(ens.generate(model, c, sched, &mut r)?))
                .collect()
        })
        .collect()
}

pub fn evaluate(
    ens: &Ensemble,
    model: &MetaModel,
    dataset: &ToyDataset,
    sched: &NoiseSchedule,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let generated = generate_by_class(ens, model, dataset, sched, cfg.eval.n_generated, seed)?;
    let mut frechet = 0.0;
    let mut div = 0.0;
    for (c, images) in generated.into_iter().enumerate() {
        let set = SampleSet::new(images, Some(c))?;
        let reference = SampleSet::new(dataset.images_of_class(c), Some(c))?;
        frechet += frechet_distance(&set, &reference)?;
        div += if set.len() >= 2 {
            diversity(&set)?
        } else {
            0.0
        };
    }
    let k = dataset.n_classes() as f64;

    let probe = cfg.probe_step();
    let mut r = rng(seed, seeds::EVAL);
    let mut recon = 0.0;
    for s in dataset.samples() {
        let (xt, _) = forward_noise(&s.image, probe, sched, &mut r)?;
        let (_, x0) = ens.predict(&xt, probe, s.label, sched)?;
        let pi = ens.blend_weights(model, &x0)?;
        recon += reconstruction_error(&blend(&pi, &x0)?, &s.image)?;
    }
    Ok(EvalReport {
        toy_frechet: frechet / k,
        diversity: div / k,
        recon_mse: recon / dataset.len() as f64,
    })
}

/// Trains the meta-model on a sub-pool (skipped for a single agent) and
/// evaluates it.
pub fn run_pool(
    prep: &Prepared,
    ids: &[usize],
    cfg: &ExperimentConfig,
    meta: &MetaConfig,
    seed: u64,
) -> Result<(Option<MetaTraining>, EvalReport), HarnessError> {
    let sched = cfg.noise_schedule()?;
    let ens = prep.ensemble(ids, meta)?;
    let training = if ids.len() >= 2 {
        Some(train_meta(
            &ens,
            &prep.dataset,
            &sched,
            meta,
            &mut rng(seed, seeds::META),
        )?)
    } else {
        None
    };
    let model = match &training {
        Some(t) => t.model.clone(),
        None => placeholder_model(meta)?,
    };
    let report = evaluate(&ens, &model, &prep.dataset, &sched, cfg, seed)?;
    Ok((training, report))
}

/// Every subset of `0..n` with at least two members, by size then
/// lexicographically; the full pool comes last.
pub fn ablation_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0u32..1 << n)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn subset_name(ids: &[usize]) -> String {
    ids.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("+")
}
