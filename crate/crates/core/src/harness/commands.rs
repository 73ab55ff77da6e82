//! One function per CLI subcommand. Each reads its inputs from `out` (as
//! written by earlier commands) and returns the paths it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::pipeline::{
    ablation_subsets, evaluate, run_pool, subset_name, EvalReport, Prepared, AGENTS_FILE,
    DATASET_FILE, KB_FILE, META_FILE,
};
use super::{seeds, ExperimentConfig, HarnessError};
use crate::diffusion::save_agents;
use crate::graph::{build_graph, maximum_spanning_tree, ConnectivityMode};
use crate::meta::MetaModel;
use crate::metrics::{diversity, frechet_distance, SampleSet};

pub const GRAPH_FILE: &str = "graph.txt";
pub const TREE_FILE: &str = "tree.txt";
pub const LOSS_FILE: &str = "loss.csv";
pub const IMAGES_FILE: &str = "images.txt";
pub const GENERATE_METRICS_FILE: &str = "generate.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATE_MODELS_FILE: &str = "ablate_models.csv";
pub const ABLATE_CONNECTIVITY_FILE: &str = "ablate_connectivity.csv";

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, contents).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn ensure_dir(out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(|source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn load_meta(out: &Path) -> Result<MetaModel, HarnessError> {
    let path = out.join(META_FILE);
    if !path.exists() {
        return Err(HarnessError::MissingInput {
            path,
            hint: "run `lgrad train-meta` first",
        });
    }
    Ok(MetaModel::load(&path)?)
}

fn report_cells(r: &EvalReport) -> String {
    format!("{:.9},{:.9},{:.9}", r.toy_frechet, r.diversity, r.recon_mse)
}

pub fn cmd_train_agents(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    ensure_dir(out)?;
    let prep = Prepared::train(cfg)?;
    let dataset = out.join(DATASET_FILE);
    prep.dataset.save(&dataset)?;
    let agents = out.join(AGENTS_FILE);
    save_agents(&prep.agents, &agents)?;
    let kb = out.join(KB_FILE);
    prep.kb.save(&kb)?;
    Ok(vec![dataset, agents, kb])
}

/// Writes the configured connectivity graph and its maximum spanning tree.
/// `PER_SAMPLE` uses the knowledge-base outputs of sample 0.
pub fn cmd_build_graph(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    let meta = cfg.meta_config()?;
    let g = build_graph(&prep.kb, meta.connectivity, &meta.graph_params())?;
    let tree = maximum_spanning_tree(&g)?;
    Ok(vec![
        write(out.join(GRAPH_FILE), &g.to_text())?,
        write(out.join(TREE_FILE), &tree.to_text(g.mode))?,
    ])
}

pub fn cmd_train_meta(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    let meta = cfg.meta_config()?;
    let ids: Vec<usize> = (0..prep.agents.len()).collect();
    let (training, _) = run_meta_only(&prep, &ids, cfg, &meta)?;
    let model = out.join(META_FILE);
    training.model.save(&model)?;
    let mut csv = String::from("epoch,C,D,Llap,total\n");
    for (e, b) in training.history.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{:.12},{:.12},{:.12},{:.12}",
            e + 1,
            b.c,
            b.d,
            b.laplace,
            b.total
        );
    }
    Ok(vec![model, write(out.join(LOSS_FILE), &csv)?])
}

fn run_meta_only(
    prep: &Prepared,
    ids: &[usize],
    cfg: &ExperimentConfig,
    meta: &crate::meta::MetaConfig,
) -> Result<(crate::meta::MetaTraining, crate::meta::Ensemble), HarnessError> {
    let sched = cfg.noise_schedule()?;
    let ens = prep.ensemble(ids, meta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, seeds::META));
    let training = crate::meta::train_meta(&ens, &prep.dataset, &sched, meta, &mut rng)?;
    Ok((training, ens))
}

/// Text grid: a header line, then per image a `image <k>` line followed by
/// `side` rows of `side` values with four decimals.
pub fn format_image_grid(images: &[Vec<f64>], side: usize, label: usize) -> String {
    let mut s = format!("LGRAD-IMG v1 {} {side} label {label}\n", images.len());
    for (k, img) in images.iter().enumerate() {
        let _ = writeln!(s, "image {k}");
        for row in img.chunks(side) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
    }
    s
}

/// Generates `count` images of `label` with the trained meta-model.
pub fn cmd_generate(
    cfg: &ExperimentConfig,
    out: &Path,
    label: usize,
    count: usize,
) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    if label >= prep.dataset.n_classes() {
        return Err(HarnessError::Config(format!(
            "label {label} out of range for {} classes",
            prep.dataset.n_classes()
        )));
    }
    let model = load_meta(out)?;
    let meta = cfg.meta_config()?;
    let sched = cfg.noise_schedule()?;
    let ids: Vec<usize> = (0..prep.agents.len()).collect();
    let ens = prep.ensemble(&ids, &meta)?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, seeds::GENERATE + label as u64));
    let images = (0..count)
        .map(|_| ens.generate(&model, label, &sched, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;

    let side = cfg.dataset.d_side;
    let mut csv = String::from("label,count,toy_frechet,diversity\n");
    let (fr, dv) = if images.is_empty() {
        (String::new(), String::new())
    } else {
        let set = SampleSet::new(images.clone(), Some(label))?;
        let reference = SampleSet::new(prep.dataset.images_of_class(label), Some(label))?;
        let fr = format!("{:.9}", frechet_distance(&set, &reference)?);
        let dv = if set.len() >= 2 {
            format!("{:.9}", diversity(&set)?)
        } else {
            String::new()
        };
        (fr, dv)
    };
    let _ = writeln!(csv, "{label},{count},{fr},{dv}");
    Ok(vec![
        write(
            out.join(IMAGES_FILE),
            &format_image_grid(&images, side, label),
        )?,
        write(out.join(GENERATE_METRICS_FILE), &csv)?,
    ])
}

/// Evaluates each agent alone and the trained ensemble.
pub fn cmd_metrics(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    let model = load_meta(out)?;
    let meta = cfg.meta_config()?;
    let sched = cfg.noise_schedule()?;
    let n = prep.agents.len();
    let pools: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).chain([(0..n).collect()]).collect();
    let reports = pools
        .par_iter()
        .map(|ids| {
            let ens = prep.ensemble(ids, &meta)?;
            evaluate(&ens, &model, &prep.dataset, &sched, cfg, cfg.seed)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut csv = String::from("model,toy_frechet,diversity,recon_mse\n");
    for (i, r) in reports.iter().enumerate() {
        let name = if i < n {
            format!("agent_{i}")
        } else {
            "ensemble".into()
        };
        let _ = writeln!(csv, "{name},{}", report_cells(r));
    }
    Ok(vec![write(out.join(METRICS_FILE), &csv)?])
}

/// One row per (subset of size >= 2, trend seed).
pub fn cmd_ablate_models(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    let meta = cfg.meta_config()?;
    let subsets = ablation_subsets(prep.agents.len());
    let grid: Vec<(usize, usize)> = (0..subsets.len())
        .flat_map(|s| (0..cfg.eval.seeds_for_trends).map(move |k| (s, k)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(s, k)| {
            let seed = seeds::trend(cfg.seed, k);
            let (_, r) = run_pool(&prep, &subsets[s], cfg, &meta, seed)?;
            Ok(format!(
                "{},{seed},{}",
                subset_name(&subsets[s]),
                report_cells(&r)
            ))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut csv = String::from("subset,seed,toy_frechet,diversity,recon_mse\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    Ok(vec![write(out.join(ABLATE_MODELS_FILE), &csv)?])
}

pub const ABLATION_MODES: [ConnectivityMode; 3] = [
    ConnectivityMode::Ccf,
    ConnectivityMode::Pcf,
    ConnectivityMode::Hybrid,
];

/// One row per (static connectivity mode, trend seed) on the full pool.
pub fn cmd_ablate_connectivity(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let prep = Prepared::load(out)?;
    let base = cfg.meta_config()?;
    let ids: Vec<usize> = (0..prep.agents.len()).collect();
    let grid: Vec<(ConnectivityMode, usize)> = ABLATION_MODES
        .into_iter()
        .flat_map(|m| (0..cfg.eval.seeds_for_trends).map(move |k| (m, k)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(mode, k)| {
            let seed = seeds::trend(cfg.seed, k);
            let mut meta = base.clone();
            meta.connectivity = mode;
            let (_, r) = run_pool(&prep, &ids, cfg, &meta, seed)?;
            Ok(format!("{},{seed},{}", mode.name(), report_cells(&r)))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut csv = String::from("mode,seed,toy_frechet,diversity,recon_mse\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    Ok(vec![write(out.join(ABLATE_CONNECTIVITY_FILE), &csv)?])
}
