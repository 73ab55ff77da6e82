use std::sync::OnceLock;

use lgrad_core::diffusion::sample;
use lgrad_core::harness::{
    ablation_subsets, placeholder_model, run_pool, seeds, subset_name, ExperimentConfig, Prepared,
};
use lgrad_core::meta::{train_meta, DiversityMode, MetaConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn defaults() -> &'static (ExperimentConfig, Prepared) {
    static PREP: OnceLock<(ExperimentConfig, Prepared)> = OnceLock::new();
    PREP.get_or_init(|| {
        let cfg = ExperimentConfig::with_seed(7);
        let prep = Prepared::train(&cfg).unwrap();
        (cfg, prep)
    })
}

#[test]
fn knowledge_base_has_one_record_per_agent() {
    let (cfg, prep) = defaults();
    assert_eq!(prep.kb.len(), cfg.agents.len());
    assert_eq!(prep.kb.n_samples(), prep.dataset.len());
    assert_eq!(prep.kb.dataset_fingerprint(), prep.dataset.fingerprint());
}

#[test]
fn meta_training_lowers_the_composite_loss() {
    let (cfg, prep) = defaults();
    assert_eq!(prep.dataset.len(), 32);
    let sched = cfg.noise_schedule().unwrap();
    for diversity in [DiversityMode::AgentOutputs, DiversityMode::BlendWeighted] {
        let meta = MetaConfig {
            epochs: 50,
            diversity,
            ..MetaConfig::default()
        };
        let ens = prep.ensemble(&[0, 1, 2, 3], &meta).unwrap();
        let run = train_meta(
            &ens,
            &prep.dataset,
            &sched,
            &meta,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(run.history.len(), 50);
        assert_eq!(run.steps.len(), 50 * 32);
        let (first, last) = (run.history[0].total, run.history[49].total);
        assert!(
            last < first,
            "{diversity}: epoch 50 {last} vs epoch 1 {first}"
        );
    }
}

#[test]
fn single_agent_ensemble_samples_like_the_agent() {
    let (cfg, prep) = defaults();
    let sched = cfg.noise_schedule().unwrap();
    let meta = MetaConfig::default();
    let ens = prep.ensemble(&[2], &meta).unwrap();
    let model = placeholder_model(&meta).unwrap();
    let agent = &prep.agents[2];
    for label in 0..prep.dataset.n_classes() {
        let a = ens
            .generate(&model, label, &sched, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let b = sample(
            |x, t, l| agent.predict_noise(x, t, l),
            label,
            agent.d_img,
            &sched,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn same_seed_reproduces_a_pool_run() {
    let (cfg, prep) = defaults();
    let meta = MetaConfig {
        epochs: 2,
        ..cfg.meta_config().unwrap()
    };
    let a = run_pool(prep, &[0, 1, 3], cfg, &meta, 11).unwrap();
    let b = run_pool(prep, &[0, 1, 3], cfg, &meta, 11).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.unwrap().model, b.0.unwrap().model);
}

#[test]
fn trained_ensemble_beats_the_worst_single_agent() {
    let (cfg, prep) = defaults();
    let meta = cfg.meta_config().unwrap();
    let ids: Vec<usize> = (0..prep.agents.len()).collect();
    let mut wins = 0;
    for k in 0..5 {
        let seed = seeds::trend(cfg.seed, k);
        let full = run_pool(prep, &ids, cfg, &meta, seed)
            .unwrap()
            .1
            .toy_frechet;
        let worst = ids
            .iter()
            .map(|&i| {
                run_pool(prep, &[i], cfg, &meta, seed)
                    .unwrap()
                    .1
                    .toy_frechet
            })
            .fold(f64::MIN, f64::max);
        if full < worst {
            wins += 1;
        }
    }
    assert!(
        wins >= 3,
        "ensemble below worst single agent in {wins}/5 seeds"
    );
}

#[test]
fn ablation_grid_enumerates_every_multi_agent_subset() {
    let subsets = ablation_subsets(4);
    assert_eq!(subsets.len(), 11);
    assert_eq!(subset_name(&subsets[0]), "0+1");
    assert_eq!(subset_name(subsets.last().unwrap()), "0+1+2+3");
}
