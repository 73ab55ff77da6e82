use lgrad_core::diffusion::{
    agents_from_text, agents_to_text, denoise_estimate, forward_noise, make_sprite_dataset,
    reverse_step, train_agent, AgentTrainConfig, NoiseSchedule, ToyDataset,
};
use lgrad_core::spec::AgentSpec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn alpha_bar_by_product(steps: usize, start: f64, end: f64, t: usize) -> f64 {
    (1..=t)
        .map(|s| {
            let beta = start + (end - start) * (s - 1) as f64 / (steps - 1) as f64;
            1.0 - beta
        })
        .product()
}

#[test]
fn linear_schedule_matches_cumulative_product() {
    let sched = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
    for t in 1..=50 {
        let oracle = alpha_bar_by_product(50, 1e-4, 0.02, t);
        assert!((sched.alpha_bar(t) - oracle).abs() < 1e-12, "t={t}");
    }
    assert!((sched.beta(1) - 1e-4).abs() < 1e-18 && (sched.beta(50) - 0.02).abs() < 1e-15);
    assert!(sched.check_step(0).is_err() && sched.check_step(51).is_err());
}

proptest! {
    #[test]
    fn true_noise_recovers_the_clean_image(
        x0 in prop::collection::vec(0.0f64..=1.0, 1..20),
        t in 1usize..=50,
        seed in 0u64..500,
    ) {
        let sched = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xt, eps) = forward_noise(&x0, t, &sched, &mut rng).unwrap();
        let back = denoise_estimate(&xt, &eps, t, &sched);
        for (a, b) in back.iter().zip(&x0) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn final_reverse_step_is_deterministic() {
    let sched = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
    let xt = [0.2, -0.4];
    let eps = [0.1, 0.3];
    let a = reverse_step(&xt, &eps, 1, &sched, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = reverse_step(&xt, &eps, 1, &sched, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);
    let c = reverse_step(&xt, &eps, 2, &sched, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let d = reverse_step(&xt, &eps, 2, &sched, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_ne!(c, d);
}

#[test]
fn agent_training_reduces_noise_prediction_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data = make_sprite_dataset(8, 8, &mut rng).unwrap();
    let sched = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
    let spec: AgentSpec = "10010110".parse().unwrap();
    let cfg = AgentTrainConfig {
        epochs: 200,
        lr: 0.01,
    };
    let trained = train_agent(&data, spec, &sched, &cfg, &mut rng).unwrap();
    let h = &trained.loss_history;
    assert_eq!(h.len(), 200);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    assert!(h[9] < h[0], "epoch 10 {} vs epoch 1 {}", h[9], h[0]);
    assert!(mean(&h[190..]) < mean(&h[..10]));
}

#[test]
fn same_seed_gives_identical_agents_and_data() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = make_sprite_dataset(2, 8, &mut rng).unwrap();
        let sched = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let cfg = AgentTrainConfig {
            epochs: 5,
            lr: 0.01,
        };
        let spec: AgentSpec = "00001111".parse().unwrap();
        (
            data.clone(),
            train_agent(&data, spec, &sched, &cfg, &mut rng).unwrap(),
        )
    };
    let (d1, a1) = run();
    let (d2, a2) = run();
    assert_eq!(d1, d2);
    assert_eq!(a1, a2);
}

#[test]
fn text_formats_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = make_sprite_dataset(2, 8, &mut rng).unwrap();
    assert_eq!(ToyDataset::from_text(&data.to_text()).unwrap(), data);
    let sched = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
    let cfg = AgentTrainConfig {
        epochs: 2,
        lr: 0.01,
    };
    let agent = train_agent(&data, "11111111".parse().unwrap(), &sched, &cfg, &mut rng)
        .unwrap()
        .agent;
    let back = agents_from_text(&agents_to_text(std::slice::from_ref(&agent))).unwrap();
    assert_eq!(back, vec![agent]);
}
