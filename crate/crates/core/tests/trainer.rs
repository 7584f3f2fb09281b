use std::collections::HashSet;

use crowdnav_core::model::{ModelConfig, ModelParams};
use crowdnav_core::planner::PlanConfig;
use crowdnav_core::sim::{Action, SimConfig};
use crowdnav_core::trainer::{
    collect_demonstrations, epsilon_at, imitation_learning, prediction_error, rng_stream,
    Checkpoint, ReplayMemory, RngStream, TrainConfig, Trainer, Transition,
};
use crowdnav_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_model() -> ModelConfig {
    ModelConfig {
        robot_mlp: vec![16, 8],
        human_mlp: vec![16, 8],
        value_mlp: vec![16],
        motion_mlp: vec![16],
        ..ModelConfig::default()
    }
}

fn small_sim(humans: usize) -> SimConfig {
    SimConfig {
        human_num: humans,
        ..SimConfig::default()
    }
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        il_episodes: 4,
        il_epochs: 2,
        rl_episodes: 3,
        batch_size: 16,
        plan: PlanConfig {
            depth: 1,
            ..PlanConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn tagged(i: usize) -> Transition {
    let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
    let state = crowdnav_core::model::random_joint_state(&mut rng, 1);
    Transition {
        next_state: state.clone(),
        state,
        action: Action::new(0.0, 0.0),
        reward: i as f64,
        terminal: false,
        return_to_go: None,
    }
}

#[test]
fn epsilon_schedule() {
    assert_eq!(epsilon_at(0), 0.5);
    assert!((epsilon_at(2500) - 0.3).abs() < 1e-15);
    assert!((epsilon_at(9999) - 0.1).abs() < 1e-15);
    assert!((epsilon_at(5000) - 0.1).abs() < 1e-15);
    for ep in (0..20_000).step_by(37) {
        let e = epsilon_at(ep);
        assert!((0.1 - 1e-15..=0.5).contains(&e), "{ep}: {e}");
        let want = 0.5 - 0.4 * (ep as f64 / 5000.0).min(1.0);
        assert_eq!(e, TrainConfig::default().epsilon_at(ep));
        assert!((e - want).abs() < 1e-15);
    }
}

#[test]
fn replay_is_a_bounded_fifo() {
    let mut memory = ReplayMemory::new(5);
    for i in 0..12 {
        memory.push(tagged(i));
        assert!(memory.len() <= 5);
    }
    let rewards: Vec<f64> = memory.iter().map(|t| t.reward).collect();
    assert_eq!(rewards, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
}

#[test]
fn replay_samples_without_replacement() {
    let mut memory = ReplayMemory::new(50);
    memory.extend((0..50).map(tagged));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = [0u32; 50];
    for _ in 0..2000 {
        let batch = memory.sample(10, &mut rng);
        let ids: HashSet<u64> = batch.iter().map(|t| t.reward as u64).collect();
        assert_eq!(ids.len(), 10);
        for id in ids {
            assert!(id < 50);
            hits[id as usize] += 1;
        }
    }
    // each index is expected 400 times
    assert!(hits.iter().all(|&h| (300..500).contains(&h)), "{hits:?}");
    assert_eq!(memory.sample(100, &mut rng).len(), 50);
}

#[test]
fn replay_round_trips_through_a_file() {
    let mut memory = ReplayMemory::new(8);
    memory.extend((0..3).map(tagged));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.json");
    memory.save(&path).unwrap();
    assert_eq!(ReplayMemory::load(&path).unwrap(), memory);
}

#[test]
fn demonstrations_are_complete_episodes() {
    let sim = small_sim(5);
    let mut rng = rng_stream(0, RngStream::Demonstrations);
    let empty = collect_demonstrations(&sim, 0, 0.9, 1000, &mut rng).unwrap();
    assert!(empty.is_empty());

    let memory = collect_demonstrations(&sim, 20, 0.9, 100_000, &mut rng).unwrap();
    let all: Vec<&Transition> = memory.iter().collect();
    assert!(all.last().unwrap().terminal);
    assert_eq!(all.iter().filter(|t| t.terminal).count(), 20);
    let discount = 0.9f64.powf(0.25);
    for (i, t) in all.iter().enumerate() {
        let g = t.return_to_go.unwrap();
        if t.terminal {
            assert_eq!(g, t.reward);
        } else {
            let next = all[i + 1];
            assert_eq!(next.state, t.next_state, "episode continuity");
            let want = t.reward + discount * next.return_to_go.unwrap();
            assert!((g - want).abs() < 1e-12);
        }
    }

    // the empty run drew nothing, so a fresh stream reproduces the memory
    let again = collect_demonstrations(
        &sim,
        20,
        0.9,
        100_000,
        &mut rng_stream(0, RngStream::Demonstrations),
    )
    .unwrap();
    assert_eq!(again, memory);
}

#[test]
fn imitation_rejects_empty_memory() {
    let mut model = ModelParams::new(&small_model(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = imitation_learning(
        &mut model,
        &ReplayMemory::new(10),
        &TrainConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn imitation_losses_decrease() {
    let sim = small_sim(5);
    let memory =
        collect_demonstrations(&sim, 60, 0.9, 100_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut model = ModelParams::new(&small_model(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let config = TrainConfig {
        il_epochs: 10,
        ..TrainConfig::default()
    };
    let history = imitation_learning(
        &mut model,
        &memory,
        &config,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(history.len(), 10);
    for w in history.windows(2) {
        assert!(w[1].value_loss < w[0].value_loss, "{history:?}");
        assert!(w[1].prediction_loss < w[0].prediction_loss, "{history:?}");
    }
}

#[test]
fn imitation_memorizes_a_single_transition() {
    let sim = small_sim(3);
    let full =
        collect_demonstrations(&sim, 1, 0.9, 100_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut memory = ReplayMemory::new(1);
    memory.push(full.get(0).unwrap().clone());
    let mut model = ModelParams::new(&small_model(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let config = TrainConfig {
        il_epochs: 400,
        il_learning_rate: 0.01,
        il_final_lr_fraction: 1.0,
        ..TrainConfig::default()
    };
    let history = imitation_learning(
        &mut model,
        &memory,
        &config,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let (first, last) = (history[0], history[history.len() - 1]);
    assert!(
        last.value_loss < 1e-6 && last.value_loss < first.value_loss * 1e-3,
        "{last:?}"
    );
    assert!(last.prediction_loss < 1e-6, "{last:?}");
}

#[test]
fn value_and_prediction_updates_are_isolated() {
    // without humans the prediction loss is empty, so only the value stack may move
    let sim = small_sim(0);
    let memory =
        collect_demonstrations(&sim, 2, 0.9, 100_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut model = ModelParams::new(&small_model(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let before = model.clone();
    let config = TrainConfig {
        il_epochs: 2,
        ..TrainConfig::default()
    };
    imitation_learning(
        &mut model,
        &memory,
        &config,
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    assert_eq!(model.prediction.store(), before.prediction.store());
    assert_ne!(model.value.store(), before.value.store());
}

fn trainer(seed: u64, config: TrainConfig) -> Trainer {
    let sim = small_sim(3);
    let memory = collect_demonstrations(
        &sim,
        config.il_episodes,
        0.9,
        1000,
        &mut rng_stream(seed, RngStream::Demonstrations),
    )
    .unwrap();
    let mut model =
        ModelParams::new(&small_model(), &mut rng_stream(seed, RngStream::Init)).unwrap();
    imitation_learning(
        &mut model,
        &memory,
        &config,
        &mut rng_stream(seed, RngStream::Imitation),
    )
    .unwrap();
    Trainer::new(config, sim, model, memory, seed).unwrap()
}

#[test]
fn terminal_targets_do_not_bootstrap() {
    let tr = trainer(4, quick_config());
    let t = tr.memory().iter().find(|t| t.terminal).unwrap().clone();
    let live = tr.memory().iter().find(|t| !t.terminal).unwrap().clone();
    let targets = tr.value_targets(&[&t, &live]).unwrap();
    assert_eq!(targets[0], t.reward);
    let v = tr.target().value(&live.next_state).unwrap();
    assert_eq!(targets[1], live.reward + 0.9f64.powf(0.25) * v);
}

#[test]
fn target_network_syncs_at_episode_end() {
    let mut tr = trainer(5, quick_config());
    assert_eq!(tr.target().store(), tr.model().value.store());
    let before = tr.target().store().clone();
    let record = tr.run_episode().unwrap();
    assert!(record.steps > 0);
    assert_ne!(&before, tr.target().store());
    assert_eq!(tr.target().store(), tr.model().value.store());
    assert_eq!(tr.log().len(), 1);
    assert_eq!(record.epsilon, 0.5);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let config = TrainConfig {
        rl_episodes: 4,
        ..quick_config()
    };
    let mut straight = trainer(6, config);
    while !straight.is_done() {
        straight.run_episode().unwrap();
    }

    let mut first = trainer(6, config);
    first.run_episode().unwrap();
    first.run_episode().unwrap();
    let text = serde_json::to_string(&first.checkpoint()).unwrap();
    drop(first);
    let checkpoint: Checkpoint = serde_json::from_str(&text).unwrap();
    let mut resumed = Trainer::resume(checkpoint).unwrap();
    assert_eq!(resumed.episodes_done(), 2);
    while !resumed.is_done() {
        resumed.run_episode().unwrap();
    }

    assert_eq!(resumed.log(), straight.log());
    assert_eq!(resumed.checkpoint(), straight.checkpoint());
    let other = {
        let mut t = trainer(7, config);
        t.run_episode().unwrap();
        t
    };
    assert_ne!(other.log()[0], straight.log()[0]);
}

#[test]
fn checkpoint_file_round_trip() {
    let tr = trainer(8, quick_config());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    tr.checkpoint().save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), tr.checkpoint());
}

#[test]
fn divergence_guard_aborts() {
    let config = TrainConfig {
        divergence_threshold: 1e-300,
        ..quick_config()
    };
    let mut tr = trainer(9, config);
    assert!(matches!(tr.run_episode(), Err(Error::Diverged(_))));
}

#[test]
fn invalid_train_configs_are_rejected() {
    for bad in [
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            epsilon_start: 1.5,
            ..TrainConfig::default()
        },
        TrainConfig {
            plan: PlanConfig {
                depth: 0,
                ..PlanConfig::default()
            },
            ..TrainConfig::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn prediction_error_baseline_matches_hand_computation() {
    let sim = small_sim(4);
    let memory =
        collect_demonstrations(&sim, 3, 0.9, 100_000, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let model = ModelParams::new(&small_model(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let report = prediction_error(&model.prediction, memory.iter(), 0.25).unwrap();
    let (mut sum, mut n) = (0.0, 0);
    for t in memory.iter() {
        for (h, next) in t.state.humans.iter().zip(&t.next_state.humans) {
            let guess = h.position + h.velocity * 0.25;
            sum += (guess - next.position).length();
            n += 1;
        }
    }
    assert_eq!(report.samples, n);
    assert!((report.linear - sum / n as f64).abs() < 1e-12);
    assert!(report.model.is_finite());
    let empty: Vec<Transition> = Vec::new();
    assert!(prediction_error(&model.prediction, empty.iter(), 0.25).is_err());
}
