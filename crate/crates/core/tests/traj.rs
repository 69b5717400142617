use grssm::baselines::BaselineConfig;
use grssm::error::Error;
use grssm::rng::train_rng;
use grssm::sim::*;
use grssm::traj::*;
use proptest::prelude::*;

fn small(horizon: usize) -> ScenarioConfig {
    ScenarioConfig {
        n: 12,
        horizon,
        ..ScenarioConfig::default()
    }
}

fn spec(episodes: usize, scenarios: Vec<ScenarioConfig>, seed: u64) -> CollectSpec {
    CollectSpec {
        episodes,
        scenarios,
        policy_mix: CollectSpec::default_mix(),
        seed,
        baselines: BaselineConfig::default(),
        workers: 1,
    }
}

#[test]
fn minimal_dataset_is_valid() {
    let sc = ScenarioConfig {
        horizon: 2,
        ..small(2)
    };
    let ds = collect(&spec(1, vec![sc], 0)).unwrap();
    assert_eq!(ds.episodes.len(), 1);
    let ep = &ds.episodes[0];
    ep.validate().unwrap();
    assert!(ep.transitions() >= 1 && ep.transitions() <= 2);
    assert_eq!(ep.frames.len(), ep.transitions() + 1);
}

#[test]
fn default_collection_shape() {
    let scen = catalog::resolve_set("default6").unwrap();
    let scen: Vec<ScenarioConfig> = scen.into_iter().map(|s| ScenarioConfig { horizon: 5, ..s }).collect();
    let ds = collect(&spec(180, scen, 42)).unwrap();
    assert_eq!(ds.episodes.len(), 180);
    for (name, count) in ds.policy_counts() {
        assert!((40..=80).contains(&count), "{name}: {count}");
    }
    assert!(ds.episodes.iter().all(|e| e.n() == 50));
    for (k, e) in ds.episodes.iter().enumerate() {
        assert_eq!(e.scenario, k % 6);
    }
}

#[test]
fn collection_is_byte_identical_and_worker_independent() {
    let s = spec(6, vec![small(30)], 7);
    let a = collect(&s).unwrap();
    let b = collect(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save(&a, &dir.path().join("a.bin")).unwrap();
    save(&b, &dir.path().join("b.bin")).unwrap();
    let fa = std::fs::read(dir.path().join("a.bin")).unwrap();
    assert_eq!(fa, std::fs::read(dir.path().join("b.bin")).unwrap());
    let par = collect(&CollectSpec { workers: 3, ..s }).unwrap();
    assert_eq!(par, a);
}

#[test]
fn bad_specs_rejected() {
    let mut s = spec(2, vec![small(5)], 0);
    s.policy_mix[0].policy = "nope".into();
    assert!(matches!(collect(&s), Err(Error::Unknown { .. })));
    let mut s = spec(2, vec![small(5)], 0);
    s.policy_mix[0].weight = 0.9;
    assert!(collect(&s).is_err());
}

fn three_episodes() -> Dataset {
    collect(&spec(3, vec![small(20)], 3)).unwrap()
}

#[test]
fn round_trip_is_exact() {
    let ds = three_episodes();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.bin");
    save(&ds, &p).unwrap();
    let back = load(&p).unwrap();
    assert_eq!(back, ds);
    for (a, b) in back.episodes.iter().zip(&ds.episodes) {
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (x, y) in fa.iter().zip(fb) {
                assert_eq!(x.energy.to_bits(), y.energy.to_bits());
                assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            }
        }
    }
}

fn saved_bytes() -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.bin");
    save(&three_episodes(), &p).unwrap();
    std::fs::read(p).unwrap()
}

fn load_bytes(bytes: &[u8]) -> Result<Dataset, Error> {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.bin");
    std::fs::write(&p, bytes).unwrap();
    load(&p)
}

fn header_end(bytes: &[u8]) -> usize {
    bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2
}

#[test]
fn wrong_version_reported() {
    let bytes = saved_bytes();
    let text = String::from_utf8_lossy(&bytes[..header_end(&bytes)]).to_string();
    let patched = text.replace("schema_version = 1", "schema_version = 9");
    let mut out = patched.into_bytes();
    out.extend_from_slice(&bytes[header_end(&bytes)..]);
    assert!(matches!(load_bytes(&out), Err(Error::VersionMismatch { .. })));
}

#[test]
fn truncated_file_reported() {
    let bytes = saved_bytes();
    assert!(matches!(load_bytes(&bytes[..bytes.len() - 10]), Err(Error::Truncated(_))));
    assert!(matches!(load_bytes(&bytes[..20]), Err(Error::Truncated(_))));
}

#[test]
fn checksum_failure_reported() {
    let mut bytes = saved_bytes();
    let k = header_end(&bytes) + 100;
    bytes[k] ^= 0x40;
    assert!(matches!(load_bytes(&bytes), Err(Error::Checksum { .. })));
}

#[test]
fn episode_count_mismatch_is_corruption() {
    let bytes = saved_bytes();
    let text = String::from_utf8_lossy(&bytes[..header_end(&bytes)]).to_string();
    let patched = text.replace("episodes = 3", "episodes = 4");
    let mut out = patched.into_bytes();
    out.extend_from_slice(&bytes[header_end(&bytes)..]);
    assert!(matches!(load_bytes(&out), Err(Error::Corrupt(_))));
}

/// Hand-built trajectory with recognisable values per step.
fn hand_built(t: usize) -> Dataset {
    let sc = small(t);
    let mut env = Env::new(sc.clone(), 0);
    let frames0 = env.snapshot().nodes.clone();
    let frames = (0..=t).map(|_| frames0.clone()).collect();
    let _ = env.step(&vec![1; sc.n]);
    Dataset {
        meta: DatasetMeta {
            scenarios: vec![sc],
            policy_mix: CollectSpec::default_mix(),
            seed: 0,
        },
        episodes: vec![Trajectory {
            scenario: 0,
            seed: 0,
            policy: "hand".into(),
            frames,
            actions: (0..t).map(|k| vec![(k % 2) as u8; 12]).collect(),
            rewards: (0..t).map(|k| k as f64).collect(),
            continues: (0..t).map(|k| k + 1 < t).collect(),
        }],
    }
}

#[test]
fn window_equal_to_length_has_single_offset() {
    let ds = hand_built(9);
    let it = batch_sequences(&ds, 4, 10, train_rng(0)).unwrap();
    assert_eq!(it.population(), 1);
    let mut it = it;
    assert!(it.next().unwrap().iter().all(|w| w.offset == 0));
    assert!(batch_sequences(&ds, 4, 11, train_rng(0)).is_err());
}

#[test]
fn batch_shape_and_determinism() {
    let ds = collect(&spec(4, vec![ScenarioConfig { horizon: 80, ..small(80) }], 1)).unwrap();
    let long = ds.episodes.iter().filter(|e| e.frames.len() >= 50).count();
    if long == 0 {
        return;
    }
    let a: Vec<Vec<Window>> = batch_sequences(&ds, 32, 50, train_rng(5)).unwrap().take(3).collect();
    let b: Vec<Vec<Window>> = batch_sequences(&ds, 32, 50, train_rng(5)).unwrap().take(3).collect();
    assert_eq!(a, b);
    for batch in &a {
        assert_eq!(batch.len(), 32);
        assert!(batch.iter().all(|w| w.len == 50));
    }
}

#[test]
fn continue_targets_align_with_recorded_flags() {
    let ds = hand_built(6);
    let ep = &ds.episodes[0];
    let mut it = batch_sequences(&ds, 16, 3, train_rng(1)).unwrap();
    for w in it.next().unwrap() {
        for k in 1..w.len {
            let step = w.offset + k - 1;
            assert_eq!(ep.rewards[step], step as f64);
            assert_eq!(ep.continues[step], step + 1 < 6);
            assert_eq!(ep.actions[step][0], (step % 2) as u8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn windows_contiguous_and_in_range(seed in 0u64..1000, seq in 1usize..12) {
        let ds = collect(&spec(5, vec![small(15)], seed)).unwrap();
        if let Ok(mut it) = batch_sequences(&ds, 8, seq, train_rng(seed)) {
            for w in it.next().unwrap() {
                prop_assert!(w.offset + w.len <= ds.episodes[w.episode].frames.len());
            }
        } else {
            prop_assert!(ds.episodes.iter().all(|e| e.frames.len() < seq));
        }
    }
}
