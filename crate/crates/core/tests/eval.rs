use grssm::baselines::{make_baseline, BaselineConfig, ClusterPolicy};
use grssm::eval::*;
use grssm::rng::sim_rng;
use grssm::sim::*;
use grssm::traj::run_episode_full;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(n: usize, horizon: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: "small".into(),
        n,
        horizon,
        l: 300.0,
        ..ScenarioConfig::default()
    }
}

fn hand_snapshot(adj_pairs: &[(usize, usize)], ch: &[usize], dead: &[usize], n: usize) -> NetSnapshot {
    let mut s = reset(&small(n, 1), &mut sim_rng(0));
    s.adjacency = vec![false; n * n];
    for &(i, j) in adj_pairs {
        s.adjacency[i * n + j] = true;
        s.adjacency[j * n + i] = true;
    }
    for &i in ch {
        s.nodes[i].ch_flag = true;
    }
    for &i in dead {
        s.nodes[i].kill();
    }
    s
}

#[test]
fn connectivity_cases() {
    let full = hand_snapshot(&[(0, 1), (0, 2)], &[0], &[], 3);
    assert_eq!(connectivity_ratio(&full), 1.0);
    let none = hand_snapshot(&[(0, 1), (0, 2)], &[], &[], 3);
    assert_eq!(connectivity_ratio(&none), 0.0);
    let partial = hand_snapshot(&[(0, 1)], &[0], &[], 3);
    assert!((connectivity_ratio(&partial) - 2.0 / 3.0).abs() < 1e-15);
    let all_dead = hand_snapshot(&[], &[], &[0, 1, 2], 3);
    assert_eq!(connectivity_ratio(&all_dead), 0.0);
}

#[test]
fn lifetime_cases() {
    assert_eq!(network_lifetime(&[1.0; 501]), 501);
    let mut c = vec![0.9; 40];
    c[17] = 0.49;
    c[30] = 0.1;
    assert_eq!(network_lifetime(&c), 17);
    assert_eq!(network_lifetime(&[0.5; 100]), 100);
}

#[test]
fn ch_change_and_tenure_cases() {
    assert_eq!(ch_change_count(&vec![vec![1, 0, 1]; 10]), 0);
    assert_eq!(ch_change_count(&[vec![1, 0], vec![0, 1]]), 2);

    let mut single = vec![vec![0u8; 4]; 100];
    single.iter_mut().for_each(|a| a[2] = 1);
    assert_eq!(cluster_lifetime(&single), 100.0);
    let toggling: Vec<Vec<u8>> = (0..20).map(|t| vec![(t % 2) as u8]).collect();
    assert_eq!(cluster_lifetime(&toggling), 1.0);
    // node 0 holds CH for 3 steps, node 1 for 5
    let sched: Vec<Vec<u8>> = (0..8).map(|t| vec![(t < 3) as u8, (t >= 3) as u8]).collect();
    assert_eq!(cluster_lifetime(&sched), 4.0);
    assert_eq!(cluster_lifetime(&vec![vec![0u8; 3]; 5]), 0.0);
}

#[test]
fn jain_cases() {
    assert!((jain_index(&[4.0; 7]).unwrap() - 1.0).abs() < 1e-15);
    assert!((jain_index(&[0.0, 0.0, 9.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
    assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap() - 36.0 / 42.0).abs() < 1e-15);
    assert_eq!(jain_index(&[]), None);
    assert_eq!(jain_index(&[0.0, 0.0]), None);
}

proptest! {
    #[test]
    fn ch_changes_match_xor_recount(seed in 0u64..5000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let acts: Vec<Vec<u8>> = (0..10).map(|_| (0..n).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let mut brute = 0u32;
        for t in 1..acts.len() {
            let mut x = 0u32;
            for i in 0..n {
                x |= ((acts[t][i] ^ acts[t - 1][i]) as u32) << i;
            }
            brute += x.count_ones();
        }
        prop_assert_eq!(ch_change_count(&acts), brute as usize);
    }

    #[test]
    fn jain_is_bounded(e in proptest::collection::vec(0.0f64..100.0, 1..30)) {
        if let Some(j) = jain_index(&e) {
            let n = e.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(seed in 0u64..5000, n in 5usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // small integers force ties in |d|
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        prop_assume!(d.len() >= 5);
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        prop_assert!(w.exact);
        let ranks = grssm::eval::stats::midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let m = d.len();
        let mut hits = 0u64;
        for mask in 0u32..(1 << m) {
            let wp: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            let total = (m * (m + 1)) as f64 / 2.0;
            if wp.min(total - wp) <= w.statistic + 1e-9 {
                hits += 1;
            }
        }
        // two-sided by symmetric enumeration of min(W+, W-)
        let p = (hits as f64 / (1u64 << m) as f64).min(1.0);
        prop_assert_eq!(w.p, p);
    }
}

#[test]
fn wilcoxon_reference_values() {
    let same = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    assert_eq!(wilcoxon_signed_rank(&same, &same).unwrap().p, 1.0);

    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let z = [0.0; 5];
    let w = wilcoxon_signed_rank(&a, &z).unwrap();
    assert_eq!(w.statistic, 0.0);
    assert!((w.p - 0.0625).abs() < 1e-15);
    let s = wilcoxon_signed_rank(&z, &a).unwrap();
    assert_eq!((s.w_plus, s.w_minus), (w.w_minus, w.w_plus));
    assert_eq!(s.p, w.p);

    // normal branch, checked against an independent statistics package
    let mut d: Vec<f64> = (1..=30).map(f64::from).collect();
    d[1] = -2.0;
    d[6] = -7.0;
    let w = wilcoxon_signed_rank(&d, &[0.0; 30]).unwrap();
    assert!(!w.exact);
    assert_eq!(w.statistic, 9.0);
    assert!((w.p - 4.285685869189864e-06).abs() < 1e-12);
    let tied = [
        1.0, 1.0, -2.0, 2.0, 3.0, 3.0, 3.0, 4.0, -5.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0,
        16.0, 17.0, 18.0, 19.0, 20.0, 21.0, 22.0, 23.0, 24.0, -25.0, 26.0,
    ];
    let w = wilcoxon_signed_rank(&tied, &[0.0; 32]).unwrap();
    assert_eq!(w.statistic, 44.0);
    assert!((w.p - 3.880428812653352e-05).abs() < 1e-12);

    assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    assert!(wilcoxon_signed_rank(&[1.0], &[0.0, 0.0]).is_err());
}

#[test]
fn t_interval_reference() {
    let s = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.95);
    let half = 2.7764451051977987 * (2.5f64).sqrt() / 5f64.sqrt();
    assert!((s.mean - 3.0).abs() < 1e-15);
    assert!((s.ci_high - 3.0 - half).abs() < 1e-9);
    assert!((3.0 - s.ci_low - half).abs() < 1e-9);
    let one = mean_ci(&[7.0], 0.95);
    assert_eq!((one.ci_low, one.ci_high), (7.0, 7.0));
}

fn baseline(name: &'static str, e_init: f64) -> impl Fn() -> grssm::error::Result<Box<dyn ClusterPolicy>> + Sync {
    move || make_baseline(name, &BaselineConfig::default(), e_init)
}

#[test]
fn evaluation_is_paired_deterministic_and_worker_invariant() {
    let sc = small(12, 30);
    let f = baseline("leach", sc.energy.e_init);
    let r1 = run_evaluation("leach", &f, &sc, 50, 100, 1).unwrap();
    assert_eq!(r1.episodes.len(), 50);
    assert_eq!(r1.seeds, (100..150).collect::<Vec<u64>>());
    let r2 = run_evaluation("leach", &f, &sc, 50, 100, 1).unwrap();
    assert_eq!(r1, r2);
    let r3 = run_evaluation("leach", &f, &sc, 50, 100, 3).unwrap();
    assert_eq!(r1, r3);
    for e in &r1.episodes {
        assert!((0.0..=1.0).contains(&e.connectivity));
        assert!(e.jain > 0.0 && e.jain <= 1.0);
        assert!(e.lifetime <= sc.horizon);
    }
}

#[test]
fn identical_policies_give_identical_metrics() {
    let sc = ScenarioConfig {
        mobility: Mobility::RandomWaypoint {
            speed_min: 0.0,
            speed_max: 0.0,
            pause: 0.0,
        },
        energy: EnergyParams {
            e_elec: 0.0,
            eps_amp: 0.0,
            e_idle: 0.0,
            e_ch_overhead: 0.0,
            ..EnergyParams::default()
        },
        ..small(10, 20)
    };
    let a = run_evaluation("a", &baseline("lowest_id", 100.0), &sc, 6, 0, 1).unwrap();
    let b = run_evaluation("b", &baseline("lowest_id", 100.0), &sc, 6, 0, 1).unwrap();
    assert_eq!(a.episodes, b.episodes);
    let cmp = compare(vec![a, b], "a").unwrap();
    assert!(cmp.tests["b"].values().all(|w| w.map_or(true, |w| w.p == 1.0)));
}

/// Connectivity, Jain and lifetime recomputed straight from recorded node
/// states with the path-loss rule written out.
#[test]
fn metrics_match_replay_of_raw_trajectories() {
    let sc = small(15, 60);
    let f = baseline("heed", sc.energy.e_init);
    let report = run_evaluation("heed", &f, &sc, 4, 9, 1).unwrap();
    for (k, rec) in report.episodes.iter().enumerate() {
        let mut pol = f().unwrap();
        let tr = run_episode_full(&sc, 0, pol.as_mut(), 9 + k as u64).unwrap();
        let ch = &sc.channel;
        let mut conn = Vec::new();
        for frame in &tr.frames[1..] {
            let link = |i: usize, j: usize| {
                let d = frame[i].position.dist(frame[j].position).max(1e-300);
                let d = if d <= 1e-300 { ch.d0 } else { d };
                i != j && frame[i].alive && frame[j].alive && ch.k0 * ch.pt * (ch.d0 / d).powf(ch.eta) >= ch.gamma_rx
            };
            let alive: Vec<usize> = (0..frame.len()).filter(|&i| frame[i].alive).collect();
            let covered = alive
                .iter()
                .filter(|&&i| frame[i].ch_flag || alive.iter().any(|&j| frame[j].ch_flag && link(i, j)))
                .count();
            conn.push(if alive.is_empty() { 0.0 } else { covered as f64 / alive.len() as f64 });
        }
        let mean = conn.iter().sum::<f64>() / conn.len() as f64;
        assert_eq!(rec.connectivity, mean);
        let life = conn.iter().position(|&c| c < 0.5).unwrap_or(conn.len());
        assert_eq!(rec.lifetime, life);
        let last = tr.frames.last().unwrap();
        let e: Vec<f64> = last.iter().filter(|n| n.alive).map(|n| n.energy).collect();
        if e.iter().any(|&x| x > 0.0) {
            let s: f64 = e.iter().sum();
            let q: f64 = e.iter().map(|x| x * x).sum();
            assert_eq!(rec.jain, s * s / (e.len() as f64 * q));
        }
        assert_eq!(tr.actions.len(), sc.horizon);
    }
}

fn fixture(alg: &str, ch: f64, conn: f64, seeds: std::ops::Range<u64>) -> MetricsReport {
    let sc = small(5, 10);
    let eps = seeds
        .map(|s| EpisodeMetrics {
            seed: s,
            ch_changes: (ch + s as f64 % 3.0) as usize,
            connectivity: conn,
            lifetime: 10,
            cluster_lifetime: 2.0,
            jain: 0.9,
        })
        .collect();
    MetricsReport::from_episodes(alg, &sc, eps)
}

#[test]
fn comparison_table_marks() {
    let one = compare(vec![fixture("x", 5.0, 0.5, 0..6)], "x").unwrap();
    let t = compare_table(&one);
    assert!(t.rows[0].cells.iter().all(|c| c.mark == Mark::Best));

    let cmp = compare(
        vec![
            fixture("a", 100.0, 0.9, 0..6),
            fixture("b", 10.0, 0.8, 0..6),
            fixture("c", 50.0, 0.95, 0..6),
        ],
        "a",
    )
    .unwrap();
    let t = compare_table(&cmp);
    let col = |j: usize| t.rows.iter().map(|r| r.cells[j].mark).collect::<Vec<_>>();
    // fewer CH changes rank first
    assert_eq!(col(0), vec![Mark::None, Mark::Best, Mark::Second]);
    assert_eq!(col(1), vec![Mark::Second, Mark::None, Mark::Best]);
    // ties share the mark
    assert_eq!(col(2), vec![Mark::Best; 3]);
    assert!(t.rows[1].cells[0].p.unwrap() < 0.05);

    let csv = t.to_csv().unwrap();
    assert!(csv.starts_with("algorithm,ch_changes_mean,ch_changes_ci_low"));
    assert_eq!(csv.lines().count(), 4);
    let back: CompareTable = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(back, t);
    assert!(t.to_text().contains("ch_changes ↓"));

    assert!(compare(vec![fixture("a", 1.0, 1.0, 0..6), fixture("b", 1.0, 1.0, 1..7)], "a").is_err());
    assert!(compare(vec![fixture("a", 1.0, 1.0, 0..6)], "zzz").is_err());
}

#[test]
fn category_plot_averages_scenarios() {
    let mut r1 = fixture("a", 10.0, 0.5, 0..6);
    let mut r2 = fixture("a", 10.0, 0.7, 0..6);
    r2.scenario = "other".into();
    r1.category = Category::Wsn;
    r2.category = Category::Wsn;
    let c1 = compare(vec![r1], "a").unwrap();
    let c2 = compare(vec![r2], "a").unwrap();
    let rows = category_plot(&[c1, c2]);
    let conn = rows.iter().find(|r| r.metric == Metric::Connectivity).unwrap();
    assert_eq!(conn.category, Category::Wsn);
    assert_eq!(conn.scenarios, 2);
    assert!((conn.mean - 0.6).abs() < 1e-12);
    let csv = plot_csv(&rows).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("WSN,a,"));
}
