use digeco::augment::{MigrationMode, RecognizerBank, TargetedMigrationConfig};
use digeco::ecosystem::*;
use digeco::experiments::*;
use digeco::rng::SeededRng;
use digeco::SemanticDescription;
use proptest::prelude::*;

fn small(n: usize) -> EcosystemParams {
    EcosystemParams { n_users: n, ..EcosystemParams::default() }
}

fn assert_topology(net: &HabitatNetwork) {
    let floor = net.params.connection_floor;
    for h in &net.habitats {
        assert!(!h.connections.contains_key(&h.id), "self-loop at {}", h.id);
        for &p in h.connections.values() {
            assert!(p >= floor && p <= 1.0, "probability {p}");
        }
    }
}

#[test]
fn ledger_audits_copy_count_and_counters() {
    for mode in [MigrationMode::Targeted, MigrationMode::RandomControl] {
        let mut rng = SeededRng::new(21).stream(&[]);
        let mut run = init_ecosystem(&small(20), &mut rng).unwrap();
        let cfg = TargetedMigrationConfig { enabled: true, mode, ..Default::default() };
        let mut bank = RecognizerBank::default();
        for _ in 0..300 {
            run.step(Some((&cfg, &mut bank)), &mut rng).unwrap();
            assert_eq!(run.net.agent_count() as i64, run.net.ledger_copy_count());
            let (earned, held) = run.net.ledger_counter_balance();
            assert_eq!(earned, held);
        }
        assert_topology(&run.net);
        assert!(run.net.ledger.iter().any(|e| matches!(e, Event::Escape { .. })));
    }
}

#[test]
fn escape_moves_keep_the_count() {
    let mut rng = SeededRng::new(22).stream(&[]);
    let mut run = init_ecosystem(&small(10), &mut rng).unwrap();
    for _ in 0..200 {
        let before = run.net.agent_count();
        let deaths_before = run.net.ledger.iter().filter(|e| matches!(e, Event::Death { .. })).count();
        let len = run.net.ledger.len();
        run.net.decay_and_escape(&mut rng);
        let deaths = run.net.ledger.iter().filter(|e| matches!(e, Event::Death { .. })).count() - deaths_before;
        assert_eq!(run.net.agent_count(), before - deaths);
        assert!(run.net.ledger[len..].iter().all(|e| matches!(e, Event::Escape { .. } | Event::Death { .. })));
        run.step(None, &mut rng).unwrap();
    }
}

#[test]
fn two_communities_cluster_the_network() {
    let mut params = EcosystemParams::default();
    params.user_base.communities = 2;
    params.user_base.sector_size = 1;
    let mut rng = SeededRng::new(23).stream(&[]);
    let mut run = init_ecosystem(&params, &mut rng).unwrap();
    run.run(1000, None, &mut rng, |_| {}).unwrap();
    assert_topology(&run.net);
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    for h in &run.net.habitats {
        for (&to, &p) in &h.connections {
            let slot = if run.users.community[h.id as usize] == run.users.community[to as usize] { &mut intra } else { &mut inter };
            slot.0 += p;
            slot.1 += 1;
        }
    }
    let mi = intra.0 / intra.1 as f64;
    let me = if inter.1 == 0 { 0.0 } else { inter.0 / inter.1 as f64 };
    assert!(mi > me, "intra {mi:.3} ({}) inter {me:.3} ({})", intra.1, inter.1);
}

#[test]
fn response_trace_is_a_percentage_of_fitness() {
    let mut rng = SeededRng::new(24).stream(&[]);
    let mut run = init_ecosystem(&small(10), &mut rng).unwrap();
    run.run(50, None, &mut rng, |_| {}).unwrap();
    assert_eq!(run.trace.len(), 50);
    assert!(run.trace.iter().all(|f| (0.0..=1.0).contains(f)));
    let r = response_rate(&run.trace, 50).unwrap();
    assert!((r - 100.0 * run.trace.iter().sum::<f64>() / 50.0).abs() < 1e-9);
}

#[test]
fn species_area_ends_at_the_total_count() {
    let mut rng = SeededRng::new(25).stream(&[]);
    let mut run = init_ecosystem(&small(15), &mut rng).unwrap();
    run.run(100, None, &mut rng, |_| {}).unwrap();
    let part = species_partition(&run.net);
    let sa = species_area(&run.net, &part, 10, &mut rng);
    assert_eq!(sa.len(), 15);
    assert_eq!(sa.last().unwrap().1, part.len() as f64);
    let shares: f64 = relative_abundance(&part).iter().sum();
    assert!((shares - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn species_area_is_monotone(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed).stream(&[]);
        let mut run = init_ecosystem(&small(8), &mut rng).unwrap();
        run.run(20, None, &mut rng, |_| {}).unwrap();
        let part = species_partition(&run.net);
        let sa = species_area(&run.net, &part, 10, &mut rng);
        for w in sa.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_species(
        raw in prop::collection::vec(prop::collection::btree_map(1u32..=20, 1u32..=100, 3..5), 2..12),
        lo in 0.0f64..0.3,
        extra in 0.0f64..0.3,
    ) {
        let descs: Vec<SemanticDescription> = raw
            .iter()
            .map(|m| SemanticDescription::for_agent(&m.iter().map(|(&k, &v)| (k, v)).collect::<Vec<_>>()).unwrap())
            .collect();
        let members: Vec<_> = descs.iter().enumerate().map(|(i, d)| (i as u32, d, 1usize)).collect();
        let a = partition_descriptions(&members, lo);
        let b = partition_descriptions(&members, lo + extra);
        prop_assert!(b.len() <= a.len());
        let total: usize = a.abundance.iter().sum();
        prop_assert_eq!(total, descs.len());
        let mut all: Vec<u32> = a.species.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..descs.len() as u32).collect::<Vec<_>>());
    }
}
