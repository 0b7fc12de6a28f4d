use lead::baseline::BatchPlan;
use lead::dataset::{gen_dataset, KeyDistribution};
use lead::overlay::{Network, Placement};
use lead::query::range_oracle;
use lead::rig::RigConfig;
use lead::ring::uniform_key_hash;
use lead::rng::SplitMix64;
use lead::store::value_from_u64;
use lead::HashSpace;

fn chord(keys: &[u64]) -> Network {
    let mut rig = RigConfig::default();
    rig.net.placement = Placement::Uniform;
    rig.converged(keys).unwrap()
}

#[test]
fn plan_splits_by_ceiling() {
    let plan = BatchPlan::new((0..250).collect(), 100);
    assert_eq!(plan.batch_count(), 3);
    assert_eq!(plan.batch_sizes(), vec![100, 100, 50]);
    assert_eq!(plan.batch(2), &(200..250).collect::<Vec<u64>>()[..]);
    assert_eq!(BatchPlan::new(Vec::new(), 100).batch_count(), 0);
}

#[test]
fn uniform_placement_round_trip() {
    let ks = gen_dataset(KeyDistribution::Uniform, 20_000, 1).unwrap().keys;
    let mut net = chord(&ks[..10_000]);
    for &k in &ks[10_000..] {
        let origin = net.random_live_peer().unwrap();
        assert!(net.put(origin, k, value_from_u64(k)).success);
    }
    let space = net.config().space;
    for p in net.peers() {
        for k in p.store.keys() {
            let owner = net.owner_of(uniform_key_hash(space, k)).unwrap();
            assert_eq!(owner.idx, p.idx);
        }
    }
    let origin = net.random_live_peer().unwrap();
    assert_eq!(net.lookup(origin, ks[12_345]).value, Some(value_from_u64(ks[12_345])));
}

#[test]
fn adjacent_keys_scatter() {
    let space = HashSpace::default();
    let quarter = u64::MAX / 4;
    let mut rng = SplitMix64::new(2);
    let far = (0..10_000)
        .filter(|_| {
            let k = rng.next() >> 1;
            uniform_key_hash(space, k).abs_diff(uniform_key_hash(space, k + 1)) >= quarter
        })
        .count();
    assert!(far >= 5_000, "{far} of 10000");
}

#[test]
fn batch_range_cost_and_latency() {
    let ks = gen_dataset(KeyDistribution::Uniform, 200_000, 3).unwrap().keys;
    let mut net = chord(&ks);
    let mut rng = SplitMix64::new(4);
    let mut mean = |n: usize, net: &mut Network| {
        let mut total = 0.0;
        for _ in 0..5 {
            let origin = net.random_live_peer().unwrap();
            let start = rng.next();
            let want = range_oracle(&ks, start, n);
            let r = net.chord_batch_range(origin, want.clone(), 100);
            assert!(r.success);
            assert_eq!(r.results, want);
            assert!(r.messages as usize >= want.len(), "{} messages", r.messages);
            total += r.latency_ms();
        }
        total / 5.0
    };
    let small = mean(500, &mut net);
    let large = mean(4_000, &mut net);
    assert!(large >= 2.0 * small, "{large:.0} ms vs {small:.0} ms");
}

#[test]
fn batch_outlasts_its_slowest_lookup() {
    let ks = gen_dataset(KeyDistribution::Uniform, 50_000, 5).unwrap().keys;
    let mut net = chord(&ks);
    let origin = net.random_live_peer().unwrap();
    let want = range_oracle(&ks, ks[1_000], 100);
    let batch = net.chord_batch_range(origin, want.clone(), 100);
    let slowest = want.iter().map(|&k| net.lookup(origin, k).latency_ms()).fold(0.0, f64::max);
    assert!(batch.latency_ms() >= slowest, "{} < {slowest}", batch.latency_ms());
}
