use std::collections::BTreeMap;

use lead::learned_hash::{train_rmi, LeafFamily, TrainConfig, TrainingSet};
use lead::query::range_oracle;
use lead::ring::successor_of;
use lead::store::{value_from_u64, OrderedStore};
use lead::{HashSpace, Vid};
use proptest::prelude::*;

fn store_of(keys: &[u64]) -> OrderedStore {
    let mut s = OrderedStore::new();
    for &k in keys {
        s.insert(k, value_from_u64(k));
    }
    s
}

fn family() -> impl Strategy<Value = LeafFamily> {
    prop_oneof![Just(LeafFamily::Linear), Just(LeafFamily::Cubic), Just(LeafFamily::radix())]
}

proptest! {
    #[test]
    fn local_range_matches_oracle(keys in prop::collection::vec(any::<u64>(), 0..300), start: u64, n in 1usize..400) {
        let s = store_of(&keys);
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let (pairs, remaining) = s.local_range(start, n);
        let got: Vec<u64> = pairs.iter().map(|p| p.0).collect();
        prop_assert_eq!(&got, &range_oracle(&sorted, start, n));
        prop_assert_eq!(remaining, n - got.len());
    }

    #[test]
    fn extraction_partitions_the_store(keys in prop::collection::vec(any::<u64>(), 0..300), a: u64, b: u64) {
        let space = HashSpace::default();
        let mut s = store_of(&keys);
        let before: BTreeMap<u64, _> = s.iter().cloned().collect();
        let out = s.extract_interval(space, a, b, |k| k);
        for (k, _) in &out {
            prop_assert!(space.in_half_open(*k, a, b));
        }
        for k in s.keys() {
            prop_assert!(a == b || !space.in_half_open(k, a, b));
        }
        let mut union: BTreeMap<u64, _> = s.iter().cloned().collect();
        prop_assert_eq!(union.len() + out.len(), before.len());
        union.extend(out);
        prop_assert_eq!(union, before);
    }

    #[test]
    fn successor_matches_scan(mut vids in prop::collection::vec(any::<u64>(), 1..60), x: u64) {
        vids.sort_unstable();
        vids.dedup();
        let ring: Vec<Vid> = vids.iter().map(|&v| Vid(v)).collect();
        let want = vids.iter().copied().find(|&v| v >= x).unwrap_or(vids[0]);
        prop_assert_eq!(successor_of(&ring, x).unwrap(), Vid(want));
    }

    #[test]
    fn learned_hash_preserves_order(
        keys in prop::collection::vec(any::<u64>(), 1..2_000),
        probes in prop::collection::vec(any::<u64>(), 2..200),
        fam in family(),
        branching in 1usize..64,
    ) {
        let cfg = TrainConfig::new(fam, branching, HashSpace::default());
        let model = train_rmi(&TrainingSet::new(keys), &cfg).unwrap();
        let mut probes = probes;
        probes.sort_unstable();
        for w in probes.windows(2) {
            prop_assert!(model.hash(w[0]) <= model.hash(w[1]), "{} > {}", w[0], w[1]);
        }
    }
}
