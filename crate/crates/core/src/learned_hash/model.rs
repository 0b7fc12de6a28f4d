use crate::error::{LeadError, Result};
use crate::ring::HashSpace;

use super::leaf::{f32_round, Anchor, LeafFamily, LeafModel, LeafParams};
use super::router::{Router, RouterKind};

/// Sorted training keys. The target of each key is the index of its first
/// occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSet {
    keys: Vec<u64>,
}

impl TrainingSet {
    /// Sorts `keys`; duplicates are kept.
    pub fn new(mut keys: Vec<u64>) -> Self {
        keys.sort_unstable();
        TrainingSet { keys }
    }

    /// Caller guarantees `keys` is sorted ascending.
    pub fn from_sorted(keys: Vec<u64>) -> Self {
        debug_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        TrainingSet { keys }
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Target rank of every key (first index among equal keys).
    pub fn ranks(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.keys.len());
        let mut first = 0u64;
        for (i, k) in self.keys.iter().enumerate() {
            if i == 0 || *k != self.keys[i - 1] {
                first = i as u64;
            }
            out.push(first);
        }
        out
    }

    /// Uniform sample of about 1% of the keys, at least `min_keys` (or all of
    /// them when the set is smaller).
    pub fn sketch(&self, min_keys: usize) -> TrainingSet {
        let want = (self.keys.len() / 100).max(min_keys);
        if want >= self.keys.len() {
            return self.clone();
        }
        let step = self.keys.len() as f64 / want as f64;
        let keys = (0..want)
            .map(|i| self.keys[((i as f64 + 0.5) * step) as usize])
            .collect();
        TrainingSet { keys }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub family: LeafFamily,
    pub branching: usize,
    pub space: HashSpace,
    pub router: RouterKind,
}

impl TrainConfig {
    pub fn new(family: LeafFamily, branching: usize, space: HashSpace) -> Self {
        TrainConfig {
            family,
            branching,
            space,
            router: RouterKind::Linear,
        }
    }
}

/// Two-stage recursive model used as an order-preserving hash.
#[derive(Debug, Clone, PartialEq)]
pub struct RmiModel {
    pub(crate) router: Router,
    pub(crate) family: LeafFamily,
    pub(crate) leaves: Vec<LeafModel>,
    pub(crate) n: u64,
    pub(crate) space: HashSpace,
    pub(crate) version: u32,
    /// Smallest training key; anything below it takes leaf 0's lower edge.
    pub(crate) key_floor: u64,
    /// Leaf intervals before re-monotonization. The effective intervals are
    /// always the isotonic fit of these, so merging models by leaf stays
    /// independent of merge order.
    pub(crate) raw: Vec<(u64, u64)>,
}

/// Outcome of one anchor controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorStep {
    pub offset_delta: f64,
    pub scale_factor: f64,
}

pub const ANCHOR_SCALE_LEVELS: [f64; 3] = [0.96, 1.0, 1.04];

impl RmiModel {
    /// Assemble a model from parts. Leaves must all share `family` and `n`
    /// must be positive.
    pub fn from_parts(
        router: Router,
        family: LeafFamily,
        leaves: Vec<LeafModel>,
        n: u64,
        space: HashSpace,
        version: u32,
    ) -> Result<Self> {
        if leaves.is_empty() || n == 0 {
            return Err(LeadError::EmptyDataset);
        }
        if leaves.iter().any(|l| l.family() != family) {
            return Err(LeadError::IncompatibleModel("mixed leaf families".into()));
        }
        let raw = leaves.iter().map(|l| (l.rank_lo, l.rank_hi)).collect();
        Ok(RmiModel {
            router,
            family,
            leaves,
            n,
            space,
            version,
            key_floor: 0,
            raw,
        })
    }

    pub fn router(&self) -> &Router {
        &self.router
    }
    pub fn family(&self) -> LeafFamily {
        self.family
    }
    pub fn leaves(&self) -> &[LeafModel] {
        &self.leaves
    }
    pub fn leaf(&self, j: usize) -> &LeafModel {
        &self.leaves[j]
    }
    pub fn branching(&self) -> usize {
        self.leaves.len()
    }
    pub fn training_count(&self) -> u64 {
        self.n
    }
    pub fn space(&self) -> HashSpace {
        self.space
    }
    pub fn version(&self) -> u32 {
        self.version
    }
    pub fn key_floor(&self) -> u64 {
        self.key_floor
    }

    /// Pre-monotonization interval of each leaf.
    pub fn raw_bounds(&self) -> &[(u64, u64)] {
        &self.raw
    }

    pub fn with_key_floor(mut self, key_floor: u64) -> Self {
        self.key_floor = key_floor;
        self
    }

    /// Raise the version. Lower values are ignored.
    pub fn bump_version_to(&mut self, v: u32) {
        self.version = self.version.max(v);
    }

    #[inline]
    pub fn route(&self, key: u64) -> (usize, f64) {
        self.router.route(key, self.leaves.len(), self.n)
    }

    /// Clamped rank prediction for `key`.
    #[inline]
    pub fn predict_rank(&self, key: u64) -> f64 {
        if key < self.key_floor {
            return self.leaves[0].rank_lo as f64;
        }
        let (j, u) = self.route(key);
        self.leaves[j].predict(u)
    }

    /// `floor(rank * H / N)` clamped into `[0, H)`.
    #[inline]
    pub fn hash(&self, key: u64) -> u64 {
        self.rank_to_hash(self.predict_rank(key))
    }

    #[inline]
    pub fn rank_to_hash(&self, rank: f64) -> u64 {
        let scale = self.space.size() as f64 / self.n as f64;
        let h = (rank.max(0.0) * scale).floor();
        // `as` saturates at u64::MAX.
        (h as u64).min(self.space.max())
    }

    /// One stochastic gradient step on `(prediction - target_rank)^2` for the
    /// leaf `key` routes to. Widens the leaf interval to cover the target.
    pub fn leaf_update(&mut self, key: u64, target_rank: f64, learning_rate: f64) {
        let (j, u) = self.route(key);
        let pending = self.version.saturating_add(1);
        let leaf = &mut self.leaves[j];
        let grad = leaf.loss_gradient(u, target_rank);
        if grad.iter().any(|g| *g != 0.0) {
            let mut values = leaf.params.to_vec();
            for (v, g) in values.iter_mut().zip(&grad) {
                *v -= learning_rate * g;
            }
            let mut params = LeafParams::from_slice(leaf.family(), &values);
            params.normalize();
            if params != leaf.params {
                leaf.params = params;
                leaf.stamp = pending;
            }
        }
        let t = target_rank.max(0.0);
        let raw = &mut self.raw[j];
        if t < leaf.rank_lo as f64 {
            leaf.rank_lo = t.floor() as u64;
            leaf.stamp = pending;
        }
        if t > leaf.rank_hi as f64 {
            leaf.rank_hi = t.ceil() as u64;
            leaf.stamp = pending;
        }
        raw.0 = raw.0.min(leaf.rank_lo);
        raw.1 = raw.1.max(leaf.rank_hi);
    }

    /// Discrete anchor controller for leaf `j`.
    ///
    /// The offset moves by `eta * (target_median - predicted_median)`; the
    /// scale steps by one of [`ANCHOR_SCALE_LEVELS`] to pull the predicted
    /// 95% quantile toward the leaf's `rank_hi`: up when it sits below 95% of
    /// the interval, down when it overshoots `rank_hi`.
    pub fn adjust_anchor(
        &mut self,
        j: usize,
        predicted_median: f64,
        target_median: f64,
        predicted_p95: f64,
        eta: f64,
    ) -> AnchorStep {
        let leaf = &mut self.leaves[j];
        let offset_delta = eta * (target_median - predicted_median);
        let width = leaf.rank_hi.saturating_sub(leaf.rank_lo) as f64;
        let position = if width > 0.0 {
            (predicted_p95 - leaf.rank_lo as f64) / width
        } else {
            1.0
        };
        let scale_factor = if position < 0.95 {
            ANCHOR_SCALE_LEVELS[2]
        } else if position > 1.0 {
            ANCHOR_SCALE_LEVELS[0]
        } else {
            ANCHOR_SCALE_LEVELS[1]
        };
        leaf.anchor = Anchor {
            offset: leaf.anchor.offset + offset_delta,
            scale: leaf.anchor.scale * scale_factor,
        };
        AnchorStep {
            offset_delta,
            scale_factor,
        }
    }

    /// Make leaf rank intervals ordered and non-overlapping again.
    ///
    /// The raw endpoints `lo_0, hi_0, lo_1, hi_1, ...` are replaced by
    /// their isotonic (pool-adjacent-violators) fit; two overlapping
    /// neighbours end up split at the midpoint of the overlap.
    pub fn remonotonize(&mut self) {
        let ends: Vec<f64> = self
            .raw
            .iter()
            .flat_map(|&(lo, hi)| [lo as f64, hi as f64])
            .collect();
        let fitted = isotonic(&ends);
        for (j, leaf) in self.leaves.iter_mut().enumerate() {
            let lo = fitted[2 * j].floor() as u64;
            let hi = (fitted[2 * j + 1].floor() as u64).max(lo);
            leaf.rank_lo = lo;
            leaf.rank_hi = hi;
        }
    }

    /// True when leaf intervals are ordered and each is well formed.
    pub fn intervals_ordered(&self) -> bool {
        self.leaves.iter().all(|l| l.rank_lo <= l.rank_hi)
            && self.leaves.windows(2).all(|w| w[0].rank_hi <= w[1].rank_lo)
    }

    /// Order-independent content fingerprint (stamps and exported params).
    pub fn digest(&self) -> u64 {
        let mut h = crate::ring::FNV_OFFSET;
        let mut mix = |x: u64| {
            h ^= x;
            h = crate::ring::fmix64(h.wrapping_mul(crate::ring::FNV_PRIME));
        };
        for l in &self.leaves {
            mix(l.stamp as u64);
            for p in l.exported_params().to_vec() {
                mix((p as f32).to_bits() as u64);
            }
        }
        for &(lo, hi) in &self.raw {
            mix(lo);
            mix(hi);
        }
        h
    }

    /// Join `other` into `self` leaf by leaf: the leaf with the higher stamp
    /// wins, equal stamps fall back to comparing parameter bits. Returns
    /// true when `self` changed. Versions are left to the caller.
    pub fn join_leaves(&mut self, other: &RmiModel) -> Result<bool> {
        if other.family != self.family || other.leaves.len() != self.leaves.len() {
            return Err(LeadError::IncompatibleModel(format!(
                "family {} / {} leaves vs {} / {}",
                other.family,
                other.leaves.len(),
                self.family,
                self.leaves.len()
            )));
        }
        let mut changed = false;
        for j in 0..self.leaves.len() {
            if leaf_order_key(&other.leaves[j], other.raw[j])
                > leaf_order_key(&self.leaves[j], self.raw[j])
            {
                self.leaves[j] = other.leaves[j].clone();
                self.raw[j] = other.raw[j];
                changed = true;
            }
        }
        if changed {
            self.remonotonize();
        }
        Ok(changed)
    }
}

fn leaf_order_key(l: &LeafModel, raw: (u64, u64)) -> (u32, Vec<u32>, u64, u64) {
    let bits = l
        .exported_params()
        .to_vec()
        .into_iter()
        .map(|p| (p as f32).to_bits())
        .collect();
    (l.stamp, bits, raw.0, raw.1)
}

/// Least-squares non-decreasing fit (unit weights).
pub(crate) fn isotonic(values: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        out.extend(std::iter::repeat_n(s / c as f64, c));
    }
    out
}

/// Fit a model on `train`.
pub fn train_rmi(train: &TrainingSet, config: &TrainConfig) -> Result<RmiModel> {
    if train.is_empty() {
        return Err(LeadError::EmptyDataset);
    }
    if config.branching == 0 {
        return Err(LeadError::InvalidConfig("branching must be >= 1".into()));
    }
    let keys = train.keys();
    let ranks = train.ranks();
    let n = keys.len() as u64;
    let b = config.branching;
    let router = Router::fit(config.router, keys, &ranks, b);

    // Monotone routing makes each leaf's keys a contiguous run.
    let mut runs: Vec<(usize, usize)> = vec![(0, 0); b];
    let mut positions = Vec::with_capacity(keys.len());
    let mut start = 0;
    let mut current = None;
    for (i, &k) in keys.iter().enumerate() {
        let (j, u) = router.route(k, b, n);
        positions.push(u);
        match current {
            Some(c) if c == j => {}
            Some(c) => {
                runs[c] = (start, i);
                start = i;
                current = Some(j);
            }
            None => current = Some(j),
        }
    }
    if let Some(c) = current {
        runs[c] = (start, keys.len());
    }

    let mut leaves: Vec<Option<LeafModel>> = runs
        .iter()
        .map(|&(s, e)| {
            (e > s).then(|| {
                let us = &positions[s..e];
                let ys: Vec<f64> = ranks[s..e].iter().map(|&r| r as f64).collect();
                let mut params = fit_leaf(config.family, us, &ys);
                params.snap_integers();
                params.normalize();
                LeafModel {
                    params,
                    anchor: Anchor::default(),
                    rank_lo: ranks[s],
                    rank_hi: ranks[e - 1],
                    stamp: 1,
                }
            })
        })
        .collect();

    // Empty leaves: zero width at the next populated leaf's lower edge
    // (trailing ones at the last upper edge).
    let mut next_lo = None;
    let last_hi = ranks[ranks.len() - 1];
    for j in (0..b).rev() {
        match &leaves[j] {
            Some(l) => next_lo = Some(l.rank_lo),
            None => {
                let at = next_lo.unwrap_or(last_hi);
                leaves[j] = Some(LeafModel {
                    params: LeafParams::constant(config.family, at as f64),
                    anchor: Anchor::default(),
                    rank_lo: at,
                    rank_hi: at,
                    stamp: 1,
                });
            }
        }
    }
    let leaves: Vec<LeafModel> = leaves.into_iter().map(|l| l.unwrap()).collect();
    let raw = leaves.iter().map(|l| (l.rank_lo, l.rank_hi)).collect();
    Ok(RmiModel {
        router,
        family: config.family,
        leaves,
        n,
        space: config.space,
        version: 1,
        key_floor: keys[0],
        raw,
    })
}

/// Closed-form least squares fit of one leaf.
pub(crate) fn fit_leaf(family: LeafFamily, us: &[f64], ys: &[f64]) -> LeafParams {
    debug_assert!(!us.is_empty() && us.len() == ys.len());
    match family {
        LeafFamily::Linear => {
            let (slope, intercept) = fit_line(us, ys);
            LeafParams::Linear { slope, intercept }
        }
        LeafFamily::Cubic => {
            let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // Narrow position spreads make the monomial system ill-posed at
            // f32 precision.
            if hi - lo >= 0.05 && us.len() >= 4 {
                if let Some(c) = fit_cubic(us, ys) {
                    return LeafParams::Cubic(c);
                }
            }
            let (slope, intercept) = fit_line(us, ys);
            LeafParams::Cubic([intercept, slope, 0.0, 0.0])
        }
        LeafFamily::RadixTable { prefix_bits } => LeafParams::Radix {
            bits: prefix_bits,
            offsets: fit_table(prefix_bits, us, ys),
        },
    }
}

fn fit_line(us: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = us.len() as f64;
    let mu = us.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&u, &y) in us.iter().zip(ys) {
        let du = u - mu;
        sxx += du * du;
        sxy += du * (y - my);
    }
    let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    (slope, my - slope * mu)
}

fn fit_cubic(us: &[f64], ys: &[f64]) -> Option<[f64; 4]> {
    let mut a = [[0.0f64; 5]; 4];
    for (&u, &y) in us.iter().zip(ys) {
        let pow = [1.0, u, u * u, u * u * u];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += pow[r] * pow[c];
            }
            a[r][4] += pow[r] * y;
        }
    }
    solve4(a)
}

/// Gaussian elimination with partial pivoting on an augmented 4x5 system.
fn solve4(mut a: [[f64; 5]; 4]) -> Option<[f64; 4]> {
    let scale = a[0][0].abs().max(1.0);
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        for row in 0..4 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let x = [a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2], a[3][4] / a[3][3]];
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Hat-basis least squares for the edge offsets, with a light smoothness
/// penalty so that cells without data take their neighbours' values.
fn fit_table(bits: u8, us: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = (1usize << bits) + 1;
    let cells = (m - 1) as f64;
    let mut diag = vec![0.0f64; m];
    let mut off = vec![0.0f64; m - 1];
    let mut rhs = vec![0.0f64; m];
    for (&u, &y) in us.iter().zip(ys) {
        let x = u.clamp(0.0, 1.0) * cells;
        let i = (x.floor() as usize).min(m - 2);
        let w = x - i as f64;
        diag[i] += (1.0 - w) * (1.0 - w);
        diag[i + 1] += w * w;
        off[i] += (1.0 - w) * w;
        rhs[i] += (1.0 - w) * y;
        rhs[i + 1] += w * y;
    }
    let lambda = 1e-6 * (us.len() as f64).max(1.0);
    for i in 0..m - 1 {
        diag[i] += lambda;
        diag[i + 1] += lambda;
        off[i] -= lambda;
    }
    // Thomas algorithm for the symmetric tridiagonal system.
    let mut c = vec![0.0f64; m];
    let mut d = vec![0.0f64; m];
    c[0] = if m > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let sub = off[i - 1];
        let denom = diag[i] - sub * c[i - 1];
        if i < m - 1 {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - sub * d[i - 1]) / denom;
    }
    let mut x = vec![0.0f64; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    if x.iter().any(|v| !v.is_finite()) {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        return vec![f32_round(mean); m];
    }
    x
}

/// Free-function form of [`RmiModel::hash`].
pub fn learned_hash(model: &RmiModel, key: u64) -> u64 {
    model.hash(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(bits: u32) -> HashSpace {
        HashSpace::new(bits).unwrap()
    }

    /// Exact-CDF oracle: floor(rank * H / N) with rank = lower-bound index.
    fn oracle_hash(keys: &[u64], h: u128, key: u64) -> u64 {
        let rank = keys.partition_point(|&k| k < key) as u128;
        let rank = rank.min(keys.len() as u128 - 1);
        (rank * h / keys.len() as u128) as u64
    }

    #[test]
    fn uniform_keys_hash_to_themselves() {
        let keys: Vec<u64> = (0..1000).collect();
        let set = TrainingSet::from_sorted(keys.clone());
        // H = 1000 is not a power of two; emulate with a 10-bit space and
        // compare against the oracle instead, then check the 1000-space case
        // through rank_to_hash.
        let m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 4, space(10))).unwrap();
        for leaf in m.leaves() {
            assert_eq!(leaf.params, LeafParams::Linear { slope: 250.0, intercept: leaf.rank_lo as f64 });
        }
        for &k in &keys {
            assert_eq!(m.predict_rank(k), k as f64);
            assert_eq!(m.hash(k), oracle_hash(&keys, 1024, k));
        }
        assert_eq!(m.hash(500), 512);
    }

    #[test]
    fn single_key() {
        let set = TrainingSet::new(vec![42]);
        let m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 1, space(7))).unwrap();
        assert_eq!(m.hash(42), 0);
        assert_eq!(m.hash(0), 0);
        assert_eq!(m.hash(u64::MAX), 0);
    }

    #[test]
    fn two_keys() {
        let set = TrainingSet::new(vec![10, 20]);
        let m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 1, space(7))).unwrap();
        // H = 128: floor(r * 128 / 2).
        assert_eq!(m.hash(10), 0);
        assert_eq!(m.hash(20), 64);
    }

    #[test]
    fn empty_training_set() {
        let err = train_rmi(&TrainingSet::default(), &TrainConfig::new(LeafFamily::Linear, 4, space(8)));
        assert_eq!(err.unwrap_err(), LeadError::EmptyDataset);
    }

    #[test]
    fn more_leaves_than_keys() {
        let set = TrainingSet::new(vec![5, 9, 300]);
        for family in [LeafFamily::Linear, LeafFamily::Cubic, LeafFamily::radix()] {
            let m = train_rmi(&set, &TrainConfig::new(family, 64, space(16))).unwrap();
            assert_eq!(m.branching(), 64);
            assert!(m.intervals_ordered());
            assert_eq!(m.hash(5), 0);
            assert!(m.hash(9) <= m.hash(300));
        }
    }

    #[test]
    fn below_training_range_hashes_to_zero() {
        let keys: Vec<u64> = (0..500).map(|i| 1_000 + i * 37).collect();
        let set = TrainingSet::from_sorted(keys);
        for family in [LeafFamily::Linear, LeafFamily::Cubic, LeafFamily::radix()] {
            let m = train_rmi(&set, &TrainConfig::new(family, 8, HashSpace::default())).unwrap();
            assert_eq!(m.hash(0), 0);
            assert_eq!(m.hash(999), 0);
        }
    }

    #[test]
    fn duplicates_take_first_index() {
        let set = TrainingSet::new(vec![7, 3, 3, 3, 9]);
        assert_eq!(set.ranks(), vec![0, 0, 0, 3, 4]);
    }

    #[test]
    fn sgd_exact_prediction_is_fixed_point() {
        let keys: Vec<u64> = (0..1000).collect();
        let set = TrainingSet::from_sorted(keys);
        let mut m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 4, space(10))).unwrap();
        let before = m.clone();
        m.leaf_update(100, 100.0, 1e-4);
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_converges_to_target_offset() {
        // One leaf predicting rank = key on [0, 1000): shift target by 10.
        let keys: Vec<u64> = (0..1000).collect();
        let set = TrainingSet::from_sorted(keys);
        let mut m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 1, space(10))).unwrap();
        let (_, u) = m.route(100);
        let start = m.leaf(0).raw(u);
        for _ in 0..20_000 {
            m.leaf_update(100, 110.0, 1e-2);
        }
        let end = m.leaf(0).raw(u);
        assert!((start - 100.0).abs() < 1e-9);
        assert!((end - 110.0).abs() < 1e-2, "prediction {end}");
        // The intercept moved toward +10 (shared with the slope via u = 0.1).
        match m.leaf(0).params {
            LeafParams::Linear { intercept, .. } => assert!(intercept > 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sgd_widens_interval() {
        let set = TrainingSet::from_sorted((0..100).collect());
        let mut m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 2, space(10))).unwrap();
        let hi = m.leaf(1).rank_hi;
        m.leaf_update(99, hi as f64 + 25.5, 1e-6);
        assert_eq!(m.leaf(1).rank_hi, hi + 26);
        assert_eq!(m.leaf(1).stamp, 2);
        assert_eq!(m.version(), 1);
    }

    #[test]
    fn anchor_controller() {
        let set = TrainingSet::from_sorted((0..100).collect());
        let mut m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 1, space(10))).unwrap();
        let hi = m.leaf(0).rank_hi as f64;
        // Fixed point.
        let s = m.adjust_anchor(0, 50.0, 50.0, hi, 0.5);
        assert_eq!(s, AnchorStep { offset_delta: 0.0, scale_factor: 1.0 });
        assert_eq!(m.leaf(0).anchor, Anchor::default());
        // Median 10 below observed.
        let s = m.adjust_anchor(0, 40.0, 50.0, hi, 0.5);
        assert_eq!(s.offset_delta, 5.0);
        assert_eq!(m.leaf(0).anchor.offset, 5.0);
        // p95 at 80% of the interval.
        let s = m.adjust_anchor(0, 50.0, 50.0, 0.8 * hi, 0.5);
        assert_eq!(s.scale_factor, 1.04);
        // Overshoot.
        let s = m.adjust_anchor(0, 50.0, 50.0, hi + 5.0, 0.5);
        assert_eq!(s.scale_factor, 0.96);
        assert!(m.leaf(0).anchor.scale > 0.0);
    }

    #[test]
    fn remonotonize_splits_overlaps() {
        let set = TrainingSet::from_sorted((0..100).collect());
        let mut m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 2, space(10))).unwrap();
        m.leaves[0].rank_hi = 70; // overlaps leaf 1 starting at 50
        m.raw[0].1 = 70;
        assert!(!m.intervals_ordered());
        m.remonotonize();
        assert!(m.intervals_ordered());
        assert_eq!(m.leaf(0).rank_hi, 60);
        assert_eq!(m.leaf(1).rank_lo, 60);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[5.0, 1.0]), vec![3.0, 3.0]);
    }

    #[test]
    fn join_prefers_newer_leaves() {
        let set = TrainingSet::from_sorted((0..100).collect());
        let base = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 2, space(10))).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        a.leaves[0].params = LeafParams::Linear { slope: 49.0, intercept: 1.0 };
        a.leaves[0].stamp = 2;
        b.leaves[1].params = LeafParams::Linear { slope: 48.0, intercept: 51.0 };
        b.leaves[1].stamp = 2;
        let mut ab = a.clone();
        let mut ba = b.clone();
        assert!(ab.join_leaves(&b).unwrap());
        assert!(ba.join_leaves(&a).unwrap());
        assert_eq!(ab.leaves, ba.leaves);
        assert_eq!(ab.digest(), ba.digest());
        assert!(!ab.clone().join_leaves(&ba).unwrap());
    }
}
