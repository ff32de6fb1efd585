//! Importance-aware feature scheduling.
//!
//! A [`FeatureBlock`] holds `B` real feature vectors of even dimension `D`
//! and one importance coefficient per feature. The scheduler masks the
//! least important features ([`select`]), sorts by importance, and maps
//! sorted feature `b` to a `(time slot, subchannel)` cell so that the most
//! important features ride the strongest subchannels. The receiver undoes
//! the sort with [`resort`].
//!
//! Slot/subchannel/feature indices are 0-based in this API. The 1-based
//! index formulas they implement are quoted in the docs of
//! [`su_assignment`] and [`mu_assignment`].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmatrix::Complex;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlock {
    rows: usize,
    dim: usize,
    features: Vec<f64>,
    importance: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl FeatureBlock {
    /// `features` is row-major `B x D`.
    pub fn new(dim: usize, features: Vec<f64>, importance: Vec<f64>) -> Result<Self> {
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(Error::config(
                "d",
                format!("feature dimension {dim} must be even and >= 2"),
            ));
        }
        let rows = importance.len();
        if rows == 0 {
            return Err(Error::config("b", "feature block is empty"));
        }
        if features.len() != rows * dim {
            return Err(Error::Shape {
                op: "feature_block",
                left: (rows, dim),
                right: (features.len(), 1),
            });
        }
        if importance.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("importance", "entries must be finite"));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            rows,
            dim,
            features,
            importance,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::Shape {
                op: "labels",
                left: (self.rows, 1),
                right: (labels.len(), 1),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// `B`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, b: usize) -> &[f64] {
        &self.features[b * self.dim..(b + 1) * self.dim]
    }

    pub fn feature_mut(&mut self, b: usize) -> &mut [f64] {
        &mut self.features[b * self.dim..(b + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Applies `order` so that row `i` of the result is row `order[i]` here.
    fn gather(&self, order: &[usize]) -> FeatureBlock {
        let mut features = Vec::with_capacity(self.features.len());
        for &src in order {
            features.extend_from_slice(self.feature(src));
        }
        FeatureBlock {
            rows: self.rows,
            dim: self.dim,
            features,
            importance: order.iter().map(|&i| self.importance[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

/// Number of features kept by [`select`]: `round(mu * B)`, at least one when `mu > 0`.
pub fn keep_count(b: usize, mu: f64) -> usize {
    if mu <= 0.0 {
        return 0;
    }
    ((mu * b as f64).round() as usize).clamp(1, b)
}

/// Keeps the `keep_count(B, mu)` most important features and zeroes the
/// rest. Row order is unchanged.
pub fn select(fb: &FeatureBlock, mu: f64) -> Result<FeatureBlock> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::config("mu", format!("{mu} is outside [0, 1]")));
    }
    let keep = keep_count(fb.len(), mu);
    let order = importance_order(fb.importance());
    let mut out = fb.clone();
    for &b in &order[keep..] {
        out.feature_mut(b).iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(out)
}

/// Indices sorted by descending importance, ties by original index.
fn importance_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    order
}

/// A bijection on feature positions. `order[sorted] = original`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    order: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut inverse = vec![usize::MAX; n];
        for (pos, &src) in order.iter().enumerate() {
            if src >= n || inverse[src] != usize::MAX {
                return Err(Error::config("permutation", "not a bijection"));
            }
            inverse[src] = pos;
        }
        Ok(Self { order, inverse })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self::from_order(order).expect("shuffle is a bijection")
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Original index of the feature at sorted position `pos`.
    pub fn source(&self, pos: usize) -> usize {
        self.order[pos]
    }

    /// Sorted position of original feature `idx`.
    pub fn position(&self, idx: usize) -> usize {
        self.inverse[idx]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn apply(&self, fb: &FeatureBlock) -> Result<FeatureBlock> {
        if fb.len() != self.len() {
            return Err(Error::Shape {
                op: "permute",
                left: (self.len(), 1),
                right: (fb.len(), fb.dim()),
            });
        }
        Ok(fb.gather(&self.order))
    }
}

/// Descending importance sort, stable on ties.
pub fn sort_by_importance(fb: &FeatureBlock) -> (FeatureBlock, Permutation) {
    let perm = Permutation::from_order(importance_order(fb.importance()))
        .expect("sort order is a bijection");
    let sorted = fb.gather(perm.order());
    (sorted, perm)
}

/// Restores the original order of a block permuted by `perm`.
pub fn resort(sorted: &FeatureBlock, perm: &Permutation) -> Result<FeatureBlock> {
    if sorted.len() != perm.len() {
        return Err(Error::Shape {
            op: "resort",
            left: (perm.len(), 1),
            right: (sorted.len(), sorted.dim()),
        });
    }
    Ok(sorted.gather(perm.inverse()))
}

/// How feature order is decided before mapping to subchannels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerPolicy {
    /// Descending importance: the most important features get the best subchannels.
    Importance,
    /// Uniformly random order.
    Random,
    /// Original order.
    Unsorted,
}

impl SchedulerPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerPolicy::Importance => "importance",
            SchedulerPolicy::Random => "random",
            SchedulerPolicy::Unsorted => "unsorted",
        }
    }

    pub fn order<R: Rng + ?Sized>(self, fb: &FeatureBlock, rng: &mut R) -> Permutation {
        match self {
            SchedulerPolicy::Importance => sort_by_importance(fb).1,
            SchedulerPolicy::Random => Permutation::random(fb.len(), rng),
            SchedulerPolicy::Unsorted => Permutation::identity(fb.len()),
        }
    }
}

impl std::str::FromStr for SchedulerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance" => Ok(Self::Importance),
            "random" => Ok(Self::Random),
            "unsorted" => Ok(Self::Unsorted),
            other => Err(Error::config(
                "policy",
                format!("unknown `{other}` (expected importance | random | unsorted)"),
            )),
        }
    }
}

/// Which precoder columns carry a feature during its slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Carrier {
    /// The owner is the slot's target user (or the single user).
    Target,
    /// The owner rides a null-space block of the slot's target user.
    NullSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub slot: usize,
    /// Stream index within the carrying precoder block (subchannel for targets).
    pub stream: usize,
    pub user: usize,
    pub carrier: Carrier,
}

/// Feature-to-cell map for every user over one epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    slots: usize,
    streams: usize,
    users: usize,
    features_per_user: usize,
    /// `cells[user][sorted feature]`.
    cells: Vec<Vec<Cell>>,
    /// `targets[slot]`: the user whose channel the slot is precoded for.
    targets: Vec<usize>,
}

impl Assignment {
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn features_per_user(&self) -> usize {
        self.features_per_user
    }

    pub fn cell(&self, user: usize, b: usize) -> Cell {
        self.cells[user][b]
    }

    pub fn cells(&self, user: usize) -> &[Cell] {
        &self.cells[user]
    }

    pub fn target(&self, slot: usize) -> usize {
        self.targets[slot]
    }

    /// Number of slots in which `user` is the target.
    pub fn target_slots(&self, user: usize) -> usize {
        self.targets.iter().filter(|&&t| t == user).count()
    }

    /// `(user, stream, sorted feature)` triples transmitted in `slot`.
    pub fn slot_members(&self, slot: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (u, cells) in self.cells.iter().enumerate() {
            for (b, c) in cells.iter().enumerate() {
                if c.slot == slot {
                    out.push((u, c.stream, b));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Per-user orders plus the cell map.
#[derive(Clone, Debug)]
pub struct ScheduleMap {
    pub permutations: Vec<Permutation>,
    pub assignment: Assignment,
}

impl ScheduleMap {
    pub fn new(permutations: Vec<Permutation>, assignment: Assignment) -> Result<Self> {
        if permutations.len() != assignment.users()
            || permutations
                .iter()
                .any(|p| p.len() != assignment.features_per_user())
        {
            return Err(Error::Shape {
                op: "schedule_map",
                left: (assignment.users(), assignment.features_per_user()),
                right: (
                    permutations.len(),
                    permutations.first().map_or(0, Permutation::len),
                ),
            });
        }
        Ok(Self {
            permutations,
            assignment,
        })
    }
}

/// Single-user map: in slot `i` (1-based, `1..=B/N`) antenna `j`
/// (`1..=N`) carries sorted feature `b = (j-1)*(B/N) + i`. The top `B/N`
/// features therefore all ride subchannel 1.
pub fn su_assignment(b: usize, n: usize) -> Result<Assignment> {
    if n == 0 || b == 0 || !b.is_multiple_of(n) {
        return Err(Error::config(
            "b",
            format!("B = {b} must be a positive multiple of N = {n}"),
        ));
    }
    let slots = b / n;
    let mut cells = vec![
        Cell {
            slot: 0,
            stream: 0,
            user: 0,
            carrier: Carrier::Target
        };
        b
    ];
    for i in 0..slots {
        for j in 0..n {
            cells[j * slots + i] = Cell {
                slot: i,
                stream: j,
                user: 0,
                carrier: Carrier::Target,
            };
        }
    }
    Ok(Assignment {
        slots,
        streams: n,
        users: 1,
        features_per_user: b,
        cells: vec![cells],
        targets: vec![0; slots],
    })
}

/// Multi-user map over `K*B/N` slots with `B` features per user.
///
/// Slot `i` (1-based) targets user `k = wrap(i, K)` with
/// `wrap(i, m) = ((i-1) mod m) + 1`. On its `N/K` streams the target sends
/// `b1 = (j-1)*(K*B/N) + t`, and every other user sends
/// `b2 = (j-1)*(K*B/N) + B/N + c` on a null-space block, where `t` and `c`
/// count the slots so far in which that user was target or non-target.
/// Over one epoch each user is target in exactly `B/N` slots and every
/// feature of every user is sent exactly once.
pub fn mu_assignment(b: usize, n: usize, k: usize) -> Result<Assignment> {
    if k == 0 || !n.is_multiple_of(k) {
        return Err(Error::config(
            "k",
            format!("N = {n} is not a multiple of K = {k}"),
        ));
    }
    if n == 0 || b == 0 || !b.is_multiple_of(n) {
        return Err(Error::config(
            "b",
            format!("B = {b} must be a positive multiple of N = {n}"),
        ));
    }
    let streams = n / k;
    let per_target = b / n;
    let block = k * per_target;
    let slots = k * per_target;
    let placeholder = Cell {
        slot: 0,
        stream: 0,
        user: 0,
        carrier: Carrier::Target,
    };
    let mut cells = vec![vec![placeholder; b]; k];
    let mut target_count = vec![0usize; k];
    let mut other_count = vec![0usize; k];
    let mut targets = Vec::with_capacity(slots);
    for i in 0..slots {
        let target = i % k;
        targets.push(target);
        for (user, user_cells) in cells.iter_mut().enumerate() {
            let (base, carrier, counter) = if user == target {
                (0, Carrier::Target, &mut target_count[user])
            } else {
                (per_target, Carrier::NullSpace, &mut other_count[user])
            };
            for j in 0..streams {
                user_cells[j * block + base + *counter] = Cell {
                    slot: i,
                    stream: j,
                    user,
                    carrier,
                };
            }
            *counter += 1;
        }
    }
    Ok(Assignment {
        slots,
        streams,
        users: k,
        features_per_user: b,
        cells,
        targets,
    })
}

/// Consecutive reals become `(re, im)` pairs: `D` reals -> `D/2` symbols.
pub fn to_symbols(feature: &[f64]) -> Vec<Complex> {
    feature
        .chunks_exact(2)
        .map(|p| Complex::new(p[0], p[1]))
        .collect()
}

pub fn from_symbols(symbols: &[Complex], out: &mut [f64]) {
    for (z, pair) in symbols.iter().zip(out.chunks_exact_mut(2)) {
        pair[0] = z.re;
        pair[1] = z.im;
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::rng::from_seed;

    fn block(w: Vec<f64>, dim: usize) -> FeatureBlock {
        let b = w.len();
        let features = (0..b * dim).map(|i| i as f64 + 1.0).collect();
        FeatureBlock::new(dim, features, w).unwrap()
    }

    fn kept_rows(fb: &FeatureBlock) -> Vec<usize> {
        (0..fb.len())
            .filter(|&b| fb.feature(b).iter().any(|&x| x != 0.0))
            .collect()
    }

    #[test]
    fn block_validation() {
        assert!(FeatureBlock::new(3, vec![0.0; 3], vec![1.0]).is_err());
        assert!(FeatureBlock::new(2, vec![0.0; 3], vec![1.0]).is_err());
        assert!(FeatureBlock::new(2, vec![], vec![]).is_err());
        assert!(FeatureBlock::new(2, vec![0.0; 2], vec![f64::NAN]).is_err());
    }

    #[test]
    fn select_full_is_identity() {
        let fb = block(vec![0.3, 0.1, 0.9], 2);
        assert_eq!(select(&fb, 1.0).unwrap(), fb);
        assert!(select(&fb, 1.5).is_err());
        assert_eq!(kept_rows(&select(&fb, 0.0).unwrap()), Vec::<usize>::new());
        assert_eq!(kept_rows(&select(&fb, 0.01).unwrap()), vec![2]);
    }

    #[test]
    fn select_decreasing_keeps_head() {
        let w: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        let out = select(&block(w, 4), 0.3).unwrap();
        assert_eq!(kept_rows(&out), vec![0, 1, 2]);
    }

    #[test]
    fn select_increasing_keeps_tail() {
        let w: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let out = select(&block(w.clone(), 4), 0.3).unwrap();
        // full-sort oracle
        let mut idx: Vec<usize> = (0..10).collect();
        idx.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap());
        let mut expect = idx[..3].to_vec();
        expect.sort();
        assert_eq!(kept_rows(&out), expect);
        assert_eq!(expect, vec![7, 8, 9]);
    }

    #[test]
    fn sort_examples() {
        let fb = block(vec![3.0, 2.0, 1.0], 2);
        assert_eq!(sort_by_importance(&fb).1, Permutation::identity(3));
        let fb = block(vec![0.2, 0.9, 0.5], 2);
        let (sorted, perm) = sort_by_importance(&fb);
        assert_eq!(perm.order(), &[1, 2, 0]);
        assert_eq!(sorted.importance(), &[0.9, 0.5, 0.2]);
        assert_eq!(resort(&sorted, &perm).unwrap(), fb);
    }

    #[test]
    fn ties_are_stable() {
        let fb = block(vec![1.0, 2.0, 1.0, 2.0], 2);
        assert_eq!(sort_by_importance(&fb).1.order(), &[1, 3, 0, 2]);
    }

    #[test]
    fn resort_size_mismatch() {
        let fb = block(vec![1.0, 2.0], 2);
        assert!(resort(&fb, &Permutation::identity(3)).is_err());
        assert_eq!(resort(&fb, &Permutation::identity(2)).unwrap(), fb);
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::from_order(vec![0, 0]).is_err());
        assert!(Permutation::from_order(vec![0, 2]).is_err());
        let p = Permutation::random(9, &mut from_seed(2));
        for i in 0..9 {
            assert_eq!(p.source(p.position(i)), i);
        }
    }

    #[test]
    fn su_example_b8_n4() {
        let a = su_assignment(8, 4).unwrap();
        assert_eq!(a.slots(), 2);
        // 1-based features (1, 3, 5, 7) in slot 1
        let members = a.slot_members(0);
        let feats: Vec<usize> = members.iter().map(|m| m.2).collect();
        let streams: Vec<usize> = members.iter().map(|m| m.1).collect();
        assert_eq!(feats, vec![0, 2, 4, 6]);
        assert_eq!(streams, vec![0, 1, 2, 3]);
        assert!(su_assignment(6, 4).is_err());
    }

    #[test]
    fn su_single_antenna_is_slot_order() {
        let a = su_assignment(5, 1).unwrap();
        for b in 0..5 {
            assert_eq!(a.cell(0, b).slot, b);
            assert_eq!(a.cell(0, b).stream, 0);
        }
    }

    #[test]
    fn su_top_features_on_first_subchannel() {
        let a = su_assignment(12, 3).unwrap();
        for b in 0..4 {
            assert_eq!(a.cell(0, b).stream, 0);
        }
        // monotone: higher sorted rank never gets a better subchannel
        for b in 1..12 {
            assert!(a.cell(0, b - 1).stream <= a.cell(0, b).stream);
        }
    }

    #[test]
    fn mu_k1_matches_su() {
        for (b, n) in [(8, 4), (12, 3), (16, 16)] {
            let su = su_assignment(b, n).unwrap();
            let mu = mu_assignment(b, n, 1).unwrap();
            assert_eq!(su, mu);
        }
    }

    #[test]
    fn mu_sixteen_by_four() {
        // N=16, K=4, 64 features per user: 16 slots, each user target in 4
        let a = mu_assignment(64, 16, 4).unwrap();
        assert_eq!(a.slots(), 16);
        for u in 0..4 {
            assert_eq!(a.target_slots(u), 4);
            for b in 0..4 {
                let c = a.cell(u, b);
                assert_eq!(c.stream, 0);
                assert_eq!(c.carrier, Carrier::Target);
                assert_eq!(a.target(c.slot), u);
            }
        }
        // 16 features per user: 4 slots, one target slot each
        let a = mu_assignment(16, 16, 4).unwrap();
        assert_eq!(a.slots(), 4);
        for u in 0..4 {
            assert_eq!(a.target_slots(u), 1);
            assert_eq!(a.cell(u, 0).carrier, Carrier::Target);
        }
    }

    #[test]
    fn mu_divisibility() {
        assert!(mu_assignment(8, 5, 2).is_err());
        assert!(mu_assignment(6, 4, 2).is_err());
        assert!(mu_assignment(8, 4, 0).is_err());
    }

    #[test]
    fn mu_slot_is_full() {
        let a = mu_assignment(8, 4, 2).unwrap();
        for s in 0..a.slots() {
            let members = a.slot_members(s);
            assert_eq!(members.len(), 4);
            let cells: HashSet<(usize, usize)> = members.iter().map(|m| (m.0, m.1)).collect();
            assert_eq!(cells.len(), 4);
        }
    }

    #[test]
    fn symbol_pairing() {
        let s = to_symbols(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s, vec![Complex::new(1.0, 2.0), Complex::new(3.0, 4.0)]);
        let mut back = [0.0; 4];
        from_symbols(&s, &mut back);
        assert_eq!(back, [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn policy_orders() {
        let fb = block(vec![0.1, 0.7, 0.4], 2);
        let mut rng = from_seed(1);
        assert_eq!(
            SchedulerPolicy::Importance.order(&fb, &mut rng).order(),
            &[1, 2, 0]
        );
        assert_eq!(
            SchedulerPolicy::Unsorted.order(&fb, &mut rng).order(),
            &[0, 1, 2]
        );
        assert_eq!(SchedulerPolicy::Random.order(&fb, &mut rng).len(), 3);
    }
}
