//! Reproducible train/test splitting plans.
//!
//! Every scheme produces a [`FoldPlan`]: an ordered list of train/test
//! index pairs plus a repetition id. Plans are deterministic functions of
//! their arguments (seed included) and safe to share across threads.
//!
//! Fold assignment is shuffled round-robin, which guarantees the balanced
//! draw that a random multinomial assignment does not. Repetition `r` of
//! a repeated scheme draws from stream `r` of the seeded generator, so
//! plans do not depend on evaluation order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CvError, Result};
use crate::linalg::Mat;

/// One train/test pair. Index lists are sorted ascending; `repetition`
/// groups splits that belong to the same repeated-scheme pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default)]
    pub repetition: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Human-readable scheme descriptor, e.g. `kfold 5` or
    /// `repeated-kfold 10x50`.
    pub scheme: String,
    pub n: usize,
    pub seed: u64,
    pub splits: Vec<Split>,
}

impl FoldPlan {
    pub fn n_repetitions(&self) -> usize {
        self.splits.iter().map(|s| s.repetition).max().map_or(0, |m| m + 1)
    }

    /// Splits of one repetition, in plan order.
    pub fn repetition(&self, r: usize) -> impl Iterator<Item = (usize, &Split)> {
        self.splits.iter().enumerate().filter(move |(_, s)| s.repetition == r)
    }

    /// True when the test sets of every repetition partition `0..n`.
    pub fn is_partition(&self) -> bool {
        for r in 0..self.n_repetitions() {
            let mut seen = vec![false; self.n];
            let mut count = 0;
            for (_, s) in self.repetition(r) {
                for &i in &s.test {
                    if i >= self.n || seen[i] {
                        return false;
                    }
                    seen[i] = true;
                    count += 1;
                }
            }
            if count != self.n {
                return false;
            }
        }
        true
    }

    /// Structural validation of the invariants every plan must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.splits.is_empty() {
            return Err(CvError::invalid("plan has no splits"));
        }
        for (k, s) in self.splits.iter().enumerate() {
            if s.train.is_empty() || s.test.is_empty() {
                return Err(CvError::invalid(format!("split {k} has an empty side")));
            }
            let mut mark = vec![0u8; self.n];
            for &i in &s.train {
                if i >= self.n {
                    return Err(CvError::invalid(format!("split {k}: index {i} out of range")));
                }
                mark[i] |= 1;
            }
            for &i in &s.test {
                if i >= self.n {
                    return Err(CvError::invalid(format!("split {k}: index {i} out of range")));
                }
                if mark[i] & 1 != 0 {
                    return Err(CvError::invalid(format!(
                        "split {k}: index {i} is in both train and test"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stable FNV-1a fingerprint over the full plan contents.
    pub fn fingerprint(&self) -> String {
        fn eat_bytes(h: u64, bytes: &[u8]) -> u64 {
            let mut h = h;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h
        }
        fn eat(h: u64, v: u64) -> u64 {
            eat_bytes(h, &v.to_le_bytes())
        }
        let mut h: u64 = 0xcbf29ce484222325;
        h = eat_bytes(h, self.scheme.as_bytes());
        h = eat(h, self.n as u64);
        h = eat(h, self.seed);
        for s in &self.splits {
            h = eat(h, s.repetition as u64);
            h = eat(h, s.train.len() as u64);
            for &i in &s.train {
                h = eat(h, i as u64);
            }
            h = eat(h, s.test.len() as u64);
            for &i in &s.test {
                h = eat(h, i as u64);
            }
        }
        format!("{h:016x}")
    }
}

/// Fingerprint of `make_loo(n)` without materializing the plan. Model
/// sweeps fingerprint the same LOO plan many times, so values are cached
/// per n.
pub fn loo_fingerprint(n: usize) -> Result<String> {
    use std::collections::BTreeMap;
    use std::sync::Mutex;
    static CACHE: Mutex<BTreeMap<usize, String>> = Mutex::new(BTreeMap::new());
    if let Some(fp) = CACHE.lock().unwrap().get(&n) {
        return Ok(fp.clone());
    }
    let fp = make_loo(n)?.fingerprint();
    CACHE.lock().unwrap().insert(n, fp.clone());
    Ok(fp)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn shuffled_indices(n: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Deal shuffled indices round-robin into k folds and pair each fold as
/// the test set against the rest.
fn folds_to_splits(folds: Vec<Vec<usize>>, n: usize, repetition: usize) -> Vec<Split> {
    let k = folds.len();
    let mut fold_of = vec![0usize; n];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            fold_of[i] = f;
        }
    }
    (0..k)
        .map(|f| {
            let mut test: Vec<usize> = folds[f].clone();
            test.sort_unstable();
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            Split { train, test, repetition }
        })
        .collect()
}

fn kfold_splits(n: usize, k: usize, rng: &mut ChaCha12Rng, repetition: usize) -> Vec<Split> {
    let idx = shuffled_indices(n, rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &i) in idx.iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds_to_splits(folds, n, repetition)
}

/// Ordinary K-fold CV.
pub fn make_kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(CvError::invalid(format!("K = {k} must satisfy 2 <= K <= n = {n}")));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(FoldPlan { scheme: format!("kfold {k}"), n, seed, splits: kfold_splits(n, k, &mut rng, 0) })
}

/// Leave-one-out: split i tests exactly {i}.
pub fn make_loo(n: usize) -> Result<FoldPlan> {
    if n < 2 {
        return Err(CvError::invalid("LOO needs n >= 2"));
    }
    let splits = (0..n)
        .map(|i| Split {
            train: (0..n).filter(|&j| j != i).collect(),
            test: vec![i],
            repetition: 0,
        })
        .collect();
    Ok(FoldPlan { scheme: "loo".into(), n, seed: 0, splits })
}

/// R independent K-fold passes; repetition r uses generator stream r.
pub fn make_repeated_kfold(n: usize, k: usize, r: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(CvError::invalid(format!("K = {k} must satisfy 2 <= K <= n = {n}")));
    }
    if r == 0 {
        return Err(CvError::invalid("repeats must be >= 1"));
    }
    let mut splits = Vec::with_capacity(k * r);
    for rep in 0..r {
        let mut rng = stream_rng(seed, rep as u64);
        splits.extend(kfold_splits(n, k, &mut rng, rep));
    }
    Ok(FoldPlan { scheme: format!("repeated-kfold {k}x{r}"), n, seed, splits })
}

/// K-fold with per-stratum round-robin dealing, so every fold's count of
/// each stratum level differs from any other fold's by at most one.
pub fn make_stratified_kfold(k: usize, strata: &[String], seed: u64) -> Result<FoldPlan> {
    let n = strata.len();
    if k < 2 || k > n {
        return Err(CvError::invalid(format!("K = {k} must satisfy 2 <= K <= n = {n}")));
    }
    let mut levels: Vec<&String> = Vec::new();
    for s in strata {
        if !levels.contains(&s) {
            levels.push(s);
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Global cursor across strata: each level is dealt consecutively, so
    // per-level counts stay balanced and no fold is left empty.
    let mut cursor = 0usize;
    for level in levels {
        let mut members: Vec<usize> = (0..n).filter(|&i| &strata[i] == level).collect();
        members.shuffle(&mut rng);
        for &i in &members {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        scheme: format!("stratified-kfold {k}"),
        n,
        seed,
        splits: folds_to_splits(folds, n, 0),
    })
}

/// Repeated removal of d randomly selected test points. Draws are
/// independent across iterations, so distinct test sets are not
/// guaranteed. Each iteration is recorded as its own repetition.
pub fn make_leave_d_out(n: usize, d: usize, iterations: usize, seed: u64) -> Result<FoldPlan> {
    if d == 0 || d >= n {
        return Err(CvError::invalid(format!("d = {d} must satisfy 1 <= d <= n-1 = {}", n - 1)));
    }
    if iterations == 0 {
        return Err(CvError::invalid("iterations must be >= 1"));
    }
    let mut splits = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let mut rng = stream_rng(seed, it as u64);
        let idx = shuffled_indices(n, &mut rng);
        let mut test: Vec<usize> = idx[..d].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = idx[d..].to_vec();
        train.sort_unstable();
        splits.push(Split { train, test, repetition: it });
    }
    Ok(FoldPlan { scheme: format!("leave-d-out {d}x{iterations}"), n, seed, splits })
}

/// Test-set size for consistent leave-d-out selection:
/// ceil(n·(1 − 1/(ln n − 1))).
pub fn consistent_d(n: usize) -> Result<usize> {
    if n < 8 {
        return Err(CvError::invalid("consistent_d needs n >= 8"));
    }
    let nf = n as f64;
    let d = nf * (1.0 - 1.0 / (nf.ln() - 1.0));
    Ok(d.ceil() as usize)
}

/// Leave-one-group-out: one split per distinct group label, ordered by
/// first occurrence.
pub fn make_logo(groups: &[String]) -> Result<FoldPlan> {
    let n = groups.len();
    let mut levels: Vec<&String> = Vec::new();
    for g in groups {
        if !levels.contains(&g) {
            levels.push(g);
        }
    }
    if levels.len() < 2 {
        return Err(CvError::invalid("LOGO needs at least 2 distinct groups"));
    }
    let splits = levels
        .iter()
        .map(|level| {
            let test: Vec<usize> = (0..n).filter(|&i| &groups[i] == *level).collect();
            let train: Vec<usize> = (0..n).filter(|&i| &groups[i] != *level).collect();
            Split { train, test, repetition: 0 }
        })
        .collect();
    Ok(FoldPlan { scheme: "logo".into(), n, seed: 0, splits })
}

/// Blocked plan plus the number of splits dropped because blocking left
/// them without training data.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedPlan {
    pub plan: FoldPlan,
    pub dropped_splits: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

/// Remove from each training set every index within distance h of any
/// point of that split's test set. Test sets are unchanged. Splits whose
/// training set empties are dropped and counted; a plan with no
/// surviving splits is an error.
pub fn make_blocked(coords: &Mat, base: &FoldPlan, h: f64) -> Result<BlockedPlan> {
    if coords.nrows() != base.n {
        return Err(CvError::invalid(format!(
            "coords have {} rows for a plan over n = {}",
            coords.nrows(),
            base.n
        )));
    }
    if h < 0.0 {
        return Err(CvError::invalid("h must be nonnegative"));
    }
    let mut splits = Vec::with_capacity(base.splits.len());
    let mut dropped = 0;
    for s in &base.splits {
        let train: Vec<usize> = s
            .train
            .iter()
            .copied()
            .filter(|&i| {
                s.test.iter().all(|&t| euclidean(coords.row(i), coords.row(t)) > h)
            })
            .collect();
        if train.is_empty() {
            dropped += 1;
        } else {
            splits.push(Split { train, test: s.test.clone(), repetition: s.repetition });
        }
    }
    if splits.is_empty() {
        return Err(CvError::invalid(
            "blocking removed all training data: empty training sets in every split",
        ));
    }
    Ok(BlockedPlan {
        plan: FoldPlan {
            scheme: format!("blocked {h} [{}]", base.scheme),
            n: base.n,
            seed: base.seed,
            splits,
        },
        dropped_splits: dropped,
    })
}

/// A nested plan: each outer split paired with an inner K-fold plan over
/// that split's training indices. Inner split indices are positions into
/// `outer_train`; [`InnerPlan::to_original`] maps them back.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedPlan {
    pub outer: FoldPlan,
    pub inner: Vec<InnerPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerPlan {
    /// K-fold plan over positions `0..outer_train.len()`.
    pub plan: FoldPlan,
    /// Original dataset indices of the outer training set.
    pub outer_train: Vec<usize>,
}

impl InnerPlan {
    /// The inner plan re-expressed in original dataset indices.
    pub fn to_original(&self) -> FoldPlan {
        let map = |v: &[usize]| -> Vec<usize> {
            let mut out: Vec<usize> = v.iter().map(|&p| self.outer_train[p]).collect();
            out.sort_unstable();
            out
        };
        FoldPlan {
            scheme: self.plan.scheme.clone(),
            n: self.plan.n,
            seed: self.plan.seed,
            splits: self
                .plan
                .splits
                .iter()
                .map(|s| Split {
                    train: map(&s.train),
                    test: map(&s.test),
                    repetition: s.repetition,
                })
                .collect(),
        }
    }
}

/// Attach an inner K-fold plan to every outer split. Inner plan for outer
/// split s draws from generator stream s.
pub fn make_nested(outer: &FoldPlan, inner_k: usize, seed: u64) -> Result<NestedPlan> {
    if inner_k < 2 {
        return Err(CvError::invalid("inner K must be >= 2"));
    }
    let mut inner = Vec::with_capacity(outer.splits.len());
    for (s, split) in outer.splits.iter().enumerate() {
        let m = split.train.len();
        if inner_k > m {
            return Err(CvError::invalid(format!(
                "inner K = {inner_k} exceeds outer train size {m} at split {s}"
            )));
        }
        let mut rng = stream_rng(seed, s as u64);
        let plan = FoldPlan {
            scheme: format!("kfold {inner_k}"),
            n: m,
            seed,
            splits: kfold_splits(m, inner_k, &mut rng, 0),
        };
        inner.push(InnerPlan { plan, outer_train: split.train.clone() });
    }
    Ok(NestedPlan { outer: outer.clone(), inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_partition(plan: &FoldPlan) {
        for r in 0..plan.n_repetitions() {
            let mut all: Vec<usize> =
                plan.repetition(r).flat_map(|(_, s)| s.test.iter().copied()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..plan.n).collect::<Vec<_>>(), "repetition {r}");
        }
    }

    #[test]
    fn kfold_sizes_and_partition() {
        let plan = make_kfold(10, 5, 1).unwrap();
        assert_eq!(plan.splits.len(), 5);
        for s in &plan.splits {
            assert_eq!(s.test.len(), 2);
            assert_eq!(s.train.len(), 8);
        }
        assert_partition(&plan);
        plan.validate().unwrap();
    }

    #[test]
    fn kfold_uneven_sizes_are_balanced() {
        let plan = make_kfold(7, 3, 42).unwrap();
        let mut sizes: Vec<usize> = plan.splits.iter().map(|s| s.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn kfold_n_equals_loo_structure() {
        let kf = make_kfold(10, 10, 3).unwrap();
        let loo = make_loo(10).unwrap();
        let mut kf_tests: Vec<Vec<usize>> = kf.splits.iter().map(|s| s.test.clone()).collect();
        kf_tests.sort();
        let loo_tests: Vec<Vec<usize>> = loo.splits.iter().map(|s| s.test.clone()).collect();
        assert_eq!(kf_tests, loo_tests);
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(make_kfold(10, 1, 0).is_err());
        assert!(make_kfold(10, 11, 0).is_err());
    }

    #[test]
    fn loo_structure() {
        let plan = make_loo(3).unwrap();
        assert_eq!(plan.splits.len(), 3);
        let tests: Vec<Vec<usize>> = plan.splits.iter().map(|s| s.test.clone()).collect();
        assert_eq!(tests, vec![vec![0], vec![1], vec![2]]);
        for s in &plan.splits {
            assert_eq!(s.train.len(), 2);
        }
        assert_partition(&plan);
        assert!(make_loo(1).is_err());
    }

    #[test]
    fn repeated_kfold_shape_and_first_rep() {
        let plan = make_repeated_kfold(20, 10, 50, 7).unwrap();
        assert_eq!(plan.splits.len(), 500);
        let reps: Vec<usize> = plan.splits.iter().map(|s| s.repetition).collect();
        assert_eq!(*reps.iter().max().unwrap(), 49);
        assert_partition(&plan);

        // R = 1 reproduces plain kfold with the same seed.
        let single = make_repeated_kfold(20, 10, 1, 7).unwrap();
        let plain = make_kfold(20, 10, 7).unwrap();
        assert_eq!(single.splits, plain.splits);
    }

    #[test]
    fn stratified_balances_levels() {
        let strata: Vec<String> = (0..12)
            .map(|i| if i < 6 { "A".to_string() } else { "B".to_string() })
            .collect();
        let plan = make_stratified_kfold(3, &strata, 5).unwrap();
        for s in &plan.splits {
            let a = s.test.iter().filter(|&&i| strata[i] == "A").count();
            let b = s.test.iter().filter(|&&i| strata[i] == "B").count();
            assert_eq!((a, b), (2, 2));
        }
        assert_partition(&plan);
    }

    #[test]
    fn stratified_uneven_counts() {
        let strata: Vec<String> = (0..12)
            .map(|i| if i < 7 { "A".to_string() } else { "B".to_string() })
            .collect();
        let plan = make_stratified_kfold(3, &strata, 5).unwrap();
        let mut a_counts: Vec<usize> = plan
            .splits
            .iter()
            .map(|s| s.test.iter().filter(|&&i| strata[i] == "A").count())
            .collect();
        let mut b_counts: Vec<usize> = plan
            .splits
            .iter()
            .map(|s| s.test.iter().filter(|&&i| strata[i] == "B").count())
            .collect();
        a_counts.sort_unstable();
        b_counts.sort_unstable();
        assert_eq!(a_counts, vec![2, 2, 3]);
        assert_eq!(b_counts, vec![1, 2, 2]);
    }

    #[test]
    fn stratified_single_level_matches_kfold_structure() {
        let strata: Vec<String> = vec!["only".to_string(); 9];
        let plan = make_stratified_kfold(3, &strata, 2).unwrap();
        assert_eq!(plan.splits.len(), 3);
        for s in &plan.splits {
            assert_eq!(s.test.len(), 3);
        }
        assert_partition(&plan);
    }

    #[test]
    fn leave_d_out_shapes() {
        let plan = make_leave_d_out(10, 7, 20, 9).unwrap();
        assert_eq!(plan.splits.len(), 20);
        for s in &plan.splits {
            assert_eq!(s.test.len(), 7);
            assert_eq!(s.train.len(), 3);
        }
        assert_eq!(plan.n_repetitions(), 20);
        assert!(make_leave_d_out(10, 0, 5, 0).is_err());
        assert!(make_leave_d_out(10, 10, 5, 0).is_err());
    }

    #[test]
    fn consistent_d_matches_published_value() {
        assert_eq!(consistent_d(100).unwrap(), 73);
        assert_eq!(consistent_d(8).unwrap(), 1);
        assert!(consistent_d(7).is_err());
    }

    #[test]
    fn consistent_d_is_nondecreasing_and_bounded() {
        let mut prev = 0;
        for n in 8..=10_000 {
            let d = consistent_d(n).unwrap();
            assert!(d >= prev, "d_c decreased at n = {n}");
            assert!(d < n);
            prev = d;
        }
    }

    #[test]
    fn logo_groups() {
        let groups: Vec<String> =
            ["A", "A", "B", "B", "C"].iter().map(|s| s.to_string()).collect();
        let plan = make_logo(&groups).unwrap();
        assert_eq!(plan.splits.len(), 3);
        assert_eq!(plan.splits[0].test, vec![0, 1]);
        assert_eq!(plan.splits[1].test, vec![2, 3]);
        assert_eq!(plan.splits[2].test, vec![4]);
        assert_partition(&plan);

        let one: Vec<String> = vec!["A".to_string(); 4];
        assert!(make_logo(&one).is_err());
    }

    #[test]
    fn logo_many_groups() {
        let groups: Vec<String> = (0..90).map(|i| format!("g{}", i % 45)).collect();
        let plan = make_logo(&groups).unwrap();
        assert_eq!(plan.splits.len(), 45);
    }

    #[test]
    fn blocked_line_example() {
        // 1-d coords 0..9, LOO base, h = 1.5, test = {5} -> train loses {4,5,6}.
        let coords = Mat::from_fn(10, 1, |i, _| i as f64);
        let base = make_loo(10).unwrap();
        let blocked = make_blocked(&coords, &base, 1.5).unwrap();
        assert_eq!(blocked.dropped_splits, 0);
        let split5 = &blocked.plan.splits[5];
        assert_eq!(split5.test, vec![5]);
        assert!(!split5.train.contains(&4));
        assert!(!split5.train.contains(&6));
        assert!(split5.train.contains(&3));
        assert!(split5.train.contains(&7));
    }

    #[test]
    fn blocked_h_zero_keeps_base() {
        let coords = Mat::from_fn(8, 2, |i, j| (i * 2 + j) as f64);
        let base = make_kfold(8, 4, 3).unwrap();
        let blocked = make_blocked(&coords, &base, 0.0).unwrap();
        assert_eq!(blocked.plan.splits.len(), base.splits.len());
        for (b, s) in blocked.plan.splits.iter().zip(base.splits.iter()) {
            assert_eq!(b.train, s.train);
            assert_eq!(b.test, s.test);
        }
    }

    #[test]
    fn blocked_extreme_h_errors() {
        let coords = Mat::from_fn(6, 1, |i, _| i as f64);
        let base = make_loo(6).unwrap();
        let err = make_blocked(&coords, &base, 100.0).unwrap_err();
        assert!(err.to_string().contains("empty training sets"), "{err}");
    }

    #[test]
    fn blocked_train_size_monotone_in_h() {
        use std::collections::HashMap;
        let coords = Mat::from_fn(20, 2, |i, j| ((i * 7 + j * 3) % 13) as f64);
        let base = make_kfold(20, 4, 11).unwrap();
        // Track train sizes per test set so dropped splits don't shift
        // the comparison.
        let mut prev: Option<HashMap<Vec<usize>, usize>> = None;
        for h in [0.0, 1.0, 2.0, 4.0, 8.0] {
            if let Ok(b) = make_blocked(&coords, &base, h) {
                let sizes: HashMap<Vec<usize>, usize> = b
                    .plan
                    .splits
                    .iter()
                    .map(|s| (s.test.clone(), s.train.len()))
                    .collect();
                if let Some(p) = &prev {
                    for (test, size) in &sizes {
                        if let Some(prev_size) = p.get(test) {
                            assert!(
                                size <= prev_size,
                                "train grew from {prev_size} to {size} at h = {h}"
                            );
                        }
                    }
                }
                prev = Some(sizes);
            }
        }
    }

    #[test]
    fn nested_plans_cover_outer_train_only() {
        let outer = make_kfold(100, 10, 13).unwrap();
        let nested = make_nested(&outer, 10, 13).unwrap();
        assert_eq!(nested.inner.len(), 10);
        for (s, inner) in nested.inner.iter().enumerate() {
            assert_eq!(inner.plan.n, 90);
            let orig = inner.to_original();
            assert_partition_over(&orig, &nested.outer.splits[s].train);
            // Leakage freedom: no inner index is an outer test index.
            let outer_test = &nested.outer.splits[s].test;
            for isplit in &orig.splits {
                for i in isplit.train.iter().chain(isplit.test.iter()) {
                    assert!(!outer_test.contains(i));
                }
            }
        }
    }

    fn assert_partition_over(plan: &FoldPlan, universe: &[usize]) {
        let mut all: Vec<usize> =
            plan.splits.iter().flat_map(|s| s.test.iter().copied()).collect();
        all.sort_unstable();
        let mut expected = universe.to_vec();
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn nested_loo_outer() {
        let outer = make_loo(5).unwrap();
        let nested = make_nested(&outer, 2, 0).unwrap();
        assert_eq!(nested.inner.len(), 5);
        for inner in &nested.inner {
            assert_eq!(inner.plan.n, 4);
            assert_eq!(inner.plan.splits.len(), 2);
        }
        assert!(make_nested(&outer, 5, 0).is_err());
    }

    #[test]
    fn plans_are_deterministic() {
        assert_eq!(make_kfold(37, 5, 99).unwrap(), make_kfold(37, 5, 99).unwrap());
        assert_eq!(
            make_repeated_kfold(30, 3, 4, 1).unwrap(),
            make_repeated_kfold(30, 3, 4, 1).unwrap()
        );
        assert_ne!(
            make_kfold(37, 5, 99).unwrap().splits,
            make_kfold(37, 5, 100).unwrap().splits
        );
    }

    #[test]
    fn fingerprint_distinguishes_plans() {
        let a = make_kfold(30, 5, 1).unwrap();
        let b = make_kfold(30, 5, 2).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), make_kfold(30, 5, 1).unwrap().fingerprint());
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = make_repeated_kfold(12, 3, 2, 5).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.contains("\"scheme\""));
        assert!(json.contains("\"repetition\""));
        let back: FoldPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_kfold_partition_and_balance(n in 4usize..60, k_off in 0usize..6, seed in 0u64..500) {
            let k = 2 + k_off.min(n - 2);
            let plan = make_kfold(n, k, seed).unwrap();
            plan.validate().unwrap();
            prop_assert!(plan.is_partition());
            let sizes: Vec<usize> = plan.splits.iter().map(|s| s.test.len()).collect();
            let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn prop_stratified_balance(n_a in 2usize..20, n_b in 2usize..20, k in 2usize..5, seed in 0u64..100) {
            let strata: Vec<String> = (0..n_a).map(|_| "A".to_string())
                .chain((0..n_b).map(|_| "B".to_string())).collect();
            prop_assume!(k <= strata.len());
            let plan = make_stratified_kfold(k, &strata, seed).unwrap();
            plan.validate().unwrap();
            for level in ["A", "B"] {
                let counts: Vec<usize> = plan.splits.iter()
                    .map(|s| s.test.iter().filter(|&&i| strata[i] == level).count())
                    .collect();
                let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                prop_assert!(max - min <= 1, "level {level}: {counts:?}");
            }
        }

        #[test]
        fn prop_leave_d_out_disjoint(n in 5usize..40, d in 1usize..10, iters in 1usize..8, seed in 0u64..100) {
            prop_assume!(d < n);
            let plan = make_leave_d_out(n, d, iters, seed).unwrap();
            plan.validate().unwrap();
        }
    }
}
