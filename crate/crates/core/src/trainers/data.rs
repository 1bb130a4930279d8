use std::collections::BTreeMap;

use crate::env::{Trajectory, TreeIndex};
use crate::error::{CoreError, Result};
use crate::preference::PreferenceRecord;

/// `(sa, sao)` steps of every trajectory a dataset touches, keyed by its
/// terminal sa slot (which determines the whole trajectory).
#[derive(Clone, Debug, Default)]
pub struct PathCache {
    paths: BTreeMap<usize, Vec<(usize, Option<usize>)>>,
}

impl PathCache {
    pub fn insert(&mut self, tree: &TreeIndex, traj: &Trajectory) -> usize {
        let terminal = traj.terminal_sa(tree);
        self.paths.entry(terminal).or_insert_with(|| {
            let saos = traj.sao_slots(tree);
            traj.sa_slots(tree)
                .into_iter()
                .enumerate()
                .map(|(h, sa)| (sa, saos.get(h).copied()))
                .collect()
        });
        terminal
    }

    pub fn get(&self, terminal: usize) -> &[(usize, Option<usize>)] {
        &self.paths[&terminal]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[(usize, Option<usize>)]> {
        self.paths.values().map(Vec::as_slice)
    }
}

/// Preference pairs compressed to `(winner, loser) → count`.
#[derive(Clone, Debug)]
pub struct PairData {
    pub(crate) cache: PathCache,
    pub(crate) pairs: Vec<(usize, usize, f64)>,
    pub(crate) total: f64,
}

impl PairData {
    pub fn from_records(tree: &TreeIndex, records: &[PreferenceRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(CoreError::EmptyData("preference dataset is empty".into()));
        }
        let mut cache = PathCache::default();
        let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for r in records {
            let w = cache.insert(tree, r.winner());
            let l = cache.insert(tree, r.loser());
            *counts.entry((w, l)).or_default() += 1.0;
        }
        let pairs = counts.into_iter().map(|((w, l), c)| (w, l, c)).collect();
        Ok(PairData {
            cache,
            pairs,
            total: records.len() as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.total as usize
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    /// Distinct `(winner, loser)` terminal pairs.
    pub fn distinct(&self) -> usize {
        self.pairs.len()
    }
}

/// Trajectories with a desirable/undesirable flag, compressed by count.
#[derive(Clone, Debug)]
pub struct LabeledData {
    pub(crate) cache: PathCache,
    pub(crate) items: Vec<(usize, bool, f64)>,
    pub(crate) total: f64,
    pub(crate) prompts: Vec<usize>,
}

impl LabeledData {
    pub fn new(tree: &TreeIndex, labeled: &[(Trajectory, bool)]) -> Result<Self> {
        if labeled.is_empty() {
            return Err(CoreError::EmptyData(
                "KTO dataset has no desirable or undesirable examples".into(),
            ));
        }
        let mut cache = PathCache::default();
        let mut counts: BTreeMap<(usize, bool), f64> = BTreeMap::new();
        let mut prompts = Vec::with_capacity(labeled.len());
        for (t, desirable) in labeled {
            let k = cache.insert(tree, t);
            *counts.entry((k, *desirable)).or_default() += 1.0;
            prompts.push(t.prompt());
        }
        let items = counts.into_iter().map(|((k, d), c)| (k, d, c)).collect();
        Ok(LabeledData {
            cache,
            items,
            total: labeled.len() as f64,
            prompts,
        })
    }

    /// Winners as desirable and losers as undesirable.
    pub fn from_records(tree: &TreeIndex, records: &[PreferenceRecord]) -> Result<Self> {
        let labeled: Vec<(Trajectory, bool)> = records
            .iter()
            .flat_map(|r| [(r.winner().clone(), true), (r.loser().clone(), false)])
            .collect();
        Self::new(tree, &labeled)
    }

    pub fn len(&self) -> usize {
        self.total as usize
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }
}

/// Splits `items` into chunks of `batch_size` (0 = one chunk) and sums the
/// per-chunk partial results in order.
pub(crate) fn chunked<T>(items: &[T], batch_size: usize) -> impl Iterator<Item = &[T]> {
    let size = if batch_size == 0 {
        items.len().max(1)
    } else {
        batch_size
    };
    items.chunks(size)
}
