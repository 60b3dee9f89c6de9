use serde::{Deserialize, Serialize};

use crate::env::{ActionId, StateId, Trajectory};

/// Similarity between two simulated trajectories, in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// Jaccard overlap of the `(state, action)` multisets.
    #[default]
    Jaccard,
    /// Longest common `(state, action)` prefix over the longer length.
    PrefixRatio,
    /// 1 for identical pair sequences, 0 otherwise.
    Exact,
}

type Pair = (StateId, ActionId);

/// Cached trajectory in both sequence and sorted-multiset form.
#[derive(Clone, Debug)]
struct Signature {
    seq: Vec<Pair>,
    sorted: Vec<Pair>,
}

impl Signature {
    fn of(traj: &Trajectory) -> Self {
        let seq: Vec<Pair> = traj.pairs().collect();
        let mut sorted = seq.clone();
        sorted.sort_unstable();
        Self { seq, sorted }
    }
}

fn multiset_intersection(a: &[Pair], b: &[Pair]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

impl Similarity {
    fn score(self, a: &Signature, b: &Signature) -> f64 {
        match self {
            Similarity::Jaccard => {
                let inter = multiset_intersection(&a.sorted, &b.sorted);
                let union = a.sorted.len() + b.sorted.len() - inter;
                if union == 0 {
                    1.0
                } else {
                    inter as f64 / union as f64
                }
            }
            Similarity::PrefixRatio => {
                let longest = a.seq.len().max(b.seq.len());
                if longest == 0 {
                    return 1.0;
                }
                let common = a.seq.iter().zip(&b.seq).take_while(|(x, y)| x == y).count();
                common as f64 / longest as f64
            }
            Similarity::Exact => f64::from(u8::from(a.seq == b.seq)),
        }
    }

    /// Similarity of two trajectories.
    pub fn between(self, a: &Trajectory, b: &Trajectory) -> f64 {
        self.score(&Signature::of(a), &Signature::of(b))
    }
}

#[derive(Clone, Debug)]
struct Entry {
    sig: Signature,
    ret: f64,
    last_used: u64,
}

/// Outcome of a memory query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lookup {
    Hit { ret: f64, similarity: f64 },
    Miss,
}

/// Bounded store of evaluated trajectories with least-recently-used
/// eviction.
#[derive(Clone, Debug)]
pub struct TrajectoryMemory {
    capacity: usize,
    similarity: Similarity,
    entries: Vec<Entry>,
    clock: u64,
}

impl TrajectoryMemory {
    pub fn new(capacity: usize, similarity: Similarity) -> Self {
        Self { capacity: capacity.max(1), similarity, entries: Vec::new(), clock: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Most similar cached trajectory; a hit when its similarity is at least
    /// `delta`. Earlier entries win ties. A hit counts as a use for LRU.
    pub fn lookup(&mut self, traj: &Trajectory, delta: f64) -> Lookup {
        let query = Signature::of(traj);
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let s = self.similarity.score(&query, &e.sig);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        match best {
            Some((i, s)) if s >= delta => {
                self.clock += 1;
                self.entries[i].last_used = self.clock;
                Lookup::Hit { ret: self.entries[i].ret, similarity: s }
            }
            _ => Lookup::Miss,
        }
    }

    /// Store an evaluated trajectory, evicting the least recently used entry
    /// when full.
    pub fn insert(&mut self, traj: &Trajectory, ret: f64) {
        self.clock += 1;
        self.entries.push(Entry { sig: Signature::of(traj), ret, last_used: self.clock });
        if self.entries.len() > self.capacity {
            let victim =
                self.entries.iter().enumerate().min_by_key(|(_, e)| e.last_used).map(|(i, _)| i).expect("non-empty");
            self.entries.remove(victim);
        }
    }

    /// Similarities of `traj` to every cached entry, in storage order.
    pub fn similarities(&self, traj: &Trajectory) -> Vec<f64> {
        let query = Signature::of(traj);
        self.entries.iter().map(|e| self.similarity.score(&query, &e.sig)).collect()
    }
}

/// Free-function form of [`TrajectoryMemory::lookup`].
pub fn memory_lookup(memory: &mut TrajectoryMemory, traj: &Trajectory, delta: f64) -> Lookup {
    memory.lookup(traj, delta)
}

/// Free-function form of [`TrajectoryMemory::insert`].
pub fn memory_insert(memory: &mut TrajectoryMemory, traj: &Trajectory, ret: f64) {
    memory.insert(traj, ret);
}
