//! Fixed-capacity memory of embeddings with exact l1 nearest-neighbour search.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::error::{Error, Result};
use crate::extractor::container::{Reader, Writer, KIND_MEMORY};
use crate::rng::SeededRng;
use crate::types::{Embedding, RawRecord, ReplacementPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub embedding: Embedding,
    /// Pre-normalization copy of the record, kept for statistics and retraining.
    pub raw: RawRecord,
    pub inserted_at: u64,
    pub last_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub slot: usize,
    pub distance: f64,
}

#[inline]
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone)]
pub struct Memory {
    entries: Vec<MemoryEntry>,
    dim: usize,
    policy: ReplacementPolicy,
    insert_counter: u64,
    use_clock: u64,
    rng: SeededRng,
}

impl Memory {
    /// Fills the memory in order; entry `i` gets insertion stamp `i`.
    pub fn fill<I>(items: I, policy: ReplacementPolicy, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (Embedding, RawRecord)>,
    {
        let mut entries = Vec::new();
        for (i, (embedding, raw)) in items.into_iter().enumerate() {
            entries.push(MemoryEntry {
                embedding,
                raw,
                inserted_at: i as u64,
                last_used: i as u64,
            });
        }
        let first = entries
            .first()
            .ok_or_else(|| Error::config("memory needs at least one entry"))?;
        let dim = first.embedding.dim();
        let raw_dim = first.raw.dim();
        if entries
            .iter()
            .any(|e| e.embedding.dim() != dim || e.raw.dim() != raw_dim)
        {
            return Err(Error::config("memory entries have inconsistent dimensions"));
        }
        let n = entries.len() as u64;
        Ok(Self {
            entries,
            dim,
            policy,
            insert_counter: n,
            use_clock: n,
            rng: SeededRng::new(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn policy(&self) -> ReplacementPolicy {
        self.policy
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn raw_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.entries.iter().map(|e| e.raw.values.as_slice())
    }

    /// Slot holding the earliest insertion stamp, i.e. the next FIFO victim.
    pub fn fifo_cursor(&self) -> usize {
        self.entries
            .iter()
            .enumerate()
            .min_by_key(|(i, e)| (e.inserted_at, *i))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    fn check_query(&self, z: &[f64], k: usize) -> Result<()> {
        if k == 0 || k > self.capacity() {
            return Err(Error::config(format!(
                "K must be in 1..={}, got {k}",
                self.capacity()
            )));
        }
        if z.len() != self.dim {
            return Err(Error::config(format!(
                "query has dimension {}, memory holds {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// The `k` nearest entries under l1, ascending; ties go to the earlier
    /// insertion stamp, then the lower slot. Does not touch LRU state.
    pub fn nearest_into(&self, z: &[f64], k: usize, out: &mut Vec<Neighbour>) -> Result<()> {
        self.check_query(z, k)?;
        out.clear();
        for (slot, entry) in self.entries.iter().enumerate() {
            let distance = l1_distance(z, &entry.embedding.0);
            if out.len() == k {
                let worst = out[k - 1];
                if !self.precedes(distance, slot, worst.distance, worst.slot) {
                    continue;
                }
                out.pop();
            }
            let pos = out
                .iter()
                .position(|n| self.precedes(distance, slot, n.distance, n.slot))
                .unwrap_or(out.len());
            out.insert(pos, Neighbour { slot, distance });
        }
        Ok(())
    }

    #[inline]
    fn precedes(&self, d1: f64, s1: usize, d2: f64, s2: usize) -> bool {
        match d1.total_cmp(&d2) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                (self.entries[s1].inserted_at, s1) < (self.entries[s2].inserted_at, s2)
            }
        }
    }

    /// [`nearest_into`](Self::nearest_into) followed, under LRU, by marking the
    /// returned entries as used.
    pub fn knn_query_into(&mut self, z: &[f64], k: usize, out: &mut Vec<Neighbour>) -> Result<()> {
        self.nearest_into(z, k, out)?;
        if self.policy == ReplacementPolicy::Lru {
            let now = self.use_clock;
            self.use_clock += 1;
            for n in out.iter() {
                self.entries[n.slot].last_used = now;
            }
        }
        Ok(())
    }

    pub fn knn_query(&mut self, z: &[f64], k: usize) -> Result<Vec<Neighbour>> {
        let mut out = Vec::with_capacity(k);
        self.knn_query_into(z, k, &mut out)?;
        Ok(out)
    }

    fn victim(&mut self) -> usize {
        match self.policy {
            ReplacementPolicy::Fifo => self.fifo_cursor(),
            ReplacementPolicy::Lru => self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(i, e)| (e.last_used, e.inserted_at, *i))
                .map(|(i, _)| i)
                .unwrap_or(0),
            ReplacementPolicy::Random => self.rng.below(self.entries.len()),
        }
    }

    /// Admits a new entry in place of the policy's victim and returns the evicted one.
    pub fn replace(&mut self, embedding: Embedding, raw: RawRecord) -> Result<MemoryEntry> {
        if embedding.dim() != self.dim || raw.dim() != self.entries[0].raw.dim() {
            return Err(Error::config("replacement entry has the wrong dimension"));
        }
        let slot = self.victim();
        let entry = MemoryEntry {
            embedding,
            raw,
            inserted_at: self.insert_counter,
            last_used: self.use_clock,
        };
        self.insert_counter += 1;
        self.use_clock += 1;
        Ok(std::mem::replace(&mut self.entries[slot], entry))
    }

    /// Overwrites `slot` in place. With `fresh_stamp` the entry counts as the
    /// newest insertion; otherwise it inherits the slot's stamps.
    pub fn overwrite(&mut self, slot: usize, embedding: Embedding, raw: RawRecord, fresh_stamp: bool) -> Result<()> {
        if slot >= self.capacity() {
            return Err(Error::config(format!("slot {slot} out of range")));
        }
        let e = &mut self.entries[slot];
        e.embedding = embedding;
        e.raw = raw;
        if fresh_stamp {
            e.inserted_at = self.insert_counter;
            e.last_used = self.use_clock;
            self.insert_counter += 1;
            self.use_clock += 1;
        }
        Ok(())
    }

    pub(crate) fn set_embedding(&mut self, slot: usize, embedding: Embedding) {
        self.entries[slot].embedding = embedding;
    }

    /// Hash of every stamp, counter and value bit; equal states hash equal.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.policy.tag().hash(&mut h);
        self.insert_counter.hash(&mut h);
        self.use_clock.hash(&mut h);
        for e in &self.entries {
            e.inserted_at.hash(&mut h);
            e.last_used.hash(&mut h);
            e.raw.index.hash(&mut h);
            e.raw.label.hash(&mut h);
            for v in e.embedding.0.iter().chain(&e.raw.values) {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let raw_dim = self.entries[0].raw.dim();
        let mut w = Writer::header(KIND_MEMORY);
        w.u64(self.capacity() as u64);
        w.u64(self.dim as u64);
        w.u64(raw_dim as u64);
        w.u8(self.policy.tag());
        w.u64(self.insert_counter);
        w.u64(self.use_clock);
        for e in &self.entries {
            w.u64(e.inserted_at);
            w.u64(e.last_used);
            w.u64(e.raw.index as u64);
            w.u8(match e.raw.label {
                None => 0,
                Some(false) => 1,
                Some(true) => 2,
            });
            w.f64s(&e.embedding.0);
            w.f64s(&e.raw.values);
        }
        w.buf
    }

    pub fn decode(buf: &[u8], seed: u64) -> Result<Self> {
        let (mut r, kind) = Reader::open(buf)?;
        if kind != KIND_MEMORY {
            return Err(Error::Format(format!("kind {kind} is not a memory snapshot")));
        }
        let n = r.usize()?;
        let dim = r.usize()?;
        let raw_dim = r.usize()?;
        if n == 0 || dim == 0 || raw_dim == 0 {
            return Err(Error::Format("empty memory snapshot".into()));
        }
        let policy = ReplacementPolicy::from_tag(r.u8()?)
            .ok_or_else(|| Error::Format("unknown policy tag".into()))?;
        let insert_counter = r.u64()?;
        let use_clock = r.u64()?;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let inserted_at = r.u64()?;
            let last_used = r.u64()?;
            let index = r.usize()?;
            let label = match r.u8()? {
                0 => None,
                1 => Some(false),
                2 => Some(true),
                t => return Err(Error::Format(format!("bad label tag {t}"))),
            };
            let embedding = Embedding(r.f64s(dim)?);
            let values = r.f64s(raw_dim)?;
            entries.push(MemoryEntry {
                embedding,
                raw: RawRecord { index, values, label },
                inserted_at,
                last_used,
            });
        }
        r.finish()?;
        Ok(Self {
            entries,
            dim,
            policy,
            insert_counter,
            use_clock,
            rng: SeededRng::new(seed),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(i: usize, v: &[f64]) -> (Embedding, RawRecord) {
        (
            Embedding(v.to_vec()),
            RawRecord::new(i, v.to_vec(), Some(false)).unwrap(),
        )
    }

    fn memory(points: &[&[f64]], policy: ReplacementPolicy) -> Memory {
        Memory::fill(points.iter().enumerate().map(|(i, p)| item(i, p)), policy, 0).unwrap()
    }

    #[test]
    fn hand_computed_neighbours() {
        let mut m = memory(&[&[0.0, 0.0], &[1.0, 1.0], &[3.0, 3.0]], ReplacementPolicy::Fifo);
        let nn = m.knn_query(&[0.9, 0.9], 2).unwrap();
        assert_eq!(nn[0].slot, 1);
        assert!((nn[0].distance - 0.2).abs() < 1e-12);
        assert_eq!(nn[1].slot, 0);
        assert!((nn[1].distance - 1.8).abs() < 1e-12);

        let nn = m.knn_query(&[3.0, 3.0], 1).unwrap();
        assert_eq!(nn, vec![Neighbour { slot: 2, distance: 0.0 }]);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let mut m = memory(&[&[0.0]], ReplacementPolicy::Fifo);
        assert!(matches!(m.knn_query(&[0.0], 2), Err(Error::Config(_))));
        assert!(m.knn_query(&[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn ties_prefer_earlier_insertion() {
        let mut m = memory(&[&[1.0], &[-1.0], &[1.0]], ReplacementPolicy::Fifo);
        let nn = m.knn_query(&[0.0], 3).unwrap();
        assert_eq!(nn.iter().map(|n| n.slot).collect::<Vec<_>>(), vec![0, 1, 2]);
        // Re-insert into slot 0: it is now the newest, so it loses ties.
        m.replace(Embedding(vec![1.0]), RawRecord::new(3, vec![1.0], None).unwrap()).unwrap();
        let nn = m.knn_query(&[0.0], 3).unwrap();
        assert_eq!(nn.iter().map(|n| n.slot).collect::<Vec<_>>(), vec![1, 2, 0]);
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut m = memory(&[&[0.0], &[1.0]], ReplacementPolicy::Fifo);
        let evicted = m.replace(Embedding(vec![2.0]), RawRecord::new(2, vec![2.0], None).unwrap()).unwrap();
        assert_eq!(evicted.raw.index, 0);
        let held: Vec<usize> = m.entries().iter().map(|e| e.raw.index).collect();
        assert_eq!(held, vec![2, 1]);
        assert_eq!(m.fifo_cursor(), 1);
    }

    #[test]
    fn lru_evicts_untouched() {
        let mut m = memory(&[&[0.0], &[10.0]], ReplacementPolicy::Lru);
        m.knn_query(&[0.1], 1).unwrap();
        let evicted = m.replace(Embedding(vec![5.0]), RawRecord::new(2, vec![5.0], None).unwrap()).unwrap();
        assert_eq!(evicted.raw.index, 1);
    }

    #[test]
    fn random_replacement_is_roughly_uniform() {
        let mut m = memory(&[&[0.0], &[1.0], &[2.0], &[3.0]], ReplacementPolicy::Random);
        let mut counts = [0usize; 4];
        for i in 0..1000 {
            let before: Vec<u64> = m.entries().iter().map(|e| e.inserted_at).collect();
            m.replace(Embedding(vec![0.5]), RawRecord::new(4 + i, vec![0.5], None).unwrap()).unwrap();
            let slot = m.entries().iter().zip(&before).position(|(e, b)| e.inserted_at != *b).unwrap();
            counts[slot] += 1;
        }
        // Chi-square with 3 degrees of freedom; 16.27 is the 0.999 quantile.
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 250.0).powi(2) / 250.0).sum();
        assert!(chi2 < 16.27, "{counts:?}");
        assert!(counts.iter().all(|&c| (200..=300).contains(&c)), "{counts:?}");
    }

    #[test]
    fn query_is_read_only_for_fifo_and_random() {
        for policy in [ReplacementPolicy::Fifo, ReplacementPolicy::Random] {
            let mut m = memory(&[&[0.0], &[1.0], &[2.0]], policy);
            let before = m.fingerprint();
            m.knn_query(&[0.7], 2).unwrap();
            assert_eq!(m.fingerprint(), before);
        }
        let mut m = memory(&[&[0.0], &[1.0]], ReplacementPolicy::Lru);
        let before = m.fingerprint();
        m.knn_query(&[0.7], 1).unwrap();
        assert_ne!(m.fingerprint(), before);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut m = memory(&[&[0.0, 1.0], &[1.0, 2.0], &[2.0, 3.0]], ReplacementPolicy::Lru);
        m.knn_query(&[0.0, 1.0], 2).unwrap();
        m.replace(Embedding(vec![9.0, 9.0]), RawRecord::new(7, vec![9.0, 9.0], Some(true)).unwrap()).unwrap();
        let back = Memory::decode(&m.encode(), 0).unwrap();
        assert_eq!(back.entries(), m.entries());
        assert_eq!(back.fingerprint(), m.fingerprint());
        assert!(Memory::decode(&m.encode()[..30], 0).is_err());
    }

    proptest! {
        #[test]
        fn fifo_holds_last_n_accepted(values in prop::collection::vec(-100.0f64..100.0, 0..60), n in 1usize..8) {
            let init: Vec<(Embedding, RawRecord)> = (0..n).map(|i| item(i, &[i as f64])).collect();
            let mut m = Memory::fill(init, ReplacementPolicy::Fifo, 0).unwrap();
            let mut log: Vec<usize> = (0..n).collect();
            for (i, v) in values.iter().enumerate() {
                let idx = n + i;
                m.replace(Embedding(vec![*v]), RawRecord::new(idx, vec![*v], None).unwrap()).unwrap();
                log.push(idx);
            }
            let mut held: Vec<(u64, usize)> = m.entries().iter().map(|e| (e.inserted_at, e.raw.index)).collect();
            held.sort_unstable();
            let held: Vec<usize> = held.into_iter().map(|(_, i)| i).collect();
            prop_assert_eq!(held, log[log.len() - n..].to_vec());
        }

        #[test]
        fn distance_is_a_symmetric_nonnegative_metric(
            a in prop::collection::vec(-1e6f64..1e6, 1..16),
            b in prop::collection::vec(-1e6f64..1e6, 1..16),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            prop_assert_eq!(l1_distance(a, b), l1_distance(b, a));
            prop_assert!(l1_distance(a, b) >= 0.0);
            prop_assert_eq!(l1_distance(a, a), 0.0);
            if a != b {
                prop_assert!(l1_distance(a, b) > 0.0);
            }
        }
    }
}
