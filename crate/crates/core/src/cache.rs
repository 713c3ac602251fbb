//! LRU cache of forward-map evaluations keyed by the exact bit pattern of θ.
//!
//! Lookups take a shared lock and bump an atomic recency stamp; inserts take
//! the exclusive lock.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use spin::RwLock;

use crate::models::Evaluation;

struct Entry {
    eval: Arc<Evaluation>,
    stamp: AtomicU64,
}

pub(crate) struct EvalCache {
    capacity: usize,
    clock: AtomicU64,
    map: RwLock<BTreeMap<Vec<u64>, Entry>>,
}

pub(crate) fn key_of(theta: &[f64]) -> Vec<u64> {
    theta.iter().map(|v| v.to_bits()).collect()
}

impl EvalCache {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            capacity,
            clock: AtomicU64::new(0),
            map: RwLock::new(BTreeMap::new()),
        }
    }

    pub(crate) fn capacity(&self) -> usize {
        self.capacity
    }

    pub(crate) fn len(&self) -> usize {
        self.map.read().len()
    }

    /// Returns a cached evaluation carrying sensitivities when `need_sens`.
    pub(crate) fn get(&self, key: &[u64], need_sens: bool) -> Option<Arc<Evaluation>> {
        let map = self.map.read();
        let entry = map.get(key)?;
        if need_sens && !entry.eval.has_sensitivities() {
            return None;
        }
        let t = self.clock.fetch_add(1, Ordering::Relaxed) + 1;
        entry.stamp.store(t, Ordering::Relaxed);
        Some(entry.eval.clone())
    }

    pub(crate) fn insert(&self, key: Vec<u64>, eval: Arc<Evaluation>) {
        if self.capacity == 0 {
            return;
        }
        let t = self.clock.fetch_add(1, Ordering::Relaxed) + 1;
        let mut map = self.map.write();
        map.insert(
            key,
            Entry {
                eval,
                stamp: AtomicU64::new(t),
            },
        );
        while map.len() > self.capacity {
            let oldest = map
                .iter()
                .min_by_key(|(_, e)| e.stamp.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone());
            match oldest {
                Some(k) => {
                    map.remove(&k);
                }
                None => break,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(v: f64, sens: bool) -> Arc<Evaluation> {
        Arc::new(
            Evaluation::new(1, 1, 1, alloc::vec![v], sens.then(|| alloc::vec![1.0])).unwrap(),
        )
    }

    #[test]
    fn evicts_least_recently_used() {
        let cache = EvalCache::new(2);
        cache.insert(key_of(&[1.0]), eval(1.0, true));
        cache.insert(key_of(&[2.0]), eval(2.0, true));
        assert!(cache.get(&key_of(&[1.0]), false).is_some());
        cache.insert(key_of(&[3.0]), eval(3.0, true));
        assert_eq!(cache.len(), 2);
        assert!(cache.get(&key_of(&[2.0]), false).is_none());
        assert!(cache.get(&key_of(&[1.0]), false).is_some());
    }

    #[test]
    fn value_only_entry_does_not_serve_gradient_requests() {
        let cache = EvalCache::new(4);
        cache.insert(key_of(&[0.5]), eval(0.5, false));
        assert!(cache.get(&key_of(&[0.5]), true).is_none());
        assert!(cache.get(&key_of(&[0.5]), false).is_some());
    }

    #[test]
    fn keys_distinguish_signed_zero() {
        assert_ne!(key_of(&[0.0]), key_of(&[-0.0]));
    }
}
