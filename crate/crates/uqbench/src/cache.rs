//! Memoizing wrapper for any [`NliProvider`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use uqbench_core::{NliProbs, NliProvider, ProviderError};

type Key = (String, String, String);

/// Caches verdicts keyed on `(premise, hypothesis, model id)`. Misses within
/// one call are forwarded to the inner provider as a single batch.
pub struct CachedNli<P> {
    inner: P,
    entries: RwLock<HashMap<Key, NliProbs>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<P: NliProvider> CachedNli<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, entries: RwLock::default(), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, pair: &(&str, &str), model: &str) -> Key {
        (pair.0.to_owned(), pair.1.to_owned(), model.to_owned())
    }
}

impl<P: NliProvider> NliProvider for CachedNli<P> {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        let mut out: Vec<Option<NliProbs>> = vec![None; pairs.len()];
        let mut missing: Vec<usize> = Vec::new();
        {
            let model = self.inner.model_id();
            let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
            for (i, pair) in pairs.iter().enumerate() {
                match entries.get(&self.key(pair, model)) {
                    Some(p) => out[i] = Some(*p),
                    None => missing.push(i),
                }
            }
        }
        self.hits.fetch_add((pairs.len() - missing.len()) as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            self.misses.fetch_add(missing.len() as u64, Ordering::Relaxed);
            let request: Vec<(&str, &str)> = missing.iter().map(|&i| pairs[i]).collect();
            let fresh = self.inner.nli_batch(&request)?;
            if fresh.len() != request.len() {
                return Err(ProviderError(format!(
                    "provider returned {} results for {} pairs",
                    fresh.len(),
                    request.len()
                )));
            }
            let model = self.inner.model_id();
            let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
            for (&i, probs) in missing.iter().zip(fresh) {
                entries.insert(self.key(&pairs[i], model), probs);
                out[i] = Some(probs);
            }
        }
        Ok(out.into_iter().map(|p| p.expect("every slot filled")).collect())
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        calls: AtomicUsize,
        pairs: AtomicUsize,
    }

    impl NliProvider for Counting {
        fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.pairs.fetch_add(pairs.len(), Ordering::Relaxed);
            Ok(pairs
                .iter()
                .map(|(a, b)| {
                    let e = 1.0 / (1.0 + (a.len() + 2 * b.len()) as f64);
                    NliProbs { entail: e, contra: (1.0 - e) / 3.0, neutral: 1.0 - e - (1.0 - e) / 3.0 }
                })
                .collect())
        }

        fn model_id(&self) -> &str {
            "counting"
        }
    }

    #[test]
    fn hits_are_bit_identical_and_skip_the_provider() {
        let cache = CachedNli::new(Counting { calls: AtomicUsize::new(0), pairs: AtomicUsize::new(0) });
        let pairs = [("a", "bb"), ("ccc", "d"), ("a", "bb")];
        let first = cache.nli_batch(&pairs).unwrap();
        let second = cache.nli_batch(&pairs[..2]).unwrap();
        for (x, y) in first.iter().zip(&second) {
            assert_eq!(x.entail.to_bits(), y.entail.to_bits());
            assert_eq!(x.contra.to_bits(), y.contra.to_bits());
            assert_eq!(x.neutral.to_bits(), y.neutral.to_bits());
        }
        assert_eq!(first[0], first[2]);
        assert_eq!(cache.inner().calls.load(Ordering::Relaxed), 1);
        assert_eq!(cache.hits(), 2);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn concurrent_use_is_consistent() {
        let cache = CachedNli::new(Counting { calls: AtomicUsize::new(0), pairs: AtomicUsize::new(0) });
        let texts: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for a in &texts {
                        for b in &texts {
                            cache.nli(a, b).unwrap();
                        }
                    }
                });
            }
        });
        assert_eq!(cache.len(), 400);
        let direct = cache.inner().nli_batch(&[("t3", "t7")]).unwrap()[0];
        assert_eq!(cache.nli("t3", "t7").unwrap(), direct);
    }
}
