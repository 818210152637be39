use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FieldVocabulary;
use crate::{Error, Result};

/// One encoded labeled record.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Instance {
    pub label: u8,
    pub field_ids: Vec<u32>,
}

impl Instance {
    pub fn new(label: u8, field_ids: Vec<u32>) -> Self {
        Self { label, field_ids }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub vocabulary: FieldVocabulary,
    /// User id → item ids with a positive interaction.
    pub user_history: BTreeMap<u32, BTreeSet<u32>>,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, vocabulary: FieldVocabulary) -> Self {
        let (u, i) = (vocabulary.user_field(), vocabulary.item_field());
        let mut user_history: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for inst in instances.iter().filter(|x| x.label == 1) {
            user_history
                .entry(inst.field_ids[u])
                .or_default()
                .insert(inst.field_ids[i]);
        }
        Self {
            instances,
            vocabulary,
            user_history,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct NegativeSampling {
    pub dataset: Dataset,
    pub negatives_added: usize,
    /// Positives that had fewer than `k` eligible items.
    pub shortfall_instances: usize,
}

/// For every positive, appends `k` copies with the item replaced by distinct
/// items outside that user's history, labeled 0. Originals come first, then
/// the negatives in source order.
pub fn sample_negatives(ds: &Dataset, k: usize, rng_seed: u64) -> Result<NegativeSampling> {
    if k == 0 {
        return Err(Error::Config("negative sample count must be at least 1".into()));
    }
    let vocab = &ds.vocabulary;
    let (user_f, item_f) = (vocab.user_field(), vocab.item_field());
    let catalog = vocab.item_catalog_size();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let empty = BTreeSet::new();

    let mut instances = ds.instances.clone();
    let mut shortfall = 0;
    for inst in ds.instances.iter().filter(|x| x.label == 1) {
        let history = ds.user_history.get(&inst.field_ids[user_f]).unwrap_or(&empty);
        let in_catalog = history.iter().filter(|&&i| (i as usize) < catalog).count();
        let eligible = catalog - in_catalog;
        let items: Vec<u32> = if eligible <= k {
            shortfall += usize::from(eligible < k);
            (0..catalog as u32).filter(|i| !history.contains(i)).collect()
        } else if eligible * 2 >= catalog {
            let mut picked = Vec::with_capacity(k);
            let mut seen = HashSet::with_capacity(k);
            while picked.len() < k {
                let cand = rng.random_range(0..catalog as u32);
                if !history.contains(&cand) && seen.insert(cand) {
                    picked.push(cand);
                }
            }
            picked
        } else {
            let pool: Vec<u32> = (0..catalog as u32).filter(|i| !history.contains(i)).collect();
            index::sample(&mut rng, pool.len(), k).into_iter().map(|j| pool[j]).collect()
        };
        for item in items {
            let mut neg = inst.clone();
            neg.label = 0;
            neg.field_ids[item_f] = item;
            instances.push(neg);
        }
    }

    let negatives_added = instances.len() - ds.instances.len();
    Ok(NegativeSampling {
        dataset: Dataset {
            instances,
            vocabulary: ds.vocabulary.clone(),
            user_history: ds.user_history.clone(),
        },
        negatives_added,
        shortfall_instances: shortfall,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Partition sizes for `m` instances: `(⌊0.8m⌋, ⌊0.1m⌋, remainder)`.
pub fn split_sizes(m: usize) -> (usize, usize, usize) {
    let train = m * 8 / 10;
    let validation = m / 10;
    (train, validation, m - train - validation)
}

/// Shuffles with `rng_seed` and partitions 8:1:1.
pub fn split_dataset(instances: &[Instance], rng_seed: u64) -> Result<Splits> {
    let m = instances.len();
    if m < 10 {
        return Err(Error::Dataset(format!("need at least 10 instances to split, found {m}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let (tr, va, _) = split_sizes(m);
    let take = |idx: &[usize]| idx.iter().map(|&i| instances[i].clone()).collect::<Vec<_>>();
    Ok(Splits {
        train: take(&order[..tr]),
        validation: take(&order[tr..tr + va]),
        test: take(&order[tr + va..]),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{build_vocabulary, RawRecord, VocabOptions};
    use super::*;

    fn toy(history: &[&str], catalog: &[&str]) -> Dataset {
        let mut records = Vec::new();
        for (i, item) in catalog.iter().enumerate() {
            records.push(RawRecord::new(0, vec!["other".into(), item.to_string()], i + 1));
        }
        for item in history {
            records.push(RawRecord::new(1, vec!["u".into(), item.to_string()], 0));
        }
        let vocab = build_vocabulary(&records, VocabOptions::default()).unwrap();
        let instances = records
            .iter()
            .filter(|r| r.label == 1)
            .map(|r| vocab.encode_record(r).unwrap())
            .collect();
        Dataset::new(instances, vocab)
    }

    #[test]
    fn forced_negative_set() {
        let ds = toy(&["A", "B"], &["A", "B", "C", "D"]);
        let out = sample_negatives(&ds, 2, 7).unwrap();
        let v = &out.dataset.vocabulary;
        let mut negs: Vec<&str> = out.dataset.instances[2..]
            .iter()
            .map(|x| v.token(1, x.field_ids[1]).unwrap())
            .collect();
        negs.sort();
        negs.dedup();
        assert_eq!(negs, vec!["C", "D"]);
        assert_eq!(out.dataset.len(), 2 + 4);
        assert_eq!(out.shortfall_instances, 0);
    }

    #[test]
    fn full_history_yields_no_negatives() {
        let ds = toy(&["A", "B"], &["A", "B"]);
        let out = sample_negatives(&ds, 2, 1).unwrap();
        assert_eq!(out.negatives_added, 0);
        assert_eq!(out.shortfall_instances, 2);
    }

    #[test]
    fn split_sizes_floor_rule() {
        assert_eq!(split_sizes(10), (8, 1, 1));
        assert_eq!(split_sizes(30), (24, 3, 3));
        // floor(0.8·288609) = 230887, floor(0.1·288609) = 28860, remainder 28862
        assert_eq!(split_sizes(288_609), (230_887, 28_860, 28_862));
    }

    #[test]
    fn split_requires_ten_instances() {
        let inst = vec![Instance::new(1, vec![0, 0]); 9];
        assert!(split_dataset(&inst, 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let inst: Vec<Instance> = (0..50).map(|i| Instance::new((i % 2) as u8, vec![i, 0])).collect();
        assert_eq!(split_dataset(&inst, 3).unwrap(), split_dataset(&inst, 3).unwrap());
        assert_ne!(split_dataset(&inst, 3).unwrap(), split_dataset(&inst, 4).unwrap());
    }
}
