//! Categorical CTR data: canonical files, vocabularies, negative sampling,
//! 8:1:1 splits and mini-batches.

mod canonical;
mod dataset;
mod vocab;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use canonical::{load_canonical_file, parse_canonical, write_canonical, CanonicalFile, RawRecord};
pub use dataset::{sample_negatives, split_dataset, split_sizes, Dataset, Instance, NegativeSampling, Splits};
pub use vocab::{build_vocabulary, FieldVocabulary, VocabOptions, UNKNOWN_TOKEN};

use crate::Result;

/// A non-empty slice of instances drawn for one optimizer step.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub instances: Vec<&'a Instance>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.instances.iter().map(|x| x.label).collect()
    }
}

/// Seed used to shuffle a given epoch.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Splits `split` into batches of at most `batch_size`, covering every
/// instance once. With a seed the order is shuffled, differently per epoch.
pub fn iterate_batches<'a>(
    split: &'a [Instance],
    batch_size: usize,
    shuffle_seed: Option<u64>,
    epoch: usize,
) -> Vec<Batch<'a>> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..split.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch)));
    }
    order
        .chunks(batch_size)
        .map(|idx| Batch {
            instances: idx.iter().map(|&i| &split[i]).collect(),
        })
        .collect()
}

/// Output of the load → vocabulary → encode → negatives → split pipeline.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub vocabulary: FieldVocabulary,
    pub field_names: Option<Vec<String>>,
    pub positives: usize,
    pub negatives_added: usize,
    pub shortfall_instances: usize,
    pub splits: Splits,
}

impl Prepared {
    pub fn total(&self) -> usize {
        self.splits.train.len() + self.splits.validation.len() + self.splits.test.len()
    }
}

/// Runs the full preparation protocol on parsed records.
pub fn prepare(file: &CanonicalFile, options: VocabOptions, negatives: usize, seed: u64) -> Result<Prepared> {
    let vocabulary = build_vocabulary(&file.records, options)?;
    let instances = file
        .records
        .iter()
        .map(|r| vocabulary.encode_record(r))
        .collect::<Result<Vec<_>>>()?;
    let positives = instances.iter().filter(|x| x.label == 1).count();
    let ds = Dataset::new(instances, vocabulary);
    let sampled = sample_negatives(&ds, negatives, seed)?;
    let splits = split_dataset(&sampled.dataset.instances, seed.wrapping_add(1))?;
    Ok(Prepared {
        vocabulary: sampled.dataset.vocabulary,
        field_names: file.field_names.clone(),
        positives,
        negatives_added: sampled.negatives_added,
        shortfall_instances: sampled.shortfall_instances,
        splits,
    })
}

/// Decodes instances back to tokens for writing split files.
pub fn decode_rows<'a>(
    vocab: &'a FieldVocabulary,
    instances: &'a [Instance],
) -> impl Iterator<Item = (u8, Vec<&'a str>)> + 'a {
    instances.iter().map(move |inst| {
        let tokens = inst
            .field_ids
            .iter()
            .enumerate()
            .map(|(f, &id)| vocab.token(f, id).expect("instance ids come from this vocabulary"))
            .collect();
        (inst.label, tokens)
    })
}
