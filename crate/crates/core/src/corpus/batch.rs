use rand::seq::SliceRandom;
use rand::Rng;

use super::{Label, Modality, SentenceSample};
use crate::numerics::Tensor;

/// `[batch, max_len, width]` zero-padded features with true lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedModality {
    pub data: Tensor<f32>,
    pub lengths: Vec<usize>,
}

impl PaddedModality {
    pub fn pad(items: &[&Tensor<f32>]) -> Self {
        let width = items[0].cols();
        let max_len = items.iter().map(|t| t.rows()).max().expect("non-empty batch");
        let mut data = vec![0.0f32; items.len() * max_len * width];
        for (b, t) in items.iter().enumerate() {
            assert_eq!(t.cols(), width, "feature widths differ within a batch");
            let start = b * max_len * width;
            data[start..start + t.len()].copy_from_slice(t.data());
        }
        PaddedModality {
            data: Tensor::new(vec![items.len(), max_len, width], data).expect("consistent shape"),
            lengths: items.iter().map(|t| t.rows()).collect(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Padded `[max_len, width]` matrix of sample `b`.
    pub fn padded(&self, b: usize) -> Tensor<f32> {
        let n = self.max_len() * self.width();
        Tensor::new(vec![self.max_len(), self.width()], self.data.data()[b * n..(b + 1) * n].to_vec()).expect("row slice")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    /// Positions of the batch members in the sample list.
    pub indices: Vec<usize>,
    pub audio: PaddedModality,
    pub visual: PaddedModality,
    pub text: PaddedModality,
    pub labels: Vec<Option<Label>>,
}

impl PaddedBatch {
    pub fn new(samples: &[SentenceSample], indices: Vec<usize>) -> Self {
        let members: Vec<&SentenceSample> = indices.iter().map(|&i| &samples[i]).collect();
        let pad = |m: Modality| PaddedModality::pad(&members.iter().map(|s| s.features(m)).collect::<Vec<_>>());
        PaddedBatch {
            audio: pad(Modality::Audio),
            visual: pad(Modality::Visual),
            text: pad(Modality::Linguistic),
            labels: members.iter().map(|s| s.label).collect(),
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn modality(&self, m: Modality) -> &PaddedModality {
        match m {
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
            Modality::Linguistic => &self.text,
        }
    }
}

/// Seeded shuffle, then consecutive padded batches; the last one may be
/// short. Batches are padded lazily as the iterator advances.
pub fn batch_sentences<'a, R: Rng + ?Sized>(
    samples: &'a [SentenceSample],
    batch_size: usize,
    rng: &mut R,
) -> impl Iterator<Item = PaddedBatch> + 'a {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    batches_in_order(samples, order, batch_size)
}

/// Batches over an explicit (possibly repeating) sample order.
pub fn batches_in_order(samples: &[SentenceSample], order: Vec<usize>, batch_size: usize) -> impl Iterator<Item = PaddedBatch> + '_ {
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    chunks.into_iter().map(move |idx| PaddedBatch::new(samples, idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(i: usize) -> SentenceSample {
        let t = |rows: usize, w: usize| Tensor::filled(&[rows, w], i as f32 + 1.0);
        SentenceSample {
            patient_id: format!("P{i}"),
            sentence_index: 0,
            audio: t(1 + i % 5, 3),
            visual: t(1 + i % 3, 2),
            text: t(1 + i % 7, 4),
            label: Some(Label::new((i % 25) as u8).unwrap()),
        }
    }

    #[test]
    fn sizes_and_seeded_order() {
        let samples: Vec<_> = (0..33).map(sample).collect();
        let sizes: Vec<usize> = batch_sentences(&samples, 16, &mut ChaCha8Rng::seed_from_u64(1)).map(|b| b.len()).collect();
        assert_eq!(sizes, [16, 16, 1]);
        let order = |seed| batch_sentences(&samples, 16, &mut ChaCha8Rng::seed_from_u64(seed)).flat_map(|b| b.indices).collect::<Vec<_>>();
        assert_eq!(order(5), order(5));
        assert_ne!(order(5), order(6));
        let mut all = order(5);
        all.sort();
        assert_eq!(all, (0..33).collect::<Vec<_>>());
    }

    #[test]
    fn padding_keeps_prefix_and_zero_fills() {
        let samples: Vec<_> = (0..6).map(sample).collect();
        let batch = PaddedBatch::new(&samples, vec![0, 4, 2]);
        assert_eq!(batch.audio.lengths, [1, 5, 3]);
        assert_eq!(batch.audio.max_len(), 5);
        let first = batch.audio.padded(0);
        assert_eq!(first.row(0), &[1.0; 3]);
        assert!(first.data()[3..].iter().all(|&v| v == 0.0));
        let third = batch.audio.padded(2);
        assert_eq!(third.head_rows(3).unwrap(), samples[2].audio);
    }
}
