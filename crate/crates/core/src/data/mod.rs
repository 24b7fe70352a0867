//! Dataset container, per-sample normalization, leakage-free splitting and
//! shuffled batching with a class-dominance audit.

mod container;
mod synth;

pub use container::{read_container, read_text_dataset, write_container};
pub use synth::{band_energy, synth_generate};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Scalar, Tensor};

/// Canonical class order for the four-way signal taxonomy.
pub const CLASS_NAMES: [&str; 4] = ["Noise", "Artifacts", "Physiological", "Pathological"];

/// One labeled fixed-length signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub key: String,
    pub label: u8,
    pub signal: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn code(self) -> u8 {
        match self {
            SplitTag::Train => 0,
            SplitTag::Val => 1,
            SplitTag::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SplitTag::Train),
            1 => Ok(SplitTag::Val),
            2 => Ok(SplitTag::Test),
            other => Err(Error::Format(format!("unknown split tag {other}"))),
        }
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitTag::Train),
            "val" | "validation" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// Split assignment aligned with the dataset's sample order, plus the seed
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub seed: u64,
    pub tags: Vec<SplitTag>,
}

/// A collection of samples with class names and an optional split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub seq_len: usize,
    pub samples: Vec<Sample>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(class_names: Vec<String>, seq_len: usize, samples: Vec<Sample>) -> Result<Self> {
        let ds = Dataset {
            class_names,
            seq_len,
            samples,
            split: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.class_names.len();
        if classes == 0 {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        let mut keys = std::collections::BTreeSet::new();
        for s in &self.samples {
            if s.signal.len() != self.seq_len {
                return Err(Error::Input(format!(
                    "sample {} has length {}, dataset expects {}",
                    s.key,
                    s.signal.len(),
                    self.seq_len
                )));
            }
            if s.label as usize >= classes {
                return Err(Error::Input(format!(
                    "sample {} has label {} out of range for {classes} classes",
                    s.key, s.label
                )));
            }
            if !keys.insert(&s.key) {
                return Err(Error::Input(format!("duplicate sample key {}", s.key)));
            }
        }
        if let Some(split) = &self.split {
            if split.tags.len() != self.samples.len() {
                return Err(Error::Input(format!(
                    "split covers {} samples, dataset has {}",
                    split.tags.len(),
                    self.samples.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class sample counts over the whole dataset.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes()];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    /// Assign a fresh 70/20/10-style split, replacing any existing one.
    pub fn assign_split(&mut self, fractions: (f64, f64, f64), seed: u64) -> Result<()> {
        let tags = split_assignment(self.len(), fractions, seed)?;
        self.split = Some(Split { seed, tags });
        Ok(())
    }

    /// Indices of samples carrying a split tag; errors when no split exists.
    pub fn split_indices(&self, tag: SplitTag) -> Result<Vec<usize>> {
        let split = self.split.as_ref().ok_or_else(|| {
            Error::Config("container has no split metadata; run the split step first".into())
        })?;
        Ok(split
            .tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == tag)
            .map(|(i, _)| i)
            .collect())
    }

    /// Gather samples into a `[B, T, 1]` batch tensor (raw signals; the model
    /// input layer normalizes) plus their labels.
    pub fn batch_tensor<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let b = indices.len();
        let t = self.seq_len;
        let mut data = Vec::with_capacity(b * t);
        let mut labels = Vec::with_capacity(b);
        for &i in indices {
            let s = &self.samples[i];
            data.extend(s.signal.iter().map(|&v| T::from_f64(v as f64)));
            labels.push(s.label as usize);
        }
        (
            Tensor::from_vec(&[b, t, 1], data).expect("batch assembly shape"),
            labels,
        )
    }
}

/// Per-sample z-score: `(x - mean) / (std + eps)` with the population
/// standard deviation. Statistics accumulate in f64 regardless of the
/// element type. A constant signal maps to all zeros via the epsilon guard.
pub fn zscore_normalize<T: Scalar>(signal: &[T], epsilon: f64) -> Vec<T> {
    let n = signal.len() as f64;
    let mean = signal.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = signal
        .iter()
        .map(|v| {
            let d = v.as_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let denom = var.sqrt() + epsilon;
    signal
        .iter()
        .map(|v| T::from_f64((v.as_f64() - mean) / denom))
        .collect()
}

/// Seeded split sizes follow the floor rule: `train = floor(f_train * N)`,
/// `val = floor(f_val * N)`, remainder to test. Disjointness and coverage
/// hold by construction.
pub fn split_assignment(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<Vec<SplitTag>> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    if n < 3 {
        return Err(Error::Config(format!(
            "cannot split {n} samples into three sets"
        )));
    }
    let n_train = (ft * n as f64).floor() as usize;
    let n_val = (fv * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut tags = vec![SplitTag::Test; n];
    for &i in &order[..n_train] {
        tags[i] = SplitTag::Train;
    }
    for &i in &order[n_train..n_train + n_val] {
        tags[i] = SplitTag::Val;
    }
    Ok(tags)
}

/// Per-batch class-dominance audit.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAuditReport {
    /// Largest single-class fraction of each batch.
    pub dominance: Vec<f64>,
    /// Fraction of batches whose dominance exceeds 0.90.
    pub frac_above_090: f64,
    /// (min, max) dominance over the first five batches.
    pub first5_range: (f64, f64),
}

impl BatchAuditReport {
    pub fn render(&self) -> String {
        format!(
            "batches={} frac_above_0.90={:.4} first5_dominance_range=({:.4}, {:.4})\n",
            self.dominance.len(),
            self.frac_above_090,
            self.first5_range.0,
            self.first5_range.1
        )
    }
}

/// Globally shuffle the given sample indices and slice them into consecutive
/// batches (the trailing partial batch is kept). With `stratified` set, the
/// shuffle interleaves classes round-robin instead, which caps dominance for
/// balanced data.
pub fn make_batches(
    indices: &[usize],
    labels: &[u8],
    batch_size: usize,
    seed: u64,
    stratified: bool,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut rng = rng::stream(seed);
    let order: Vec<usize> = if stratified {
        let num_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
        for &i in indices {
            per_class[labels[i] as usize].push(i);
        }
        for q in &mut per_class {
            q.shuffle(&mut rng);
        }
        let mut merged = Vec::with_capacity(indices.len());
        let mut cursors = vec![0usize; num_classes];
        while merged.len() < indices.len() {
            for (c, q) in per_class.iter().enumerate() {
                if cursors[c] < q.len() {
                    merged.push(q[cursors[c]]);
                    cursors[c] += 1;
                }
            }
        }
        merged
    } else {
        let mut shuffled = indices.to_vec();
        shuffled.shuffle(&mut rng);
        shuffled
    };
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

/// Compute the dominance audit for a batch sequence.
pub fn audit_batches(batches: &[Vec<usize>], labels: &[u8], num_classes: usize) -> BatchAuditReport {
    let mut dominance = Vec::with_capacity(batches.len());
    for batch in batches {
        let mut counts = vec![0usize; num_classes.max(1)];
        for &i in batch {
            counts[labels[i] as usize] += 1;
        }
        let max = counts.iter().copied().max().unwrap_or(0);
        debug_assert_eq!(counts.iter().sum::<usize>(), batch.len());
        dominance.push(if batch.is_empty() {
            0.0
        } else {
            max as f64 / batch.len() as f64
        });
    }
    let above = dominance.iter().filter(|&&d| d > 0.90).count();
    let first5 = &dominance[..dominance.len().min(5)];
    let lo = first5.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = first5.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    BatchAuditReport {
        frac_above_090: if dominance.is_empty() {
            0.0
        } else {
            above as f64 / dominance.len() as f64
        },
        first5_range: if first5.is_empty() { (0.0, 0.0) } else { (lo, hi) },
        dominance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_reference_points() {
        let out = zscore_normalize(&[1.0f64, 2.0, 3.0], 1e-8);
        assert!((out[0] + 1.224745).abs() < 1e-5);
        assert!(out[1].abs() < 1e-12);
        assert!((out[2] - 1.224745).abs() < 1e-5);

        let constant = zscore_normalize(&[5.5f32; 64], 1e-8);
        assert!(constant.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zscore_output_statistics() {
        let mut r = rng::stream(5);
        use rand::Rng;
        for _ in 0..100 {
            let x: Vec<f64> = (0..257).map(|_| r.gen_range(-3.0..3.0)).collect();
            let z = zscore_normalize(&x, 1e-8);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-6);
            assert!(std > 1.0 - 1e-3 && std <= 1.0);
        }
    }

    #[test]
    fn zscore_near_idempotent() {
        let mut r = rng::stream(6);
        use rand::Rng;
        let x: Vec<f64> = (0..500).map(|_| r.gen_range(-2.0..2.0)).collect();
        let once = zscore_normalize(&x, 1e-8);
        let twice = zscore_normalize(&once, 1e-8);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0));
        }
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let tags = split_assignment(209_232, (0.7, 0.2, 0.1), 3).unwrap();
        let count = |t: SplitTag| tags.iter().filter(|&&x| x == t).count();
        assert_eq!(count(SplitTag::Train), 146_462);
        assert_eq!(count(SplitTag::Val), 41_846);
        assert_eq!(count(SplitTag::Test), 20_924);

        let small = split_assignment(10, (0.7, 0.2, 0.1), 1).unwrap();
        let countr = |t: SplitTag| small.iter().filter(|&&x| x == t).count();
        assert_eq!(
            (countr(SplitTag::Train), countr(SplitTag::Val), countr(SplitTag::Test)),
            (7, 2, 1)
        );
    }

    #[test]
    fn split_determinism_and_validation() {
        assert_eq!(
            split_assignment(100, (0.7, 0.2, 0.1), 9).unwrap(),
            split_assignment(100, (0.7, 0.2, 0.1), 9).unwrap()
        );
        assert_ne!(
            split_assignment(100, (0.7, 0.2, 0.1), 9).unwrap(),
            split_assignment(100, (0.7, 0.2, 0.1), 10).unwrap()
        );
        assert!(split_assignment(2, (0.7, 0.2, 0.1), 0).is_err());
        assert!(split_assignment(100, (0.5, 0.5, 0.2), 0).is_err());
    }

    #[test]
    fn dominance_reference_fractions() {
        // 22-of-32 and 13-of-32 dominant batches
        let mut labels = vec![0u8; 22];
        labels.extend(vec![1u8; 10]);
        labels.extend(vec![0u8; 13]);
        labels.extend(vec![1u8; 10]);
        labels.extend(vec![2u8; 9]);
        let batches = vec![(0..32).collect::<Vec<_>>(), (32..64).collect::<Vec<_>>()];
        let audit = audit_batches(&batches, &labels, 3);
        assert!((audit.dominance[0] - 0.6875).abs() < 1e-12);
        assert!((audit.dominance[1] - 0.40625).abs() < 1e-12);
        assert_eq!(audit.frac_above_090, 0.0);
        assert_eq!(audit.first5_range, (0.40625, 0.6875));
    }

    #[test]
    fn stratified_batches_cap_dominance_on_balanced_data() {
        let labels: Vec<u8> = (0..128).map(|i| (i % 4) as u8).collect();
        let indices: Vec<usize> = (0..128).collect();
        let batches = make_batches(&indices, &labels, 16, 3, true).unwrap();
        let audit = audit_batches(&batches, &labels, 4);
        // round-robin interleave puts exactly 4 of each class in every batch
        assert!(audit.dominance.iter().all(|&d| (d - 0.25).abs() < 1e-12));
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, indices);
    }

    #[test]
    fn batches_cover_all_indices() {
        let labels: Vec<u8> = (0..103).map(|i| (i % 4) as u8).collect();
        let indices: Vec<usize> = (0..103).collect();
        let batches = make_batches(&indices, &labels, 16, 7, false).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, indices);
        assert!(batches.iter().rev().skip(1).all(|b| b.len() == 16));
    }
}
