//! Associative memory, prediction and confidence-threshold retraining.
//!
//! Training follows the classic retraining loop for binary HDC: every
//! misclassified sample is bundled into its true class and bundled out of
//! the predicted class. In addition, a correctly classified sample whose
//! confidence (similarity margin between the best and the runner-up class,
//! in percentage points) is below `alpha_pct` is bundled into its class and
//! out of the runner-up class. `alpha_pct = 0` never fires that second rule
//! because the margin is never negative.
//!
//! Within one iteration every sample is predicted against the prototypes as
//! they were at the start of the iteration; bundle updates accumulate and all
//! class bundles are re-binarized once the pass is over.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! magic "HDAM" | version u16 | flags u16 (bit 0: bundles present) | dim u32 | classes u32
//! per class: net count i64 | packed prototype
//! if bundles: per class: D counts as i32
//! ```

use std::io::{Read, Write};

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundler::Bundle;
use crate::error::{check_dim, HdcError, Result};
use crate::hdvec::{HdRng, Hypervector};
use crate::memory::{read_exact, read_hv, read_u16, read_u32, read_u64, write_words};

const MAGIC: &[u8; 4] = b"HDAM";
const VERSION: u16 = 1;
const FLAG_BUNDLES: u16 = 1;

/// Per-class bundles and their binarized prototypes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociativeMemory {
    dim: usize,
    prototypes: Vec<Hypervector>,
    net_counts: Vec<i64>,
    /// Empty for inference-only models loaded without bundles.
    bundles: Vec<Bundle>,
}

impl AssociativeMemory {
    /// Binarizes each class bundle (class order, ascending dimension for tie
    /// draws) into the initial prototypes.
    pub fn from_bundles(bundles: Vec<Bundle>, rng: &mut HdRng) -> Result<Self> {
        if bundles.len() < 2 {
            return Err(HdcError::InvalidArgument(format!("need at least 2 classes, got {}", bundles.len())));
        }
        let dim = bundles[0].dim();
        for b in &bundles {
            check_dim(dim, b.dim())?;
        }
        let mut am = Self {
            dim,
            prototypes: Vec::with_capacity(bundles.len()),
            net_counts: bundles.iter().map(Bundle::n).collect(),
            bundles,
        };
        am.prototypes = am.bundles.iter().map(|b| b.binarize(rng)).collect();
        Ok(am)
    }

    /// Inference-only memory from fixed prototypes.
    pub fn from_prototypes(prototypes: Vec<Hypervector>, net_counts: Vec<i64>) -> Result<Self> {
        if prototypes.len() < 2 || prototypes.len() != net_counts.len() {
            return Err(HdcError::InvalidArgument("need at least 2 prototypes with matching counts".into()));
        }
        let dim = prototypes[0].dim();
        for p in &prototypes {
            check_dim(dim, p.dim())?;
        }
        Ok(Self { dim, prototypes, net_counts, bundles: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn prototypes(&self) -> &[Hypervector] {
        &self.prototypes
    }

    pub fn prototype(&self, class: usize) -> &Hypervector {
        &self.prototypes[class]
    }

    pub fn net_counts(&self) -> &[i64] {
        &self.net_counts
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.bundles
    }

    pub fn has_bundles(&self) -> bool {
        !self.bundles.is_empty()
    }

    pub fn predict(&self, q: &Hypervector) -> Result<Prediction> {
        check_dim(self.dim, q.dim())?;
        Ok(self.predict_unchecked(q))
    }

    fn predict_unchecked(&self, q: &Hypervector) -> Prediction {
        let hammings: Vec<usize> = self.prototypes.iter().map(|c| c.hamming_unchecked(q)).collect();
        Prediction::from_hammings(hammings, self.dim)
    }

    pub fn infer(&self, queries: &[Hypervector]) -> Result<Vec<usize>> {
        queries.par_iter().map(|q| self.predict(q).map(|p| p.label)).collect()
    }

    /// Fraction of `samples` whose predicted label matches.
    pub fn accuracy(&self, samples: &[Hypervector], labels: &[usize]) -> Result<f64> {
        check_len(samples, labels)?;
        if samples.is_empty() {
            return Ok(0.0);
        }
        let predicted = self.infer(samples)?;
        let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(correct as f64 / samples.len() as f64)
    }

    /// Confidence in percentage points of every correctly classified sample,
    /// in sample order.
    pub fn correct_confidences(&self, samples: &[Hypervector], labels: &[usize]) -> Result<Vec<f64>> {
        check_len(samples, labels)?;
        let preds = samples.par_iter().map(|s| self.predict(s)).collect::<Result<Vec<_>>>()?;
        Ok(preds
            .iter()
            .zip(labels)
            .filter(|(p, &y)| p.label == y)
            .map(|(p, _)| p.confidence_pct())
            .collect())
    }

    fn rebinarize(&mut self, rng: &mut HdRng) {
        for (b, p) in self.bundles.iter().zip(self.prototypes.iter_mut()) {
            *p = b.binarize(rng);
        }
    }

    fn warn_nonpositive(&self) -> bool {
        let bad: Vec<(usize, i64)> =
            self.net_counts.iter().enumerate().filter(|(_, &n)| n <= 0).map(|(k, &n)| (k, n)).collect();
        if !bad.is_empty() {
            warn!("class bundles with net count <= 0 (class, n): {bad:?}; all-zero dimensions fall to the tie rule");
        }
        !bad.is_empty()
    }

    fn pull(&mut self, class: usize, s: &Hypervector) {
        self.bundles[class].bundle_in(s).expect("dimension checked");
        self.net_counts[class] += 1;
    }

    fn push(&mut self, class: usize, s: &Hypervector) {
        self.bundles[class].bundle_out(s).expect("dimension checked");
        self.net_counts[class] -= 1;
    }

    pub fn write_to<W: Write>(&self, w: &mut W, with_bundles: bool) -> Result<()> {
        let with_bundles = with_bundles && self.has_bundles();
        let io = |e| HdcError::io("writing model", e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        let flags = if with_bundles { FLAG_BUNDLES } else { 0 };
        w.write_all(&flags.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.classes() as u32).to_le_bytes()).map_err(io)?;
        for (p, n) in self.prototypes.iter().zip(&self.net_counts) {
            w.write_all(&n.to_le_bytes()).map_err(io)?;
            write_words(w, p)?;
        }
        if with_bundles {
            for b in &self.bundles {
                let mut buf = Vec::with_capacity(b.dim() * 4);
                for c in b.counts() {
                    buf.extend_from_slice(&c.to_le_bytes());
                }
                w.write_all(&buf).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(HdcError::Format("not a model file (bad magic)".into()));
        }
        let version = read_u16(r)?;
        if version != VERSION {
            return Err(HdcError::Format(format!("unsupported model version {version}")));
        }
        let flags = read_u16(r)?;
        let dim = read_u32(r)? as usize;
        let classes = read_u32(r)? as usize;
        let mut prototypes = Vec::with_capacity(classes);
        let mut net_counts = Vec::with_capacity(classes);
        for _ in 0..classes {
            net_counts.push(read_u64(r)? as i64);
            prototypes.push(read_hv(r, dim)?);
        }
        let mut am = Self::from_prototypes(prototypes, net_counts)?;
        if flags & FLAG_BUNDLES != 0 {
            let mut buf = vec![0u8; dim * 4];
            for &n in &am.net_counts {
                read_exact(r, &mut buf)?;
                let counts = buf.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                am.bundles.push(Bundle::from_counts(counts, n)?);
            }
        }
        Ok(am)
    }
}

/// Outcome of querying the associative memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub label: usize,
    /// Best class other than `label`.
    pub runner_up: usize,
    pub hammings: Vec<usize>,
    dim: usize,
}

impl Prediction {
    /// Ties on similarity go to the lowest class index, both for the winner
    /// and for the runner-up.
    fn from_hammings(hammings: Vec<usize>, dim: usize) -> Self {
        let mut label = 0;
        for (k, &h) in hammings.iter().enumerate() {
            if h < hammings[label] {
                label = k;
            }
        }
        let mut runner_up = usize::MAX;
        for (k, &h) in hammings.iter().enumerate() {
            if k != label && (runner_up == usize::MAX || h < hammings[runner_up]) {
                runner_up = k;
            }
        }
        Self { label, runner_up, hammings, dim }
    }

    pub fn similarities(&self) -> Vec<f64> {
        self.hammings.iter().map(|&h| 1.0 - h as f64 / self.dim as f64).collect()
    }

    /// Similarity margin between the winner and the runner-up, as a fraction.
    pub fn confidence(&self) -> f64 {
        self.margin_bits() as f64 / self.dim as f64
    }

    pub fn confidence_pct(&self) -> f64 {
        self.margin_bits() as f64 * 100.0 / self.dim as f64
    }

    fn margin_bits(&self) -> usize {
        self.hammings[self.runner_up] - self.hammings[self.label]
    }
}

pub fn predict(am: &AssociativeMemory, q: &Hypervector) -> Result<(usize, Vec<f64>)> {
    let p = am.predict(q)?;
    Ok((p.label, p.similarities()))
}

/// Highest minus second-highest similarity.
pub fn confidence(similarities: &[f64]) -> Result<f64> {
    if similarities.len() < 2 {
        return Err(HdcError::InvalidArgument(format!(
            "confidence needs at least 2 similarities, got {}",
            similarities.len()
        )));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &s in similarities {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    Ok(first - second)
}

pub fn infer(am: &AssociativeMemory, queries: &[Hypervector]) -> Result<Vec<usize>> {
    am.infer(queries)
}

/// Bundles every sample into its class and binarizes the class bundles.
pub fn build_prototypes(
    samples: &[Hypervector],
    labels: &[usize],
    classes: usize,
    rng: &mut HdRng,
) -> Result<AssociativeMemory> {
    check_len(samples, labels)?;
    let dim = samples
        .first()
        .map(Hypervector::dim)
        .ok_or_else(|| HdcError::InvalidArgument("no training samples".into()))?;
    check_labels(labels, classes)?;
    let mut members: Vec<Vec<&Hypervector>> = vec![Vec::new(); classes];
    for (s, &y) in samples.iter().zip(labels) {
        check_dim(dim, s.dim())?;
        members[y].push(s);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(HdcError::EmptyClass(empty));
    }
    let bundles = members
        .into_par_iter()
        .map(|m| Bundle::from_vectors(dim, m))
        .collect::<Result<Vec<_>>>()?;
    AssociativeMemory::from_bundles(bundles, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub max_iterations: usize,
    pub check_every: usize,
    /// Training stops at a checkpoint once the best accuracy exceeds this.
    pub target_train_accuracy: f64,
    /// Visit samples in a fresh random order each iteration.
    pub shuffle: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self { max_iterations: 2500, check_every: 100, target_train_accuracy: 0.99, shuffle: false }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.check_every == 0 {
            return Err(HdcError::InvalidArgument("max_iterations and check_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Accuracy of the pass against the prototypes frozen at its start.
    pub accuracy: f64,
    pub correct: usize,
    pub error_updates: usize,
    pub low_confidence_updates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub iterations: Vec<IterationStats>,
    /// 1-based number of the iteration whose frozen prototypes scored best.
    pub best_iteration: usize,
    pub best_accuracy: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.iterations.iter().map(|s| s.accuracy).collect()
    }
}

/// One retraining pass; see the module docs for the update rules.
pub fn train_iteration(
    am: &mut AssociativeMemory,
    samples: &[Hypervector],
    labels: &[usize],
    alpha_pct: f64,
    rng: &mut HdRng,
) -> Result<IterationStats> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let stats = train_pass(am, samples, labels, alpha_pct, &order, rng)?;
    am.warn_nonpositive();
    Ok(stats)
}

fn train_pass(
    am: &mut AssociativeMemory,
    samples: &[Hypervector],
    labels: &[usize],
    alpha_pct: f64,
    order: &[usize],
    rng: &mut HdRng,
) -> Result<IterationStats> {
    if !(alpha_pct >= 0.0) {
        return Err(HdcError::InvalidArgument(format!("alpha must be non-negative, got {alpha_pct}")));
    }
    if !am.has_bundles() {
        return Err(HdcError::InvalidArgument("model has no class bundles to train".into()));
    }
    check_len(samples, labels)?;
    check_labels(labels, am.classes())?;
    for s in samples {
        check_dim(am.dim, s.dim())?;
    }

    let frozen: &AssociativeMemory = am;
    let predictions: Vec<Prediction> = samples.par_iter().map(|s| frozen.predict_unchecked(s)).collect();

    let mut stats = IterationStats { accuracy: 0.0, correct: 0, error_updates: 0, low_confidence_updates: 0 };
    for &i in order {
        let (s, y, p) = (&samples[i], labels[i], &predictions[i]);
        if p.label != y {
            am.pull(y, s);
            am.push(p.label, s);
            stats.error_updates += 1;
        } else {
            stats.correct += 1;
            if p.confidence_pct() < alpha_pct {
                am.pull(y, s);
                am.push(p.runner_up, s);
                stats.low_confidence_updates += 1;
            }
        }
    }
    am.rebinarize(rng);
    stats.accuracy = if samples.is_empty() { 0.0 } else { stats.correct as f64 / samples.len() as f64 };
    Ok(stats)
}

/// Repeats [`train_iteration`] under `schedule` and returns the memory as it
/// stood at the start of the best-scoring iteration (earliest on ties).
pub fn fit(
    am: AssociativeMemory,
    samples: &[Hypervector],
    labels: &[usize],
    alpha_pct: f64,
    schedule: &TrainSchedule,
    rng: &mut HdRng,
) -> Result<(AssociativeMemory, TrainHistory)> {
    schedule.validate()?;
    let mut am = am;
    let mut best = am.clone();
    let mut history = TrainHistory { best_accuracy: f64::NEG_INFINITY, ..Default::default() };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut warned = false;

    for iteration in 1..=schedule.max_iterations {
        let before = am.clone();
        if schedule.shuffle {
            order.shuffle(rng);
        }
        let stats = train_pass(&mut am, samples, labels, alpha_pct, &order, rng)?;
        history.iterations.push(stats);
        if !warned {
            warned = am.warn_nonpositive();
        }
        if stats.accuracy > history.best_accuracy {
            history.best_accuracy = stats.accuracy;
            history.best_iteration = iteration;
            best = before;
        }
        if iteration % schedule.check_every == 0 && history.best_accuracy > schedule.target_train_accuracy {
            break;
        }
    }
    Ok((best, history))
}

fn check_len(samples: &[Hypervector], labels: &[usize]) -> Result<()> {
    if samples.len() != labels.len() {
        return Err(HdcError::InvalidArgument(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= classes) {
        Some(&label) => Err(HdcError::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}
