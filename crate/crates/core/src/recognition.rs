//! Similarity recognition between semantic descriptions.
//!
//! Three recognizers share one interface: the difference threshold used by
//! targeted migration, the fitness-style control, and a small multilayer
//! perceptron trained by backpropagation on perturbed variants of its owner.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{canonicalize, description_difference, SemanticDescription, COMPONENT_MAX, COMPONENT_MIN, MISSING_PENALTY};
use crate::rng::SimRng;
use crate::{Error, Result};

pub const SIMILARITY_THRESHOLD: f64 = 0.90;
pub const VARIANT_DIFFERENCE: f64 = 0.10;
pub const CHARS_PER_COMPONENT: usize = 6;
pub const BITS_PER_COMPONENT: usize = CHARS_PER_COMPONENT * 8;
pub const DEFAULT_VARIANTS: usize = 50;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Bit vector of a description, sized to an owner's component count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedDescription(pub Vec<u8>);

impl EncodedDescription {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_inputs(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Components (ids and values) of a description in canonical order.
pub fn components(desc: &SemanticDescription) -> Vec<u32> {
    desc.tuples().iter().flat_map(|t| [u32::from(t.id), u32::from(t.value)]).collect()
}

/// Renders each component as six zero-padded digits and spreads the UTF-8
/// bytes into bits, most significant first. Shorter inputs are zero-padded
/// and longer ones truncated to `owner_components`.
pub fn preprocess(desc: &SemanticDescription, owner_components: usize) -> EncodedDescription {
    let text: String = components(desc).iter().map(|c| format!("{c:06}")).collect();
    let mut bits: Vec<u8> = text.bytes().flat_map(|byte| (0..8).rev().map(move |k| (byte >> k) & 1)).collect();
    bits.resize(owner_components * BITS_PER_COMPONENT, 0);
    EncodedDescription(bits)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One hidden layer of sigmoid units and a single sigmoid output.
/// `w1[h]` holds the weights into hidden unit `h` with the bias last;
/// `w2` the hidden-to-output weights, bias last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub n_hidden: usize,
    pub learning_rate: f64,
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<f64>,
}

/// Weight gradients of the loss ½(y − t)².
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<f64>,
}

impl Mlp {
    /// Weights drawn uniformly from [−0.5, 0.5].
    pub fn new(n_in: usize, n_hidden: usize, learning_rate: f64, rng: &mut SimRng) -> Self {
        let w1 = (0..n_hidden).map(|_| (0..=n_in).map(|_| rng.gen_range(-0.5..=0.5)).collect()).collect();
        let w2 = (0..=n_hidden).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        Self { n_in, n_hidden, learning_rate, w1, w2 }
    }

    /// Hidden layer sized ceil(1.5 × inputs).
    pub fn for_inputs(n_in: usize, learning_rate: f64, rng: &mut SimRng) -> Self {
        Self::new(n_in, (3 * n_in).div_ceil(2), learning_rate, rng)
    }

    pub fn from_weights(w1: Vec<Vec<f64>>, w2: Vec<f64>, learning_rate: f64) -> Result<Self> {
        let n_hidden = w1.len();
        let n_in = w1.first().map_or(0, |r| r.len().saturating_sub(1));
        if n_hidden == 0 || w1.iter().any(|r| r.len() != n_in + 1) {
            return Err(Error::ShapeMismatch { got: n_in, expected: n_in + 1 });
        }
        if w2.len() != n_hidden + 1 {
            return Err(Error::ShapeMismatch { got: w2.len(), expected: n_hidden + 1 });
        }
        Ok(Self { n_in, n_hidden, learning_rate, w1, w2 })
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .map(|w| sigmoid(w[..self.n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.n_in]))
            .collect()
    }

    fn output(&self, h: &[f64]) -> f64 {
        sigmoid(self.w2[..self.n_hidden].iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + self.w2[self.n_hidden])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_in {
            return Err(Error::ShapeMismatch { got: x.len(), expected: self.n_in });
        }
        Ok(self.output(&self.hidden(x)))
    }

    pub fn gradients(&self, x: &[f64], target: f64) -> Result<Gradients> {
        if x.len() != self.n_in {
            return Err(Error::ShapeMismatch { got: x.len(), expected: self.n_in });
        }
        let h = self.hidden(x);
        let y = self.output(&h);
        let delta_out = (y - target) * y * (1.0 - y);
        let mut w2: Vec<f64> = h.iter().map(|&hj| delta_out * hj).collect();
        w2.push(delta_out);
        let w1 = h
            .iter()
            .enumerate()
            .map(|(j, &hj)| {
                let delta = delta_out * self.w2[j] * hj * (1.0 - hj);
                let mut g: Vec<f64> = x.iter().map(|&xi| delta * xi).collect();
                g.push(delta);
                g
            })
            .collect();
        Ok(Gradients { w1, w2 })
    }

    /// One backpropagation step on a single example, updating in place.
    /// Matches a descent step along [`Mlp::gradients`].
    pub fn step(&mut self, x: &[f64], target: f64) {
        let h = self.hidden(x);
        let y = self.output(&h);
        let delta_out = (y - target) * y * (1.0 - y);
        let lr = self.learning_rate;
        for (j, &hj) in h.iter().enumerate() {
            let delta = delta_out * self.w2[j] * hj * (1.0 - hj);
            if delta == 0.0 {
                continue;
            }
            let row = &mut self.w1[j];
            for (w, &xi) in row[..self.n_in].iter_mut().zip(x) {
                if xi != 0.0 {
                    *w -= lr * delta * xi;
                }
            }
            row[self.n_in] -= lr * delta;
        }
        for (w, &hj) in self.w2[..self.n_hidden].iter_mut().zip(&h) {
            *w -= lr * delta_out * hj;
        }
        self.w2[self.n_hidden] -= lr * delta_out;
    }

    pub fn mse(&self, data: &[(Vec<f64>, f64)]) -> Result<f64> {
        let mut sum = 0.0;
        for (x, t) in data {
            let y = self.forward(x)?;
            sum += (y - t) * (y - t);
        }
        Ok(sum / data.len().max(1) as f64)
    }

    /// Online backpropagation, shuffled each epoch. Returns the MSE after
    /// every epoch.
    pub fn train(&mut self, data: &[(Vec<f64>, f64)], epochs: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(rng);
            for &i in &order {
                if data[i].0.len() != self.n_in {
                    return Err(Error::ShapeMismatch { got: data[i].0.len(), expected: self.n_in });
                }
                self.step(&data[i].0, data[i].1);
            }
            history.push(self.mse(data)?);
        }
        Ok(history)
    }
}

/// Labelled examples for one owner. Positives differ from the owner by less
/// than [`VARIANT_DIFFERENCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub owner: SemanticDescription,
    pub examples: Vec<(SemanticDescription, f64)>,
}

impl TrainingSet {
    pub fn only_owner(owner: &SemanticDescription) -> Self {
        Self { owner: owner.clone(), examples: vec![(owner.clone(), 1.0)] }
    }

    /// The owner plus `n` variants, each perturbing a random number of
    /// components by ±U(1, 20).
    pub fn with_variants(owner: &SemanticDescription, n: usize, rng: &mut SimRng) -> Self {
        let mut set = Self::only_owner(owner);
        while set.examples.len() < n + 1 {
            if let Some(v) = perturb(owner, rng) {
                set.push(v);
            }
        }
        set
    }

    pub fn label(&self, other: &SemanticDescription) -> f64 {
        f64::from(u8::from(description_difference(&self.owner, other) < VARIANT_DIFFERENCE))
    }

    /// Adds an example labelled against the owner.
    pub fn push(&mut self, desc: SemanticDescription) {
        let label = self.label(&desc);
        self.examples.push((desc, label));
    }

    /// Encoded examples with positives repeated until the classes are
    /// roughly balanced.
    pub fn encoded(&self) -> Vec<(Vec<f64>, f64)> {
        let width = components(&self.owner).len();
        let positives = self.examples.iter().filter(|e| e.1 == 1.0).count().max(1);
        let negatives = self.examples.len() - positives.min(self.examples.len());
        let copies = (negatives / positives).max(1);
        self.examples
            .iter()
            .flat_map(|(d, t)| {
                let n = if *t == 1.0 { copies } else { 1 };
                std::iter::repeat_n((preprocess(d, width).as_inputs(), *t), n)
            })
            .collect()
    }
}

/// A random perturbation of `desc`, or `None` when it collapses two tuples
/// onto one attribute id.
pub fn perturb(desc: &SemanticDescription, rng: &mut SimRng) -> Option<SemanticDescription> {
    let mut comps = components(desc);
    let count = rng.gen_range(1..=comps.len());
    for i in rand::seq::index::sample(rng, comps.len(), count) {
        let delta = rng.gen_range(1..=20) as i64 * if rng.gen_bool(0.5) { 1 } else { -1 };
        comps[i] = (comps[i] as i64 + delta).clamp(COMPONENT_MIN as i64, COMPONENT_MAX as i64) as u32;
    }
    let raw: Vec<(u32, u32)> = comps.chunks(2).map(|c| (c[0], c[1])).collect();
    canonicalize(&raw, false).ok().filter(|d| d.len() == desc.len())
}

/// Similarity adapted from the fitness function: the owner's tuples are the
/// requirement, the other description the candidate.
pub fn fitness_similarity(own: &SemanticDescription, other: &SemanticDescription) -> f64 {
    let mismatch: u32 = own
        .tuples()
        .iter()
        .map(|r| {
            other
                .tuples()
                .iter()
                .filter(|a| a.id == r.id)
                .map(|a| u32::from(a.value.abs_diff(r.value)))
                .min()
                .unwrap_or(MISSING_PENALTY)
        })
        .sum();
    1.0 / (1.0 + f64::from(mismatch))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    Distance,
    Mlp,
    FitnessControl,
}

/// Decides whether another description is similar to its owner's.
pub trait Recognizer {
    fn recognize(&self, other: &SemanticDescription) -> bool;
}

#[derive(Debug, Clone)]
pub struct DistanceRecognizer {
    pub own: SemanticDescription,
}

impl Recognizer for DistanceRecognizer {
    fn recognize(&self, other: &SemanticDescription) -> bool {
        description_difference(&self.own, other) < VARIANT_DIFFERENCE
    }
}

#[derive(Debug, Clone)]
pub struct FitnessControlRecognizer {
    pub own: SemanticDescription,
}

impl Recognizer for FitnessControlRecognizer {
    fn recognize(&self, other: &SemanticDescription) -> bool {
        fitness_similarity(&self.own, other) >= SIMILARITY_THRESHOLD
    }
}

const MAX_EXTRA_ROUNDS: usize = 3;

#[derive(Debug, Clone)]
pub struct MlpRecognizer {
    pub width: usize,
    pub net: Mlp,
}

impl MlpRecognizer {
    /// Trains a fresh network on `set` for `epochs`, then keeps training
    /// (up to `MAX_EXTRA_ROUNDS` more rounds of `epochs`) while the owner
    /// scores below the threshold.
    pub fn train(set: &TrainingSet, epochs: usize, learning_rate: f64, rng: &mut SimRng) -> Result<Self> {
        let width = components(&set.owner).len();
        let data = set.encoded();
        let mut rec = Self { width, net: Mlp::for_inputs(width * BITS_PER_COMPONENT, learning_rate, rng) };
        rec.net.train(&data, epochs, rng)?;
        for _ in 0..MAX_EXTRA_ROUNDS {
            if rec.recognize(&set.owner) {
                break;
            }
            rec.net.train(&data, epochs.max(1), rng)?;
        }
        Ok(rec)
    }

    pub fn score(&self, other: &SemanticDescription) -> f64 {
        self.net.forward(&preprocess(other, self.width).as_inputs()).expect("encoded to network width")
    }
}

impl Recognizer for MlpRecognizer {
    fn recognize(&self, other: &SemanticDescription) -> bool {
        self.score(other) >= SIMILARITY_THRESHOLD
    }
}

/// Builds the recognizer of `kind` for `own`. The MLP variant trains on
/// `variants` perturbations.
pub fn build_recognizer(
    kind: RecognizerKind,
    own: &SemanticDescription,
    variants: usize,
    epochs: usize,
    rng: &mut SimRng,
) -> Result<Box<dyn Recognizer + Send + Sync>> {
    Ok(match kind {
        RecognizerKind::Distance => Box::new(DistanceRecognizer { own: own.clone() }),
        RecognizerKind::FitnessControl => Box::new(FitnessControlRecognizer { own: own.clone() }),
        RecognizerKind::Mlp => {
            let set = TrainingSet::with_variants(own, variants, rng);
            Box::new(MlpRecognizer::train(&set, epochs, DEFAULT_LEARNING_RATE, rng)?)
        }
    })
}
