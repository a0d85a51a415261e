//! Small generated datasets for tests and smoke runs.
//!
//! Words belong to topics arranged on a ring. Each topic has a random center
//! and its words are noisy copies of it. A sentence draws all of its words
//! from one topic, and a pair's score depends only on the ring distance
//! between the two topics: 5 for the same topic, 2.5 for neighbours, 0
//! otherwise.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ScoreRange, ScoredPair};
use crate::embeddings::{build_embeddings, EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub dim: usize,
    /// Scale of per-word noise relative to unit-scale topic centers.
    pub noise: f64,
}

impl Default for TopicSpec {
    fn default() -> Self {
        TopicSpec {
            topics: 6,
            words_per_topic: 5,
            dim: 8,
            noise: 0.3,
        }
    }
}

impl TopicSpec {
    fn validate(&self) -> Result<()> {
        if self.topics < 3 || self.words_per_topic == 0 || self.dim == 0 {
            return Err(Error::Config(format!("degenerate synthetic topic spec {self:?}")));
        }
        Ok(())
    }
}

pub fn word(topic: usize, index: usize) -> String {
    format!("t{topic}w{index}")
}

pub fn topic_embeddings(spec: &TopicSpec, seed: u64) -> Result<(Vocabulary, EmbeddingMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0);
    let mut entries = Vec::with_capacity(spec.topics * spec.words_per_topic);
    for topic in 0..spec.topics {
        let center: Vec<f64> = (0..spec.dim).map(|_| unit.sample(&mut rng)).collect();
        for w in 0..spec.words_per_topic {
            let v = center.iter().map(|c| c + spec.noise * unit.sample(&mut rng)).collect();
            entries.push((word(topic, w), v));
        }
    }
    let (vocab, matrix, _) = build_embeddings(entries, spec.dim)?;
    Ok((vocab, matrix))
}

/// Score for two topics on the ring.
pub fn topic_score(spec: &TopicSpec, a: usize, b: usize) -> f64 {
    let d = a.abs_diff(b);
    match d.min(spec.topics - d) {
        0 => 5.0,
        1 => 2.5,
        _ => 0.0,
    }
}

fn sentence(spec: &TopicSpec, topic: usize, rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(3..=5);
    (0..len)
        .map(|_| word(topic, rng.gen_range(0..spec.words_per_topic)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` pairs on the `[0, 5]` scale, cycling through the three score levels so
/// that every level is represented.
pub fn topic_pairs(spec: &TopicSpec, n: usize, seed: u64) -> Result<Vec<ScoredPair>> {
    spec.validate()?;
    let range = ScoreRange::new(0.0, 5.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.gen_range(0..spec.topics);
        let offset = match i % 3 {
            0 => 0,
            1 => 1,
            _ => rng.gen_range(2..=spec.topics - 2),
        };
        let b = (a + offset) % spec.topics;
        let left = sentence(spec, a, &mut rng);
        let right = sentence(spec, b, &mut rng);
        pairs.push(ScoredPair::new(&left, &right, topic_score(spec, a, b), range)?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::tokenize;

    #[test]
    fn pairs_cover_all_levels_and_known_words() {
        let spec = TopicSpec::default();
        let (vocab, matrix) = topic_embeddings(&spec, 1).unwrap();
        assert_eq!(matrix.rows(), 1 + spec.topics * spec.words_per_topic);
        let pairs = topic_pairs(&spec, 30, 2).unwrap();
        for level in [0.0, 2.5, 5.0] {
            assert!(pairs.iter().any(|p| p.score == level));
        }
        for p in &pairs {
            for t in tokenize(&p.sentence_a).iter().chain(&tokenize(&p.sentence_b)) {
                assert!(vocab.get(t).is_some(), "{t}");
            }
        }
    }

    #[test]
    fn ring_distance_wraps() {
        let spec = TopicSpec::default();
        assert_eq!(topic_score(&spec, 0, 5), 2.5);
        assert_eq!(topic_score(&spec, 2, 2), 5.0);
        assert_eq!(topic_score(&spec, 0, 3), 0.0);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = TopicSpec::default();
        assert_eq!(topic_pairs(&spec, 10, 9).unwrap(), topic_pairs(&spec, 10, 9).unwrap());
        let (_, a) = topic_embeddings(&spec, 3).unwrap();
        let (_, b) = topic_embeddings(&spec, 3).unwrap();
        assert_eq!(a.tensor().values(), b.tensor().values());
    }
}
