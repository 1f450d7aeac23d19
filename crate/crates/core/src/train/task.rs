use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Uniform tokens; label is the token sum modulo `modulus`.
    SeqSumMod,
    /// One marker token (`vocab_size - 1`) hidden among fillers; label is its position.
    NeedleIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub seq_len: usize,
    /// Only used by `seq_sum_mod`.
    #[serde(default)]
    pub modulus: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub seed: u64,
}

/// Independent sample streams of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Train,
    Eval,
    /// Held-out batch used for conditioning measurements.
    Probe,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Train => 1,
            Stream::Eval => 2,
            Stream::Probe => 3,
        }
    }
}

pub type Batch = (Vec<Vec<usize>>, Vec<usize>);

impl TaskSpec {
    pub fn seq_sum_mod(vocab_size: usize, seq_len: usize, modulus: usize, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::SeqSumMod,
            vocab_size,
            seq_len,
            modulus,
            train_size: 1 << 20,
            eval_size: 2048,
            seed,
        }
    }

    pub fn needle_index(vocab_size: usize, seq_len: usize, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::NeedleIndex,
            vocab_size,
            seq_len,
            modulus: 0,
            train_size: 1 << 20,
            eval_size: 2048,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.kind {
            TaskKind::SeqSumMod => self.modulus,
            TaskKind::NeedleIndex => self.seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.train_size == 0 || self.eval_size == 0 {
            return Err(Error::validation("seq_len, train_size and eval_size must be >= 1"));
        }
        match self.kind {
            TaskKind::SeqSumMod if self.vocab_size == 0 || self.modulus < 2 => Err(Error::validation(
                "seq_sum_mod needs vocab_size >= 1 and modulus >= 2",
            )),
            TaskKind::NeedleIndex if self.vocab_size < 2 || self.seq_len < 2 => Err(Error::validation(
                "needle_index needs vocab_size >= 2 and seq_len >= 2",
            )),
            _ => Ok(()),
        }
    }

    /// Ground-truth label of a token sequence.
    pub fn label_for(&self, tokens: &[usize]) -> usize {
        match self.kind {
            TaskKind::SeqSumMod => tokens.iter().sum::<usize>() % self.modulus,
            TaskKind::NeedleIndex => {
                let marker = self.vocab_size - 1;
                tokens.iter().position(|&t| t == marker).unwrap_or(0)
            }
        }
    }

    fn stream_size(&self, stream: Stream) -> usize {
        match stream {
            Stream::Train => self.train_size,
            Stream::Eval | Stream::Probe => self.eval_size,
        }
    }

    /// Sample `index` of `stream` (taken modulo the stream size).
    pub fn sample(&self, stream: Stream, index: usize) -> (Vec<usize>, usize) {
        let index = index % self.stream_size(stream);
        let mut rng = rng_for(self.seed, &[stream.id(), index as u64]);
        let tokens: Vec<usize> = match self.kind {
            TaskKind::SeqSumMod => (0..self.seq_len).map(|_| rng.random_range(0..self.vocab_size)).collect(),
            TaskKind::NeedleIndex => {
                let marker = self.vocab_size - 1;
                let pos = rng.random_range(0..self.seq_len);
                (0..self.seq_len)
                    .map(|i| if i == pos { marker } else { rng.random_range(0..marker) })
                    .collect()
            }
        };
        let label = self.label_for(&tokens);
        (tokens, label)
    }
}

/// Batch number `counter` of `stream`: samples `counter·batch_size ..` in order,
/// wrapping around the finite stream.
pub fn generate_batch(task: &TaskSpec, batch_size: usize, stream: Stream, counter: usize) -> Batch {
    (0..batch_size)
        .map(|j| task.sample(stream, counter * batch_size + j))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_mod_labels() {
        let t = TaskSpec::seq_sum_mod(16, 3, 5, 0);
        assert_eq!(t.label_for(&[1, 2, 3]), 1);
        assert_eq!(t.label_for(&[0, 0, 0]), 0);
        assert_eq!(t.num_classes(), 5);
    }

    #[test]
    fn needle_labels_point_at_the_marker() {
        let t = TaskSpec::needle_index(6, 8, 4);
        assert_eq!(t.num_classes(), 8);
        let (tokens, labels) = generate_batch(&t, 50, Stream::Train, 0);
        for (seq, &label) in tokens.iter().zip(&labels) {
            assert_eq!(seq.iter().filter(|&&x| x == 5).count(), 1);
            assert_eq!(seq[label], 5);
        }
    }

    #[test]
    fn batches_are_deterministic_and_streams_differ() {
        let t = TaskSpec::seq_sum_mod(16, 16, 8, 9);
        let a = generate_batch(&t, 4, Stream::Train, 3);
        assert_eq!(a, generate_batch(&t, 4, Stream::Train, 3));
        assert_ne!(a, generate_batch(&t, 4, Stream::Eval, 3));
        assert_ne!(a, generate_batch(&t, 4, Stream::Train, 4));
        for (seq, &l) in a.0.iter().zip(&a.1) {
            assert!(seq.iter().all(|&x| x < 16));
            assert_eq!(l, seq.iter().sum::<usize>() % 8);
        }
    }

    #[test]
    fn finite_stream_wraps() {
        let mut t = TaskSpec::seq_sum_mod(4, 3, 2, 1);
        t.train_size = 5;
        assert_eq!(t.sample(Stream::Train, 7), t.sample(Stream::Train, 2));
    }

    #[test]
    fn validation() {
        assert!(TaskSpec::seq_sum_mod(4, 3, 1, 0).validate().is_err());
        assert!(TaskSpec::needle_index(1, 3, 0).validate().is_err());
        assert!(TaskSpec::needle_index(3, 3, 0).validate().is_ok());
    }
}
