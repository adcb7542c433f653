//! The sealed victim. A [`BlackBoxOracle`] owns the trained teacher and
//! exposes nothing but prediction queries, a response-mode switch, and a
//! sample counter. There is deliberately no way to reach the wrapped
//! weights, gradients, or architecture through this type: attack code gets
//! labels for samples and pays for every row it sends.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::{argmax, Classifier};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseMode {
    /// Full softmax distribution per sample.
    FullProbabilities,
    /// One-hot vector at the predicted class (ties to the lowest index).
    TopLabel,
}

impl ResponseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseMode::FullProbabilities => "full-probabilities",
            ResponseMode::TopLabel => "top-1",
        }
    }

    pub fn from_str(s: &str) -> Result<ResponseMode> {
        match s {
            "full-probabilities" => Ok(ResponseMode::FullProbabilities),
            "top-1" => Ok(ResponseMode::TopLabel),
            other => Err(Error::invalid(format!("unknown response mode '{other}'"))),
        }
    }
}

#[derive(Debug)]
pub struct BlackBoxOracle {
    teacher: Classifier,
    mode: ResponseMode,
    calls: AtomicU64,
}

impl BlackBoxOracle {
    /// Seals a trained classifier. The oracle takes ownership; afterwards
    /// the only access path is [`BlackBoxOracle::query`].
    pub fn new(teacher: Classifier, mode: ResponseMode) -> Self {
        BlackBoxOracle {
            teacher,
            mode,
            calls: AtomicU64::new(0),
        }
    }

    /// Labels a `b×d` batch. Each row costs one unit of query budget; the
    /// counter moves if and only if predictions are produced for the batch.
    pub fn query(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.cols() != self.teacher.input_dim() {
            return Err(Error::shape(format!(
                "query has {} features, oracle expects {}",
                batch.cols(),
                self.teacher.input_dim()
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::invalid("empty query batch"));
        }
        self.calls.fetch_add(batch.rows() as u64, Ordering::SeqCst);
        let mut probs = self.teacher.forward(batch)?;
        if self.mode == ResponseMode::TopLabel {
            for r in 0..probs.rows() {
                let best = argmax(probs.row(r));
                let row = probs.row_mut(r);
                row.fill(0.0);
                row[best] = 1.0;
            }
        }
        Ok(probs)
    }

    /// Total number of samples labelled so far.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn mode(&self) -> ResponseMode {
        self.mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn toy_teacher() -> Classifier {
        // Zero weights and fixed biases: predicts softmax(biases) for every
        // input, argmax at class 1.
        let weights = vec![Tensor::zeros(vec![4, 3])];
        let biases = vec![Tensor::vector(vec![0.1, 0.3, 0.2]).unwrap()];
        Classifier::from_parts(vec![4, 3], weights, biases)
    }

    #[test]
    fn counter_tracks_rows_across_queries() {
        let oracle = BlackBoxOracle::new(toy_teacher(), ResponseMode::FullProbabilities);
        assert_eq!(oracle.call_count(), 0);
        let batch = Tensor::zeros(vec![3, 4]);
        oracle.query(&batch).unwrap();
        assert_eq!(oracle.call_count(), 3);
        oracle.query(&Tensor::zeros(vec![5, 4])).unwrap();
        assert_eq!(oracle.call_count(), 8);
    }

    #[test]
    fn rejected_query_does_not_consume_budget() {
        let oracle = BlackBoxOracle::new(toy_teacher(), ResponseMode::FullProbabilities);
        assert!(oracle.query(&Tensor::zeros(vec![2, 7])).is_err());
        assert!(oracle.query(&Tensor::zeros(vec![0, 4])).is_err());
        assert_eq!(oracle.call_count(), 0);
    }

    #[test]
    fn full_mode_returns_distributions() {
        let oracle = BlackBoxOracle::new(toy_teacher(), ResponseMode::FullProbabilities);
        let out = oracle.query(&Tensor::zeros(vec![2, 4])).unwrap();
        for r in 0..2 {
            let sum: f64 = out.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.row(r).iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn top_label_mode_returns_one_hot() {
        let oracle = BlackBoxOracle::new(toy_teacher(), ResponseMode::TopLabel);
        let out = oracle.query(&Tensor::zeros(vec![2, 4])).unwrap();
        for r in 0..2 {
            assert_eq!(out.row(r), &[0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn response_mode_names_round_trip() {
        for mode in [ResponseMode::FullProbabilities, ResponseMode::TopLabel] {
            assert_eq!(ResponseMode::from_str(mode.as_str()).unwrap(), mode);
        }
        assert!(ResponseMode::from_str("argmax").is_err());
    }

    /// The sealed surface is part of the threat model: if someone adds a
    /// public accessor to this module, the attack could cheat. Scan the
    /// source and pin the exact set of public functions and fields.
    #[test]
    fn oracle_surface_stays_sealed() {
        let src = include_str!("oracle.rs");
        let body: String = src
            .lines()
            .take_while(|l| !l.contains("#[cfg(test)]"))
            .collect::<Vec<_>>()
            .join("\n");
        let mut public_fns: Vec<&str> = Vec::new();
        for line in body.lines() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix("pub fn ") {
                let name = rest.split(['(', '<']).next().unwrap();
                public_fns.push(name);
            }
            // No public fields anywhere in this module.
            assert!(
                !(t.starts_with("pub ") && t.contains(':') && t.ends_with(',')),
                "public field leaked: {t}"
            );
        }
        public_fns.sort_unstable();
        assert_eq!(
            public_fns,
            vec!["as_str", "call_count", "from_str", "mode", "new", "query"],
            "unexpected public surface"
        );
    }
}
