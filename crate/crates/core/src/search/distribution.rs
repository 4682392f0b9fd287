use std::cmp::Ordering;

use crate::encoding::{Token, VOCAB_SIZE};

use super::SearchError;

/// Probabilities indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl TokenDistribution {
    /// Checks non-negativity and that the mass sums to one.
    pub fn new(probs: Vec<f64>) -> Result<Self, SearchError> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(SearchError::BadDistribution("negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(SearchError::BadDistribution(format!("mass sums to {sum}")));
        }
        Ok(TokenDistribution { probs })
    }

    /// Normalizes non-negative weights. Panics if they are all zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        assert!(sum > 0.0 && sum.is_finite(), "weights must have positive finite mass");
        for w in &mut weights {
            *w /= sum;
        }
        TokenDistribution { probs: weights }
    }

    pub fn one_hot(t: Token) -> Self {
        let mut probs = vec![0.0; VOCAB_SIZE];
        probs[t.id()] = 1.0;
        TokenDistribution { probs }
    }

    pub fn uniform() -> Self {
        TokenDistribution {
            probs: vec![1.0 / VOCAB_SIZE as f64; VOCAB_SIZE],
        }
    }

    pub fn uniform_over(tokens: &[Token]) -> Self {
        let mut w = vec![0.0; VOCAB_SIZE];
        for t in tokens {
            w[t.id()] = 1.0;
        }
        Self::from_weights(w)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, t: Token) -> f64 {
        self.probs.get(t.id()).copied().unwrap_or(0.0)
    }

    pub fn log_prob(&self, t: Token) -> f64 {
        self.prob(t).ln()
    }

    /// Most likely token, lowest id on ties.
    pub fn argmax(&self) -> Token {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        Token::from_id(best).expect("index within vocabulary")
    }

    /// Tokens with positive mass, most likely first, ties by id.
    pub fn ranked(&self) -> Vec<(Token, f64)> {
        let mut v: Vec<(Token, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (Token::from_id(i).expect("index within vocabulary"), p))
            .collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        v
    }

    pub fn top_k(&self, k: usize) -> Vec<(Token, f64)> {
        let mut v = self.ranked();
        v.truncate(k);
        v
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Token {
        let mut u: f64 = rng.gen();
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
                if u < p {
                    return Token::from_id(i).expect("index within vocabulary");
                }
                u -= p;
            }
        }
        Token::from_id(last).expect("index within vocabulary")
    }
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Below this temperature the reshaped distribution is the argmax one-hot.
pub const MIN_TEMPERATURE: f64 = 1e-6;

/// `softmax(ln p / tau)`. Zero entries stay zero.
pub fn temperature_reshape(p: &[f64], tau: f64) -> Result<Vec<f64>, SearchError> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(SearchError::NonPositiveTemperature(tau));
    }
    if tau < MIN_TEMPERATURE {
        let mut best = 0;
        for (i, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = i;
            }
        }
        let mut out = vec![0.0; p.len()];
        out[best] = 1.0;
        return Ok(out);
    }
    let logs: Vec<f64> = p.iter().map(|&x| if x > 0.0 { x.ln() / tau } else { f64::NEG_INFINITY }).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

impl TokenDistribution {
    pub fn reshape(&self, tau: f64) -> Result<Self, SearchError> {
        Ok(TokenDistribution {
            probs: temperature_reshape(&self.probs, tau)?,
        })
    }
}
