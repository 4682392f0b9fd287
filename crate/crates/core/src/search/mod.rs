//! Decoding as search over the prefix graph of an oracle: every node is a
//! token prefix, every edge weighs `-ln p(token | prompt, prefix)`.
//!
//! All strategies score with the untempered oracle distribution, so a
//! hypothesis' `log_prob` always equals the oracle's sequence likelihood.
//! Ties are broken by score, then by lexicographic token ids.

mod candidates;
mod distribution;
mod oracle;
mod speculative;

pub use candidates::{
    generate_candidates, read_candidates, sample_views, write_candidates, Candidate, CandidateDump, CandidateSet,
    GenerateParams, GenerateStats,
};
pub use distribution::{entropy, temperature_reshape, TokenDistribution, MIN_TEMPERATURE};
pub use oracle::{
    oracle_from_spec, Conditioned, HashedOracle, IpcOracle, LikelihoodOracle, MemorizerOracle, OracleError,
    TransitionOracle, UniformOracle,
};
pub use speculative::{
    build_transition_matrix, speculative_decode, speculative_propose, symbol, symbol_token, SpeculativeStats,
    TokenTree, TransitionMatrix, TreeNode, ALPHABET,
};

use std::cmp::Ordering;
use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{prompt_grids, Token};

/// Default generation budget per hypothesis.
pub const DEFAULT_MAX_NEW: usize = 970;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("frontier exceeded {cap} nodes")]
    FrontierExplosion { cap: usize },
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// A decoded token sequence. `terminated` is false when the budget ran out
/// before end-of-sequence; such hypotheses are kept but flagged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<Token>,
    pub log_prob: f64,
    pub terminated: bool,
}

impl Hypothesis {
    fn push(&mut self, t: Token, lp: f64) {
        self.tokens.push(t);
        self.log_prob += lp;
        self.terminated = t == Token::EOS;
    }

    fn child(&self, t: Token, lp: f64) -> Self {
        let mut h = Hypothesis {
            tokens: Vec::with_capacity(self.tokens.len() + 1),
            log_prob: self.log_prob,
            terminated: false,
        };
        h.tokens.extend_from_slice(&self.tokens);
        h.push(t, lp);
        h
    }
}

/// Score descending, then tokens ascending.
pub fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Most likely next token at every step, lowest id on ties.
pub fn greedy_decode<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    max_new: usize,
) -> Result<Hypothesis, SearchError> {
    let ctx = oracle.condition(prompt)?;
    let mut h = Hypothesis::default();
    while h.tokens.len() < max_new && !h.terminated {
        let d = ctx.next(&h.tokens)?;
        let t = d.argmax();
        h.push(t, d.log_prob(t));
    }
    Ok(h)
}

/// Ancestral sampling from the temperature-reshaped distribution.
pub fn sample_decode<O: LikelihoodOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    temperature: f64,
    max_new: usize,
    rng: &mut R,
) -> Result<Hypothesis, SearchError> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(SearchError::NonPositiveTemperature(temperature));
    }
    let ctx = oracle.condition(prompt)?;
    let mut h = Hypothesis::default();
    while h.tokens.len() < max_new && !h.terminated {
        let d = ctx.next(&h.tokens)?;
        let t = d.reshape(temperature)?.sample(rng);
        h.push(t, d.log_prob(t));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamParams {
    pub beams: usize,
    pub num_return: usize,
    pub max_new: usize,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            beams: 10,
            num_return: 10,
            max_new: DEFAULT_MAX_NEW,
        }
    }
}

/// Keeps the best `beams` prefixes per step. Prefixes that end with
/// end-of-sequence retire to a pool; prefixes alive at `max_new` join the
/// pool unterminated. Returns the best `num_return` of the pool.
pub fn beam_search<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    p: &BeamParams,
) -> Result<Vec<Hypothesis>, SearchError> {
    if p.beams == 0 || p.num_return == 0 || p.num_return > p.beams {
        return Err(SearchError::BadParams(format!(
            "need 1 <= num_return ({}) <= beams ({})",
            p.num_return, p.beams
        )));
    }
    let ctx = oracle.condition(prompt)?;
    let mut alive = vec![Hypothesis::default()];
    let mut pool: Vec<Hypothesis> = Vec::new();
    for _ in 0..p.max_new {
        let mut next = Vec::new();
        for h in &alive {
            for (t, prob) in ctx.next(&h.tokens)?.ranked() {
                next.push(h.child(t, prob.ln()));
            }
        }
        next.sort_by(rank_order);
        next.truncate(p.beams);
        alive.clear();
        for h in next {
            if h.terminated {
                pool.push(h);
            } else {
                alive.push(h);
            }
        }
        if alive.is_empty() {
            break;
        }
        // Scores only decrease, so a full pool strictly ahead of every live
        // beam can no longer change.
        if pool.len() >= p.num_return {
            pool.sort_by(rank_order);
            let worst_kept = pool[p.num_return - 1].log_prob;
            if alive.iter().all(|h| h.log_prob < worst_kept) {
                alive.clear();
                break;
            }
        }
    }
    pool.extend(alive);
    pool.sort_by(rank_order);
    pool.truncate(p.num_return);
    Ok(pool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalOrder {
    Bfs,
    Dfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    /// Minimum cumulative probability of a kept prefix.
    pub threshold: f64,
    pub order: TraversalOrder,
    /// Expanded nodes allowed before giving up.
    pub node_cap: usize,
    pub max_new: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            threshold: 0.1,
            order: TraversalOrder::Dfs,
            node_cap: 100_000,
            max_new: DEFAULT_MAX_NEW,
        }
    }
}

/// Every terminated sequence whose probability stays at or above the
/// threshold, in BFS or DFS (pre-order, likelier child first) emission order.
pub fn threshold_search<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    p: &ThresholdParams,
) -> Result<Vec<Hypothesis>, SearchError> {
    if !(p.threshold > 0.0 && p.threshold < 1.0) {
        return Err(SearchError::BadParams(format!("threshold {} outside (0, 1)", p.threshold)));
    }
    let ctx = oracle.condition(prompt)?;
    let floor = p.threshold.ln();
    let mut frontier: VecDeque<Hypothesis> = VecDeque::from([Hypothesis::default()]);
    let mut out = Vec::new();
    let mut expanded = 0;
    loop {
        let node = match p.order {
            TraversalOrder::Bfs => frontier.pop_front(),
            TraversalOrder::Dfs => frontier.pop_back(),
        };
        let Some(node) = node else { break };
        expanded += 1;
        if expanded > p.node_cap {
            return Err(SearchError::FrontierExplosion { cap: p.node_cap });
        }
        let mut children = Vec::new();
        for (t, prob) in ctx.next(&node.tokens)?.ranked() {
            let c = node.child(t, prob.ln());
            if c.log_prob < floor {
                // ranked() is sorted, the rest are no likelier
                break;
            }
            if c.terminated {
                out.push(c);
            } else if c.tokens.len() < p.max_new {
                children.push(c);
            }
        }
        match p.order {
            TraversalOrder::Bfs => frontier.extend(children),
            TraversalOrder::Dfs => frontier.extend(children.into_iter().rev()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    /// Branch when the step entropy (nats) is at least this.
    pub alpha: f64,
    /// Children spawned at an uncertain step, counting the greedy one.
    pub top_k_branch: usize,
    /// Cap on the total number of hypotheses.
    pub max_branches: usize,
    pub max_new: usize,
}

impl Default for EntropyParams {
    fn default() -> Self {
        EntropyParams {
            alpha: 0.3,
            top_k_branch: 2,
            max_branches: 10,
            max_new: DEFAULT_MAX_NEW,
        }
    }
}

/// Greedy while the oracle is confident, branching at uncertain steps.
pub fn entropy_branch_decode<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    p: &EntropyParams,
) -> Result<Vec<Hypothesis>, SearchError> {
    if p.alpha.is_nan() || p.alpha <= 0.0 || p.top_k_branch == 0 || p.max_branches == 0 {
        return Err(SearchError::BadParams("alpha, top_k_branch and max_branches must be positive".into()));
    }
    let ctx = oracle.condition(prompt)?;
    let mut stack = vec![Hypothesis::default()];
    let mut spawned = 1;
    let mut done = Vec::new();
    while let Some(mut h) = stack.pop() {
        while h.tokens.len() < p.max_new && !h.terminated {
            let d = ctx.next(&h.tokens)?;
            let ranked = d.ranked();
            if d.entropy() >= p.alpha && spawned < p.max_branches {
                for &(t, prob) in ranked.iter().skip(1).take(p.top_k_branch - 1).rev() {
                    if spawned == p.max_branches {
                        break;
                    }
                    stack.push(h.child(t, prob.ln()));
                    spawned += 1;
                }
            }
            let (t, prob) = ranked[0];
            h.push(t, prob.ln());
        }
        done.push(h);
    }
    done.sort_by(rank_order);
    Ok(done)
}

/// Decoding strategy plus its parameters, as configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Sample { temperature: f64, n: usize },
    Beam { beams: usize, num_return: usize },
    Threshold { threshold: f64, order: TraversalOrder, node_cap: usize },
    Entropy { alpha: f64, top_k_branch: usize, max_branches: usize },
    /// Greedy output, drafted by a transition matrix of the prompt grids.
    Speculative { k: usize, depth: usize },
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Beam {
            beams: 10,
            num_return: 10,
        }
    }
}

/// Runs one strategy on one prompt.
pub fn decode<O: LikelihoodOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    prompt: &[Token],
    strategy: &Strategy,
    max_new: usize,
    rng: &mut R,
) -> Result<Vec<Hypothesis>, SearchError> {
    match *strategy {
        Strategy::Greedy => Ok(vec![greedy_decode(oracle, prompt, max_new)?]),
        Strategy::Sample { temperature, n } => (0..n)
            .map(|_| sample_decode(oracle, prompt, temperature, max_new, rng))
            .collect(),
        Strategy::Beam { beams, num_return } => beam_search(
            oracle,
            prompt,
            &BeamParams {
                beams,
                num_return,
                max_new,
            },
        ),
        Strategy::Threshold {
            threshold,
            order,
            node_cap,
        } => threshold_search(
            oracle,
            prompt,
            &ThresholdParams {
                threshold,
                order,
                node_cap,
                max_new,
            },
        ),
        Strategy::Entropy {
            alpha,
            top_k_branch,
            max_branches,
        } => entropy_branch_decode(
            oracle,
            prompt,
            &EntropyParams {
                alpha,
                top_k_branch,
                max_branches,
                max_new,
            },
        ),
        Strategy::Speculative { k, depth } => {
            let m = TransitionMatrix::from_grids(&prompt_grids(prompt));
            Ok(vec![speculative_decode(oracle, &m, prompt, k, depth, max_new)?.0])
        }
    }
}
