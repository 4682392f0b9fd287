//! Drafting with a second-order transition matrix over the 12 grid symbols
//! (ten colors, start_row, end_row) and exact greedy verification.

use serde::{Deserialize, Serialize};

use super::oracle::{Conditioned, LikelihoodOracle};
use super::{Hypothesis, SearchError};
use crate::encoding::{serialize_grid, Token, Traversal};
use crate::grid::Grid;
use crate::task::Task;

pub const ALPHABET: usize = 12;
pub const ROWS: usize = ALPHABET * ALPHABET;
pub const SMOOTHING: f64 = 1e-3;

/// Alphabet index of a grid symbol: colors 0..=9, start_row 10, end_row 11.
pub fn symbol(t: Token) -> Option<usize> {
    if let Some(c) = t.as_color() {
        Some(c as usize)
    } else if t == Token::START_ROW {
        Some(10)
    } else if t == Token::END_ROW {
        Some(11)
    } else {
        None
    }
}

pub fn symbol_token(s: usize) -> Token {
    match s {
        0..=9 => Token::color(s as u8),
        10 => Token::START_ROW,
        11 => Token::END_ROW,
        _ => panic!("symbol {s} outside the 12-symbol alphabet"),
    }
}

/// Counts of `(t[i-1], t[i]) -> t[i+1]` and the row-normalized
/// probabilities. Row `12 * a + b` holds the pair `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    counts: Vec<u32>,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_grids<'a>(grids: impl IntoIterator<Item = &'a Grid>) -> Self {
        let mut counts = vec![0u32; ROWS * ALPHABET];
        for g in grids {
            let seq: Vec<usize> = serialize_grid(g, Traversal::RowByRow)
                .into_iter()
                .map(|t| symbol(t).expect("grid bodies only hold grid symbols"))
                .collect();
            for w in seq.windows(3) {
                counts[(w[0] * ALPHABET + w[1]) * ALPHABET + w[2]] += 1;
            }
        }
        let mut probs = vec![0.0; ROWS * ALPHABET];
        for r in 0..ROWS {
            let row = &counts[r * ALPHABET..(r + 1) * ALPHABET];
            let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>() + SMOOTHING * ALPHABET as f64;
            for (c, &n) in row.iter().enumerate() {
                probs[r * ALPHABET + c] = (n as f64 + SMOOTHING) / total;
            }
        }
        TransitionMatrix { counts, probs }
    }

    /// Uniform rows; the least informative draft model.
    pub fn uniform() -> Self {
        Self::from_grids(std::iter::empty())
    }

    pub fn shape(&self) -> (usize, usize) {
        (ROWS, ALPHABET)
    }

    pub fn count(&self, a: usize, b: usize, next: usize) -> u32 {
        self.counts[(a * ALPHABET + b) * ALPHABET + next]
    }

    pub fn row(&self, a: usize, b: usize) -> &[f64] {
        let r = a * ALPHABET + b;
        &self.probs[r * ALPHABET..(r + 1) * ALPHABET]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.probs.chunks(ALPHABET).map(|r| r.iter().sum()).collect()
    }

    /// Next-symbol candidates after `(a, b)`, most likely first, ties by
    /// the lower vocabulary id.
    pub fn ranked(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.row(a, b).iter().copied().enumerate().collect();
        v.sort_by(|x, y| y.1.total_cmp(&x.1).then(symbol_token(x.0).cmp(&symbol_token(y.0))));
        v
    }
}

/// Matrix from every grid of a task and of its augmented views.
pub fn build_transition_matrix(task: &Task, views: &[Task]) -> TransitionMatrix {
    TransitionMatrix::from_grids(std::iter::once(task).chain(views).flat_map(|t| t.grids()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub token: Token,
    pub prob: f64,
    /// Index into the previous level; `None` on the first level.
    pub parent: Option<usize>,
}

/// Draft tree: level `d` holds `k^(d+1)` nodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenTree {
    pub levels: Vec<Vec<TreeNode>>,
}

impl TokenTree {
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Children of node `i` of `level` (or of the root when `level` is None).
    pub fn children(&self, level: Option<usize>, i: usize) -> impl Iterator<Item = (usize, &TreeNode)> {
        let (depth, parent) = match level {
            None => (0, None),
            Some(l) => (l + 1, Some(i)),
        };
        self.levels
            .get(depth)
            .into_iter()
            .flatten()
            .enumerate()
            .filter(move |(_, n)| n.parent == parent)
    }

    /// Every root-to-leaf token path, in tree order.
    pub fn paths(&self) -> Vec<Vec<Token>> {
        let Some(last) = self.levels.last() else {
            return vec![];
        };
        (0..last.len())
            .map(|mut i| {
                let mut path = Vec::with_capacity(self.levels.len());
                for level in self.levels.iter().rev() {
                    path.push(level[i].token);
                    i = level[i].parent.unwrap_or(0);
                }
                path.reverse();
                path
            })
            .collect()
    }
}

/// Expands the top `k` continuations per node for `depth` levels, starting
/// from the last two emitted symbols.
pub fn speculative_propose(m: &TransitionMatrix, last_pair: (Token, Token), k: usize, depth: usize) -> TokenTree {
    let (Some(a0), Some(b0)) = (symbol(last_pair.0), symbol(last_pair.1)) else {
        return TokenTree::default();
    };
    let k = k.clamp(1, ALPHABET);
    let mut levels: Vec<Vec<TreeNode>> = Vec::with_capacity(depth);
    // (pair context, parent index) of every node on the frontier
    let mut frontier: Vec<((usize, usize), Option<usize>)> = vec![((a0, b0), None)];
    for _ in 0..depth {
        let mut level = Vec::with_capacity(frontier.len() * k);
        let mut next = Vec::with_capacity(frontier.len() * k);
        for &((a, b), parent) in &frontier {
            for (s, p) in m.ranked(a, b).into_iter().take(k) {
                next.push(((b, s), Some(level.len())));
                level.push(TreeNode {
                    token: symbol_token(s),
                    prob: p,
                    parent,
                });
            }
        }
        levels.push(level);
        frontier = next;
    }
    TokenTree { levels }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpeculativeStats {
    /// Positions checked against a draft.
    pub proposed: usize,
    /// Positions where the oracle's choice was among the drafted children.
    pub accepted: usize,
    /// Verification passes; one per draft tree or undrafted step.
    pub rounds: usize,
    pub tokens: usize,
}

impl SpeculativeStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Tokens emitted per verification pass.
    pub fn speedup(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.tokens as f64 / self.rounds as f64
        }
    }
}

/// Greedy decoding that drafts with `m` and keeps only what the oracle
/// itself would have chosen, so the output equals [`super::greedy_decode`].
pub fn speculative_decode<O: LikelihoodOracle + ?Sized>(
    oracle: &O,
    m: &TransitionMatrix,
    prompt: &[Token],
    k: usize,
    depth: usize,
    max_new: usize,
) -> Result<(Hypothesis, SpeculativeStats), SearchError> {
    let ctx = oracle.condition(prompt)?;
    let mut h = Hypothesis::default();
    let mut stats = SpeculativeStats::default();
    let step = |h: &mut Hypothesis, ctx: &dyn Conditioned| -> Result<Token, SearchError> {
        let d = ctx.next(&h.tokens)?;
        let t = d.argmax();
        h.push(t, d.log_prob(t));
        Ok(t)
    };
    while h.tokens.len() < max_new && !h.terminated {
        stats.rounds += 1;
        let n = h.tokens.len();
        let tree = if n >= 2 {
            speculative_propose(m, (h.tokens[n - 2], h.tokens[n - 1]), k, depth)
        } else {
            TokenTree::default()
        };
        if tree.levels.is_empty() {
            step(&mut h, &*ctx)?;
            stats.tokens += 1;
            continue;
        }
        let mut at: Option<(usize, usize)> = None;
        for _ in 0..tree.levels.len() {
            if h.tokens.len() >= max_new || h.terminated {
                break;
            }
            let t = step(&mut h, &*ctx)?;
            stats.tokens += 1;
            stats.proposed += 1;
            let hit = tree.children(at.map(|a| a.0), at.map_or(0, |a| a.1)).find(|(_, n)| n.token == t);
            match hit {
                Some((i, _)) => {
                    stats.accepted += 1;
                    at = Some((at.map_or(0, |a| a.0 + 1), i));
                }
                None => break,
            }
        }
    }
    Ok((h, stats))
}
