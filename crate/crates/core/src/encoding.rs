//! The 125-token vocabulary and grid/task serialization.
//!
//! Token ids follow the order of the vocabulary listing: eight structural
//! delimiters, ten colors, end-of-sequence, padding, two traversal markers,
//! three denoising mode markers and one hundred sentinel tokens.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError, MAX_SIDE};
use crate::task::Task;

pub const VOCAB_SIZE: usize = 125;
pub const NUM_EXTRA_IDS: usize = 100;
/// Default prompt budget in tokens.
pub const DEFAULT_TOKEN_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(u8);

impl Token {
    pub const START_EXAMPLE: Token = Token(0);
    pub const END_EXAMPLE: Token = Token(1);
    pub const START_INPUT: Token = Token(2);
    pub const END_INPUT: Token = Token(3);
    pub const START_OUTPUT: Token = Token(4);
    pub const END_OUTPUT: Token = Token(5);
    pub const START_ROW: Token = Token(6);
    pub const END_ROW: Token = Token(7);
    const COLOR_BASE: u8 = 8;
    pub const EOS: Token = Token(18);
    pub const PAD: Token = Token(19);
    pub const ROW_BY_ROW: Token = Token(20);
    pub const SNAKE: Token = Token(21);
    pub const TASK_ID_S: Token = Token(22);
    pub const TASK_ID_X: Token = Token(23);
    pub const TASK_ID_R: Token = Token(24);
    const EXTRA_BASE: u8 = 25;

    pub fn from_id(id: usize) -> Option<Token> {
        (id < VOCAB_SIZE).then_some(Token(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn color(c: u8) -> Token {
        assert!(c < 10, "color {c} out of range");
        Token(Self::COLOR_BASE + c)
    }

    pub fn as_color(self) -> Option<u8> {
        (Self::COLOR_BASE..Self::COLOR_BASE + 10)
            .contains(&self.0)
            .then(|| self.0 - Self::COLOR_BASE)
    }

    pub fn extra_id(k: usize) -> Token {
        assert!(k < NUM_EXTRA_IDS, "extra_id {k} out of range");
        Token(Self::EXTRA_BASE + k as u8)
    }

    pub fn as_extra_id(self) -> Option<usize> {
        (self.0 >= Self::EXTRA_BASE).then(|| (self.0 - Self::EXTRA_BASE) as usize)
    }

    pub fn name(self) -> &'static str {
        &vocab_names()[self.id()]
    }

    /// Rendering used in printed sequences, e.g. `<|start_row|>` or `</s>`.
    pub fn surface(self) -> String {
        match self {
            Token::EOS => "</s>".into(),
            Token::PAD => "<pad>".into(),
            t if t.0 >= Self::TASK_ID_S.0 => format!("<{}>", t.name()),
            t => format!("<|{}|>", t.name()),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn vocab_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = [
            "start_example",
            "end_example",
            "start_input",
            "end_input",
            "start_output",
            "end_output",
            "start_row",
            "end_row",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend((0..10).map(|c| format!("color_{c}")));
        names.extend(["eos", "pad", "row_by_row", "snake", "task_id_S", "task_id_X", "task_id_R"].map(String::from));
        names.extend((0..NUM_EXTRA_IDS).map(|k| format!("extra_id_{k}")));
        names
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("unknown token name {0:?}")]
    UnknownToken(String),
    #[error("row {row} has width {found}, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unexpected token {found} at position {position}")]
    BadDelimiters { position: usize, found: String },
    #[error("sequence contains no grid cells")]
    EmptyGrid,
    #[error("decoded grid of {height}x{width} exceeds {MAX_SIDE}x{MAX_SIDE}")]
    OversizeGrid { height: usize, width: usize },
    #[error("prompt needs {len} tokens, limit is {limit}")]
    PromptTooLong { len: usize, limit: usize },
    #[error("test index {index} out of range for {count} test pairs")]
    TestIndexOutOfRange { index: usize, count: usize },
    #[error("{requested} masked spans requested, at most {NUM_EXTRA_IDS} are available")]
    TooManySpans { requested: usize },
    #[error("mask ratio {0} outside (0, 1)")]
    BadMaskRatio(f64),
    #[error("task has no maskable grid cells")]
    NothingToMask,
}

/// Full vocabulary in id order.
pub fn vocabulary() -> Vec<Token> {
    (0..VOCAB_SIZE).map(|i| Token(i as u8)).collect()
}

pub fn lookup(name: &str) -> Result<Token, EncodingError> {
    vocab_names()
        .iter()
        .position(|n| n == name)
        .map(|i| Token(i as u8))
        .ok_or_else(|| EncodingError::UnknownToken(name.to_string()))
}

/// Token table for external tooling: one name per line, line index = id.
pub fn vocabulary_table() -> String {
    let mut out = String::new();
    for name in vocab_names() {
        out.push_str(name);
        out.push('\n');
    }
    out
}

pub fn parse_vocabulary_table(text: &str) -> Result<Vec<Token>, EncodingError> {
    text.lines().map(lookup).collect()
}

pub fn render(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.surface()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    #[default]
    RowByRow,
    Snake,
}

impl Traversal {
    pub fn marker(self) -> Token {
        match self {
            Traversal::RowByRow => Token::ROW_BY_ROW,
            Traversal::Snake => Token::SNAKE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Prompt,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub role: Role,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Number of tokens in a serialized grid body.
pub fn grid_token_count(g: &Grid) -> usize {
    g.height() * (g.width() + 2)
}

pub fn serialize_grid_into(g: &Grid, t: Traversal, out: &mut Vec<Token>) {
    for (r, row) in g.rows().enumerate() {
        if t == Traversal::Snake && r % 2 == 1 {
            out.push(Token::END_ROW);
            out.extend(row.iter().rev().map(|&c| Token::color(c)));
            out.push(Token::START_ROW);
        } else {
            out.push(Token::START_ROW);
            out.extend(row.iter().map(|&c| Token::color(c)));
            out.push(Token::END_ROW);
        }
    }
}

pub fn serialize_grid(g: &Grid, t: Traversal) -> Vec<Token> {
    let mut out = Vec::with_capacity(grid_token_count(g));
    serialize_grid_into(g, t, &mut out);
    out
}

fn bad(position: usize, found: Option<&Token>) -> EncodingError {
    EncodingError::BadDelimiters {
        position,
        found: found.map_or_else(|| "end of sequence".to_string(), |t| t.name().to_string()),
    }
}

/// Inverse of [`serialize_grid`]. The whole slice must be a grid body.
pub fn decode_grid(tokens: &[Token], t: Traversal) -> Result<Grid, EncodingError> {
    if tokens.is_empty() {
        return Err(EncodingError::EmptyGrid);
    }
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let reversed = t == Traversal::Snake && rows.len() % 2 == 1;
        let (open, close) = if reversed {
            (Token::END_ROW, Token::START_ROW)
        } else {
            (Token::START_ROW, Token::END_ROW)
        };
        if tokens[pos] != open {
            return Err(bad(pos, tokens.get(pos)));
        }
        pos += 1;
        let mut row = Vec::new();
        while let Some(c) = tokens.get(pos).and_then(|t| t.as_color()) {
            row.push(c);
            pos += 1;
        }
        if tokens.get(pos) != Some(&close) {
            return Err(bad(pos, tokens.get(pos)));
        }
        pos += 1;
        if reversed {
            row.reverse();
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(EncodingError::RaggedRows {
                    row: rows.len(),
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let height = rows.len();
    let width = rows[0].len();
    if width == 0 {
        return Err(EncodingError::EmptyGrid);
    }
    if height > MAX_SIDE || width > MAX_SIDE {
        return Err(EncodingError::OversizeGrid { height, width });
    }
    Grid::from_rows(&rows).map_err(|e| match e {
        GridError::Oversize { height, width } => EncodingError::OversizeGrid { height, width },
        _ => EncodingError::EmptyGrid,
    })
}

/// Decodes a generated target: `start_output <grid> end_output [eos]`.
pub fn decode_target(tokens: &[Token], t: Traversal) -> Result<Grid, EncodingError> {
    let mut body = tokens;
    if body.last() == Some(&Token::EOS) {
        body = &body[..body.len() - 1];
    }
    if body.first() != Some(&Token::START_OUTPUT) {
        return Err(bad(0, body.first()));
    }
    if body.last() != Some(&Token::END_OUTPUT) || body.len() < 2 {
        return Err(bad(body.len().saturating_sub(1), body.last()));
    }
    decode_grid(&body[1..body.len() - 1], t)
}

fn push_pair(out: &mut Vec<Token>, input: &Grid, output: Option<&Grid>, t: Traversal) {
    out.push(Token::START_EXAMPLE);
    out.push(Token::START_INPUT);
    serialize_grid_into(input, t, out);
    out.push(Token::END_INPUT);
    if let Some(o) = output {
        out.push(Token::START_OUTPUT);
        serialize_grid_into(o, t, out);
        out.push(Token::END_OUTPUT);
        out.push(Token::END_EXAMPLE);
    }
}

/// Target encoding of a grid: `start_output <grid> end_output eos`.
pub fn encode_target(g: &Grid, t: Traversal) -> Vec<Token> {
    let mut out = Vec::with_capacity(grid_token_count(g) + 3);
    out.push(Token::START_OUTPUT);
    serialize_grid_into(g, t, &mut out);
    out.push(Token::END_OUTPUT);
    out.push(Token::EOS);
    out
}

/// Prompt length predicted by construction: traversal marker, six delimiters
/// around every train pair, three around the test input.
pub fn prompt_token_count(task: &Task, test_index: usize) -> usize {
    1 + task
        .train
        .iter()
        .map(|p| 6 + grid_token_count(&p.input) + p.output.as_ref().map_or(0, grid_token_count))
        .sum::<usize>()
        + 3
        + grid_token_count(&task.test[test_index].input)
}

/// Size of the task in tokens used for queue ordering: the first prompt plus
/// every test input and known test output.
pub fn task_token_count(task: &Task) -> usize {
    prompt_token_count(task, 0)
        + task.test[1..]
            .iter()
            .map(|p| grid_token_count(&p.input))
            .sum::<usize>()
        + task
            .test
            .iter()
            .filter_map(|p| p.output.as_ref())
            .map(|o| grid_token_count(o) + 3)
            .sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTask {
    pub prompt: TokenSequence,
    pub target: Option<TokenSequence>,
}

pub fn encode_task(task: &Task, t: Traversal, test_index: usize) -> Result<EncodedTask, EncodingError> {
    encode_task_with_limit(task, t, test_index, DEFAULT_TOKEN_LIMIT)
}

pub fn encode_task_with_limit(
    task: &Task,
    t: Traversal,
    test_index: usize,
    limit: usize,
) -> Result<EncodedTask, EncodingError> {
    let test = task.test.get(test_index).ok_or(EncodingError::TestIndexOutOfRange {
        index: test_index,
        count: task.test.len(),
    })?;
    let len = prompt_token_count(task, test_index);
    if len > limit {
        return Err(EncodingError::PromptTooLong { len, limit });
    }
    let mut tokens = Vec::with_capacity(len);
    tokens.push(t.marker());
    for p in &task.train {
        push_pair(&mut tokens, &p.input, p.output.as_ref(), t);
    }
    push_pair(&mut tokens, &test.input, None, t);
    let target = test.output.as_ref().map(|o| TokenSequence {
        tokens: encode_target(o, t),
        role: Role::Target,
    });
    Ok(EncodedTask {
        prompt: TokenSequence {
            tokens,
            role: Role::Prompt,
        },
        target,
    })
}

fn is_grid_body(t: Token) -> bool {
    t == Token::START_ROW || t == Token::END_ROW || t.as_color().is_some()
}

/// Grids of a row-by-row prompt, in order of appearance.
pub fn prompt_grids(prompt: &[Token]) -> Vec<Grid> {
    let mut grids = Vec::new();
    let mut i = 0;
    while i < prompt.len() {
        if prompt[i] == Token::START_ROW {
            let start = i;
            while i < prompt.len() && is_grid_body(prompt[i]) {
                i += 1;
            }
            if let Ok(g) = decode_grid(&prompt[start..i], Traversal::RowByRow) {
                grids.push(g);
            }
        } else {
            i += 1;
        }
    }
    grids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ul2Mode {
    /// One suffix span.
    S,
    /// Few long spans.
    X,
    /// Many short spans.
    R,
}

impl Ul2Mode {
    pub fn marker(self) -> Token {
        match self {
            Ul2Mode::S => Token::TASK_ID_S,
            Ul2Mode::X => Token::TASK_ID_X,
            Ul2Mode::R => Token::TASK_ID_R,
        }
    }

    pub fn default_mean_span(self) -> f64 {
        match self {
            Ul2Mode::S => f64::INFINITY,
            Ul2Mode::X => 8.0,
            Ul2Mode::R => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ul2Example {
    pub mode: Ul2Mode,
    pub masked_prompt: TokenSequence,
    pub target: TokenSequence,
    pub mask_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ul2Params {
    pub mode: Ul2Mode,
    pub mask_ratio: f64,
    /// Mean span length; ignored for [`Ul2Mode::S`].
    pub mean_span: f64,
}

impl Ul2Params {
    pub fn new(mode: Ul2Mode, mask_ratio: f64) -> Self {
        Ul2Params {
            mode,
            mask_ratio,
            mean_span: mode.default_mean_span(),
        }
    }
}

/// Unmasked denoising body: mode marker, row-by-row marker, then every pair in
/// order with hidden test outputs left out. Returns the tokens and, per train
/// grid, the range of token positions it occupies.
fn ul2_body(task: &Task, mode: Ul2Mode) -> (Vec<Token>, Vec<std::ops::Range<usize>>) {
    let mut tokens = vec![mode.marker(), Traversal::RowByRow.marker()];
    let mut grids = Vec::new();
    for (i, p) in task.train.iter().chain(&task.test).enumerate() {
        let is_train = i < task.train.len();
        tokens.push(Token::START_EXAMPLE);
        tokens.push(Token::START_INPUT);
        let s = tokens.len();
        serialize_grid_into(&p.input, Traversal::RowByRow, &mut tokens);
        if is_train {
            grids.push(s..tokens.len());
        }
        tokens.push(Token::END_INPUT);
        if let Some(o) = &p.output {
            tokens.push(Token::START_OUTPUT);
            let s = tokens.len();
            serialize_grid_into(o, Traversal::RowByRow, &mut tokens);
            if is_train {
                grids.push(s..tokens.len());
            }
            tokens.push(Token::END_OUTPUT);
            tokens.push(Token::END_EXAMPLE);
        }
    }
    (tokens, grids)
}

/// Unmasked prompt that a [`Ul2Example`] was built from.
pub fn ul2_source(task: &Task, mode: Ul2Mode) -> Vec<Token> {
    ul2_body(task, mode).0
}

/// Builds a denoising example from the demonstration grids of `task`.
///
/// Spans are runs of consecutive color cells inside one grid (they may cross
/// row boundaries). Row delimiters stay in place; each span is replaced by its
/// sentinel at the position of its first cell and the remaining cells are
/// dropped. The target lists every sentinel followed by the removed colors,
/// then end-of-sequence.
pub fn make_ul2_example<R: Rng + ?Sized>(
    task: &Task,
    params: Ul2Params,
    rng: &mut R,
) -> Result<Ul2Example, EncodingError> {
    if !(params.mask_ratio > 0.0 && params.mask_ratio < 1.0) {
        return Err(EncodingError::BadMaskRatio(params.mask_ratio));
    }
    let (tokens, grid_ranges) = ul2_body(task, params.mode);
    // maskable positions grouped per grid
    let grids: Vec<Vec<usize>> = grid_ranges
        .iter()
        .map(|r| r.clone().filter(|&p| tokens[p].as_color().is_some()).collect())
        .collect();
    let total: usize = grids.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(EncodingError::NothingToMask);
    }
    let budget = ((params.mask_ratio * total as f64).round() as usize).clamp(1, total);

    // (grid index, start offset within grid, length)
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    match params.mode {
        Ul2Mode::S => {
            let last = grids.len() - 1 - grids.iter().rev().position(|g| !g.is_empty()).unwrap();
            let len = budget.min(grids[last].len());
            spans.push((last, grids[last].len() - len, len));
        }
        Ul2Mode::X | Ul2Mode::R => {
            let n_spans = ((budget as f64 / params.mean_span).round() as usize).max(1);
            if n_spans > NUM_EXTRA_IDS {
                return Err(EncodingError::TooManySpans { requested: n_spans });
            }
            let mut lengths = vec![budget / n_spans; n_spans];
            for l in lengths.iter_mut().take(budget % n_spans) {
                *l += 1;
            }
            let mut taken: Vec<Vec<bool>> = grids.iter().map(|g| vec![false; g.len()]).collect();
            for mut len in lengths {
                'place: while len > 0 {
                    let mut starts = Vec::new();
                    for (gi, g) in taken.iter().enumerate() {
                        if g.len() < len {
                            continue;
                        }
                        for s in 0..=(g.len() - len) {
                            if g[s..s + len].iter().all(|&x| !x) {
                                starts.push((gi, s));
                            }
                        }
                    }
                    if starts.is_empty() {
                        len -= 1;
                        continue;
                    }
                    let (gi, s) = starts[rng.gen_range(0..starts.len())];
                    taken[gi][s..s + len].iter_mut().for_each(|x| *x = true);
                    spans.push((gi, s, len));
                    break 'place;
                }
            }
        }
    }
    if spans.len() > NUM_EXTRA_IDS {
        return Err(EncodingError::TooManySpans {
            requested: spans.len(),
        });
    }
    spans.sort_unstable();

    let mut first_of_span = vec![None; tokens.len()];
    let mut dropped = vec![false; tokens.len()];
    let mut target = Vec::new();
    for (k, &(gi, s, len)) in spans.iter().enumerate() {
        let positions = &grids[gi][s..s + len];
        first_of_span[positions[0]] = Some(k);
        target.push(Token::extra_id(k));
        for &p in positions {
            dropped[p] = true;
            target.push(tokens[p]);
        }
    }
    target.push(Token::EOS);
    let masked: Vec<Token> = tokens
        .iter()
        .enumerate()
        .filter_map(|(p, &t)| match first_of_span[p] {
            Some(k) => Some(Token::extra_id(k)),
            None if dropped[p] => None,
            None => Some(t),
        })
        .collect();
    Ok(Ul2Example {
        mode: params.mode,
        masked_prompt: TokenSequence {
            tokens: masked,
            role: Role::Prompt,
        },
        target: TokenSequence {
            tokens: target,
            role: Role::Target,
        },
        mask_ratio: params.mask_ratio,
    })
}

/// Puts the spans of a denoising target back into its masked prompt.
///
/// Every grid in the prompt has rows of equal width, so the number of cells per
/// row follows from the total cell count of the grid once its spans are
/// re-inserted.
pub fn reconstruct_ul2(masked: &[Token], target: &[Token]) -> Result<Vec<Token>, EncodingError> {
    let mut spans: Vec<Vec<Token>> = Vec::new();
    for (pos, &t) in target.iter().enumerate() {
        if let Some(k) = t.as_extra_id() {
            if k != spans.len() {
                return Err(bad(pos, Some(&t)));
            }
            spans.push(Vec::new());
        } else if t.as_color().is_some() {
            spans.last_mut().ok_or_else(|| bad(pos, Some(&t)))?.push(t);
        } else if t != Token::EOS {
            return Err(bad(pos, Some(&t)));
        }
    }
    let is_body = |t: Token| t == Token::START_ROW || t == Token::END_ROW || t.as_color().is_some() || t.as_extra_id().is_some();
    let mut out = Vec::with_capacity(masked.len() + target.len());
    let mut i = 0;
    while i < masked.len() {
        if !is_body(masked[i]) {
            out.push(masked[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < masked.len() && is_body(masked[i]) {
            i += 1;
        }
        let block = &masked[start..i];
        let rows = block.iter().filter(|&&t| t == Token::START_ROW).count();
        let mut cells: Vec<Token> = Vec::new();
        for &t in block {
            if let Some(k) = t.as_extra_id() {
                cells.extend(spans.get(k).ok_or_else(|| bad(start, Some(&t)))?);
            } else if t.as_color().is_some() {
                cells.push(t);
            }
        }
        if rows == 0 || !cells.len().is_multiple_of(rows) {
            return Err(EncodingError::RaggedRows {
                row: 0,
                expected: rows,
                found: cells.len(),
            });
        }
        let width = cells.len() / rows;
        let mut next = cells.into_iter();
        for &t in block {
            if t == Token::START_ROW {
                out.push(t);
                out.extend(next.by_ref().take(width));
            } else if t == Token::END_ROW {
                out.push(t);
            }
        }
    }
    Ok(out)
}
