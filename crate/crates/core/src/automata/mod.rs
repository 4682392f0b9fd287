//! Cellular automata over grids stacked with pixel-feature channels, used
//! to synthesize new tasks from existing ones.
//!
//! Channel 0 is the grid itself, channel `k` is the `k-1`-th feature listed
//! on the automaton. All rules read the same snapshot and the first rule
//! that matches a cell decides its new color.

mod features;
mod generate;
mod inverse;

pub use features::{compute_feature, FeatureKind, PixelFeature};
pub use generate::{
    apply_schema, check_task_quality, generate_tasks, generate_tasks_traced, GeneratedTask, GenerationParams, Schema,
};
pub use inverse::{check_local_invertibility, InverseSearchBounds};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ColorSet, Grid};
use crate::task::Task;

pub const DEFAULT_MAX_STEPS: usize = 16;

#[derive(Debug, Error)]
pub enum AutomataError {
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad sampling bounds: {0}")]
    BadBounds(String),
    #[error("generation stopped after {attempts} attempts with {} of {wanted} tasks", produced.len())]
    GenerationBudgetExhausted {
        produced: Vec<Task>,
        wanted: usize,
        attempts: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeighborCondition {
    pub di: i8,
    pub dj: i8,
    pub channel: u8,
    pub value: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<NeighborCondition>,
    pub self_value: Option<u8>,
    pub new_color: u8,
}

impl Rule {
    pub fn new(conditions: Vec<NeighborCondition>, self_value: Option<u8>, new_color: u8) -> Result<Self, AutomataError> {
        if conditions.is_empty() && self_value.is_none() {
            return Err(AutomataError::InvalidRule("needs a condition or a SELF test".into()));
        }
        if new_color > 9 || self_value.is_some_and(|c| c > 9) {
            return Err(AutomataError::InvalidRule("colors must be 0..=9".into()));
        }
        if let Some(c) = conditions.iter().find(|c| !(-1..=1).contains(&c.di) || !(-1..=1).contains(&c.dj)) {
            return Err(AutomataError::InvalidRule(format!(
                "offset ({},{}) outside the 3x3 neighborhood",
                c.di, c.dj
            )));
        }
        Ok(Rule {
            conditions,
            self_value,
            new_color,
        })
    }

    /// Shorthand for `SELF=from THEN to`.
    pub fn recolor(from: u8, to: u8) -> Self {
        Rule::new(vec![], Some(from), to).expect("valid colors")
    }

    fn max_channel(&self) -> usize {
        self.conditions.iter().map(|c| c.channel as usize).max().unwrap_or(0)
    }

    fn matches(&self, channels: &Channels, r: usize, c: usize) -> bool {
        if let Some(s) = self.self_value {
            if channels.get(0, r as isize, c as isize) != Some(s as i32) {
                return false;
            }
        }
        self.conditions.iter().all(|cond| {
            channels.get(
                cond.channel as usize,
                r as isize + cond.di as isize,
                c as isize + cond.dj as isize,
            ) == Some(cond.value)
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .conditions
            .iter()
            .map(|c| format!("ch{}({},{})={}", c.channel, c.di, c.dj, c.value))
            .collect();
        if let Some(s) = self.self_value {
            parts.push(format!("SELF={s}"));
        }
        write!(f, "IF {} THEN {}", parts.join(" AND "), self.new_color)
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.trim().strip_prefix("IF ").ok_or("rule must start with IF")?;
        let (lhs, rhs) = body.split_once(" THEN ").ok_or("missing THEN")?;
        let new_color: u8 = rhs.trim().parse().map_err(|_| format!("bad color {rhs:?}"))?;
        let mut conditions = Vec::new();
        let mut self_value = None;
        for term in lhs.split(" AND ").map(str::trim) {
            if let Some(v) = term.strip_prefix("SELF=") {
                self_value = Some(v.parse().map_err(|_| format!("bad SELF color {v:?}"))?);
                continue;
            }
            let bad = || format!("bad condition {term:?}");
            let rest = term.strip_prefix("ch").ok_or_else(bad)?;
            let (ch, rest) = rest.split_once('(').ok_or_else(bad)?;
            let (offs, value) = rest.split_once(")=").ok_or_else(bad)?;
            let (di, dj) = offs.split_once(',').ok_or_else(bad)?;
            conditions.push(NeighborCondition {
                di: di.trim().parse().map_err(|_| bad())?,
                dj: dj.trim().parse().map_err(|_| bad())?,
                channel: ch.parse().map_err(|_| bad())?,
                value: value.parse().map_err(|_| bad())?,
            });
        }
        Rule::new(conditions, self_value, new_color).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Automaton {
    rules: Vec<Rule>,
    max_steps: usize,
    features: Vec<FeatureKind>,
}

impl Automaton {
    pub fn new(rules: Vec<Rule>, max_steps: usize, features: Vec<FeatureKind>) -> Result<Self, AutomataError> {
        if max_steps == 0 {
            return Err(AutomataError::InvalidRule("max_steps must be at least 1".into()));
        }
        if let Some(r) = rules.iter().find(|r| r.max_channel() > features.len()) {
            return Err(AutomataError::InvalidRule(format!(
                "{r} reads a channel beyond the {} declared features",
                features.len()
            )));
        }
        Ok(Automaton {
            rules,
            max_steps,
            features,
        })
    }

    /// Plain color rules with the default step limit.
    pub fn from_rules(rules: Vec<Rule>) -> Self {
        Automaton::new(rules, DEFAULT_MAX_STEPS, vec![]).expect("channel 0 only")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn features(&self) -> &[FeatureKind] {
        &self.features
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    /// One synchronous update of every cell.
    pub fn step(&self, g: &Grid) -> Grid {
        let channels = Channels::new(g, &self.features);
        let cells = (0..g.height())
            .flat_map(|r| (0..g.width()).map(move |c| (r, c)))
            .map(|(r, c)| {
                self.rules
                    .iter()
                    .find(|rule| rule.matches(&channels, r, c))
                    .map_or(g.cells()[r * g.width() + c], |rule| rule.new_color)
            })
            .collect();
        Grid::new(g.height(), g.width(), cells).expect("same shape")
    }

    /// Steps until the grid stops changing or `max_steps` is reached.
    pub fn apply(&self, g: &Grid) -> Grid {
        let mut cur = g.clone();
        for _ in 0..self.max_steps {
            let next = self.step(&cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, AutomataError> {
        text.parse()
    }
}

/// Applies `a` to `g`.
pub fn apply_automaton(a: &Automaton, g: &Grid) -> Grid {
    a.apply(g)
}

impl fmt::Display for Automaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.features.is_empty() {
            let names: Vec<&str> = self.features.iter().map(|k| k.name()).collect();
            writeln!(f, "FEATURES {}", names.join(" "))?;
        }
        writeln!(f, "STEPS {}", self.max_steps)?;
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for Automaton {
    type Err = AutomataError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut rules = Vec::new();
        let mut features = Vec::new();
        let mut max_steps = DEFAULT_MAX_STEPS;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| AutomataError::Parse { line: i + 1, msg };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("FEATURES") {
                features = rest
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(err)?;
            } else if let Some(rest) = line.strip_prefix("STEPS") {
                max_steps = rest.trim().parse().map_err(|_| err(format!("bad step count {rest:?}")))?;
            } else {
                rules.push(line.parse().map_err(err)?);
            }
        }
        Automaton::new(rules, max_steps, features)
    }
}

/// Grid plus feature masks, read with out-of-bounds as "no value".
pub(crate) struct Channels {
    height: usize,
    width: usize,
    data: Vec<Vec<i32>>,
}

impl Channels {
    pub(crate) fn new(g: &Grid, features: &[FeatureKind]) -> Self {
        let mut data = vec![g.cells().iter().map(|&c| c as i32).collect()];
        data.extend(features.iter().map(|&k| compute_feature(g, k).values));
        Channels {
            height: g.height(),
            width: g.width(),
            data,
        }
    }

    pub(crate) fn count(&self) -> usize {
        self.data.len()
    }

    pub(crate) fn get(&self, ch: usize, r: isize, c: isize) -> Option<i32> {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            return None;
        }
        Some(self.data[ch][r as usize * self.width + c as usize])
    }
}

/// Limits for random automata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBounds {
    pub max_rules: usize,
    pub max_conditions: usize,
    /// Channels conditions may read; every entry must be `<= features.len()`.
    pub allowed_channels: Vec<usize>,
    pub features: Vec<FeatureKind>,
    /// Colors that SELF tests and channel-0 conditions look for.
    pub palette: ColorSet,
    pub max_steps: usize,
}

impl Default for SampleBounds {
    fn default() -> Self {
        SampleBounds {
            max_rules: 3,
            max_conditions: 2,
            allowed_channels: vec![0],
            features: vec![],
            palette: ColorSet::ALL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl SampleBounds {
    pub fn validate(&self) -> Result<(), AutomataError> {
        let bad = |m: &str| Err(AutomataError::BadBounds(m.into()));
        if self.max_rules == 0 || self.max_conditions == 0 || self.max_steps == 0 {
            return bad("max_rules, max_conditions and max_steps must be positive");
        }
        if self.allowed_channels.is_empty() || self.allowed_channels.iter().any(|&c| c > self.features.len()) {
            return bad("allowed channels must be non-empty and refer to declared features");
        }
        if self.palette.is_empty() {
            return bad("palette is empty");
        }
        Ok(())
    }
}

pub(crate) const MOORE: [(i8, i8); 9] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Draws a random automaton within `bounds`. Each rule has between one and
/// `max_conditions` neighbor conditions and a SELF test half the time.
pub fn sample_automaton<R: Rng + ?Sized>(bounds: &SampleBounds, rng: &mut R) -> Result<Automaton, AutomataError> {
    bounds.validate()?;
    let palette: Vec<u8> = bounds.palette.iter().map(|c| c.value()).collect();
    let n_rules = rng.gen_range(1..=bounds.max_rules);
    let mut rules = Vec::with_capacity(n_rules);
    for _ in 0..n_rules {
        let n_cond = rng.gen_range(1..=bounds.max_conditions);
        let mut conditions: Vec<NeighborCondition> = (0..n_cond)
            .map(|_| {
                let channel = *bounds.allowed_channels.choose(rng).expect("non-empty");
                // The centre cell of channel 0 is what SELF already tests.
                let (di, dj) = loop {
                    let o = *MOORE.choose(rng).expect("non-empty");
                    if channel != 0 || o != (0, 0) {
                        break o;
                    }
                };
                let value = if channel == 0 {
                    *palette.choose(rng).expect("non-empty") as i32
                } else {
                    rng.gen_range(0..=bounds.features[channel - 1].max_sampled_value())
                };
                NeighborCondition {
                    di,
                    dj,
                    channel: channel as u8,
                    value,
                }
            })
            .collect();
        // Repeated or contradictory tests of one cell add nothing.
        conditions.sort();
        conditions.dedup_by_key(|c| (c.di, c.dj, c.channel));
        let self_value = rng.gen_bool(0.5).then(|| *palette.choose(rng).expect("non-empty"));
        let new_color = loop {
            let c = rng.gen_range(0..10u8);
            if Some(c) != self_value {
                break c;
            }
        };
        rules.push(Rule::new(conditions, self_value, new_color)?);
    }
    Automaton::new(rules, bounds.max_steps, bounds.features.clone())
}
