//! Search for an automaton that undoes another one on a fixed set of grids.
//!
//! A candidate rule is *safe* when every cell it matches, on every image,
//! must take the rule's color to restore the original. Any set of safe
//! rules is order independent, so the search only has to cover all
//! changed cells with as few safe rules as possible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Automaton, Channels, NeighborCondition, Rule, MOORE};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InverseSearchBounds {
    pub max_rules: usize,
    /// At most 2; more would make candidate generation quadratic in channels.
    pub max_conditions: usize,
    /// Search nodes (partial rule sets) visited before giving up.
    pub node_budget: usize,
}

impl Default for InverseSearchBounds {
    fn default() -> Self {
        InverseSearchBounds {
            max_rules: 6,
            max_conditions: 2,
            node_budget: 50_000,
        }
    }
}

struct Target {
    grid: usize,
    r: usize,
    c: usize,
}

struct Problem<'a> {
    originals: &'a [Grid],
    images: Vec<Grid>,
    channels: Vec<Channels>,
    changed: Vec<Target>,
    index: HashMap<(usize, usize, usize), usize>,
}

impl Problem<'_> {
    /// Coverage bitset over changed cells, or None if the rule is unsafe.
    fn coverage(&self, rule: &Rule) -> Option<Vec<u64>> {
        let mut bits = vec![0u64; self.changed.len().div_ceil(64)];
        for (gi, img) in self.images.iter().enumerate() {
            let w = img.width();
            for r in 0..img.height() {
                for c in 0..w {
                    if !rule.matches(&self.channels[gi], r, c) {
                        continue;
                    }
                    if self.originals[gi].cells()[r * w + c] != rule.new_color {
                        return None;
                    }
                    if let Some(&k) = self.index.get(&(gi, r, c)) {
                        bits[k / 64] |= 1 << (k % 64);
                    }
                }
            }
        }
        Some(bits)
    }

    fn context(&self, t: &Target) -> Vec<NeighborCondition> {
        let ch = &self.channels[t.grid];
        let mut out = Vec::new();
        for k in 0..ch.count() {
            for &(di, dj) in &MOORE {
                if k == 0 && (di, dj) == (0, 0) {
                    continue;
                }
                if let Some(value) = ch.get(k, t.r as isize + di as isize, t.c as isize + dj as isize) {
                    out.push(NeighborCondition {
                        di,
                        dj,
                        channel: k as u8,
                        value,
                    });
                }
            }
        }
        out
    }
}

fn covers(bits: &[u64], k: usize) -> bool {
    bits[k / 64] & (1 << (k % 64)) != 0
}

/// Finds an automaton `inv` with `inv(a(g)) == g` for every grid in
/// `grids`, or `None` when the search bounds are exhausted. The inverse
/// runs a single step and reads the same features as `a`.
pub fn check_local_invertibility(a: &Automaton, grids: &[Grid], bounds: &InverseSearchBounds) -> Option<Automaton> {
    let images: Vec<Grid> = grids.iter().map(|g| a.apply(g)).collect();
    let channels = images.iter().map(|g| Channels::new(g, a.features())).collect();
    let mut changed = Vec::new();
    let mut index = HashMap::new();
    for (gi, (orig, img)) in grids.iter().zip(&images).enumerate() {
        let w = orig.width();
        for (i, (&o, &m)) in orig.cells().iter().zip(img.cells()).enumerate() {
            if o != m {
                index.insert((gi, i / w, i % w), changed.len());
                changed.push(Target {
                    grid: gi,
                    r: i / w,
                    c: i % w,
                });
            }
        }
    }
    let p = Problem {
        originals: grids,
        images,
        channels,
        changed,
        index,
    };
    let build = |rules: Vec<Rule>| Automaton::new(rules, 1, a.features().to_vec()).ok();
    if p.changed.is_empty() {
        return build(vec![]);
    }

    // Candidate rules, simplest first per changed cell.
    let mut seen: HashMap<Rule, Option<Vec<u64>>> = HashMap::new();
    let mut safe: Vec<(Rule, Vec<u64>)> = Vec::new();
    let mut consider = |rule: Rule, safe: &mut Vec<(Rule, Vec<u64>)>| -> bool {
        if let Some(cov) = seen.get(&rule) {
            return cov.is_some();
        }
        let cov = p.coverage(&rule);
        let ok = cov.is_some();
        if let Some(bits) = &cov {
            safe.push((rule.clone(), bits.clone()));
        }
        seen.insert(rule, cov);
        ok
    };
    for (k, t) in p.changed.iter().enumerate() {
        if safe.iter().any(|(_, b)| covers(b, k)) {
            continue;
        }
        let w = p.images[t.grid].width();
        let self_value = p.images[t.grid].cells()[t.r * w + t.c];
        let target = p.originals[t.grid].cells()[t.r * w + t.c];
        let make = |conds: Vec<NeighborCondition>| Rule {
            conditions: conds,
            self_value: Some(self_value),
            new_color: target,
        };
        if consider(make(vec![]), &mut safe) {
            continue;
        }
        if bounds.max_conditions == 0 {
            return None;
        }
        let ctx = p.context(t);
        let mut found = false;
        for c in &ctx {
            found |= consider(make(vec![*c]), &mut safe);
        }
        if !found && bounds.max_conditions >= 2 {
            for i in 0..ctx.len() {
                for j in i + 1..ctx.len() {
                    found |= consider(make(vec![ctx[i], ctx[j]]), &mut safe);
                }
            }
        }
        if !found {
            // Nothing in reach distinguishes this cell: information was lost.
            return None;
        }
    }

    // Rules covering more cells are tried first.
    safe.sort_by(|a, b| {
        let ones = |v: &Vec<u64>| v.iter().map(|x| x.count_ones()).sum::<u32>();
        ones(&b.1).cmp(&ones(&a.1)).then_with(|| a.0.cmp(&b.0))
    });
    let mut budget = bounds.node_budget;
    for depth in 1..=bounds.max_rules {
        let mut chosen = Vec::new();
        let covered = vec![0u64; p.changed.len().div_ceil(64)];
        match cover(&safe, p.changed.len(), covered, depth, &mut chosen, &mut budget) {
            Some(true) => {
                let inv = build(chosen.iter().map(|&i| safe[i].0.clone()).collect())?;
                let ok = p.images.iter().zip(grids).all(|(img, g)| &inv.apply(img) == g);
                return ok.then_some(inv);
            }
            Some(false) => continue,
            None => return None,
        }
    }
    None
}

/// Depth-limited set cover. `None` when the node budget runs out.
fn cover(
    safe: &[(Rule, Vec<u64>)],
    n: usize,
    covered: Vec<u64>,
    depth: usize,
    chosen: &mut Vec<usize>,
    budget: &mut usize,
) -> Option<bool> {
    let Some(first) = (0..n).find(|&k| !covers(&covered, k)) else {
        return Some(true);
    };
    if depth == 0 {
        return Some(false);
    }
    for (i, (_, bits)) in safe.iter().enumerate() {
        if !covers(bits, first) || chosen.contains(&i) {
            continue;
        }
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let next: Vec<u64> = covered.iter().zip(bits).map(|(a, b)| a | b).collect();
        chosen.push(i);
        if cover(safe, n, next, depth - 1, chosen, budget)? {
            return Some(true);
        }
        chosen.pop();
    }
    Some(false)
}
