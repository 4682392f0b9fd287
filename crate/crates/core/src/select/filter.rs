//! Symbolic priors that reject candidates inconsistent with every
//! demonstration: colors, output size, size ratio and containment.

use serde::{Deserialize, Serialize};

use crate::grid::{contains_subgrid, ColorSet, Grid, D4};
use crate::search::Candidate;
use crate::task::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    ColorViolation,
    SizeViolation,
    RatioViolation,
    InclusionViolation,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<Candidate>,
    pub rejected: Vec<(Candidate, RejectReason)>,
}

impl FilterReport {
    pub fn rejection_fraction(&self) -> f64 {
        let n = self.kept.len() + self.rejected.len();
        if n == 0 {
            0.0
        } else {
            self.rejected.len() as f64 / n as f64
        }
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejected.iter().filter(|(_, r)| *r == reason).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterConfig {
    /// When the task uses exactly nine colors, let the tenth through.
    pub nine_color_exception: bool,
}

/// The rules a task activates, derived once from its demonstrations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPriors {
    /// `None` when the color rule is bypassed.
    pub allowed_colors: Option<ColorSet>,
    pub output_size: Option<(usize, usize)>,
    pub ratio: Option<usize>,
    /// Rigid motions `T` with `O ⊆ T(I)` on every train pair.
    pub output_in_input: Vec<D4>,
    /// Rigid motions `T` with `I ⊆ T(O)` on every train pair.
    pub input_in_output: Vec<D4>,
    test_input: Grid,
}

impl TaskPriors {
    /// Priors for test pair `test_index`. Train pairs without outputs are
    /// ignored.
    pub fn derive(task: &Task, test_index: usize, cfg: FilterConfig) -> TaskPriors {
        let pairs: Vec<(&Grid, &Grid)> = task
            .train
            .iter()
            .filter_map(|p| p.output.as_ref().map(|o| (&p.input, o)))
            .collect();
        let test_input = task.test[test_index].input.clone();

        let mut colors = test_input.color_set();
        for (i, o) in &pairs {
            colors = colors.union(i.color_set()).union(o.color_set());
        }
        let allowed_colors = if cfg.nine_color_exception && colors.len() == 9 {
            None
        } else {
            Some(colors)
        };

        let output_size = match pairs.first() {
            Some((_, o0)) if pairs.iter().all(|(_, o)| o.dims() == o0.dims()) => Some(o0.dims()),
            _ => None,
        };

        let ratio = pairs.first().and_then(|(i0, o0)| {
            let k = o0.height() / i0.height();
            let fits = |(i, o): &(&Grid, &Grid)| {
                k >= 1 && o.height() == k * i.height() && o.width() == k * i.width()
            };
            pairs.iter().all(fits).then_some(k)
        });

        let consistent = |holds: &dyn Fn(&Grid, &Grid, D4) -> bool| -> Vec<D4> {
            if pairs.is_empty() {
                return vec![];
            }
            D4::ALL
                .into_iter()
                .filter(|&t| pairs.iter().all(|(i, o)| holds(i, o, t)))
                .collect()
        };
        let output_in_input = consistent(&|i, o, t| contains_subgrid(&i.apply_rigid(t), o).is_some());
        let input_in_output = consistent(&|i, o, t| contains_subgrid(&o.apply_rigid(t), i).is_some());

        TaskPriors {
            allowed_colors,
            output_size,
            ratio,
            output_in_input,
            input_in_output,
            test_input,
        }
    }

    /// First rule the grid breaks, checked in the order color, size, ratio,
    /// inclusion.
    pub fn check(&self, g: &Grid) -> Option<RejectReason> {
        if let Some(allowed) = self.allowed_colors {
            if !g.color_set().is_subset(allowed) {
                return Some(RejectReason::ColorViolation);
            }
        }
        if let Some(dims) = self.output_size {
            if g.dims() != dims {
                return Some(RejectReason::SizeViolation);
            }
        }
        if let Some(k) = self.ratio {
            let (h, w) = self.test_input.dims();
            if g.dims() != (k * h, k * w) {
                return Some(RejectReason::RatioViolation);
            }
        }
        let x = &self.test_input;
        if !self.output_in_input.is_empty()
            && !self
                .output_in_input
                .iter()
                .any(|&t| contains_subgrid(&x.apply_rigid(t), g).is_some())
        {
            return Some(RejectReason::InclusionViolation);
        }
        if !self.input_in_output.is_empty()
            && !self
                .input_in_output
                .iter()
                .any(|&t| contains_subgrid(&g.apply_rigid(t), x).is_some())
        {
            return Some(RejectReason::InclusionViolation);
        }
        None
    }
}

/// Splits candidates for test pair `test_index` into kept and rejected,
/// preserving input order in both lists.
pub fn filter_candidates(cands: &[Candidate], task: &Task, test_index: usize, cfg: FilterConfig) -> FilterReport {
    let priors = TaskPriors::derive(task, test_index, cfg);
    let mut report = FilterReport::default();
    for c in cands {
        match priors.check(&c.grid) {
            None => report.kept.push(c.clone()),
            Some(r) => report.rejected.push((c.clone(), r)),
        }
    }
    report
}
