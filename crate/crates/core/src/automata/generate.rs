use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_local_invertibility, sample_automaton, AutomataError, Automaton, InverseSearchBounds, SampleBounds};
use crate::grid::{Color, ColorSet, Grid};
use crate::task::{GridPair, Task};

/// How a sampled automaton `f` rewrites a task `(I, O)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schema {
    /// `(I, f(I))`: a brand new logic.
    NewLogic,
    /// `(I, f(O))`: extends the logic.
    OnOutputs,
    /// `(f(I), O)`, only if `f` is invertible on the inputs.
    OnInputs,
    /// `(f(I), f(O))`, the conjugated task, same invertibility gate.
    Conjugate,
}

impl Schema {
    pub const ALL: [Schema; 4] = [Schema::NewLogic, Schema::OnOutputs, Schema::OnInputs, Schema::Conjugate];

    pub fn number(self) -> u8 {
        match self {
            Schema::NewLogic => 1,
            Schema::OnOutputs => 2,
            Schema::OnInputs => 3,
            Schema::Conjugate => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Schema::ALL.into_iter().find(|s| s.number() == n)
    }

    fn needs_inverse(self) -> bool {
        matches!(self, Schema::OnInputs | Schema::Conjugate)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n: usize,
    pub max_attempts: usize,
    pub sample: SampleBounds,
    pub inverse: InverseSearchBounds,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            n: 10,
            max_attempts: 1000,
            sample: SampleBounds::default(),
            inverse: InverseSearchBounds::default(),
        }
    }
}

const MIN_CHANGED: f64 = 0.02;
const MAX_CHANGED: f64 = 0.95;

/// Rejects degenerate synthetic tasks. Looks at every pair with a known
/// output: each must differ from its input, outputs may only all coincide
/// when inputs do, and same-shape pairs must change between 2% and 95% of
/// their cells.
pub fn check_task_quality(t: &Task) -> bool {
    let pairs: Vec<(&Grid, &Grid)> = t
        .train
        .iter()
        .chain(&t.test)
        .filter_map(|p| p.output.as_ref().map(|o| (&p.input, o)))
        .collect();
    if pairs.is_empty() || pairs.iter().any(|(i, o)| i == o) {
        return false;
    }
    let all_same = |v: Vec<&Grid>| v.windows(2).all(|w| w[0] == w[1]);
    if pairs.len() > 1 && all_same(pairs.iter().map(|p| p.1).collect()) && !all_same(pairs.iter().map(|p| p.0).collect())
    {
        return false;
    }
    pairs.iter().all(|(i, o)| {
        if i.height() != o.height() || i.width() != o.width() {
            return true;
        }
        let changed = i.cells().iter().zip(o.cells()).filter(|(a, b)| a != b).count();
        let frac = changed as f64 / i.cells().len() as f64;
        (MIN_CHANGED..=MAX_CHANGED).contains(&frac)
    })
}

/// One pass of the schema with a fixed automaton. `None` when a gate of
/// the schema rejects it; quality is not checked here.
pub fn apply_schema(t: &Task, schema: Schema, f: &Automaton, inverse: &InverseSearchBounds) -> Option<Task> {
    apply_schema_traced(t, schema, f, inverse).map(|(t, _)| t)
}

fn apply_schema_traced(
    t: &Task,
    schema: Schema,
    f: &Automaton,
    inverse: &InverseSearchBounds,
) -> Option<(Task, Option<Automaton>)> {
    let inputs: Vec<&Grid> = t.train.iter().chain(&t.test).map(|p| &p.input).collect();
    let fi: Vec<Grid> = inputs.iter().map(|g| f.apply(g)).collect();
    let inputs_changed = inputs.iter().zip(&fi).any(|(a, b)| *a != b);
    if schema != Schema::OnOutputs && !inputs_changed {
        return None;
    }
    let mut inv = None;
    if schema.needs_inverse() {
        let originals: Vec<Grid> = inputs.iter().map(|&g| g.clone()).collect();
        inv = Some(check_local_invertibility(f, &originals, inverse)?);
    }
    let map_outputs = |p: &GridPair| p.output.as_ref().map(|o| f.apply(o));
    if matches!(schema, Schema::OnOutputs | Schema::Conjugate) {
        let outputs_changed = t
            .train
            .iter()
            .chain(&t.test)
            .any(|p| p.output.as_ref().is_some_and(|o| &f.apply(o) != o));
        if !outputs_changed {
            return None;
        }
    }
    let mut k = 0;
    let mut rewrite = |p: &GridPair| {
        let fi_k = fi[k].clone();
        k += 1;
        let (input, output) = match schema {
            Schema::NewLogic => (p.input.clone(), Some(fi_k)),
            Schema::OnOutputs => (p.input.clone(), map_outputs(p)),
            Schema::OnInputs => (fi_k, p.output.clone()),
            Schema::Conjugate => (fi_k, map_outputs(p)),
        };
        GridPair { input, output }
    };
    let train = t.train.iter().map(&mut rewrite).collect();
    let test = t.test.iter().map(&mut rewrite).collect();
    Some((
        Task {
            id: t.id.clone(),
            train,
            test,
        },
        inv,
    ))
}

/// A generated task with the automaton that made it and, for the schemas
/// that rewrite inputs, the verified inverse on those inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTask {
    pub task: Task,
    pub automaton: Automaton,
    pub inverse: Option<Automaton>,
}

/// Samples automata until `params.n` tasks pass the schema gates and the
/// quality check, or the attempt cap is hit. Task ids are
/// `{id}_ca{schema}_{i}`. Condition colors are drawn from the task's own
/// palette so that rules have something to match.
pub fn generate_tasks<R: Rng + ?Sized>(
    t: &Task,
    schema: Schema,
    params: &GenerationParams,
    rng: &mut R,
) -> Result<Vec<Task>, AutomataError> {
    Ok(generate_tasks_traced(t, schema, params, rng)?
        .into_iter()
        .map(|g| g.task)
        .collect())
}

/// [`generate_tasks`], keeping each task's automaton and inverse.
pub fn generate_tasks_traced<R: Rng + ?Sized>(
    t: &Task,
    schema: Schema,
    params: &GenerationParams,
    rng: &mut R,
) -> Result<Vec<GeneratedTask>, AutomataError> {
    let used: ColorSet = t.grids().flat_map(|g| g.cells().iter().copied()).filter_map(|c| Color::new(c).ok()).collect();
    let mut bounds = params.sample.clone();
    let narrowed: ColorSet = bounds.palette.iter().filter(|&c| used.contains(c)).collect();
    if !narrowed.is_empty() {
        bounds.palette = narrowed;
    }
    bounds.validate()?;
    let mut out: Vec<GeneratedTask> = Vec::with_capacity(params.n);
    let mut attempts = 0;
    while out.len() < params.n {
        if attempts == params.max_attempts {
            return Err(AutomataError::GenerationBudgetExhausted {
                produced: out.into_iter().map(|g| g.task).collect(),
                wanted: params.n,
                attempts,
            });
        }
        attempts += 1;
        let f = sample_automaton(&bounds, rng)?;
        if let Some((mut new, inverse)) = apply_schema_traced(t, schema, &f, &params.inverse) {
            if check_task_quality(&new) {
                new.id = format!("{}_ca{}_{}", t.id, schema, out.len());
                out.push(GeneratedTask {
                    task: new,
                    automaton: f,
                    inverse,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Rule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(rows: &[&[u8]]) -> Grid {
        Grid::from_rows(rows).unwrap()
    }

    /// Recolor 1 to 2, with some 4s around that the rule ignores.
    fn fixture() -> Task {
        let ins = [
            g(&[&[1, 0, 4], &[0, 1, 0], &[4, 0, 0]]),
            g(&[&[0, 4, 1, 1], &[1, 0, 0, 4]]),
            g(&[&[4, 1], &[1, 0], &[0, 3]]),
        ];
        let f0 = Automaton::from_rules(vec![Rule::recolor(1, 2)]);
        let pairs: Vec<GridPair> = ins.iter().map(|i| GridPair::new(i.clone(), f0.apply(i))).collect();
        Task::new("fx", pairs[..2].to_vec(), pairs[2..].to_vec()).unwrap()
    }

    #[test]
    fn quality_gate() {
        let same = Task {
            id: "s".into(),
            train: vec![GridPair::new(g(&[&[1, 2]]), g(&[&[1, 2]]))],
            test: vec![],
        };
        assert!(!check_task_quality(&same));

        let half = Task {
            id: "h".into(),
            train: vec![GridPair::new(g(&[&[1, 1]]), g(&[&[1, 2]]))],
            test: vec![],
        };
        assert!(check_task_quality(&half));

        let constant = Task {
            id: "c".into(),
            train: vec![
                GridPair::new(g(&[&[1, 1]]), g(&[&[5, 5]])),
                GridPair::new(g(&[&[2, 2]]), g(&[&[5, 5]])),
            ],
            test: vec![],
        };
        assert!(!check_task_quality(&constant));

        let tiny_change = Task {
            id: "t".into(),
            train: vec![GridPair::new(
                Grid::filled(10, 10, Color::BACKGROUND).unwrap(),
                Grid::filled(10, 10, Color::BACKGROUND)
                    .unwrap()
                    .with_cell(0, 0, Color::new(1).unwrap()),
            )],
            test: vec![],
        };
        assert!(!check_task_quality(&tiny_change));
    }

    #[test]
    fn schema_one_recolors_inputs() {
        let t = fixture();
        let f = Automaton::from_rules(vec![Rule::recolor(4, 8)]);
        let new = apply_schema(&t, Schema::NewLogic, &f, &InverseSearchBounds::default()).unwrap();
        for (old, p) in t.train.iter().chain(&t.test).zip(new.train.iter().chain(&new.test)) {
            assert_eq!(p.input, old.input);
            assert_eq!(p.output.as_ref().unwrap(), &f.apply(&old.input));
        }
    }

    #[test]
    fn schema_three_rejects_lossy_automata() {
        let t = fixture();
        let lossy = Automaton::from_rules(vec![Rule::recolor(4, 0)]);
        assert!(apply_schema(&t, Schema::OnInputs, &lossy, &InverseSearchBounds::default()).is_none());
        let fine = Automaton::from_rules(vec![Rule::recolor(4, 8)]);
        assert!(apply_schema(&t, Schema::OnInputs, &fine, &InverseSearchBounds::default()).is_some());
    }

    #[test]
    fn conjugated_task_is_solved_by_conjugated_rule() {
        let t = fixture();
        let f0 = Automaton::from_rules(vec![Rule::recolor(1, 2)]);
        let gmap = Automaton::from_rules(vec![Rule::recolor(4, 8)]);
        let new = apply_schema(&t, Schema::Conjugate, &gmap, &InverseSearchBounds::default()).unwrap();
        let inputs: Vec<Grid> = t.train.iter().chain(&t.test).map(|p| p.input.clone()).collect();
        let ginv = check_local_invertibility(&gmap, &inputs, &InverseSearchBounds::default()).unwrap();
        for p in new.train.iter().chain(&new.test) {
            let solved = gmap.apply(&f0.apply(&ginv.apply(&p.input)));
            assert_eq!(&solved, p.output.as_ref().unwrap());
        }
    }

    #[test]
    fn generation_meets_gates_for_every_schema() {
        let t = fixture();
        let params = GenerationParams {
            n: 3,
            max_attempts: 5000,
            ..GenerationParams::default()
        };
        for schema in Schema::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(schema.number() as u64);
            let tasks = generate_tasks(&t, schema, &params, &mut rng).unwrap();
            assert_eq!(tasks.len(), 3);
            for (i, new) in tasks.iter().enumerate() {
                assert_eq!(new.id, format!("fx_ca{}_{i}", schema.number()));
                assert!(check_task_quality(new));
            }
        }
    }

    #[test]
    fn attempt_cap_returns_partial_results() {
        // A uniform task: nothing sampled from its palette can pass quality.
        let flat = Task {
            id: "flat".into(),
            train: vec![GridPair::new(g(&[&[0]]), g(&[&[0]]))],
            test: vec![],
        };
        let params = GenerationParams {
            n: 2,
            max_attempts: 20,
            ..GenerationParams::default()
        };
        let err = generate_tasks(&flat, Schema::OnInputs, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, AutomataError::GenerationBudgetExhausted { attempts: 20, wanted: 2, .. }));
    }
}
