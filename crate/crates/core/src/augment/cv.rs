use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Color, ColorSet, Grid, GridError, MAX_SIDE};
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CvError {
    #[error("result of {height}x{width} exceeds {MAX_SIDE}x{MAX_SIDE}")]
    OversizeGrid { height: usize, width: usize },
    #[error("upscale factor {0} not in {{2, 3}}")]
    BadFactor(usize),
    #[error("metagrid step {0} not in {{1, 2, 3}}")]
    BadStep(usize),
    #[error("no color left that the task does not already use")]
    NoFreeColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
    Both,
}

impl Axis {
    const ALL: [Axis; 3] = [Axis::Row, Axis::Column, Axis::Both];

    fn rows(self) -> bool {
        matches!(self, Axis::Row | Axis::Both)
    }

    fn cols(self) -> bool {
        matches!(self, Axis::Column | Axis::Both)
    }
}

fn checked(height: usize, width: usize) -> Result<(), CvError> {
    if height > MAX_SIDE || width > MAX_SIDE {
        Err(CvError::OversizeGrid { height, width })
    } else {
        Ok(())
    }
}

fn build(height: usize, width: usize, cells: Vec<u8>) -> Result<Grid, CvError> {
    Grid::new(height, width, cells).map_err(|e| match e {
        GridError::Oversize { height, width } => CvError::OversizeGrid { height, width },
        other => unreachable!("cv transforms keep grids well-formed: {other}"),
    })
}

/// Replicates every cell `factor` times along `axis`.
pub fn upscale(g: &Grid, factor: usize, axis: Axis) -> Result<Grid, CvError> {
    if !(2..=3).contains(&factor) {
        return Err(CvError::BadFactor(factor));
    }
    let fr = if axis.rows() { factor } else { 1 };
    let fc = if axis.cols() { factor } else { 1 };
    let (h, w) = (g.height() * fr, g.width() * fc);
    checked(h, w)?;
    let mut cells = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            cells.push(g.get(r / fr, c / fc));
        }
    }
    build(h, w, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(n: usize) -> Self {
        Padding {
            top: n,
            bottom: n,
            left: n,
            right: n,
        }
    }
}

/// Pads the grid with a frame of `color`; the original sits at `(top, left)`.
pub fn add_frame(g: &Grid, color: Color, pad: Padding) -> Result<Grid, CvError> {
    let h = g.height() + pad.top + pad.bottom;
    let w = g.width() + pad.left + pad.right;
    checked(h, w)?;
    let mut cells = vec![color.value(); h * w];
    for (r, row) in g.rows().enumerate() {
        let start = (r + pad.top) * w + pad.left;
        cells[start..start + g.width()].copy_from_slice(row);
    }
    build(h, w, cells)
}

fn separated(len: usize, step: usize) -> (usize, Vec<Option<usize>>) {
    // maps output index -> source index (None for a separator line)
    let mut map = Vec::new();
    for i in 0..len {
        if i > 0 && i % step == 0 {
            map.push(None);
        }
        map.push(Some(i));
    }
    (map.len(), map)
}

/// Inserts separator lines of `color` between every `step` rows and/or
/// columns. Separators are interior only.
pub fn add_metagrid(g: &Grid, axis: Axis, step: usize, color: Color) -> Result<Grid, CvError> {
    if !(1..=3).contains(&step) {
        return Err(CvError::BadStep(step));
    }
    let identity = |n: usize| (n, (0..n).map(Some).collect::<Vec<_>>());
    let (h, rmap) = if axis.rows() { separated(g.height(), step) } else { identity(g.height()) };
    let (w, cmap) = if axis.cols() { separated(g.width(), step) } else { identity(g.width()) };
    checked(h, w)?;
    let mut cells = Vec::with_capacity(h * w);
    for r in &rmap {
        for c in &cmap {
            cells.push(match (r, c) {
                (Some(r), Some(c)) => g.get(*r, *c),
                _ => color.value(),
            });
        }
    }
    build(h, w, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvTarget {
    InputOnly,
    OutputOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvAugmentation {
    Upscale { factor: usize, axis: Axis },
    Frame { color: Color, pad: Padding },
    Metagrid { axis: Axis, step: usize, color: Color },
}

impl CvAugmentation {
    pub fn apply(&self, g: &Grid) -> Result<Grid, CvError> {
        match *self {
            CvAugmentation::Upscale { factor, axis } => upscale(g, factor, axis),
            CvAugmentation::Frame { color, pad } => add_frame(g, color, pad),
            CvAugmentation::Metagrid { axis, step, color } => add_metagrid(g, axis, step, color),
        }
    }

    /// Applies the transform to the chosen side of every pair of the task.
    pub fn apply_task(&self, task: &Task, target: CvTarget) -> Result<Task, CvError> {
        let mut out = task.clone();
        for p in out.train.iter_mut().chain(out.test.iter_mut()) {
            if target != CvTarget::OutputOnly {
                p.input = self.apply(&p.input)?;
            }
            if target != CvTarget::InputOnly {
                if let Some(o) = &p.output {
                    p.output = Some(self.apply(o)?);
                }
            }
        }
        Ok(out)
    }
}

fn task_colors(task: &Task) -> ColorSet {
    task.grids().fold(ColorSet::EMPTY, |acc, g| acc.union(g.color_set()))
}

/// Draws one CV-like augmentation for `task` together with the side it
/// applies to. Frame and metagrid colors come from colors the task does not
/// use.
pub fn sample_cv_augmentation<R: Rng + ?Sized>(
    task: &Task,
    rng: &mut R,
) -> Result<(CvAugmentation, CvTarget), CvError> {
    let free: Vec<Color> = task_colors(task).complement().iter().collect();
    let target = [CvTarget::InputOnly, CvTarget::OutputOnly, CvTarget::Both][rng.gen_range(0..3)];
    let kind = if free.is_empty() { 0 } else { rng.gen_range(0..3) };
    let aug = match kind {
        0 => CvAugmentation::Upscale {
            factor: rng.gen_range(2..=3),
            axis: Axis::ALL[rng.gen_range(0..3)],
        },
        1 => CvAugmentation::Frame {
            color: free[rng.gen_range(0..free.len())],
            pad: Padding {
                top: rng.gen_range(0..=2),
                bottom: rng.gen_range(0..=2),
                left: rng.gen_range(0..=2),
                right: rng.gen_range(0..=2),
            },
        },
        _ => CvAugmentation::Metagrid {
            axis: Axis::ALL[rng.gen_range(0..3)],
            step: rng.gen_range(1..=3),
            color: free.get(rng.gen_range(0..free.len())).copied().ok_or(CvError::NoFreeColor)?,
        },
    };
    Ok((aug, target))
}
