use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Per-cell masks derived from a grid. Background is color 0 and
/// connectivity is always 4-neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Object cells whose four neighbors belong to the same object.
    ObjectInterior,
    /// Cells strictly below some non-background cell of their column.
    ShadowDown,
    /// Cells inside the bounding rectangle of some object.
    BoundingBox,
    /// Object label, 1.. in scan order, 0 on background.
    ComponentId,
    /// Background cells with no background path to the border.
    HoleMask,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::ObjectInterior,
        FeatureKind::ShadowDown,
        FeatureKind::BoundingBox,
        FeatureKind::ComponentId,
        FeatureKind::HoleMask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::ObjectInterior => "object_interior",
            FeatureKind::ShadowDown => "shadow_down",
            FeatureKind::BoundingBox => "bounding_box",
            FeatureKind::ComponentId => "component_id",
            FeatureKind::HoleMask => "hole_mask",
        }
    }

    /// Largest value the sampler proposes for conditions on this channel.
    pub(crate) fn max_sampled_value(self) -> i32 {
        match self {
            FeatureKind::ComponentId => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelFeature {
    pub kind: FeatureKind,
    pub height: usize,
    pub width: usize,
    pub values: Vec<i32>,
}

impl PixelFeature {
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.values[r * self.width + c]
    }

    pub fn rows(&self) -> Vec<Vec<i32>> {
        self.values.chunks(self.width).map(|r| r.to_vec()).collect()
    }
}

const DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn neighbors(h: usize, w: usize, r: usize, c: usize) -> impl Iterator<Item = (usize, usize)> {
    DIRS.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w).then_some((nr as usize, nc as usize))
    })
}

/// Same-color 4-connected objects over non-background cells, labelled
/// 1.. in row-major order of their first cell.
fn label_components(g: &Grid) -> (Vec<i32>, usize) {
    let (h, w) = (g.height(), g.width());
    let cells = g.cells();
    let mut labels = vec![0i32; h * w];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if cells[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for (nr, nc) in neighbors(h, w, i / w, i % w) {
                let j = nr * w + nc;
                if labels[j] == 0 && cells[j] == cells[start] {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next as usize)
}

pub fn compute_feature(g: &Grid, kind: FeatureKind) -> PixelFeature {
    let (h, w) = (g.height(), g.width());
    let cells = g.cells();
    let values = match kind {
        FeatureKind::ComponentId => label_components(g).0,
        FeatureKind::ObjectInterior => (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let inside = cells[i] != 0
                    && r > 0
                    && c > 0
                    && r + 1 < h
                    && c + 1 < w
                    && neighbors(h, w, r, c).all(|(nr, nc)| cells[nr * w + nc] == cells[i]);
                inside as i32
            })
            .collect(),
        FeatureKind::ShadowDown => {
            let mut v = vec![0; h * w];
            for c in 0..w {
                let mut seen = false;
                for r in 0..h {
                    if seen {
                        v[r * w + c] = 1;
                    }
                    seen |= cells[r * w + c] != 0;
                }
            }
            v
        }
        FeatureKind::BoundingBox => {
            let (labels, n) = label_components(g);
            let mut boxes = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n];
            for (i, &l) in labels.iter().enumerate() {
                if l > 0 {
                    let b = &mut boxes[l as usize - 1];
                    let (r, c) = (i / w, i % w);
                    *b = (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c));
                }
            }
            let mut v = vec![0; h * w];
            for (r0, c0, r1, c1) in boxes {
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        v[r * w + c] = 1;
                    }
                }
            }
            v
        }
        FeatureKind::HoleMask => {
            let mut outside = vec![false; h * w];
            let mut queue: VecDeque<usize> = (0..h * w)
                .filter(|&i| {
                    let (r, c) = (i / w, i % w);
                    cells[i] == 0 && (r == 0 || c == 0 || r + 1 == h || c + 1 == w)
                })
                .collect();
            for &i in &queue {
                outside[i] = true;
            }
            while let Some(i) = queue.pop_front() {
                for (nr, nc) in neighbors(h, w, i / w, i % w) {
                    let j = nr * w + nc;
                    if cells[j] == 0 && !outside[j] {
                        outside[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            (0..h * w).map(|i| (cells[i] == 0 && !outside[i]) as i32).collect()
        }
    };
    PixelFeature {
        kind,
        height: h,
        width: w,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(rows: &[&[u8]]) -> Grid {
        Grid::from_rows(rows).unwrap()
    }

    #[test]
    fn blank_grid_has_empty_masks() {
        let blank = g(&[&[0, 0], &[0, 0]]);
        for k in FeatureKind::ALL {
            assert!(compute_feature(&blank, k).values.iter().all(|&v| v == 0), "{k}");
        }
    }

    #[test]
    fn ring_has_single_hole() {
        let ring = g(&[&[3, 3, 3], &[3, 0, 3], &[3, 3, 3]]);
        assert_eq!(
            compute_feature(&ring, FeatureKind::HoleMask).values,
            vec![0, 0, 0, 0, 1, 0, 0, 0, 0]
        );
        assert_eq!(compute_feature(&ring, FeatureKind::ComponentId).values, vec![1, 1, 1, 1, 0, 1, 1, 1, 1]);
        assert!(compute_feature(&ring, FeatureKind::ObjectInterior).values.iter().all(|&v| v == 0));
        assert_eq!(compute_feature(&ring, FeatureKind::BoundingBox).values, vec![1; 9]);
    }

    #[test]
    fn shadow_below_column() {
        let col = g(&[&[2], &[0], &[0]]);
        assert_eq!(compute_feature(&col, FeatureKind::ShadowDown).values, vec![0, 1, 1]);
    }

    #[test]
    fn interior_of_filled_square() {
        let sq = g(&[
            &[0, 0, 0, 0, 0],
            &[0, 5, 5, 5, 0],
            &[0, 5, 5, 5, 0],
            &[0, 5, 5, 5, 0],
            &[0, 0, 0, 0, 0],
        ]);
        let v = compute_feature(&sq, FeatureKind::ObjectInterior).values;
        assert_eq!(v.iter().sum::<i32>(), 1);
        assert_eq!(v[12], 1);
    }

    #[test]
    fn components_and_boxes() {
        let grid = g(&[&[1, 0, 2], &[1, 0, 0], &[0, 0, 2]]);
        assert_eq!(
            compute_feature(&grid, FeatureKind::ComponentId).values,
            vec![1, 0, 2, 1, 0, 0, 0, 0, 3]
        );
        assert_eq!(
            compute_feature(&grid, FeatureKind::BoundingBox).values,
            vec![1, 0, 1, 1, 0, 0, 0, 0, 1]
        );
        let diag = g(&[&[4, 0], &[0, 4]]);
        assert_eq!(compute_feature(&diag, FeatureKind::ComponentId).values, vec![1, 0, 0, 2]);
    }

    #[test]
    fn names_round_trip() {
        for k in FeatureKind::ALL {
            assert_eq!(k.name().parse::<FeatureKind>().unwrap(), k);
        }
        assert!("nope".parse::<FeatureKind>().is_err());
    }
}
