//! Grids of colors, the dihedral group D4 acting on them, color relabelings
//! and the structural predicates shared by every other module.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest allowed side length of a grid.
pub const MAX_SIDE: usize = 30;
/// Number of distinct colors.
pub const NUM_COLORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid has no cells")]
    Empty,
    #[error("grid of {height}x{width} exceeds {MAX_SIDE}x{MAX_SIDE}")]
    Oversize { height: usize, width: usize },
    #[error("row {row} has width {found}, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("color value {0} outside 0..=9")]
    BadColor(i64),
    #[error("cell buffer has {found} cells, expected {expected}")]
    CellCount { expected: usize, found: usize },
}

/// A single ARC color, 0..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Color(u8);

impl Color {
    pub const BACKGROUND: Color = Color(0);

    pub fn new(value: u8) -> Result<Self, GridError> {
        if (value as usize) < NUM_COLORS {
            Ok(Color(value))
        } else {
            Err(GridError::BadColor(value as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Color> {
        (0..NUM_COLORS as u8).map(Color)
    }
}

impl TryFrom<u8> for Color {
    type Error = GridError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Color::new(value)
    }
}

impl From<Color> for u8 {
    fn from(c: Color) -> u8 {
        c.0
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of colors stored as a 10-bit mask. Serialized as a sorted list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct ColorSet(u16);

impl From<ColorSet> for Vec<u8> {
    fn from(s: ColorSet) -> Self {
        s.iter().map(Color::value).collect()
    }
}

impl TryFrom<Vec<u8>> for ColorSet {
    type Error = GridError;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        v.into_iter().map(Color::new).collect()
    }
}

impl ColorSet {
    pub const EMPTY: ColorSet = ColorSet(0);
    pub const ALL: ColorSet = ColorSet((1 << NUM_COLORS) - 1);

    pub fn insert(&mut self, c: Color) {
        self.0 |= 1 << c.0;
    }

    pub fn contains(self, c: Color) -> bool {
        self.0 & (1 << c.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ColorSet) -> ColorSet {
        ColorSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: ColorSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn complement(self) -> ColorSet {
        ColorSet(!self.0 & Self::ALL.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Color> {
        Color::all().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<Color> for ColorSet {
    fn from_iter<T: IntoIterator<Item = Color>>(iter: T) -> Self {
        let mut s = ColorSet::EMPTY;
        for c in iter {
            s.insert(c);
        }
        s
    }
}

/// Row/column position of a subgrid inside a larger grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Offset {
    pub row: usize,
    pub col: usize,
}

/// Immutable rectangular grid of colors, 1x1 up to 30x30, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<u8>>")]
pub struct Grid {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn new(height: usize, width: usize, cells: Vec<u8>) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::Empty);
        }
        if height > MAX_SIDE || width > MAX_SIDE {
            return Err(GridError::Oversize { height, width });
        }
        if cells.len() != height * width {
            return Err(GridError::CellCount {
                expected: height * width,
                found: cells.len(),
            });
        }
        if let Some(&bad) = cells.iter().find(|&&c| c as usize >= NUM_COLORS) {
            return Err(GridError::BadColor(bad as i64));
        }
        Ok(Grid {
            height,
            width,
            cells,
        })
    }

    pub fn filled(height: usize, width: usize, color: Color) -> Result<Self, GridError> {
        Grid::new(height, width, vec![color.0; height * width])
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, GridError> {
        let height = rows.len();
        if height == 0 {
            return Err(GridError::Empty);
        }
        let width = rows[0].as_ref().len();
        let mut cells = Vec::with_capacity(height * width);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(GridError::Ragged {
                    row: i,
                    expected: width,
                    found: row.len(),
                });
            }
            cells.extend_from_slice(row);
        }
        Grid::new(height, width, cells)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Bounds-checked read with signed coordinates.
    pub fn at(&self, row: isize, col: isize) -> Option<u8> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.cells[r * self.width..(r + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.width)
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.rows().map(<[u8]>::to_vec).collect()
    }

    /// Returns a copy with one cell replaced.
    pub fn with_cell(&self, row: usize, col: usize, color: Color) -> Grid {
        let mut g = self.clone();
        g.cells[row * self.width + col] = color.0;
        g
    }

    pub fn map_cells(&self, f: impl Fn(u8) -> u8) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            cells: self.cells.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn apply_rigid(&self, t: D4) -> Grid {
        apply_rigid(self, t)
    }

    pub fn apply_color_map(&self, p: &ColorPermutation) -> Grid {
        apply_color_map(self, p)
    }

    pub fn color_set(&self) -> ColorSet {
        color_set(self)
    }
}

impl TryFrom<Vec<Vec<i64>>> for Grid {
    type Error = GridError;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self, Self::Error> {
        let mut bytes = Vec::with_capacity(rows.len());
        for row in rows {
            let mut out = Vec::with_capacity(row.len());
            for v in row {
                if !(0..NUM_COLORS as i64).contains(&v) {
                    return Err(GridError::BadColor(v));
                }
                out.push(v as u8);
            }
            bytes.push(out);
        }
        Grid::from_rows(&bytes)
    }
}

impl From<Grid> for Vec<Vec<u8>> {
    fn from(g: Grid) -> Self {
        g.to_rows()
    }
}

/// Row-by-row lexicographic order, as for nested lists of integers.
impl Ord for Grid {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rows()
            .cmp(other.rows())
    }
}

impl PartialOrd for Grid {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.rows().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            for c in row {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

/// Element of the dihedral group of the square.
///
/// `Rot90` turns the grid clockwise, `FlipH` mirrors left-right, `FlipV`
/// mirrors top-bottom, `FlipMainDiag` is the transpose and `FlipAntiDiag`
/// reflects across the anti-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D4 {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    FlipMainDiag,
    FlipAntiDiag,
}

impl D4 {
    pub const ALL: [D4; 8] = [
        D4::Identity,
        D4::Rot90,
        D4::Rot180,
        D4::Rot270,
        D4::FlipH,
        D4::FlipV,
        D4::FlipMainDiag,
        D4::FlipAntiDiag,
    ];

    // Every element is written as rot90^k followed by (optionally) a prior flipH:
    // g = R^k . F^f.
    fn to_parts(self) -> (u8, bool) {
        match self {
            D4::Identity => (0, false),
            D4::Rot90 => (1, false),
            D4::Rot180 => (2, false),
            D4::Rot270 => (3, false),
            D4::FlipH => (0, true),
            D4::FlipAntiDiag => (1, true),
            D4::FlipV => (2, true),
            D4::FlipMainDiag => (3, true),
        }
    }

    fn from_parts(k: u8, flip: bool) -> D4 {
        match (k % 4, flip) {
            (0, false) => D4::Identity,
            (1, false) => D4::Rot90,
            (2, false) => D4::Rot180,
            (3, false) => D4::Rot270,
            (0, true) => D4::FlipH,
            (1, true) => D4::FlipAntiDiag,
            (2, true) => D4::FlipV,
            _ => D4::FlipMainDiag,
        }
    }

    /// `a.compose(b)` is "apply `b` first, then `a`".
    pub fn compose(self, b: D4) -> D4 {
        let (k1, f1) = self.to_parts();
        let (k2, f2) = b.to_parts();
        // F R^k = R^-k F
        let k = if f1 { k1 + 4 - k2 } else { k1 + k2 };
        D4::from_parts(k % 4, f1 ^ f2)
    }

    pub fn inverse(self) -> D4 {
        match self.to_parts() {
            (k, false) => D4::from_parts((4 - k) % 4, false),
            (_, true) => self,
        }
    }

    /// Whether the transform swaps height and width.
    pub fn transposes(self) -> bool {
        matches!(
            self,
            D4::Rot90 | D4::Rot270 | D4::FlipMainDiag | D4::FlipAntiDiag
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            D4::Identity => "identity",
            D4::Rot90 => "rot90",
            D4::Rot180 => "rot180",
            D4::Rot270 => "rot270",
            D4::FlipH => "flip_h",
            D4::FlipV => "flip_v",
            D4::FlipMainDiag => "flip_main_diag",
            D4::FlipAntiDiag => "flip_anti_diag",
        }
    }
}

pub fn compose(a: D4, b: D4) -> D4 {
    a.compose(b)
}

pub fn apply_rigid(g: &Grid, t: D4) -> Grid {
    let (h, w) = g.dims();
    let (nh, nw) = if t.transposes() { (w, h) } else { (h, w) };
    let mut cells = Vec::with_capacity(h * w);
    for i in 0..nh {
        for j in 0..nw {
            // source coordinates of output cell (i, j)
            let (r, c) = match t {
                D4::Identity => (i, j),
                D4::Rot90 => (h - 1 - j, i),
                D4::Rot180 => (h - 1 - i, w - 1 - j),
                D4::Rot270 => (j, w - 1 - i),
                D4::FlipH => (i, w - 1 - j),
                D4::FlipV => (h - 1 - i, j),
                D4::FlipMainDiag => (j, i),
                D4::FlipAntiDiag => (h - 1 - j, w - 1 - i),
            };
            cells.push(g.get(r, c));
        }
    }
    Grid {
        height: nh,
        width: nw,
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermutationError {
    #[error("color mapping is not a bijection on 0..=9")]
    NotBijective,
    #[error("background color must map to itself")]
    BackgroundMoved,
}

/// Bijective relabeling of the ten colors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPermutation", into = "RawPermutation")]
pub struct ColorPermutation {
    mapping: [u8; NUM_COLORS],
    fix_background: bool,
}

#[derive(Serialize, Deserialize)]
struct RawPermutation {
    mapping: [u8; NUM_COLORS],
    fix_background: bool,
}

impl TryFrom<RawPermutation> for ColorPermutation {
    type Error = PermutationError;
    fn try_from(raw: RawPermutation) -> Result<Self, Self::Error> {
        ColorPermutation::new(raw.mapping, raw.fix_background)
    }
}

impl From<ColorPermutation> for RawPermutation {
    fn from(p: ColorPermutation) -> Self {
        RawPermutation {
            mapping: p.mapping,
            fix_background: p.fix_background,
        }
    }
}

impl ColorPermutation {
    pub fn new(mapping: [u8; NUM_COLORS], fix_background: bool) -> Result<Self, PermutationError> {
        let mut seen = [false; NUM_COLORS];
        for &m in &mapping {
            let m = m as usize;
            if m >= NUM_COLORS || seen[m] {
                return Err(PermutationError::NotBijective);
            }
            seen[m] = true;
        }
        if fix_background && mapping[0] != 0 {
            return Err(PermutationError::BackgroundMoved);
        }
        Ok(ColorPermutation {
            mapping,
            fix_background,
        })
    }

    pub fn identity() -> Self {
        ColorPermutation {
            mapping: [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            fix_background: true,
        }
    }

    /// Transposition of two colors.
    pub fn swap(a: Color, b: Color) -> Self {
        let mut mapping = ColorPermutation::identity().mapping;
        mapping.swap(a.0 as usize, b.0 as usize);
        let fix_background = mapping[0] == 0;
        ColorPermutation {
            mapping,
            fix_background,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, fix_background: bool) -> Self {
        let mut mapping = ColorPermutation::identity().mapping;
        let start = usize::from(fix_background);
        mapping[start..].shuffle(rng);
        ColorPermutation {
            mapping,
            fix_background,
        }
    }

    pub fn apply(&self, c: u8) -> u8 {
        self.mapping[c as usize]
    }

    pub fn mapping(&self) -> &[u8; NUM_COLORS] {
        &self.mapping
    }

    pub fn fix_background(&self) -> bool {
        self.fix_background
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m as usize)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = [0u8; NUM_COLORS];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m as usize] = i as u8;
        }
        ColorPermutation {
            mapping: inv,
            fix_background: self.fix_background,
        }
    }
}

pub fn apply_color_map(g: &Grid, p: &ColorPermutation) -> Grid {
    g.map_cells(|c| p.apply(c))
}

pub fn color_set(g: &Grid) -> ColorSet {
    let mut s = ColorSet::EMPTY;
    for &c in g.cells() {
        s.insert(Color(c));
    }
    s
}

/// Topmost, then leftmost, offset at which `inner` occurs as a contiguous
/// equal block of `outer`.
pub fn contains_subgrid(outer: &Grid, inner: &Grid) -> Option<Offset> {
    let (oh, ow) = outer.dims();
    let (ih, iw) = inner.dims();
    if ih > oh || iw > ow {
        return None;
    }
    for r in 0..=(oh - ih) {
        'col: for c in 0..=(ow - iw) {
            for i in 0..ih {
                if outer.row(r + i)[c..c + iw] != *inner.row(i) {
                    continue 'col;
                }
            }
            return Some(Offset { row: r, col: c });
        }
    }
    None
}
