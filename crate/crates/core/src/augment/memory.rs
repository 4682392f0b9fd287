//! Retrieval of similar tasks from an embedding store and the ways a
//! retrieved neighbor is folded into the adaptation data.
//!
//! Store file layout, all integers little-endian:
//!
//! ```text
//! u32 dim | u32 count | count x ( u32 id_len | id_len bytes utf-8 | dim x f32 )
//! ```

use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ttt::leave_one_out;
use crate::task::{GridPair, Task};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector for {id} has norm {norm}, expected 1")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("mode {mode:?} does not apply: {reason}")]
    ModeInapplicable { mode: MemoryMode, reason: String },
    #[error("corrupt store file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

const NORM_TOLERANCE: f64 = 1e-6;

/// Task ids paired with unit-norm vectors of one fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

/// Many readers, one writer.
pub type SharedEmbeddingStore = Arc<RwLock<EmbeddingStore>>;

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Scales `v` to unit length. A zero vector is returned unchanged.
pub fn normalize(v: &mut [f32]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn into_shared(self) -> SharedEmbeddingStore {
        Arc::new(RwLock::new(self))
    }

    pub fn insert(&mut self, id: impl Into<String>, v: &[f32]) -> Result<(), MemoryError> {
        let id = id.into();
        if v.len() != self.dim {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let n = norm(v);
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(MemoryError::NotUnitNorm { id, norm: n });
        }
        if self.ids.contains(&id) {
            return Err(MemoryError::DuplicateId(id));
        }
        self.ids.push(id);
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        let i = self.ids.iter().position(|x| x == id)?;
        Some(self.vector(i))
    }

    fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.vector(i)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len() * (4 + self.dim * 4 + 16));
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (id, v) in self.iter() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MemoryError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], MemoryError> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| MemoryError::Corrupt(format!("truncated at byte {pos}")))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        let read_u32 = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        let dim = read_u32(take(4)?);
        let count = read_u32(take(4)?);
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            let len = read_u32(take(4)?);
            let id = std::str::from_utf8(take(len)?)
                .map_err(|e| MemoryError::Corrupt(e.to_string()))?
                .to_string();
            let v: Vec<f32> = take(dim * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(id, &v)?;
        }
        if take(1).is_ok() {
            return Err(MemoryError::Corrupt("trailing bytes".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Keep neighbors whose similarity exceeds the store mean by the threshold.
    MeanMargin,
    /// Keep neighbors whose similarity is at least the threshold.
    AbsoluteFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub threshold: f64,
    pub top_k: usize,
    pub mode: ThresholdMode,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            threshold: 0.045,
            top_k: 3,
            mode: ThresholdMode::MeanMargin,
        }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Nearest stored tasks by cosine similarity, best first, ties by id.
pub fn retrieve_similar(
    query: &[f32],
    store: &EmbeddingStore,
    params: &RetrievalParams,
) -> Result<Vec<(String, f64)>, MemoryError> {
    if query.len() != store.dim() {
        return Err(MemoryError::DimensionMismatch {
            expected: store.dim(),
            found: query.len(),
        });
    }
    let mut scored: Vec<(String, f64)> = store.iter().map(|(id, v)| (id.to_string(), cosine(query, v))).collect();
    if scored.is_empty() {
        return Ok(scored);
    }
    let floor = match params.mode {
        ThresholdMode::AbsoluteFloor => params.threshold,
        ThresholdMode::MeanMargin => {
            scored.iter().map(|(_, s)| s).sum::<f64>() / scored.len() as f64 + params.threshold
        }
    };
    // A small slack so that exact matches at the boundary survive rounding.
    scored.retain(|(_, s)| *s >= floor - 1e-12);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(params.top_k);
    Ok(scored)
}

/// Cheap stand-in embedding: the color histogram of every known grid plus
/// mean height and width over 30, scaled to unit length.
pub fn toy_embedding(task: &Task) -> Vec<f32> {
    let mut v = vec![0f64; 12];
    let mut cells = 0usize;
    let mut grids = 0usize;
    for g in task.grids() {
        for &c in g.cells() {
            v[c as usize] += 1.0;
        }
        cells += g.cells().len();
        grids += 1;
        v[10] += g.height() as f64;
        v[11] += g.width() as f64;
    }
    for x in &mut v[..10] {
        *x /= cells.max(1) as f64;
    }
    v[10] /= grids.max(1) as f64 * 30.0;
    v[11] /= grids.max(1) as f64 * 30.0;
    let mut out: Vec<f32> = v.into_iter().map(|x| x as f32).collect();
    normalize(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryMode {
    ManySim,
    Aug0,
    Aug1,
    Aug2,
    Aug3,
}

impl MemoryMode {
    pub const ALL: [MemoryMode; 5] = [
        MemoryMode::ManySim,
        MemoryMode::Aug0,
        MemoryMode::Aug1,
        MemoryMode::Aug2,
        MemoryMode::Aug3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryMode::ManySim => "many_sim",
            MemoryMode::Aug0 => "aug0",
            MemoryMode::Aug1 => "aug1",
            MemoryMode::Aug2 => "aug2",
            MemoryMode::Aug3 => "aug3",
        }
    }
}

fn inapplicable(mode: MemoryMode, reason: impl Into<String>) -> MemoryError {
    MemoryError::ModeInapplicable {
        mode,
        reason: reason.into(),
    }
}

fn draw<R: Rng + ?Sized>(pool: &[GridPair], n: usize, rng: &mut R) -> Vec<GridPair> {
    pool.choose_multiple(rng, n).cloned().collect()
}

/// Builds adaptation tasks for `task` from a retrieved `neighbor`.
///
/// One task per leave-one-out base. Modes that append pairs draw
/// `n_train` pairs for training plus one for testing, so those tasks end up
/// with two test pairs.
pub fn memory_augment<R: Rng + ?Sized>(
    task: &Task,
    neighbor: &Task,
    mode: MemoryMode,
    rng: &mut R,
) -> Result<Vec<Task>, MemoryError> {
    let loo = |t: &Task| leave_one_out(t).map_err(|e| inapplicable(mode, e.to_string()));
    let (bases, pool, n_train) = match mode {
        MemoryMode::ManySim => {
            return Ok(loo(neighbor)?
                .into_iter()
                .map(|mut t| {
                    t.id = format!("{}-{}-{}", task.id, mode.name(), t.id);
                    t
                })
                .collect())
        }
        MemoryMode::Aug0 | MemoryMode::Aug2 => {
            let n_train = if mode == MemoryMode::Aug0 { 1 } else { 2 };
            (loo(neighbor)?, task.train.clone(), n_train)
        }
        MemoryMode::Aug1 => {
            if !neighbor.has_test_outputs() {
                return Err(inapplicable(mode, format!("{} has no test outputs", neighbor.id)));
            }
            let mut pool = neighbor.train.clone();
            pool.extend(neighbor.test.iter().filter(|p| p.output.is_some()).cloned());
            (loo(task)?, pool, 1)
        }
        MemoryMode::Aug3 => (loo(task)?, neighbor.train.clone(), 1),
    };
    if pool.len() < n_train + 1 {
        return Err(inapplicable(
            mode,
            format!("needs {} pairs to append, only {} available", n_train + 1, pool.len()),
        ));
    }
    Ok(bases
        .into_iter()
        .map(|base| {
            let mut picked = draw(&pool, n_train + 1, rng);
            let test_pair = picked.pop().expect("pool holds at least one pair");
            let mut t = base;
            t.id = format!("{}-{}-{}", task.id, mode.name(), t.id);
            t.train.extend(picked);
            t.test.push(test_pair);
            t
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(a: u8, b: u8) -> GridPair {
        GridPair::new(
            Grid::new(1, 2, vec![a, 0]).unwrap(),
            Grid::new(1, 1, vec![b]).unwrap(),
        )
    }

    fn task(id: &str, n: usize, test_output: bool) -> Task {
        let train = (0..n as u8).map(|i| pair(i, i + 1)).collect();
        let test = if test_output {
            pair(7, 8)
        } else {
            GridPair::hidden(Grid::new(1, 1, vec![7]).unwrap())
        };
        Task::new(id, train, vec![test]).unwrap()
    }

    fn unit(v: &[f32]) -> Vec<f32> {
        let mut v = v.to_vec();
        normalize(&mut v);
        v
    }

    fn sample_store() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3);
        s.insert("a", &unit(&[1.0, 0.0, 0.0])).unwrap();
        s.insert("b", &unit(&[0.0, 1.0, 0.0])).unwrap();
        s.insert("c", &unit(&[1.0, 1.0, 0.0])).unwrap();
        s.insert("d", &unit(&[0.0, 0.0, 1.0])).unwrap();
        s
    }

    #[test]
    fn exact_match_ranks_first() {
        let s = sample_store();
        let r = retrieve_similar(&unit(&[1.0, 0.0, 0.0]), &s, &RetrievalParams::default()).unwrap();
        assert_eq!(r[0].0, "a");
        assert!((r[0].1 - 1.0).abs() < 1e-6);
        assert!(r.len() <= 3);
        assert!(r.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn orthogonal_excluded_under_positive_margin() {
        let s = sample_store();
        for mode in [ThresholdMode::MeanMargin, ThresholdMode::AbsoluteFloor] {
            let p = RetrievalParams {
                threshold: 0.03,
                top_k: 10,
                mode,
            };
            let r = retrieve_similar(&unit(&[0.0, 0.0, 1.0]), &s, &p).unwrap();
            assert_eq!(r, vec![("d".to_string(), 1.0)]);
        }
    }

    #[test]
    fn ties_broken_by_id() {
        let mut s = EmbeddingStore::new(2);
        s.insert("z", &[1.0, 0.0]).unwrap();
        s.insert("m", &[1.0, 0.0]).unwrap();
        s.insert("q", &[0.0, 1.0]).unwrap();
        let r = retrieve_similar(&[1.0, 0.0], &s, &RetrievalParams::default()).unwrap();
        assert_eq!(r.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["m", "z"]);
    }

    #[test]
    fn dimension_and_norm_checks() {
        let mut s = EmbeddingStore::new(2);
        assert!(matches!(s.insert("x", &[1.0]), Err(MemoryError::DimensionMismatch { .. })));
        assert!(matches!(s.insert("x", &[1.0, 1.0]), Err(MemoryError::NotUnitNorm { .. })));
        assert!(matches!(
            retrieve_similar(&[1.0, 0.0, 0.0], &s, &RetrievalParams::default()),
            Err(MemoryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn binary_round_trip() {
        let s = sample_store();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &4u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], b'a');
        assert_eq!(EmbeddingStore::from_bytes(&bytes).unwrap(), s);
        assert!(EmbeddingStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.bin");
        s.save(&path).unwrap();
        assert_eq!(EmbeddingStore::load(&path).unwrap(), s);
    }

    #[test]
    fn shared_store_reads_concurrently() {
        let shared = sample_store().into_shared();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                let s = shared.clone();
                scope.spawn(move || {
                    let g = s.read().unwrap();
                    assert_eq!(g.len(), 4);
                });
            }
        });
        shared.write().unwrap().insert("e", &unit(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(shared.read().unwrap().len(), 5);
    }

    #[test]
    fn toy_embedding_is_unit_and_self_similar() {
        let t = task("t", 3, false);
        let e = toy_embedding(&t);
        assert_eq!(e.len(), 12);
        assert!((norm(&e) - 1.0).abs() < 1e-6);
        let mut s = EmbeddingStore::new(12);
        s.insert("t", &e).unwrap();
        s.insert("u", &toy_embedding(&task("u", 2, true))).unwrap();
        let p = RetrievalParams {
            threshold: 0.5,
            top_k: 2,
            mode: ThresholdMode::AbsoluteFloor,
        };
        let r = retrieve_similar(&e, &s, &p).unwrap();
        assert_eq!(r[0].0, "t");
    }

    #[test]
    fn modes_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = task("on", 3, false);
        let nb = task("nb", 3, true);

        let many = memory_augment(&online, &nb, MemoryMode::ManySim, &mut rng).unwrap();
        assert_eq!(many.len(), 3);
        assert!(many.iter().all(|t| t.train.len() == 2 && t.test.len() == 1));

        let a0 = memory_augment(&online, &nb, MemoryMode::Aug0, &mut rng).unwrap();
        assert_eq!(a0.len(), 3);
        assert!(a0.iter().all(|t| t.train.len() == 3 && t.test.len() == 2));

        let a2 = memory_augment(&online, &nb, MemoryMode::Aug2, &mut rng).unwrap();
        assert!(a2.iter().all(|t| t.train.len() == 4 && t.test.len() == 2));

        let a1 = memory_augment(&online, &nb, MemoryMode::Aug1, &mut rng).unwrap();
        assert!(a1.iter().all(|t| t.train.len() == 3 && t.test.len() == 2));

        let a3 = memory_augment(&online, &online, MemoryMode::Aug3, &mut rng).unwrap();
        assert!(a3.iter().all(|t| t.test.iter().all(|p| p.output.is_some())));
    }

    #[test]
    fn aug1_needs_neighbor_test_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = task("on", 3, false);
        let hidden = task("nb", 3, false);
        assert!(matches!(
            memory_augment(&online, &hidden, MemoryMode::Aug1, &mut rng),
            Err(MemoryError::ModeInapplicable { mode: MemoryMode::Aug1, .. })
        ));
        assert!(memory_augment(&online, &hidden, MemoryMode::Aug3, &mut rng).is_ok());
    }
}
