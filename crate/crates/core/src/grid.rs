//! Regular grids on the torus `[0,1)^d`.

use nalgebra::DVector;

/// A regular lattice `{ (i_1/n_1, ..., i_d/n_d) }` on `[0,1)^d`, iterated in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGrid {
    resolution: Vec<usize>,
}

impl TorusGrid {
    pub fn new(resolution: Vec<usize>) -> Self {
        assert!(!resolution.is_empty() && resolution.iter().all(|&n| n >= 1));
        TorusGrid { resolution }
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing along each axis.
    pub fn spacing(&self) -> Vec<f64> {
        self.resolution.iter().map(|&n| 1.0 / n as f64).collect()
    }

    pub fn point(&self, flat: usize) -> DVector<f64> {
        let idx = self.multi_index(flat);
        DVector::from_iterator(
            self.dim(),
            idx.iter()
                .zip(&self.resolution)
                .map(|(&i, &n)| i as f64 / n as f64),
        )
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.resolution[axis];
            flat /= self.resolution[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (i, &n) in idx.iter().zip(&self.resolution) {
            flat = flat * n + i % n;
        }
        flat
    }

    /// Flat index of the neighbor one step along `axis` (torus wrap).
    pub fn neighbor(&self, flat: usize, axis: usize, step: isize) -> usize {
        let mut idx = self.multi_index(flat);
        let n = self.resolution[axis] as isize;
        idx[axis] = ((idx[axis] as isize + step).rem_euclid(n)) as usize;
        self.flat_index(&idx)
    }

    /// All unordered adjacent pairs along every axis, with torus wrap.
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for flat in 0..self.len() {
            for axis in 0..self.dim() {
                if self.resolution[axis] < 2 {
                    continue;
                }
                let nb = self.neighbor(flat, axis, 1);
                if nb != flat {
                    pairs.push((flat, nb));
                }
            }
        }
        pairs
    }
}
