/// Dense per-path storage: `n_paths` rows of `len` entries, each entry a
/// `dim`-vector. Row-major, so one path is one contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct PathArray {
    n_paths: usize,
    len: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PathArray {
    pub fn zeros(n_paths: usize, len: usize, dim: usize) -> Self {
        Self { n_paths, len, dim, data: vec![0.0; n_paths * len * dim] }
    }

    pub fn filled(n_paths: usize, len: usize, dim: usize, value: f64) -> Self {
        Self { n_paths, len, dim, data: vec![value; n_paths * len * dim] }
    }

    /// Builds a scalar (`dim = 1`) array from per-path rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let len = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == len), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { n_paths: rows.len(), len, dim: 1, data }
    }

    pub fn from_fn(n_paths: usize, len: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_paths * len);
        for p in 0..n_paths {
            for i in 0..len {
                data.push(f(p, i));
            }
        }
        Self { n_paths, len, dim: 1, data }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.n_paths == 0 || self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_stride(&self) -> usize {
        self.len * self.dim
    }

    pub fn get(&self, path: usize, i: usize) -> &[f64] {
        let start = (path * self.len + i) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get_mut(&mut self, path: usize, i: usize) -> &mut [f64] {
        let start = (path * self.len + i) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// First component at `(path, i)`; the natural accessor for scalar arrays.
    pub fn value(&self, path: usize, i: usize) -> f64 {
        self.data[(path * self.len + i) * self.dim]
    }

    pub fn set(&mut self, path: usize, i: usize, value: f64) {
        self.data[(path * self.len + i) * self.dim] = value;
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let stride = self.row_stride();
        &self.data[path * stride..(path + 1) * stride]
    }

    pub fn path_mut(&mut self, path: usize) -> &mut [f64] {
        let stride = self.row_stride();
        &mut self.data[path * stride..(path + 1) * stride]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar array holding component `k` of every entry.
    pub fn component(&self, k: usize) -> PathArray {
        assert!(k < self.dim);
        let data = self.data.iter().skip(k).step_by(self.dim).copied().collect();
        PathArray { n_paths: self.n_paths, len: self.len, dim: 1, data }
    }

    /// Values of component 0 at entry `i`, one per path.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, i)).collect()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
