//! Compressed-row view of a dense kernel, used to push blocks of row
//! vectors through many multiplications. Storage of record stays dense.

use nalgebra::DMatrix;

#[derive(Clone, Debug, Default)]
pub struct SparseRows {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut rows = SparseRows::with_dim(n);
        for i in 0..n {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    rows.push(j, v);
                }
            }
            rows.end_row();
        }
        rows
    }

    pub(crate) fn with_dim(n: usize) -> Self {
        SparseRows {
            n,
            offsets: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub(crate) fn clear(&mut self) {
        self.offsets.clear();
        self.offsets.push(0);
        self.cols.clear();
        self.vals.clear();
    }

    pub(crate) fn push(&mut self, col: usize, val: f64) {
        self.cols.push(col);
        self.vals.push(val);
    }

    pub(crate) fn end_row(&mut self) {
        self.offsets.push(self.cols.len());
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// Largest `-M[i][i]` over rows, for a generator with explicit diagonal.
    pub(crate) fn max_exit_rate(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .filter(|&(j, _)| j == i)
                    .map(|(_, v)| -v)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `I + M / lambda` for a generator `M` with explicit diagonal.
    pub(crate) fn uniformized(&self, lambda: f64) -> SparseRows {
        let mut out = SparseRows::with_dim(self.n);
        for i in 0..self.n {
            let mut diagonal = false;
            for (j, v) in self.row(i) {
                if j == i {
                    diagonal = true;
                    // rounding can push the diagonal slightly negative when lambda equals the exit rate
                    out.push(j, (1.0 + v / lambda).max(0.0));
                } else {
                    out.push(j, v / lambda);
                }
            }
            // a row with no stored diagonal has exit rate 0
            if !diagonal {
                out.push(i, 1.0);
            }
            out.end_row();
        }
        out
    }

    /// `out = block * M` for a row-major block of `block.len() / n` row vectors.
    pub fn left_mul_block(&self, block: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(block.len(), out.len());
        out.iter_mut().for_each(|x| *x = 0.0);
        for (src, dst) in block.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for (i, &x) in src.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let range = self.offsets[i]..self.offsets[i + 1];
                for (&j, &v) in self.cols[range.clone()].iter().zip(&self.vals[range]) {
                    dst[j] += x * v;
                }
            }
        }
    }
}
