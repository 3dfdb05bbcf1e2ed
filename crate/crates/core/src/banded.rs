//! Square banded matrix with in-place LU factorisation (no pivoting).
//!
//! Used for the trajectory coefficient map, whose rows are ordered so that
//! every diagonal entry is structurally non-zero.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // Column-major band storage: entry (i, j) lives at data[j * width + (upper + i - j)].
    data: Vec<f64>,
    factorized: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
            factorized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(
            i + self.upper >= j && j + self.lower >= i,
            "({i}, {j}) outside band"
        );
        j * (self.lower + self.upper + 1) + (self.upper + i - j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.upper < j || j + self.lower < i {
            0.0
        } else {
            self.data[self.index(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.index(i, j);
        self.data[k] = value;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Doolittle LU in place. Returns `false` on a zero pivot.
    pub fn factorize(&mut self) -> bool {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return false;
            }
            let i_max = (k + self.lower).min(n - 1);
            for i in k + 1..=i_max {
                let idx = self.index(i, k);
                self.data[idx] /= pivot;
            }
            let j_max = (k + self.upper).min(n - 1);
            for j in k + 1..=j_max {
                let ukj = self.get(k, j);
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..=i_max {
                    let lik = self.get(i, k);
                    if lik != 0.0 {
                        let idx = self.index(i, j);
                        self.data[idx] -= lik * ukj;
                    }
                }
            }
        }
        self.factorized = true;
        true
    }

    /// Solves `A x = b` for every column of `b`, in place. Requires `factorize`.
    pub fn solve(&self, b: &mut DMatrix<f64>) {
        assert!(self.factorized, "solve called before factorize");
        let n = self.n;
        for j in 0..n {
            let i_max = (j + self.lower).min(n - 1);
            for i in j + 1..=i_max {
                let l = self.get(i, j);
                if l != 0.0 {
                    for c in 0..b.ncols() {
                        b[(i, c)] -= l * b[(j, c)];
                    }
                }
            }
        }
        for j in (0..n).rev() {
            let d = self.get(j, j);
            for c in 0..b.ncols() {
                b[(j, c)] /= d;
            }
            for i in j.saturating_sub(self.upper)..j {
                let u = self.get(i, j);
                if u != 0.0 {
                    for c in 0..b.ncols() {
                        b[(i, c)] -= u * b[(j, c)];
                    }
                }
            }
        }
    }

    /// Solves `A^T x = b` for every column of `b`, in place. Requires `factorize`.
    pub fn solve_transposed(&self, b: &mut DMatrix<f64>) {
        assert!(self.factorized, "solve called before factorize");
        let n = self.n;
        // U^T y = b
        for j in 0..n {
            let d = self.get(j, j);
            for c in 0..b.ncols() {
                b[(j, c)] /= d;
            }
            let i_max = (j + self.upper).min(n - 1);
            for i in j + 1..=i_max {
                let u = self.get(j, i);
                if u != 0.0 {
                    for c in 0..b.ncols() {
                        b[(i, c)] -= u * b[(j, c)];
                    }
                }
            }
        }
        // L^T x = y
        for j in (0..n).rev() {
            for i in j.saturating_sub(self.lower)..j {
                let l = self.get(j, i);
                if l != 0.0 {
                    for c in 0..b.ncols() {
                        b[(i, c)] -= l * b[(j, c)];
                    }
                }
            }
        }
    }
}
