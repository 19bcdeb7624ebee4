//! Shared numeric helpers: compensated summation, small-vector norms, and a
//! dense symmetric matrix used for Hessians and matrix variation increments.

/// Neumaier compensated accumulator.
///
/// All Riemann sums, variation curves and telescoping identities in this
/// crate reduce through this type in a fixed sequential order, which keeps
/// accumulated rounding near one ulp of the true sum and makes every emitted
/// number independent of chunking or thread count.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Euclidean norm of the difference `a - b`.
pub(crate) fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm.
pub(crate) fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Length of the packed upper-triangular storage of a symmetric d x d matrix.
pub(crate) fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index of entry (i, j), i <= j, in packed row-major upper-triangular order.
pub(crate) fn packed_index(i: usize, j: usize, dim: usize) -> usize {
    debug_assert!(i <= j && j < dim);
    i * dim - i * (i + 1) / 2 + j
}

/// Frobenius norm of the difference of two packed symmetric matrices.
///
/// Off-diagonal packed entries represent two matrix entries, hence the
/// doubled weight.
pub(crate) fn frobenius_packed_diff(a: &[f64], b: &[f64], dim: usize) -> f64 {
    debug_assert_eq!(a.len(), packed_len(dim));
    debug_assert_eq!(b.len(), packed_len(dim));
    let mut acc = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let d = a[packed_index(i, j, dim)] - b[packed_index(i, j, dim)];
            let w = if i == j { 1.0 } else { 2.0 };
            acc += w * d * d;
        }
    }
    acc.sqrt()
}

/// Frobenius norm of one packed symmetric matrix (off-diagonal entries
/// counted twice).
pub(crate) fn packed_frobenius(a: &[f64], dim: usize) -> f64 {
    debug_assert_eq!(a.len(), packed_len(dim));
    let mut acc = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let v = a[packed_index(i, j, dim)];
            let w = if i == j { 1.0 } else { 2.0 };
            acc += w * v * v;
        }
    }
    acc.sqrt()
}

/// Whether the packed symmetric matrix has all eigenvalues > -tol.
///
/// Attempts the Cholesky factorization of `A + tol * I`; in exact arithmetic
/// the factorization exists iff `lambda_min(A) > -tol`, which is precisely the
/// positive-semidefiniteness-within-tolerance test the path and variation
/// invariants ask for. No eigensolver needed.
pub(crate) fn packed_is_psd(packed: &[f64], dim: usize, tol: f64) -> bool {
    debug_assert_eq!(packed.len(), packed_len(dim));
    // Dense lower-triangular working copy.
    let mut a = vec![0.0_f64; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v = packed[packed_index(i, j, dim)];
            a[i * dim + j] = v;
            a[j * dim + i] = v;
        }
        a[i * dim + i] += tol;
    }
    for k in 0..dim {
        let mut d = a[k * dim + k];
        for p in 0..k {
            d -= a[k * dim + p] * a[k * dim + p];
        }
        if !(d > 0.0) {
            // Zero pivot is only acceptable if the entire remaining row is
            // zero; treat it as failure unless exactly at the boundary with
            // a zero row, which the tol shift already absorbs.
            if d == 0.0 {
                let row_zero = (k + 1..dim).all(|i| {
                    let mut s = a[i * dim + k];
                    for p in 0..k {
                        s -= a[i * dim + p] * a[k * dim + p];
                    }
                    s == 0.0
                });
                if row_zero {
                    continue;
                }
            }
            return false;
        }
        let d = d.sqrt();
        a[k * dim + k] = d;
        for i in k + 1..dim {
            let mut s = a[i * dim + k];
            for p in 0..k {
                s -= a[i * dim + p] * a[k * dim + p];
            }
            a[i * dim + k] = s / d;
        }
    }
    true
}

/// Dense symmetric matrix with bitwise-enforced symmetry.
///
/// Used for Hessians and for quadratic-variation matrix increments. The
/// `symmetrize` constructor averages the two triangles and mirrors the
/// result, so `get(i, j)` and `get(j, i)` are always the same float.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix.
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// `scale * I`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    /// Builds from an arbitrary dense row-major square matrix by averaging
    /// the two triangles.
    pub fn symmetrize(dim: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), dim * dim);
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = dense[i * dim + i];
            for j in i + 1..dim {
                let v = 0.5 * (dense[i * dim + j] + dense[j * dim + i]);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    /// Builds from packed upper-triangular storage.
    pub fn from_packed(dim: usize, packed: &[f64]) -> Self {
        assert_eq!(packed.len(), packed_len(dim));
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = packed[packed_index(i, j, dim)];
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Quadratic form `a^T M a`; equals `tr(M a a^T)`.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += a[i] * self.data[i * self.dim + j] * a[j];
            }
        }
        acc
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Entrywise difference max norm.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Whether every eigenvalue exceeds `-tol`, via a Cholesky probe of
    /// `A + tol * I`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let mut packed = vec![0.0; packed_len(self.dim)];
        for i in 0..self.dim {
            for j in i..self.dim {
                packed[packed_index(i, j, self.dim)] = self.data[i * self.dim + j];
            }
        }
        packed_is_psd(&packed, self.dim, tol)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
