//! Minimal sparse matrix kit: CSC storage, triplet assembly, a left-looking
//! LU with partial pivoting (for the unsymmetric power-flow Jacobian) and an
//! LDLᵀ factorization for quasi-definite KKT systems (for the QP solver),
//! with fill-reducing ordering from the `amd` crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is singular at pivot {0}")]
    Singular(usize),
    #[error("matrix dimensions inconsistent: {0}")]
    Dimension(String),
}

/// Triplet (COO) accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    /// Push without the row-bound check, for builders that grow `nrows` as
    /// they go.
    pub fn push_unchecked(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(col < self.ncols);
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
            if row >= self.nrows {
                self.nrows = row + 1;
            }
        }
    }

    pub fn parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.rows, &self.cols, &self.vals)
    }

    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self.nrows, self.ncols, &self.rows, &self.cols, &self.vals)
    }
}

/// Compressed sparse column matrix with sorted, duplicate-free row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix { nrows, ncols, colptr: vec![0; ncols + 1], rowind: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Self {
        let mut count = vec![0usize; ncols + 1];
        for &c in cols {
            count[c + 1] += 1;
        }
        for c in 0..ncols {
            count[c + 1] += count[c];
        }
        let colptr_tmp = count.clone();
        let nnz = rows.len();
        let mut ri = vec![0usize; nnz];
        let mut vx = vec![0.0f64; nnz];
        let mut next = colptr_tmp;
        for k in 0..nnz {
            let c = cols[k];
            let p = next[c];
            ri[p] = rows[k];
            vx[p] = vals[k];
            next[c] += 1;
        }
        // sort each column and merge duplicates
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowind = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..ncols {
            scratch.clear();
            let (lo, hi) = (count[c], count[c + 1]);
            for p in lo..hi {
                scratch.push((ri[p], vx[p]));
            }
            scratch.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let row = scratch[i].0;
                let mut v = scratch[i].1;
                let mut j = i + 1;
                while j < scratch.len() && scratch[j].0 == row {
                    v += scratch[j].1;
                    j += 1;
                }
                if v != 0.0 {
                    rowind.push(row);
                    values.push(v);
                }
                i = j;
            }
            colptr[c + 1] = rowind.len();
        }
        CscMatrix { nrows, ncols, colptr, rowind, values }
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// y = A·x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.matvec_acc(x, y);
    }

    /// y += A·x
    pub fn matvec_acc(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowind[p]] += self.values[p] * xc;
            }
        }
    }

    /// y = Aᵀ·x
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[c] = acc;
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rowind {
            count[r + 1] += 1;
        }
        for r in 0..self.nrows {
            count[r + 1] += count[r];
        }
        let mut colptr = count.clone();
        let mut rowind = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowind[p];
                let q = colptr[r];
                rowind[q] = c;
                values[q] = self.values[p];
                colptr[r] += 1;
            }
        }
        CscMatrix { nrows: self.ncols, ncols: self.nrows, colptr: count, rowind, values }
    }

    /// Upper triangle (including diagonal) of a square matrix.
    pub fn upper_triangle(&self) -> CscMatrix {
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                if self.rowind[p] <= c {
                    rowind.push(self.rowind[p]);
                    values.push(self.values[p]);
                }
            }
            colptr[c + 1] = rowind.len();
        }
        CscMatrix { nrows: self.nrows, ncols: self.ncols, colptr, rowind, values }
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.ncols];
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                out[c] = out[c].max(self.values[p].abs());
            }
        }
        out
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for p in 0..self.nnz() {
            let r = self.rowind[p];
            out[r] = out[r].max(self.values[p].abs());
        }
        out
    }

    /// In-place A ← diag(r)·A·diag(c).
    pub fn scale(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.values[p] *= row_scale[self.rowind[p]] * col_scale[c];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// LU with partial pivoting (left-looking, sparse triangular solves)
// ---------------------------------------------------------------------------

pub struct LuFactor {
    n: usize,
    l: CscMatrix,
    u: CscMatrix,
    pinv: Vec<usize>,
}

/// Factor a square matrix with partial pivoting.
pub fn lu_factor(a: &CscMatrix) -> Result<LuFactor, SparseError> {
    let n = a.ncols;
    if a.nrows != n {
        return Err(SparseError::Dimension("LU requires a square matrix".into()));
    }
    let mut l_colptr = vec![0usize; n + 1];
    let mut l_rowind: Vec<usize> = Vec::with_capacity(4 * a.nnz());
    let mut l_values: Vec<f64> = Vec::with_capacity(4 * a.nnz());
    let mut u_colptr = vec![0usize; n + 1];
    let mut u_rowind: Vec<usize> = Vec::with_capacity(4 * a.nnz());
    let mut u_values: Vec<f64> = Vec::with_capacity(4 * a.nnz());

    const UNSET: usize = usize::MAX;
    let mut pinv = vec![UNSET; n];
    let mut x = vec![0.0f64; n];
    let mut xi = vec![0usize; n]; // topological output
    let mut marked = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    let mut pstack = Vec::with_capacity(n);

    for k in 0..n {
        // symbolic: reach of A(:,k) through the pivotal columns of L
        let mut top = n;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let i = a.rowind[p];
            if marked[i] {
                continue;
            }
            // iterative DFS
            stack.clear();
            pstack.clear();
            stack.push(i);
            marked[i] = true;
            pstack.push(match pinv[i] {
                UNSET => 0..0,
                j => (l_colptr[j] + 1)..l_colptr[j + 1],
            });
            while let Some(&node) = stack.last() {
                let range = pstack.last_mut().unwrap();
                let mut descended = false;
                while let Some(p2) = range.next() {
                    let child = l_rowind[p2];
                    if !marked[child] {
                        marked[child] = true;
                        stack.push(child);
                        pstack.push(match pinv[child] {
                            UNSET => 0..0,
                            j => (l_colptr[j] + 1)..l_colptr[j + 1],
                        });
                        descended = true;
                        break;
                    }
                }
                if !descended {
                    stack.pop();
                    pstack.pop();
                    top -= 1;
                    xi[top] = node;
                }
            }
        }
        // numeric sparse triangular solve x = L \ A(:,k)
        for &i in &xi[top..n] {
            x[i] = 0.0;
        }
        for p in a.colptr[k]..a.colptr[k + 1] {
            x[a.rowind[p]] = a.values[p];
        }
        for t in top..n {
            let i = xi[t];
            let j = pinv[i];
            if j == UNSET {
                continue;
            }
            let xj = x[i];
            if xj != 0.0 {
                for p in (l_colptr[j] + 1)..l_colptr[j + 1] {
                    x[l_rowind[p]] -= l_values[p] * xj;
                }
            }
        }
        // pivot: largest magnitude among non-pivotal rows
        let mut ipiv = UNSET;
        let mut amax = 0.0f64;
        for &i in &xi[top..n] {
            if pinv[i] == UNSET {
                let t = x[i].abs();
                if t > amax {
                    amax = t;
                    ipiv = i;
                }
            }
        }
        if ipiv == UNSET || amax == 0.0 {
            return Err(SparseError::Singular(k));
        }
        pinv[ipiv] = k;
        let pivot = x[ipiv];

        // U column k: already-pivotal rows plus the pivot itself
        for &i in &xi[top..n] {
            if pinv[i] != UNSET && i != ipiv {
                u_rowind.push(pinv[i]);
                u_values.push(x[i]);
            }
        }
        u_rowind.push(k);
        u_values.push(pivot);
        u_colptr[k + 1] = u_rowind.len();

        // L column k: unit diagonal first, then subdiagonal entries
        l_rowind.push(ipiv);
        l_values.push(1.0);
        for &i in &xi[top..n] {
            if pinv[i] == UNSET {
                l_rowind.push(i);
                l_values.push(x[i] / pivot);
            }
            marked[i] = false;
        }
        l_colptr[k + 1] = l_rowind.len();
    }
    // remap L's rows into pivot order
    for r in l_rowind.iter_mut() {
        *r = pinv[*r];
    }
    let l = CscMatrix { nrows: n, ncols: n, colptr: l_colptr, rowind: l_rowind, values: l_values };
    // sort U columns (rows were appended in reach order)
    let u = CscMatrix::from_triplets(
        n,
        n,
        &u_rowind,
        &(0..n)
            .flat_map(|c| std::iter::repeat(c).take(u_colptr[c + 1] - u_colptr[c]))
            .collect::<Vec<_>>(),
        &u_values,
    );
    Ok(LuFactor { n, l, u, pinv })
}

impl LuFactor {
    /// Solve A·x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x = vec![0.0f64; n];
        for i in 0..n {
            x[self.pinv[i]] = b[i];
        }
        // L is unit lower (diagonal stored first per column)
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in (self.l.colptr[j] + 1)..self.l.colptr[j + 1] {
                    x[self.l.rowind[p]] -= self.l.values[p] * xj;
                }
            }
        }
        // U is upper with diagonal last per column
        for j in (0..n).rev() {
            let hi = self.u.colptr[j + 1];
            let lo = self.u.colptr[j];
            let diag = self.u.values[hi - 1];
            debug_assert_eq!(self.u.rowind[hi - 1], j);
            x[j] /= diag;
            let xj = x[j];
            if xj != 0.0 {
                for p in lo..hi - 1 {
                    x[self.u.rowind[p]] -= self.u.values[p] * xj;
                }
            }
        }
        b.copy_from_slice(&x);
    }
}

// ---------------------------------------------------------------------------
// LDLᵀ for quasi-definite matrices (upper-triangular input)
// ---------------------------------------------------------------------------

pub struct LdlFactor {
    n: usize,
    l_colptr: Vec<usize>,
    l_rowind: Vec<usize>,
    l_values: Vec<f64>,
    d_inv: Vec<f64>,
    perm: Vec<usize>, // new -> old
}

/// Fill-reducing ordering (approximate minimum degree) for a symmetric
/// matrix given by its upper triangle. Falls back to the natural order if
/// AMD rejects the pattern.
pub fn amd_order(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let colptr: Vec<i64> = upper.colptr.iter().map(|&p| p as i64).collect();
    let rowind: Vec<i64> = upper.rowind.iter().map(|&r| r as i64).collect();
    match amd::order::<i64>(n as i64, &colptr, &rowind, &amd::Control::default()) {
        Ok((p, _pinv, _info)) => p.into_iter().map(|v| v as usize).collect(),
        Err(_) => (0..n).collect(),
    }
}

/// Symmetric permutation of an upper-triangular matrix; the result is upper
/// triangular in the new ordering.
fn permute_upper(upper: &CscMatrix, iperm: &[usize]) -> CscMatrix {
    let n = upper.ncols;
    let mut rows = Vec::with_capacity(upper.nnz());
    let mut cols = Vec::with_capacity(upper.nnz());
    let mut vals = Vec::with_capacity(upper.nnz());
    for c in 0..n {
        for p in upper.colptr[c]..upper.colptr[c + 1] {
            let r = upper.rowind[p];
            let (nr, nc) = (iperm[r], iperm[c]);
            let (nr, nc) = if nr <= nc { (nr, nc) } else { (nc, nr) };
            rows.push(nr);
            cols.push(nc);
            vals.push(upper.values[p]);
        }
    }
    CscMatrix::from_triplets(n, n, &rows, &cols, &vals)
}

/// LDLᵀ without pivoting. `upper` must be the upper triangle of a
/// quasi-definite matrix with every diagonal entry present.
pub fn ldl_factor(upper: &CscMatrix, perm: Option<Vec<usize>>) -> Result<LdlFactor, SparseError> {
    let n = upper.ncols;
    if upper.nrows != n {
        return Err(SparseError::Dimension("LDL requires a square matrix".into()));
    }
    let perm = perm.unwrap_or_else(|| (0..n).collect());
    let mut iperm = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    let a = permute_upper(upper, &iperm);

    const UNSET: usize = usize::MAX;
    // elimination tree and column counts of L
    let mut etree = vec![UNSET; n];
    let mut l_nz = vec![0usize; n];
    let mut work = vec![UNSET; n];
    for j in 0..n {
        work[j] = j;
        for p in a.colptr[j]..a.colptr[j + 1] {
            let mut i = a.rowind[p];
            if i > j {
                return Err(SparseError::Dimension("ldl_factor input must be upper triangular".into()));
            }
            while work[i] != j {
                if etree[i] == UNSET {
                    etree[i] = j;
                }
                l_nz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }

    let mut l_colptr = vec![0usize; n + 1];
    for j in 0..n {
        l_colptr[j + 1] = l_colptr[j] + l_nz[j];
    }
    let mut l_rowind = vec![0usize; l_colptr[n]];
    let mut l_values = vec![0.0f64; l_colptr[n]];
    let mut d = vec![0.0f64; n];
    let mut d_inv = vec![0.0f64; n];

    let mut y_val = vec![0.0f64; n];
    let mut y_marker = vec![false; n];
    let mut y_idx = vec![0usize; n];
    let mut elim = vec![0usize; n];
    let mut next_space = l_colptr[..n].to_vec();

    for k in 0..n {
        let mut nnz_y = 0usize;
        d[k] = 0.0;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let i = a.rowind[p];
            if i == k {
                d[k] = a.values[p];
                continue;
            }
            y_val[i] = a.values[p];
            if !y_marker[i] {
                y_marker[i] = true;
                elim[0] = i;
                let mut nnz_e = 1usize;
                let mut next = etree[i];
                while next != UNSET && next < k {
                    if y_marker[next] {
                        break;
                    }
                    y_marker[next] = true;
                    elim[nnz_e] = next;
                    nnz_e += 1;
                    next = etree[next];
                }
                while nnz_e > 0 {
                    nnz_e -= 1;
                    y_idx[nnz_y] = elim[nnz_e];
                    nnz_y += 1;
                }
            }
        }
        for t in (0..nnz_y).rev() {
            let c = y_idx[t];
            let tmp = next_space[c];
            let yv = y_val[c];
            for p in l_colptr[c]..tmp {
                y_val[l_rowind[p]] -= l_values[p] * yv;
            }
            l_rowind[tmp] = k;
            let lkc = yv * d_inv[c];
            l_values[tmp] = lkc;
            d[k] -= yv * lkc;
            next_space[c] += 1;
            y_val[c] = 0.0;
            y_marker[c] = false;
        }
        if d[k] == 0.0 {
            return Err(SparseError::Singular(k));
        }
        d_inv[k] = 1.0 / d[k];
    }

    Ok(LdlFactor { n, l_colptr, l_rowind, l_values, d_inv, perm })
}

impl LdlFactor {
    /// Solve A·x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x = vec![0.0f64; n];
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                    x[self.l_rowind[p]] -= self.l_values[p] * xj;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.d_inv[i];
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                acc -= self.l_values[p] * x[self.l_rowind[p]];
            }
            x[j] = acc;
        }
        for i in 0..n {
            b[self.perm[i]] = x[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(v, xi)| v * xi).sum()).collect()
    }

    fn to_csc(a: &[Vec<f64>]) -> CscMatrix {
        let mut t = Triplets::new(a.len(), a[0].len());
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t.push(i, j, v);
            }
        }
        t.to_csc()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 0, -1.0);
        let m = t.to_csc();
        assert_eq!(m.nnz(), 2);
        let mut y = vec![0.0; 2];
        m.matvec(&[1.0, 0.0], &mut y);
        assert_eq!(y, vec![3.0, -1.0]);
    }

    #[test]
    fn lu_solves_small_systems() {
        let a = vec![
            vec![2.0, 1.0, 0.0, 0.0],
            vec![1.0, 3.0, 1.0, 0.0],
            vec![0.0, 1.0, 4.0, 1.0],
            vec![5.0, 0.0, 1.0, 2.0],
        ];
        let csc = to_csc(&a);
        let f = lu_factor(&csc).unwrap();
        let x_true = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = dense_matvec(&a, &x_true);
        f.solve(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn lu_random_vs_dense() {
        // deterministic pseudo-random fill
        let n = 40;
        let mut state = 88172645463325252u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0 + rng();
            for _ in 0..4 {
                let j = ((rng() + 0.5) * n as f64) as usize % n;
                a[i][j] += rng();
            }
        }
        let csc = to_csc(&a);
        let f = lu_factor(&csc).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = dense_matvec(&a, &x_true);
        f.solve(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn lu_singular_detected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(lu_factor(&to_csc(&a)), Err(SparseError::Singular(_))));
    }

    #[test]
    fn ldl_quasidefinite_kkt() {
        // [[P+σI, Aᵀ],[A, -I]] style system
        let m = vec![
            vec![3.0, 1.0, 0.0, 1.0, 2.0],
            vec![1.0, 2.0, 0.5, 0.0, 1.0],
            vec![0.0, 0.5, 4.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0, -1.5, 0.0],
            vec![2.0, 1.0, 0.0, 0.0, -2.0],
        ];
        let csc = to_csc(&m);
        let upper = csc.upper_triangle();
        for perm in [None, Some(amd_order(&upper))] {
            let f = ldl_factor(&upper, perm).unwrap();
            let x_true = vec![0.3, -1.0, 2.0, 0.7, -0.1];
            let mut b = dense_matvec(&m, &x_true);
            f.solve(&mut b);
            for (got, want) in b.iter().zip(&x_true) {
                assert_abs_diff_eq!(got, want, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn transpose_and_matvec_agree() {
        let a = vec![vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]];
        let csc = to_csc(&a);
        let at = csc.transpose();
        let mut y1 = vec![0.0; 3];
        csc.matvec_t(&[1.0, 2.0], &mut y1);
        let mut y2 = vec![0.0; 3];
        at.matvec(&[1.0, 2.0], &mut y2);
        assert_eq!(y1, y2);
    }
}
