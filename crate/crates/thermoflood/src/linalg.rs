//! Sparse block linear algebra for the coupled step systems: block CSR
//! storage, block ILU(k) preconditioning on the cell graph, and restarted
//! GMRES with right preconditioning. Transposed solves are provided for the
//! adjoint sweep. A dense LU path backs small systems and acts as the
//! fallback when the iterative solve fails.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
}

/// Square sparse matrix of uniform bs×bs dense blocks in CSR layout.
#[derive(Debug, Clone)]
pub struct BlockCsr {
    pub n: usize,
    pub bs: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockCsr {
    /// Symbolic construction from (row, col) block pairs; the diagonal is
    /// always included. Columns are sorted within each row.
    pub fn from_pattern(n: usize, bs: usize, pairs: &[(usize, usize)]) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, c) in cols.iter_mut().enumerate() {
            c.push(i);
        }
        for &(i, j) in pairs {
            cols[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            col_idx.extend_from_slice(c);
            row_ptr.push(col_idx.len());
        }
        let blocks = vec![DMatrix::zeros(bs, bs); col_idx.len()];
        BlockCsr {
            n,
            bs,
            row_ptr,
            col_idx,
            blocks,
        }
    }

    pub fn zero(&mut self) {
        for b in &mut self.blocks {
            b.fill(0.0);
        }
    }

    /// Index of block (i, j) in `blocks`, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|off| lo + off)
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut DMatrix<f64> {
        let idx = self.find(i, j).expect("block not in pattern");
        &mut self.blocks[idx]
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let bs = self.bs;
        let mut y = DVector::zeros(self.n * bs);
        for i in 0..self.n {
            let mut yi = DVector::zeros(bs);
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                yi.gemv(1.0, &self.blocks[idx], &x.rows(j * bs, bs), 1.0);
            }
            y.rows_mut(i * bs, bs).copy_from(&yi);
        }
        y
    }

    pub fn matvec_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        let bs = self.bs;
        let mut y = DVector::zeros(self.n * bs);
        for i in 0..self.n {
            let xi = x.rows(i * bs, bs).into_owned();
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                let mut yj = y.rows_mut(j * bs, bs);
                yj.gemv_tr(1.0, &self.blocks[idx], &xi, 1.0);
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let bs = self.bs;
        let mut m = DMatrix::zeros(self.n * bs, self.n * bs);
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                m.view_mut((i * bs, j * bs), (bs, bs))
                    .copy_from(&self.blocks[idx]);
            }
        }
        m
    }
}

/// Level-of-fill pattern: entries of level ≤ `levels` are kept, where
/// original entries have level 0 and fill (i,j) created through k gets
/// level(i,k) + level(k,j) + 1.
pub fn fill_pattern(a: &BlockCsr, levels: usize) -> Vec<(usize, usize)> {
    let n = a.n;
    let mut rows: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut work: Vec<(usize, usize)> = (a.row_ptr[i]..a.row_ptr[i + 1])
            .map(|idx| (a.col_idx[idx], 0usize))
            .collect();
        work.sort_unstable_by_key(|(c, _)| *c);
        let mut pos = 0;
        while pos < work.len() {
            let (k, lev_ik) = work[pos];
            pos += 1;
            if k >= i {
                continue;
            }
            for &(j, lev_kj) in &rows[k] {
                if j <= k {
                    continue;
                }
                let lev = lev_ik + lev_kj + 1;
                if lev > levels {
                    continue;
                }
                match work.iter_mut().find(|(c, _)| *c == j) {
                    Some((_, l)) => {
                        if lev < *l {
                            *l = lev;
                        }
                    }
                    None => work.push((j, lev)),
                }
            }
            work.sort_unstable_by_key(|(c, _)| *c);
        }
        rows.push(work);
    }
    let mut pairs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Block ILU factorization over a (possibly fill-extended) pattern.
pub struct BlockIlu {
    factor: BlockCsr,
    /// Inverted diagonal blocks.
    diag_inv: Vec<DMatrix<f64>>,
    /// Column-wise adjacency (row, block index) for transpose solves.
    col_entries: Vec<Vec<(usize, usize)>>,
}

impl BlockIlu {
    /// Symbolic setup: the factor pattern is A's pattern plus fill of the
    /// requested level.
    pub fn symbolic(a: &BlockCsr, levels: usize) -> Self {
        let pairs = fill_pattern(a, levels);
        let factor = BlockCsr::from_pattern(a.n, a.bs, &pairs);
        let mut col_entries = vec![Vec::new(); a.n];
        for i in 0..factor.n {
            for idx in factor.row_ptr[i]..factor.row_ptr[i + 1] {
                col_entries[factor.col_idx[idx]].push((i, idx));
            }
        }
        BlockIlu {
            diag_inv: vec![DMatrix::zeros(a.bs, a.bs); a.n],
            factor,
            col_entries,
        }
    }

    /// Numeric factorization of `a` on the symbolic pattern.
    pub fn factor(&mut self, a: &BlockCsr) -> Result<(), LinearError> {
        let n = a.n;
        self.factor.zero();
        for i in 0..n {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[idx];
                if let Some(fidx) = self.factor.find(i, j) {
                    self.factor.blocks[fidx].copy_from(&a.blocks[idx]);
                }
            }
        }
        for i in 0..n {
            let (lo, hi) = (self.factor.row_ptr[i], self.factor.row_ptr[i + 1]);
            for idx_ik in lo..hi {
                let k = self.factor.col_idx[idx_ik];
                if k >= i {
                    break;
                }
                let lik = &self.factor.blocks[idx_ik] * &self.diag_inv[k];
                self.factor.blocks[idx_ik].copy_from(&lik);
                for idx_kj in self.factor.row_ptr[k]..self.factor.row_ptr[k + 1] {
                    let j = self.factor.col_idx[idx_kj];
                    if j <= k {
                        continue;
                    }
                    if let Some(idx_ij) = self.factor.find(i, j) {
                        let update = &lik * &self.factor.blocks[idx_kj];
                        self.factor.blocks[idx_ij] -= update;
                    }
                }
            }
            let diag_idx = self.factor.find(i, i).expect("diagonal block");
            let inv = self.factor.blocks[diag_idx]
                .clone()
                .try_inverse()
                .filter(|m| m.iter().all(|v| v.is_finite()))
                .ok_or_else(|| LinearError::SolveFailed(format!("singular ILU pivot block {i}")))?;
            self.diag_inv[i] = inv;
        }
        Ok(())
    }

    /// Apply M⁻¹ = (LU)⁻¹.
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let bs = self.factor.bs;
        let n = self.factor.n;
        let mut y = DVector::zeros(n * bs);
        for i in 0..n {
            let mut yi = r.rows(i * bs, bs).into_owned();
            for idx in self.factor.row_ptr[i]..self.factor.row_ptr[i + 1] {
                let j = self.factor.col_idx[idx];
                if j >= i {
                    break;
                }
                yi.gemv(-1.0, &self.factor.blocks[idx], &y.rows(j * bs, bs), 1.0);
            }
            y.rows_mut(i * bs, bs).copy_from(&yi);
        }
        let mut x = DVector::zeros(n * bs);
        for i in (0..n).rev() {
            let mut xi = y.rows(i * bs, bs).into_owned();
            for idx in self.factor.row_ptr[i]..self.factor.row_ptr[i + 1] {
                let j = self.factor.col_idx[idx];
                if j <= i {
                    continue;
                }
                xi.gemv(-1.0, &self.factor.blocks[idx], &x.rows(j * bs, bs), 1.0);
            }
            let solved = &self.diag_inv[i] * &xi;
            x.rows_mut(i * bs, bs).copy_from(&solved);
        }
        x
    }

    /// Apply M⁻ᵀ = (LU)⁻ᵀ: solve Uᵀw = r ascending, then Lᵀx = w descending.
    pub fn solve_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        let bs = self.factor.bs;
        let n = self.factor.n;
        let mut w = DVector::zeros(n * bs);
        for i in 0..n {
            let mut wi = r.rows(i * bs, bs).into_owned();
            for &(row, idx) in &self.col_entries[i] {
                if row >= i {
                    continue;
                }
                wi.gemv_tr(-1.0, &self.factor.blocks[idx], &w.rows(row * bs, bs), 1.0);
            }
            let solved = self.diag_inv[i].transpose() * wi;
            w.rows_mut(i * bs, bs).copy_from(&solved);
        }
        let mut x = DVector::zeros(n * bs);
        for i in (0..n).rev() {
            let mut xi = w.rows(i * bs, bs).into_owned();
            for &(row, idx) in &self.col_entries[i] {
                if row <= i {
                    continue;
                }
                xi.gemv_tr(-1.0, &self.factor.blocks[idx], &x.rows(row * bs, bs), 1.0);
            }
            x.rows_mut(i * bs, bs).copy_from(&xi);
        }
        x
    }
}

/// Iteration statistics of one GMRES call.
#[derive(Debug, Clone, Copy, Default)]
pub struct GmresStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES with right preconditioning: solves A·x = b via
/// A·M⁻¹·t = b, x₀ = 0.
pub fn gmres(
    apply_a: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    apply_m_inv: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<(DVector<f64>, GmresStats), LinearError> {
    let n = b.len();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok((DVector::zeros(n), GmresStats::default()));
    }
    let mut x = DVector::zeros(n);
    let mut total_iters = 0usize;

    loop {
        let r = b - apply_a(&x);
        let r_norm = r.norm();
        if r_norm / b_norm <= tol {
            return Ok((
                x,
                GmresStats {
                    iterations: total_iters,
                    relative_residual: r_norm / b_norm,
                },
            ));
        }
        if total_iters >= max_iters {
            return Err(LinearError::SolveFailed(format!(
                "GMRES stalled at relative residual {:.3e} after {total_iters} iterations",
                r_norm / b_norm
            )));
        }

        let m = restart.min(max_iters - total_iters).max(1);
        let mut basis: Vec<DVector<f64>> = vec![&r / r_norm];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = DVector::zeros(m + 1);
        g[0] = r_norm;
        let mut k_used = 0;

        for k in 0..m {
            total_iters += 1;
            let mut w = apply_a(&apply_m_inv(&basis[k]));
            for (i, v) in basis.iter().enumerate() {
                h[(i, k)] = w.dot(v);
                w.axpy(-h[(i, k)], v, 1.0);
            }
            let w_norm = w.norm();
            h[(k + 1, k)] = w_norm;
            for i in 0..k {
                let tmp = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = tmp;
            }
            let denom = (h[(k, k)] * h[(k, k)] + h[(k + 1, k)] * h[(k + 1, k)]).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            if g[k + 1].abs() / b_norm <= tol || w_norm < 1e-300 {
                break;
            }
            basis.push(&w / w_norm);
        }

        let k = k_used;
        let mut yk = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * yk[j];
            }
            yk[i] = s / h[(i, i)];
        }
        let mut update = DVector::zeros(n);
        for (i, v) in basis.iter().take(k).enumerate() {
            update.axpy(yk[i], v, 1.0);
        }
        x += apply_m_inv(&update);
    }
}

/// Dense LU solve (small systems and the direct fallback path).
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinearError> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| LinearError::SolveFailed("singular dense system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block_system(n: usize, bs: usize, seed: u64) -> (BlockCsr, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for i in 0..n {
            if i + 1 < n {
                pairs.push((i, i + 1));
                pairs.push((i + 1, i));
            }
        }
        let mut a = BlockCsr::from_pattern(n, bs, &pairs);
        for i in 0..n {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[idx];
                for r in 0..bs {
                    for c in 0..bs {
                        a.blocks[idx][(r, c)] = rng.gen_range(-1.0..1.0);
                    }
                    if i == j {
                        a.blocks[idx][(r, r)] += 6.0;
                    }
                }
            }
        }
        let b = DVector::from_fn(n * bs, |_, _| rng.gen_range(-1.0..1.0));
        (a, b)
    }

    #[test]
    fn identity_system_returns_rhs() {
        let mut a = BlockCsr::from_pattern(3, 2, &[]);
        for i in 0..3 {
            a.block_mut(i, i).fill_with_identity();
        }
        let b = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut ilu = BlockIlu::symbolic(&a, 1);
        ilu.factor(&a).unwrap();
        let (x, stats) = gmres(&|v| a.matvec(v), &|r| ilu.solve(r), &b, 1e-12, 10, 100).unwrap();
        assert!((x - b).norm() < 1e-12);
        assert!(stats.iterations <= 2);
    }

    #[test]
    fn block_system_matches_dense_solve() {
        let (a, b) = random_block_system(8, 3, 7);
        let mut ilu = BlockIlu::symbolic(&a, 1);
        ilu.factor(&a).unwrap();
        let (x, _) = gmres(&|v| a.matvec(v), &|r| ilu.solve(r), &b, 1e-12, 30, 300).unwrap();
        let dense = dense_solve(&a.to_dense(), &b).unwrap();
        assert!(
            (&x - &dense).norm() <= 1e-8 * dense.norm(),
            "gmres vs dense mismatch: {}",
            (&x - &dense).norm()
        );
    }

    #[test]
    fn transpose_solves_match_dense_transpose() {
        let (a, b) = random_block_system(6, 3, 11);
        let mut ilu = BlockIlu::symbolic(&a, 1);
        ilu.factor(&a).unwrap();
        let (x, _) = gmres(
            &|v| a.matvec_transpose(v),
            &|r| ilu.solve_transpose(r),
            &b,
            1e-12,
            30,
            300,
        )
        .unwrap();
        let dense = dense_solve(&a.to_dense().transpose(), &b).unwrap();
        assert!((&x - &dense).norm() <= 1e-8 * dense.norm());
    }

    #[test]
    fn singular_system_fails() {
        let a = BlockCsr::from_pattern(2, 2, &[]); // all-zero blocks
        let mut ilu = BlockIlu::symbolic(&a, 0);
        assert!(ilu.factor(&a).is_err());
    }

    #[test]
    fn ilu_is_exact_for_block_tridiagonal() {
        // LU fill of a block-tridiagonal matrix stays inside the level-1
        // pattern, so the incomplete factorization is exact
        let (a, b) = random_block_system(5, 2, 3);
        let mut ilu = BlockIlu::symbolic(&a, 1);
        ilu.factor(&a).unwrap();
        let x = ilu.solve(&b);
        let dense = dense_solve(&a.to_dense(), &b).unwrap();
        assert!((&x - &dense).norm() <= 1e-9 * dense.norm());
    }
}
