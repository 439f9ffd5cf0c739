//! Exact integer linear algebra over Z: Smith normal form, kernel lattices,
//! primitivity and lattice-saturation tests, and preimage solving.
//!
//! Everything here works with arbitrary-precision integers; unimodularity and
//! gcd bookkeeping do not survive floating point.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("zero vector has no associated circle subgroup")]
    ZeroVector,
    #[error("vectors are linearly dependent; isotropy would not be a 2-torus")]
    DependentVectors,
    #[error("system A w = y is inconsistent")]
    Inconsistent,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Dense integer matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<BigInt>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<BigInt>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        assert_eq!(entries.len(), rows * cols);
        IntMatrix { rows, cols, entries }
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Self {
        Self::new(rows, cols, entries.iter().map(|&e| BigInt::from(e)).collect())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<BigInt>]) -> Self {
        let m = cols.len();
        let n = cols[0].len();
        let mut entries = vec![BigInt::zero(); n * m];
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), n);
            for (i, e) in c.iter().enumerate() {
                entries[i * m + j] = e.clone();
            }
        }
        IntMatrix::new(n, m, entries)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = BigInt::one();
        }
        IntMatrix::new(n, n, entries)
    }

    pub fn at(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.cols + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut BigInt {
        &mut self.entries[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = vec![BigInt::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[i * other.cols + j] += a * other.at(k, j);
                }
            }
        }
        IntMatrix::new(self.rows, other.cols, out)
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j) * &v[j]).sum())
            .collect()
    }

    /// Determinant by fraction-free (Bareiss) elimination; square matrices only.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut m: Vec<Vec<BigInt>> = (0..n).map(|i| (0..n).map(|j| self.at(i, j).clone()).collect()).collect();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n {
            if m[k][k].is_zero() {
                let swap = (k + 1..n).find(|&r| !m[r][k].is_zero());
                match swap {
                    Some(r) => {
                        m.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                    m[i][j] = &num / &prev;
                }
                m[i][k] = BigInt::zero();
            }
            prev = m[k][k].clone();
        }
        sign * m[n - 1][n - 1].clone()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.entries.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for i in 0..self.rows {
            self.entries.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[a] += q * row[b]
    fn add_row(&mut self, a: usize, b: usize, q: &BigInt) {
        for j in 0..self.cols {
            let add = q * self.at(b, j);
            *self.at_mut(a, j) += add;
        }
    }

    /// col[a] += q * col[b]
    fn add_col(&mut self, a: usize, b: usize, q: &BigInt) {
        for i in 0..self.rows {
            let add = q * self.at(i, b);
            *self.at_mut(i, a) += add;
        }
    }

    fn negate_row(&mut self, a: usize) {
        for j in 0..self.cols {
            let v = -self.at(a, j).clone();
            *self.at_mut(a, j) = v;
        }
    }

    /// [row[a]; row[b]] = [[m00, m01], [m10, m11]] · [row[a]; row[b]]
    fn combine_rows(&mut self, a: usize, b: usize, m00: &BigInt, m01: &BigInt, m10: &BigInt, m11: &BigInt) {
        for j in 0..self.cols {
            let ra = self.at(a, j).clone();
            let rb = self.at(b, j).clone();
            *self.at_mut(a, j) = m00 * &ra + m01 * &rb;
            *self.at_mut(b, j) = m10 * &ra + m11 * &rb;
        }
    }

    /// [col[a]; col[b]] = [[m00, m01], [m10, m11]] · [col[a]; col[b]]
    fn combine_cols(&mut self, a: usize, b: usize, m00: &BigInt, m01: &BigInt, m10: &BigInt, m11: &BigInt) {
        for i in 0..self.rows {
            let ca = self.at(i, a).clone();
            let cb = self.at(i, b).clone();
            *self.at_mut(i, a) = m00 * &ca + m01 * &cb;
            *self.at_mut(i, b) = m10 * &ca + m11 * &cb;
        }
    }
}

/// Result of [`smith_normal_form`]: `U * A * V = S` with `U`, `V` unimodular
/// and `S` diagonal with a divisibility chain.
#[derive(Debug, Clone)]
pub struct SnfDecomposition {
    pub u: IntMatrix,
    pub s: IntMatrix,
    pub v: IntMatrix,
    pub invariant_factors: Vec<BigInt>,
}

impl SnfDecomposition {
    pub fn rank(&self) -> usize {
        self.invariant_factors.iter().filter(|f| !f.is_zero()).count()
    }
}

/// Real and integer kernels of an integer matrix.  The integer basis is a
/// Z-basis of the saturated lattice `ker(A) ∩ Z^m`.
#[derive(Debug, Clone)]
pub struct KernelLattice {
    pub real_kernel_basis: Vec<Vec<BigRational>>,
    pub integer_kernel_basis: Vec<Vec<BigInt>>,
}

impl KernelLattice {
    pub fn rank(&self) -> usize {
        self.integer_kernel_basis.len()
    }
}

/// Smith normal form by elementary row and column operations.
pub fn smith_normal_form(a: &IntMatrix) -> SnfDecomposition {
    let n = a.rows;
    let m = a.cols;
    let mut s = a.clone();
    let mut u = IntMatrix::identity(n);
    let mut v = IntMatrix::identity(m);

    let mut t = 0;
    while t < n && t < m {
        // Pick the nonzero entry of smallest magnitude in the remaining block.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..n {
            for j in t..m {
                if !s.at(i, j).is_zero()
                    && pivot.map_or(true, |(pi, pj)| s.at(i, j).abs() < s.at(pi, pj).abs())
                {
                    pivot = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        if pi != t {
            s.swap_rows(t, pi);
            u.swap_rows(t, pi);
        }
        if pj != t {
            s.swap_cols(t, pj);
            v.swap_cols(t, pj);
        }

        // Clear column t and row t.  A non-divisible entry is absorbed into
        // the pivot by one unimodular Bezout transform (the pivot becomes the
        // gcd), so entries stay small: chaining division-with-swap steps here
        // instead makes the coefficients explode on larger inputs.
        loop {
            let mut clean = true;
            for i in t + 1..n {
                if s.at(i, t).is_zero() {
                    continue;
                }
                clean = false;
                let p = s.at(t, t).clone();
                let x = s.at(i, t).clone();
                if (&x % &p).is_zero() {
                    let q = -(&x / &p);
                    s.add_row(i, t, &q);
                    u.add_row(i, t, &q);
                } else {
                    let e = p.extended_gcd(&x);
                    let (a, b) = (-(&x / &e.gcd), &p / &e.gcd);
                    s.combine_rows(t, i, &e.x, &e.y, &a, &b);
                    u.combine_rows(t, i, &e.x, &e.y, &a, &b);
                }
            }
            for j in t + 1..m {
                if s.at(t, j).is_zero() {
                    continue;
                }
                clean = false;
                let p = s.at(t, t).clone();
                let x = s.at(t, j).clone();
                if (&x % &p).is_zero() {
                    let q = -(&x / &p);
                    s.add_col(j, t, &q);
                    v.add_col(j, t, &q);
                } else {
                    let e = p.extended_gcd(&x);
                    let (a, b) = (-(&x / &e.gcd), &p / &e.gcd);
                    s.combine_cols(t, j, &e.x, &e.y, &a, &b);
                    v.combine_cols(t, j, &e.x, &e.y, &a, &b);
                }
            }
            if clean {
                break;
            }
        }

        // Enforce divisibility: the pivot must divide every remaining entry.
        let mut fixed = true;
        'scan: for i in t + 1..n {
            for j in t + 1..m {
                if !(s.at(i, j) % s.at(t, t)).is_zero() {
                    // Fold row i into the working block and redo position t.
                    s.add_col(t, j, &BigInt::one());
                    v.add_col(t, j, &BigInt::one());
                    fixed = false;
                    break 'scan;
                }
            }
        }
        if fixed {
            if s.at(t, t).is_negative() {
                s.negate_row(t);
                u.negate_row(t);
            }
            t += 1;
        }
    }

    let invariant_factors: Vec<BigInt> = (0..n.min(m)).map(|i| s.at(i, i).clone()).collect();
    SnfDecomposition { u, s, v, invariant_factors }
}

/// Kernel of `A` as both a rational space and a saturated integer lattice.
///
/// `U A V = S` gives `A (V e_j) = U^{-1} S e_j = 0` for every column `j` past
/// the rank, and those columns of the unimodular `V` form a saturated Z-basis.
pub fn integer_kernel(a: &IntMatrix) -> KernelLattice {
    let snf = smith_normal_form(a);
    let rank = snf.rank();
    let mut integer_basis = Vec::new();
    for j in rank..a.cols {
        integer_basis.push(snf.v.column(j));
    }
    let real_basis = integer_basis
        .iter()
        .map(|v| v.iter().map(|e| BigRational::from(e.clone())).collect())
        .collect();
    KernelLattice {
        real_kernel_basis: real_basis,
        integer_kernel_basis: integer_basis,
    }
}

/// True iff the entries are relatively prime, so the vector generates a
/// circle subgroup that is primitively embedded.
pub fn is_primitive(a: &[BigInt]) -> Result<bool, LatticeError> {
    if a.iter().all(|e| e.is_zero()) {
        return Err(LatticeError::ZeroVector);
    }
    let g = a.iter().fold(BigInt::zero(), |acc, e| acc.gcd(e));
    Ok(g.is_one())
}

/// True iff the circles `G(a)` and `G(b)` intersect trivially, i.e. the
/// Z-span of `{a, b}` is a primitive rank-2 sublattice.  This is the gcd of
/// all 2x2 minors of the `n x 2` matrix `[a b]`.
pub fn legality_pair(a: &[BigInt], b: &[BigInt]) -> Result<bool, LatticeError> {
    if a.len() != b.len() {
        return Err(LatticeError::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    let mut g = BigInt::zero();
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let minor = &a[i] * &b[j] - &a[j] * &b[i];
            g = g.gcd(&minor);
        }
    }
    if g.is_zero() {
        return Err(LatticeError::DependentVectors);
    }
    Ok(g.is_one())
}

/// Solve `A w = y` over the rationals via SNF back-substitution.  When `A` is
/// onto Z^n and `y` is integral, the result is integral.
pub fn solve_preimage(a: &IntMatrix, y: &[BigInt]) -> Result<Vec<BigRational>, LatticeError> {
    if y.len() != a.rows {
        return Err(LatticeError::Dimension(format!("rhs length {} vs {} rows", y.len(), a.rows)));
    }
    let snf = smith_normal_form(a);
    let uy = snf.u.mul_vec(y);
    let rank = snf.rank();
    let mut z = vec![BigRational::zero(); a.cols];
    for i in 0..a.rows {
        if i < rank {
            z[i] = BigRational::new(uy[i].clone(), snf.s.at(i, i).clone());
        } else if !uy[i].is_zero() {
            return Err(LatticeError::Inconsistent);
        }
    }
    // w = V z
    let mut w = vec![BigRational::zero(); a.cols];
    for i in 0..a.cols {
        for j in 0..a.cols {
            w[i] += BigRational::from(snf.v.at(i, j).clone()) * &z[j];
        }
    }
    Ok(w)
}

/// Check `U A V = S`, unimodularity of the transforms and the divisibility
/// chain.  Used by tests and the validation pipeline.
pub fn verify_snf(a: &IntMatrix, snf: &SnfDecomposition) -> bool {
    if snf.u.mul(a).mul(&snf.v) != snf.s {
        return false;
    }
    if !snf.u.det().abs().is_one() || !snf.v.det().abs().is_one() {
        return false;
    }
    let f = &snf.invariant_factors;
    let mut seen_zero = false;
    for i in 0..f.len() {
        if f[i].is_zero() {
            seen_zero = true;
        } else if seen_zero {
            return false; // zeros only at the tail
        }
        if i + 1 < f.len() && !f[i].is_zero() && !f[i + 1].is_zero() && !(&f[i + 1] % &f[i]).is_zero() {
            return false;
        }
    }
    // S diagonal
    for i in 0..snf.s.rows {
        for j in 0..snf.s.cols {
            if i != j && !snf.s.at(i, j).is_zero() {
                return false;
            }
        }
    }
    true
}

pub fn bigvec(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&e| BigInt::from(e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snf_of(rows: usize, cols: usize, e: &[i64]) -> SnfDecomposition {
        let a = IntMatrix::from_i64(rows, cols, e);
        let snf = smith_normal_form(&a);
        assert!(verify_snf(&a, &snf));
        snf
    }

    #[test]
    fn snf_identity() {
        let snf = snf_of(3, 3, &[1, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(snf.invariant_factors, bigvec(&[1, 1, 1]));
    }

    #[test]
    fn snf_diag_2_3() {
        // Brute-force elementary reduction gives factors [1, 6].
        let snf = snf_of(2, 2, &[2, 0, 0, 3]);
        assert_eq!(snf.invariant_factors, bigvec(&[1, 6]));
    }

    #[test]
    fn snf_rank_deficient() {
        let snf = snf_of(2, 3, &[1, 0, 0, 0, 1, 0]);
        assert_eq!(snf.invariant_factors, bigvec(&[1, 1]));
        let a = IntMatrix::from_i64(2, 3, &[1, 0, 0, 0, 1, 0]);
        assert_eq!(integer_kernel(&a).rank(), 1);
    }

    #[test]
    fn kernel_of_row_1_1() {
        let a = IntMatrix::from_i64(1, 2, &[1, 1]);
        let k = integer_kernel(&a);
        assert_eq!(k.rank(), 1);
        let b = &k.integer_kernel_basis[0];
        assert!(b == &bigvec(&[1, -1]) || b == &bigvec(&[-1, 1]));
    }

    #[test]
    fn kernel_of_identity_is_empty() {
        let a = IntMatrix::identity(3);
        assert_eq!(integer_kernel(&a).rank(), 0);
    }

    #[test]
    fn kernel_is_saturated() {
        // ker (2 2) as a saturated lattice is generated by (1,-1), not (2,-2).
        let a = IntMatrix::from_i64(1, 2, &[2, 2]);
        let k = integer_kernel(&a);
        assert_eq!(k.rank(), 1);
        let b = &k.integer_kernel_basis[0];
        assert!(b == &bigvec(&[1, -1]) || b == &bigvec(&[-1, 1]));
    }

    #[test]
    fn primitivity() {
        assert!(is_primitive(&bigvec(&[1, 0, 0])).unwrap());
        assert!(!is_primitive(&bigvec(&[2, 4])).unwrap());
        assert!(is_primitive(&bigvec(&[6, 10, 15])).unwrap());
        assert_eq!(is_primitive(&bigvec(&[0, 0])), Err(LatticeError::ZeroVector));
    }

    #[test]
    fn legality() {
        assert!(legality_pair(&bigvec(&[1, 0]), &bigvec(&[0, 1])).unwrap());
        assert!(!legality_pair(&bigvec(&[1, 0]), &bigvec(&[1, 2])).unwrap());
        assert!(legality_pair(&bigvec(&[2, 1, 0]), &bigvec(&[1, 1, 0])).unwrap());
        assert_eq!(
            legality_pair(&bigvec(&[1, 0]), &bigvec(&[2, 0])),
            Err(LatticeError::DependentVectors)
        );
    }

    #[test]
    fn preimage_identity() {
        let a = IntMatrix::identity(3);
        let y = bigvec(&[4, -1, 7]);
        let w = solve_preimage(&a, &y).unwrap();
        for (wi, yi) in w.iter().zip(&y) {
            assert!(wi.is_integer());
            assert_eq!(wi.to_integer(), *yi);
        }
    }

    #[test]
    fn preimage_row() {
        let a = IntMatrix::from_i64(1, 2, &[1, 1]);
        let w = solve_preimage(&a, &bigvec(&[1])).unwrap();
        let total: BigRational = w.iter().cloned().sum();
        assert_eq!(total, BigRational::from(BigInt::one()));
    }

    #[test]
    fn preimage_inconsistent() {
        let a = IntMatrix::from_i64(2, 1, &[1, 1]);
        assert_eq!(solve_preimage(&a, &bigvec(&[0, 1])), Err(LatticeError::Inconsistent));
    }
}
