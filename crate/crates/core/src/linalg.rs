//! Dense linear algebra over small prime fields `F_l`, with bit-packed rows
//! for `l = 2`. Row reduction always pivots on the lowest available index so
//! that bases are canonical.

use serde::{Deserialize, Serialize};

/// Matrix over `F_l` stored as rows of residues in `0..l`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mat {
    pub ell: u8,
    pub cols: usize,
    pub rows: Vec<Vec<u8>>,
}

fn inv(a: u8, ell: u8) -> u8 {
    (1..ell).find(|&b| (a as u16 * b as u16) % ell as u16 == 1).expect("nonzero element")
}

impl Mat {
    pub fn zero(ell: u8, rows: usize, cols: usize) -> Self {
        Mat { ell, cols, rows: vec![vec![0; cols]; rows] }
    }

    pub fn identity(ell: u8, n: usize) -> Self {
        let mut m = Mat::zero(ell, n, n);
        for i in 0..n {
            m.rows[i][i] = 1;
        }
        m
    }

    pub fn from_rows(ell: u8, cols: usize, rows: Vec<Vec<u8>>) -> Self {
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        let rows = rows.into_iter().map(|r| r.into_iter().map(|x| x % ell).collect()).collect();
        Mat { ell, cols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zero(self.ell, self.cols, self.nrows());
        for (i, r) in self.rows.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                t.rows[j][i] = x;
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.nrows(), "dimension mismatch");
        let l = self.ell as u32;
        let mut out = Mat::zero(self.ell, self.nrows(), other.cols);
        for (i, r) in self.rows.iter().enumerate() {
            for (k, &a) in r.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (j, &b) in other.rows[k].iter().enumerate() {
                    let cur = out.rows[i][j] as u32;
                    out.rows[i][j] = ((cur + a as u32 * b as u32) % l) as u8;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[u8]) -> Vec<u8> {
        assert_eq!(v.len(), self.cols);
        let l = self.ell as u32;
        self.rows
            .iter()
            .map(|r| (r.iter().zip(v).map(|(&a, &b)| a as u32 * b as u32).sum::<u32>() % l) as u8)
            .collect()
    }

    /// Stack rows of `other` below `self`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Mat { ell: self.ell, cols: self.cols, rows }
    }

    /// Reduced row echelon form and pivot columns.
    pub fn rref(&self) -> (Mat, Vec<usize>) {
        if self.ell == 2 {
            return rref_gf2(self);
        }
        rref_generic(self)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of `{x : self x = 0}`, in canonical form.
    pub fn kernel(&self) -> Vec<Vec<u8>> {
        let (r, pivots) = self.rref();
        let l = self.ell;
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Vec::new();
        for &f in &free {
            let mut v = vec![0u8; self.cols];
            v[f] = 1;
            for (i, &pc) in pivots.iter().enumerate() {
                v[pc] = (l - r.rows[i][f]) % l;
            }
            basis.push(v);
        }
        basis
    }
}

fn rref_generic(m: &Mat) -> (Mat, Vec<usize>) {
    let l = m.ell;
    let lw = l as u16;
    let mut rows = m.rows.clone();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        let Some(i) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(r, i);
        let s = inv(rows[r][c], l);
        for x in rows[r].iter_mut() {
            *x = ((*x as u16 * s as u16) % lw) as u8;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[c] != 0 {
                let f = row[c] as u16;
                for (x, &p) in row.iter_mut().zip(&pivot_row) {
                    *x = ((*x as u16 + lw * lw - f * p as u16) % lw) as u8;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    (Mat { ell: l, cols: m.cols, rows }, pivots)
}

/// GF(2) rows packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitRow(pub Vec<u64>);

impl BitRow {
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut w = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                w[i / 64] |= 1 << (i % 64);
            }
        }
        BitRow(w)
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn xor_assign(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }

    pub fn to_bits(&self, n: usize) -> Vec<u8> {
        (0..n).map(|i| self.get(i) as u8).collect()
    }
}

fn rref_gf2(m: &Mat) -> (Mat, Vec<usize>) {
    let mut rows: Vec<BitRow> = m.rows.iter().map(|r| BitRow::from_bits(r)).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        let Some(i) = (r..rows.len()).find(|&i| rows[i].get(c)) else { continue };
        rows.swap(r, i);
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row.get(c) {
                row.xor_assign(&pivot_row);
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    let rows = rows.iter().map(|b| b.to_bits(m.cols)).collect();
    (Mat { ell: 2, cols: m.cols, rows }, pivots)
}

/// A subspace of `F_l^n`, stored by its reduced echelon basis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subspace {
    pub ell: u8,
    pub ambient: usize,
    pub basis: Vec<Vec<u8>>,
}

impl Subspace {
    pub fn span(ell: u8, ambient: usize, vectors: Vec<Vec<u8>>) -> Self {
        let (r, _) = Mat::from_rows(ell, ambient, vectors).rref();
        Subspace { ell, ambient, basis: r.rows }
    }

    pub fn zero(ell: u8, ambient: usize) -> Self {
        Subspace { ell, ambient, basis: Vec::new() }
    }

    pub fn full(ell: u8, ambient: usize) -> Self {
        Subspace { ell, ambient, basis: Mat::identity(ell, ambient).rows }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn as_mat(&self) -> Mat {
        Mat { ell: self.ell, cols: self.ambient, rows: self.basis.clone() }
    }

    pub fn contains(&self, v: &[u8]) -> bool {
        let m = self.as_mat().vstack(&Mat::from_rows(self.ell, self.ambient, vec![v.to_vec()]));
        m.rank() == self.dim()
    }

    pub fn contains_space(&self, other: &Subspace) -> bool {
        other.basis.iter().all(|v| self.contains(v))
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        let mut v = self.basis.clone();
        v.extend(other.basis.iter().cloned());
        Subspace::span(self.ell, self.ambient, v)
    }

    /// `{x : <x, w> = 0 for all w}` under the standard dot product.
    pub fn dot_complement(&self) -> Subspace {
        if self.basis.is_empty() {
            return Subspace::full(self.ell, self.ambient);
        }
        Subspace::span(self.ell, self.ambient, self.as_mat().kernel())
    }

    pub fn intersect(&self, other: &Subspace) -> Subspace {
        self.dot_complement().sum(&other.dot_complement()).dot_complement()
    }

    /// Image under `m` (columns = ambient dimension of `self`).
    pub fn image(&self, m: &Mat) -> Subspace {
        Subspace::span(self.ell, m.nrows(), self.basis.iter().map(|v| m.apply(v)).collect())
    }

    /// Preimage `{x : m x in target}`.
    pub fn preimage(m: &Mat, target: &Subspace) -> Subspace {
        let ann = target.dot_complement();
        if ann.basis.is_empty() {
            return Subspace::full(m.ell, m.cols);
        }
        let cond = ann.as_mat().mul(m);
        Subspace::span(m.ell, m.cols, cond.kernel())
    }

    /// All elements (small spaces only).
    pub fn elements(&self) -> Vec<Vec<u8>> {
        let l = self.ell as usize;
        let total = l.pow(self.dim() as u32);
        (0..total)
            .map(|mut k| {
                let mut v = vec![0u8; self.ambient];
                for b in &self.basis {
                    let c = (k % l) as u8;
                    k /= l;
                    for (x, &y) in v.iter_mut().zip(b) {
                        *x = ((*x as u16 + c as u16 * y as u16) % l as u16) as u8;
                    }
                }
                v
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, ell: u8, r: usize, c: usize) -> Mat {
        Mat::from_rows(ell, c, (0..r).map(|_| (0..c).map(|_| rng.gen_range(0..ell)).collect()).collect())
    }

    #[test]
    fn bitset_and_generic_agree_over_gf2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (r, c) = (rng.gen_range(0..9), rng.gen_range(1..130));
            let m = random_mat(&mut rng, 2, r, c);
            assert_eq!(rref_gf2(&m), rref_generic(&m));
        }
    }

    #[test]
    fn kernel_is_annihilated_and_rank_nullity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for ell in [2u8, 3, 5] {
            for _ in 0..100 {
                let (r, c) = (rng.gen_range(0..7), rng.gen_range(1..9));
                let m = random_mat(&mut rng, ell, r, c);
                let k = m.kernel();
                assert_eq!(k.len() + m.rank(), c);
                for v in &k {
                    assert!(m.apply(v).iter().all(|&x| x == 0));
                }
            }
        }
    }

    #[test]
    fn intersection_by_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for ell in [2u8, 3] {
            for _ in 0..50 {
                let a = Subspace::span(ell, 5, random_mat(&mut rng, ell, 3, 5).rows);
                let b = Subspace::span(ell, 5, random_mat(&mut rng, ell, 3, 5).rows);
                let i = a.intersect(&b);
                let brute = a.elements().into_iter().filter(|v| b.contains(v)).count();
                assert_eq!((ell as usize).pow(i.dim() as u32), brute);
            }
        }
    }
}
