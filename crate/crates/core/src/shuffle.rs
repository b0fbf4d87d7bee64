//! Perfect-shuffle permutations and the block-diagonalization they induce.
//!
//! Permutations are index vectors: output position `t` takes input position
//! `map[t]`. Applied to the columns of a batch, the forward direction computes
//! `out[:, t] = in[:, map[t]]`.

use rayon::prelude::*;

use crate::batch::{BatchMatrix, Layout};
use crate::error::{KsError, Result};
use crate::factor::{BmmTensor, KsFactor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationVector {
    map: Vec<usize>,
}

impl PermutationVector {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(KsError::InvalidPermutation(format!(
                    "{m} repeated or out of range for length {}",
                    map.len()
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(t, &m)| t == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (t, &m) in self.map.iter().enumerate() {
            inv[m] = t;
        }
        Self { map: inv }
    }

    /// `(self ∘ other)[t] = other[self[t]]`: gather by `other`, then by `self`.
    pub fn then(&self, other: &Self) -> Self {
        Self {
            map: other.map.iter().map(|&m| self.map[m]).collect(),
        }
    }
}

/// `(p, q)` perfect shuffle: reshape a length `p·q` vector row-major into
/// `p × q` and read it column-wise.
pub fn perfect_shuffle(p: usize, q: usize) -> PermutationVector {
    let map = (0..q)
        .flat_map(|i| (0..p).map(move |j| i + q * j))
        .collect();
    PermutationVector { map }
}

/// `I_a ⊗ P_{p,q}`: `a` consecutive copies of the `(p, q)` shuffle.
pub fn kron_identity_shuffle(a: usize, p: usize, q: usize) -> PermutationVector {
    let block = perfect_shuffle(p, q);
    let r = p * q;
    let map = (0..a)
        .flat_map(|t| block.map.iter().map(move |&m| t * r + m))
        .collect();
    PermutationVector { map }
}

/// Writes `dst[:, t] = src[:, map[t]]`. `dst` must already have the shape of
/// `src` (same batch, features and layout).
pub(crate) fn gather_columns_into<T: Scalar>(
    src: &BatchMatrix<T>,
    map: &[usize],
    dst: &mut BatchMatrix<T>,
) {
    let (batch, features) = (src.batch(), src.features());
    debug_assert_eq!(map.len(), features);
    debug_assert_eq!(
        (dst.batch(), dst.features(), dst.layout()),
        (batch, features, src.layout())
    );
    if batch == 0 || features == 0 {
        return;
    }
    let s = src.data();
    match src.layout() {
        Layout::BatchSizeLast => {
            dst.data_mut()
                .par_chunks_mut(batch)
                .zip(map.par_iter())
                .for_each(|(row, &m)| row.copy_from_slice(&s[m * batch..(m + 1) * batch]));
        }
        Layout::BatchSizeFirst => {
            dst.data_mut()
                .par_chunks_mut(features)
                .zip(s.par_chunks(features))
                .for_each(|(out, inp)| {
                    for (o, &m) in out.iter_mut().zip(map) {
                        *o = inp[m];
                    }
                });
        }
    }
}

/// Permutes the feature columns of `m`; `Inverse` undoes `Forward` exactly.
pub fn permute_columns<T: Scalar>(
    m: &BatchMatrix<T>,
    perm: &PermutationVector,
    direction: Direction,
) -> Result<BatchMatrix<T>> {
    if perm.len() != m.features() {
        return Err(KsError::ShapeMismatch(format!(
            "permutation of length {} applied to {} features",
            perm.len(),
            m.features()
        )));
    }
    let mut out = BatchMatrix::zeros(m.batch(), m.features(), m.layout());
    match direction {
        Direction::Forward => gather_columns_into(m, perm.as_slice(), &mut out),
        Direction::Inverse => gather_columns_into(m, perm.inverse().as_slice(), &mut out),
    }
    Ok(out)
}

/// Row permutation `P = I_a ⊗ P_{b,d}` and column permutation
/// `Q = I_a ⊗ P_{c,d}` of the permute–multiply–permute baseline.
pub fn baseline_permutations(
    a: usize,
    b: usize,
    c: usize,
    d: usize,
) -> (PermutationVector, PermutationVector) {
    (
        kron_identity_shuffle(a, b, d),
        kron_identity_shuffle(a, c, d),
    )
}

/// `K̃`, the factor with rows gathered by `P` and columns by `Q`, kept as its
/// `a·d` dense diagonal `b × c` blocks.
///
/// Entry `(u, v)` of the permuted matrix is `K[P[u], Q[v]]`; block `t = i·d + j`
/// covers rows `t·b..(t+1)·b` and columns `t·c..(t+1)·c`.
pub fn block_diagonalize<T: Scalar>(k: &KsFactor<T>) -> BmmTensor<T> {
    let p = k.pattern();
    let (rows, cols) = baseline_permutations(p.a(), p.b(), p.c(), p.d());
    let (b, c) = (p.b(), p.c());
    let mut data = Vec::with_capacity(p.nnz());
    for t in 0..p.num_tiles() {
        for kk in 0..b {
            for l in 0..c {
                let (r, s) = (rows.map[t * b + kk], cols.map[t * c + l]);
                data.push(k.entry(r, s));
            }
        }
    }
    BmmTensor::from_blocks(p, data).expect("block count matches pattern")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::KsPattern;

    #[test]
    fn perfect_shuffle_examples() {
        assert!(perfect_shuffle(1, 5).is_identity());
        assert!(perfect_shuffle(5, 1).is_identity());
        assert_eq!(perfect_shuffle(2, 2).as_slice(), &[0, 2, 1, 3]);
        assert_eq!(perfect_shuffle(3, 2).as_slice(), &[0, 2, 4, 1, 3, 5]);
    }

    #[test]
    fn perfect_shuffle_reads_columnwise() {
        for (p, q) in [(3, 4), (4, 3), (2, 5), (7, 1)] {
            let mut expect = Vec::new();
            for col in 0..q {
                for row in 0..p {
                    expect.push(row * q + col);
                }
            }
            assert_eq!(perfect_shuffle(p, q).as_slice(), expect.as_slice());
        }
    }

    #[test]
    fn kron_identity_shuffle_examples() {
        assert_eq!(kron_identity_shuffle(1, 3, 2), perfect_shuffle(3, 2));
        assert_eq!(
            kron_identity_shuffle(2, 2, 2).as_slice(),
            &[0, 2, 1, 3, 4, 6, 5, 7]
        );
        assert!(kron_identity_shuffle(5, 1, 1).is_identity());
    }

    #[test]
    fn inverse_composes_to_identity() {
        for (a, p, q) in [(1, 3, 4), (3, 2, 5), (2, 6, 6)] {
            let perm = kron_identity_shuffle(a, p, q);
            assert!(perm.then(&perm.inverse()).is_identity());
            assert!(perm.inverse().then(&perm).is_identity());
        }
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(PermutationVector::new(vec![0, 0, 1]).is_err());
        assert!(PermutationVector::new(vec![0, 3, 1]).is_err());
        assert!(PermutationVector::new(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn permute_columns_examples() {
        let m = BatchMatrix::from_vec(
            1,
            4,
            Layout::BatchSizeFirst,
            vec![10.0f32, 20.0, 30.0, 40.0],
        )
        .unwrap();
        let perm = PermutationVector::new(vec![0, 2, 1, 3]).unwrap();
        let fwd = permute_columns(&m, &perm, Direction::Forward).unwrap();
        assert_eq!(fwd.data(), &[10.0, 30.0, 20.0, 40.0]);

        let id = permute_columns(&m, &PermutationVector::identity(4), Direction::Forward).unwrap();
        assert_eq!(id, m);
    }

    #[test]
    fn permute_columns_round_trips_in_both_layouts() {
        let perm = kron_identity_shuffle(2, 3, 4);
        for layout in Layout::ALL {
            let m = BatchMatrix::<f64>::random_normal(5, 24, layout, 9);
            let fwd = permute_columns(&m, &perm, Direction::Forward).unwrap();
            for n in 0..5 {
                for t in 0..24 {
                    assert_eq!(fwd.get(n, t), m.get(n, perm.as_slice()[t]));
                }
            }
            let back = permute_columns(&fwd, &perm, Direction::Inverse).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn permute_columns_length_mismatch() {
        let m = BatchMatrix::<f32>::zeros(2, 4, Layout::BatchSizeFirst);
        assert!(permute_columns(&m, &PermutationVector::identity(3), Direction::Forward).is_err());
    }

    #[test]
    fn block_diagonalize_d1_keeps_diagonal_blocks() {
        let p = KsPattern::new(3, 2, 4, 1).unwrap();
        let k = KsFactor::<f64>::random(p, 4);
        let bmm = block_diagonalize(&k);
        let dense = k.to_dense();
        for t in 0..3 {
            for kk in 0..2 {
                for l in 0..4 {
                    assert_eq!(bmm.block(t)[kk * 4 + l], dense.get(t * 2 + kk, t * 4 + l));
                }
            }
        }
    }

    #[test]
    fn block_diagonalize_matches_direct_packing() {
        for (a, b, c, d) in [(1, 2, 2, 2), (2, 3, 2, 3), (3, 1, 4, 2), (2, 4, 4, 1)] {
            let p = KsPattern::new(a, b, c, d).unwrap();
            let k = KsFactor::<f32>::random(p, 17);
            assert_eq!(block_diagonalize(&k), k.to_bmm());
        }
    }
}
