//! Sparse vectors over a vocabulary-sized index space.
//!
//! Entries are kept as parallel `indices` / `values` arrays sorted by index.
//! Every binary operation walks both arrays with a merge-join in ascending
//! index order, so a result is bit-identical no matter which argument comes
//! first.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tolerance on `Σθᵢ = 1` for vectors flagged as simplex points.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    simplex: bool,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs in any order. Zeros are
    /// dropped; repeated indices and out-of-range indices are rejected.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut prev: Option<usize> = None;
        for (i, v) in entries {
            if i >= dim {
                return Err(Error::InvalidVector(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if prev == Some(i) {
                return Err(Error::InvalidVector(format!("duplicate index {i}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "non-finite value at index {i}"
                )));
            }
            prev = Some(i);
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Ok(Self {
            indices,
            values,
            dim,
            simplex: false,
        })
    }

    /// Builds a simplex point: every stored value positive and `Σθᵢ = 1`
    /// within [`SIMPLEX_TOL`]. The check runs once here; distance functions
    /// that need simplex input trust the flag afterwards.
    pub fn simplex(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(dim, entries)?.into_simplex()
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let mut out = Self {
            indices: Vec::new(),
            values: Vec::new(),
            dim: values.len(),
            simplex: false,
        };
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        out
    }

    /// Verifies the simplex conditions and sets the flag.
    pub fn into_simplex(mut self) -> Result<Self> {
        if self.values.is_empty() || self.values.iter().any(|&v| v <= 0.0) {
            return Err(Error::NotSimplex);
        }
        let total: f64 = self.values.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotSimplex);
        }
        self.simplex = true;
        Ok(self)
    }

    /// Rescales to unit L¹ norm and flags the result as a simplex point.
    /// Fails for empty vectors or vectors with a negative entry.
    pub fn l1_normalized(&self) -> Result<Self> {
        let total: f64 = self.values.iter().sum();
        if self.values.is_empty() || self.values.iter().any(|&v| v < 0.0) || total <= 0.0 {
            return Err(Error::NotSimplex);
        }
        self.scaled(1.0 / total).into_simplex()
    }

    pub fn l2_normalized(&self) -> Result<Self> {
        let n = norm2(self);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.scaled(1.0 / n))
    }

    /// `c·self`. The simplex flag is dropped.
    pub fn scaled(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self {
                indices: Vec::new(),
                values: Vec::new(),
                dim: self.dim,
                simplex: false,
            };
        }
        Self {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            dim: self.dim,
            simplex: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_simplex(&self) -> bool {
        self.simplex
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

fn check_dims(a: &SparseVector, b: &SparseVector) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

/// Applies `f` to every index stored in both vectors, ascending.
#[inline]
fn for_each_common(a: &SparseVector, b: &SparseVector, mut f: impl FnMut(f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                f(a.values[i], b.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
}

pub fn dot(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &SparseVector, b: &SparseVector) -> f64 {
    let mut acc = 0.0;
    for_each_common(a, b, |x, y| acc += x * y);
    acc
}

pub fn norm2(a: &SparseVector) -> f64 {
    libm::sqrt(a.values.iter().map(|v| v * v).sum::<f64>())
}

pub fn sq_euclidean_dist(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(sq_euclidean_unchecked(a, b))
}

#[inline]
pub(crate) fn sq_euclidean_unchecked(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.indices.len() || j < b.indices.len() {
        let d = match (a.indices.get(i), b.indices.get(j)) {
            (Some(ia), Some(ib)) if ia == ib => {
                let d = a.values[i] - b.values[j];
                i += 1;
                j += 1;
                d
            }
            (Some(ia), Some(ib)) if ia < ib => {
                i += 1;
                a.values[i - 1]
            }
            (Some(_), None) => {
                i += 1;
                a.values[i - 1]
            }
            _ => {
                j += 1;
                b.values[j - 1]
            }
        };
        acc += d * d;
    }
    acc
}

/// `⟨a,b⟩ / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    check_dims(a, b)?;
    let (sa, sb) = (dot_unchecked(a, a), dot_unchecked(b, b));
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::ZeroVector);
    }
    // sqrt(sa·sb) rather than ‖a‖·‖b‖ so that cos(a, a) is exactly 1.
    Ok((dot_unchecked(a, b) / libm::sqrt(sa * sb)).clamp(-1.0, 1.0))
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Bhattacharyya coefficient `Σ√(aᵢbᵢ)` of two simplex points, clamped to
/// `[-1, 1]` (rounding can push the sum for `a == b` just past 1).
pub fn bhattacharyya(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    check_dims(a, b)?;
    if !a.simplex || !b.simplex {
        return Err(Error::NotSimplex);
    }
    let mut acc = 0.0;
    for_each_common(a, b, |x, y| acc += libm::sqrt(x * y));
    Ok(acc.clamp(-1.0, 1.0))
}

/// Great-circle distance between the images of two multinomials on the
/// radius-2 sphere: `2·arccos(Σ√(aᵢbᵢ))`, in `[0, π]`.
pub fn geodesic_distance(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    Ok(2.0 * libm::acos(bhattacharyya(a, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn dense(v: &[f64]) -> SparseVector {
        SparseVector::from_dense(v)
    }

    #[test]
    fn construction_sorts_and_drops_zeros() {
        let v = SparseVector::new(5, vec![(3, 1.0), (0, 2.0), (1, 0.0)]).unwrap();
        assert_eq!(v.indices(), &[0, 3]);
        assert_eq!(v.values(), &[2.0, 1.0]);
        assert_eq!(v.get(3), 1.0);
        assert_eq!(v.get(1), 0.0);
    }

    #[test]
    fn construction_rejects_bad_entries() {
        assert!(matches!(
            SparseVector::new(2, vec![(2, 1.0)]),
            Err(Error::InvalidVector(_))
        ));
        assert!(matches!(
            SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]),
            Err(Error::InvalidVector(_))
        ));
        assert!(matches!(
            SparseVector::new(3, vec![(1, f64::NAN)]),
            Err(Error::InvalidVector(_))
        ));
    }

    #[test]
    fn simplex_flag_is_checked() {
        assert!(SparseVector::simplex(3, vec![(0, 0.5), (2, 0.5)]).is_ok());
        assert_eq!(
            SparseVector::simplex(3, vec![(0, 0.5), (2, 0.4)]),
            Err(Error::NotSimplex)
        );
        assert_eq!(
            SparseVector::simplex(3, vec![(0, 1.5), (2, -0.5)]),
            Err(Error::NotSimplex)
        );
        let v = dense(&[2.0, 0.0, 6.0]).l1_normalized().unwrap();
        assert!(v.is_simplex());
        assert_eq!(v.values(), &[0.25, 0.75]);
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&dense(&[1.0, 0.0]), &dense(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot(&dense(&[3.0, 4.0]), &dense(&[3.0, 4.0])).unwrap(), 25.0);
        assert_eq!(
            dot(&dense(&[1.0]), &dense(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm2(&dense(&[3.0, 4.0])), 5.0);
        assert_eq!(norm2(&SparseVector::new(10, vec![]).unwrap()), 0.0);
    }

    #[test]
    fn sq_dist_examples() {
        assert_eq!(
            sq_euclidean_dist(&dense(&[0.0, 0.0]), &dense(&[1.0, 0.0])).unwrap(),
            1.0
        );
        let x = dense(&[0.3, -2.0, 0.0, 5.0]);
        assert_eq!(sq_euclidean_dist(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert!(
            cosine_distance(&dense(&[1.0, 1.0]), &dense(&[2.0, 2.0]))
                .unwrap()
                .abs()
                < 1e-15
        );
        assert_eq!(
            cosine_distance(&dense(&[1.0, 0.0]), &dense(&[0.0, 1.0])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_distance(&dense(&[1.0, 0.0]), &dense(&[-1.0, 0.0])).unwrap(),
            2.0
        );
        assert_eq!(
            cosine_distance(&dense(&[0.0, 0.0]), &dense(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn geodesic_examples() {
        let half = dense(&[0.5, 0.5]).into_simplex().unwrap();
        assert_eq!(geodesic_distance(&half, &half).unwrap(), 0.0);
        let e0 = dense(&[1.0, 0.0]).into_simplex().unwrap();
        let e1 = dense(&[0.0, 1.0]).into_simplex().unwrap();
        assert!((geodesic_distance(&e0, &e1).unwrap() - PI).abs() < 1e-15);
        assert_eq!(
            geodesic_distance(&dense(&[0.5, 0.5]), &half),
            Err(Error::NotSimplex)
        );
    }

    #[test]
    fn geodesic_clamps_rounding_above_one() {
        // Σ√(θᵢθᵢ) for these thirds rounds to 1 + 2⁻⁵², which would make acos NaN.
        let t = dense(&[0.1, 0.2, 0.7]).into_simplex().unwrap();
        let d = geodesic_distance(&t, &t).unwrap();
        assert!(d.is_finite());
        assert!(d.abs() < 1e-7);
    }
}
