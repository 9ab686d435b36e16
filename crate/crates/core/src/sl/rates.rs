use nalgebra::DMatrix;

use super::structured::{invert_b_structured_counted, StructuredB};
use super::{SlError, Variant};
use crate::chain::{check_des_columns, LevelBlockChain, LevelTail};
use crate::linalg::{self, block_from_triplets, is_tridiagonal, Block};

/// `Ũ`: row sums of `U` placed in the entrance column, as a square block over
/// the rows of `U`.
pub fn build_u_tilde(u: &Block, entrance: usize) -> Block {
    let n = u.nrows();
    let sums = linalg::row_sums(u);
    block_from_triplets(n, n, sums.into_iter().enumerate().map(|(i, s)| (i, entrance, s)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltB {
    pub matrix: Block,
    /// Present when `B` is tridiagonal plus the entrance column.
    pub structured: Option<StructuredB>,
}

/// `B = W + Ũ`. `u` is `None` at the top of a finite chain.
pub fn build_b(w: &Block, u: Option<&Block>, entrance: Option<usize>, level: usize) -> Result<BuiltB, SlError> {
    let has_up = u.is_some_and(|u| u.nnz() > 0);
    let matrix = match (u, entrance) {
        (Some(u), Some(e)) if has_up => w + &build_u_tilde(u, e),
        (Some(_), None) if has_up => return Err(SlError::NoEntrance { level }),
        _ => w.clone(),
    };
    let structured = StructuredB::from_block(&matrix, entrance.unwrap_or(0));
    Ok(BuiltB { matrix, structured })
}

/// Most specialised variant applicable to a DES chain.
pub fn classify_variant(chain: &LevelBlockChain) -> Variant {
    if !chain.within_blocks().iter().all(is_tridiagonal) {
        return Variant::Qdesa;
    }
    if chain.level_homogeneous() && chain.num_levels() >= 2 {
        let interior = build_b(chain.within_at(1), chain.up_at(1), chain.entrance(1), 1);
        if let Ok(BuiltB {
            structured: Some(s), ..
        }) = interior
        {
            if s.element_homogeneous {
                return Variant::QdesaPlusPlus;
            }
        }
    }
    Variant::QdesaPlus
}

/// The matrices `R_m`, `m ≥ 1`, stored once per distinct value.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrixSet {
    matrices: Vec<DMatrix<f64>>,
    /// `index[m-1]` selects the matrix used for `R_m`.
    index: Vec<usize>,
    /// For a repeating chain, `R_m` for `m > index.len()` is the last one.
    repeats: bool,
    level_sizes: Vec<usize>,
    pub variant: Variant,
    /// Arithmetic operations spent in structured inversions and products.
    pub ops: u64,
}

impl RateMatrixSet {
    /// Build from explicit matrices `R_1..R_M` of a finite chain.
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>, level0_size: usize, variant: Variant) -> Self {
        let mut level_sizes = vec![level0_size];
        level_sizes.extend(matrices.iter().map(|r| r.ncols()));
        RateMatrixSet {
            index: (0..matrices.len()).collect(),
            matrices,
            repeats: false,
            level_sizes,
            variant,
            ops: 0,
        }
    }

    /// `R_m` for `m ≥ 1`.
    pub fn get(&self, m: usize) -> Option<&DMatrix<f64>> {
        assert!(m >= 1);
        match self.index.get(m - 1) {
            Some(&k) => Some(&self.matrices[k]),
            None if self.repeats => self.matrices.last(),
            None => None,
        }
    }

    /// Explicitly stored rate matrices (M for a finite chain).
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn repeats(&self) -> bool {
        self.repeats
    }

    pub fn distinct(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Size of level `m`.
    pub fn level_size(&self, m: usize) -> usize {
        *self
            .level_sizes
            .get(m)
            .unwrap_or_else(|| self.level_sizes.last().expect("at least one level"))
    }

    /// First level from which `R_m` no longer changes, if any.
    pub fn repeat_from(&self) -> Option<usize> {
        if !self.repeats {
            return None;
        }
        let last = self.matrices.len() - 1;
        let first = self
            .index
            .iter()
            .position(|&k| k == last)
            .unwrap_or(self.index.len());
        Some(first + 1)
    }
}

fn invert(built: &BuiltB, variant: Variant, level: usize, ops: &mut u64) -> Result<DMatrix<f64>, SlError> {
    if variant >= Variant::QdesaPlus {
        if let Some(s) = &built.structured {
            match invert_b_structured_counted(s) {
                Ok((inv, n)) => {
                    *ops += n;
                    return Ok(inv);
                }
                Err(reason) => log::debug!("level {level}: structured inversion fell back to LU ({reason:?})"),
            }
        }
    }
    let n = built.matrix.nrows();
    *ops += (n * n * n) as u64;
    linalg::to_dense(&built.matrix)
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(SlError::SingularB { level })
}

fn rate_matrix(chain: &LevelBlockChain, m: usize, variant: Variant, ops: &mut u64) -> Result<DMatrix<f64>, SlError> {
    let built = build_b(chain.within_at(m), chain.up_at(m), chain.entrance(m), m)?;
    let inv = invert(&built, variant, m, ops)?;
    let u = chain.up_at(m - 1).expect("level m-1 has an up block");
    *ops += (u.nnz() * inv.ncols()) as u64;
    let mut r = -linalg::block_times_dense(u, &inv);
    let scale = linalg::max_abs(&r).max(f64::MIN_POSITIVE);
    for v in r.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 * scale.max(1.0) {
                return Err(SlError::Negative {
                    what: "R",
                    level: m,
                    value: *v,
                });
            }
            *v = 0.0;
        }
    }
    Ok(r)
}

/// `R_m = -U_{m-1} B_m⁻¹` for every level above 0. Level-homogeneous chains
/// compute the interior matrix once.
pub fn compute_rate_matrices(chain: &LevelBlockChain, variant: Variant) -> Result<RateMatrixSet, SlError> {
    let des = check_des_columns(chain);
    if let Some((level, cols)) = des.first_violation() {
        return Err(SlError::NotDes {
            level,
            columns: cols.to_vec(),
        });
    }
    let available = classify_variant(chain);
    if variant > available {
        return Err(SlError::VariantUnavailable {
            requested: variant,
            available,
        });
    }
    let levels = chain.num_levels();
    let mut ops = 0u64;
    let mut matrices = Vec::new();
    let mut index = Vec::new();
    let repeats = chain.tail() == LevelTail::Repeating;
    let stored = levels - 1;
    let homogeneous = chain.level_homogeneous();
    // highest level sharing the interior matrix
    let shared_to = match chain.tail() {
        LevelTail::Finite => levels.saturating_sub(2),
        LevelTail::Repeating => levels - 1,
    };
    for m in 1..=stored {
        if homogeneous && m >= 2 && m <= shared_to {
            index.push(index[0]);
            continue;
        }
        matrices.push(rate_matrix(chain, m, variant, &mut ops)?);
        index.push(matrices.len() - 1);
    }
    if repeats && chain.up_at(levels - 2) != chain.up_at(levels - 1) {
        // R_m for m > stored differs from the last stored one
        matrices.push(rate_matrix(chain, levels, variant, &mut ops)?);
    }
    Ok(RateMatrixSet {
        matrices,
        index,
        repeats,
        level_sizes: chain.level_sizes(),
        variant,
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_dense;

    #[test]
    fn u_tilde_collects_row_sums() {
        let u = block_from_triplets(3, 3, [(1, 0, 2.0), (2, 1, 2.0)]);
        let t = to_dense(&build_u_tilde(&u, 0));
        assert_eq!(t.column(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 2.0, 2.0]);
        assert_eq!(t.columns(1, 2).iter().filter(|v| **v != 0.0).count(), 0);
        let z = block_from_triplets(3, 3, []);
        assert_eq!(build_u_tilde(&z, 1).nnz(), 0);
    }

    #[test]
    fn scalar_rate_matrix() {
        let s = |v: f64| block_from_triplets(1, 1, [(0, 0, v)]);
        let (l, mu) = (1.0, 2.0);
        let chain = LevelBlockChain::new(
            vec![s(-l), s(-(l + mu)), s(-(l + mu))],
            vec![s(l), s(l), s(l)],
            vec![s(mu), s(mu)],
            LevelTail::Repeating,
        )
        .unwrap();
        let r = compute_rate_matrices(&chain, Variant::QdesaPlus).unwrap();
        for m in 1..6 {
            assert!((r.get(m).unwrap()[(0, 0)] - l / mu).abs() < 1e-15);
        }
        assert_eq!(r.repeat_from(), Some(1));
    }
}
