//! Finite-dimensional C*-algebras `B = ⊕_k M_{n_k}` with a fixed faithful
//! representation (the direct sum of the defining blocks), their elements,
//! positivity, central projections, and unitalization.

use crate::numkit::{eigh, CMatrix, Tolerance, C64, ONE};
use crate::{Error, Result};

/// A direct sum of full matrix blocks `M_{n_1} ⊕ … ⊕ M_{n_K}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAlgebra {
    block_dims: Vec<usize>,
}

impl BlockAlgebra {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput(
                "a block algebra needs at least one block, all of positive size".into(),
            ));
        }
        Ok(BlockAlgebra { block_dims })
    }

    /// The full matrix algebra `M_n`.
    pub fn full(n: usize) -> Self {
        BlockAlgebra::new(vec![n]).expect("positive size")
    }

    /// The diagonal algebra `C^n`.
    pub fn diagonal(n: usize) -> Self {
        BlockAlgebra::new(vec![1; n]).expect("positive size")
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// Dimension of the representation space `G = ⊕_k C^{n_k}`.
    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Offset of block `k` inside the representation space.
    pub fn block_offset(&self, k: usize) -> usize {
        self.block_dims[..k].iter().sum()
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            blocks: self
                .block_dims
                .iter()
                .map(|&n| CMatrix::zeros(n, n))
                .collect(),
        }
    }

    pub fn unit(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            blocks: self
                .block_dims
                .iter()
                .map(|&n| CMatrix::identity(n))
                .collect(),
        }
    }

    pub fn element_from_blocks(&self, blocks: Vec<CMatrix>) -> Result<AlgebraElement> {
        if blocks.len() != self.num_blocks()
            || blocks
                .iter()
                .zip(&self.block_dims)
                .any(|(m, &n)| m.rows() != n || m.cols() != n)
        {
            return Err(Error::DimensionMismatch(
                "block shapes do not match the algebra".into(),
            ));
        }
        Ok(AlgebraElement {
            parent: self.clone(),
            blocks,
        })
    }

    /// Element from its full representation matrix; off-block entries must
    /// vanish within tolerance.
    pub fn element_from_rep(&self, rep: &CMatrix, tol: &Tolerance) -> Result<AlgebraElement> {
        let n = self.total_dim();
        if rep.rows() != n || rep.cols() != n {
            return Err(Error::DimensionMismatch(
                "representation size mismatch".into(),
            ));
        }
        let mut blocks = Vec::with_capacity(self.num_blocks());
        for (k, &nk) in self.block_dims.iter().enumerate() {
            let off = self.block_offset(k);
            blocks.push(rep.submatrix(off, off, nk, nk));
        }
        let elem = AlgebraElement {
            parent: self.clone(),
            blocks,
        };
        let resid = rep.sub(&elem.rep()).frobenius_norm();
        if resid > tol.eq_rel * rep.frobenius_norm().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "matrix has off-block mass {resid:.3e}, not an algebra element"
            )));
        }
        Ok(elem)
    }

    /// Matrix units of every block, enumerated as `(block, row, col)`.
    pub fn basis(&self) -> Vec<AlgebraElement> {
        let mut out = Vec::new();
        for (k, &nk) in self.block_dims.iter().enumerate() {
            for i in 0..nk {
                for j in 0..nk {
                    let mut e = self.zero();
                    e.blocks[k].set(i, j, ONE);
                    out.push(e);
                }
            }
        }
        out
    }

    /// Rank-one projection onto coordinate `i` of block `k`.
    pub fn coordinate_projection(&self, k: usize, i: usize) -> AlgebraElement {
        let mut e = self.zero();
        e.blocks[k].set(i, i, ONE);
        e
    }

    /// Central projection supported on the given blocks.
    pub fn central_projection(&self, blocks: &[bool]) -> AlgebraElement {
        let mut e = self.zero();
        for (k, &on) in blocks.iter().enumerate() {
            if on {
                e.blocks[k] = CMatrix::identity(self.block_dims[k]);
            }
        }
        e
    }
}

/// An element of a [`BlockAlgebra`], stored blockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    parent: BlockAlgebra,
    blocks: Vec<CMatrix>,
}

impl AlgebraElement {
    pub fn parent(&self) -> &BlockAlgebra {
        &self.parent
    }

    pub fn block(&self, k: usize) -> &CMatrix {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block_mut(&mut self, k: usize) -> &mut CMatrix {
        &mut self.blocks[k]
    }

    /// Full representation matrix (block diagonal).
    pub fn rep(&self) -> CMatrix {
        CMatrix::block_diag(&self.blocks.iter().collect::<Vec<_>>())
    }

    fn check_parent(&self, other: &AlgebraElement) -> Result<()> {
        if self.parent != other.parent {
            return Err(Error::AlgebraMismatch(
                "elements live in different algebras".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(AlgebraElement {
            parent: self.parent.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(AlgebraElement {
            parent: self.parent.clone(),
            blocks,
        })
    }

    pub fn scale(&self, s: C64) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    pub fn multiply(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.matmul(b))
            .collect();
        Ok(AlgebraElement {
            parent: self.parent.clone(),
            blocks,
        })
    }

    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    /// Operator norm: the largest singular value over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.operator_norm())
            .fold(0.0, f64::max)
    }

    /// Self-adjoint with minimal eigenvalue `≥ −eq_rel·‖e‖` blockwise.
    pub fn is_positive(&self, tol: &Tolerance) -> bool {
        let scale = self.norm().max(1.0);
        let herm = self.sub(&self.adjoint()).expect("same parent");
        if herm.norm() > tol.eq_rel * scale {
            return false;
        }
        self.blocks.iter().all(|b| {
            if b.rows() == 0 {
                return true;
            }
            let sym = b.add(&b.adjoint()).scale(C64::new(0.5, 0.0));
            let (vals, _) = eigh(&sym);
            vals.last().copied().unwrap_or(0.0) >= -tol.eq_rel * scale
        })
    }

    /// `‖e² − e‖` and `‖e* − e‖` within tolerance.
    pub fn is_projection(&self, tol: &Tolerance) -> bool {
        let idem = self
            .multiply(self)
            .expect("same parent")
            .sub(self)
            .expect("same parent")
            .norm();
        let sa = self.sub(&self.adjoint()).expect("same parent").norm();
        idem <= tol.eq_rel * self.norm().max(1.0) && sa <= tol.eq_rel * self.norm().max(1.0)
    }

    /// Commutes with every element of the algebra, i.e. each block is scalar.
    pub fn is_central(&self, tol: &Tolerance) -> bool {
        self.blocks.iter().all(|b| {
            let n = b.rows();
            if n == 0 {
                return true;
            }
            let mean = b.trace() / C64::new(n as f64, 0.0);
            b.sub(&CMatrix::identity(n).scale(mean)).frobenius_norm()
                <= tol.eq_rel * b.frobenius_norm().max(1.0)
        })
    }

    /// Partial order: `self ≤ other` iff `other − self` is positive.
    pub fn leq(&self, other: &AlgebraElement, tol: &Tolerance) -> Result<bool> {
        Ok(other.sub(self)?.is_positive(tol))
    }
}

/// The unitalization `B̃ = B ⊕ C·1̃`, realized by appending a `1×1` block.
#[derive(Debug, Clone)]
pub struct Unitalization {
    original: BlockAlgebra,
    extended: BlockAlgebra,
}

/// Append a new unit block to `b` and expose the embedding data.
pub fn unitalize_algebra(b: &BlockAlgebra) -> Unitalization {
    let mut dims = b.block_dims().to_vec();
    dims.push(1);
    Unitalization {
        original: b.clone(),
        extended: BlockAlgebra::new(dims).expect("nonempty"),
    }
}

impl Unitalization {
    pub fn original(&self) -> &BlockAlgebra {
        &self.original
    }

    pub fn extended(&self) -> &BlockAlgebra {
        &self.extended
    }

    /// The *-monomorphism `b ↦ b ⊕ 0`.
    pub fn embed(&self, e: &AlgebraElement) -> Result<AlgebraElement> {
        if e.parent() != &self.original {
            return Err(Error::AlgebraMismatch(
                "element not in the unitalized algebra's base".into(),
            ));
        }
        let mut blocks = e.blocks.clone();
        blocks.push(CMatrix::zeros(1, 1));
        self.extended.element_from_blocks(blocks)
    }

    /// The old unit `𝟙_B ⊕ 0`.
    pub fn old_unit(&self) -> AlgebraElement {
        self.embed(&self.original.unit()).expect("unit embeds")
    }

    /// The defect projection `0 ⊕ 1 = 1̃ − 𝟙_B`.
    pub fn new_unit_defect(&self) -> AlgebraElement {
        let mut e = self.extended.zero();
        let k = self.extended.num_blocks() - 1;
        e.blocks[k] = CMatrix::identity(1);
        e
    }

    /// Restrict an extended element to the original corner.
    pub fn restrict(&self, e: &AlgebraElement) -> Result<AlgebraElement> {
        if e.parent() != &self.extended {
            return Err(Error::AlgebraMismatch(
                "element not in the extended algebra".into(),
            ));
        }
        let blocks = e.blocks[..e.blocks.len() - 1].to_vec();
        self.original.element_from_blocks(blocks)
    }
}

/// Smallest central projection dominating the projection `p`: the sum of the
/// identity blocks over all blocks where `p` is nonzero.
pub fn central_cover(p: &AlgebraElement, tol: &Tolerance) -> Result<AlgebraElement> {
    if !p.is_projection(tol) {
        let resid = p
            .multiply(p)
            .expect("same parent")
            .sub(p)
            .expect("same parent")
            .norm();
        return Err(Error::NotAProjection(resid));
    }
    let support: Vec<bool> = p
        .blocks
        .iter()
        .map(|b| b.frobenius_norm() > tol.eq_rel * p.norm().max(1.0))
        .collect();
    Ok(p.parent().central_projection(&support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_element(rng: &mut ChaCha8Rng, alg: &BlockAlgebra) -> AlgebraElement {
        let blocks = alg
            .block_dims()
            .iter()
            .map(|&n| {
                CMatrix::from_fn(n, n, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        alg.element_from_blocks(blocks).unwrap()
    }

    #[test]
    fn unit_is_idempotent() {
        let alg = BlockAlgebra::new(vec![2, 3]).unwrap();
        let one = alg.unit();
        assert_eq!(one.multiply(&one).unwrap(), one);
        assert!((one.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signature_matrix_is_not_positive() {
        let alg = BlockAlgebra::full(2);
        let tol = Tolerance::default();
        let e = alg
            .element_from_blocks(vec![CMatrix::from_real(&[&[1.0, 0.0], &[0.0, -1.0]])])
            .unwrap();
        assert!(!e.is_positive(&tol));
        assert!(e.multiply(&e).unwrap().is_positive(&tol));
    }

    #[test]
    fn cstar_identity_on_random_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dims in [vec![2], vec![1, 2], vec![2, 3, 1]] {
            let alg = BlockAlgebra::new(dims).unwrap();
            for _ in 0..20 {
                let a = random_element(&mut rng, &alg);
                let lhs = a.adjoint().multiply(&a).unwrap().norm();
                let rhs = a.norm() * a.norm();
                assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
            }
        }
    }

    #[test]
    fn unitalize_dimensions_iterate() {
        let c = BlockAlgebra::diagonal(1);
        let u1 = unitalize_algebra(&c);
        assert_eq!(u1.extended().block_dims(), &[1, 1]);
        let u2 = unitalize_algebra(u1.extended());
        assert_eq!(u2.extended().block_dims(), &[1, 1, 1]);
        let m2 = BlockAlgebra::full(2);
        let u = unitalize_algebra(&m2);
        assert_eq!(u.extended().block_dims(), &[2, 1]);
        assert_eq!(u.extended().total_dim(), 3);
    }

    #[test]
    fn unitalize_restrict_round_trip() {
        let tol = Tolerance::default();
        let alg = BlockAlgebra::new(vec![2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_element(&mut rng, &alg);
        let u = unitalize_algebra(&alg);
        let eb = u.embed(&b).unwrap();
        // old-unit · embed(b) · old-unit = embed(b)
        let p = u.old_unit();
        let squeezed = p.multiply(&eb).unwrap().multiply(&p).unwrap();
        assert!(squeezed.sub(&eb).unwrap().norm() < tol.eq_rel);
        assert_eq!(u.restrict(&eb).unwrap(), b);
    }

    #[test]
    fn central_cover_cases() {
        let tol = Tolerance::default();
        // p = 𝟙 → 𝟙.
        let alg = BlockAlgebra::new(vec![2, 2]).unwrap();
        let one = alg.unit();
        assert_eq!(central_cover(&one, &tol).unwrap(), one);
        // rank-1 p inside M_3 → full unit (factor has trivial center).
        let m3 = BlockAlgebra::full(3);
        let p = m3.coordinate_projection(0, 1);
        assert_eq!(central_cover(&p, &tol).unwrap(), m3.unit());
        // p = e₁e₁* ⊕ 0 in C ⊕ M_2 → 𝟙_C ⊕ 0.
        let mixed = BlockAlgebra::new(vec![1, 2]).unwrap();
        let q = mixed.coordinate_projection(0, 0);
        let cover = central_cover(&q, &tol).unwrap();
        assert_eq!(cover, mixed.central_projection(&[true, false]));
        // Non-projection input is rejected.
        let m2 = BlockAlgebra::full(2);
        let bad = m2.unit().scale(C64::new(0.5, 0.0));
        assert!(matches!(
            central_cover(&bad, &tol),
            Err(Error::NotAProjection(_))
        ));
    }

    #[test]
    fn central_cover_is_minimal_among_central_projections() {
        let tol = Tolerance::default();
        let alg = BlockAlgebra::new(vec![2, 1, 3]).unwrap();
        let mut p = alg.zero();
        p.blocks[0].set(0, 0, ONE);
        p.blocks[2].set(2, 2, ONE);
        let cover = central_cover(&p, &tol).unwrap();
        assert!(cover.is_central(&tol));
        assert!(cover.is_projection(&tol));
        assert!(p.leq(&cover, &tol).unwrap());
        // Enumerate all central projections (subsets of blocks) and check
        // minimality.
        for mask in 0u32..8 {
            let support: Vec<bool> = (0..3).map(|k| mask & (1 << k) != 0).collect();
            let q = alg.central_projection(&support);
            if p.leq(&q, &tol).unwrap() {
                assert!(cover.leq(&q, &tol).unwrap());
            }
        }
    }
}
