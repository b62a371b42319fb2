//! Correspondences (Hilbert bimodules) over block algebras in canonical
//! multiplicity form: elements, B-valued inner products, direct sums,
//! interior tensor products, bilinear maps, generated subcorrespondences,
//! Gram presentations, constrained-isomorphism and strong-commutation tests.
//!
//! A correspondence from `A = ⊕_k M_{n_k}` to `B = ⊕_l M_{m_l}` is stored by
//! its multiplicity matrix `d_{k,l}` alone; elements carry one `n_k×m_l`
//! matrix per multiplicity slot. Bilinear (bimodule) maps act on multiplicity
//! spaces only, which is exactly the space of adjointable bimodule morphisms
//! in finite dimension.
//!
//! Interior tensor products multiply multiplicity matrices:
//!
//! ```
//! use cpdil::algebra::BlockAlgebra;
//! use cpdil::corr::{tensor, Correspondence};
//!
//! let b = BlockAlgebra::diagonal(2);
//! let e = Correspondence::new(b.clone(), b.clone(), vec![vec![1, 1], vec![0, 1]])?;
//! let f = Correspondence::new(b.clone(), b.clone(), vec![vec![0, 1], vec![0, 1]])?;
//! assert_eq!(tensor(&e, &f)?.mult(), &vec![vec![0, 2], vec![0, 1]]);
//! assert_eq!(tensor(&f, &e)?.mult(), &vec![vec![0, 1], vec![0, 1]]);
//! # Ok::<(), cpdil::Error>(())
//! ```

use crate::algebra::{AlgebraElement, BlockAlgebra};
use crate::cpmap::CPMap;
use crate::numkit::{
    column_span_basis, eigh, kernel_basis, unitary_completion_exists, CMatrix, Tolerance, C64,
};
use crate::{Error, Result};

/// A finite-dimensional correspondence in canonical multiplicity form,
/// `E ≅ ⊕_{k,l} M_{n_k×m_l} ⊗ C^{d_{k,l}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    left: BlockAlgebra,
    right: BlockAlgebra,
    mult: Vec<Vec<usize>>,
}

impl Correspondence {
    pub fn new(left: BlockAlgebra, right: BlockAlgebra, mult: Vec<Vec<usize>>) -> Result<Self> {
        if mult.len() != left.num_blocks() || mult.iter().any(|row| row.len() != right.num_blocks())
        {
            return Err(Error::DimensionMismatch(
                "multiplicity matrix shape does not match the algebras".into(),
            ));
        }
        Ok(Correspondence { left, right, mult })
    }

    /// The trivial correspondence `B` over `B` (multiplicity = identity).
    pub fn trivial(b: &BlockAlgebra) -> Self {
        let k = b.num_blocks();
        let mult = (0..k)
            .map(|i| (0..k).map(|j| usize::from(i == j)).collect())
            .collect();
        Correspondence {
            left: b.clone(),
            right: b.clone(),
            mult,
        }
    }

    pub fn zero(left: BlockAlgebra, right: BlockAlgebra) -> Self {
        let mult = vec![vec![0; right.num_blocks()]; left.num_blocks()];
        Correspondence { left, right, mult }
    }

    pub fn left(&self) -> &BlockAlgebra {
        &self.left
    }

    pub fn right(&self) -> &BlockAlgebra {
        &self.right
    }

    pub fn mult(&self) -> &Vec<Vec<usize>> {
        &self.mult
    }

    pub fn mult_at(&self, k: usize, l: usize) -> usize {
        self.mult[k][l]
    }

    /// Total multiplicity `Σ_{k,l} d_{k,l}`.
    pub fn mult_total(&self) -> usize {
        self.mult.iter().flatten().sum()
    }

    /// Linear dimension `Σ_{k,l} n_k · m_l · d_{k,l}`.
    pub fn total_dim(&self) -> usize {
        let mut dim = 0;
        for k in 0..self.left.num_blocks() {
            for l in 0..self.right.num_blocks() {
                dim += self.left.block_dims()[k] * self.right.block_dims()[l] * self.mult[k][l];
            }
        }
        dim
    }

    pub fn is_zero(&self) -> bool {
        self.mult_total() == 0
    }

    pub fn zero_vector(&self) -> CorrVector {
        let comps = (0..self.left.num_blocks())
            .map(|k| {
                (0..self.right.num_blocks())
                    .map(|l| {
                        let (nk, ml) = (self.left.block_dims()[k], self.right.block_dims()[l]);
                        (0..self.mult[k][l])
                            .map(|_| CMatrix::zeros(nk, ml))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CorrVector {
            parent: self.clone(),
            comps,
        }
    }

    /// The unit `𝟙` of the trivial correspondence.
    pub fn unit_vector(b: &BlockAlgebra) -> CorrVector {
        let corr = Correspondence::trivial(b);
        let mut v = corr.zero_vector();
        for k in 0..b.num_blocks() {
            v.comps[k][k][0] = CMatrix::identity(b.block_dims()[k]);
        }
        v
    }

    fn same_shape(&self, other: &Correspondence) -> bool {
        self == other
    }
}

/// An element of a [`Correspondence`]; `comps[k][l][m]` is an `n_k×m_l`
/// matrix. Zero blocks carry no storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrVector {
    parent: Correspondence,
    comps: Vec<Vec<Vec<CMatrix>>>,
}

impl CorrVector {
    pub fn parent(&self) -> &Correspondence {
        &self.parent
    }

    pub fn comp(&self, k: usize, l: usize, m: usize) -> &CMatrix {
        &self.comps[k][l][m]
    }

    pub fn set_comp(&mut self, k: usize, l: usize, m: usize, value: CMatrix) {
        assert_eq!(value.rows(), self.parent.left.block_dims()[k]);
        assert_eq!(value.cols(), self.parent.right.block_dims()[l]);
        self.comps[k][l][m] = value;
    }

    pub fn add(&self, other: &CorrVector) -> Result<CorrVector> {
        if !self.parent.same_shape(&other.parent) {
            return Err(Error::AlgebraMismatch(
                "vectors in different correspondences".into(),
            ));
        }
        let mut out = self.clone();
        for (k, row) in out.comps.iter_mut().enumerate() {
            for (l, slot) in row.iter_mut().enumerate() {
                for (m, c) in slot.iter_mut().enumerate() {
                    *c = c.add(&other.comps[k][l][m]);
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &CorrVector) -> Result<CorrVector> {
        Ok(self.add(&other.scale(C64::new(-1.0, 0.0)))?)
    }

    pub fn scale(&self, s: C64) -> CorrVector {
        let mut out = self.clone();
        for row in out.comps.iter_mut() {
            for slot in row.iter_mut() {
                for c in slot.iter_mut() {
                    *c = c.scale(s);
                }
            }
        }
        out
    }

    /// Left action `b · x` (acts by `b_k` on the matrix factor).
    pub fn left_mul(&self, b: &AlgebraElement) -> Result<CorrVector> {
        if b.parent() != &self.parent.left {
            return Err(Error::AlgebraMismatch(
                "left action algebra mismatch".into(),
            ));
        }
        let mut out = self.clone();
        for (k, row) in out.comps.iter_mut().enumerate() {
            for slot in row.iter_mut() {
                for c in slot.iter_mut() {
                    *c = b.block(k).matmul(c);
                }
            }
        }
        Ok(out)
    }

    /// Right action `x · b`.
    pub fn right_mul(&self, b: &AlgebraElement) -> Result<CorrVector> {
        if b.parent() != &self.parent.right {
            return Err(Error::AlgebraMismatch(
                "right action algebra mismatch".into(),
            ));
        }
        let mut out = self.clone();
        for row in out.comps.iter_mut() {
            for (l, slot) in row.iter_mut().enumerate() {
                for c in slot.iter_mut() {
                    *c = c.matmul(b.block(l));
                }
            }
        }
        Ok(out)
    }

    /// B-valued inner product: the `l`-block of `⟨x, y⟩` is
    /// `Σ_{k,m} (x_{k,l,m})* y_{k,l,m}`.
    pub fn inner(&self, other: &CorrVector) -> Result<AlgebraElement> {
        if !self.parent.same_shape(&other.parent) {
            return Err(Error::AlgebraMismatch(
                "vectors in different correspondences".into(),
            ));
        }
        let right = &self.parent.right;
        let mut out = right.zero();
        for l in 0..right.num_blocks() {
            let ml = right.block_dims()[l];
            let mut acc = CMatrix::zeros(ml, ml);
            for k in 0..self.parent.left.num_blocks() {
                for m in 0..self.parent.mult[k][l] {
                    acc = acc.add(&self.comps[k][l][m].adjoint().matmul(&other.comps[k][l][m]));
                }
            }
            *out.block_mut(l) = acc;
        }
        Ok(out)
    }

    /// Hilbert-module norm `‖⟨x,x⟩‖^{1/2}`.
    pub fn module_norm(&self) -> f64 {
        self.inner(self).expect("same parent").norm().sqrt()
    }

    /// Euclidean norm of all components (for residual arithmetic).
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for row in &self.comps {
            for slot in row {
                for c in slot {
                    s += c.frobenius_norm().powi(2);
                }
            }
        }
        s.sqrt()
    }

    /// The multiplicity entry vector of component block `(k,l)` at matrix
    /// position `(r,s)`: `(x^{(k,l,m)}_{r,s})_m ∈ C^{d_{k,l}}`.
    pub fn entry_vector(&self, k: usize, l: usize, r: usize, s: usize) -> Vec<C64> {
        self.comps[k][l].iter().map(|c| c.get(r, s)).collect()
    }
}

/// An adjointable bimodule map between correspondences over the same algebra
/// pair: per block `(k,l)` a `d'_{k,l}×d_{k,l}` matrix acting on multiplicity
/// spaces only.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearMap {
    source: Correspondence,
    target: Correspondence,
    blocks: Vec<Vec<CMatrix>>,
}

impl BilinearMap {
    pub fn new(
        source: Correspondence,
        target: Correspondence,
        blocks: Vec<Vec<CMatrix>>,
    ) -> Result<Self> {
        if source.left != target.left || source.right != target.right {
            return Err(Error::AlgebraMismatch(
                "bilinear maps need a common algebra pair".into(),
            ));
        }
        for k in 0..source.left.num_blocks() {
            for l in 0..source.right.num_blocks() {
                let b = &blocks[k][l];
                if b.rows() != target.mult[k][l] || b.cols() != source.mult[k][l] {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({k},{l}) must be {}×{}, got {}×{}",
                        target.mult[k][l],
                        source.mult[k][l],
                        b.rows(),
                        b.cols()
                    )));
                }
            }
        }
        Ok(BilinearMap {
            source,
            target,
            blocks,
        })
    }

    pub fn identity(corr: &Correspondence) -> Self {
        let blocks = corr
            .mult
            .iter()
            .map(|row| row.iter().map(|&d| CMatrix::identity(d)).collect())
            .collect();
        BilinearMap {
            source: corr.clone(),
            target: corr.clone(),
            blocks,
        }
    }

    pub fn zero(source: &Correspondence, target: &Correspondence) -> Self {
        let blocks = (0..source.left.num_blocks())
            .map(|k| {
                (0..source.right.num_blocks())
                    .map(|l| CMatrix::zeros(target.mult[k][l], source.mult[k][l]))
                    .collect()
            })
            .collect();
        BilinearMap {
            source: source.clone(),
            target: target.clone(),
            blocks,
        }
    }

    pub fn source(&self) -> &Correspondence {
        &self.source
    }

    pub fn target(&self) -> &Correspondence {
        &self.target
    }

    pub fn block(&self, k: usize, l: usize) -> &CMatrix {
        &self.blocks[k][l]
    }

    pub fn block_mut(&mut self, k: usize, l: usize) -> &mut CMatrix {
        &mut self.blocks[k][l]
    }

    /// Clone of all blocks (per `(k,l)` the `d'×d` matrix).
    pub fn block_rows(&self) -> Vec<Vec<CMatrix>> {
        self.blocks.clone()
    }

    pub fn apply(&self, v: &CorrVector) -> Result<CorrVector> {
        if !v.parent.same_shape(&self.source) {
            return Err(Error::AlgebraMismatch(
                "vector not in the map's source".into(),
            ));
        }
        let mut out = self.target.zero_vector();
        for k in 0..self.source.left.num_blocks() {
            for l in 0..self.source.right.num_blocks() {
                let b = &self.blocks[k][l];
                for mp in 0..self.target.mult[k][l] {
                    let mut acc =
                        CMatrix::zeros(out.comps[k][l][mp].rows(), out.comps[k][l][mp].cols());
                    for m in 0..self.source.mult[k][l] {
                        acc = acc.add(&v.comps[k][l][m].scale(b.get(mp, m)));
                    }
                    out.comps[k][l][mp] = acc;
                }
            }
        }
        Ok(out)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &BilinearMap) -> Result<BilinearMap> {
        if !other.target.same_shape(&self.source) {
            return Err(Error::DimensionMismatch(
                "composition shape mismatch".into(),
            ));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(row_a, row_b)| row_a.iter().zip(row_b).map(|(a, b)| a.matmul(b)).collect())
            .collect();
        BilinearMap::new(other.source.clone(), self.target.clone(), blocks)
    }

    pub fn adjoint(&self) -> BilinearMap {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(|b| b.adjoint()).collect())
            .collect();
        BilinearMap {
            source: self.target.clone(),
            target: self.source.clone(),
            blocks,
        }
    }

    pub fn add(&self, other: &BilinearMap) -> Result<BilinearMap> {
        if !self.source.same_shape(&other.source) || !self.target.same_shape(&other.target) {
            return Err(Error::DimensionMismatch("map shapes differ".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a.add(b)).collect())
            .collect();
        Ok(BilinearMap {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &BilinearMap) -> Result<BilinearMap> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> BilinearMap {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(|b| b.scale(s)).collect())
            .collect();
        BilinearMap {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks,
        }
    }

    /// Largest per-block operator norm.
    pub fn op_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|b| b.operator_norm())
            .fold(0.0, f64::max)
    }

    /// `max_block ‖M*M − I‖`.
    pub fn isometry_defect(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|b| {
                let d = b.cols();
                b.adjoint()
                    .matmul(b)
                    .sub(&CMatrix::identity(d))
                    .operator_norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max_block max(‖M*M − I‖, ‖MM* − I‖)`.
    pub fn unitary_defect(&self) -> f64 {
        let co = self
            .blocks
            .iter()
            .flatten()
            .map(|b| {
                let d = b.rows();
                b.matmul(&b.adjoint())
                    .sub(&CMatrix::identity(d))
                    .operator_norm()
            })
            .fold(0.0, f64::max);
        self.isometry_defect().max(co)
    }

    pub fn is_isometry(&self, tol: &Tolerance) -> bool {
        self.isometry_defect() <= tol.eq_rel
    }

    pub fn is_unitary(&self, tol: &Tolerance) -> bool {
        self.unitary_defect() <= tol.eq_rel
    }
}

// ---------------------------------------------------------------------------
// Binary tensor product
// ---------------------------------------------------------------------------

/// Interior tensor product `E ⊙ F`: multiplicity matrix is the matrix product
/// `mult(E)·mult(F)`; the multiplicity basis of block `(k,l)` is indexed by
/// `(j, m_E, m_F)` in lexicographic order.
pub fn tensor(e: &Correspondence, f: &Correspondence) -> Result<Correspondence> {
    if e.right != f.left {
        return Err(Error::AlgebraMismatch(
            "tensor needs right(E) = left(F)".into(),
        ));
    }
    let kk = e.left.num_blocks();
    let ll = f.right.num_blocks();
    let jj = e.right.num_blocks();
    let mut mult = vec![vec![0usize; ll]; kk];
    for k in 0..kk {
        for l in 0..ll {
            mult[k][l] = (0..jj).map(|j| e.mult[k][j] * f.mult[j][l]).sum();
        }
    }
    Correspondence::new(e.left.clone(), f.right.clone(), mult)
}

/// Offset of the `(j, m_e, m_f)` basis element inside block `(k,l)` of `E⊙F`.
fn tensor_offset(e: &Correspondence, f: &Correspondence, k: usize, l: usize, j: usize) -> usize {
    (0..j).map(|jp| e.mult[k][jp] * f.mult[jp][l]).sum()
}

/// Simple-tensor embedder `(x, y) ↦ x ⊙ y` respecting
/// `⟨x⊙y, x'⊙y'⟩ = ⟨y, ⟨x,x'⟩ y'⟩`.
pub fn tensor_vectors(x: &CorrVector, y: &CorrVector) -> Result<CorrVector> {
    let prod = tensor(&x.parent, &y.parent)?;
    let mut out = prod.zero_vector();
    for k in 0..x.parent.left.num_blocks() {
        for j in 0..x.parent.right.num_blocks() {
            for l in 0..y.parent.right.num_blocks() {
                let off = tensor_offset(&x.parent, &y.parent, k, l, j);
                for me in 0..x.parent.mult[k][j] {
                    for mf in 0..y.parent.mult[j][l] {
                        let idx = off + me * y.parent.mult[j][l] + mf;
                        out.comps[k][l][idx] = x.comps[k][j][me].matmul(&y.comps[j][l][mf]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Amplification `S ⊙ T` of bilinear maps on the binary tensor.
pub fn tensor_maps(s: &BilinearMap, t: &BilinearMap) -> Result<BilinearMap> {
    let source = tensor(&s.source, &t.source)?;
    let target = tensor(&s.target, &t.target)?;
    let mut blocks = Vec::with_capacity(source.left.num_blocks());
    for k in 0..source.left.num_blocks() {
        let mut row = Vec::with_capacity(source.right.num_blocks());
        for l in 0..source.right.num_blocks() {
            let mut blk = CMatrix::zeros(target.mult[k][l], source.mult[k][l]);
            for j in 0..s.source.right.num_blocks() {
                let so = tensor_offset(&s.source, &t.source, k, l, j);
                let to = tensor_offset(&s.target, &t.target, k, l, j);
                let kron = s.blocks[k][j].kron(&t.blocks[j][l]);
                for r in 0..kron.rows() {
                    for c in 0..kron.cols() {
                        blk.set(to + r, so + c, kron.get(r, c));
                    }
                }
            }
            row.push(blk);
        }
        blocks.push(row);
    }
    BilinearMap::new(source, target, blocks)
}

// ---------------------------------------------------------------------------
// Multi-factor tensor products (path-lex flattening)
// ---------------------------------------------------------------------------

/// Basis bookkeeping for an n-fold tensor `E_1 ⊙ … ⊙ E_n`: for each block
/// pair `(k,l)` the list of `(interior block path, multiplicity tuple)` in
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct PathBasis {
    /// `elements[k][l]` lists `(path, mults)`, where `path` has length `n−1`
    /// (interior blocks) and `mults` has length `n`.
    pub elements: Vec<Vec<Vec<(Vec<usize>, Vec<usize>)>>>,
}

fn enumerate_paths(
    factors: &[&Correspondence],
    k: usize,
    l: usize,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = factors.len();
    let mut out = Vec::new();
    // Depth-first over interior blocks, then multiplicities, in lex order.
    fn rec_blocks(
        factors: &[&Correspondence],
        pos: usize,
        last: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        let n = factors.len();
        if pos == n - 1 {
            // Path fixed; enumerate multiplicity tuples in lex order.
            let mut chain = Vec::with_capacity(n);
            let mut a = // block chain: prev .. interior .. last
                Vec::with_capacity(n + 1);
            a.push(path[0]);
            a.extend_from_slice(&path[1..]);
            a.push(last);
            for (i, f) in factors.iter().enumerate() {
                chain.push(f.mult[a[i]][a[i + 1]]);
            }
            if chain.iter().any(|&d| d == 0) {
                return;
            }
            let mut m = vec![0usize; n];
            loop {
                out.push((path[1..].to_vec(), m.clone()));
                // Increment lexicographically.
                let mut i = n;
                loop {
                    if i == 0 {
                        return;
                    }
                    i -= 1;
                    m[i] += 1;
                    if m[i] < chain[i] {
                        break;
                    }
                    m[i] = 0;
                    if i == 0 {
                        return;
                    }
                }
            }
        } else {
            let mid_blocks = factors[pos].right.num_blocks();
            for j in 0..mid_blocks {
                path.push(j);
                rec_blocks(factors, pos + 1, last, path, out);
                path.pop();
            }
        }
    }
    if n == 0 {
        if k == l {
            out.push((vec![], vec![]));
        }
        return out;
    }
    let mut path = vec![k];
    rec_blocks(factors, 0, l, &mut path, &mut out);
    out
}

/// Canonical n-fold tensor with its [`PathBasis`].
pub fn multi_tensor(factors: &[&Correspondence]) -> Result<(Correspondence, PathBasis)> {
    for w in factors.windows(2) {
        if w[0].right != w[1].left {
            return Err(Error::AlgebraMismatch("tensor chain mismatch".into()));
        }
    }
    let (left, right) = match (factors.first(), factors.last()) {
        (Some(f), Some(g)) => (f.left.clone(), g.right.clone()),
        _ => return Err(Error::InvalidInput(
            "multi_tensor of an empty factor list needs an algebra; use Correspondence::trivial"
                .into(),
        )),
    };
    let kk = left.num_blocks();
    let ll = right.num_blocks();
    let mut elements = Vec::with_capacity(kk);
    let mut mult = vec![vec![0usize; ll]; kk];
    for k in 0..kk {
        let mut row = Vec::with_capacity(ll);
        for l in 0..ll {
            let els = enumerate_paths(factors, k, l);
            mult[k][l] = els.len();
            row.push(els);
        }
        elements.push(row);
    }
    let corr = Correspondence::new(left, right, mult)?;
    Ok((corr, PathBasis { elements }))
}

impl PathBasis {
    /// Index of `(path, mults)` inside block `(k,l)`.
    pub fn index_of(&self, k: usize, l: usize, path: &[usize], mults: &[usize]) -> Option<usize> {
        self.elements[k][l]
            .iter()
            .position(|(p, m)| p == path && m == mults)
    }
}

/// Embed a list of vectors as their n-fold simple tensor in path-lex form.
pub fn multi_embed(vectors: &[&CorrVector]) -> Result<CorrVector> {
    let factors: Vec<&Correspondence> = vectors.iter().map(|v| &v.parent).collect();
    let (corr, basis) = multi_tensor(&factors)?;
    let n = vectors.len();
    let mut out = corr.zero_vector();
    for k in 0..corr.left.num_blocks() {
        for l in 0..corr.right.num_blocks() {
            for (idx, (path, mults)) in basis.elements[k][l].iter().enumerate() {
                let mut chain = Vec::with_capacity(n + 1);
                chain.push(k);
                chain.extend_from_slice(path);
                chain.push(l);
                let mut acc: Option<CMatrix> = None;
                for i in 0..n {
                    let comp = vectors[i].comp(chain[i], chain[i + 1], mults[i]);
                    acc = Some(match acc {
                        None => comp.clone(),
                        Some(a) => a.matmul(comp),
                    });
                }
                out.comps[k][l][idx] = acc.expect("n ≥ 1");
            }
        }
    }
    Ok(out)
}

/// The amplified flip `id ⊙ … ⊙ F ⊙ … ⊙ id` acting on sites
/// `(site, site+1)` of the n-fold tensor of `factors`, in path-lex bases.
///
/// `flip` must be a bilinear map `factors[site] ⊙ factors[site+1] →
/// factors[site+1] ⊙ factors[site]` in the binary convention.
pub fn site_flip(
    factors: &[&Correspondence],
    site: usize,
    flip: &BilinearMap,
) -> Result<BilinearMap> {
    let n = factors.len();
    if site + 1 >= n {
        return Err(Error::DimensionMismatch("flip site out of range".into()));
    }
    let expected_src = tensor(factors[site], factors[site + 1])?;
    let expected_tgt = tensor(factors[site + 1], factors[site])?;
    if !flip.source.same_shape(&expected_src) || !flip.target.same_shape(&expected_tgt) {
        return Err(Error::DimensionMismatch(
            "flip does not match the sites".into(),
        ));
    }
    let (src, src_basis) = multi_tensor(factors)?;
    let mut swapped: Vec<&Correspondence> = factors.to_vec();
    swapped.swap(site, site + 1);
    let (tgt, tgt_basis) = multi_tensor(&swapped)?;
    let mut blocks = Vec::with_capacity(src.left.num_blocks());
    for k in 0..src.left.num_blocks() {
        let mut row = Vec::with_capacity(src.right.num_blocks());
        for l in 0..src.right.num_blocks() {
            let mut blk = CMatrix::zeros(tgt.mult[k][l], src.mult[k][l]);
            for (ci, (path, mults)) in src_basis.elements[k][l].iter().enumerate() {
                // Full block chain including endpoints.
                let mut chain = Vec::with_capacity(n + 1);
                chain.push(k);
                chain.extend_from_slice(path);
                chain.push(l);
                let a = chain[site]; // left block of the pair
                let jmid = chain[site + 1];
                let b = chain[site + 2];
                let e_site = factors[site];
                let f_site = factors[site + 1];
                // Source inner index of (j, m_e, m_f) in the binary tensor.
                let src_inner = tensor_offset(e_site, f_site, a, b, jmid)
                    + mults[site] * f_site.mult[jmid][b]
                    + mults[site + 1];
                let fb = &flip.blocks[a][b];
                // Distribute over target inner indices (j', m_f', m_e').
                for jp in 0..f_site.left.num_blocks() {
                    let base = tensor_offset(f_site, e_site, a, b, jp);
                    for mfp in 0..f_site.mult[a][jp] {
                        for mep in 0..e_site.mult[jp][b] {
                            let tgt_inner = base + mfp * e_site.mult[jp][b] + mep;
                            let coeff = fb.get(tgt_inner, src_inner);
                            if coeff == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let mut tpath = chain.clone();
                            tpath[site + 1] = jp;
                            let mut tmults = mults.clone();
                            tmults[site] = mfp;
                            tmults[site + 1] = mep;
                            let ti = tgt_basis
                                .index_of(k, l, &tpath[1..n], &tmults)
                                .expect("target basis element exists");
                            let v = blk.get(ti, ci) + coeff;
                            blk.set(ti, ci, v);
                        }
                    }
                }
            }
            row.push(blk);
        }
        blocks.push(row);
    }
    BilinearMap::new(src, tgt, blocks)
}

/// The permutation unitary from the binary tensor of two multi-tensors onto
/// the concatenated multi-tensor,
/// `multi(A) ⊙ multi(B) → multi(A ++ B)`.
pub fn regroup(
    a_factors: &[&Correspondence],
    b_factors: &[&Correspondence],
) -> Result<BilinearMap> {
    let (a, a_basis) = multi_tensor(a_factors)?;
    let (b, b_basis) = multi_tensor(b_factors)?;
    let src = tensor(&a, &b)?;
    let mut all: Vec<&Correspondence> = a_factors.to_vec();
    all.extend_from_slice(b_factors);
    let (tgt, tgt_basis) = multi_tensor(&all)?;
    let mut blocks = Vec::with_capacity(src.left.num_blocks());
    for k in 0..src.left.num_blocks() {
        let mut row = Vec::with_capacity(src.right.num_blocks());
        for l in 0..src.right.num_blocks() {
            let mut blk = CMatrix::zeros(tgt.mult[k][l], src.mult[k][l]);
            for j in 0..a.right.num_blocks() {
                let off = tensor_offset(&a, &b, k, l, j);
                for (ma, (pa, mma)) in a_basis.elements[k][j].iter().enumerate() {
                    for (mb, (pb, mmb)) in b_basis.elements[j][l].iter().enumerate() {
                        let src_idx = off + ma * b.mult[j][l] + mb;
                        let mut path = pa.clone();
                        path.push(j);
                        path.extend_from_slice(pb);
                        let mut mm = mma.clone();
                        mm.extend_from_slice(mmb);
                        // Empty factor lists contribute no path entries.
                        let ti = tgt_basis
                            .index_of(k, l, &path[..all.len().saturating_sub(1)], &mm)
                            .expect("regrouped basis element exists");
                        blk.set(ti, src_idx, C64::new(1.0, 0.0));
                    }
                }
            }
            row.push(blk);
        }
        blocks.push(row);
    }
    BilinearMap::new(src, tgt, blocks)
}

// ---------------------------------------------------------------------------
// Direct sums
// ---------------------------------------------------------------------------

/// `E ⊕ F` with the canonical injections.
pub struct DirectSum {
    pub corr: Correspondence,
    pub inj_first: BilinearMap,
    pub inj_second: BilinearMap,
}

pub fn direct_sum(e: &Correspondence, f: &Correspondence) -> Result<DirectSum> {
    if e.left != f.left || e.right != f.right {
        return Err(Error::AlgebraMismatch(
            "direct sum needs a common algebra pair".into(),
        ));
    }
    let mut mult = e.mult.clone();
    for (k, row) in mult.iter_mut().enumerate() {
        for (l, d) in row.iter_mut().enumerate() {
            *d += f.mult[k][l];
        }
    }
    let sum = Correspondence::new(e.left.clone(), e.right.clone(), mult)?;
    let mut inj1 = BilinearMap::zero(e, &sum);
    let mut inj2 = BilinearMap::zero(f, &sum);
    for k in 0..e.left.num_blocks() {
        for l in 0..e.right.num_blocks() {
            for m in 0..e.mult[k][l] {
                inj1.blocks[k][l].set(m, m, C64::new(1.0, 0.0));
            }
            for m in 0..f.mult[k][l] {
                inj2.blocks[k][l].set(e.mult[k][l] + m, m, C64::new(1.0, 0.0));
            }
        }
    }
    Ok(DirectSum {
        corr: sum,
        inj_first: inj1,
        inj_second: inj2,
    })
}

// ---------------------------------------------------------------------------
// Generated subcorrespondences and complements
// ---------------------------------------------------------------------------

/// A subcorrespondence in canonical form together with its isometric
/// inclusion into the parent.
pub struct SubCorrespondence {
    pub corr: Correspondence,
    pub inclusion: BilinearMap,
}

/// Smallest subcorrespondence containing the given vectors: per block the
/// span of all multiplicity entry vectors.
pub fn generated_sub(vectors: &[&CorrVector], tol: &Tolerance) -> Result<SubCorrespondence> {
    let parent = match vectors.first() {
        Some(v) => v.parent.clone(),
        None => return Err(Error::InvalidInput("need at least one vector".into())),
    };
    if vectors.iter().any(|v| !v.parent.same_shape(&parent)) {
        return Err(Error::AlgebraMismatch(
            "vectors in different correspondences".into(),
        ));
    }
    let kk = parent.left.num_blocks();
    let ll = parent.right.num_blocks();
    let mut mult = vec![vec![0usize; ll]; kk];
    let mut bases: Vec<Vec<CMatrix>> = Vec::with_capacity(kk);
    for k in 0..kk {
        let mut row = Vec::with_capacity(ll);
        for l in 0..ll {
            let d = parent.mult[k][l];
            let nk = parent.left.block_dims()[k];
            let ml = parent.right.block_dims()[l];
            let mut cols: Vec<CMatrix> = Vec::new();
            for v in vectors {
                for r in 0..nk {
                    for s in 0..ml {
                        let ev = v.entry_vector(k, l, r, s);
                        let mut col = CMatrix::zeros(d, 1);
                        for (m, z) in ev.iter().enumerate() {
                            col.set(m, 0, *z);
                        }
                        cols.push(col);
                    }
                }
            }
            let stacked = if cols.is_empty() {
                CMatrix::zeros(d, 0)
            } else {
                CMatrix::hstack(&cols.iter().collect::<Vec<_>>())
            };
            let basis = column_span_basis(&stacked, tol);
            mult[k][l] = basis.cols();
            row.push(basis);
        }
        bases.push(row);
    }
    let sub = Correspondence::new(parent.left.clone(), parent.right.clone(), mult)?;
    let inclusion = BilinearMap::new(sub.clone(), parent.clone(), bases)?;
    Ok(SubCorrespondence {
        corr: sub,
        inclusion,
    })
}

/// Orthogonal multiplicity complement of a subcorrespondence.
pub fn complement(sub: &SubCorrespondence, tol: &Tolerance) -> Result<SubCorrespondence> {
    let parent = sub.inclusion.target.clone();
    let kk = parent.left.num_blocks();
    let ll = parent.right.num_blocks();
    let mut mult = vec![vec![0usize; ll]; kk];
    let mut bases = Vec::with_capacity(kk);
    for k in 0..kk {
        let mut row = Vec::with_capacity(ll);
        for l in 0..ll {
            let basis = kernel_basis(&sub.inclusion.blocks[k][l].adjoint(), tol)?;
            mult[k][l] = basis.cols();
            row.push(basis);
        }
        bases.push(row);
    }
    let comp = Correspondence::new(parent.left.clone(), parent.right.clone(), mult)?;
    let inclusion = BilinearMap::new(comp.clone(), parent, bases)?;
    Ok(SubCorrespondence {
        corr: comp,
        inclusion,
    })
}

// ---------------------------------------------------------------------------
// Gram presentations
// ---------------------------------------------------------------------------

/// A transient presentation of a correspondence by generators and B-valued
/// Gram data `⟨g_i, b·g_j⟩` on the left algebra's matrix-unit basis.
pub struct GramPresentation {
    left: BlockAlgebra,
    right: BlockAlgebra,
    n_gen: usize,
    /// `gram[i][j][α] = ⟨g_i, b_α g_j⟩`, `α` enumerating `left.basis()`.
    gram: Vec<Vec<Vec<AlgebraElement>>>,
}

impl GramPresentation {
    /// Build the presentation from an evaluation closure
    /// `(i, basis element b, j) ↦ ⟨g_i, b g_j⟩`.
    pub fn from_fn(
        left: &BlockAlgebra,
        right: &BlockAlgebra,
        n_gen: usize,
        mut eval: impl FnMut(usize, &AlgebraElement, usize) -> Result<AlgebraElement>,
    ) -> Result<Self> {
        let basis = left.basis();
        let mut gram = Vec::with_capacity(n_gen);
        for i in 0..n_gen {
            let mut row = Vec::with_capacity(n_gen);
            for j in 0..n_gen {
                let mut per_basis = Vec::with_capacity(basis.len());
                for b in &basis {
                    let g = eval(i, b, j)?;
                    if g.parent() != right {
                        return Err(Error::AlgebraMismatch(
                            "Gram values must live in the right algebra".into(),
                        ));
                    }
                    per_basis.push(g);
                }
                row.push(per_basis);
            }
            gram.push(row);
        }
        Ok(GramPresentation {
            left: left.clone(),
            right: right.clone(),
            n_gen,
            gram,
        })
    }

    pub fn generator_count(&self) -> usize {
        self.n_gen
    }

    /// Look up `⟨g_i, e^{(k)}_{r,r'} g_j⟩` (matrix-unit basis index).
    fn gram_unit(&self, i: usize, j: usize, k: usize, r: usize, rp: usize) -> &AlgebraElement {
        let mut alpha = 0;
        for kp in 0..k {
            let n = self.left.block_dims()[kp];
            alpha += n * n;
        }
        let nk = self.left.block_dims()[k];
        alpha += r * nk + rp;
        &self.gram[i][j][alpha]
    }
}

/// Canonicalize a Gram presentation: produce the canonical correspondence and
/// the images of the generators (GNS recipe: quotient the kernel of the
/// scalarized Gram, then read off multiplicity coordinates).
pub fn canonicalize(
    g: &GramPresentation,
    tol: &Tolerance,
) -> Result<(Correspondence, Vec<CorrVector>)> {
    let kk = g.left.num_blocks();
    let ll = g.right.num_blocks();
    let mut mult = vec![vec![0usize; ll]; kk];
    // Coordinates of generator entries per block: coords[k][l][(i,r,s)] ∈ C^d.
    let mut coords: Vec<Vec<CMatrix>> = Vec::with_capacity(kk);
    for k in 0..kk {
        let nk = g.left.block_dims()[k];
        let mut row = Vec::with_capacity(ll);
        for l in 0..ll {
            let ml = g.right.block_dims()[l];
            let count = g.n_gen * nk * ml;
            // Scalarized Gram of the multiplicity entry vectors:
            // G[(i,r,s),(j,r',s')] = ⟨g_i, e^{(k)}_{r,r'} g_j⟩_l entry (s,s').
            let mut gram = CMatrix::zeros(count, count);
            for i in 0..g.n_gen {
                for r in 0..nk {
                    for j in 0..g.n_gen {
                        for rp in 0..nk {
                            let val = g.gram_unit(i, j, k, r, rp);
                            let blk = val.block(l);
                            for s in 0..ml {
                                for sp in 0..ml {
                                    let a = (i * nk + r) * ml + s;
                                    let b = (j * nk + rp) * ml + sp;
                                    gram.set(a, b, blk.get(s, sp));
                                }
                            }
                        }
                    }
                }
            }
            // Hermitize against numerical noise, then factor.
            let gram = gram.add(&gram.adjoint()).scale(C64::new(0.5, 0.0));
            let (vals, vecs) = eigh(&gram);
            let scale = vals.first().copied().unwrap_or(0.0).max(1.0);
            if let Some(&min) = vals.last() {
                if min < -tol.eq_rel * scale {
                    return Err(Error::NotPositive(min));
                }
            }
            let top = vals.first().copied().unwrap_or(0.0);
            let d = vals
                .iter()
                .filter(|&&v| v > tol.rank_rel * top && v > 0.0)
                .count();
            // Coordinates: x_α = Λ^{1/2} V* e_α, first d rows.
            let mut x = CMatrix::zeros(d, count);
            for m in 0..d {
                let lam = vals[m].max(0.0).sqrt();
                for a in 0..count {
                    x.set(m, a, vecs.get(a, m).conj() * C64::new(lam, 0.0));
                }
            }
            mult[k][l] = d;
            row.push(x);
        }
        coords.push(row);
    }
    let corr = Correspondence::new(g.left.clone(), g.right.clone(), mult)?;
    let mut images = Vec::with_capacity(g.n_gen);
    for i in 0..g.n_gen {
        let mut v = corr.zero_vector();
        for k in 0..kk {
            let nk = g.left.block_dims()[k];
            for l in 0..ll {
                let ml = g.right.block_dims()[l];
                let x = &coords[k][l];
                for m in 0..corr.mult[k][l] {
                    let mut comp = CMatrix::zeros(nk, ml);
                    for r in 0..nk {
                        for s in 0..ml {
                            comp.set(r, s, x.get(m, (i * nk + r) * ml + s));
                        }
                    }
                    v.comps[k][l][m] = comp;
                }
            }
        }
        images.push(v);
    }
    Ok((corr, images))
}

// ---------------------------------------------------------------------------
// Constrained isomorphism and strong commutation
// ---------------------------------------------------------------------------

/// Failure diagnostics for [`iso_with_constraints`].
#[derive(Debug, Clone)]
pub enum IsoFailure {
    /// First block `(k,l)` where multiplicities differ, with the two values.
    DimensionWitness {
        block: (usize, usize),
        left_mult: usize,
        right_mult: usize,
    },
    /// Gram obstruction norm from the stacked constraint rows.
    GramResidual(f64),
}

/// Outcome of [`iso_with_constraints`] / [`strongly_commute`].
pub struct IsoDecision {
    pub witness: Option<BilinearMap>,
    pub failure: Option<IsoFailure>,
}

impl IsoDecision {
    pub fn is_yes(&self) -> bool {
        self.witness.is_some()
    }
}

/// Decide whether a bilinear unitary `u: e → f` with `u(x_i) = y_i` exists;
/// blockwise dimension match plus a stacked left-Gram match solved by
/// [`unitary_completion_exists`].
pub fn iso_with_constraints(
    e: &Correspondence,
    f: &Correspondence,
    xs: &[&CorrVector],
    ys: &[&CorrVector],
    tol: &Tolerance,
) -> Result<IsoDecision> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(
            "constraint lists differ in length".into(),
        ));
    }
    if e.left != f.left || e.right != f.right {
        return Err(Error::AlgebraMismatch(
            "correspondences over different algebra pairs".into(),
        ));
    }
    for k in 0..e.left.num_blocks() {
        for l in 0..e.right.num_blocks() {
            if e.mult[k][l] != f.mult[k][l] {
                return Ok(IsoDecision {
                    witness: None,
                    failure: Some(IsoFailure::DimensionWitness {
                        block: (k, l),
                        left_mult: e.mult[k][l],
                        right_mult: f.mult[k][l],
                    }),
                });
            }
        }
    }
    let mut blocks = Vec::with_capacity(e.left.num_blocks());
    for k in 0..e.left.num_blocks() {
        let nk = e.left.block_dims()[k];
        let mut row = Vec::with_capacity(e.right.num_blocks());
        for l in 0..e.right.num_blocks() {
            let ml = e.right.block_dims()[l];
            let d = e.mult[k][l];
            let rows_n = xs.len() * nk * ml;
            let mut x_stack = CMatrix::zeros(rows_n, d);
            let mut y_stack = CMatrix::zeros(rows_n, d);
            let mut rr = 0;
            for (x, y) in xs.iter().zip(ys) {
                for r in 0..nk {
                    for s in 0..ml {
                        let ex = x.entry_vector(k, l, r, s);
                        let ey = y.entry_vector(k, l, r, s);
                        for m in 0..d {
                            x_stack.set(rr, m, ex[m]);
                            y_stack.set(rr, m, ey[m]);
                        }
                        rr += 1;
                    }
                }
            }
            let res = unitary_completion_exists(&x_stack, &y_stack, tol)?;
            match res.witness {
                Some(u) => row.push(u),
                None => {
                    return Ok(IsoDecision {
                        witness: None,
                        failure: Some(IsoFailure::GramResidual(res.gram_residual)),
                    });
                }
            }
        }
        blocks.push(row);
    }
    let map = BilinearMap::new(e.clone(), f.clone(), blocks)?;
    Ok(IsoDecision {
        witness: Some(map),
        failure: None,
    })
}

/// The unique cyclically-intertwining bilinear unitary between the
/// subcorrespondences generated by `x` and `y` (whose inner-product data must
/// agree), returned as a map `gen(x) → gen(y)` between their canonical forms.
pub fn cyclic_intertwiner(
    x: &CorrVector,
    y: &CorrVector,
    tol: &Tolerance,
) -> Result<(SubCorrespondence, SubCorrespondence, BilinearMap)> {
    let sx = generated_sub(&[x], tol)?;
    let sy = generated_sub(&[y], tol)?;
    let x_in = sx.inclusion.adjoint().apply(x)?;
    let y_in = sy.inclusion.adjoint().apply(y)?;
    let dec = iso_with_constraints(&sx.corr, &sy.corr, &[&x_in], &[&y_in], tol)?;
    match dec.witness {
        Some(u) => Ok((sx, sy, u)),
        None => Err(Error::InvalidInput(
            "cyclic vectors do not generate isomorphic subcorrespondences".into(),
        )),
    }
}

/// Diagnostics attached to a strong-commutation verdict.
#[derive(Debug, Clone)]
pub enum StrongCommuteWitness {
    /// First failing block with the multiplicities of `E⊙F` vs `F⊙E`.
    Dimension {
        block: (usize, usize),
        ef: usize,
        fe: usize,
    },
    /// Gram residual of the cyclic-tensor extension problem.
    Gram(f64),
}

pub struct StrongCommuteDecision {
    pub commutes_strongly: bool,
    pub witness: Option<StrongCommuteWitness>,
    pub intertwiner: Option<BilinearMap>,
}

/// Strong commutation test for CP maps `t, s` on the same algebra: does a
/// bilinear unitary `u: E⊙F → F⊙E` with `u(ξ⊙ζ) = ζ⊙ξ` exist?
pub fn strongly_commute(t: &CPMap, s: &CPMap, tol: &Tolerance) -> Result<StrongCommuteDecision> {
    let st = s.compose(t)?;
    let ts = t.compose(s)?;
    let comm = st.action_distance(&ts)?;
    if comm > tol.eq_rel * st.action_scale().max(1.0) {
        return Err(Error::NotCommuting(comm));
    }
    let gt = t.gns(tol)?;
    let gs = s.gns(tol)?;
    let ef = tensor(&gt.corr, &gs.corr)?;
    let fe = tensor(&gs.corr, &gt.corr)?;
    let xi_zeta = tensor_vectors(&gt.cyclic, &gs.cyclic)?;
    let zeta_xi = tensor_vectors(&gs.cyclic, &gt.cyclic)?;
    let dec = iso_with_constraints(&ef, &fe, &[&xi_zeta], &[&zeta_xi], tol)?;
    match dec.witness {
        Some(u) => Ok(StrongCommuteDecision {
            commutes_strongly: true,
            witness: None,
            intertwiner: Some(u),
        }),
        None => {
            let witness = match dec.failure {
                Some(IsoFailure::DimensionWitness {
                    block,
                    left_mult,
                    right_mult,
                }) => Some(StrongCommuteWitness::Dimension {
                    block,
                    ef: left_mult,
                    fe: right_mult,
                }),
                Some(IsoFailure::GramResidual(r)) => Some(StrongCommuteWitness::Gram(r)),
                None => None,
            };
            Ok(StrongCommuteDecision {
                commutes_strongly: false,
                witness,
                intertwiner: None,
            })
        }
    }
}
