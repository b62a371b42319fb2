//! Completely positive maps between block algebras, carried by Kraus
//! families: Choi calculus, classification predicates, composition,
//! elementary maps, unitalization, and the GNS construction.
//!
//! The convention is `T(a) = Σ_i c_i* a c_i` with each Kraus operator mapping
//! the codomain's representation space into the domain's.
//!
//! Unitalization realizes `T̃(b + λ1̃) = T(b) + λ1̃` with the extra Kraus rows
//! `√(1̃ − T(𝟙))`:
//!
//! ```
//! use cpdil::cpmap::CPMap;
//! use cpdil::algebra::BlockAlgebra;
//! use cpdil::numkit::{CMatrix, Tolerance};
//!
//! let tol = Tolerance::default();
//! let c1 = BlockAlgebra::diagonal(1);
//! // The zero map on C unitalizes to the action matrix [[0,1],[0,1]].
//! let zt = CPMap::zero(&c1, &c1).unitalize(&tol)?;
//! let action = zt.action_matrix_diagonal()?;
//! assert!(action.sub(&CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 1.0]])).frobenius_norm() < 1e-12);
//! # Ok::<(), cpdil::Error>(())
//! ```

use crate::algebra::{unitalize_algebra, AlgebraElement, BlockAlgebra};
use crate::corr::{CorrVector, Correspondence};
use crate::numkit::{eigh, psd_sqrt, CMatrix, Tolerance, C64};
use crate::{Error, Result};

/// A CP map `T: A → B` stored by a Kraus family.
#[derive(Debug, Clone)]
pub struct CPMap {
    domain: BlockAlgebra,
    codomain: BlockAlgebra,
    kraus: Vec<CMatrix>,
}

impl CPMap {
    /// Build a CP map from Kraus operators (`N_A × N_B` each) and verify that
    /// the domain algebra is mapped into the codomain algebra on a basis.
    pub fn new(
        domain: BlockAlgebra,
        codomain: BlockAlgebra,
        kraus: Vec<CMatrix>,
        tol: &Tolerance,
    ) -> Result<Self> {
        let na = domain.total_dim();
        let nb = codomain.total_dim();
        for c in &kraus {
            if c.rows() != na || c.cols() != nb {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operators must be {na}×{nb}, got {}×{}",
                    c.rows(),
                    c.cols()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput("non-finite Kraus entries".into()));
            }
        }
        let map = CPMap {
            domain,
            codomain,
            kraus,
        };
        // Arbitrary Kraus families on the representation space need not
        // preserve a proper block algebra; single-block codomains are always
        // preserved.
        if map.codomain.num_blocks() > 1 {
            for b in map.domain.basis() {
                let img = map.apply_raw(&b.rep());
                map.codomain.element_from_rep(&img, tol).map_err(|_| {
                    Error::AlgebraMismatch(
                        "Kraus family does not map the domain algebra into the codomain".into(),
                    )
                })?;
            }
        }
        Ok(map)
    }

    /// The identity map on `alg`.
    pub fn identity(alg: &BlockAlgebra) -> Self {
        CPMap {
            domain: alg.clone(),
            codomain: alg.clone(),
            kraus: vec![CMatrix::identity(alg.total_dim())],
        }
    }

    /// The zero map.
    pub fn zero(domain: &BlockAlgebra, codomain: &BlockAlgebra) -> Self {
        CPMap {
            domain: domain.clone(),
            codomain: codomain.clone(),
            kraus: vec![],
        }
    }

    /// The elementary map `c* • c` for an algebra element `c`.
    pub fn elementary(c: &AlgebraElement) -> Self {
        CPMap {
            domain: c.parent().clone(),
            codomain: c.parent().clone(),
            kraus: vec![c.rep()],
        }
    }

    /// CP map on the diagonal algebra `C^n` from a nonnegative matrix `M`,
    /// applied in column convention: `T(a)_l = Σ_k M_{k,l} a_k`. The Kraus
    /// family is `{√M_{k,l} · e_{k,l}}`, so the GNS multiplicity matrix is
    /// exactly the support of `M`.
    pub fn from_nonneg_matrix_column_apply(m: &CMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch("need a square matrix".into()));
        }
        let n = m.rows();
        let alg = BlockAlgebra::diagonal(n);
        let mut kraus = Vec::new();
        for k in 0..n {
            for l in 0..n {
                let v = m.get(k, l);
                if v.im.abs() > 0.0 || v.re < 0.0 {
                    return Err(Error::InvalidInput(
                        "entries must be nonnegative reals".into(),
                    ));
                }
                if v.re > 0.0 {
                    kraus.push(CMatrix::matrix_unit(n, n, k, l).scale(C64::new(v.re.sqrt(), 0.0)));
                }
            }
        }
        Ok(CPMap {
            domain: alg.clone(),
            codomain: alg,
            kraus,
        })
    }

    pub fn domain(&self) -> &BlockAlgebra {
        &self.domain
    }

    pub fn codomain(&self) -> &BlockAlgebra {
        &self.codomain
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Evaluate on a raw representation matrix (no membership projection).
    pub fn apply_rep(&self, a_rep: &CMatrix) -> CMatrix {
        self.apply_raw(a_rep)
    }

    fn apply_raw(&self, a_rep: &CMatrix) -> CMatrix {
        let nb = self.codomain.total_dim();
        let mut out = CMatrix::zeros(nb, nb);
        for c in &self.kraus {
            out = out.add(&c.adjoint().matmul(a_rep).matmul(c));
        }
        out
    }

    /// Evaluate the map; off-block noise is compressed away (membership was
    /// verified at construction).
    pub fn apply(&self, a: &AlgebraElement) -> Result<AlgebraElement> {
        if a.parent() != &self.domain {
            return Err(Error::AlgebraMismatch("argument not in the domain".into()));
        }
        let rep = self.apply_raw(&a.rep());
        let mut blocks = Vec::with_capacity(self.codomain.num_blocks());
        for (l, &ml) in self.codomain.block_dims().iter().enumerate() {
            let off = self.codomain.block_offset(l);
            blocks.push(rep.submatrix(off, off, ml, ml));
        }
        self.codomain.element_from_blocks(blocks)
    }

    /// Max-norm distance of the two maps' actions over the domain basis.
    pub fn action_distance(&self, other: &CPMap) -> Result<f64> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::AlgebraMismatch(
                "maps with different signatures".into(),
            ));
        }
        let mut worst = 0.0f64;
        for b in self.domain.basis() {
            let d = self.apply(&b)?.sub(&other.apply(&b)?)?.norm();
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Max action norm over the domain basis (scale for relative residuals).
    pub fn action_scale(&self) -> f64 {
        self.domain
            .basis()
            .iter()
            .map(|b| self.apply(b).expect("basis in domain").norm())
            .fold(0.0, f64::max)
    }

    /// Row-convention action matrix for maps between diagonal algebras:
    /// `T(a) = R a` on coordinate vectors.
    pub fn action_matrix_diagonal(&self) -> Result<CMatrix> {
        if self.domain.block_dims().iter().any(|&n| n != 1)
            || self.codomain.block_dims().iter().any(|&n| n != 1)
        {
            return Err(Error::InvalidInput("only for diagonal algebras".into()));
        }
        let n = self.domain.num_blocks();
        let m = self.codomain.num_blocks();
        let mut r = CMatrix::zeros(m, n);
        for k in 0..n {
            let img = self.apply(&self.domain.coordinate_projection(k, 0))?;
            for l in 0..m {
                r.set(l, k, img.block(l).get(0, 0));
            }
        }
        Ok(r)
    }

    /// Choi matrix: `Σ_k Σ_{r,s∈block k} E_{rs} ⊗ T(E_{rs})`, embedded in
    /// `M_{N_A·N_B}` with off-block slots zero.
    pub fn choi(&self) -> CMatrix {
        let images: Vec<CMatrix> = self
            .domain
            .basis()
            .iter()
            .map(|b| self.apply(b).expect("basis").rep())
            .collect();
        choi_from_images(&self.domain, self.codomain.total_dim(), &images)
            .expect("shapes consistent")
    }

    pub fn is_unital(&self, tol: &Tolerance) -> bool {
        let img = self.apply(&self.domain.unit()).expect("unit in domain");
        img.sub(&self.codomain.unit()).expect("same parent").norm() <= tol.eq_rel
    }

    /// CP norm is attained at the unit: contractive ⇔ `‖T(𝟙)‖ ≤ 1 + tol`.
    pub fn is_contractive(&self, tol: &Tolerance) -> bool {
        self.apply(&self.domain.unit())
            .expect("unit in domain")
            .norm()
            <= 1.0 + tol.eq_rel
    }

    pub fn is_markov(&self, tol: &Tolerance) -> bool {
        self.is_unital(tol)
    }

    /// `self ∘ other` (apply `other` first); Kraus family is all products
    /// `c_i^{other} · c_j^{self}` in lexicographic order (`i` major).
    pub fn compose(&self, other: &CPMap) -> Result<CPMap> {
        if other.codomain != self.domain {
            return Err(Error::AlgebraMismatch(
                "composition signature mismatch".into(),
            ));
        }
        let mut kraus = Vec::with_capacity(other.kraus.len() * self.kraus.len());
        for ci in &other.kraus {
            for cj in &self.kraus {
                kraus.push(ci.matmul(cj));
            }
        }
        Ok(CPMap {
            domain: other.domain.clone(),
            codomain: self.codomain.clone(),
            kraus,
        })
    }

    /// `n`-fold composition power (domain must equal codomain).
    pub fn power(&self, n: usize) -> Result<CPMap> {
        if self.domain != self.codomain {
            return Err(Error::AlgebraMismatch(
                "powers need an endo-signature".into(),
            ));
        }
        let mut out = CPMap::identity(&self.domain);
        for _ in 0..n {
            out = self.compose(&out)?;
        }
        Ok(out)
    }

    /// Canonical minimal Kraus family: per block pair `(k,l)` an orthogonal
    /// family spanning the same entries, of total cardinality `rank(choi)`
    /// (strong ℓ²-linear independence blockwise).
    pub fn minimal_kraus(&self, tol: &Tolerance) -> Result<CPMap> {
        let mut kraus = Vec::new();
        for (k, &nk) in self.domain.block_dims().iter().enumerate() {
            let ko = self.domain.block_offset(k);
            for (l, &ml) in self.codomain.block_dims().iter().enumerate() {
                let lo = self.codomain.block_offset(l);
                if self.kraus.is_empty() {
                    continue;
                }
                // Gram of the vectorized (k,l) blocks of the Kraus family.
                let dim = nk * ml;
                let vecs: Vec<CMatrix> = self
                    .kraus
                    .iter()
                    .map(|c| c.submatrix(ko, lo, nk, ml).vec())
                    .collect();
                let mut gram = CMatrix::zeros(dim, dim);
                for v in &vecs {
                    gram = gram.add(&v.matmul(&v.adjoint()));
                }
                let (vals, vecs_on) = eigh(&gram);
                let top = vals.first().copied().unwrap_or(0.0);
                let d = vals
                    .iter()
                    .filter(|&&v| v > tol.rank_rel * top && v > 0.0)
                    .count();
                for m in 0..d {
                    let lam = vals[m].max(0.0).sqrt();
                    let mut op = CMatrix::zeros(self.domain.total_dim(), self.codomain.total_dim());
                    for s in 0..ml {
                        for r in 0..nk {
                            op.set(
                                ko + r,
                                lo + s,
                                vecs_on.get(s * nk + r, m) * C64::new(lam, 0.0),
                            );
                        }
                    }
                    kraus.push(op);
                }
            }
        }
        Ok(CPMap {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            kraus,
        })
    }

    /// Unitalization `T̃(b + λ1̃) = T(b) + λ1̃` on the algebra with one extra
    /// `1×1` block, realized with the extra Kraus rows `√(1̃ − T(𝟙))`.
    pub fn unitalize(&self, tol: &Tolerance) -> Result<CPMap> {
        if self.domain != self.codomain {
            return Err(Error::AlgebraMismatch(
                "unitalization needs an endo-signature".into(),
            ));
        }
        let t_one = self.apply(&self.domain.unit())?;
        let excess = t_one.norm();
        if excess > 1.0 + tol.eq_rel {
            return Err(Error::NotContractive(excess));
        }
        let uni = unitalize_algebra(&self.domain);
        let ext = uni.extended().clone();
        let n = self.domain.total_dim();
        let nt = ext.total_dim();
        let mut kraus: Vec<CMatrix> = self
            .kraus
            .iter()
            .map(|c| {
                let mut e = CMatrix::zeros(nt, nt);
                for i in 0..n {
                    for j in 0..n {
                        e.set(i, j, c.get(i, j));
                    }
                }
                e
            })
            .collect();
        // 1̃ − T(𝟙) in the extended algebra, then its PSD square root.
        let defect = uni.extended().unit().sub(&uni.embed(&t_one)?)?;
        let s = psd_sqrt(&defect.rep());
        for j in 0..nt {
            let mut row_norm = 0.0;
            for c in 0..nt {
                row_norm += s.get(j, c).norm_sqr();
            }
            if row_norm.sqrt() <= tol.rank_rel {
                continue;
            }
            let mut op = CMatrix::zeros(nt, nt);
            for c in 0..nt {
                op.set(n, c, s.get(j, c));
            }
            kraus.push(op);
        }
        CPMap::new(self.domain_unitalized(), ext, kraus, tol)
    }

    fn domain_unitalized(&self) -> BlockAlgebra {
        unitalize_algebra(&self.domain).extended().clone()
    }

    /// GNS construction `(E, ξ)` with `T(a) = ⟨ξ, aξ⟩` and `E` generated by
    /// `ξ`; multiplicity dimensions equal the blockwise Choi ranks.
    pub fn gns(&self, tol: &Tolerance) -> Result<GNSResult> {
        if !self.domain.basis().is_empty() && !self.is_cp(tol).0 {
            let (_, min) = self.is_cp(tol);
            return Err(Error::NotCp(min));
        }
        let kk = self.domain.num_blocks();
        let ll = self.codomain.num_blocks();
        let mut mult = vec![vec![0usize; ll]; kk];
        let mut comps: Vec<Vec<Vec<CMatrix>>> = Vec::with_capacity(kk);
        for (k, &nk) in self.domain.block_dims().iter().enumerate() {
            let ko = self.domain.block_offset(k);
            let mut row = Vec::with_capacity(ll);
            for (l, &ml) in self.codomain.block_dims().iter().enumerate() {
                let lo = self.codomain.block_offset(l);
                let dim = nk * ml;
                let mut gram = CMatrix::zeros(dim, dim);
                for c in &self.kraus {
                    let v = c.submatrix(ko, lo, nk, ml).vec();
                    gram = gram.add(&v.matmul(&v.adjoint()));
                }
                let (vals, vecs) = eigh(&gram);
                let top = vals.first().copied().unwrap_or(0.0);
                let d = vals
                    .iter()
                    .filter(|&&v| v > tol.rank_rel * top && v > 0.0)
                    .count();
                mult[k][l] = d;
                let mut slot = Vec::with_capacity(d);
                for m in 0..d {
                    let lam = vals[m].max(0.0).sqrt();
                    let mut comp = CMatrix::zeros(nk, ml);
                    for s in 0..ml {
                        for r in 0..nk {
                            comp.set(r, s, vecs.get(s * nk + r, m) * C64::new(lam, 0.0));
                        }
                    }
                    slot.push(comp);
                }
                row.push(slot);
            }
            comps.push(row);
        }
        let corr = Correspondence::new(self.domain.clone(), self.codomain.clone(), mult)?;
        let mut cyclic = corr.zero_vector();
        for k in 0..kk {
            for l in 0..ll {
                for (m, c) in comps[k][l].iter().enumerate() {
                    cyclic.set_comp(k, l, m, c.clone());
                }
            }
        }
        Ok(GNSResult { corr, cyclic })
    }

    /// Complete positivity via the Choi matrix; returns the verdict and the
    /// minimal eigenvalue.
    pub fn is_cp(&self, tol: &Tolerance) -> (bool, f64) {
        is_completely_positive(&self.choi(), tol)
    }

    /// Rank of the Choi matrix, computed blockwise from the small Gram of
    /// the vectorized Kraus blocks (never materializes the Choi matrix).
    pub fn choi_rank(&self, tol: &Tolerance) -> Result<usize> {
        let s = self.kraus.len();
        let mut total = 0;
        for (k, &nk) in self.domain.block_dims().iter().enumerate() {
            let ko = self.domain.block_offset(k);
            for (l, &ml) in self.codomain.block_dims().iter().enumerate() {
                let lo = self.codomain.block_offset(l);
                let mut gram = CMatrix::zeros(s, s);
                for a in 0..s {
                    let ba = self.kraus[a].submatrix(ko, lo, nk, ml);
                    for b in 0..s {
                        let bb = self.kraus[b].submatrix(ko, lo, nk, ml);
                        gram.set(a, b, ba.adjoint().matmul(&bb).trace());
                    }
                }
                total += crate::numkit::numerical_rank(&gram, tol)?;
            }
        }
        Ok(total)
    }

    /// Frobenius distance of the Choi matrices, computed from pairwise
    /// Hilbert–Schmidt inner products of the Kraus families (so it never
    /// materializes the Choi matrices).
    pub fn choi_distance(&self, other: &CPMap) -> Result<f64> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::AlgebraMismatch(
                "maps with different signatures".into(),
            ));
        }
        let hs = |a: &CMatrix, b: &CMatrix| a.adjoint().matmul(b).trace();
        let mut total = 0.0f64;
        for (fam_a, fam_b, sign) in [
            (&self.kraus, &self.kraus, 1.0),
            (&other.kraus, &other.kraus, 1.0),
            (&self.kraus, &other.kraus, -2.0),
        ] {
            let mut acc = 0.0;
            for a in fam_a.iter() {
                for b in fam_b.iter() {
                    acc += hs(a, b).norm_sqr();
                }
            }
            total += sign * acc;
        }
        Ok(total.max(0.0).sqrt())
    }
}

/// The GNS construction of a CP map: a correspondence with a cyclic vector.
pub struct GNSResult {
    pub corr: Correspondence,
    pub cyclic: CorrVector,
}

/// Assemble a Choi matrix from images of the domain's matrix-unit basis
/// (images as raw `N_B×N_B` representation matrices).
pub fn choi_from_images(
    domain: &BlockAlgebra,
    codomain_dim: usize,
    images: &[CMatrix],
) -> Result<CMatrix> {
    let basis = domain.basis();
    if basis.len() != images.len() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} images, got {}",
            basis.len(),
            images.len()
        )));
    }
    let na = domain.total_dim();
    let mut choi = CMatrix::zeros(na * codomain_dim, na * codomain_dim);
    for (b, img) in basis.iter().zip(images) {
        if img.rows() != codomain_dim || img.cols() != codomain_dim {
            return Err(Error::DimensionMismatch("image size mismatch".into()));
        }
        choi = choi.add(&b.rep().kron(img));
    }
    Ok(choi)
}

/// CP iff the (Hermitian part of the) Choi matrix is PSD within tolerance.
pub fn is_completely_positive(choi: &CMatrix, tol: &Tolerance) -> (bool, f64) {
    if choi.rows() == 0 {
        return (true, 0.0);
    }
    let herm = choi.add(&choi.adjoint()).scale(C64::new(0.5, 0.0));
    let (vals, _) = eigh(&herm);
    let min = vals.last().copied().unwrap_or(0.0);
    let scale = vals.first().copied().unwrap_or(0.0).abs().max(1.0);
    (min >= -tol.eq_rel * scale, min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::generated_sub;
    use crate::numkit::numerical_rank;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_cp(rng: &mut ChaCha8Rng, alg: &BlockAlgebra, n_kraus: usize) -> CPMap {
        let tol = Tolerance::default();
        let kraus: Vec<CMatrix> = (0..n_kraus)
            .map(|_| {
                // Block-diagonal Kraus operators always preserve the algebra.
                let blocks: Vec<CMatrix> = alg
                    .block_dims()
                    .iter()
                    .map(|&nk| {
                        CMatrix::from_fn(nk, nk, |_, _| {
                            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                        })
                    })
                    .collect();
                CMatrix::block_diag(&blocks.iter().collect::<Vec<_>>())
            })
            .collect();
        CPMap::new(alg.clone(), alg.clone(), kraus, &tol).unwrap()
    }

    pub(crate) fn random_contractive_cp(
        rng: &mut ChaCha8Rng,
        alg: &BlockAlgebra,
        n_kraus: usize,
    ) -> CPMap {
        let tol = Tolerance::default();
        let t = random_cp(rng, alg, n_kraus);
        let norm = t.apply(&alg.unit()).unwrap().norm();
        let scale = C64::new(1.0 / (norm.max(1e-6)).sqrt(), 0.0);
        let kraus = t.kraus().iter().map(|c| c.scale(scale)).collect();
        CPMap::new(alg.clone(), alg.clone(), kraus, &tol).unwrap()
    }

    #[test]
    fn transpose_is_not_cp() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        // Images of E_rs under the transpose map: E_sr.
        let images: Vec<CMatrix> = m2.basis().iter().map(|b| b.rep().transpose()).collect();
        let choi = choi_from_images(&m2, 2, &images).unwrap();
        let (cp, min) = is_completely_positive(&choi, &tol);
        assert!(!cp);
        assert!(
            (min + 1.0).abs() < 1e-10,
            "swap matrix has min eigenvalue −1, got {min}"
        );
    }

    #[test]
    fn single_kraus_is_cp_and_identity_choi_rank_one() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_cp(&mut rng, &m2, 1);
        assert!(t.is_cp(&tol).0);
        let id = CPMap::identity(&m2);
        assert!(id.is_cp(&tol).0);
        assert_eq!(numerical_rank(&id.choi(), &tol).unwrap(), 1);
        assert!(id.is_markov(&tol));
    }

    #[test]
    fn compose_with_identity_and_associativity() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = random_cp(&mut rng, &m2, 2);
        let s = random_cp(&mut rng, &m2, 2);
        let r = random_cp(&mut rng, &m2, 1);
        let id = CPMap::identity(&m2);
        assert!(t.compose(&id).unwrap().action_distance(&t).unwrap() < 1e-10);
        assert!(id.compose(&t).unwrap().action_distance(&t).unwrap() < 1e-10);
        let a = t.compose(&s).unwrap().compose(&r).unwrap();
        let b = t.compose(&s.compose(&r).unwrap()).unwrap();
        assert!(a.action_distance(&b).unwrap() < 1e-9);
        // power(m)∘power(n) = power(m+n)
        let p = t.power(2).unwrap().compose(&t.power(3).unwrap()).unwrap();
        assert!(p.action_distance(&t.power(5).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn minimal_kraus_collapses_duplicates() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        // Real positive leading entry keeps the canonical phase trivial.
        let c = CMatrix::from_real(&[&[0.9, 0.2], &[0.1, -0.4]]);
        let t = CPMap::new(m2.clone(), m2.clone(), vec![c.clone(), c.clone()], &tol).unwrap();
        let min = t.minimal_kraus(&tol).unwrap();
        assert_eq!(min.kraus().len(), 1);
        let expect = c.scale(C64::new(2f64.sqrt(), 0.0));
        assert!(min.kraus()[0].sub(&expect).frobenius_norm() < 1e-10);
        assert!(min.action_distance(&t).unwrap() < 1e-10);
        // Identity on M_n stays a single (unitary multiple of 𝟙) operator.
        let id = CPMap::identity(&m2);
        assert_eq!(id.minimal_kraus(&tol).unwrap().kraus().len(), 1);
    }

    #[test]
    fn minimal_kraus_count_equals_choi_rank() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for alg in [
            BlockAlgebra::full(2),
            BlockAlgebra::full(3),
            BlockAlgebra::diagonal(3),
        ] {
            for n_kraus in 1..=3 {
                let t = random_cp(&mut rng, &alg, n_kraus);
                let rank = numerical_rank(&t.choi(), &tol).unwrap();
                let min = t.minimal_kraus(&tol).unwrap();
                assert_eq!(min.kraus().len(), rank);
                assert!(min.action_distance(&t).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn unitalize_scalar_maps_match_displayed_matrices() {
        let tol = Tolerance::default();
        let c1 = BlockAlgebra::diagonal(1);
        // Zero map on C → [[0,1],[0,1]].
        let zero = CPMap::zero(&c1, &c1);
        let zt = zero.unitalize(&tol).unwrap();
        let r = zt.action_matrix_diagonal().unwrap();
        let expect = CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 1.0]]);
        assert!(r.sub(&expect).frobenius_norm() < 1e-12);
        // T(z) = (1−b)z → [[1−b, b],[0,1]].
        let b = 0.3f64;
        let scalar = c1.unit().scale(C64::new((1.0 - b).sqrt(), 0.0));
        let t = CPMap::elementary(&scalar);
        let tt = t.unitalize(&tol).unwrap();
        let r = tt.action_matrix_diagonal().unwrap();
        let expect = CMatrix::from_real(&[&[1.0 - b, b], &[0.0, 1.0]]);
        assert!(r.sub(&expect).frobenius_norm() < 1e-12);
        assert!(tt.is_markov(&tol));
    }

    #[test]
    fn unitalize_markov_appends_identity_block() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // A Markov map: unitary conjugation.
        let g = CMatrix::from_fn(2, 2, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let (u, _, _) = crate::numkit::svd(&g);
        let t = CPMap::new(m2.clone(), m2.clone(), vec![u], &tol).unwrap();
        assert!(t.is_markov(&tol));
        let tt = t.unitalize(&tol).unwrap();
        assert!(tt.is_markov(&tol));
        // On the embedded corner it acts as T; on the new block as identity.
        let uni = unitalize_algebra(&m2);
        for b in m2.basis() {
            let lhs = tt.apply(&uni.embed(&b).unwrap()).unwrap();
            let rhs = uni.embed(&t.apply(&b).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().norm() < 1e-10);
        }
        let d = uni.new_unit_defect();
        assert!(tt.apply(&d).unwrap().sub(&d).unwrap().norm() < 1e-10);
    }

    #[test]
    fn unitalize_commutes_with_composition() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for alg in [BlockAlgebra::full(2), BlockAlgebra::diagonal(3)] {
            for _ in 0..10 {
                let t = random_contractive_cp(&mut rng, &alg, 2);
                let s = random_contractive_cp(&mut rng, &alg, 1);
                let st = s.compose(&t).unwrap();
                let lhs = st.unitalize(&tol).unwrap();
                let rhs = s
                    .unitalize(&tol)
                    .unwrap()
                    .compose(&t.unitalize(&tol).unwrap())
                    .unwrap();
                assert!(lhs.action_distance(&rhs).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn gns_round_trip_and_cyclicity() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for alg in [
            BlockAlgebra::full(2),
            BlockAlgebra::full(3),
            BlockAlgebra::diagonal(3),
        ] {
            for n_kraus in 1..=2 {
                let t = random_cp(&mut rng, &alg, n_kraus);
                let gns = t.gns(&tol).unwrap();
                for b in alg.basis() {
                    let val = gns.cyclic.inner(&gns.cyclic.left_mul(&b).unwrap()).unwrap();
                    let expect = t.apply(&b).unwrap();
                    assert!(val.sub(&expect).unwrap().norm() < 1e-10);
                }
                // ξ generates the whole correspondence.
                let sub = generated_sub(&[&gns.cyclic], &tol).unwrap();
                assert_eq!(sub.corr.mult(), gns.corr.mult());
            }
        }
    }

    #[test]
    fn gns_of_identity_on_m2_has_unit_multiplicity() {
        let tol = Tolerance::default();
        let m2 = BlockAlgebra::full(2);
        let gns = CPMap::identity(&m2).gns(&tol).unwrap();
        assert_eq!(gns.corr.mult(), &vec![vec![1]]);
        // ξ is a unitary multiple of 𝟙 here: ⟨ξ,ξ⟩ = 𝟙.
        let ip = gns.cyclic.inner(&gns.cyclic).unwrap();
        assert!(ip.sub(&m2.unit()).unwrap().norm() < 1e-10);
    }

    #[test]
    fn gns_between_different_algebras() {
        let tol = Tolerance::default();
        // T: M₂ → C² with Kraus {e₁₁, e₂₂}: T(a) = diag(a₁₁, a₂₂).
        let m2 = BlockAlgebra::full(2);
        let c2 = BlockAlgebra::diagonal(2);
        let kraus = vec![
            CMatrix::from_real(&[&[1.0, 0.0], &[0.0, 0.0]]),
            CMatrix::from_real(&[&[0.0, 0.0], &[0.0, 1.0]]),
        ];
        let t = CPMap::new(m2.clone(), c2.clone(), kraus, &tol).unwrap();
        let gns = t.gns(&tol).unwrap();
        assert_eq!(gns.corr.mult(), &vec![vec![1, 1]]);
        for b in m2.basis() {
            let got = gns.cyclic.inner(&gns.cyclic.left_mul(&b).unwrap()).unwrap();
            assert!(got.sub(&t.apply(&b).unwrap()).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn gns_multiplicity_of_two_kraus_map_on_m3() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m3 = BlockAlgebra::full(3);
        let t = random_cp(&mut rng, &m3, 2);
        let gns = t.gns(&tol).unwrap();
        assert_eq!(gns.corr.mult(), &vec![vec![2]]);
    }
}
