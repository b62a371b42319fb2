//! Truncated sub/super/product systems over `N0^d`: axiom validation, units,
//! GNS-subproduct systems of commuting CP tuples, flip-built product systems,
//! exchange-condition embeddability, unit-spanned subsystems, and the
//! product-subsystem solver.
//!
//! All structure maps with `m+n` inside the componentwise grid cap are stored
//! explicitly; out-of-cap maps are absent, never approximated, and the
//! validation report marks boundary identities as unchecked.
//!
//! A single flip on `C²` generates a product system over `N0²`:
//!
//! ```
//! use cpdil::algebra::BlockAlgebra;
//! use cpdil::corr::{tensor, BilinearMap, Correspondence};
//! use cpdil::numkit::{CMatrix, Tolerance, C64};
//! use cpdil::perm::FlipFamily;
//! use cpdil::systems::{product_from_flips, validate, FlipData, GridCap};
//! use std::collections::BTreeMap;
//!
//! let tol = Tolerance::default();
//! let c = BlockAlgebra::diagonal(1);
//! let e = Correspondence::new(c.clone(), c, vec![vec![2]])?;
//! let mut swap = CMatrix::zeros(4, 4);
//! for a in 0..2 {
//!     for b in 0..2 {
//!         swap.set(b * 2 + a, a * 2 + b, C64::new(1.0, 0.0));
//!     }
//! }
//! let flip = BilinearMap::new(tensor(&e, &e)?, tensor(&e, &e)?, vec![vec![swap]])?;
//! let family = FlipFamily::new(vec![e.clone(), e], BTreeMap::from([((1, 2), flip)]))?;
//! let sys = product_from_flips(
//!     &FlipData { family, vectors: None },
//!     &GridCap::new(vec![2, 2])?,
//!     &tol,
//! )?;
//! assert!(validate(&sys, &tol).passed());
//! assert_eq!(sys.member(&[1, 1]).mult(), &vec![vec![4]]);
//! # Ok::<(), cpdil::Error>(())
//! ```

use crate::algebra::BlockAlgebra;
use crate::corr::{
    generated_sub, multi_embed, multi_tensor, regroup, tensor, tensor_maps, tensor_vectors,
    BilinearMap, CorrVector, Correspondence,
};
use crate::cpmap::CPMap;
use crate::numkit::{column_span_basis, column_subspace_sum, CMatrix, Tolerance, C64};
use crate::perm::{pi_f, FlipFamily, IndexFunction};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// A multi-index in `N0^d`.
pub type MultiIndex = Vec<usize>;

/// Componentwise truncation grid `{n : 0 ≤ n ≤ cap}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCap {
    cap: Vec<usize>,
}

impl GridCap {
    pub fn new(cap: Vec<usize>) -> Result<Self> {
        if cap.is_empty() {
            return Err(Error::InvalidInput(
                "grid needs at least one parameter".into(),
            ));
        }
        Ok(GridCap { cap })
    }

    pub fn d(&self) -> usize {
        self.cap.len()
    }

    pub fn cap(&self) -> &[usize] {
        &self.cap
    }

    pub fn contains(&self, n: &[usize]) -> bool {
        n.len() == self.cap.len() && n.iter().zip(&self.cap).all(|(&a, &b)| a <= b)
    }

    /// All grid indices in graded-lexicographic order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        let mut out = vec![vec![0; self.d()]];
        for k in 0..self.d() {
            let mut next = Vec::new();
            for base in &out {
                for v in 0..=self.cap[k] {
                    let mut n = base.clone();
                    n[k] = v;
                    next.push(n);
                }
            }
            out = next;
        }
        out.sort_by_key(|n| (n.iter().sum::<usize>(), n.clone()));
        out
    }

    /// All pairs `(m,n)` with `m+n` in the grid.
    pub fn pairs(&self) -> Vec<(MultiIndex, MultiIndex)> {
        let mut out = Vec::new();
        for m in self.indices() {
            for n in self.indices() {
                let sum = add_idx(&m, &n);
                if self.contains(&sum) {
                    out.push((m.clone(), n));
                }
            }
        }
        out
    }

    /// All triples `(m,n,r)` with `m+n+r` in the grid.
    pub fn triples(&self) -> Vec<(MultiIndex, MultiIndex, MultiIndex)> {
        let mut out = Vec::new();
        for m in self.indices() {
            for n in self.indices() {
                let mn = add_idx(&m, &n);
                if !self.contains(&mn) {
                    continue;
                }
                for r in self.indices() {
                    let sum = add_idx(&mn, &r);
                    if self.contains(&sum) {
                        out.push((m.clone(), n.clone(), r));
                    }
                }
            }
        }
        out
    }
}

pub fn add_idx(a: &[usize], b: &[usize]) -> MultiIndex {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn is_zero_idx(n: &[usize]) -> bool {
    n.iter().all(|&v| v == 0)
}

pub fn unit_idx(d: usize, i: usize) -> MultiIndex {
    let mut n = vec![0; d];
    n[i] = 1;
    n
}

/// All ordered tuples of nonzero indices summing to `n` (the set `J_n`).
pub fn compositions(n: &[usize]) -> Vec<Vec<MultiIndex>> {
    fn nonzero_leq(n: &[usize]) -> Vec<MultiIndex> {
        let mut out = vec![vec![]];
        for &c in n {
            let mut next = Vec::new();
            for base in &out {
                for v in 0..=c {
                    let mut b = base.clone();
                    b.push(v);
                    next.push(b);
                }
            }
            out = next;
        }
        out.into_iter().filter(|v| !is_zero_idx(v)).collect()
    }
    if is_zero_idx(n) {
        return vec![];
    }
    let mut out = Vec::new();
    for first in nonzero_leq(n) {
        let rest: Vec<usize> = n.iter().zip(&first).map(|(&a, &b)| a - b).collect();
        if is_zero_idx(&rest) {
            out.push(vec![first]);
        } else {
            for tail in compositions(&rest) {
                let mut comp = vec![first.clone()];
                comp.extend(tail);
                out.push(comp);
            }
        }
    }
    out
}

/// System flavour: coproduct isometries, product isometries, or product
/// unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Sub,
    Super,
    Product,
}

/// A family of correspondences over a finite grid in `N0^d` with structure
/// maps (`w_{m,n}: E_{m+n} → E_m⊙E_n` for `Sub`, `v_{m,n}: E_m⊙E_n → E_{m+n}`
/// otherwise) and an optional unit.
pub struct TruncatedSystem {
    pub kind: SystemKind,
    pub cap: GridCap,
    pub algebra: BlockAlgebra,
    pub members: BTreeMap<MultiIndex, Correspondence>,
    pub structure: BTreeMap<(MultiIndex, MultiIndex), BilinearMap>,
    pub unit: Option<BTreeMap<MultiIndex, CorrVector>>,
}

impl TruncatedSystem {
    pub fn member(&self, n: &[usize]) -> &Correspondence {
        &self.members[n]
    }

    pub fn structure_map(&self, m: &[usize], n: &[usize]) -> &BilinearMap {
        &self.structure[&(m.to_vec(), n.to_vec())]
    }

    pub fn unit_at(&self, n: &[usize]) -> Option<&CorrVector> {
        self.unit.as_ref().and_then(|u| u.get(n))
    }
}

/// The canonical identification `B ⊙ E → E` as a bilinear map.
pub fn canonical_left_unit(e: &Correspondence) -> BilinearMap {
    let triv = Correspondence::trivial(e.left());
    let src = tensor(&triv, e).expect("same algebra");
    let blocks = e
        .mult()
        .iter()
        .map(|row| row.iter().map(|&d| CMatrix::identity(d)).collect())
        .collect();
    BilinearMap::new(src, e.clone(), blocks).expect("shapes agree")
}

/// The canonical identification `E ⊙ B → E`.
pub fn canonical_right_unit(e: &Correspondence) -> BilinearMap {
    let triv = Correspondence::trivial(e.right());
    let src = tensor(e, &triv).expect("same algebra");
    let blocks = e
        .mult()
        .iter()
        .map(|row| row.iter().map(|&d| CMatrix::identity(d)).collect())
        .collect();
    BilinearMap::new(src, e.clone(), blocks).expect("shapes agree")
}

/// The associator `(E_m⊙E_n)⊙E_r → E_m⊙(E_n⊙E_r)` (a permutation unitary).
fn associator(
    em: &Correspondence,
    en: &Correspondence,
    er: &Correspondence,
) -> Result<BilinearMap> {
    let left = regroup(&[em, en], &[er])?;
    let right = regroup(&[em], &[en, er])?;
    right.adjoint().compose(&left)
}

/// One line of a validation report.
#[derive(Debug, Clone)]
pub struct ReportLine {
    pub label: String,
    pub residual: Option<f64>,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Unchecked,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub lines: Vec<ReportLine>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&ReportLine> {
        self.lines
            .iter()
            .filter(|l| l.status == CheckStatus::Fail)
            .collect()
    }

    fn push(&mut self, label: String, residual: f64, threshold: f64) {
        let status = if residual <= threshold {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.lines.push(ReportLine {
            label,
            residual: Some(residual),
            status,
        });
    }

    fn push_unchecked(&mut self, label: String) {
        self.lines.push(ReportLine {
            label,
            residual: None,
            status: CheckStatus::Unchecked,
        });
    }
}

/// Check every invariant of the system within tolerance: marginal conditions,
/// (co)associativity on all in-cap triples, isometry/unitarity of the
/// structure maps, and the unit identities when a unit is present.
pub fn validate(sys: &TruncatedSystem, tol: &Tolerance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let thr = tol.eq_rel;
    // Member at 0 is the trivial correspondence.
    let e0 = sys.member(&vec![0; sys.cap.d()]);
    let triv = Correspondence::trivial(&sys.algebra);
    report.push(
        "member(0) = trivial correspondence".into(),
        if e0 == &triv { 0.0 } else { 1.0 },
        0.5,
    );
    // Marginal conditions and structure-map regularity.
    for ((m, n), map) in &sys.structure {
        let label = format!("structure({m:?},{n:?})");
        if is_zero_idx(m) || is_zero_idx(n) {
            let e = sys.member(&add_idx(m, n));
            let canonical = if is_zero_idx(m) {
                canonical_left_unit(e)
            } else {
                canonical_right_unit(e)
            };
            let resid = match sys.kind {
                SystemKind::Sub => map.sub(&canonical.adjoint()).map(|d| d.op_norm()),
                _ => map.sub(&canonical).map(|d| d.op_norm()),
            };
            report.push(
                format!("{label} marginal"),
                resid.unwrap_or(f64::INFINITY),
                thr,
            );
            continue;
        }
        let defect = match sys.kind {
            SystemKind::Sub | SystemKind::Super => map.isometry_defect(),
            SystemKind::Product => map.unitary_defect(),
        };
        report.push(
            format!(
                "{label} {}",
                match sys.kind {
                    SystemKind::Sub => "coproduct isometric",
                    SystemKind::Super => "product isometric",
                    SystemKind::Product => "product unitary",
                }
            ),
            defect,
            thr,
        );
    }
    // (Co)associativity on all in-cap triples.
    for (m, n, r) in sys.cap.triples() {
        if is_zero_idx(&m) || is_zero_idx(&n) || is_zero_idx(&r) {
            continue;
        }
        let label = format!("assoc({m:?},{n:?},{r:?})");
        let em = sys.member(&m);
        let en = sys.member(&n);
        let er = sys.member(&r);
        let assoc = match associator(em, en, er) {
            Ok(a) => a,
            Err(_) => {
                report.push_unchecked(label);
                continue;
            }
        };
        let resid = (|| -> Result<f64> {
            match sys.kind {
                SystemKind::Super | SystemKind::Product => {
                    // v_{m+n,r}(v_{m,n}⊙id) = v_{m,n+r}(id⊙v_{n,r}) ∘ assoc.
                    let a = sys
                        .structure_map(&add_idx(&m, &n), &r)
                        .compose(&tensor_maps(
                            sys.structure_map(&m, &n),
                            &BilinearMap::identity(er),
                        )?)?;
                    let b = sys
                        .structure_map(&m, &add_idx(&n, &r))
                        .compose(&tensor_maps(
                            &BilinearMap::identity(em),
                            sys.structure_map(&n, &r),
                        )?)?;
                    Ok(a.sub(&b.compose(&assoc)?)?.op_norm())
                }
                SystemKind::Sub => {
                    // (w_{m,n}⊙id) w_{m+n,r} = assoc⁻¹ (id⊙w_{n,r}) w_{m,n+r}.
                    let a = tensor_maps(sys.structure_map(&m, &n), &BilinearMap::identity(er))?
                        .compose(sys.structure_map(&add_idx(&m, &n), &r))?;
                    let b = tensor_maps(&BilinearMap::identity(em), sys.structure_map(&n, &r))?
                        .compose(sys.structure_map(&m, &add_idx(&n, &r)))?;
                    Ok(a.sub(&assoc.adjoint().compose(&b)?)?.op_norm())
                }
            }
        })()
        .unwrap_or(f64::INFINITY);
        report.push(label, resid, thr);
    }
    // Unit identities.
    if let Some(unit) = &sys.unit {
        let xi0 = &unit[&vec![0; sys.cap.d()]];
        let one = Correspondence::unit_vector(&sys.algebra);
        report.push(
            "unit(0) = 𝟙".into(),
            xi0.sub(&one)
                .map(|d| d.frobenius_norm())
                .unwrap_or(f64::INFINITY),
            thr,
        );
        for ((m, n), map) in &sys.structure {
            let (xm, xn, xmn) = (&unit[m], &unit[n], &unit[&add_idx(m, n)]);
            let simple = match tensor_vectors(xm, xn) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let resid = match sys.kind {
                SystemKind::Sub => map
                    .apply(xmn)
                    .and_then(|v| v.sub(&simple))
                    .map(|d| d.frobenius_norm()),
                _ => map
                    .apply(&simple)
                    .and_then(|v| v.sub(xmn))
                    .map(|d| d.frobenius_norm()),
            };
            report.push(
                format!("unit({m:?},{n:?})"),
                resid.unwrap_or(f64::INFINITY),
                thr,
            );
        }
    }
    // Boundary identities are out of cap — record them as unchecked.
    for i in 0..sys.cap.d() {
        let mut beyond = vec![0; sys.cap.d()];
        beyond[i] = sys.cap.cap()[i] + 1;
        report.push_unchecked(format!("identities at index {beyond:?} (beyond cap)"));
    }
    report
}

// ---------------------------------------------------------------------------
// GNS-subproduct system of a commuting CP tuple
// ---------------------------------------------------------------------------

/// The GNS-subproduct system of commuting contractive CP maps `T_1..T_d` at
/// grid cap `cap`: members are the GNS correspondences of
/// `T_n = T_d^{n_d}∘…∘T_1^{n_1}`, coproducts send `ξ_{m+n} ↦ ξ_m⊙ξ_n`.
pub fn gns_system(ts: &[CPMap], cap: &GridCap, tol: &Tolerance) -> Result<TruncatedSystem> {
    if ts.is_empty() || ts.len() != cap.d() {
        return Err(Error::DimensionMismatch(
            "need one CP map per grid dimension".into(),
        ));
    }
    let alg = ts[0].domain().clone();
    for t in ts {
        if t.domain() != &alg || t.codomain() != &alg {
            return Err(Error::AlgebraMismatch(
                "all maps must act on one algebra".into(),
            ));
        }
        if !t.is_contractive(tol) {
            return Err(Error::NotContractive(t.apply(&alg.unit())?.norm()));
        }
    }
    for i in 0..ts.len() {
        for j in (i + 1)..ts.len() {
            let ab = ts[i].compose(&ts[j])?;
            let ba = ts[j].compose(&ts[i])?;
            let dist = ab.action_distance(&ba)?;
            if dist > tol.eq_rel * ab.action_scale().max(1.0) {
                return Err(Error::NotCommuting(dist));
            }
        }
    }
    // Composite maps on the grid, reduced to canonical Kraus families.
    let mut maps: BTreeMap<MultiIndex, CPMap> = BTreeMap::new();
    for n in cap.indices() {
        let t = if is_zero_idx(&n) {
            CPMap::identity(&alg)
        } else {
            let i = n.iter().position(|&v| v > 0).unwrap();
            let mut prev = n.clone();
            prev[i] -= 1;
            ts[i].compose(&maps[&prev])?.minimal_kraus(tol)?
        };
        maps.insert(n, t);
    }
    let mut members = BTreeMap::new();
    let mut units = BTreeMap::new();
    for (n, t) in &maps {
        let gns = t.gns(tol)?;
        members.insert(n.clone(), gns.corr);
        units.insert(n.clone(), gns.cyclic);
    }
    // Coproducts.
    let mut structure = BTreeMap::new();
    for (m, n) in cap.pairs() {
        let mn = add_idx(&m, &n);
        let w = if is_zero_idx(&m) {
            canonical_left_unit(&members[&mn]).adjoint()
        } else if is_zero_idx(&n) {
            canonical_right_unit(&members[&mn]).adjoint()
        } else {
            let target_vec = tensor_vectors(&units[&m], &units[&n])?;
            let sub = generated_sub(&[&target_vec], tol)?;
            if sub.corr.mult() != members[&mn].mult() {
                return Err(Error::InvalidInput(format!(
                    "GNS coproduct at ({m:?},{n:?}) has mismatched multiplicities"
                )));
            }
            let y_in = sub.inclusion.adjoint().apply(&target_vec)?;
            let dec = crate::corr::iso_with_constraints(
                &members[&mn],
                &sub.corr,
                &[&units[&mn]],
                &[&y_in],
                tol,
            )?;
            let u = dec.witness.ok_or_else(|| {
                Error::InvalidInput(format!("GNS coproduct at ({m:?},{n:?}) not isometric"))
            })?;
            sub.inclusion.compose(&u)?
        };
        structure.insert((m, n), w);
    }
    Ok(TruncatedSystem {
        kind: SystemKind::Sub,
        cap: cap.clone(),
        algebra: alg,
        members,
        structure,
        unit: Some(units),
    })
}

// ---------------------------------------------------------------------------
// Flip data, exchange conditions, flip-built systems
// ---------------------------------------------------------------------------

/// Correspondences `E_1..E_d` with flips `𝔉_{j,i}` and optional distinguished
/// vectors.
pub struct FlipData {
    pub family: FlipFamily,
    pub vectors: Option<Vec<CorrVector>>,
}

impl FlipData {
    pub fn d(&self) -> usize {
        self.family.space_count()
    }
}

/// Verdict of the detailed-exchange-condition check.
#[derive(Debug, Clone)]
pub struct ExchangeDecision {
    pub ok: bool,
    /// `(k, j, i, residual)` of the first violated triple.
    pub witness: Option<(usize, usize, usize, f64)>,
}

/// YES iff all triples `k<j<i` satisfy the detailed exchange conditions
/// within tolerance (vacuous for `d ≤ 2`).
pub fn check_exchange(fd: &FlipData, tol: &Tolerance) -> Result<ExchangeDecision> {
    if fd.d() <= 2 {
        return Ok(ExchangeDecision {
            ok: true,
            witness: None,
        });
    }
    match fd.family.first_exchange_violation(tol)? {
        None => Ok(ExchangeDecision {
            ok: true,
            witness: None,
        }),
        Some((k, j, i, res)) => Ok(ExchangeDecision {
            ok: false,
            witness: Some((k, j, i, res)),
        }),
    }
}

/// The truncated subproduct system of flips over one correspondence `E`:
/// members `F_0 = B`, `F_{e_i} = E`, `F_{e_i+e_j} = E⊙E`, zero elsewhere.
/// Coproducts target the `(i,j)`-ordered tensor: identity for `i ≤ j`,
/// `𝔉_{j,i}*` for `i > j`.
pub fn truncated_from_flips(fd: &FlipData, _tol: &Tolerance) -> Result<TruncatedSystem> {
    let d = fd.d();
    let e = fd.family.space(1).clone();
    for i in 1..=d {
        if fd.family.space(i) != &e {
            return Err(Error::InvalidInput(
                "truncated flip systems need all marginal correspondences equal".into(),
            ));
        }
    }
    let alg = e.left().clone();
    let cap = GridCap::new(vec![2; d])?;
    let ee = tensor(&e, &e)?;
    let zero = Correspondence::zero(alg.clone(), alg.clone());
    let mut members = BTreeMap::new();
    for n in cap.indices() {
        let weight: usize = n.iter().sum();
        let member = match weight {
            0 => Correspondence::trivial(&alg),
            1 => e.clone(),
            2 if n.iter().filter(|&&v| v > 0).count() <= 2 => ee.clone(),
            _ => zero.clone(),
        };
        members.insert(n, member);
    }
    let mut structure = BTreeMap::new();
    for (m, n) in cap.pairs() {
        let mn = add_idx(&m, &n);
        let w = if is_zero_idx(&m) {
            canonical_left_unit(&members[&mn]).adjoint()
        } else if is_zero_idx(&n) {
            canonical_right_unit(&members[&mn]).adjoint()
        } else if members[&mn].is_zero() || members[&m].is_zero() || members[&n].is_zero() {
            let target = tensor(&members[&m], &members[&n])?;
            BilinearMap::zero(&members[&mn], &target)
        } else {
            // m = e_i, n = e_j with member E⊙E stored in sorted order.
            let i = m.iter().position(|&v| v > 0).unwrap() + 1;
            let j = n.iter().position(|&v| v > 0).unwrap() + 1;
            if i <= j {
                BilinearMap::identity(&ee)
            } else {
                // From the sorted word E_j⊙E_i back to E_i⊙E_j.
                fd.family.flip(j, i).adjoint()
            }
        };
        structure.insert((m, n), w);
    }
    Ok(TruncatedSystem {
        kind: SystemKind::Sub,
        cap,
        algebra: alg,
        members,
        structure,
        unit: None,
    })
}

/// Gauge transformation `𝔉 ↦ (a_j⊙a_i) 𝔉 (a_i*⊙a_j*)` of a flip family.
pub fn gauge_transform_flips(fd: &FlipData, gauges: &[BilinearMap]) -> Result<FlipData> {
    let d = fd.d();
    if gauges.len() != d {
        return Err(Error::DimensionMismatch(
            "need one gauge per marginal".into(),
        ));
    }
    let mut flips = BTreeMap::new();
    for j in 1..=d {
        for i in (j + 1)..=d {
            let f = fd.family.flip(j, i);
            let left = tensor_maps(&gauges[j - 1], &gauges[i - 1])?;
            let right = tensor_maps(&gauges[i - 1].adjoint(), &gauges[j - 1].adjoint())?;
            flips.insert((j, i), left.compose(f)?.compose(&right)?);
        }
    }
    let spaces: Vec<Correspondence> = (1..=d).map(|i| gauges[i - 1].target().clone()).collect();
    Ok(FlipData {
        family: FlipFamily::new(spaces, flips)?,
        vectors: None,
    })
}

/// Isomorphism-classifier residual of Thm-style flip systems: candidates
/// `a_i` define an isomorphism `F(𝔉) → F(𝔉')` iff
/// `(a_j⊙a_i)𝔉_{j,i} = 𝔉'_{j,i}(a_i⊙a_j)` for all `j<i`.
pub fn flip_isomorphism_residual(
    fd: &FlipData,
    fd2: &FlipData,
    candidates: &[BilinearMap],
) -> Result<f64> {
    let d = fd.d();
    let mut worst = 0.0f64;
    for j in 1..=d {
        for i in (j + 1)..=d {
            let lhs = tensor_maps(&candidates[j - 1], &candidates[i - 1])?
                .compose(fd.family.flip(j, i))?;
            let rhs = fd2
                .family
                .flip(j, i)
                .compose(&tensor_maps(&candidates[i - 1], &candidates[j - 1])?)?;
            worst = worst.max(lhs.sub(&rhs)?.op_norm());
        }
    }
    Ok(worst)
}

/// The sorted generator pattern of a grid index: `1^{n_1} 2^{n_2} … d^{n_d}`.
fn pattern_of(n: &[usize]) -> Vec<usize> {
    let mut pat = Vec::new();
    for (i, &c) in n.iter().enumerate() {
        for _ in 0..c {
            pat.push(i + 1);
        }
    }
    pat
}

/// The product system over `N0^d` built from flips (unique given the
/// exchange conditions): members `E_n = E_1^{⊙n_1}⊙…⊙E_d^{⊙n_d}` and
/// products `u_{m,n} = π_f` for the concatenated pattern.
pub fn product_from_flips(
    fd: &FlipData,
    cap: &GridCap,
    tol: &Tolerance,
) -> Result<TruncatedSystem> {
    let d = fd.d();
    if cap.d() != d {
        return Err(Error::DimensionMismatch(
            "cap dimension must match the flip count".into(),
        ));
    }
    let exchange = check_exchange(fd, tol)?;
    if let Some((k, j, i, res)) = exchange.witness {
        return Err(Error::ExchangeConditionViolated(k, j, i, res));
    }
    if let Some(vs) = &fd.vectors {
        if vs.len() != d {
            return Err(Error::DimensionMismatch(
                "need one distinguished vector per marginal".into(),
            ));
        }
        for j in 1..=d {
            for i in (j + 1)..=d {
                let lhs = fd
                    .family
                    .flip(j, i)
                    .apply(&tensor_vectors(&vs[i - 1], &vs[j - 1])?)?;
                let rhs = tensor_vectors(&vs[j - 1], &vs[i - 1])?;
                let resid = lhs.sub(&rhs)?.frobenius_norm();
                if resid > tol.eq_rel * rhs.frobenius_norm().max(1.0) {
                    return Err(Error::UnitConstraintViolated(resid));
                }
            }
        }
    }
    let alg = fd.family.space(1).left().clone();
    let mut members = BTreeMap::new();
    for n in cap.indices() {
        let member = if is_zero_idx(&n) {
            Correspondence::trivial(&alg)
        } else {
            let pat = pattern_of(&n);
            let factors: Vec<&Correspondence> = pat.iter().map(|&v| fd.family.space(v)).collect();
            multi_tensor(&factors)?.0
        };
        members.insert(n, member);
    }
    let mut structure = BTreeMap::new();
    for (m, n) in cap.pairs() {
        let u = if is_zero_idx(&m) {
            canonical_left_unit(&members[&add_idx(&m, &n)])
        } else if is_zero_idx(&n) {
            canonical_right_unit(&members[&add_idx(&m, &n)])
        } else {
            let pat_m = pattern_of(&m);
            let pat_n = pattern_of(&n);
            let mut word = pat_m.clone();
            word.extend_from_slice(&pat_n);
            let f = IndexFunction::new(word, d)?;
            let fac_m: Vec<&Correspondence> = pat_m.iter().map(|&v| fd.family.space(v)).collect();
            let fac_n: Vec<&Correspondence> = pat_n.iter().map(|&v| fd.family.space(v)).collect();
            let rg = regroup(&fac_m, &fac_n)?;
            // The exchange conditions were verified above; π_f is then
            // chain-independent.
            let shuffle = pi_f(&f, &fd.family, false, tol)?;
            shuffle.compose(&rg)?
        };
        structure.insert((m, n), u);
    }
    let unit = match &fd.vectors {
        None => None,
        Some(vs) => {
            let mut units = BTreeMap::new();
            for n in cap.indices() {
                let xi = if is_zero_idx(&n) {
                    Correspondence::unit_vector(&alg)
                } else {
                    let pat = pattern_of(&n);
                    let vecs: Vec<&CorrVector> = pat.iter().map(|&v| &vs[v - 1]).collect();
                    multi_embed(&vecs)?
                };
                units.insert(n, xi);
            }
            Some(units)
        }
    };
    Ok(TruncatedSystem {
        kind: SystemKind::Product,
        cap: cap.clone(),
        algebra: alg,
        members,
        structure,
        unit,
    })
}

// ---------------------------------------------------------------------------
// Spanned superproduct subsystem
// ---------------------------------------------------------------------------

/// Per-block orthonormal bases of a multiplicity subspace of a member.
#[derive(Clone)]
pub struct MemberSubspace {
    pub bases: Vec<Vec<CMatrix>>,
}

impl MemberSubspace {
    fn dims(&self) -> Vec<Vec<usize>> {
        self.bases
            .iter()
            .map(|row| row.iter().map(|b| b.cols()).collect())
            .collect()
    }
}

/// Result of [`spanned_subsystem`].
pub struct SpannedSubsystem {
    pub system: TruncatedSystem,
    /// Isometric inclusions of the spanned members into the original ones.
    pub inclusions: BTreeMap<MultiIndex, BilinearMap>,
    /// `(m, n, image rank, spanned dimension)` for each surjectivity defect.
    pub surjectivity: Vec<(MultiIndex, MultiIndex, usize, usize)>,
    pub proper: bool,
}

/// The superproduct subsystem spanned by the unit of a product system:
/// member at `n` is the span over all compositions of iterated products of
/// the generated subcorrespondences of the unit members.
pub fn spanned_subsystem(sys: &TruncatedSystem, tol: &Tolerance) -> Result<SpannedSubsystem> {
    if sys.kind != SystemKind::Product {
        return Err(Error::InvalidInput(
            "spanned subsystem needs a product system".into(),
        ));
    }
    let unit = sys
        .unit
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spanned subsystem needs a unit".into()))?;
    let kk = sys.algebra.num_blocks();
    // DP over graded indices: spanned(n) = gen(ξ_n) + Σ_{a+b=n} v(span_a ⊙ span_b).
    let mut spans: BTreeMap<MultiIndex, MemberSubspace> = BTreeMap::new();
    for n in sys.cap.indices() {
        let member = sys.member(&n);
        let mut cols: Vec<Vec<Vec<CMatrix>>> = vec![vec![Vec::new(); kk]; kk];
        // Generated subcorrespondence of ξ_n.
        let gen = generated_sub(&[&unit[&n]], tol)?;
        for k in 0..kk {
            for l in 0..kk {
                let b = gen.inclusion.block(k, l);
                if b.cols() > 0 {
                    cols[k][l].push(b.clone());
                }
            }
        }
        // Products of earlier spans.
        for (a, b) in sys.cap.pairs() {
            if add_idx(&a, &b) != n || is_zero_idx(&a) || is_zero_idx(&b) {
                continue;
            }
            let sa = &spans[&a];
            let sb = &spans[&b];
            let inc_a = subspace_inclusion(sys.member(&a), sa)?;
            let inc_b = subspace_inclusion(sys.member(&b), sb)?;
            let tensored = tensor_maps(&inc_a, &inc_b)?;
            let image = sys.structure_map(&a, &b).compose(&tensored)?;
            for k in 0..kk {
                for l in 0..kk {
                    let blk = image.block(k, l);
                    if blk.cols() > 0 {
                        cols[k][l].push(blk.clone());
                    }
                }
            }
        }
        let mut bases = Vec::with_capacity(kk);
        for k in 0..kk {
            let mut row = Vec::with_capacity(kk);
            for l in 0..kk {
                let d = member.mult_at(k, l);
                let stacked = if cols[k][l].is_empty() {
                    CMatrix::zeros(d, 0)
                } else {
                    CMatrix::hstack(&cols[k][l].iter().collect::<Vec<_>>())
                };
                row.push(column_span_basis(&stacked, tol));
            }
            bases.push(row);
        }
        spans.insert(n, MemberSubspace { bases });
    }
    // Assemble the SUPER system with restricted structure maps.
    let mut members = BTreeMap::new();
    let mut inclusions = BTreeMap::new();
    for (n, sp) in &spans {
        let corr = Correspondence::new(sys.algebra.clone(), sys.algebra.clone(), sp.dims())?;
        let incl = BilinearMap::new(corr.clone(), sys.member(n).clone(), sp.bases.clone())?;
        members.insert(n.clone(), corr);
        inclusions.insert(n.clone(), incl);
    }
    let mut structure = BTreeMap::new();
    let mut surjectivity = Vec::new();
    let mut proper = false;
    for (m, n) in sys.cap.pairs() {
        let mn = add_idx(&m, &n);
        let restricted = if is_zero_idx(&m) {
            canonical_left_unit(&members[&mn])
        } else if is_zero_idx(&n) {
            canonical_right_unit(&members[&mn])
        } else {
            let lift = tensor_maps(&inclusions[&m], &inclusions[&n])?;
            let full = sys.structure_map(&m, &n).compose(&lift)?;
            let restricted = inclusions[&mn].adjoint().compose(&full)?;
            // Count the surjectivity defect blockwise.
            let mut rank = 0;
            let mut dim = 0;
            for k in 0..kk {
                for l in 0..kk {
                    rank += crate::numkit::numerical_rank(restricted.block(k, l), tol)?;
                    dim += members[&mn].mult_at(k, l);
                }
            }
            surjectivity.push((m.clone(), n.clone(), rank, dim));
            if rank < dim {
                proper = true;
            }
            restricted
        };
        structure.insert((m.clone(), n.clone()), restricted);
    }
    let mut unit_out = BTreeMap::new();
    for n in sys.cap.indices() {
        unit_out.insert(n.clone(), inclusions[&n].adjoint().apply(&unit[&n])?);
    }
    let system = TruncatedSystem {
        kind: SystemKind::Super,
        cap: sys.cap.clone(),
        algebra: sys.algebra.clone(),
        members,
        structure,
        unit: Some(unit_out),
    };
    Ok(SpannedSubsystem {
        system,
        inclusions,
        surjectivity,
        proper,
    })
}

fn subspace_inclusion(parent: &Correspondence, sp: &MemberSubspace) -> Result<BilinearMap> {
    let corr = Correspondence::new(parent.left().clone(), parent.right().clone(), sp.dims())?;
    BilinearMap::new(corr, parent.clone(), sp.bases.clone())
}

// ---------------------------------------------------------------------------
// Product-subsystem solver
// ---------------------------------------------------------------------------

/// Outcome of the depth-limited product-subsystem solver: the maximal
/// bilinear projection family annihilating the unit and compatible with the
/// structure maps at the supported levels.
pub struct SolverOutcome {
    /// Per generator index `e_i`: the complement projection's blockwise rank.
    pub complement_dims: Vec<Vec<Vec<usize>>>,
    /// Total complement dimension; `0` iff no proper subsystem exists at the
    /// supported depth.
    pub q_dim: usize,
}

/// Forcing state: subspaces of the generator members that any product
/// subsystem containing the unit must contain.
fn force_supports(
    member: &Correspondence,
    vectors: &[CorrVector],
    left_space: &Correspondence,
    right_space: &Correspondence,
    tol: &Tolerance,
) -> Result<(MemberSubspace, MemberSubspace)> {
    // `member` is tensor(left_space, right_space); each vector forces its
    // partial supports into the two factors.
    let kk = member.left().num_blocks();
    let mut left_cols: Vec<Vec<Vec<CMatrix>>> = vec![vec![Vec::new(); kk]; kk];
    let mut right_cols: Vec<Vec<Vec<CMatrix>>> = vec![vec![Vec::new(); kk]; kk];
    for v in vectors {
        for k in 0..kk {
            for l in 0..kk {
                let nk = member.left().block_dims()[k];
                let ml = member.right().block_dims()[l];
                for r in 0..nk {
                    for s in 0..ml {
                        let phi = v.entry_vector(k, l, r, s);
                        // Decompose over middle blocks j.
                        let mut off = 0;
                        for j in 0..kk {
                            let da = left_space.mult_at(k, j);
                            let db = right_space.mult_at(j, l);
                            if da * db > 0 {
                                let mut mat = CMatrix::zeros(da, db);
                                for a in 0..da {
                                    for b in 0..db {
                                        mat.set(a, b, phi[off + a * db + b]);
                                    }
                                }
                                left_cols[k][j].push(mat.clone());
                                right_cols[j][l].push(mat.transpose());
                                off += da * db;
                            }
                        }
                    }
                }
            }
        }
    }
    let assemble = |cols: &Vec<Vec<Vec<CMatrix>>>, space: &Correspondence| -> MemberSubspace {
        let mut bases = Vec::with_capacity(kk);
        for k in 0..kk {
            let mut row = Vec::with_capacity(kk);
            for l in 0..kk {
                let d = space.mult_at(k, l);
                let stacked = if cols[k][l].is_empty() {
                    CMatrix::zeros(d, 0)
                } else {
                    CMatrix::hstack(&cols[k][l].iter().collect::<Vec<_>>())
                };
                row.push(column_span_basis(&stacked, tol));
            }
            bases.push(row);
        }
        MemberSubspace { bases }
    };
    Ok((
        assemble(&left_cols, left_space),
        assemble(&right_cols, right_space),
    ))
}

fn subspace_total_dim(sp: &MemberSubspace) -> usize {
    sp.bases.iter().flatten().map(|b| b.cols()).sum()
}

fn subspace_union(a: &MemberSubspace, b: &MemberSubspace, tol: &Tolerance) -> MemberSubspace {
    let bases = a
        .bases
        .iter()
        .zip(&b.bases)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(x, y)| column_subspace_sum(x, y, tol))
                .collect()
        })
        .collect();
    MemberSubspace { bases }
}

/// Find the largest bilinear projection family annihilating the unit and
/// compatible with the structure maps at the supported depth (levels ≤ 2 for
/// `d = 1`, levels ≤ `(1,1)` for `d = 2`), via iterated kernel/support
/// forcing. `q = 0` iff no proper product subsystem exists at that depth.
pub fn product_subsystem_solver(sys: &TruncatedSystem, tol: &Tolerance) -> Result<SolverOutcome> {
    if sys.kind != SystemKind::Product {
        return Err(Error::InvalidInput("solver needs a product system".into()));
    }
    let unit = sys
        .unit
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("solver needs a unit".into()))?;
    let d = sys.cap.d();
    match d {
        1 => {
            if sys.cap.cap()[0] < 2 {
                return Err(Error::UnsupportedDepth(
                    "need cap ≥ 2 for the level-2 solver".into(),
                ));
            }
            let e1 = sys.member(&vec![1]);
            let mut span = generated_sub(&[&unit[&vec![1]]], tol)?;
            // Force: u*ξ₂ ∈ S⊗S.
            let u = sys.structure_map(&vec![1], &vec![1]);
            let pulled = u.adjoint().apply(&unit[&vec![2]])?;
            loop {
                let current = MemberSubspace {
                    bases: span.inclusion.block_rows(),
                };
                let (ls, rs) = force_supports(u.source(), &[pulled.clone()], e1, e1, tol)?;
                let mut next = subspace_union(&current, &ls, tol);
                next = subspace_union(&next, &rs, tol);
                if subspace_total_dim(&next) == subspace_total_dim(&current) {
                    break;
                }
                span = sub_from_subspace(e1, &next)?;
            }
            let comp = crate::corr::complement(
                &crate::corr::SubCorrespondence {
                    corr: span.corr.clone(),
                    inclusion: span.inclusion.clone(),
                },
                tol,
            )?;
            let dims: Vec<Vec<usize>> = comp.corr.mult().clone();
            let q_dim = dims.iter().flatten().sum();
            Ok(SolverOutcome {
                complement_dims: vec![dims],
                q_dim,
            })
        }
        2 => {
            if sys.cap.cap()[0] < 1 || sys.cap.cap()[1] < 1 {
                return Err(Error::UnsupportedDepth("need cap ≥ (1,1)".into()));
            }
            let (e1v, e2v) = (vec![1, 0], vec![0, 1]);
            let e1 = sys.member(&e1v);
            let e2 = sys.member(&e2v);
            let mut s1 = generated_sub(&[&unit[&e1v]], tol)?;
            let mut s2 = generated_sub(&[&unit[&e2v]], tol)?;
            let u12 = sys.structure_map(&e1v, &e2v);
            let u21 = sys.structure_map(&e2v, &e1v);
            loop {
                // Current images at level (1,1).
                let inc1 = &s1.inclusion;
                let inc2 = &s2.inclusion;
                let a = u12.compose(&tensor_maps(inc1, inc2)?)?;
                let b = u21.compose(&tensor_maps(inc2, inc1)?)?;
                // T = span(A + B) as vectors in the (1,1)-member.
                let mut t_cols: Vec<CorrVector> = Vec::new();
                for map in [&a, &b] {
                    for v in map_columns(map)? {
                        t_cols.push(v);
                    }
                }
                let t_refs: Vec<&CorrVector> = t_cols.iter().collect();
                // Pull back through both products and force supports.
                let pulled12: Vec<CorrVector> = t_refs
                    .iter()
                    .map(|v| u12.adjoint().apply(v))
                    .collect::<Result<_>>()?;
                let pulled21: Vec<CorrVector> = t_refs
                    .iter()
                    .map(|v| u21.adjoint().apply(v))
                    .collect::<Result<_>>()?;
                let (l12, r12) = force_supports(u12.source(), &pulled12, e1, e2, tol)?;
                let (l21, r21) = force_supports(u21.source(), &pulled21, e2, e1, tol)?;
                let cur1 = MemberSubspace {
                    bases: s1.inclusion.block_rows(),
                };
                let cur2 = MemberSubspace {
                    bases: s2.inclusion.block_rows(),
                };
                let next1 = subspace_union(&subspace_union(&cur1, &l12, tol), &r21, tol);
                let next2 = subspace_union(&subspace_union(&cur2, &r12, tol), &l21, tol);
                let done = subspace_total_dim(&next1) == subspace_total_dim(&cur1)
                    && subspace_total_dim(&next2) == subspace_total_dim(&cur2);
                s1 = sub_from_subspace(e1, &next1)?;
                s2 = sub_from_subspace(e2, &next2)?;
                if done {
                    break;
                }
            }
            let comp1 = crate::corr::complement(&s1, tol)?;
            let comp2 = crate::corr::complement(&s2, tol)?;
            let d1: Vec<Vec<usize>> = comp1.corr.mult().clone();
            let d2: Vec<Vec<usize>> = comp2.corr.mult().clone();
            let q_dim = d1.iter().flatten().sum::<usize>() + d2.iter().flatten().sum::<usize>();
            Ok(SolverOutcome {
                complement_dims: vec![d1, d2],
                q_dim,
            })
        }
        other => Err(Error::UnsupportedDepth(format!(
            "solver supports d ≤ 2, got d = {other}"
        ))),
    }
}

fn sub_from_subspace(
    parent: &Correspondence,
    sp: &MemberSubspace,
) -> Result<crate::corr::SubCorrespondence> {
    let corr = Correspondence::new(parent.left().clone(), parent.right().clone(), sp.dims())?;
    let inclusion = BilinearMap::new(corr.clone(), parent.clone(), sp.bases.clone())?;
    Ok(crate::corr::SubCorrespondence { corr, inclusion })
}

/// The columns of a bilinear map as vectors of its target (images of the
/// source's canonical multiplicity basis, matrix factor at the unit slot).
fn map_columns(map: &BilinearMap) -> Result<Vec<CorrVector>> {
    let mut out = Vec::new();
    let src = map.source();
    for k in 0..src.left().num_blocks() {
        for l in 0..src.right().num_blocks() {
            for m in 0..src.mult_at(k, l) {
                let mut v = map.target().zero_vector();
                for mp in 0..map.target().mult_at(k, l) {
                    let nk = src.left().block_dims()[k];
                    let ml = src.right().block_dims()[l];
                    let coeff = map.block(k, l).get(mp, m);
                    if coeff != C64::new(0.0, 0.0) {
                        // Put the coefficient on every matrix entry basis is
                        // unnecessary: multiplicity data alone matters, so use
                        // the (0,0) entry slot.
                        let mut mat = CMatrix::zeros(nk, ml);
                        mat.set(0, 0, coeff);
                        v.set_comp(k, l, mp, mat);
                    }
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::ONE;

    fn trivial_product_system(alg: &BlockAlgebra, cap: &GridCap) -> TruncatedSystem {
        // E_n = B, products = multiplication (canonical identifications).
        let triv = Correspondence::trivial(alg);
        let mut members = BTreeMap::new();
        for n in cap.indices() {
            members.insert(n, triv.clone());
        }
        let mut structure = BTreeMap::new();
        for (m, n) in cap.pairs() {
            structure.insert((m, n), canonical_left_unit(&triv));
        }
        let mut unit = BTreeMap::new();
        for n in cap.indices() {
            unit.insert(n, Correspondence::unit_vector(alg));
        }
        TruncatedSystem {
            kind: SystemKind::Product,
            cap: cap.clone(),
            algebra: alg.clone(),
            members,
            structure,
            unit: Some(unit),
        }
    }

    #[test]
    fn trivial_product_system_validates() {
        let tol = Tolerance::default();
        let alg = BlockAlgebra::new(vec![2, 1]).unwrap();
        let cap = GridCap::new(vec![2, 2]).unwrap();
        let sys = trivial_product_system(&alg, &cap);
        let report = validate(&sys, &tol);
        assert!(report.passed(), "failures: {:?}", report.failures());
    }

    #[test]
    fn damaged_isometry_reports_residual_three_quarters() {
        let tol = Tolerance::default();
        let alg = BlockAlgebra::diagonal(1);
        let cap = GridCap::new(vec![2]).unwrap();
        let mut sys = trivial_product_system(&alg, &cap);
        sys.kind = SystemKind::Sub;
        // Turn products into coproducts (self-adjoint identifications here),
        // then damage one: w ↦ ½·w.
        let key = (vec![1], vec![1]);
        let damaged = sys.structure[&key].scale(C64::new(0.5, 0.0)).adjoint();
        sys.structure.insert(key.clone(), damaged);
        // Fix all other maps to adjoints for the Sub convention.
        let keys: Vec<_> = sys.structure.keys().cloned().collect();
        for k in keys {
            if k != key {
                let adj = sys.structure[&k].adjoint();
                sys.structure.insert(k, adj);
            }
        }
        let report = validate(&sys, &tol);
        let line = report
            .lines
            .iter()
            .find(|l| l.label.contains("structure([1],[1])"))
            .expect("line exists");
        assert_eq!(line.status, CheckStatus::Fail);
        assert!((line.residual.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn compositions_enumeration_is_complete_and_duplicate_free() {
        let comps = compositions(&[1, 1]);
        // (1,1); (1,0)+(0,1); (0,1)+(1,0).
        assert_eq!(comps.len(), 3);
        let mut seen = std::collections::BTreeSet::new();
        for c in &comps {
            assert!(seen.insert(format!("{c:?}")));
            let mut sum = vec![0, 0];
            for part in c {
                sum = add_idx(&sum, part);
                assert!(!is_zero_idx(part));
            }
            assert_eq!(sum, vec![1, 1]);
        }
        assert_eq!(compositions(&[2]).len(), 2);
        assert_eq!(compositions(&[3]).len(), 4);
    }

    #[test]
    fn grid_pairs_and_triples_stay_in_cap() {
        let cap = GridCap::new(vec![2, 1]).unwrap();
        for (m, n) in cap.pairs() {
            assert!(cap.contains(&add_idx(&m, &n)));
        }
        for (m, n, r) in cap.triples() {
            assert!(cap.contains(&add_idx(&add_idx(&m, &n), &r)));
        }
    }
}
