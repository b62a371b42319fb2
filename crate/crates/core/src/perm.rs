//! Inversion counts, the unique nondecreasing partially-order-preserving
//! permutation `σ_f`, admissible chains of order-improving adjacent
//! transpositions, and the composed amplified-flip operator `π_f`.
//!
//! An index function `f: {1..q} → {1..p}` is the pattern of a tensor word
//! `E_{f(1)} ⊙ … ⊙ E_{f(q)}`; `σ_f` is its stable argsort, and `π_f` carries
//! the word into sorted order by composing flips at descents.
//!
//! ```
//! use cpdil::perm::{inversions, maximal_chain, sigma_f, IndexFunction};
//!
//! let f = IndexFunction::from_values(vec![2, 1, 2, 1])?;
//! assert_eq!(inversions(&f), 3);
//! assert_eq!(sigma_f(&f), vec![2, 4, 1, 3]);
//! let chain = maximal_chain(&f);
//! assert_eq!(chain.len(), 3);
//! assert_eq!(chain.to_permutation(4), sigma_f(&f));
//! # Ok::<(), cpdil::Error>(())
//! ```

use crate::corr::{site_flip, BilinearMap, Correspondence};
use crate::numkit::Tolerance;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// An index function, stored with 1-based values in `1..=p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexFunction {
    values: Vec<usize>,
    p: usize,
}

impl IndexFunction {
    pub fn new(values: Vec<usize>, p: usize) -> Result<Self> {
        if p == 0 || values.iter().any(|&v| v == 0 || v > p) {
            return Err(Error::InvalidInput("index values must lie in 1..=p".into()));
        }
        Ok(IndexFunction { values, p })
    }

    /// Infer `p` as the maximal value.
    pub fn from_values(values: Vec<usize>) -> Result<Self> {
        let p = values.iter().copied().max().unwrap_or(1);
        IndexFunction::new(values, p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn range_size(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }
}

/// `#{(j<i): f(j) > f(i)}`.
pub fn inversions(f: &IndexFunction) -> usize {
    let v = &f.values;
    let mut count = 0;
    for j in 0..v.len() {
        for i in j + 1..v.len() {
            if v[j] > v[i] {
                count += 1;
            }
        }
    }
    count
}

/// The unique permutation with `f∘σ` nondecreasing that preserves the
/// relative order of equal values: the stable argsort of `f`.
/// Returned 1-based: `σ(j) = result[j-1]`.
pub fn sigma_f(f: &IndexFunction) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=f.values.len()).collect();
    idx.sort_by_key(|&j| f.values[j - 1]);
    idx
}

/// A chain of adjacent-transposition positions `κ_1..κ_m` (1-based sites).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranspositionChain {
    pub positions: Vec<usize>,
}

impl TranspositionChain {
    /// The permutation `τ_{κ_1}∘…∘τ_{κ_m}` (1-based one-line form).
    pub fn to_permutation(&self, q: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (1..=q).collect();
        for &k in &self.positions {
            perm.swap(k - 1, k);
        }
        perm
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn descents(values: &[usize]) -> Vec<usize> {
    (1..values.len())
        .filter(|&k| values[k - 1] > values[k])
        .collect()
}

/// One maximal admissible chain (greedy leftmost descent).
pub fn maximal_chain(f: &IndexFunction) -> TranspositionChain {
    let mut values = f.values.clone();
    let mut positions = Vec::new();
    loop {
        let ds = descents(&values);
        match ds.first() {
            None => break,
            Some(&k) => {
                values.swap(k - 1, k);
                positions.push(k);
            }
        }
    }
    TranspositionChain { positions }
}

/// Exhaustive depth-first enumeration of all maximal admissible chains.
/// Errors with `CapExceeded` once more than `cap` chains would be produced.
pub fn all_maximal_chains(f: &IndexFunction, cap: usize) -> Result<Vec<TranspositionChain>> {
    fn rec(
        values: &mut Vec<usize>,
        current: &mut Vec<usize>,
        out: &mut Vec<TranspositionChain>,
        cap: usize,
    ) -> Result<()> {
        let ds = descents(values);
        if ds.is_empty() {
            if out.len() >= cap {
                return Err(Error::CapExceeded(format!(
                    "more than {cap} maximal chains"
                )));
            }
            out.push(TranspositionChain {
                positions: current.clone(),
            });
            return Ok(());
        }
        for k in ds {
            values.swap(k - 1, k);
            current.push(k);
            rec(values, current, out, cap)?;
            current.pop();
            values.swap(k - 1, k);
        }
        Ok(())
    }
    let mut out = Vec::new();
    let mut values = f.values.clone();
    let mut current = Vec::new();
    rec(&mut values, &mut current, &mut out, cap)?;
    Ok(out)
}

/// A family of flip operators `𝔉_{j,i}: E_i ⊙ E_j → E_j ⊙ E_i` for
/// `1 ≤ j < i ≤ p` over the spaces `E_1..E_p`.
pub struct FlipFamily {
    spaces: Vec<Correspondence>,
    flips: BTreeMap<(usize, usize), BilinearMap>,
}

impl FlipFamily {
    pub fn new(
        spaces: Vec<Correspondence>,
        flips: BTreeMap<(usize, usize), BilinearMap>,
    ) -> Result<Self> {
        let p = spaces.len();
        for j in 1..=p {
            for i in (j + 1)..=p {
                let flip = flips
                    .get(&(j, i))
                    .ok_or_else(|| Error::InvalidInput(format!("missing flip ({j},{i})")))?;
                let src = crate::corr::tensor(&spaces[i - 1], &spaces[j - 1])?;
                let tgt = crate::corr::tensor(&spaces[j - 1], &spaces[i - 1])?;
                if flip.source() != &src || flip.target() != &tgt {
                    return Err(Error::DimensionMismatch(format!(
                        "flip ({j},{i}) has wrong source/target shape"
                    )));
                }
            }
        }
        Ok(FlipFamily { spaces, flips })
    }

    pub fn space_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn space(&self, i: usize) -> &Correspondence {
        &self.spaces[i - 1]
    }

    pub fn spaces(&self) -> &[Correspondence] {
        &self.spaces
    }

    /// `𝔉_{j,i}` for `j < i`.
    pub fn flip(&self, j: usize, i: usize) -> &BilinearMap {
        &self.flips[&(j, i)]
    }

    /// Residual of the detailed exchange condition at `k < j < i`:
    /// `‖(id_k⊙𝔉_{j,i})(𝔉_{k,i}⊙id_j)(id_i⊙𝔉_{k,j}) −
    ///   (𝔉_{k,j}⊙id_i)(id_j⊙𝔉_{k,i})(𝔉_{j,i}⊙id_k)‖`.
    pub fn exchange_residual(&self, k: usize, j: usize, i: usize) -> Result<(f64, BilinearMap)> {
        let (ei, ej, ek) = (self.space(i), self.space(j), self.space(k));
        // Left side: E_i⊙E_j⊙E_k → E_i⊙E_k⊙E_j → E_k⊙E_i⊙E_j → E_k⊙E_j⊙E_i.
        let l1 = site_flip(&[ei, ej, ek], 1, self.flip(k, j))?;
        let l2 = site_flip(&[ei, ek, ej], 0, self.flip(k, i))?;
        let l3 = site_flip(&[ek, ei, ej], 1, self.flip(j, i))?;
        let lhs = l3.compose(&l2)?.compose(&l1)?;
        // Right side: E_i⊙E_j⊙E_k → E_j⊙E_i⊙E_k → E_j⊙E_k⊙E_i → E_k⊙E_j⊙E_i.
        let r1 = site_flip(&[ei, ej, ek], 0, self.flip(j, i))?;
        let r2 = site_flip(&[ej, ei, ek], 1, self.flip(k, i))?;
        let r3 = site_flip(&[ej, ek, ei], 0, self.flip(k, j))?;
        let rhs = r3.compose(&r2)?.compose(&r1)?;
        let diff = lhs.sub(&rhs)?;
        Ok((diff.op_norm(), diff))
    }

    /// First violated triple `(k,j,i)` with its residual, if any.
    pub fn first_exchange_violation(
        &self,
        tol: &Tolerance,
    ) -> Result<Option<(usize, usize, usize, f64)>> {
        let p = self.spaces.len();
        for k in 1..=p {
            for j in (k + 1)..=p {
                for i in (j + 1)..=p {
                    let (res, _) = self.exchange_residual(k, j, i)?;
                    if res > tol.eq_rel {
                        return Ok(Some((k, j, i, res)));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// The composed amplified-flip operator from `E_{f(1)}⊙…⊙E_{f(q)}` onto the
/// sorted word `E_{f∘σ(1)}⊙…⊙E_{f∘σ(q)}`, built along a maximal admissible
/// chain. When `check_exchange` is set, the detailed exchange conditions are
/// verified first, which by the chain-independence lemma makes the result
/// independent of the chain.
pub fn pi_f(
    f: &IndexFunction,
    family: &FlipFamily,
    check_exchange: bool,
    tol: &Tolerance,
) -> Result<BilinearMap> {
    if f.range_size() > family.space_count() {
        return Err(Error::DimensionMismatch(
            "pattern range exceeds the flip family".into(),
        ));
    }
    if check_exchange {
        if let Some((k, j, i, res)) = family.first_exchange_violation(tol)? {
            return Err(Error::ExchangeConditionViolated(k, j, i, res));
        }
    }
    pi_f_along(f, family, &maximal_chain(f))
}

/// `π_f` composed along an explicit admissible chain (no exchange check).
pub fn pi_f_along(
    f: &IndexFunction,
    family: &FlipFamily,
    chain: &TranspositionChain,
) -> Result<BilinearMap> {
    let mut values = f.values().to_vec();
    let mut factors: Vec<Correspondence> =
        values.iter().map(|&v| family.space(v).clone()).collect();
    let refs: Vec<&Correspondence> = factors.iter().collect();
    let (start, _) = crate::corr::multi_tensor(&refs)?;
    let mut acc = BilinearMap::identity(&start);
    for &k in &chain.positions {
        let (a, b) = (values[k - 1], values[k]);
        if a <= b {
            return Err(Error::InvalidInput(format!(
                "chain position {k} is not order-improving"
            )));
        }
        let refs: Vec<&Correspondence> = factors.iter().collect();
        let step = site_flip(&refs, k - 1, family.flip(b, a))?;
        acc = step.compose(&acc)?;
        values.swap(k - 1, k);
        factors.swap(k - 1, k);
    }
    Ok(acc)
}
