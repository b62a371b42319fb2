//! Finite-dimensional machinery for completely positive semigroups and their
//! dilations: dense complex linear algebra, block C*-algebras, Kraus/Choi
//! calculus, correspondences in canonical multiplicity form, the permutation
//! calculus of order-improving transpositions, truncated sub/super/product
//! systems over `N0^d`, dilation triples, and a gallery of verified examples.
//!
//! The companion guide under `book/` walks through the concepts; its code
//! snippets are the same ones that run as doc-tests here.
//!
//! # Quick start
//!
//! Build a CP map from a Kraus family, test its classification predicates,
//! and read off the multiplicity matrix of its GNS correspondence:
//!
//! ```
//! use cpdil::algebra::BlockAlgebra;
//! use cpdil::cpmap::CPMap;
//! use cpdil::numkit::{CMatrix, Tolerance, C64};
//!
//! let tol = Tolerance::default();
//! let m2 = BlockAlgebra::full(2);
//! let hadamard = CMatrix::from_real(&[&[1.0, 1.0], &[1.0, -1.0]])
//!     .scale(C64::new(1.0 / 2f64.sqrt(), 0.0));
//! let t = CPMap::new(m2.clone(), m2.clone(), vec![hadamard], &tol)?;
//! assert!(t.is_markov(&tol));
//!
//! let gns = t.gns(&tol)?;
//! // A unitary conjugation has a one-dimensional GNS correspondence.
//! assert_eq!(gns.corr.mult(), &vec![vec![1]]);
//! # Ok::<(), cpdil::Error>(())
//! ```

pub mod algebra;
pub mod corr;
pub mod cpmap;
pub mod dilate;
mod error;
pub mod gallery;
pub mod numkit;
pub mod perm;
pub mod systems;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
