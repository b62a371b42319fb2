//! End-to-end checks of the truncated-system pipelines: GNS systems of
//! commuting tuples, flip-built product systems, exchange-condition gauge
//! invariance, spanned subsystems, and the product-subsystem solver.

use cpdil::algebra::BlockAlgebra;
use cpdil::corr::{tensor, tensor_maps, BilinearMap, Correspondence};
use cpdil::cpmap::CPMap;
use cpdil::dilate::two_param_markov_dilation;
use cpdil::gallery::three_state_matrix;
use cpdil::numkit::{svd, CMatrix, Tolerance, C64};
use cpdil::perm::FlipFamily;
use cpdil::systems::{
    check_exchange, gauge_transform_flips, gns_system, product_from_flips,
    product_subsystem_solver, spanned_subsystem, truncated_from_flips, validate, FlipData, GridCap,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn hilbert(dim: usize) -> Correspondence {
    let c = BlockAlgebra::diagonal(1);
    Correspondence::new(c.clone(), c, vec![vec![dim]]).unwrap()
}

fn swap_flip(e: &Correspondence) -> BilinearMap {
    let src = tensor(e, e).unwrap();
    let d = e.mult_at(0, 0);
    let mut blk = CMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            blk.set(b * d + a, a * d + b, C64::new(1.0, 0.0));
        }
    }
    BilinearMap::new(src.clone(), src, vec![vec![blk]]).unwrap()
}

#[test]
fn gns_system_of_identity_is_unitary_trivial() {
    let tol = Tolerance::default();
    let m2 = BlockAlgebra::full(2);
    let cap = GridCap::new(vec![3]).unwrap();
    let sys = gns_system(&[CPMap::identity(&m2)], &cap, &tol).unwrap();
    for n in cap.indices() {
        assert_eq!(sys.member(&n).mult(), &vec![vec![1]]);
    }
    for ((_, _), w) in sys.structure.iter() {
        assert!(w.unitary_defect() < 1e-10);
    }
    assert!(validate(&sys, &tol).passed());
}

#[test]
fn gns_system_of_elementary_semigroup_is_trivial() {
    let tol = Tolerance::default();
    // T = c*·c on the simple algebra M₂: every member has multiplicity 1.
    let m2 = BlockAlgebra::full(2);
    let c = CMatrix::from_real(&[&[0.4, 0.3], &[0.0, 0.5]]);
    let t = CPMap::new(m2.clone(), m2.clone(), vec![c], &tol).unwrap();
    let cap = GridCap::new(vec![3]).unwrap();
    let sys = gns_system(&[t], &cap, &tol).unwrap();
    for n in cap.indices() {
        assert_eq!(sys.member(&n).mult_total(), 1);
    }
    assert!(validate(&sys, &tol).passed());
}

#[test]
fn gns_system_of_three_state_pair_reproduces_semigroup_and_shrinks() {
    let tol = Tolerance::default();
    let t = CPMap::from_nonneg_matrix_column_apply(&three_state_matrix()).unwrap();
    let t2 = t.power(2).unwrap();
    let cap = GridCap::new(vec![1, 1]).unwrap();
    let sys = gns_system(&[t.clone(), t2.clone()], &cap, &tol).unwrap();
    // Member at (1,1) ≅ GNS(T³): multiplicity strictly below the tensor of
    // the marginals.
    let t3 = t.power(3).unwrap();
    let gns3 = t3.gns(&tol).unwrap();
    assert_eq!(sys.member(&[1, 1]).mult(), gns3.corr.mult());
    let e10 = sys.member(&[1, 0]);
    let e01 = sys.member(&[0, 1]);
    let prod = tensor(e10, e01).unwrap();
    assert!(sys.member(&[1, 1]).mult_total() < prod.mult_total());
    // Unit reproduces the semigroup: ⟨ξ_n, bξ_n⟩ = T₂^{n₂}∘T₁^{n₁}(b).
    let alg = BlockAlgebra::diagonal(3);
    for n in cap.indices() {
        let xi = sys.unit_at(&n).unwrap();
        let expect = t2
            .power(n[1])
            .unwrap()
            .compose(&t.power(n[0]).unwrap())
            .unwrap();
        for b in alg.basis() {
            let got = xi.inner(&xi.left_mul(&b).unwrap()).unwrap();
            let want = expect.apply(&b).unwrap();
            assert!(got.sub(&want).unwrap().norm() < 1e-9);
        }
    }
    assert!(validate(&sys, &tol).passed());
}

#[test]
fn product_from_swap_flips_validates_with_unit() {
    let tol = Tolerance::default();
    let e = hilbert(2);
    let mut flips = BTreeMap::new();
    flips.insert((1usize, 2usize), swap_flip(&e));
    // ξ_i = first basis vector: the swap fixes ξ⊗ξ.
    let mut xi = e.zero_vector();
    xi.set_comp(0, 0, 0, CMatrix::identity(1));
    let fd = FlipData {
        family: FlipFamily::new(vec![e.clone(), e.clone()], flips).unwrap(),
        vectors: Some(vec![xi.clone(), xi]),
    };
    let cap = GridCap::new(vec![2, 2]).unwrap();
    let sys = product_from_flips(&fd, &cap, &tol).unwrap();
    let report = validate(&sys, &tol);
    assert!(report.passed(), "failures: {:?}", report.failures());
    // Flip recovery: u*_{e1,e2} u_{e2,e1} = 𝔉 within 1e-12.
    let u12 = sys.structure_map(&[1, 0], &[0, 1]);
    let u21 = sys.structure_map(&[0, 1], &[1, 0]);
    let rec = u12.adjoint().compose(u21).unwrap();
    let fd2 = FlipData {
        family: FlipFamily::new(
            vec![e.clone(), e.clone()],
            BTreeMap::from([((1usize, 2usize), swap_flip(&e))]),
        )
        .unwrap(),
        vectors: None,
    };
    assert!(rec.sub(fd2.family.flip(1, 2)).unwrap().op_norm() < 1e-12);
}

#[test]
fn exchange_check_is_gauge_invariant() {
    let tol = Tolerance::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let e = hilbert(2);
    // Swap flips satisfy the exchange conditions on d = 3.
    let mut flips = BTreeMap::new();
    for j in 1..=3usize {
        for i in (j + 1)..=3 {
            flips.insert((j, i), swap_flip(&e));
        }
    }
    let fd = FlipData {
        family: FlipFamily::new(vec![e.clone(), e.clone(), e.clone()], flips).unwrap(),
        vectors: None,
    };
    assert!(check_exchange(&fd, &tol).unwrap().ok);
    // Gauge transform by random bilinear unitaries a_i.
    let gauges: Vec<BilinearMap> = (0..3)
        .map(|_| {
            let raw = CMatrix::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let (u, _, _) = svd(&raw);
            BilinearMap::new(e.clone(), e.clone(), vec![vec![u]]).unwrap()
        })
        .collect();
    let gauged = gauge_transform_flips(&fd, &gauges).unwrap();
    assert!(check_exchange(&gauged, &tol).unwrap().ok);
    // The gauge candidates classify the two flip systems as isomorphic:
    // (a_j⊙a_i)𝔉 = 𝔉'(a_i⊙a_j) holds exactly for 𝔉' the gauged flips.
    let resid = cpdil::systems::flip_isomorphism_residual(&fd, &gauged, &gauges).unwrap();
    assert!(resid < 1e-12);
    // A non-example stays violated under gauging.
    let bad = cpdil::gallery::flip_example_data().unwrap();
    let bad_gauged = gauge_transform_flips(&bad, &gauges).unwrap();
    assert!(!check_exchange(&bad_gauged, &tol).unwrap().ok);
}

#[test]
fn identity_flip_truncation_embeds_and_braid_flips_pass() {
    let tol = Tolerance::default();
    let e = hilbert(2);
    let mut flips = BTreeMap::new();
    for j in 1..=3usize {
        for i in (j + 1)..=3 {
            flips.insert((j, i), BilinearMap::identity(&tensor(&e, &e).unwrap()));
        }
    }
    let fd = FlipData {
        family: FlipFamily::new(vec![e.clone(), e.clone(), e.clone()], flips).unwrap(),
        vectors: None,
    };
    assert!(check_exchange(&fd, &tol).unwrap().ok);
    let sys = truncated_from_flips(&fd, &tol).unwrap();
    assert!(validate(&sys, &tol).passed());
    // All-swap flips satisfy the braid relation on C²⊗C² as well.
    let mut swaps = BTreeMap::new();
    for j in 1..=3usize {
        for i in (j + 1)..=3 {
            swaps.insert((j, i), swap_flip(&e));
        }
    }
    let fd_swap = FlipData {
        family: FlipFamily::new(vec![e.clone(), e.clone(), e], swaps).unwrap(),
        vectors: None,
    };
    assert!(check_exchange(&fd_swap, &tol).unwrap().ok);
}

#[test]
fn spanned_subsystem_of_endomorphism_pair_is_not_proper() {
    let tol = Tolerance::default();
    let m2 = BlockAlgebra::full(2);
    let g = CMatrix::from_real(&[&[1.0, -2.0], &[2.0, 0.5]]);
    let (u, _, _) = svd(&g);
    let t1 = CPMap::new(m2.clone(), m2.clone(), vec![u.clone()], &tol).unwrap();
    let t2 = CPMap::new(m2.clone(), m2.clone(), vec![u.matmul(&u)], &tol).unwrap();
    let cap = GridCap::new(vec![1, 1]).unwrap();
    let out = two_param_markov_dilation(&t1, &t2, &cap, &tol).unwrap();
    assert!(!out.quasi_generic);
    let spanned = spanned_subsystem(&out.system, &tol).unwrap();
    assert!(!spanned.proper, "surjectivity: {:?}", spanned.surjectivity);
    assert!(validate(&spanned.system, &tol).passed());
}

#[test]
fn solver_returns_trivial_kernel_for_quasi_generic_factor_pair() {
    let tol = Tolerance::default();
    // A Markov map on M₂ with Choi rank 3: quasi-generic squared pair on a
    // factor; the generated product subsystem is everything (q = 0).
    let m2 = BlockAlgebra::full(2);
    let w = [0.5f64, 0.3, 0.2];
    let id = CMatrix::identity(2);
    let x = CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let h =
        CMatrix::from_real(&[&[1.0, 1.0], &[1.0, -1.0]]).scale(C64::new(1.0 / 2f64.sqrt(), 0.0));
    let kraus = vec![
        id.scale(C64::new(w[0].sqrt(), 0.0)),
        x.scale(C64::new(w[1].sqrt(), 0.0)),
        h.scale(C64::new(w[2].sqrt(), 0.0)),
    ];
    let t = CPMap::new(m2.clone(), m2.clone(), kraus, &tol).unwrap();
    assert!(t.is_markov(&tol));
    let cap = GridCap::new(vec![1, 1]).unwrap();
    let out = two_param_markov_dilation(&t, &t, &cap, &tol).unwrap();
    assert!(out.quasi_generic);
    let solver = product_subsystem_solver(&out.system, &tol).unwrap();
    assert_eq!(solver.q_dim, 0);
    // And the spanned superproduct subsystem is proper.
    let spanned = spanned_subsystem(&out.system, &tol).unwrap();
    assert!(spanned.proper);
}

#[test]
fn strongly_commute_rejects_noncommuting_pairs() {
    let tol = Tolerance::default();
    let m2 = BlockAlgebra::full(2);
    let c = CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
    let d = CMatrix::from_real(&[&[1.0, 0.0], &[0.0, 0.0]]);
    let t = CPMap::new(m2.clone(), m2.clone(), vec![c], &tol).unwrap();
    let s = CPMap::new(m2.clone(), m2.clone(), vec![d], &tol).unwrap();
    // T(a) = a₁₁e₂₂ and S(a) = a₁₁e₁₁ compose differently in the two orders.
    assert!(matches!(
        cpdil::corr::strongly_commute(&t, &s, &tol),
        Err(cpdil::Error::NotCommuting(_))
    ));
}

#[test]
fn solver_is_trivial_on_the_trivial_system() {
    // The trivial product system: members E_n = B, products the canonical
    // identifications, unit 𝟙. Its members are one-dimensional over B, so
    // the only projection annihilating the unit is zero.
    use cpdil::systems::{
        add_idx, canonical_left_unit, canonical_right_unit, is_zero_idx, SystemKind,
        TruncatedSystem,
    };
    let tol = Tolerance::default();
    for (alg, cap) in [
        (
            BlockAlgebra::new(vec![2, 1]).unwrap(),
            GridCap::new(vec![2]).unwrap(),
        ),
        (BlockAlgebra::full(2), GridCap::new(vec![1, 1]).unwrap()),
    ] {
        let triv = Correspondence::trivial(&alg);
        let mut members = BTreeMap::new();
        let mut unit = BTreeMap::new();
        for n in cap.indices() {
            members.insert(n.clone(), triv.clone());
            unit.insert(n, Correspondence::unit_vector(&alg));
        }
        let mut structure = BTreeMap::new();
        for (m, n) in cap.pairs() {
            let map = if is_zero_idx(&n) {
                canonical_right_unit(&members[&add_idx(&m, &n)])
            } else {
                canonical_left_unit(&members[&add_idx(&m, &n)])
            };
            structure.insert((m, n), map);
        }
        let sys = TruncatedSystem {
            kind: SystemKind::Product,
            cap,
            algebra: alg,
            members,
            structure,
            unit: Some(unit),
        };
        assert!(validate(&sys, &tol).passed());
        let solver = product_subsystem_solver(&sys, &tol).unwrap();
        assert_eq!(solver.q_dim, 0);
        // The spanned subsystem of the trivial system is everything.
        if sys.cap.d() == 2 {
            let spanned = spanned_subsystem(&sys, &tol).unwrap();
            assert!(!spanned.proper);
        }
    }
}
