use proptest::prelude::*;

use spid_core::blocking::{assemble, partition};
use spid_core::datagen::gen_exact_rank;
use spid_core::matrix::{mgsqr, DenseMatrix};
use spid_core::sketch::build_interpolator;
use spid_core::{column_id, GridGeom, RankRule, SubsampleSpec};

fn structured() -> impl Strategy<Value = (Vec<usize>, Vec<bool>, Vec<usize>, bool)> {
    (1usize..=3)
        .prop_flat_map(|axes| {
            (
                prop::collection::vec(2usize..9, axes),
                prop::collection::vec(any::<bool>(), axes),
                prop::collection::vec(1usize..4, axes),
                any::<bool>(),
            )
        })
        .prop_filter(
            "non-periodic axes need a boundary sample",
            |(dims, periodic, strides, boundary)| {
                *boundary
                    || dims
                        .iter()
                        .zip(periodic)
                        .zip(strides)
                        .all(|((d, p), s)| *p || (d - 1) % s == 0)
            },
        )
}

fn matrix(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..max, 1..max).prop_flat_map(|(m, n)| {
        prop::collection::vec(-1.0f64..1.0, m * n)
            .prop_map(move |d| DenseMatrix::new(m, n, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_is_a_partition_of_unity_and_reproduces_samples(
        (dims, periodic, strides, boundary) in structured()
    ) {
        let geom = GridGeom::structured(dims, periodic).unwrap();
        let spec = SubsampleSpec::strided(geom, strides, boundary).unwrap();
        let m = build_interpolator(&spec).unwrap();
        for i in 0..m.fine_rows() {
            let sum: f64 = m.row(i).map(|(_, w)| w).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(m.row(i).all(|(_, w)| w >= 0.0));
        }
        for (c, &fine) in spec.rows().iter().enumerate() {
            let row: Vec<_> = m.row(fine).filter(|&(_, w)| w != 0.0).collect();
            prop_assert_eq!(row, vec![(c, 1.0)]);
        }
    }

    #[test]
    fn qr_pivots_and_orthogonality(a in matrix(12)) {
        prop_assume!(a.max_abs() > 0.0);
        let Ok(qr) = mgsqr(&a, RankRule::Tolerance(1e-10)) else { return Ok(()) };
        let k = qr.rank;
        let diag: Vec<f64> = (0..k).map(|i| qr.r_mat[(i, i)].abs()).collect();
        prop_assert!(diag.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let qtq = qr.q.transpose().matmul(&qr.q).unwrap();
        let dev = qtq.sub(&DenseMatrix::identity(k)).unwrap().max_abs();
        prop_assert!(dev <= 1e-12);
        let mut pivots = qr.pivots.clone();
        pivots.sort_unstable();
        prop_assert_eq!(pivots, (0..a.cols()).collect::<Vec<_>>());
    }

    #[test]
    fn id_has_identity_on_skeleton(m in 2usize..15, n in 2usize..15, r in 1usize..4, seed in 0u64..1000) {
        let r = r.min(m).min(n);
        let a = gen_exact_rank(m, n, r, seed).unwrap();
        let f = column_id(&a, RankRule::FixedRank(r)).unwrap();
        prop_assert!(f.has_identity_block());
        for (p, &j) in f.skeleton_indices().iter().enumerate() {
            prop_assert_eq!(f.skeleton().col(p), a.col(j));
        }
        let err = a.sub(&f.reconstruct().unwrap()).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn partition_then_assemble_round_trips(
        (dims, periodic, _, _) in structured(),
        parts in prop::collection::vec(1usize..3, 3),
        seed in 0u64..100,
    ) {
        let parts = &parts[..dims.len()];
        prop_assume!(dims.iter().zip(parts).all(|(d, p)| d / p >= 1));
        let geom = GridGeom::structured(dims, periodic).unwrap();
        let rows = partition(&geom, parts).unwrap();
        let m = geom.num_points();
        let mut all: Vec<usize> = rows.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        let a = gen_exact_rank(m, 3, 1, seed).unwrap();
        let pieces: Vec<_> = rows.iter().map(|r| (r.clone(), a.select_rows(r).unwrap())).collect();
        prop_assert_eq!(assemble(m, &pieces).unwrap(), a);
    }
}
