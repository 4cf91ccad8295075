mod common;

use common::{composed_operator, random_design};
use crossed::datagen::{gen_balanced_cells, gen_balanced_levels_k2, product_design};
use crossed::spectral::{
    aux_rate, averages_autoregression, factor_ratios, mean_map, numeric_rate, theory_rate,
    AutoregressiveOperator, AuxChain, RateMethod, RateOptions, Subspace,
};
use crossed::{IncidenceTable, Precisions, SweepKind};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rate(kind: SweepKind, tbl: &IncidenceTable, tau: &Precisions, method: RateMethod) -> f64 {
    let opts = RateOptions {
        method,
        ..RateOptions::default()
    };
    numeric_rate(kind, tbl, tau, &opts).unwrap().rho_numeric
}

fn random_tau(rng: &mut ChaCha8Rng, k: usize) -> Precisions {
    Precisions::new((0..=k).map(|_| 0.1 + 5.0 * rng.random::<f64>()).collect()).unwrap()
}

#[test]
fn operator_equals_composed_block_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shapes: [&[usize]; 6] = [
        &[4],
        &[3, 5],
        &[6, 6],
        &[2, 3, 4],
        &[4, 3, 2],
        &[2, 2, 3, 2],
    ];
    for levels in shapes {
        let tbl = random_design(&mut rng, levels, 0.5, 3);
        let tau = random_tau(&mut rng, levels.len());
        for kind in [SweepKind::Gibbs, SweepKind::Collapsed] {
            for pass in 0..2 {
                let mut order: Vec<usize> = (0..levels.len()).collect();
                if pass == 1 {
                    order.reverse();
                }
                let want = composed_operator(kind, &tbl, &tau, &order);
                let mut op = AutoregressiveOperator::new(kind, &tbl, &tau)
                    .unwrap()
                    .with_order(order.clone())
                    .unwrap();
                let got = op.assemble();
                let err = (&got - &want).abs().max();
                assert!(err < 1e-10, "{kind:?} {levels:?} order {order:?}: {err}");
                let x: Vec<f64> = (0..tbl.num_params())
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect();
                if pass == 0 {
                    let bx = mean_map(kind, &tbl, &tau, &x).unwrap();
                    let want_x = &want * DVector::from_vec(x);
                    for (a, b) in bx.iter().zip(want_x.iter()) {
                        assert!((a - b).abs() < 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn balanced_fast_paths_equal_general_formulas() {
    let tau = Precisions::new(vec![0.7, 1.3, 0.4, 2.2]).unwrap();
    let cells = gen_balanced_cells(&[3, 4, 2], 2).unwrap();
    let bl = product_design(&[
        &gen_balanced_levels_k2(5, 2, 3, false).unwrap(),
        &gen_balanced_cells(&[3], 1).unwrap(),
    ])
    .unwrap();
    for tbl in [&cells, &bl] {
        for kind in [SweepKind::Gibbs, SweepKind::Collapsed] {
            let fast = AutoregressiveOperator::new(kind, tbl, &tau)
                .unwrap()
                .assemble();
            let slow = AutoregressiveOperator::new(kind, tbl, &tau)
                .unwrap()
                .general_only()
                .assemble();
            assert!((&fast - &slow).abs().max() < 1e-12);
        }
    }
}

#[test]
fn iterative_engines_agree_with_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..12 {
        let k = 1 + case % 3;
        let levels: Vec<usize> = (0..k).map(|_| rng.random_range(2..=9)).collect();
        let tbl = random_design(&mut rng, &levels, 0.4, 2);
        if tbl.num_params() > 30 {
            continue;
        }
        let tau = random_tau(&mut rng, k);
        for kind in [SweepKind::Gibbs, SweepKind::Collapsed] {
            let dense = rate(kind, &tbl, &tau, RateMethod::DenseEigen);
            let want = crossed::spectral::eigen::dense_spectral_radius(&composed_operator(
                kind,
                &tbl,
                &tau,
                &(0..k).collect::<Vec<_>>(),
            ))
            .unwrap();
            assert!((dense - want).abs() < 1e-10);
            for method in [RateMethod::PowerIteration, RateMethod::KrylovSchur] {
                let r = rate(kind, &tbl, &tau, method);
                assert!(
                    (r - dense).abs() < 1e-7,
                    "case {case} {kind:?} {method:?}: {r} vs {dense}"
                );
            }
        }
    }
}

#[test]
fn balanced_cells_rates_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let k = rng.random_range(1..=4);
        let levels: Vec<usize> = (0..k).map(|_| rng.random_range(2..=5)).collect();
        let n = rng.random_range(1..=4);
        let tbl = gen_balanced_cells(&levels, n).unwrap();
        let tau = random_tau(&mut rng, k);
        let want = factor_ratios(&tbl, &tau).into_iter().fold(0.0, f64::max);
        assert!((rate(SweepKind::Gibbs, &tbl, &tau, RateMethod::Auto) - want).abs() < 1e-8);
        assert!(rate(SweepKind::Collapsed, &tbl, &tau, RateMethod::Auto) < 1e-8);
    }
}

#[test]
fn two_factor_balanced_levels_rates_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..10 {
        let i = rng.random_range(3..=12);
        let m = rng.random_range(1..=i);
        let tbl = gen_balanced_levels_k2(i, m, case, case % 2 == 0).unwrap();
        let tau = random_tau(&mut rng, 2);
        let r = factor_ratios(&tbl, &tau);
        let (rho_aux, chain) = aux_rate(&tbl).unwrap();
        let ev = crossed::spectral::eigen::dense_eigenvalues(&chain.transition_dense()).unwrap();
        assert!((rho_aux - ev[1].norm()).abs() < 1e-10);
        let gs = rate(SweepKind::Gibbs, &tbl, &tau, RateMethod::Auto);
        let cgs = rate(SweepKind::Collapsed, &tbl, &tau, RateMethod::Auto);
        assert!((gs - r[0].max(r[1])).abs() < 1e-8, "case {case}");
        assert!(
            (cgs - r[0] * r[1] * rho_aux).abs() < 1e-8,
            "case {case}: {cgs} vs {}",
            r[0] * r[1] * rho_aux
        );
        let residual = numeric_rate(
            SweepKind::Collapsed,
            &tbl,
            &tau,
            &RateOptions {
                subspace: Subspace::ZeroSumResiduals,
                ..RateOptions::default()
            },
        )
        .unwrap();
        assert!((residual.rho_numeric - r[0] * r[1] * rho_aux).abs() < 1e-8);
    }
}

#[test]
fn single_permutation_walk_never_mixes() {
    let tbl = gen_balanced_levels_k2(8, 1, 5, false).unwrap();
    assert_eq!(aux_rate(&tbl).unwrap().0, 1.0);
    let dense = AuxChain::new(&tbl).unwrap().transition_dense();
    let ev = crossed::spectral::eigen::dense_eigenvalues(&dense).unwrap();
    assert!((ev[1].norm() - 1.0).abs() < 1e-12);
}

#[test]
fn averages_chain_structure() {
    let tau = Precisions::new(vec![1.0, 0.3, 2.0, 0.9]).unwrap();
    let tbl = product_design(&[
        &gen_balanced_levels_k2(6, 2, 1, true).unwrap(),
        &gen_balanced_cells(&[4], 1).unwrap(),
    ])
    .unwrap();
    let m = averages_autoregression(&tbl, &tau).unwrap();
    assert_eq!(m[(0, 0)], 0.0);
    for c in 1..4 {
        assert!((m[(0, c)] + 1.0).abs() < 1e-12);
    }
    let mut ev: Vec<f64> = crossed::spectral::eigen::dense_eigenvalues(&m)
        .unwrap()
        .iter()
        .map(|z| z.re)
        .collect();
    let mut want = factor_ratios(&tbl, &tau);
    want.push(0.0);
    ev.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10, "{ev:?} vs {want:?}");
    }
}

#[test]
fn gibbs_rate_does_not_depend_on_update_order() {
    let tau = Precisions::new(vec![1.0, 0.5, 2.0, 1.2]).unwrap();
    let tbl = product_design(&[
        &gen_balanced_levels_k2(5, 2, 7, false).unwrap(),
        &gen_balanced_cells(&[3], 2).unwrap(),
    ])
    .unwrap();
    let base = rate(SweepKind::Gibbs, &tbl, &tau, RateMethod::DenseEigen);
    for order in [vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]] {
        let opts = RateOptions {
            order: Some(order),
            method: RateMethod::DenseEigen,
            ..RateOptions::default()
        };
        let r = numeric_rate(SweepKind::Gibbs, &tbl, &tau, &opts)
            .unwrap()
            .rho_numeric;
        assert!((r - base).abs() < 1e-10);
    }
}

#[test]
fn rates_ignore_the_response() {
    let tau = Precisions::new(vec![1.0, 0.5, 2.0]).unwrap();
    let design = common::random_design(&mut ChaCha8Rng::seed_from_u64(8), &[5, 6], 0.5, 2);
    let with_y = crossed::datagen::simulate_response(&design, &tau, 3.0, 1)
        .unwrap()
        .table;
    for kind in [SweepKind::Gibbs, SweepKind::Collapsed] {
        let a = rate(kind, &design, &tau, RateMethod::DenseEigen);
        let b = rate(kind, &with_y, &tau, RateMethod::DenseEigen);
        assert!((a - b).abs() < 1e-12);
    }
}

fn balanced_levels_design(
    i: usize,
    m: usize,
    seed: u64,
    extra: Option<(usize, u64)>,
) -> IncidenceTable {
    let base = gen_balanced_levels_k2(i, m, seed, seed.is_multiple_of(2)).unwrap();
    match extra {
        None => base,
        Some((levels, n)) => {
            product_design(&[&base, &gen_balanced_cells(&[levels], n).unwrap()]).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gibbs_mixing_respects_the_balanced_levels_bound(
        i in 2usize..9,
        m_frac in 0.0f64..1.0,
        seed in 0u64..1000,
        extra in prop::option::of((2usize..4, 1u64..3)),
        t in prop::collection::vec(0.05f64..20.0, 4),
    ) {
        let m = 1 + ((i - 1) as f64 * m_frac) as usize;
        let tbl = balanced_levels_design(i, m, seed, extra);
        let tau = Precisions::new(t[..=tbl.factors()].to_vec()).unwrap();
        let report = numeric_rate(SweepKind::Gibbs, &tbl, &tau, &RateOptions::default()).unwrap();
        let bound = theory_rate(SweepKind::Gibbs, &tbl, &tau).unwrap().mixing.unwrap();
        prop_assert!(report.mixing_numeric >= bound - 1e-8 * bound.max(1.0),
            "numeric {} below bound {}", report.mixing_numeric, bound);
    }
}
