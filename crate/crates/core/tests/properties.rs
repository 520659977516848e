mod common;

use std::collections::BTreeSet;

use fairprep::debias::{
    cosine, flag_and_rank, remove_top_k, removal_budget, FlagRanking, Member,
};
use fairprep::metrics::{aod, spd, GroupConfusion};
use fairprep::model::{loss_and_gradient, train_logistic, LogisticConfig};
use fairprep::preprocess::{EncodedMatrix, FeatureSource, RowMeta};
use fairprep::reweigh::compute_weights;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, dim)
}

fn matrix_from(meta: &[(bool, bool)], dim: usize, seed: u64) -> EncodedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect())
        .collect();
    EncodedMatrix {
        rows: clustered_vectors(&mut rng, meta.len(), dim, &pool),
        columns: (0..dim)
            .map(|i| FeatureSource::Numeric {
                column: format!("f{i}"),
            })
            .collect(),
        meta: meta
            .iter()
            .enumerate()
            .map(|(i, &(p, f))| RowMeta {
                row_id: i,
                privileged: p,
                favorable: f,
            })
            .collect(),
        normalization: Default::default(),
        unseen_categories: 0,
    }
}

fn scan(m: &EncodedMatrix, tau: f64) -> FlagRanking {
    let group = |p: bool, f: bool| -> Vec<Member<'_>> {
        m.rows
            .iter()
            .zip(&m.meta)
            .filter(|(_, r)| r.privileged == p && r.favorable == f)
            .map(|(v, r)| Member {
                row_id: r.row_id,
                features: v,
            })
            .collect()
    };
    flag_and_rank(&group(true, true), &group(false, false), tau).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        u in vec_strategy(12),
        v in vec_strategy(12),
        alpha in 0.01f64..100.0,
    ) {
        let a = cosine(&u, &v).unwrap();
        prop_assert!((a - cosine(&v, &u).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
        prop_assert!((a - cosine(&scaled, &v).unwrap()).abs() < 1e-12);
        prop_assert!((a - oracle_cosine(&u, &v)).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn flags_match_double_loop(
        n_pf in 1usize..40,
        n_uu in 1usize..40,
        dim in 1usize..8,
        seed in any::<u64>(),
        tau in prop::sample::select(vec![0.9, 0.97, 0.99, 1.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dim).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect())
            .collect();
        let pf: Vec<(usize, Vec<f64>)> = clustered_vectors(&mut rng, n_pf, dim, &pool)
            .into_iter().enumerate().collect();
        let uu: Vec<(usize, Vec<f64>)> = clustered_vectors(&mut rng, n_uu, dim, &pool)
            .into_iter().enumerate().map(|(i, v)| (1000 + i, v)).collect();
        let members = |g: &[(usize, Vec<f64>)]| -> Vec<(usize, Vec<f64>)> { g.to_vec() };
        let pf_m: Vec<Member<'_>> = pf.iter().map(|(id, v)| Member { row_id: *id, features: v }).collect();
        let uu_m: Vec<Member<'_>> = uu.iter().map(|(id, v)| Member { row_id: *id, features: v }).collect();
        let got = flag_and_rank(&pf_m, &uu_m, tau).unwrap();
        let (want_pf, want_uu) = oracle_flags(&members(&pf), &members(&uu), tau);
        prop_assert_eq!(got.pf.len(), want_pf.len());
        prop_assert_eq!(got.uu.len(), want_uu.len());
        for (g, w) in got.pf.iter().zip(&want_pf).chain(got.uu.iter().zip(&want_uu)) {
            prop_assert_eq!(g.row_id, w.row_id);
            prop_assert_eq!(g.match_count, w.count);
            prop_assert!((g.max_similarity - w.max).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_threshold_shrinks_flags(
        meta in prop::collection::vec((any::<bool>(), any::<bool>()), 20..80),
        seed in any::<u64>(),
        lo in 0.8f64..0.99,
        gap in 0.0f64..0.2,
    ) {
        let hi = (lo + gap).min(1.0);
        prop_assume!(meta.contains(&(true, true)) && meta.contains(&(false, false)));
        let m = matrix_from(&meta, 4, seed);
        let (a, b) = (scan(&m, lo), scan(&m, hi));
        for (loose, tight) in [(&a.pf, &b.pf), (&a.uu, &b.uu)] {
            for f in tight.iter() {
                let g = loose.iter().find(|x| x.row_id == f.row_id);
                prop_assert!(g.is_some());
                prop_assert!(g.unwrap().match_count >= f.match_count);
            }
        }
    }

    #[test]
    fn removal_only_touches_flagged_rows(
        meta in prop::collection::vec((any::<bool>(), any::<bool>()), 20..80),
        seed in any::<u64>(),
        k in 0.0f64..30.0,
    ) {
        prop_assume!(meta.contains(&(true, true)) && meta.contains(&(false, false)));
        let m = matrix_from(&meta, 4, seed);
        let ranking = scan(&m, 0.95);
        let privileged = m.meta.iter().filter(|r| r.privileged).count();
        let bp = removal_budget(privileged, k).unwrap();
        let bu = removal_budget(m.len() - privileged, k).unwrap();
        let (filtered, plan) = remove_top_k(&m, &ranking, k, bp, bu);
        let flagged: BTreeSet<usize> = ranking.pf.iter().chain(&ranking.uu).map(|f| f.row_id).collect();
        let removed: BTreeSet<usize> = plan.removed_ids().collect();
        prop_assert!(removed.is_subset(&flagged));
        prop_assert_eq!(filtered.len() + removed.len(), m.len());
        prop_assert_eq!(plan.removed_pf.len(), bp.min(ranking.pf.len()));
        prop_assert_eq!(plan.removed_uu.len(), bu.min(ranking.uu.len()));
        prop_assert_eq!(&plan.removed_pf[..], &ranking.pf[..plan.removed_pf.len()]);
    }

    #[test]
    fn reweighing_equalizes_base_rates(
        cells in prop::array::uniform4(1usize..500),
        seed in any::<u64>(),
    ) {
        let mut meta = Vec::new();
        for (i, &(p, f)) in [(false, false), (false, true), (true, false), (true, true)].iter().enumerate() {
            meta.extend(std::iter::repeat_n((p, f), cells[i]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut meta[..], &mut rng);
        let m = matrix_from(&meta, 1, seed);
        let w = compute_weights(&m).unwrap();
        let n = m.len() as f64;
        prop_assert!((w.total() - n).abs() < 1e-9 * n.max(1.0));
        let (p, u) = weighted_base_rates(&m.protected(), &m.labels(), &w.weights);
        prop_assert!((p - u).abs() < 1e-9);
        // permutation invariance: same weight per row id after reordering
        let mut rev = m.clone();
        rev.rows.reverse();
        rev.meta.reverse();
        let w2 = compute_weights(&rev).unwrap();
        for (id, wt) in w2.row_ids.iter().zip(&w2.weights) {
            prop_assert_eq!(*wt, w.weights[*id]);
        }
    }

    #[test]
    fn metrics_antisymmetric_and_consistent(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 8..200),
    ) {
        let preds: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let truths: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let prot: Vec<bool> = rows.iter().map(|r| r.2).collect();
        let swapped: Vec<bool> = prot.iter().map(|g| !g).collect();
        if let (Ok(a), Ok(b)) = (spd(&preds, &prot), spd(&preds, &swapped)) {
            prop_assert_eq!(a, -b);
            prop_assert!(a.abs() <= 1.0);
            let via_conf = GroupConfusion::from_predictions(&preds, &truths, &prot).unwrap().spd().unwrap();
            prop_assert!((a - via_conf).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (aod(&preds, &truths, &prot), aod(&preds, &truths, &swapped)) {
            prop_assert_eq!(a, -b);
            prop_assert!(a.abs() <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let x: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..20).map(|_| rng.gen_range(0.2..3.0)).collect();
        let beta: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let (loss, grad, grad_b) = loss_and_gradient(&x, &y, &w, &beta, b, 0.01);
        prop_assert!((loss - oracle_loss(&x, &y, &w, &beta, b, 0.01)).abs() < 1e-12);
        let fd = fd_gradient(&x, &y, &w, &beta, b, 0.01, 1e-5);
        for (a, n) in grad.iter().chain(std::iter::once(&grad_b)).zip(&fd) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            prop_assert!(rel < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn default_training_loss_is_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..6).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * rng.gen_range(-1.0..1.0) > 0.5).collect();
        let w = vec![1.0; 60];
        let cfg = LogisticConfig { max_epochs: 300, ..Default::default() };
        let m = train_logistic(&x, &y, &w, &cfg, 0).unwrap();
        for pair in m.summary.loss_history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-15);
        }
        let again = train_logistic(&x, &y, &w, &cfg, 0).unwrap();
        prop_assert_eq!(m.coefficients, again.coefficients);
    }
}
