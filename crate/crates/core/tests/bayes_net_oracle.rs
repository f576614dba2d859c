mod common;

use frailwatch_core::bayes_net::{fit_em, fit_ml, EmOptions, TrainRow};
use frailwatch_core::features::{column_of, NUM_COLUMNS};
use frailwatch_core::model::{Activity, Health, NUM_ACTIVITIES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_row<R: Rng>(rng: &mut R) -> Vec<f64> {
    (0..NUM_COLUMNS).map(|_| rng.random_range(-6.0..6.0)).collect()
}

#[test]
fn posteriors_match_enumeration_on_discrete_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for case in 0..1000 {
        let model = common::random_model(&mut rng, &[]);
        let e = common::random_env_state(&mut rng);
        let row = random_row(&mut rng);
        let joint = model.posterior_joint(&e, &row).unwrap();
        let want = common::brute_posterior_joint(&model, &e, &row);
        let total: f64 = joint.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for a in 0..NUM_ACTIVITIES {
            for h in 0..2 {
                assert!((joint[a][h] - want[a][h]).abs() < 1e-12, "case {case} joint[{a}][{h}]");
            }
        }
        for act in Activity::ALL.into_iter().chain([Activity::Unknown]) {
            let got = model.posterior_health(act, &e, &row).unwrap();
            let want = common::brute_posterior_health(&model, &e, act.index(), &row);
            assert!((got[0] + got[1] - 1.0).abs() < 1e-9);
            for h in 0..2 {
                assert!((got[h] - want[h]).abs() < 1e-12, "case {case} {act} h={h}: {} vs {}", got[h], want[h]);
            }
        }
    }
}

#[test]
fn posteriors_match_enumeration_with_gaussian_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let columns = [column_of(16), column_of(31), column_of(52)];
    for case in 0..200 {
        let model = common::random_model(&mut rng, &columns);
        let e = common::random_env_state(&mut rng);
        let mut row = random_row(&mut rng);
        for &c in &columns {
            row[c] = rng.random_range(-3.0..3.0);
        }
        let joint = model.posterior_joint(&e, &row).unwrap();
        let want = common::brute_posterior_joint(&model, &e, &row);
        for a in 0..NUM_ACTIVITIES {
            for h in 0..2 {
                assert!((joint[a][h] - want[a][h]).abs() < 1e-10, "case {case}");
            }
        }
        let got = model.posterior_health(Activity::Unknown, &e, &row).unwrap();
        let want = common::brute_posterior_health(&model, &e, None, &row);
        assert!((got[1] - want[1]).abs() < 1e-10, "case {case}");
    }
}

#[test]
fn log_likelihood_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let columns = [column_of(20), column_of(40)];
    for _ in 0..100 {
        let model = common::random_model(&mut rng, &columns);
        let mut row = random_row(&mut rng);
        row[0] = rng.random_range(0.0..255.0);
        row[1] = rng.random_range(1..=3) as f64;
        let e = model.env_of_row(&row);
        let a = rng.random_range(0..NUM_ACTIVITIES);
        let mass: f64 =
            common::joint_table(&model, &row).iter().filter(|(_, aa, ee, _)| *ee == e && *aa == a).map(|t| t.3).sum();
        let got = model.window_log_likelihood(Activity::ALL[a], &row);
        assert!((got - mass.ln()).abs() < 1e-9);
    }
}

/// Rows whose single informative feature depends on (activity, health).
fn em_data<R: Rng>(rng: &mut R, n: usize, hidden: f64) -> Vec<(Vec<f64>, Activity, Health)> {
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..NUM_ACTIVITIES);
            let h = rng.random_range(0..2);
            let mut v = random_row(rng);
            v[0] = rng.random_range(0.0..255.0);
            v[1] = rng.random_range(1..=3) as f64;
            v[2] = rng.random_range(0..2) as f64;
            for c in 3..23 {
                v[c] = rng.random();
            }
            v[column_of(16)] = a as f64 + 2.0 * h as f64 + rng.random_range(-0.8..0.8);
            v[column_of(40)] = h as f64 - a as f64 * 0.5 + rng.random_range(-1.0..1.0);
            let act = if rng.random::<f64>() < hidden { Activity::Unknown } else { Activity::ALL[a] };
            (v, act, [Health::Normal, Health::Weak][h])
        })
        .collect()
}

fn train_rows(data: &[(Vec<f64>, Activity, Health)]) -> Vec<TrainRow<'_>> {
    data.iter().map(|(v, a, h)| TrainRow { values: v, activity: *a, health: *h }).collect()
}

#[test]
fn em_objective_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let columns = [column_of(16), column_of(40), column_of(5)];
    for run in 0..100 {
        let n = rng.random_range(30..120);
        let hidden = rng.random_range(0.1..0.9);
        let data = em_data(&mut rng, n, hidden);
        let fit = fit_em(&train_rows(&data), &columns, EmOptions { max_iter: 60, tol: 1e-10 }).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] - w[0] >= -1e-9, "run {run}: objective fell from {} to {}", w[0], w[1]);
        }
        fit.model.validate().unwrap();
    }
}

#[test]
fn em_without_hidden_labels_equals_ml() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let columns = [column_of(16), column_of(40)];
    for _ in 0..20 {
        let data = em_data(&mut rng, 80, 0.0);
        let rows = train_rows(&data);
        let ml = fit_ml(&rows, &columns).unwrap();
        let em = fit_em(&rows, &columns, EmOptions::default()).unwrap();
        assert_eq!(em.model, ml);
        assert!(em.converged);
    }
}

#[test]
fn ml_model_round_trips_through_json() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let data = em_data(&mut rng, 60, 0.0);
    let model = fit_ml(&train_rows(&data), &[column_of(16)]).unwrap();
    let back = frailwatch_core::bayes_net::BayesNetModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
}
