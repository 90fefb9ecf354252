//! Acceptance suite: ten criteria covering dataset parsing, gradient
//! correctness, log-concavity, the corner oracle, no-op identities,
//! query-only parity, horizon and stochasticity trends, group
//! directionality, and byte determinism. Each test is one criterion and
//! prints one PASS/SKIP line with the measured numbers.
//!
//! The MovieLens census check needs the real ratings file and is gated on
//! the RECAUDIT_ML1M environment variable; everything else runs on
//! deterministic synthetic corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use recaudit::config::{ExperimentConfig, ExperimentKind, RawSettings};
use recaudit::csv_out::{rows_to_csv, summarize, summary_to_csv, ResultRow};
use recaudit::harness::run_on_dataset;
use recaudit::synth::{generate, SynthSpec};
use recaudit_core::audit::{
    baseline_reachability, run_audit, AuditData, AuditSpec, DistanceKind, EditedItemSpec,
    FutureReachObjective, FutureStabObjective, MetricKind, PastReachObjective, PastStabObjective,
};
use recaudit_core::dataset::{parse_movielens, Dataset};
use recaudit_core::mf::{train_mf, MfConfig, MfModel};
use recaudit_core::optim::{
    analytic_gradient_fn, extreme_point_oracle, finite_difference_gradient,
    projected_gradient_ascent, Objective, OptimizerConfig,
};
use recaudit_core::policy::RecPolicy;

// ---- shared fixtures ------------------------------------------------------

/// Desk-scale corpus shared by the trend criteria: 300 users, 400 items.
fn desk_data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| generate(&SynthSpec::default()).expect("desk corpus generates"))
}

/// Small corpus for the exact-property criteria.
fn tiny_data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        generate(&SynthSpec {
            users: 24,
            items: 100,
            seed: 3,
        })
        .expect("tiny corpus generates")
    })
}

fn desk_cfg(kind: ExperimentKind, adjust: impl FnOnce(&mut RawSettings)) -> ExperimentConfig {
    let mut raw = RawSettings {
        data: Some(PathBuf::from("unused.dat")),
        dim: Some(16),
        mf_epochs: Some(12),
        seed: Some(7),
        ..RawSettings::default()
    };
    adjust(&mut raw);
    ExperimentConfig::resolve(kind, raw, RawSettings::default()).expect("config resolves")
}

/// Mean and count of `lift_or_instability` over the rows a predicate keeps.
fn stats_of(rows: &[ResultRow], pred: impl Fn(&ResultRow) -> bool) -> (f64, usize) {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| pred(r))
        .map(|r| r.lift_or_instability)
        .collect();
    assert!(!vals.is_empty(), "no rows matched the predicate");
    (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn distinct_items(rng: &mut ChaCha8Rng, n_items: usize, amount: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n_items, amount).into_vec()
}

fn rand_theta(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(1.3..4.7)).collect()
}

/// Exhaustive maximum of an objective over per-slot candidate value lists.
fn grid_max(obj: &dyn Objective, slots: &[Vec<f64>]) -> f64 {
    let k = slots.len();
    let mut idx = vec![0usize; k];
    let mut theta = vec![0.0; k];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (t, &i) in idx.iter().enumerate() {
            theta[t] = slots[t][i];
        }
        best = best.max(obj.value(&theta));
        let mut t = 0;
        loop {
            idx[t] += 1;
            if idx[t] < slots[t].len() {
                break;
            }
            idx[t] = 0;
            t += 1;
            if t == k {
                return best;
            }
        }
    }
}

// ---- random objective instances -------------------------------------------

const GRAD_USERS: usize = 20;
const GRAD_ITEMS: usize = 30;
const GRAD_DIM: usize = 4;

struct PastReachInstance {
    obj: PastReachObjective,
    k: usize,
}

fn rand_past_reach(rng: &mut ChaCha8Rng) -> PastReachInstance {
    let q = rand_matrix(rng, GRAD_ITEMS, GRAD_DIM);
    let len = rng.random_range(5..=15);
    let k = rng.random_range(1..=3);
    let mut items = distinct_items(rng, GRAD_ITEMS, len + 1);
    let target = items.pop().unwrap();
    let trajectory: Vec<(usize, f64)> = items
        .iter()
        .map(|&m| (m, rng.random_range(1.0..5.0)))
        .collect();
    let beta = rng.random_range(0.5..3.0);
    let obj = PastReachObjective::new(&q, &trajectory, k, target, beta, 0.1)
        .expect("random instance is valid");
    PastReachInstance { obj, k }
}

/// Past-stability instance whose edited items are all unrated by the
/// audited user, so every edit actually moves the distribution.
fn rand_past_stab(rng: &mut ChaCha8Rng, distance: DistanceKind) -> (PastStabObjective, usize) {
    let p = rand_matrix(rng, GRAD_USERS, GRAD_DIM);
    let q = rand_matrix(rng, GRAD_ITEMS, GRAD_DIM);
    let k = rng.random_range(1..=3);
    let rated_len = rng.random_range(5..=10);
    let picked = distinct_items(rng, GRAD_ITEMS, rated_len + k);
    let audited_rated = picked[..rated_len].to_vec();
    let edited: Vec<EditedItemSpec> = picked[rated_len..]
        .iter()
        .map(|&item| {
            let n_raters = rng.random_range(0..=5);
            let raters = (0..n_raters)
                .map(|_| (rng.random_range(2..GRAD_USERS), rng.random_range(1.0..5.0)))
                .collect();
            EditedItemSpec {
                item,
                raters,
                factual_rating: rng.random_range(1.0..5.0),
            }
        })
        .collect();
    let beta = rng.random_range(0.5..3.0);
    let obj = PastStabObjective::new(&p, &q, 0, &audited_rated, 1, &edited, beta, distance, 0.5)
        .expect("random instance is valid");
    (obj, k)
}

fn toy_model_from(rng: &mut ChaCha8Rng) -> MfModel {
    let p = rand_matrix(rng, GRAD_USERS, GRAD_DIM);
    let q = rand_matrix(rng, GRAD_ITEMS, GRAD_DIM);
    let cfg = MfConfig {
        dim: GRAD_DIM,
        ..MfConfig::default()
    };
    let user_ids: Vec<u32> = (1..=GRAD_USERS as u32).collect();
    let item_ids: Vec<u32> = (1..=GRAD_ITEMS as u32).collect();
    MfModel::from_parts(p, q, cfg, user_ids, item_ids).expect("random model is valid")
}

/// Picks a finite-difference probe point with clear objective signal,
/// keeping it away from the cone point where a distance objective's higher
/// derivatives blow up. An instance whose value stays small even at the box
/// corners has correspondingly small curvature everywhere, so a plain
/// random draw is already safe there.
fn fd_probe_point(rng: &mut ChaCha8Rng, obj: &dyn Objective) -> Vec<f64> {
    for _ in 0..60 {
        let theta = rand_theta(rng, obj.dim());
        if obj.value(&theta) > 1e-2 {
            return theta;
        }
    }
    for corner in [5.0, 1.0] {
        let theta = vec![corner; obj.dim()];
        if obj.value(&theta) > 1e-2 {
            return theta;
        }
    }
    rand_theta(rng, obj.dim())
}

fn assert_grad_close(analytic: &[f64], fd: &[f64], what: &str) {
    const TOL: f64 = 1e-4;
    // Coordinates where both sides vanish already agree; dividing by a
    // near-zero magnitude would only amplify finite-difference noise.
    const BOTH_ZERO: f64 = 1e-8;
    for (i, (a, f)) in analytic.iter().zip(fd).enumerate() {
        if a.abs() < BOTH_ZERO && f.abs() < BOTH_ZERO {
            continue;
        }
        let rel = (a - f).abs() / a.abs().max(f.abs());
        assert!(
            rel < TOL,
            "{what} coordinate {i}: analytic {a} vs finite-difference {f} (relative error {rel:.3e})"
        );
    }
}

// ---- criterion 1: dataset census ------------------------------------------

#[test]
fn c01_movielens_census_matches_expected_counts() {
    match std::env::var_os("RECAUDIT_ML1M") {
        Some(path) => {
            let ds = recaudit::io::load_dataset(Path::new(&path)).expect("ratings file parses");
            let s = ds.summary_stats();
            assert_eq!(s.n_users, 6040, "user count");
            assert_eq!(s.n_items, 3706, "item count");
            assert_eq!(s.n_ratings, 1_000_209, "rating count");
            assert!(
                (s.density_pct - 4.47).abs() <= 0.005,
                "density {:.4}% outside 4.47% +/- 0.005",
                s.density_pct
            );
            println!(
                "PASS c01: census 6040 users / 3706 items / 1000209 ratings, density {:.4}%",
                s.density_pct
            );
        }
        None => {
            let ds = desk_data();
            let back = parse_movielens(&ds.to_movielens_lines()).expect("round trip parses");
            let (a, b) = (ds.summary_stats(), back.summary_stats());
            assert_eq!(a.n_users, b.n_users);
            assert_eq!(a.n_items, b.n_items);
            assert_eq!(a.n_ratings, b.n_ratings);
            println!(
                "SKIP c01: RECAUDIT_ML1M unset; parser verified on a {}x{} synthetic corpus round trip",
                a.n_users, a.n_items
            );
        }
    }
}

// ---- criterion 2: gradient correctness -------------------------------------

#[test]
fn c02_analytic_gradients_match_central_differences() {
    const INSTANCES: usize = 50;
    const H: f64 = 1e-5;

    let mut rng = ChaCha8Rng::seed_from_u64(4201);
    for inst in 0..INSTANCES {
        let pr = rand_past_reach(&mut rng);
        let theta = rand_theta(&mut rng, pr.k);
        let g = pr.obj.gradient(&theta).unwrap();
        let fd = finite_difference_gradient(&pr.obj, &theta, H).unwrap();
        assert_grad_close(&g, &fd, &format!("past-reach instance {inst}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4202);
    for inst in 0..INSTANCES {
        let q = rand_matrix(&mut rng, GRAD_ITEMS, GRAD_DIM);
        let p0 = rand_matrix(&mut rng, GRAD_DIM, 1).column(0).into_owned();
        let len = rng.random_range(5..=10);
        let k = rng.random_range(1..=3);
        let mut items = distinct_items(&mut rng, GRAD_ITEMS, len + 1);
        let target = items.pop().unwrap();
        let history: Vec<(usize, f64)> = items
            .iter()
            .map(|&m| (m, rng.random_range(1.0..5.0)))
            .collect();
        let beta = rng.random_range(0.5..3.0);
        let obj = FutureReachObjective::new(&q, p0, &history, k, target, beta, 0.1, 1)
            .expect("random instance is valid");
        let theta = rand_theta(&mut rng, obj.dim());
        let g = obj.gradient(&theta).unwrap();
        let fd = finite_difference_gradient(&obj, &theta, H).unwrap();
        assert_grad_close(&g, &fd, &format!("future-reach instance {inst}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4203);
    for inst in 0..INSTANCES {
        let distance = if inst % 2 == 0 {
            DistanceKind::L2
        } else {
            DistanceKind::Hellinger
        };
        let (obj, _) = rand_past_stab(&mut rng, distance);
        let theta = fd_probe_point(&mut rng, &obj);
        let g = obj.gradient(&theta).unwrap();
        let fd = finite_difference_gradient(&obj, &theta, H).unwrap();
        assert_grad_close(&g, &fd, &format!("past-stab instance {inst}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4204);
    for inst in 0..INSTANCES {
        let model = toy_model_from(&mut rng);
        let len_a = rng.random_range(5..=10);
        let audited_rated = distinct_items(&mut rng, GRAD_ITEMS, len_a);
        let len_b = rng.random_range(5..=10);
        let adversary_rated = distinct_items(&mut rng, GRAD_ITEMS, len_b);
        let mut raters: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for m in distinct_items(&mut rng, GRAD_ITEMS, 15) {
            let n_raters = rng.random_range(0..=4);
            raters.insert(
                m,
                (0..n_raters)
                    .map(|_| (rng.random_range(2..GRAD_USERS), rng.random_range(1.0..5.0)))
                    .collect(),
            );
        }
        let k = rng.random_range(1..=3);
        let beta = rng.random_range(0.5..3.0);
        let distance = if inst % 2 == 0 {
            DistanceKind::Hellinger
        } else {
            DistanceKind::L2
        };
        let obj = FutureStabObjective::new(
            &model,
            0,
            &audited_rated,
            1,
            &adversary_rated,
            raters,
            k,
            beta,
            distance,
            0.5,
            1,
        )
        .expect("random instance is valid");
        let theta = fd_probe_point(&mut rng, &obj);
        let g = obj.gradient(&theta).unwrap();
        let fd = finite_difference_gradient(&obj, &theta, H).unwrap();
        assert_grad_close(&g, &fd, &format!("future-stab instance {inst}"));
    }

    println!("PASS c02: analytic gradients match central differences on {INSTANCES} instances per metric");
}

// ---- criterion 3: log-concavity --------------------------------------------

#[test]
fn c03_reach_objectives_are_log_concave_at_midpoints() {
    const PAIRS: usize = 200;
    const TOL: f64 = 1e-8;
    let mut checked = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(4301);
    for _ in 0..10 {
        let pr = rand_past_reach(&mut rng);
        for _ in 0..PAIRS {
            let a: Vec<f64> = (0..pr.k).map(|_| rng.random_range(1.0..5.0)).collect();
            let b: Vec<f64> = (0..pr.k).map(|_| rng.random_range(1.0..5.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = pr.obj.value(&mid).ln();
            let rhs = 0.5 * (pr.obj.value(&a).ln() + pr.obj.value(&b).ln());
            assert!(
                lhs >= rhs - TOL,
                "past-reach midpoint violation: log f(mid) {lhs} < {rhs}"
            );
            checked += 1;
        }
    }

    // A one-step future objective picks its item before reading any rating,
    // so the final probability is a softmax of an affine map of the table
    // and the same midpoint property must hold.
    let mut rng = ChaCha8Rng::seed_from_u64(4302);
    let mut done = 0;
    while done < 5 {
        let q = rand_matrix(&mut rng, GRAD_ITEMS, GRAD_DIM);
        let p0 = rand_matrix(&mut rng, GRAD_DIM, 1).column(0).into_owned();
        let len = rng.random_range(5..=10);
        let mut items = distinct_items(&mut rng, GRAD_ITEMS, len + 1);
        let target = items.pop().unwrap();
        let history: Vec<(usize, f64)> = items
            .iter()
            .map(|&m| (m, rng.random_range(1.0..5.0)))
            .collect();
        let beta = rng.random_range(0.5..3.0);
        let obj = FutureReachObjective::new(&q, p0, &history, 1, target, beta, 0.1, 1)
            .expect("random instance is valid");
        // A zero value means the rollout consumed the target, which is a
        // parameter-independent event; logs need a positive instance.
        if obj.value(&vec![3.0; obj.dim()]) == 0.0 {
            continue;
        }
        for _ in 0..PAIRS {
            let a = rand_theta(&mut rng, obj.dim());
            let b = rand_theta(&mut rng, obj.dim());
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = obj.value(&mid).ln();
            let rhs = 0.5 * (obj.value(&a).ln() + obj.value(&b).ln());
            assert!(
                lhs >= rhs - TOL,
                "future-reach midpoint violation: log f(mid) {lhs} < {rhs}"
            );
            checked += 1;
        }
        done += 1;
    }

    println!("PASS c03: log-concavity held at {checked} random midpoints");
}

// ---- criterion 4: corner oracle --------------------------------------------

#[test]
fn c04_corner_oracle_dominates_grid_and_gradient_ascent() {
    const INSTANCES: usize = 20;
    let grid: Vec<f64> = (0..17).map(|i| 1.0 + 0.25 * i as f64).collect();
    let ga_cfg = OptimizerConfig {
        epochs: 100,
        ..OptimizerConfig::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(4401);
    for inst in 0..INSTANCES {
        let (obj, k) = rand_past_stab(&mut rng, DistanceKind::L2);
        let oracle = extreme_point_oracle(&obj, 1.0, 5.0).unwrap();
        let slots: Vec<Vec<f64>> = (0..k).map(|_| grid.clone()).collect();
        let dense = grid_max(&obj, &slots);
        let ga = projected_gradient_ascent(
            &obj,
            analytic_gradient_fn(&obj),
            obj.factual_ratings(),
            &ga_cfg,
        )
        .unwrap();
        assert!(
            oracle.value >= dense - 1e-9,
            "instance {inst}: oracle {} below dense grid {dense}",
            oracle.value
        );
        assert!(
            oracle.value >= ga.value - 1e-9,
            "instance {inst}: oracle {} below gradient ascent {}",
            oracle.value,
            ga.value
        );
    }

    println!("PASS c04: corner oracle dominated a 17-point grid and gradient ascent on {INSTANCES} instances");
}

// ---- criterion 5: no-op identities ------------------------------------------

#[test]
fn c05_factual_edits_yield_unit_lift_and_zero_instability() {
    const TOL: f64 = 1e-9;
    let ds = tiny_data();
    let mf = MfConfig {
        dim: 4,
        epochs: 10,
        reg: 0.1,
        seed: 1,
        ..MfConfig::default()
    };
    let split = ds.holdout_split(1).unwrap();
    let split_model = train_mf(&split.train, &mf).unwrap();
    let full_model = train_mf(ds, &mf).unwrap();
    let frozen = OptimizerConfig {
        epochs: 0,
        ..OptimizerConfig::default()
    };
    let spec = |metric, user, counterpart| AuditSpec {
        metric,
        user,
        counterpart,
        k: 1,
        beta: 1.0,
        distance: DistanceKind::L2,
        num_samples: 1,
        ridge: 0.1,
        optimizer: frozen,
    };
    let data = AuditData::with_split(ds, &split);

    // Past reachability: a zero-epoch audit stays at the factual ratings.
    let mut reach_checked = 0;
    'reach: for &u in ds.user_ids() {
        for &m in split_model.item_ids() {
            if ds.has_rated(u, m) {
                continue;
            }
            let Ok(res) = run_audit(&spec(MetricKind::PastReach, u, m), &split_model, &data)
            else {
                continue;
            };
            let lift = res.lift.expect("positive baseline");
            assert!((lift - 1.0).abs() <= TOL, "past-reach lift {lift} at factual");
            reach_checked += 1;
            if reach_checked >= 5 {
                break 'reach;
            }
        }
    }
    assert!(reach_checked >= 5, "too few feasible past-reach audits");

    // Past stability: the reference distribution is computed through the
    // same rebuilt-vector path, so the factual point is an exact zero.
    let mut stab_checked = 0;
    'stab: for &u in ds.user_ids() {
        for &v in ds.user_ids() {
            if u == v {
                continue;
            }
            let Ok(res) = run_audit(&spec(MetricKind::PastStab, u, v), &split_model, &data)
            else {
                continue;
            };
            assert!(
                res.optimized.abs() <= TOL,
                "past-stab instability {} at factual",
                res.optimized
            );
            stab_checked += 1;
            if stab_checked >= 5 {
                break 'stab;
            }
        }
    }
    assert!(stab_checked >= 5, "too few feasible past-stab audits");

    // Future reachability: a zero-length rollout leaves the trained
    // distribution untouched, so the objective equals the baseline.
    let mut future_checked = 0;
    'future: for &u in ds.user_ids() {
        for &m in full_model.item_ids() {
            if ds.has_rated(u, m) {
                continue;
            }
            let i = full_model.user_idx(u).unwrap();
            let j = full_model.item_idx(m).unwrap();
            let history: Vec<(usize, f64)> = ds
                .user_history(u)
                .map(|it| (full_model.item_idx(it.item_id).unwrap(), it.rating))
                .collect();
            let obj = FutureReachObjective::new(
                &full_model.q,
                full_model.p.row(i).transpose(),
                &history,
                0,
                j,
                1.0,
                0.1,
                1,
            )
            .unwrap();
            let base =
                baseline_reachability(&full_model, ds, &RecPolicy::Softmax { beta: 1.0 }, u, m)
                    .unwrap();
            let lift = obj.value(&[]) / base;
            assert!((lift - 1.0).abs() <= TOL, "future-reach lift {lift} with no steps");
            future_checked += 1;
            if future_checked >= 5 {
                break 'future;
            }
        }
    }
    assert!(future_checked >= 5, "too few feasible future-reach checks");

    // Future stability: with no steps the counterpart changes nothing.
    let users = ds.user_ids();
    for pair in 0..5 {
        let (u, v) = (users[pair], users[pair + 5]);
        let rated = |id: u32| -> Vec<usize> {
            ds.user_history(id)
                .map(|it| full_model.item_idx(it.item_id).unwrap())
                .collect()
        };
        for distance in [DistanceKind::L2, DistanceKind::Hellinger] {
            let obj = FutureStabObjective::new(
                &full_model,
                full_model.user_idx(u).unwrap(),
                &rated(u),
                full_model.user_idx(v).unwrap(),
                &rated(v),
                BTreeMap::new(),
                0,
                1.0,
                distance,
                0.1,
                1,
            )
            .unwrap();
            let value = obj.value(&[]);
            assert!(value.abs() <= TOL, "future-stab instability {value} with no steps");
        }
    }

    println!("PASS c05: factual edits gave lift 1 and instability 0 across all four metrics");
}

// ---- criterion 6: query-only parity -----------------------------------------

#[test]
fn c06_query_only_optimizer_matches_white_box_results() {
    let ds = desk_data();

    // Stability starts at the factual ratings, where the distance objective
    // has a cone point. A two-sided difference straddling the cone cancels to
    // a useless curvature-scale estimate, so eps must sit low enough that the
    // estimate falls under the optimizer's stall tolerance and triggers the
    // same axis probing the analytic zero gradient gets. The box-spanning
    // step size lets that probe reach both rating extremes, and the epoch
    // budget covers full convergence for pairs that escape by small steps.
    let cfg = desk_cfg(ExperimentKind::OptimizerCompare, |r| {
        r.metric = Some("past-stab".into());
        r.user_frac = Some(0.05);
        r.lr = Some(4.0);
        r.eps = Some(3e-7);
        r.epochs = Some(2000);
    });
    let report = run_on_dataset(&cfg, ds).unwrap();
    let (gd_mean, gd_n) = stats_of(&report.rows, |r| r.experiment == "optimizer-compare:gd");
    let (zo_mean, zo_n) = stats_of(&report.rows, |r| r.experiment == "optimizer-compare:zo");
    assert!(gd_n >= 20, "need at least 20 stability audits, got {gd_n}");
    assert_eq!(gd_n, zo_n, "arms must share pairs");
    let gap = (zo_mean - gd_mean).abs();
    assert!(
        gap <= 0.05 * gd_mean,
        "query-only mean {zo_mean:.5} vs white-box mean {gd_mean:.5}: gap {:.2}% exceeds 5%",
        100.0 * gap / gd_mean
    );

    let cfg = desk_cfg(ExperimentKind::OptimizerCompare, |r| {
        r.metric = Some("past-reach".into());
        r.user_frac = Some(0.05);
        r.item_frac = Some(0.03);
    });
    let report = run_on_dataset(&cfg, ds).unwrap();
    let (zo_lift, n_lift) = stats_of(&report.rows, |r| r.experiment == "optimizer-compare:zo");
    assert!(
        zo_lift > 1.0,
        "query-only mean lift {zo_lift:.4} over {n_lift} audits does not clear 1"
    );

    println!(
        "PASS c06: query-only instability {zo_mean:.5} within 5% of white-box {gd_mean:.5} ({gd_n} audits); query-only mean lift {zo_lift:.3} > 1 ({n_lift} audits)"
    );
}

// ---- criterion 7: horizon monotonicity --------------------------------------

#[test]
fn c07_longer_horizons_reach_further_and_shift_more() {
    // Exact part: per-slot grids augmented with the factual rating embed
    // every horizon-k optimum into horizon k+1, so the exact optima must be
    // non-decreasing in k.
    let tiny = tiny_data();
    let mf = MfConfig {
        dim: 4,
        epochs: 10,
        reg: 0.1,
        seed: 1,
        ..MfConfig::default()
    };
    let model = train_mf(tiny, &mf).unwrap();
    let user = tiny.user_ids()[20];
    let trajectory: Vec<(usize, f64)> = tiny
        .user_history(user)
        .map(|it| (model.item_idx(it.item_id).unwrap(), it.rating))
        .collect();
    assert!(trajectory.len() >= 4, "fixture user history too short");
    let rated: Vec<usize> = trajectory.iter().map(|&(m, _)| m).collect();
    let target = (0..model.n_items())
        .find(|m| !rated.contains(m))
        .expect("fixture leaves an item unrated");
    let base_grid: Vec<f64> = (0..9).map(|i| 1.0 + 0.5 * i as f64).collect();
    let mut optima = Vec::new();
    for k in 1..=3 {
        let obj = PastReachObjective::new(&model.q, &trajectory, k, target, 2.0, 0.1).unwrap();
        let slots: Vec<Vec<f64>> = obj
            .factual_ratings()
            .iter()
            .map(|&f| {
                let mut s = base_grid.clone();
                if !s.contains(&f) {
                    s.push(f);
                }
                s
            })
            .collect();
        optima.push(grid_max(&obj, &slots));
    }
    for w in optima.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-9,
            "exact grid optima decreased with horizon: {optima:?}"
        );
    }

    // Directional part at desk scale: more editable ratings buy more lift
    // and more movement on average.
    let ds = desk_data();
    let cfg = desk_cfg(ExperimentKind::ReachSweep, |r| {
        r.k = Some(vec![1, 5]);
        r.user_frac = Some(0.05);
        r.item_frac = Some(0.03);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let (lift_k1, n1) = stats_of(&rows, |r| r.k == 1);
    let (lift_k5, n5) = stats_of(&rows, |r| r.k == 5);
    assert!(
        lift_k5 > lift_k1,
        "mean lift k=5 {lift_k5:.4} ({n5} rows) not above k=1 {lift_k1:.4} ({n1} rows)"
    );

    let cfg = desk_cfg(ExperimentKind::StabSweep, |r| {
        r.k = Some(vec![1, 5]);
        r.user_frac = Some(0.06);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let (inst_k1, _) = stats_of(&rows, |r| r.k == 1);
    let (inst_k5, _) = stats_of(&rows, |r| r.k == 5);
    assert!(
        inst_k5 > inst_k1,
        "mean instability k=5 {inst_k5:.4} not above k=1 {inst_k1:.4}"
    );

    println!(
        "PASS c07: exact optima {optima:?} non-decreasing; lift {lift_k1:.3} -> {lift_k5:.3}, instability {inst_k1:.4} -> {inst_k5:.4} from k=1 to k=5"
    );
}

// ---- criterion 8: stochasticity trends ---------------------------------------

#[test]
fn c08_sharper_policies_raise_lift_and_concentrate_instability() {
    let ds = desk_data();

    let cfg = desk_cfg(ExperimentKind::ReachSweep, |r| {
        r.beta = Some(vec![0.8, 5.0]);
        r.user_frac = Some(0.05);
        r.item_frac = Some(0.03);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let (lift_soft, _) = stats_of(&rows, |r| r.beta == 0.8);
    let (lift_sharp, _) = stats_of(&rows, |r| r.beta == 5.0);
    assert!(
        lift_sharp > lift_soft,
        "mean lift at beta 5 {lift_sharp:.4} not above beta 0.8 {lift_soft:.4}"
    );

    let grid = [0.2, 0.8, 1.5, 2.5, 4.0, 5.0, 6.0];
    let cfg = desk_cfg(ExperimentKind::BetaSweep, |r| {
        r.beta = Some(grid.to_vec());
        r.distance = Some("hellinger".into());
        r.user_frac = Some(0.05);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let means: Vec<f64> = grid
        .iter()
        .map(|&b| stats_of(&rows, |r| r.beta == b).0)
        .collect();
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(
        inversions <= 1,
        "instability means {means:?} rise {inversions} times along the beta grid"
    );

    let low_mass = |b: f64| {
        let (total, low) = rows.iter().filter(|r| r.beta == b).fold((0, 0), |(t, l), r| {
            (t + 1, l + usize::from(r.lift_or_instability <= 0.1))
        });
        assert!(total > 0, "no rows at beta {b}");
        low as f64 / total as f64
    };
    let mass_sharp = low_mass(5.0);
    let mass_soft = low_mass(0.8);
    assert!(
        mass_sharp > mass_soft,
        "share of instability in [0, 0.1] at beta 5 ({mass_sharp:.3}) not above beta 0.8 ({mass_soft:.3})"
    );

    println!(
        "PASS c08: lift {lift_soft:.3} -> {lift_sharp:.3} from beta 0.8 to 5; instability means {means:?} with {inversions} inversion(s); low-band mass {mass_soft:.3} -> {mass_sharp:.3}"
    );
}

// ---- criterion 9: group directionality ---------------------------------------

/// 95% interval endpoints for one summary group, when the count allows one.
fn interval_of(rows: &[ResultRow], experiment: &str) -> Option<(f64, f64)> {
    summarize(rows)
        .into_iter()
        .find(|s| s.experiment == experiment)
        .and_then(|s| Some((s.ci_lo?, s.ci_hi?)))
}

#[test]
fn c09_popular_targets_and_active_adversaries_gain_more() {
    let ds = desk_data();

    let cfg = desk_cfg(ExperimentKind::GroupReach, |r| {
        r.user_frac = Some(0.04);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let (pop, n_pop) = stats_of(&rows, |r| r.experiment == "group-reach:popular");
    let (mid, n_mid) = stats_of(&rows, |r| r.experiment == "group-reach:intermediate");
    assert!(
        pop > mid,
        "popular mean lift {pop:.4} ({n_pop} rows) not above intermediate {mid:.4} ({n_mid} rows)"
    );
    let reach_ci_split = match (
        interval_of(&rows, "group-reach:popular"),
        interval_of(&rows, "group-reach:intermediate"),
    ) {
        (Some((lo, _)), Some((_, hi))) => lo > hi,
        _ => false,
    };

    let cfg = desk_cfg(ExperimentKind::GroupStab, |r| {
        r.user_frac = Some(0.04);
    });
    let rows = run_on_dataset(&cfg, ds).unwrap().rows;
    let (act, n_act) = stats_of(&rows, |r| r.experiment == "group-stab:active");
    let (calm, n_calm) = stats_of(&rows, |r| r.experiment == "group-stab:intermediate");
    assert!(
        act > calm,
        "active mean instability {act:.4} ({n_act} rows) not above intermediate {calm:.4} ({n_calm} rows)"
    );
    let stab_ci_split = match (
        interval_of(&rows, "group-stab:active"),
        interval_of(&rows, "group-stab:intermediate"),
    ) {
        (Some((lo, _)), Some((_, hi))) => lo > hi,
        _ => false,
    };

    println!(
        "PASS c09: popular lift {pop:.3} > intermediate {mid:.3} (CIs split: {reach_ci_split}); active instability {act:.4} > intermediate {calm:.4} (CIs split: {stab_ci_split})"
    );
}

// ---- criterion 10: determinism -----------------------------------------------

#[test]
fn c10_reruns_reproduce_identical_csv() {
    let ds = tiny_data();
    let cfg = desk_cfg(ExperimentKind::StabSweep, |r| {
        r.k = Some(vec![1, 2]);
        r.beta = Some(vec![1.0, 2.0]);
        r.user_frac = Some(0.5);
        r.dim = Some(3);
        r.mf_epochs = Some(6);
        r.epochs = Some(10);
        r.seed = Some(9);
    });
    let first = run_on_dataset(&cfg, ds).unwrap();
    let second = run_on_dataset(&cfg, ds).unwrap();
    assert!(!first.rows.is_empty());
    let rows_a = rows_to_csv(&first.rows).unwrap();
    let rows_b = rows_to_csv(&second.rows).unwrap();
    assert_eq!(rows_a, rows_b, "row CSV differs between reruns");
    assert_eq!(
        summary_to_csv(&summarize(&first.rows)),
        summary_to_csv(&summarize(&second.rows)),
        "summary CSV differs between reruns"
    );

    let cfg = desk_cfg(ExperimentKind::ReachSweep, |r| {
        r.user_frac = Some(0.3);
        r.item_frac = Some(0.1);
        r.dim = Some(3);
        r.mf_epochs = Some(6);
        r.epochs = Some(10);
        r.seed = Some(9);
    });
    let first = run_on_dataset(&cfg, ds).unwrap();
    let second = run_on_dataset(&cfg, ds).unwrap();
    assert!(!first.rows.is_empty());
    assert_eq!(
        rows_to_csv(&first.rows).unwrap(),
        rows_to_csv(&second.rows).unwrap(),
        "reach row CSV differs between reruns"
    );

    println!("PASS c10: reruns reproduced byte-identical rows and summary CSV");
}
