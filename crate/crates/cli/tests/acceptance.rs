//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use keyvote::experiment::{run_experiment, run_sweep, Algorithm, ExperimentConfig, SweepAxis, SweepConfig};
use keyvote::fusion::{
    cross_attention, cross_attention_weights, fuse_bidirectional, fusion_block, softmax_rows, split_fused, AttentionWeights,
    FeatureSequence, FusionBlockWeights, TransformerLayerWeights,
};
use keyvote::geom::{Point3, RigidTransform, UnitVector3, Vec3, DEFAULT_RANK_TOLERANCE};
use keyvote::losses::{focal_loss, kps_l1_loss, vecf_loss_from_terms, LossConfig};
use keyvote::metrics::{add_metric, add_s_brute_force, add_s_grid, add_s_metric, auc, keypoint_rmse_points, ObjectModel};
use keyvote::posefit::{estimate_pose, fit_rigid_transform, CorrespondenceSet};
use keyvote::report::{summarize, ReportTable};
use keyvote::selftest::oracle_equivalence;
use keyvote::synth::{generate_scene, uniform_rotation, SceneConfig, WeightModel};
use keyvote::voting::vote_all_keypoints;
use keyvote::{Exec, Frame, KeypointSet, PointCloud};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SELFTEST_BUDGET: Duration = Duration::from_secs(30);
const RECOVERY_BUDGET: Duration = Duration::from_secs(5);
const RECOVERY_TOLERANCE_M: f64 = 1e-9;
const BENCH_BUDGET: Duration = Duration::from_secs(120);
const SPEED_RATIO: f64 = 0.5;
const ACCURACY_RATIO: f64 = 1.05;
const FIT_BUDGET: Duration = Duration::from_secs(10);
const FIT_TOLERANCE: f64 = 1e-9;
const METRIC_TOLERANCE: f64 = 1e-12;
const GRADIENT_REL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const STATIONARITY_TOLERANCE: f64 = 1e-10;
const SOFTMAX_TOLERANCE: f64 = 1e-6;
const ATTENTION_TOLERANCE: f64 = 1e-10;
const SWEEP_NOISE_DEG: f64 = 15.0;
const SWEEP_OUTLIERS: f64 = 0.3;
const SWEEP_SEEDS: usize = 20;
const SWEEP_COMPARE_LEVEL: f64 = 0.6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn timed(f: impl FnOnce() -> Verdict, budget: Duration) -> Verdict {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let within = elapsed < budget;
    check(v.pass && within, format!("{}; {:.2} s (budget {} s)", v.detail, elapsed.as_secs_f64(), budget.as_secs()))
}

fn random_vec(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

fn random_pose(rng: &mut impl Rng, spread: f64) -> RigidTransform {
    RigidTransform::new(uniform_rotation(rng), random_vec(rng, spread)).unwrap()
}

fn random_array(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

fn oracle_equivalence_criterion() -> Verdict {
    let checks = oracle_equivalence(100, 0, Exec::Parallel).unwrap();
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let gap = checks.iter().map(|c| c.position_gap_m).fold(0.0, f64::max);
    let excess = checks
        .iter()
        .map(|c| c.closed_form_objective - c.oracle_objective)
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        failed == 0 && checks.len() == 100,
        format!("{} instances, {failed} failed, max position gap {gap:.2e} m, max objective excess {excess:.2e}", checks.len()),
    )
}

fn exact_recovery_criterion() -> Verdict {
    let mut worst_kp = 0.0f64;
    let mut worst_add = 0.0f64;
    for seed in 0..20 {
        let s = generate_scene(&SceneConfig { seed, point_count: 1000, keypoint_count: 8, ..SceneConfig::default() }).unwrap();
        let est: Vec<Point3> = vote_all_keypoints(&s.problem, DEFAULT_RANK_TOLERANCE).unwrap().iter().map(|e| e.position).collect();
        worst_kp = worst_kp.max(keypoint_rmse_points(&est, &s.truth_keypoints_camera.keypoints).unwrap());
        let predicted = KeypointSet::new(est, Frame::Camera);
        let pose = estimate_pose(&predicted, &s.model_keypoints, None).unwrap();
        worst_add = worst_add.max(add_metric(&s.model, &pose, &s.truth_pose).unwrap());
    }
    check(
        worst_kp < RECOVERY_TOLERANCE_M && worst_add < RECOVERY_TOLERANCE_M,
        format!("worst kp RMSE {worst_kp:.2e} m, worst ADD {worst_add:.2e} m (< {RECOVERY_TOLERANCE_M:e})"),
    )
}

fn benchmark_criterion() -> (Verdict, Verdict) {
    let config = ExperimentConfig {
        trials: 20,
        timing_repetitions: 3,
        algorithms: vec![Algorithm::Wvwv, Algorithm::Meanshift],
        scene: SceneConfig {
            point_count: 12_800,
            keypoint_count: 8,
            angular_noise_deg: 5.0,
            outlier_fraction: 0.1,
            weight_model: WeightModel::Oracle,
            ..SceneConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let outcome = run_experiment(&config).unwrap();
    let elapsed = start.elapsed();
    let summary = summarize(&[ReportTable::from_outcome(&outcome)]).unwrap();
    let of = |a| summary.algorithms.iter().find(|s| s.algorithm == a).unwrap();
    let (w, m) = (of(Algorithm::Wvwv), of(Algorithm::Meanshift));
    let (wt, mt) = (w.median_vote_time_ns.unwrap(), m.median_vote_time_ns.unwrap());
    let (we, me) = (w.mean_kp_rmse_m.unwrap(), m.mean_kp_rmse_m.unwrap());
    let within = elapsed < BENCH_BUDGET;
    let runtime = format!("{:.1} s (budget {} s)", elapsed.as_secs_f64(), BENCH_BUDGET.as_secs());
    (
        check(
            wt <= SPEED_RATIO * mt && within,
            format!("median vote time wvwv {:.3} ms vs meanshift {:.3} ms, ratio {:.4} (<= {SPEED_RATIO}); {runtime}", wt / 1e6, mt / 1e6, wt / mt),
        ),
        check(
            we <= ACCURACY_RATIO * me && within,
            format!("mean kp RMSE wvwv {we:.4e} m vs meanshift {me:.4e} m, ratio {:.3} (<= {ACCURACY_RATIO}); {runtime}", we / me),
        ),
    )
}

fn umeyama_criterion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut rot_err, mut trans_err, mut bad_det) = (0.0f64, 0.0f64, 0usize);
    for i in 0..1000 {
        let k = rng.random_range(3..=16);
        let truth = random_pose(&mut rng, 1.0);
        let model: Vec<Point3> = (0..k).map(|_| random_vec(&mut rng, 0.1)).collect();
        let observed: Vec<Point3> = model.iter().map(|p| truth.apply(*p)).collect();
        let fit = fit_rigid_transform(&CorrespondenceSet::unweighted(model.clone(), observed).unwrap()).unwrap();
        rot_err = rot_err.max((*fit.transform.rotation() - *truth.rotation()).max_abs());
        trans_err = trans_err.max((fit.transform.translation() - truth.translation()).norm());
        let axis = i % 3;
        let mirrored: Vec<Point3> = model
            .iter()
            .map(|p| {
                let mut q = *p;
                q[axis] = -q[axis];
                q
            })
            .collect();
        let fit = fit_rigid_transform(&CorrespondenceSet::unweighted(model, mirrored).unwrap()).unwrap();
        if (fit.transform.rotation().determinant() - 1.0).abs() > FIT_TOLERANCE {
            bad_det += 1;
        }
    }
    check(
        rot_err <= FIT_TOLERANCE && trans_err <= FIT_TOLERANCE && bad_det == 0,
        format!("max rotation entry error {rot_err:.2e}, max translation error {trans_err:.2e} m, improper mirrored fits {bad_det}/1000"),
    )
}

fn metric_criterion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = |rng: &mut ChaCha8Rng, n: usize| {
        let pts: Vec<Point3> = (0..n).map(|_| random_vec(rng, 0.1)).collect();
        ObjectModel::new(PointCloud::new(pts).unwrap(), false).unwrap()
    };
    let mut violations = 0;
    for _ in 0..1000 {
        let m = model(&mut rng, 50);
        let (a, b) = (random_pose(&mut rng, 0.2), random_pose(&mut rng, 0.2));
        if add_s_metric(&m, &a, &b).unwrap() > add_metric(&m, &a, &b).unwrap() {
            violations += 1;
        }
    }
    let mut grid_gap = 0.0f64;
    for _ in 0..20 {
        let m = model(&mut rng, 500);
        let (a, b) = (random_pose(&mut rng, 0.05), random_pose(&mut rng, 0.05));
        let brute = add_s_brute_force(&m, &a, &b, Exec::Sequential).unwrap();
        grid_gap = grid_gap.max((add_s_grid(&m, &a, &b, Exec::Parallel).unwrap() - brute).abs());
    }
    let mut auc_gap = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let max = rng.random_range(0.01..0.2);
        let errors: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.2)).collect();
        let closed = errors.iter().map(|e| ((max - e) / max).clamp(0.0, 1.0)).sum::<f64>() / n as f64;
        auc_gap = auc_gap.max((auc(&errors, max).unwrap() - closed).abs());
    }
    let worked = auc(&[0.02, 0.06], 0.10).unwrap();
    check(
        violations == 0 && grid_gap <= METRIC_TOLERANCE && auc_gap <= METRIC_TOLERANCE && worked == 0.6,
        format!(
            "ADD-S > ADD in {violations}/1000, grid vs brute {grid_gap:.2e}, AUC closed-form gap {auc_gap:.2e}, worked example {worked}"
        ),
    )
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= GRADIENT_REL * analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_unit(rng: &mut impl Rng) -> UnitVector3 {
    loop {
        if let Ok(u) = UnitVector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) {
            return u;
        }
    }
}

fn loss_criterion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base = LossConfig::default();
    let (mut focal_bad, mut l1_bad, mut vecf_bad, mut l1_checked) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let cfg = LossConfig { focal_gamma: rng.random_range(0.0..4.0), focal_alpha: rng.random_range(0.05..1.0), ..base };
        let (p, positive) = (rng.random_range(0.01..0.99), rng.random_bool(0.5));
        let (_, g) = focal_loss(p, positive, &cfg).unwrap();
        let fd = (focal_loss(p + FD_STEP, positive, &cfg).unwrap().0 - focal_loss(p - FD_STEP, positive, &cfg).unwrap().0) / (2.0 * FD_STEP);
        focal_bad += usize::from(!close(g, fd));
    }
    while l1_checked < 1000 {
        let (pred, target) = (random_unit(&mut rng), random_unit(&mut rng));
        let d = pred.as_vec() - target.as_vec();
        if (0..3).any(|k| d[k].abs() <= 1e-3) {
            continue;
        }
        l1_checked += 1;
        let (_, g) = kps_l1_loss(pred, target);
        let f = |v: Vec3| {
            let t = v - target.as_vec();
            t.x.abs() + t.y.abs() + t.z.abs()
        };
        for k in 0..3 {
            let mut e = Vec3::ZERO;
            e[k] = FD_STEP;
            let fd = (f(pred.as_vec() + e) - f(pred.as_vec() - e)) / (2.0 * FD_STEP);
            l1_bad += usize::from(!close(g[k], fd));
        }
    }
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let i = rng.random_range(0..n);
        let (_, grads) = vecf_loss_from_terms(&l, &c, &base).unwrap();
        let (mut up, mut down) = (c.clone(), c.clone());
        up[i] += FD_STEP;
        down[i] -= FD_STEP;
        let fd = (vecf_loss_from_terms(&l, &up, &base).unwrap().0 - vecf_loss_from_terms(&l, &down, &base).unwrap().0) / (2.0 * FD_STEP);
        vecf_bad += usize::from(!close(grads[i], fd));
    }
    let mut stationary = 0.0f64;
    for _ in 0..1000 {
        let l = rng.random_range(base.w_balance..4.0);
        let (_, g) = vecf_loss_from_terms(&[l], &[base.w_balance / l], &base).unwrap();
        stationary = stationary.max(g[0].abs());
    }
    check(
        base.w_balance == 0.015 && focal_bad + l1_bad + vecf_bad == 0 && stationary <= STATIONARITY_TOLERANCE,
        format!(
            "gradient mismatches focal {focal_bad}/1000, l1 {l1_bad}/3000, vecf {vecf_bad}/1000; max |dL/dc| at c*=w/l (w={}) {stationary:.2e}",
            base.w_balance
        ),
    )
}

/// Plain-loop pooled-query attention.
fn reference_cross_attention(query_tokens: &[Vec<f64>], kv_tokens: &[Vec<f64>], w: &AttentionWeights) -> Vec<f64> {
    let c = w.channels();
    let dk = w.head_dim();
    let mat = |m: &Array2<f64>, x: &[f64]| -> Vec<f64> { (0..c).map(|j| (0..c).map(|i| x[i] * m[[i, j]]).sum()).collect() };
    let pooled: Vec<f64> = (0..c).map(|j| query_tokens.iter().map(|t| t[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let q = mat(&w.w_q, &pooled);
    let ks: Vec<Vec<f64>> = kv_tokens.iter().map(|t| mat(&w.w_k, t)).collect();
    let vs: Vec<Vec<f64>> = kv_tokens.iter().map(|t| mat(&w.w_v, t)).collect();
    let mut concat = vec![0.0; c];
    for h in 0..w.heads {
        let r = h * dk..(h + 1) * dk;
        let scores: Vec<f64> = ks.iter().map(|k| r.clone().map(|i| q[i] * k[i]).sum::<f64>() / (dk as f64).sqrt()).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for i in r {
            concat[i] = vs.iter().zip(&e).map(|(v, e)| v[i] * e / z).sum();
        }
    }
    mat(&w.w_o, &concat)
}

fn fusion_criterion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_row = 0.0f64;
    for _ in 0..100 {
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let c = heads * rng.random_range(1..5);
        let (n, l) = (rng.random_range(1..30), rng.random_range(1..30));
        let w = AttentionWeights::random(c, heads, 1.0, &mut rng).unwrap();
        let q = FeatureSequence::geometry(random_array(&mut rng, n, c)).unwrap();
        let kv = FeatureSequence::geometry(random_array(&mut rng, l, c) * 10.0).unwrap();
        let mut mats = cross_attention_weights(&q, &kv, &w).unwrap();
        mats.push(softmax_rows(&(random_array(&mut rng, n, l) * 50.0)));
        for m in mats {
            for row in m.rows() {
                worst_row = worst_row.max((row.sum() - 1.0).abs());
            }
        }
    }

    let mut length_ok = true;
    let mut round_trip_ok = true;
    for _ in 0..50 {
        let (h, wd, n, c) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..20), 8);
        let rgb = FeatureSequence::rgb(random_array(&mut rng, h * wd, c), h, wd).unwrap();
        let geo = FeatureSequence::geometry(random_array(&mut rng, n, c)).unwrap();
        let w1 = AttentionWeights::random(c, 2, 1.0, &mut rng).unwrap();
        let w2 = AttentionWeights::random(c, 2, 1.0, &mut rng).unwrap();
        length_ok &= fuse_bidirectional(&rgb, &geo, &w1, &w2).unwrap().len() == h * wd + n;

        let zero1 = w1.with_zero_output();
        let zero2 = w2.with_zero_output();
        let (r, g) = split_fused(&fuse_bidirectional(&rgb, &geo, &zero1, &zero2).unwrap()).unwrap();
        // Splitting flattens the color grid; the block restores it.
        round_trip_ok &= r.data() == rgb.data() && g == geo;
        let weights = FusionBlockWeights {
            geo_to_rgb: zero1,
            rgb_to_geo: zero2,
            layers: vec![
                TransformerLayerWeights::random(c, 2, None, 1.0, &mut rng).unwrap().with_zero_updates(),
                TransformerLayerWeights::random(c, 4, None, 1.0, &mut rng).unwrap().with_zero_updates(),
            ],
        };
        let (r, g) = fusion_block(&rgb, &geo, &weights).unwrap();
        round_trip_ok &= r == rgb && g == geo;
    }

    let kv = array![[0.5, -1.0, 0.25, 2.0], [1.5, 0.0, -0.75, 0.5], [-0.5, 1.0, 1.0, -1.0]];
    let query = array![[0.2, 0.4, -0.6, 0.8], [1.0, -0.2, 0.1, 0.0]];
    let w = AttentionWeights::new(
        array![[1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 0.5], [0.5, 0.0, 0.0, 1.0]],
        array![[0.3, 0.0, -0.2, 0.1], [0.0, 0.7, 0.0, 0.0], [0.4, 0.0, 0.9, -0.3], [0.0, 0.2, 0.0, 0.6]],
        array![[1.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 0.5]],
        array![[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8], [-0.1, -0.2, -0.3, -0.4], [1.0, 0.0, 1.0, 0.0]],
        2,
    )
    .unwrap();
    let rows = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    let expected = reference_cross_attention(&rows(&query), &rows(&kv), &w);
    let got = cross_attention(&FeatureSequence::geometry(query).unwrap(), &FeatureSequence::rgb(kv, 1, 3).unwrap(), &w).unwrap();
    let oracle_gap = got.iter().zip(&expected).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);

    check(
        worst_row <= SOFTMAX_TOLERANCE && length_ok && round_trip_ok && oracle_gap <= ATTENTION_TOLERANCE,
        format!(
            "max |row sum - 1| {worst_row:.2e}, fused length law {}, zero-update round trip exact {}, 3-token oracle gap {oracle_gap:.2e}",
            length_ok, round_trip_ok
        ),
    )
}

fn sweep_means(weight_model: WeightModel) -> Vec<(f64, f64, f64)> {
    let config = ExperimentConfig {
        trials: SWEEP_SEEDS,
        timing_repetitions: 3,
        algorithms: vec![Algorithm::Wvwv],
        benchmark_mode: false,
        scene: SceneConfig {
            angular_noise_deg: SWEEP_NOISE_DEG,
            outlier_fraction: SWEEP_OUTLIERS,
            weight_model,
            ..SceneConfig::default()
        },
        sweep: SweepConfig { axis: SweepAxis::Occlusion, levels: vec![0.0, 0.2, 0.4, 0.6, 0.8] },
        ..ExperimentConfig::default()
    };
    run_sweep(&config)
        .unwrap()
        .iter()
        .map(|lvl| {
            let s = summarize(&[ReportTable::from_outcome(&lvl.outcome)]).unwrap();
            let adds: Vec<f64> = lvl.outcome.reports.iter().filter_map(|r| r.add_m).collect();
            let mean_add = adds.iter().sum::<f64>() / adds.len().max(1) as f64;
            (lvl.level, s.algorithms[0].add_0_1d, mean_add)
        })
        .collect()
}

fn sweep_criterion() -> Verdict {
    let oracle = sweep_means(WeightModel::Oracle);
    let uniform = sweep_means(WeightModel::Uniform);
    let monotone = oracle.windows(2).all(|w| w[1].1 <= w[0].1);
    let at = |v: &[(f64, f64, f64)]| v.iter().find(|l| l.0 == SWEEP_COMPARE_LEVEL).unwrap().1;
    let (wo, wu) = (at(&oracle), at(&uniform));
    let fmt = |v: &[(f64, f64, f64)]| {
        v.iter().map(|(l, acc, add)| format!("{l}:{acc:.2}/{:.1}mm", add * 1e3)).collect::<Vec<_>>().join(" ")
    };
    check(
        monotone && wo >= wu,
        format!(
            "noise {SWEEP_NOISE_DEG} deg, outliers {SWEEP_OUTLIERS}, {SWEEP_SEEDS} seeds; ADD-0.1d/mean ADD oracle [{}] uniform [{}]; non-increasing {monotone}, oracle {wo:.2} >= uniform {wu:.2} at {SWEEP_COMPARE_LEVEL}",
            fmt(&oracle),
            fmt(&uniform)
        ),
    )
}

/// Blanks the two timing columns of every data row.
fn without_times(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() == 8 && !l.starts_with('#') {
                f[5] = "";
                f[6] = "";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism_criterion() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_keyvote");
    let run = |threads: &str| {
        let out = Command::new(bin)
            .args([
                "run",
                "--master_seed=11",
                "--trials=6",
                "--timing_repetitions=3",
                "--benchmark_mode=false",
                "--scene.point_count=3000",
                "--scene.angular_noise_deg=5.0",
                "--scene.outlier_fraction=0.1",
            ])
            .env("KEYVOTE_THREADS", threads)
            .output()
            .expect("spawn keyvote");
        assert!(out.status.success(), "keyvote run failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let (one, four) = (run("1"), run("4"));
    let rows = one.lines().count();
    let identical = without_times(&one) == without_times(&four);
    check(identical && rows > 2, format!("{rows} CSV lines, identical modulo timing columns: {identical}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut report = |name, v: Verdict| {
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((name, v));
    };
    report("1 oracle equivalence", timed(oracle_equivalence_criterion, SELFTEST_BUDGET));
    report("2 exact recovery", timed(exact_recovery_criterion, RECOVERY_BUDGET));
    let (speed, accuracy) = benchmark_criterion();
    report("3a voting speed vs meanshift", speed);
    report("3b keypoint accuracy vs meanshift", accuracy);
    report("4 rigid fit correctness", timed(umeyama_criterion, FIT_BUDGET));
    report("5 metric identities", metric_criterion());
    report("6 loss gradients", loss_criterion());
    report("7 fusion invariants", fusion_criterion());
    report("8 occlusion sweep", sweep_criterion());
    report("9 thread-count determinism", determinism_criterion());
    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
