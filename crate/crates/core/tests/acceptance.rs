//! Acceptance criteria 1-9. Runs without the libtest harness so that one
//! PASS/FAIL line per criterion is always printed. Set
//! `CELLSTREAM_ACCEPTANCE=1,5` to run a subset.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use cellstream::augment::{ClipSpec, CropSpec};
use cellstream::curriculum::{competence, eligible_set, CurriculumParams};
use cellstream::labelnoise::{synthetic_two_class, two_class_map, NoiseSpec};
use cellstream::multiview::{aggregate_mvm, aggregate_mvwcos, ViewPrediction};
use cellstream::rng::{derive_seed, rng_from_seed};
use cellstream::synthcells::dataset::load_videos;
use cellstream::synthcells::{
    assign_degradation, generate_dataset, wiener_step, Cell, CellKind, DatasetManifest, DegradationCategory,
    GenerationConfig, ManifestEntry, Split, Task, Video,
};
use cellstream::trainer::{
    evaluate_all, gradient_check, train, ArchSpec, Classifier, EvalReport, ImageViews, RunMetrics, TrainConfig,
    VideoViews,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pct(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{:.2}", 100.0 * x)).collect();
    format!("[{}]", items.join(", "))
}

// ---------------------------------------------------------------- 1 -------

fn criterion_1() -> Verdict {
    let params = CurriculumParams {
        c0: 0.05,
        total_epochs: 1000,
        p: 2.0,
        ..Default::default()
    };
    let c0p = params.c0.powf(params.p);
    let mut max_err: f64 = 0.0;
    for t in 0..=2000u32 {
        let direct = (f64::from(t) * (1.0 - c0p) / 1000.0 + c0p).powf(1.0 / params.p).min(1.0);
        max_err = max_err.max((competence(t, &params) - direct).abs());
    }
    let ends = competence(0, &params) == 0.05 && (1000..=2000).all(|t| competence(t, &params) == 1.0);
    verdict(
        max_err <= 1e-12 && ends,
        format!("max |c - direct| = {max_err:.2e} over 2001 points, exact ends: {ends}"),
    )
}

// ---------------------------------------------------------------- 2 -------

fn criterion_2() -> Verdict {
    let (paths, n) = (10_000usize, 100usize);
    let mut rng = rng_from_seed(2);
    let mut disp = [Vec::with_capacity(paths), Vec::with_capacity(paths)];
    for _ in 0..paths {
        let mut cell = Cell::new(CellKind::Rbc, [0.0, 0.0], 2.0);
        for i in 1..=n {
            cell = wiener_step(&cell, i, n, 1.0, &mut rng).expect("valid step");
        }
        for d in 0..2 {
            disp[d].push(cell.wiener[d]);
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, xs) in disp.iter().enumerate() {
        let m = mean(xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (paths - 1) as f64;
        let se = (var / paths as f64).sqrt();
        ok &= m.abs() <= 4.0 * se && (var - 1.0).abs() <= 0.05;
        parts.push(format!("coord {d}: mean {m:+.4} (4 SE = {:.4}), var {var:.4}", 4.0 * se));
    }
    verdict(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 3 -------

fn criterion_3() -> Verdict {
    let n = 10_000usize;
    let mut rng = rng_from_seed(3);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let spec = assign_degradation(&mut rng, [5.0, 25.0]);
        let k = DegradationCategory::ALL.iter().position(|&c| c == spec.category).unwrap();
        counts[k] += 1;
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, p) in DegradationCategory::PROPORTIONS.iter().enumerate() {
        let f = counts[k] as f64 / n as f64;
        let bound = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        ok &= (f - p).abs() <= bound;
        parts.push(format!("{:?} {f:.4} (target {p} +- {bound:.4})", DegradationCategory::ALL[k]));
    }
    verdict(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 4 -------

/// Most frequent class, smallest index on ties.
fn brute_mvm(views: &[ViewPrediction], k: usize) -> usize {
    let mut best = 0;
    let mut best_count = 0;
    for c in 0..k {
        let count = views.iter().filter(|v| v.class_id == c).count();
        if count > best_count {
            best = c;
            best_count = count;
        }
    }
    best
}

/// Largest confidence sum, smallest index on ties.
fn brute_mvwcos(views: &[ViewPrediction], k: usize) -> usize {
    let mut best = 0;
    let mut best_sum = f64::NEG_INFINITY;
    for c in 0..k {
        let mut confs: Vec<f64> = views.iter().filter(|v| v.class_id == c).map(|v| v.confidence).collect();
        confs.sort_by(f64::total_cmp);
        let sum: f64 = confs.iter().sum();
        if sum > best_sum {
            best = c;
            best_sum = sum;
        }
    }
    best
}

fn criterion_4() -> Verdict {
    let mut rng = rng_from_seed(4);
    let mut mismatches = 0usize;
    let mut random_sets = 0usize;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=10usize);
        let m = rng.random_range(1..=50usize);
        // Coarse confidences make exact ties common.
        let coarse = rng.random_bool(0.5);
        let views: Vec<ViewPrediction> = (0..m)
            .map(|_| {
                let conf = if coarse {
                    [0.5, 0.625, 0.75, 0.875][rng.random_range(0..4)]
                } else {
                    rng.random_range(1.0 / k as f64..0.999)
                };
                ViewPrediction::new(rng.random_range(0..k), conf, k).unwrap()
            })
            .collect();
        random_sets += 1;
        mismatches += (aggregate_mvm(&views).unwrap().final_class != brute_mvm(&views, k)) as usize;
        mismatches += (aggregate_mvwcos(&views).unwrap().final_class != brute_mvwcos(&views, k)) as usize;
    }
    // Every class assignment and every confidence pattern from {0.5, 0.75}
    // for K = 2 and m <= 8.
    let mut exhaustive = 0usize;
    for m in 1..=8usize {
        for classes in 0u32..(1 << m) {
            for confs in 0u32..(1 << m) {
                let views: Vec<ViewPrediction> = (0..m)
                    .map(|j| {
                        let c = ((classes >> j) & 1) as usize;
                        let conf = if (confs >> j) & 1 == 1 { 0.75 } else { 0.5 };
                        ViewPrediction::new(c, conf, 2).unwrap()
                    })
                    .collect();
                exhaustive += 1;
                mismatches += (aggregate_mvm(&views).unwrap().final_class != brute_mvm(&views, 2)) as usize;
                mismatches += (aggregate_mvwcos(&views).unwrap().final_class != brute_mvwcos(&views, 2)) as usize;
            }
        }
    }
    verdict(
        mismatches == 0,
        format!("{random_sets} random sets + {exhaustive} exhaustive K=2 sets, {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------- 5 -------

fn criterion_5() -> Verdict {
    let arch = ArchSpec::small_cnn(3, 16, 2);
    let mut model = Classifier::<f64>::init(arch, 5).unwrap();
    let mut rng = rng_from_seed(55);
    for t in model.tensors().to_vec() {
        if t.name.ends_with("bias") {
            for p in &mut model.params_mut()[t.range()] {
                *p = rng.random_range(-0.1..0.1);
            }
        }
    }
    let input: Vec<f64> = (0..2 * 3 * 16 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = gradient_check(&model, &input, 2, &[0, 1], 0.1, 1e-4, 120, 5).unwrap();
    let tensors = model.tensors().len();
    let covered = model.tensors().iter().filter(|t| report.max_for(&t.name).is_some()).count();
    verdict(
        report.max_rel_error <= 1e-3 && report.checks.len() >= 100 && covered == tensors,
        format!(
            "{} parameters over {covered}/{tensors} tensors, max relative error {:.2e}",
            report.checks.len(),
            report.max_rel_error
        ),
    )
}

// ------------------------------------------------------- shared video data -

struct VideoData {
    manifest: DatasetManifest,
    videos: HashMap<Split, Vec<Video>>,
    _dir: tempfile::TempDir,
}

impl VideoData {
    fn generate() -> VideoData {
        let dir = tempfile::tempdir().expect("temp dir");
        let config = GenerationConfig {
            n_videos: 300,
            ..Default::default()
        };
        let manifest = generate_dataset(&config, dir.path()).expect("dataset");
        let mut videos = HashMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            videos.insert(split, load_videos(dir.path(), &manifest.entries_in(split)).expect("videos"));
        }
        VideoData {
            manifest,
            videos,
            _dir: dir,
        }
    }

    fn views(&self, split: Split, task: Task, clip_len: usize) -> VideoViews<'_> {
        VideoViews::new(
            self.videos[&split].iter().collect(),
            &self.manifest.entries_in(split),
            task,
            ClipSpec { clip_len },
            CropSpec::default(),
        )
        .expect("views")
    }
}

const SEEDS: [u64; 3] = [42, 0, 17];

fn video_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 60,
        batch_size: 32,
        ..Default::default()
    }
}

/// Train per seed and evaluate on the test split with `m` views.
fn video_runs(data: &VideoData, task: Task, clip_len: usize, config: &TrainConfig, m: usize) -> Vec<(RunMetrics, EvalReport)> {
    let train_src = data.views(Split::Train, task, clip_len);
    let val_src = data.views(Split::Val, task, clip_len);
    let test_src = data.views(Split::Test, task, clip_len);
    SEEDS
        .iter()
        .map(|&seed| {
            let (model, metrics) = train(config, seed, &train_src, Some(&val_src)).expect("training");
            let report = evaluate_all(&model, &test_src, m, derive_seed(1000, seed)).expect("evaluation");
            (metrics, report)
        })
        .collect()
}

// ---------------------------------------------------------------- 6 -------

fn criterion_6(data: &VideoData) -> Verdict {
    let runs = video_runs(data, Task::Wbc, 1, &video_train_config(), 10);
    let base: Vec<f64> = runs.iter().map(|r| r.1.baseline).collect();
    let mvm: Vec<f64> = runs.iter().map(|r| r.1.mvm).collect();
    let mvw: Vec<f64> = runs.iter().map(|r| r.1.mvwcos).collect();
    let (b, v) = (mean(&base), mean(&mvm));
    verdict(
        b >= 0.65 && v >= b + 0.02,
        format!(
            "test n={}, baseline {:.2}% {}, MVM {:.2}% {}, MVWCo-S {:.2}% {}; need baseline >= 65 and MVM >= baseline + 2",
            runs[0].1.n,
            100.0 * b,
            pct(&base),
            100.0 * v,
            pct(&mvm),
            100.0 * mean(&mvw),
            pct(&mvw)
        ),
    )
}

// ---------------------------------------------------------------- 7 -------

fn criterion_7(data: &VideoData) -> Verdict {
    let frame = video_runs(data, Task::Rbc, 1, &video_train_config(), 10);
    let clip = video_runs(data, Task::Rbc, 9, &video_train_config(), 10);
    let fb: Vec<f64> = frame.iter().map(|r| r.1.baseline).collect();
    let cb: Vec<f64> = clip.iter().map(|r| r.1.baseline).collect();
    let fm: Vec<f64> = frame.iter().map(|r| r.1.mvm).collect();
    let cm: Vec<f64> = clip.iter().map(|r| r.1.mvm).collect();
    verdict(
        mean(&cb) >= mean(&fb) - 0.01,
        format!(
            "single-view accuracy: clip {:.2}% {} vs frame {:.2}% {}; MVM: clip {:.2}% vs frame {:.2}%; need clip >= frame - 1",
            100.0 * mean(&cb),
            pct(&cb),
            100.0 * mean(&fb),
            pct(&fb),
            100.0 * mean(&cm),
            100.0 * mean(&fm)
        ),
    )
}

// ---------------------------------------------------------------- 8 -------

fn criterion_8(data: &VideoData) -> Verdict {
    let task = Task::Wbc;
    let params = CurriculumParams {
        total_epochs: 45,
        ..CurriculumParams::for_task(task, &data.manifest.config.population, 45)
    };
    let config = TrainConfig {
        curriculum: Some(params),
        ..video_train_config()
    };
    let train_src = data.views(Split::Train, task, 1);
    let val_src = data.views(Split::Val, task, 1);
    let (_, metrics) = train(&config, 42, &train_src, Some(&val_src)).expect("training");
    let entries: Vec<&ManifestEntry> = data.manifest.entries_in(Split::Train);
    let n = entries.len();
    let sizes: Vec<usize> = metrics.epochs.iter().map(|e| e.eligible).collect();

    let nondecreasing = sizes.windows(2).all(|w| w[0] <= w[1]);
    let full_at_t = sizes[params.total_epochs as usize..].iter().all(|&s| s == n);
    let mut set_mismatch = 0usize;
    let mut log_mismatch = 0usize;
    for (t, &logged) in sizes.iter().enumerate() {
        let t = t as u32;
        // Direct evaluation of the competence formula and difficulty score.
        let c0p = params.c0.powf(params.p);
        let c = if t >= params.total_epochs {
            1.0
        } else {
            (f64::from(t) * (1.0 - c0p) / f64::from(params.total_epochs) + c0p).powf(1.0 / params.p)
        };
        let brute: Vec<usize> = entries
            .iter()
            .filter(|e| {
                let f = e.difficulty.unwrap();
                let d = params.alpha * f64::from(f.b) / 10.0 + params.beta * (f.l(task) / params.l_norm_scale).min(1.0);
                d <= c
            })
            .map(|e| e.index)
            .collect();
        let lib: Vec<usize> = eligible_set(&entries, t, &params, task)
            .unwrap()
            .iter()
            .map(|e| e.index)
            .collect();
        set_mismatch += (lib != brute) as usize;
        log_mismatch += (!brute.is_empty() && logged != brute.len()) as usize;
    }
    verdict(
        nondecreasing && full_at_t && set_mismatch == 0 && log_mismatch == 0,
        format!(
            "sizes epoch 0..{}: {} -> {} (train split {n}, T = {}), nondecreasing {nondecreasing}, full from T {full_at_t}, set mismatches {set_mismatch}, logged-size mismatches {log_mismatch}",
            sizes.len() - 1,
            sizes[0],
            sizes[sizes.len() - 1],
            params.total_epochs
        ),
    )
}

// ---------------------------------------------------------------- 9 -------

fn criterion_9() -> Verdict {
    let (n_train, n_val, n_test) = (10_000usize, 1_000usize, 1_000usize);
    let set = synthetic_two_class(n_train + n_val + n_test, 32, Task::Wbc, 9, &GenerationConfig::default())
        .expect("synthetic set");
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n_train + n_val).collect();
    let test_idx: Vec<usize> = (n_train + n_val..set.len()).collect();
    let clean: Vec<usize> = train_idx.iter().map(|&i| set.labels[i]).collect();
    let noise = NoiseSpec {
        rate: 0.2,
        transition_map: two_class_map(),
        seed: 9,
    };
    let (noisy, flipped) = noise.apply(&clean).expect("noise");
    let crop = Some(CropSpec {
        out_size: 16,
        ..Default::default()
    });
    let train_src = ImageViews::with_labels(&set, train_idx, noisy, crop).unwrap();
    let val_src = ImageViews::new(&set, val_idx, crop).unwrap();
    let test_src = ImageViews::new(&set, test_idx, crop).unwrap();
    let config = TrainConfig {
        epochs: 30,
        batch_size: 128,
        weight_decay: 0.01,
        label_smoothing: 0.4,
        ..Default::default()
    };
    let mut base = Vec::new();
    let mut mvm = Vec::new();
    let mut mvw = Vec::new();
    for &seed in &SEEDS {
        let (model, _) = train(&config, seed, &train_src, Some(&val_src)).expect("training");
        let r = evaluate_all(&model, &test_src, 50, derive_seed(2000, seed)).expect("evaluation");
        base.push(r.baseline);
        mvm.push(r.mvm);
        mvw.push(r.mvwcos);
    }
    let (b, m, w) = (mean(&base), mean(&mvm), mean(&mvw));
    verdict(
        w >= b + 0.03 && (w - m).abs() <= 0.01,
        format!(
            "{} of {n_train} training labels flipped; baseline {:.2}% {}, MVM {:.2}% {}, MVWCo-S {:.2}% {}; need MVWCo-S >= baseline + 3 and |MVWCo-S - MVM| <= 1",
            flipped.len(),
            100.0 * b,
            pct(&base),
            100.0 * m,
            pct(&mvm),
            100.0 * w,
            pct(&mvw)
        ),
    )
}

// ---------------------------------------------------------------- main ----

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let selected: Option<Vec<u32>> = std::env::var("CELLSTREAM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: u32| selected.as_ref().is_none_or(|s| s.contains(&k));

    type Check = fn() -> Verdict;
    let simple: [(u32, &str, f64, Check); 5] = [
        (1, "competence formula fidelity", 1.0, criterion_1),
        (2, "Wiener statistics", 10.0, criterion_2),
        (3, "degradation mix", 5.0, criterion_3),
        (4, "aggregator oracle equivalence", 10.0, criterion_4),
        (5, "gradient check", 60.0, criterion_5),
    ];
    let mut failures = 0;
    let mut report = |k: u32, name: &str, limit: Option<f64>, f: &dyn Fn() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let pass = v.pass && in_time;
        failures += (!pass) as usize;
        let limit_note = limit.map_or(String::new(), |l| format!(" (limit {l} s)"));
        println!(
            "criterion {k} [{name}]: {} | {} | {secs:.1} s{limit_note}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    for (k, name, limit, f) in simple {
        if wanted(k) {
            report(k, name, Some(limit), &f);
        }
    }
    if [6, 7, 8].into_iter().any(wanted) {
        let start = Instant::now();
        let data = VideoData::generate();
        println!(
            "generated {} videos in {:.1} s (train {}, val {}, test {})",
            data.manifest.entries.len(),
            start.elapsed().as_secs_f64(),
            data.videos[&Split::Train].len(),
            data.videos[&Split::Val].len(),
            data.videos[&Split::Test].len()
        );
        if wanted(6) {
            report(6, "end-to-end WBC multi-view lift", None, &|| criterion_6(&data));
        }
        if wanted(7) {
            report(7, "clip vs frame (RBC)", None, &|| criterion_7(&data));
        }
        if wanted(8) {
            report(8, "curriculum mechanics", None, &|| criterion_8(&data));
        }
    }
    if wanted(9) {
        report(9, "noisy-label multi-view lift", None, &criterion_9);
    }
    if failures == 0 {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
