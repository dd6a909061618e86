//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_auroc, fast_train, grad_instance, synth, Term};
use rand::Rng;
use selfcal::apps::{adversarial_eval, cascade_eval, pilot_sweeps, threshold_curve, SweepKind};
use selfcal::calibrators::{Calibrator, ConfidenceLog, Method};
use selfcal::corpus::generate_synthetic;
use selfcal::metrics::{auroc, auroc_risk, cascade_accuracy, threshold_grid};
use selfcal::model::{accuracy, train_main, TrainConfig};
use selfcal::pipeline::{load_data, run_pipeline, Metrics, PipelineConfig};
use selfcal::rng::seeded;
use selfcal::toast::{cross_annotate, downsample_balance, run_toast, ToastConfig};

const MINIMAL: &str = "minimal.toml";
const BUNDLED: &str = "bundled.toml";
const SWEEP: &str = "sweep.toml";

const AUROC_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;
// central differences at this step carry ~1e-10 absolute roundoff
const GRAD_FLOOR: f64 = 1e-4;
const TS_TOL: f64 = 1e-12;
const ACC_GAP_POINTS: f64 = 2.0;
const COPY_AUROC_TOL: f64 = 0.02;
const SEEDS: [u64; 3] = [0, 1, 2];

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(name: &str, seed: u64) -> PipelineConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    PipelineConfig::load(path, &[("seed".into(), seed.to_string())]).unwrap()
}

fn auroc_oracle() -> Outcome {
    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.gen_range(2..=2000);
        // coarse grids force ties; the last logs are continuous
        let levels = [2u32, 5, 20, 1000, 0][i % 5];
        let mut log = ConfidenceLog::<f64>::with_capacity(n);
        for j in 0..n {
            let u: f64 = rng.gen();
            let conf = if levels == 0 {
                u
            } else {
                (u * f64::from(levels)).floor() / f64::from(levels)
            };
            // both sides non-empty
            let correct = if j < 2 { j == 0 } else { rng.gen_bool(0.7) };
            log.push(conf, correct, 0, "id");
        }
        let (pos, neg) = log.split_by_correctness();
        let fast = auroc(&pos, &neg).map_err(|e| e.to_string())?;
        let slow = brute_auroc(&pos, &neg);
        worst = worst.max((fast - slow).abs());
        let risk = auroc_risk(&log).map_err(|e| e.to_string())?;
        ensure(risk == 1.0 - fast, || {
            format!("log {i}: auroc_risk {risk} != 1 - {fast}")
        })?;
    }
    ensure(worst <= AUROC_TOL, || format!("max |auroc - brute| = {worst:e}"))?;
    Ok(format!("100 logs, max |diff| {worst:.1e}, risk = 1 - auroc exactly"))
}

fn gradient_checks() -> Outcome {
    let mut worst: f64 = 0.0;
    for term in [Term::Main, Term::Calib, Term::Consistency, Term::All] {
        for seed in 0..20 {
            let e = grad_instance(seed).max_rel_error(term, GRAD_STEP, GRAD_FLOOR);
            ensure(e < GRAD_TOL, || {
                format!("{term:?} instance {seed}: relative error {e:e}")
            })?;
            worst = worst.max(e);
        }
    }
    Ok(format!("4 terms x 20 instances, max relative error {worst:.1e}"))
}

fn pipeline_invariants() -> Outcome {
    let data = generate_synthetic(&synth(3, 600, 50)).unwrap();
    let cfg = ToastConfig {
        train: fast_train(3),
        ..ToastConfig::default()
    };
    let ann = cross_annotate::<f64>(&data.train, &cfg).map_err(|e| e.to_string())?;
    ensure(ann.records.len() == data.train.len(), || {
        format!("{} records for {} samples", ann.records.len(), data.train.len())
    })?;
    let leaks = ann.leakage_violations();
    ensure(leaks.is_empty(), || format!("leakage on {} records", leaks.len()))?;
    let kept = downsample_balance(&ann.records, &mut seeded(4)).map_err(|e| e.to_string())?;
    let pos = kept.iter().filter(|r| r.is_correct()).count();
    ensure(2 * pos == kept.len(), || format!("{pos} correct of {}", kept.len()))?;
    Ok(format!(
        "{} annotated, no leakage, balanced {pos}/{pos}",
        ann.records.len()
    ))
}

fn temperature_invariance() -> Outcome {
    let data = generate_synthetic(&synth(5, 600, 300)).unwrap();
    let d = &data.train;
    let fit = d.subset(&(0..1080).collect::<Vec<_>>());
    let holdout = d.subset(&(1080..d.len()).collect::<Vec<_>>());
    let p = train_main::<f64>(&fit, &fast_train(5)).unwrap().params;
    let vanilla = Calibrator::new(Method::Vanilla, p.clone())
        .build_log(&data.test, "id")
        .unwrap();
    let ts = Calibrator::fit_temperature_on(p, &holdout).unwrap();
    let t = ts.temperature.unwrap_or(1.0);
    ensure((t - 1.0).abs() > 1e-3, || {
        format!("fitted temperature {t} is trivially 1")
    })?;
    let scaled = ts.build_log(&data.test, "id").unwrap();
    let (vp, vn) = vanilla.split_by_correctness();
    let (sp, sn) = scaled.split_by_correctness();
    let (a, b) = (auroc(&vp, &vn).unwrap(), auroc(&sp, &sn).unwrap());
    ensure((a - b).abs() <= TS_TOL, || format!("vanilla {a} vs temperature {b}"))?;
    Ok(format!("T = {t:.3}, AUROC {a:.6} both"))
}

fn directional_main() -> Outcome {
    let mut lines = Vec::new();
    for seed in SEEDS {
        let cfg = config(BUNDLED, seed);
        let data = load_data(&cfg).map_err(|e| e.to_string())?;
        let toast = run_toast::<f64>(&data.train, &cfg.toast, &data.lexicon).map_err(|e| e.to_string())?;
        let main_only = train_main::<f64>(&data.train, &cfg.train_config()).map_err(|e| e.to_string())?;
        let score = |m: Method, p: &selfcal::Params| {
            let log = Calibrator::new(m, p.clone()).build_log(&data.test, "id").unwrap();
            let (pos, neg) = log.split_by_correctness();
            (selfcal::metrics::delta_conf(&pos, &neg).unwrap(), log.accuracy())
        };
        let (t_gap, t_acc) = score(Method::Toast, &toast.params);
        let (v_gap, v_acc) = score(Method::Vanilla, &main_only.params);
        lines.push(format!(
            "seed {seed}: dconf {t_gap:.2} vs {v_gap:.2}, acc {:.2} vs {:.2}",
            100.0 * t_acc,
            100.0 * v_acc
        ));
        ensure(t_gap > v_gap, || lines.join("; "))?;
        ensure(100.0 * (t_acc - v_acc).abs() <= ACC_GAP_POINTS, || lines.join("; "))?;
    }
    Ok(lines.join("; "))
}

fn pilot_trends() -> Outcome {
    let mut lines = Vec::new();
    for seed in SEEDS {
        let cfg = config(SWEEP, seed);
        let data = load_data(&cfg).map_err(|e| e.to_string())?;
        let pilot = cfg.pilot_config();
        let size = pilot_sweeps::<f64>(&data.train, &data.test, &pilot, SweepKind::Size, &data.lexicon)
            .map_err(|e| e.to_string())?;
        let curve: Vec<f64> = size.rows.iter().filter_map(|r| r.auroc).collect();
        ensure(curve.len() == size.rows.len() && curve.len() >= 2, || {
            format!("seed {seed}: size sweep skipped points")
        })?;
        let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",");
        ensure(monotone, || {
            format!("seed {seed}: size AUROC [{}] not non-decreasing", fmt(&curve))
        })?;

        let imb = pilot_sweeps::<f64>(&data.train, &data.test, &pilot, SweepKind::Imbalance, &data.lexicon)
            .map_err(|e| e.to_string())?;
        let ratios: Vec<(f64, f64)> = imb
            .rows
            .iter()
            .filter_map(|r| Some((r.point.strip_prefix("ratio=")?.parse().ok()?, r.auroc?)))
            .collect();
        ensure(ratios.len() == pilot.ratios.len(), || {
            format!("seed {seed}: ratio rows skipped")
        })?;
        let best = ratios
            .iter()
            .copied()
            .fold((f64::NAN, f64::MIN), |b, r| if r.1 > b.1 { r } else { b });
        let step = pilot.ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::MAX, f64::min);
        ensure((best.0 - 0.5).abs() <= step + 1e-9, || {
            format!("seed {seed}: imbalance AUROC peaks at ratio {}", best.0)
        })?;
        lines.push(format!("seed {seed}: size [{}], peak ratio {}", fmt(&curve), best.0));
    }
    Ok(lines.join("; "))
}

fn applications_sanity() -> Outcome {
    let data = generate_synthetic(&synth(7, 600, 2000)).unwrap();
    let small = train_main::<f64>(
        &data.train,
        &TrainConfig {
            hidden_dim: 16,
            epochs: 2,
            ..fast_train(7)
        },
    )
    .unwrap()
    .params;
    let large = train_main::<f64>(
        &data.train,
        &TrainConfig {
            hidden_dim: 128,
            epochs: 8,
            ..fast_train(8)
        },
    )
    .unwrap()
    .params;
    let cal = Calibrator::new(Method::Vanilla, small.clone());
    let rep = cascade_eval(&cal, &large, &data.test).map_err(|e| e.to_string())?;
    let log = cal.build_log(&data.test, "id").unwrap();
    let labels: Vec<usize> = data.test.samples().iter().map(|s| s.label).collect();
    let large_pred: Vec<usize> = data.test.samples().iter().map(|s| large.predict(s).label).collect();
    let at = |t: f64| cascade_accuracy(&log.predicted, &log.confidence, &large_pred, &labels, t).unwrap();
    let max_conf = log.confidence.iter().copied().fold(f64::MIN, f64::max);
    ensure(at(0.0).accuracy == accuracy(&small, &data.test), || {
        "t=0 accuracy differs from small".into()
    })?;
    ensure(at(max_conf + 1e-9).accuracy == accuracy(&large, &data.test), || {
        "full routing accuracy differs from large".into()
    })?;
    ensure(rep.curve.points[0].accuracy == rep.small_accuracy, || {
        "curve start differs".into()
    })?;

    let copy = data.test.clone();
    let adv = adversarial_eval(&cal, &data.test, &copy, 1000, 11).map_err(|e| e.to_string())?;
    ensure((adv.auroc - 0.5).abs() <= COPY_AUROC_TOL, || {
        format!("ID-copy AUROC {}", adv.auroc)
    })?;

    let cfg = config(MINIMAL, 7);
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, dir.path()).map_err(|e| e.to_string())?;
    for m in Method::ALL {
        let text = std::fs::read_to_string(dir.path().join("logs").join(format!("{}.csv", m.as_str()))).unwrap();
        let log = ConfidenceLog::<f64>::from_csv(&text).map_err(|e| e.to_string())?;
        let curve = threshold_curve(&log, &threshold_grid());
        ensure(curve.windows(2).all(|w| w[1].coverage <= w[0].coverage), || {
            format!("{} coverage increases with threshold", m.as_str())
        })?;
    }
    Ok(format!(
        "cascade endpoints exact ({:.4} / {:.4}), ID-copy AUROC {:.4}, coverage monotone for 4 methods",
        rep.small_accuracy, rep.large_accuracy, adv.auroc
    ))
}

fn determinism() -> Outcome {
    let cfg = config(MINIMAL, 7);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&cfg, a.path()).map_err(|e| e.to_string())?;
    run_pipeline(&cfg, b.path()).map_err(|e| e.to_string())?;
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.json")).unwrap();
    let (x, y) = (read(&a), read(&b));
    ensure(x == y, || "metrics.json differs between runs".into())?;
    let m: Metrics = serde_json::from_slice(&x).map_err(|e| e.to_string())?;
    Ok(format!("{} bytes identical, {} methods", x.len(), m.methods.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metric oracle", Duration::from_secs(10), auroc_oracle),
        ("gradient checks", Duration::from_secs(30), gradient_checks),
        ("pipeline invariants", Duration::from_secs(120), pipeline_invariants),
        (
            "temperature invariance",
            Duration::from_secs(60),
            temperature_invariance,
        ),
        ("directional main result", Duration::from_secs(300), directional_main),
        ("pilot trends", Duration::from_secs(900), pilot_trends),
        ("applications sanity", Duration::from_secs(300), applications_sanity),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d} (took {took:.1?}, budget {budget:?})")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{took:.1?}] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{took:.1?}] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
