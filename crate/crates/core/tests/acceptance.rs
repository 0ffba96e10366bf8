//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs with `cargo test -p evseg-core --test acceptance`. Pass criterion
//! names as arguments to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_volume, foreground_fraction, oracle_bce, oracle_ce, oracle_metrics, random_stream};
use evseg_core::events::{read_events, write_events, EventFormat, Polarity};
use evseg_core::experiment::{run, RunConfig, RunResult};
use evseg_core::labels::{read_label, write_label, LabelMap, IGNORE, NUM_CLASSES};
use evseg_core::losses::{bce_loss, ce_loss};
use evseg_core::metrics::{metrics, ConfusionMatrix};
use evseg_core::models::ModelKind;
use evseg_core::raster::{read_raster, write_raster, Raster};
use evseg_core::repr::{read_volume, table2_config, voxelize, write_volume, PolarityMode, ReprConfig, VolumeFile};
use evseg_core::report::{fixture_rows, report, ReportFormat};
use evseg_core::synthetic::{generate_sequence, generate_suite, SuiteConfig, SyntheticSceneConfig};
use evseg_core::train::{build_losses, Batch, LossConfig};
use evseg_tensor::{checkpoint, op_cases::op_cases, GradCheckConfig, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn voxelization_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_mass, mut events) = (0.0f64, 0.0f64, 0usize);
    for i in 0..1000 {
        let (h, w) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let cfg = match i % 4 {
            0 => table2_config("B2", h, w).unwrap(),
            1 => table2_config("B18", h, w).unwrap(),
            _ => {
                let p = rng.gen_range(0..=12);
                ReprConfig::volume(p, rng.gen_range(usize::from(p == 0)..=12), h, w)
            }
        };
        // Most streams are modest; every tenth goes up to the full 1e4.
        let max = if i % 10 == 0 { 10_000 } else { 2_000 };
        let s = random_stream(&mut rng, w as u32, h as u32, max);
        events += s.len();
        let v = voxelize(&s, &cfg).map_err(|e| format!("stream {i}: {e}"))?;
        let oracle = brute_force_volume(&s, &cfg);
        ensure(v.data().len() == oracle.len(), || format!("stream {i}: length mismatch"))?;
        for (a, b) in v.data().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        let binned = s
            .events()
            .iter()
            .filter(|e| match (cfg.polarity, e.p) {
                (PolarityMode::Merged, _) => true,
                (_, Polarity::Positive) => cfg.bins_pos > 0,
                (_, Polarity::Negative) => cfg.bins_neg > 0,
            })
            .count();
        worst_mass = worst_mass.max((v.sum() - binned as f64).abs());
    }
    ensure(worst <= 1e-12, || format!("elementwise error {worst:e}"))?;
    ensure(worst_mass <= 1e-9, || format!("mass error {worst_mass:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "1000 streams, {events} events, max error {worst:.1e}, max mass error {worst_mass:.1e}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let (mut op_worst, mut cases) = (0.0f64, 0usize);
    for seed in 0..10 {
        let cfg = GradCheckConfig { seed, ..GradCheckConfig::default() };
        for case in op_cases(seed) {
            let r = case.check(&cfg).map_err(|e| format!("{}: {e}", case.name))?;
            ensure(r.max_rel_error() < 1e-4, || format!("op {} seed {seed}: {:e}", case.name, r.max_rel_error()))?;
            op_worst = op_worst.max(r.max_rel_error());
            cases += 1;
        }
    }
    let mut net_worst = 0.0f64;
    let mut failures = Vec::new();
    for kind in [ModelKind::S2d, ModelKind::D2s] {
        for seed in 0..10 {
            let r = common::network_grad_check(kind, seed, 2);
            net_worst = net_worst.max(r.max_rel_error());
            for input in r.inputs.iter().filter(|i| i.max_rel_error >= 1e-3) {
                failures.push(format!(
                    "{kind:?} seed {seed} rel {:.2e} (analytic {:.3e}, numeric {:.3e})",
                    input.max_rel_error, input.analytic, input.numeric
                ));
            }
        }
    }
    ensure(failures.is_empty(), || format!("{cases} op checks max rel {op_worst:.1e}; network: {}", failures.join("; ")))?;
    within(start.elapsed(), Duration::from_secs(180))?;
    Ok(format!(
        "{cases} op checks max rel {op_worst:.1e}, 20 network checks max rel {net_worst:.1e}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let classes = [2u8, 4, 19][i % 3];
        let gt: Vec<u8> = (0..64)
            .map(|_| if rng.gen_bool(0.1) { IGNORE } else { rng.gen_range(0..classes) })
            .collect();
        let pred: Vec<u8> = (0..64).map(|_| rng.gen_range(0..classes)).collect();
        let cm = ConfusionMatrix::default()
            .accumulate(&LabelMap::new(8, 8, pred.clone()).unwrap(), &LabelMap::new(8, 8, gt.clone()).unwrap())
            .unwrap();
        let m = metrics(&cm);
        let o = oracle_metrics(&[(&pred, &gt)], NUM_CLASSES);
        let same = close(m.acc, o.acc)
            && close(m.miou, o.miou)
            && close(m.fwiou, o.fwiou)
            && (0..NUM_CLASSES).all(|c| close(m.per_class_iou[c], o.iou[c]));
        ensure(same, || format!("pair {i} differs from the definitions"))?;
    }

    let hand = metrics(
        &ConfusionMatrix::default()
            .accumulate(&LabelMap::new(1, 4, vec![0, 1, 1, 1]).unwrap(), &LabelMap::new(1, 4, vec![0, 0, 1, 1]).unwrap())
            .unwrap(),
    );
    ensure(hand.acc == Some(0.75) && hand.miou == Some(7.0 / 12.0), || {
        format!("hand case acc {:?} miou {:?}", hand.acc, hand.miou)
    })?;

    // A class present in neither map is absent, not zero.
    let absent = metrics(
        &ConfusionMatrix::default()
            .accumulate(&LabelMap::new(1, 4, vec![0, 13, 13, 13]).unwrap(), &LabelMap::new(1, 4, vec![0, 0, 13, 13]).unwrap())
            .unwrap(),
    );
    ensure(absent.per_class_iou[16].is_none() && absent.miou == Some(7.0 / 12.0), || {
        "absent class entered the mean".into()
    })?;
    let table = String::from_utf8(report(&fixture_rows(), ReportFormat::Text)).unwrap();
    let row = table
        .lines()
        .find(|l| l.starts_with("ISSAFE-CLAN") && l.contains(" target "))
        .ok_or("no ISSAFE-CLAN target row")?;
    ensure(row.split_whitespace().any(|c| c == "-"), || format!("absent cell not rendered as '-': {row}"))?;
    Ok("1000 random pairs within 1e-12, hand case 0.75 / 7/12, absent classes excluded".into())
}

fn loss_analytics() -> Outcome {
    let labels: Vec<LabelMap> = (0..2)
        .map(|b| LabelMap::new(3, 4, (0..12).map(|i| ((i + b) % 19) as u8).collect()).unwrap())
        .collect();
    let (uniform, _) = ce_loss(&Tensor::full(vec![2, 19, 3, 4], -0.3), &labels).map_err(|e| e.to_string())?;
    let ln19_err = (uniform - 19f64.ln()).abs();
    ensure(ln19_err <= 1e-10, || format!("uniform CE off ln 19 by {ln19_err:e}"))?;

    let net = common::toy_network(ModelKind::D2s, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let batch = Batch {
        rgb: Some(common::random_tensor(&mut rng, vec![2, 3, 32, 32], -1.0, 1.0)),
        events: None,
        labels: (0..2 * 32 * 32).map(|_| if rng.gen_bool(0.1) { IGNORE } else { rng.gen_range(0..19) }).collect(),
        event_target: Some(Tensor::new(vec![2, 2, 32, 32], (0..4096).map(|_| rng.gen_range(0..2) as f64).collect()).unwrap()),
    };
    let mut g = Graph::new(net.params(), false);
    let nodes = build_losses(&net, &mut g, &batch, &LossConfig::default()).map_err(|e| e.to_string())?;
    let total = g.tape.value(nodes.total).item();
    let (seg, ev) = net.predict(batch.rgb.as_ref(), None).map_err(|e| e.to_string())?;
    let ce = oracle_ce(seg.data(), [2, 19, 32, 32], &batch.labels);
    let bce = oracle_bce(ev.unwrap().data(), batch.event_target.as_ref().unwrap().data());
    ensure(total == g.tape.value(nodes.ce).item() + g.tape.value(nodes.bce.unwrap()).item(), || {
        "total is not the sum of its terms".into()
    })?;
    let total_err = (total - (ce + bce)).abs();
    ensure(total_err <= 1e-10, || format!("total differs from independent CE + BCE by {total_err:e}"))?;

    let logits = common::random_tensor(&mut rng, vec![1, 19, 2, 2], -3.0, 3.0);
    let (v, grad) = ce_loss(&logits, &[LabelMap::filled(2, 2, IGNORE).unwrap()]).map_err(|e| e.to_string())?;
    ensure(v == 0.0 && grad.data().iter().all(|&x| x == 0.0), || "all-ignore batch is not inert".into())?;
    let (b, bgrad) = bce_loss(&Tensor::<f64>::full(vec![1, 1, 1, 1], 0.0), &Tensor::full(vec![1, 1, 1, 1], 1.0))
        .map_err(|e| e.to_string())?;
    ensure((b - 2f64.ln()).abs() <= 1e-15 && (bgrad.data()[0] + 0.5).abs() <= 1e-15, || "BCE at zero logit".into())?;
    Ok(format!("uniform CE off ln 19 by {ln19_err:.1e}, total = CE + BCE (oracle diff {total_err:.1e}), all-ignore inert"))
}

/// Mean CE over this many closing steps is compared with the first step.
const CE_WINDOW: usize = 25;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Model {
    label: &'static str,
    kind: ModelKind,
    repr: Option<&'static str>,
}

const MODELS: [Model; 4] = [
    Model { label: "rgb", kind: ModelKind::RgbOnly, repr: None },
    Model { label: "event B2", kind: ModelKind::EventOnly, repr: Some("B2") },
    Model { label: "s2d B2", kind: ModelKind::S2d, repr: Some("B2") },
    Model { label: "d2s P+N", kind: ModelKind::D2s, repr: Some("P+N") },
];

/// Trains every model on every seed once; both synthetic criteria read these.
fn synthetic_runs() -> Result<(Vec<Vec<RunResult>>, Duration), String> {
    let start = Instant::now();
    let mut runs: Vec<Vec<RunResult>> = MODELS.iter().map(|_| Vec::new()).collect();
    for seed in SEEDS {
        let suite = generate_suite(&SuiteConfig::standard(seed)).map_err(|e| e.to_string())?;
        for (m, model) in MODELS.iter().enumerate() {
            let cfg = RunConfig::new(model.kind, model.repr, seed);
            let t = Instant::now();
            let (_, result) = run::<f32>(&cfg, &suite.train, &suite.test).map_err(|e| format!("{}: {e}", model.label))?;
            println!(
                "    seed {seed} {:<9} initial CE {:.3} final CE {:.3} test mIoU {:.2} ({:.0}s)",
                model.label,
                result.initial_ce(),
                result.final_ce(CE_WINDOW),
                100.0 * result.test.miou.unwrap_or(0.0),
                t.elapsed().as_secs_f64()
            );
            runs[m].push(result);
        }
    }
    Ok((runs, start.elapsed()))
}

fn ce_reduction(runs: &[Vec<RunResult>], elapsed: Duration) -> Outcome {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (model, results) in MODELS.iter().zip(runs) {
        let worst = results.iter().map(|r| r.ce_reduction(CE_WINDOW)).fold(f64::INFINITY, f64::min);
        parts.push(format!("{} {:.1}%", model.label, 100.0 * worst));
        if !(worst >= 0.8) {
            failures.push(model.label);
        }
    }
    let detail = format!(
        "worst-seed CE reduction: {}; 12 runs in {:.0}s",
        parts.join(", "),
        elapsed.as_secs_f64()
    );
    within(elapsed, Duration::from_secs(600)).map_err(|e| format!("{detail}; {e}"))?;
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; below 80%: {}", failures.join(", ")))
    }
}

fn fusion_gain(runs: &[Vec<RunResult>]) -> Outcome {
    let mean_miou = |m: usize| runs[m].iter().map(|r| 100.0 * r.test.miou.unwrap_or(0.0)).sum::<f64>() / runs[m].len() as f64;
    let rgb = mean_miou(0);
    let s2d = mean_miou(2) - rgb;
    let d2s = mean_miou(3) - rgb;
    let detail = format!("rgb {rgb:.2} mIoU, s2d {s2d:+.2}, d2s {d2s:+.2} (need +2.00 each)");
    if s2d >= 2.0 && d2s >= 2.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn event_foreground() -> Outcome {
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..20 {
        let cfg = SyntheticSceneConfig {
            num_objects: (1, 1),
            frames: 6,
            seed,
            ..SyntheticSceneConfig::default()
        };
        let (a, b) = foreground_fraction(&generate_sequence(&cfg, 0).map_err(|e| e.to_string())?);
        inside += a;
        total += b;
    }
    let suite = SuiteConfig::standard(1);
    for (cfg, n) in [(&suite.train, 50u64), (&suite.test, 50)] {
        for i in 0..n {
            let (a, b) = foreground_fraction(&generate_sequence(cfg, i).map_err(|e| e.to_string())?);
            inside += a;
            total += b;
        }
    }
    let frac = inside as f64 / total.max(1) as f64;
    let detail = format!("{inside}/{total} events ({:.2}%) inside the dilated swept mask", 100.0 * frac);
    if total > 0 && frac >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..100 {
        let s = random_stream(&mut rng, 23, 11, 500);
        for format in [EventFormat::Binary, EventFormat::Text] {
            let bytes = write_events(&s, format);
            let back = read_events(bytes.as_slice(), format).map_err(|e| e.to_string())?;
            ensure(back == s && write_events(&back, format) == bytes, || format!("event stream {i} ({format:?})"))?;
        }
        let cfg = table2_config(["B1", "B2", "B18", "P", "P+N"][i % 5], 11, 23).unwrap();
        let file = VolumeFile::from(&evseg_core::repr::represent(&s, &cfg).map_err(|e| e.to_string())?);
        let mut bytes = Vec::new();
        write_volume(&file, &mut bytes).map_err(|e| e.to_string())?;
        let back = read_volume(bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_volume(&back, &mut again).map_err(|e| e.to_string())?;
        ensure(back == file && again == bytes, || format!("volume {i}"))?;

        let depth = if i % 2 == 0 { 8 } else { 16 };
        let max = if depth == 8 { 255 } else { u16::MAX };
        let raster = Raster::new(7, 5, 3, depth, (0..105).map(|_| rng.gen_range(0..=max)).collect()).unwrap();
        let mut bytes = Vec::new();
        write_raster(&raster, &mut bytes).map_err(|e| e.to_string())?;
        let back = read_raster(bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_raster(&back, &mut again).map_err(|e| e.to_string())?;
        ensure(back == raster && again == bytes, || format!("raster {i}"))?;

        let label = LabelMap::new(4, 6, (0..24).map(|_| if rng.gen_bool(0.2) { IGNORE } else { rng.gen_range(0..19) }).collect()).unwrap();
        let mut bytes = Vec::new();
        write_label(&label, &mut bytes).map_err(|e| e.to_string())?;
        let back = read_label(bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_label(&back, &mut again).map_err(|e| e.to_string())?;
        ensure(back == label && again == bytes, || format!("label map {i}"))?;
    }
    for kind in ModelKind::ALL {
        let params = common::toy_network(kind, 5).params().cast::<f32>();
        let mut bytes = Vec::new();
        checkpoint::save(&params, &mut bytes).map_err(|e| e.to_string())?;
        let mut fresh = common::toy_network(kind, 6).params().cast::<f32>();
        checkpoint::load(&mut fresh, bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        checkpoint::save(&fresh, &mut again).map_err(|e| e.to_string())?;
        ensure(again == bytes, || format!("{kind:?} checkpoint"))?;
    }

    let table = String::from_utf8(report(&fixture_rows(), ReportFormat::Text)).unwrap();
    let row = |needle: &[&str]| -> Result<Vec<String>, String> {
        let line = table
            .lines()
            .find(|l| needle.iter().all(|n| l.contains(n)))
            .ok_or_else(|| format!("no fixture row with {needle:?}"))?;
        Ok(line.split_whitespace().map(String::from).collect())
    };
    let clan = row(&["ISSAFE-CLAN", " target "])?;
    ensure(clan[clan.len() - 3..] == ["42.1", "30.0", "64.5"], || format!("CLAN row {clan:?}"))?;
    let d2s: Vec<String> = ["source", "target"]
        .iter()
        .map(|split| row(&["d2s P+N", split]).map(|r| r.join(" ")))
        .collect::<Result<_, _>>()?;
    ensure(d2s.iter().any(|r| r.contains("69.4")) && d2s.iter().any(|r| r.contains("28.3")), || {
        format!("d2s rows {d2s:?}")
    })?;
    Ok("events (binary, text), volumes, rasters, labels, 4 checkpoints byte-exact; fixture rows verbatim".into())
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut failed = 0;
    let mut report_line = |name: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    };
    let guarded = |f: &dyn Fn() -> Outcome| -> Outcome {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        })
    };

    let simple: [Criterion; 4] = [
        ("voxelization_oracle", voxelization_oracle),
        ("gradient_checks", gradient_checks),
        ("metrics_oracle", metrics_oracle),
        ("loss_analytics", loss_analytics),
    ];
    for (name, f) in simple {
        if wanted(name) {
            report_line(name, guarded(&f));
        }
    }
    if wanted("synthetic_ce_reduction") || wanted("synthetic_fusion_gain") {
        let trained = catch_unwind(AssertUnwindSafe(synthetic_runs)).unwrap_or_else(|_| Err("training panicked".into()));
        match trained {
            Ok((runs, elapsed)) => {
                report_line("synthetic_ce_reduction", ce_reduction(&runs, elapsed));
                report_line("synthetic_fusion_gain", fusion_gain(&runs));
            }
            Err(e) => {
                report_line("synthetic_ce_reduction", Err(e.clone()));
                report_line("synthetic_fusion_gain", Err(e));
            }
        }
    }
    let rest: [Criterion; 2] = [
        ("event_foreground", event_foreground),
        ("format_round_trips", format_round_trips),
    ];
    for (name, f) in rest {
        if wanted(name) {
            report_line(name, guarded(&f));
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
