//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use evseg_core::events::{Event, EventStream, Polarity};
use evseg_core::labels::IGNORE;
use evseg_core::synthetic::{dilate, SyntheticSequence};
use evseg_core::repr::{PolarityMode, ReprConfig, ReprMode, TimeNormalization};
use rand::Rng;

/// Event-by-bin double loop: every event adds `max(0, 1 - |b - t~|)` to every
/// bin `b` of its block. Frame mode counts events instead.
pub fn brute_force_volume(stream: &EventStream, cfg: &ReprConfig) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let merged = cfg.polarity == PolarityMode::Merged;
    let channels = if merged { cfg.bins_pos } else { cfg.bins_pos + cfg.bins_neg };
    let mut grid = vec![0.0; channels * h * w];
    let events = stream.events();
    // Time range of positives, negatives and all events.
    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for o in events {
        for r in [o.p as usize, 2] {
            ranges[r] = (ranges[r].0.min(o.t), ranges[r].1.max(o.t));
        }
    }
    for e in events {
        let (offset, n) = if merged || e.p == Polarity::Positive {
            (0, cfg.bins_pos)
        } else {
            (cfg.bins_pos, cfg.bins_neg)
        };
        if n == 0 {
            continue;
        }
        let idx = |b: usize| (offset + b) * h * w + e.y as usize * w + e.x as usize;
        if cfg.mode == ReprMode::Frame {
            grid[idx(0)] += 1.0;
            continue;
        }
        let (t_first, t_last) = ranges[if merged || cfg.normalization == TimeNormalization::Joint {
            2
        } else {
            e.p as usize
        }];
        let tn = if t_last > t_first {
            (n - 1) as f64 * (e.t - t_first) / (t_last - t_first)
        } else {
            0.0
        };
        for b in 0..n {
            let k = 1.0 - (b as f64 - tn).abs();
            if k > 0.0 {
                grid[idx(b)] += k;
            }
        }
    }
    grid
}

/// Random sorted stream with up to `max_events` events on a `w x h` sensor.
pub fn random_stream(rng: &mut impl Rng, w: u32, h: u32, max_events: usize) -> EventStream {
    let n = rng.gen_range(0..=max_events);
    let t0: f64 = rng.gen_range(-5.0..5.0);
    let span: f64 = rng.gen_range(1e-3..10.0);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            // A few exact repeats exercise equal timestamps.
            let t = if rng.gen_bool(0.05) { t0 } else { t0 + rng.gen_range(0.0..=span) };
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(t, rng.gen_range(0..w) as u16, rng.gen_range(0..h) as u16, p)
        })
        .collect();
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    EventStream::new(w, h, t0, t0 + span, events).unwrap()
}

pub struct OracleMetrics {
    pub acc: Option<f64>,
    pub miou: Option<f64>,
    pub fwiou: Option<f64>,
    pub iou: Vec<Option<f64>>,
}

/// Metrics straight from per-pixel definitions, without a confusion matrix.
pub fn oracle_metrics(pairs: &[(&[u8], &[u8])], k: usize) -> OracleMetrics {
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fnn = vec![0u64; k];
    let mut gt_n = vec![0u64; k];
    let (mut correct, mut total) = (0u64, 0u64);
    for (pred, gt) in pairs {
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            if g == IGNORE {
                continue;
            }
            total += 1;
            gt_n[g as usize] += 1;
            if p == g {
                correct += 1;
                tp[g as usize] += 1;
            } else {
                fp[p as usize] += 1;
                fnn[g as usize] += 1;
            }
        }
    }
    if total == 0 {
        return OracleMetrics { acc: None, miou: None, fwiou: None, iou: vec![None; k] };
    }
    let iou: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let d = tp[c] + fp[c] + fnn[c];
            (d > 0).then(|| tp[c] as f64 / d as f64)
        })
        .collect();
    let defined: Vec<f64> = iou.iter().flatten().copied().collect();
    let miou = defined.iter().sum::<f64>() / defined.len() as f64;
    let fwiou = (0..k)
        .filter_map(|c| iou[c].map(|v| gt_n[c] as f64 / total as f64 * v))
        .sum();
    OracleMetrics {
        acc: Some(correct as f64 / total as f64),
        miou: Some(miou),
        fwiou: Some(fwiou),
        iou,
    }
}

/// Mean softmax cross entropy by a per-pixel scalar loop.
pub fn oracle_ce(logits: &[f64], shape: [usize; 4], targets: &[u8]) -> f64 {
    let [n, k, h, w] = shape;
    let (mut total, mut count) = (0.0, 0usize);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let t = targets[(b * h + y) * w + x];
                if t == IGNORE {
                    continue;
                }
                let at = |c: usize| logits[((b * k + c) * h + y) * w + x];
                let m = (0..k).map(at).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..k).map(|c| (at(c) - m).exp()).sum::<f64>().ln();
                total += lse - at(t as usize);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Mean binary cross entropy from the probability form.
pub fn oracle_bce(logits: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| {
            let s = 1.0 / (1.0 + (-z).exp());
            -(t * s.ln() + (1.0 - t) * (1.0 - s).ln())
        })
        .sum();
    total / logits.len() as f64
}

use evseg_core::models::{ModelKind, Network, NetworkConfig, Scale};
use evseg_tensor::{grad_check, GradCheckConfig, GradCheckReport, Graph, ParamStore, Tensor};

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Gives every bias and the (zero-initialised) classifier random values so
/// that no gradient path is trivially zero.
pub fn randomize(params: &mut ParamStore<f64>, rng: &mut impl Rng, skip: impl Fn(&str) -> bool) {
    for id in params.ids().collect::<Vec<_>>() {
        let name = params.name(id).to_string();
        if skip(&name) {
            continue;
        }
        let t = params.get_mut(id);
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        } else if name.starts_with("decoder.head") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
}

/// Event channels for the default representation of each model kind.
pub fn event_channels(kind: ModelKind) -> usize {
    match kind {
        ModelKind::D2s => 2,
        _ => 2,
    }
}

pub fn toy_network(kind: ModelKind, seed: u64) -> Network<f64> {
    let cfg = NetworkConfig::new(kind, event_channels(kind), Scale::Toy);
    let mut net = Network::<f64>::build(&cfg, seed).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    randomize(net.params_mut(), &mut rng, |_| false);
    net
}

use rand::SeedableRng;

/// Finite-difference check of the full training objective with respect to
/// every parameter tensor (a few sampled entries each) on a 32x32 input.
/// Gradients under 1e-5 are compared in absolute terms: central differences
/// at h = 1e-6 carry a few 1e-9 of round-off on an O(1) loss.
pub fn network_grad_check(kind: ModelKind, seed: u64, entries: usize) -> GradCheckReport {
    network_grad_check_with(kind, seed, entries, 1e-6, 1e-5)
}

pub fn network_grad_check_with(kind: ModelKind, seed: u64, entries: usize, step: f64, floor: f64) -> GradCheckReport {
    let net = toy_network(kind, seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rgb = random_tensor(&mut rng, vec![1, 3, 32, 32], -1.0, 1.0);
    let events = random_tensor(&mut rng, vec![1, 2, 32, 32], 0.0, 2.0);
    let labels: Vec<u8> = (0..32 * 32).map(|_| rng.gen_range(0..19)).collect();
    let target = random_tensor(&mut rng, vec![1, 2, 32, 32], 0.0, 1.0);
    let params: Vec<Tensor<f64>> = net.params().values().to_vec();
    let store = net.params();
    grad_check(
        |tape, vars| {
            let mut g = Graph::bind(std::mem::take(tape), store, vars)?;
            let r = kind.takes_rgb().then(|| g.input(rgb.clone()));
            let e = kind.takes_events().then(|| g.input(events.clone()));
            let out = net.forward(&mut g, r, e).map_err(to_tensor_err)?;
            let mut loss = g.tape.softmax_cross_entropy(out.seg, &labels)?;
            if let Some(ev) = out.events {
                let b = g.tape.bce_with_logits(ev, &target)?;
                loss = g.tape.add(loss, b)?;
            }
            *tape = g.into_tape();
            Ok(loss)
        },
        &params,
        &GradCheckConfig {
            max_entries: Some(entries),
            tolerance: 1e-3,
            seed,
            step,
            floor,
        },
    )
    .unwrap()
}

fn to_tensor_err(e: evseg_core::Error) -> evseg_tensor::TensorError {
    evseg_tensor::TensorError::Value(e.to_string())
}

/// Fraction of events inside the swept mask dilated by the blur length.
pub fn foreground_fraction(seq: &SyntheticSequence) -> (usize, usize) {
    let (h, w) = (seq.labels[0].height(), seq.labels[0].width());
    let radius = seq.blur.ceil() as usize;
    let (mut inside, mut total) = (0, 0);
    for (i, stream) in seq.events.iter().enumerate() {
        let mask = dilate(&seq.swept_mask(i, i + 1), h, w, radius);
        total += stream.len();
        inside += stream
            .events()
            .iter()
            .filter(|e| mask[e.y as usize * w + e.x as usize])
            .count();
    }
    (inside, total)
}
