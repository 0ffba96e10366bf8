use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use evseg_core::dataset::{
    condition_slice, load_dataset, write_dataset, write_sequence_events, ConditionFilter, Conditions, Light, Occasion,
    SequenceData, SequenceRecord, Weather,
};
use evseg_core::events::{read_events, simulate_events, write_events, EventFormat, SimulatorConfig};
use evseg_core::experiment::{self, RunConfig};
use evseg_core::labels::{read_label, LabelMap};
use evseg_core::metrics::{metrics, ConfusionMatrix};
use evseg_core::models::{ModelKind, Network};
use evseg_core::raster::read_raster;
use evseg_core::repr::{represent, table2_config, write_volume, VolumeFile, TABLE2_NAMES};
use evseg_core::report::{fixture_rows, parse_csv, report as render, ReportFormat, ResultRow};
use evseg_core::synthetic::{generate_sequence, Sample, SuiteConfig, SyntheticSceneConfig};
use evseg_core::image::Image;
use evseg_tensor::checkpoint;
use rayon::prelude::*;

use crate::config::{ModelFile, TrainFile};
use crate::error::{CliError, Result};
use crate::output::{manifest_path_for, write_atomic, write_dir_atomic, write_manifest, RunClock};
use crate::{EvalArgs, FileFormat, GenerateArgs, ModelArg, Pairs, ReportArgs, SimulateArgs, TableFormat, TrainArgs, VoxelizeArgs};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_image(path: &Path) -> Result<Image> {
    let bytes = read_bytes(path)?;
    Ok(read_raster(bytes.as_slice())?.to_image())
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = if dir.join("frames").is_dir() { dir.join("frames") } else { dir.to_path_buf() };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ras"))
        .collect();
    files.sort();
    Ok(files)
}

fn event_format(f: FileFormat) -> (EventFormat, &'static str) {
    match f {
        FileFormat::Binary => (EventFormat::Binary, "evt"),
        FileFormat::Text => (EventFormat::Text, "txt"),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let clock = RunClock::start();
    let sim = SimulatorConfig {
        contrast_threshold: args.threshold,
        log_eps: args.log_eps,
        max_events_per_pixel: args.max_events,
    };
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let files = frame_files(&args.frames)?;
    if files.len() < 2 {
        return Err(CliError::Usage(format!(
            "{} holds {} frame(s); need at least two",
            args.frames.display(),
            files.len()
        )));
    }
    // Pair ending at 1-based frame `f` covers `[f - 1, f]`.
    let ends: Vec<usize> = match args.pairs {
        Pairs::All => (2..=files.len()).collect(),
        Pairs::Anchor => vec![files.len()],
    };
    let (format, ext) = event_format(args.format);
    let streams = ends
        .par_iter()
        .map(|&f| {
            let a = read_image(&files[f - 2])?.to_gray();
            let b = read_image(&files[f - 1])?.to_gray();
            Ok(simulate_events(&a, &b, (f - 1) as f64, f as f64, &sim)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = ends.iter().map(|f| format!("events_{f:04}.{ext}")).collect();
    write_dir_atomic(&args.out, |dir| {
        for (name, s) in names.iter().zip(&streams) {
            write_atomic(&dir.join(name), &write_events(s, format))?;
        }
        let outputs = names.iter().map(|n| args.out.join(n)).collect();
        let m = clock.manifest("simulate", None, None, files.clone(), outputs);
        write_manifest(&dir.join("manifest.json"), &m)
    })?;
    let total: usize = streams.iter().map(|s| s.len()).sum();
    println!("{} stream(s), {total} event(s) -> {}", streams.len(), args.out.display());
    Ok(())
}

fn check_repr_name(name: &str) -> Result<()> {
    if TABLE2_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown representation {name:?}; valid names: {}",
            TABLE2_NAMES.join(", ")
        )))
    }
}

pub fn voxelize(args: &VoxelizeArgs) -> Result<()> {
    let clock = RunClock::start();
    check_repr_name(&args.repr)?;
    let bytes = read_bytes(&args.events)?;
    let format = if bytes.starts_with(b"EVT1") { EventFormat::Binary } else { EventFormat::Text };
    let stream = read_events(bytes.as_slice(), format)?;
    let cfg = table2_config(&args.repr, stream.height() as usize, stream.width() as usize)?;
    let volume = represent(&stream, &cfg)?;
    let mut out = Vec::new();
    write_volume(&VolumeFile::from(&volume), &mut out)?;
    write_atomic(&args.out, &out)?;
    let m = clock.manifest("voxelize", None, None, vec![args.events.clone()], vec![args.out.clone()]);
    write_manifest(&manifest_path_for(&args.out), &m)?;
    let [b, h, w] = volume.shape();
    println!(
        "{} event(s) -> {b}x{h}x{w} {} volume ({} dropped) -> {}",
        stream.len(),
        args.repr,
        volume.dropped(),
        args.out.display()
    );
    Ok(())
}

/// Conditions for a synthetic sequence: dim scenes count as night.
fn synthetic_conditions(illumination: f64) -> Conditions {
    Conditions {
        light: if illumination < 0.5 { Light::Night } else { Light::Day },
        weather: Weather::Sunny,
        occasion: Occasion::Urban,
    }
}

fn write_synthetic(root: &Path, cfg: &SyntheticSceneConfig, count: usize) -> Result<()> {
    let sequences = (0..count as u64)
        .into_par_iter()
        .map(|i| Ok((i, generate_sequence(cfg, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<SequenceData> = sequences
        .iter()
        .map(|(i, s)| SequenceData {
            id: format!("syn{i:04}"),
            frames: s.frames.clone(),
            annotated_index: s.frames.len(),
            annotation: s.labels.last().cloned(),
            conditions: synthetic_conditions(s.illumination),
        })
        .collect();
    write_dataset(root, &data)?;
    for (d, (_, s)) in data.iter().zip(&sequences) {
        let last = s.events.last().expect("at least two frames");
        write_sequence_events(root, &d.id, d.annotated_index, last)?;
    }
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let clock = RunClock::start();
    let suite = SuiteConfig::standard(args.seed);
    write_dir_atomic(&args.out, |dir| {
        write_synthetic(&dir.join("train"), &suite.train, args.train)?;
        write_synthetic(&dir.join("test"), &suite.test, args.test)?;
        let m = clock.manifest(
            "generate",
            None,
            Some(args.seed),
            vec![],
            vec![args.out.join("train"), args.out.join("test")],
        );
        write_manifest(&dir.join("manifest.json"), &m)
    })?;
    println!("{} train / {} test sequences -> {}", args.train, args.test, args.out.display());
    Ok(())
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Rgb => ModelKind::RgbOnly,
        ModelArg::Event => ModelKind::EventOnly,
        ModelArg::S2d => ModelKind::S2d,
        ModelArg::D2s => ModelKind::D2s,
    }
}

/// Checks the model/representation pairing and fills in the default representation.
pub fn resolve_repr(kind: ModelKind, repr: Option<&str>) -> Result<Option<String>> {
    if let Some(r) = repr {
        check_repr_name(r)?;
    }
    match (kind, repr) {
        (ModelKind::RgbOnly, Some(r)) => Err(CliError::Usage(format!(
            "--model rgb takes no event representation, got --repr {r}"
        ))),
        (ModelKind::RgbOnly, None) => Ok(None),
        (ModelKind::D2s, Some(r)) if r != "P" && r != "P+N" => Err(CliError::Usage(format!(
            "--model d2s predicts event frames and needs --repr P or P+N, got {r}"
        ))),
        (ModelKind::D2s, None) => Ok(Some("P+N".into())),
        (_, None) => Ok(Some("B2".into())),
        (_, Some(r)) => Ok(Some(r.to_string())),
    }
}

fn labelled_samples(records: &[&SequenceRecord]) -> Result<Vec<(String, Sample)>> {
    let sim = SimulatorConfig::default();
    let samples = records
        .par_iter()
        .map(|r| Ok(r.labelled_sample(&sim)?.map(|s| (r.id.clone(), s))))
        .collect::<Result<Vec<_>>>()?;
    Ok(samples.into_iter().flatten().collect())
}

fn ckpt_sidecar(ckpt: &Path, suffix: &str) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    ckpt.with_file_name(name)
}

fn loss_csv(losses: &[evseg_core::train::StepLosses]) -> String {
    let mut out = String::from("step,ce,bce,total\n");
    for (i, l) in losses.iter().enumerate() {
        let bce = l.bce.map(|b| b.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{bce},{}\n", i + 1, l.ce, l.total));
    }
    out
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let clock = RunClock::start();
    let file = match &args.config {
        Some(p) => TrainFile::read(p)?,
        None => TrainFile::default(),
    };
    let kind = match (args.model, &file.model) {
        (Some(m), _) => model_kind(m),
        (None, Some(m)) => ModelKind::parse(m).map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("--model is required (or `model` in --config)".into())),
    };
    let repr = resolve_repr(kind, args.repr.as_deref().or(file.repr.as_deref()))?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut cfg = RunConfig::new(kind, repr.as_deref(), seed);
    if let Some(s) = file.scale {
        cfg.scale = s;
    }
    cfg.steps = args.steps.or(file.train.steps).unwrap_or(cfg.steps);
    cfg.batch_size = args.batch_size.or(file.train.batch_size).unwrap_or(cfg.batch_size);
    cfg.lr = args.lr.or(file.train.lr).unwrap_or(cfg.lr);
    cfg.momentum = file.train.momentum.unwrap_or(cfg.momentum);
    cfg.loss.ce_weight = file.loss.ce_weight.unwrap_or(cfg.loss.ce_weight);
    cfg.loss.bce_weight = file.loss.bce_weight.unwrap_or(cfg.loss.bce_weight);
    cfg.event_target = file.d2s.event_target.unwrap_or(cfg.event_target);
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(CliError::Usage("batch size and learning rate must be positive".into()));
    }

    let records = load_dataset(&args.data)?;
    let samples: Vec<Sample> = labelled_samples(&records.iter().collect::<Vec<_>>())?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let first = samples
        .first()
        .ok_or_else(|| CliError::Config(format!("{} has no annotated sequences", args.data.display())))?;
    let repr_cfg = cfg.repr_config(first.label.height(), first.label.width())?;
    let mut network = cfg.network_config(repr_cfg.as_ref());
    if let Some(mode) = file.context.spp_event_mode {
        network.context.spp_event_mode = mode;
    }
    cfg.network = Some(network.clone());

    let (net, losses) = experiment::train::<f32>(&cfg, &samples)?;

    let mut ckpt = Vec::new();
    checkpoint::save(net.params(), &mut ckpt)?;
    let losses_path = args.losses.clone().unwrap_or_else(|| ckpt_sidecar(&args.ckpt, ".losses.csv"));
    let model_path = ckpt_sidecar(&args.ckpt, ".model.json");
    let model = ModelFile {
        kind,
        repr: repr.clone(),
        event_target: cfg.event_target,
        network,
    };
    write_atomic(&args.ckpt, &ckpt)?;
    write_atomic(&model_path, (serde_json::to_string_pretty(&model).expect("model serializes") + "\n").as_bytes())?;
    write_atomic(&losses_path, loss_csv(&losses).as_bytes())?;
    let m = clock.manifest(
        "train",
        args.config.clone(),
        Some(seed),
        vec![args.data.clone()],
        vec![args.ckpt.clone(), model_path, losses_path.clone()],
    );
    write_manifest(&manifest_path_for(&args.ckpt), &m)?;
    let last = losses.last().map_or(f64::NAN, |l| l.ce);
    let first_ce = losses.first().map_or(f64::NAN, |l| l.ce);
    println!(
        "{} on {} sample(s), {} step(s): cross-entropy {first_ce:.4} -> {last:.4}; checkpoint {}",
        kind.name(),
        samples.len(),
        losses.len(),
        args.ckpt.display()
    );
    Ok(())
}

fn slice_records<'a>(records: &'a [SequenceRecord], slices: &[String]) -> Result<(Vec<&'a SequenceRecord>, String)> {
    let filters = slices
        .iter()
        .map(|s| s.parse::<ConditionFilter>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let picked = condition_slice(records, |c| filters.iter().all(|f| f.matches(c)));
    let name = if slices.is_empty() { "all".to_string() } else { slices.join("&") };
    Ok((picked, name))
}

fn predictions_confusion(dir: &Path, samples: &[(String, Sample)]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for (id, s) in samples {
        let path = dir.join(format!("{id}.ras"));
        let pred: LabelMap = read_label(BufReader::new(fs::File::open(&path).map_err(|e| CliError::io(&path, e))?))?;
        cm.add_pair(&pred, &s.label)?;
    }
    Ok(cm)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let clock = RunClock::start();
    let model = match &args.ckpt {
        Some(ckpt) => Some(ModelFile::read(&ckpt_sidecar(ckpt, ".model.json"))?),
        None => None,
    };
    let records = load_dataset(&args.data)?;
    let (picked, split) = slice_records(&records, &args.slice)?;
    let samples = labelled_samples(&picked)?;
    if samples.is_empty() {
        return Err(CliError::Config(format!(
            "no annotated sequences in {} for slice {split}",
            args.data.display()
        )));
    }
    let mut inputs = vec![args.data.clone()];
    let (cm, model_name, config_name) = match (&model, &args.ckpt, &args.pred) {
        (Some(m), Some(ckpt), _) => {
            let mut net = Network::<f32>::build(&m.network, 0)?;
            checkpoint::load(net.params_mut(), read_bytes(ckpt)?.as_slice())?;
            let plain: Vec<Sample> = samples.iter().map(|(_, s)| s.clone()).collect();
            let (h, w) = (plain[0].label.height(), plain[0].label.width());
            let repr = m.repr.as_deref().map(|r| table2_config(r, h, w)).transpose()?;
            let examples = experiment::prepare(&plain, m.kind, repr.as_ref())?;
            inputs.push(ckpt.clone());
            let cm = experiment::evaluate(&net, &examples, m.event_target)?;
            (cm, m.kind.name().to_string(), m.repr.clone().unwrap_or_else(|| "-".into()))
        }
        (_, _, Some(dir)) => {
            inputs.push(dir.clone());
            (predictions_confusion(dir, &samples)?, "prediction".to_string(), "-".to_string())
        }
        _ => return Err(CliError::Usage("eval needs --ckpt or --pred".into())),
    };
    let row = ResultRow {
        model: model_name,
        config: config_name,
        split,
        metrics: metrics(&cm),
    };
    write_atomic(&args.out, &render(std::slice::from_ref(&row), ReportFormat::Csv))?;
    let m = clock.manifest("eval", None, None, inputs, vec![args.out.clone()]);
    write_manifest(&manifest_path_for(&args.out), &m)?;
    print!("{}", String::from_utf8_lossy(&render(&[row], ReportFormat::Text)));
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let clock = RunClock::start();
    let mut rows = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        rows.extend(parse_csv(&text)?);
    }
    if args.fixtures {
        rows.extend(fixture_rows());
    }
    let format = match args.format {
        TableFormat::Text => ReportFormat::Text,
        TableFormat::Csv => ReportFormat::Csv,
    };
    let bytes = render(&rows, format);
    match &args.out {
        Some(out) => {
            write_atomic(out, &bytes)?;
            let m = clock.manifest("report", None, None, args.inputs.clone(), vec![out.clone()]);
            write_manifest(&manifest_path_for(out), &m)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}
