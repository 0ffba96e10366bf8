//! Result tables in CSV and aligned-text form.

use crate::error::{Error, Result};
use crate::labels::{CLASS_NAMES, FOREGROUND, NUM_CLASSES};
use crate::metrics::Metrics;

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub config: String,
    pub split: String,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

pub fn report(rows: &[ResultRow], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => render_csv(rows),
        ReportFormat::Text => render_table(rows),
    }
    .into_bytes()
}

pub fn csv_header() -> String {
    let mut cols = vec!["model", "config", "split", "acc", "miou", "fwiou"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend(CLASS_NAMES.iter().map(|n| n.replace(' ', "_")));
    cols.join(",")
}

fn field(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        let mut cols = vec![field(&r.model), field(&r.config), field(&r.split)];
        cols.extend([r.metrics.acc, r.metrics.miou, r.metrics.fwiou].map(cell));
        for k in 0..NUM_CLASSES {
            cols.push(cell(r.metrics.per_class_iou.get(k).copied().flatten()));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let mut offset = 0;
    match lines.next() {
        Some(h) if h.trim_end() == csv_header() => offset += h.len() + 1,
        _ => return Err(Error::parse(0, "missing or unexpected CSV header")),
    }
    let num = |s: &str, at: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::parse(at, format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        let at = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 6 + NUM_CLASSES {
            return Err(Error::parse(at, format!("expected {} columns, got {}", 6 + NUM_CLASSES, cols.len())));
        }
        let per_class_iou = cols[6..].iter().map(|c| num(c, at)).collect::<Result<_>>()?;
        rows.push(ResultRow {
            model: cols[0].to_string(),
            config: cols[1].to_string(),
            split: cols[2].to_string(),
            metrics: Metrics {
                acc: num(cols[3], at)?,
                miou: num(cols[4], at)?,
                fwiou: num(cols[5], at)?,
                per_class_iou,
            },
        });
    }
    Ok(rows)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", x * 100.0)).unwrap_or_else(|| "-".into())
}

/// Aligned table: model, config, split, the ten foreground-class IoUs, then
/// Acc / mIoU / fwIoU, all in percent with one decimal.
pub fn render_table(rows: &[ResultRow]) -> String {
    let mut header: Vec<String> = ["Model", "Config", "Split"].map(String::from).to_vec();
    header.extend(FOREGROUND.iter().map(|(_, short)| short.to_string()));
    header.extend(["Acc", "mIoU", "fwIoU"].map(String::from));

    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cols = vec![r.model.clone(), r.config.clone(), r.split.clone()];
            cols.extend(
                FOREGROUND
                    .iter()
                    .map(|&(k, _)| pct(r.metrics.per_class_iou.get(k).copied().flatten())),
            );
            cols.extend([r.metrics.acc, r.metrics.miou, r.metrics.fwiou].map(pct));
            cols
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            body.iter()
                .map(|row| row[c].chars().count())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cols: &[String]| {
        cols.iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 3 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn row(model: &str, config: &str, split: &str, acc: Option<f64>, miou: f64, fwiou: Option<f64>) -> ResultRow {
    let f = |v: f64| v / 100.0;
    ResultRow {
        model: model.into(),
        config: config.into(),
        split: split.into(),
        metrics: Metrics {
            acc: acc.map(f),
            miou: Some(f(miou)),
            fwiou: fwiou.map(f),
            per_class_iou: vec![None; NUM_CLASSES],
        },
    }
}

/// Published reference rows: the representation/fusion ablation (source
/// and target mIoU) and the domain-adaptation comparison with per-class
/// foreground IoU on the target split.
pub fn fixture_rows() -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let ablation: [(&str, &str, f64, f64); 9] = [
        ("SwiftNet", "Event - B=1", 35.6, 2.3),
        ("SwiftNet", "Event - B=2", 36.0, 19.7),
        ("SwiftNet", "Event - B=18", 36.6, 19.8),
        ("SwiftNet", "RGB - -", 69.2, 20.1),
        ("ISSAFE-RFNet", "RGB+Event s2d B=1", 68.3, 16.7),
        ("ISSAFE-RFNet", "RGB+Event s2d B=2", 68.4, 23.0),
        ("ISSAFE-RFNet", "RGB+Event s2d B=18", 67.1, 10.4),
        ("ISSAFE-SwiftNet", "RGB+Event d2s P", 69.0, 24.5),
        ("ISSAFE-SwiftNet", "RGB+Event d2s P+N", 69.4, 28.3),
    ];
    for (model, config, source, target) in ablation {
        rows.push(row(model, config, "source", None, source, None));
        rows.push(row(model, config, "target", None, target, None));
    }

    // Foreground IoU (Train has no pixels in the target split), then
    // target@512x256, source and target (Acc, mIoU, fwIoU).
    type Adapt = (&'static str, &'static str, [Option<f64>; 10], [f64; 9]);
    let adaptation: [Adapt; 5] = [
        (
            "CLAN",
            "-",
            [Some(15.2), Some(5.3), Some(4.0), Some(3.4), Some(32.6), Some(8.8), Some(28.8), None, Some(4.2), Some(0.1)],
            [34.0, 19.4, 45.5, 56.3, 43.7, 77.2, 28.1, 16.8, 38.3],
        ),
        (
            "CLAN",
            "f",
            [Some(17.2), Some(21.5), Some(8.4), Some(6.3), Some(63.5), Some(33.4), Some(33.1), None, Some(3.7), Some(6.2)],
            [46.3, 31.7, 67.2, 70.4, 62.4, 87.0, 40.1, 28.8, 63.8],
        ),
        (
            "CLAN",
            "f+i",
            [Some(17.0), Some(20.0), Some(9.4), Some(5.2), Some(64.3), Some(36.8), Some(35.9), None, Some(5.6), Some(7.7)],
            [47.3, 32.4, 66.3, 73.2, 64.8, 87.3, 39.4, 28.2, 60.6],
        ),
        (
            "DOF-CLAN",
            "f+i",
            [Some(18.1), Some(17.7), Some(9.5), Some(8.1), Some(64.3), Some(34.8), Some(34.9), None, Some(5.1), Some(7.3)],
            [48.3, 33.4, 69.6, 71.6, 62.9, 87.4, 40.9, 29.2, 64.3],
        ),
        (
            "ISSAFE-CLAN",
            "f+i",
            [Some(17.0), Some(19.5), Some(10.0), Some(8.8), Some(65.6), Some(39.5), Some(39.7), None, Some(6.1), Some(7.0)],
            [48.2, 33.1, 68.2, 73.2, 63.9, 87.5, 42.1, 30.0, 64.5],
        ),
    ];
    for (model, config, fg, m) in adaptation {
        rows.push(row(model, config, "target-512x256", Some(m[0]), m[1], Some(m[2])));
        rows.push(row(model, config, "source", Some(m[3]), m[4], Some(m[5])));
        let mut target = row(model, config, "target", Some(m[6]), m[7], Some(m[8]));
        for ((k, _), v) in FOREGROUND.iter().zip(fg) {
            target.metrics.per_class_iou[*k] = v.map(|x| x / 100.0);
        }
        rows.push(target);
    }
    rows
}
