//! Confusion-matrix segmentation metrics: pixel accuracy, mean IoU and
//! frequency-weighted IoU.

use std::ops::Add;

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE, NUM_CLASSES};

/// `K x K` pixel tally; rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(NUM_CLASSES)
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    /// Adds one prediction/ground-truth pair; ignored ground-truth pixels are skipped.
    pub fn add_pair(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::Dimension(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        self.add_pixels(pred.data(), gt.data())
    }

    /// Tallies flat prediction/ground-truth slices of equal length.
    pub fn add_pixels(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::Dimension(format!(
                "{} predictions vs {} ground-truth pixels",
                pred.len(),
                gt.len()
            )));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE {
                continue;
            }
            if p as usize >= self.classes || g as usize >= self.classes {
                return Err(Error::Validation(format!(
                    "label pair (gt {g}, pred {p}) outside {} classes",
                    self.classes
                )));
            }
            self.counts[g as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Pure accumulation: returns a new matrix with the pair added.
    pub fn accumulate(&self, pred: &LabelMap, gt: &LabelMap) -> Result<Self> {
        let mut next = self.clone();
        next.add_pair(pred, gt)?;
        Ok(next)
    }
}

impl Add for &ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, other: &ConfusionMatrix) -> ConfusionMatrix {
        assert_eq!(self.classes, other.classes, "class counts differ");
        ConfusionMatrix {
            classes: self.classes,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MeanMode {
    /// Classes with an empty union are left out of the mean.
    #[default]
    ExcludeAbsent,
    /// Mean over all classes, absent ones counting as 0.
    Strict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub acc: Option<f64>,
    pub miou: Option<f64>,
    pub fwiou: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
}

impl Metrics {
    pub fn absent(classes: usize) -> Self {
        Self {
            acc: None,
            miou: None,
            fwiou: None,
            per_class_iou: vec![None; classes],
        }
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    metrics_with(cm, MeanMode::ExcludeAbsent)
}

pub fn metrics_with(cm: &ConfusionMatrix, mode: MeanMode) -> Metrics {
    let k = cm.classes();
    let total = cm.total();
    if total == 0 {
        return Metrics::absent(k);
    }
    let gt_count: Vec<u64> = (0..k).map(|g| (0..k).map(|p| cm.get(g, p)).sum()).collect();
    let pred_count: Vec<u64> = (0..k).map(|p| (0..k).map(|g| cm.get(g, p)).sum()).collect();
    let per_class_iou: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let union = gt_count[c] + pred_count[c] - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    // IoU terms as exact fractions so that small hand-checkable cases come
    // out correctly rounded.
    let terms: Vec<(u128, u128)> = (0..k)
        .filter_map(|c| {
            let tp = cm.get(c, c) as u128;
            let union = (gt_count[c] + pred_count[c]) as u128 - tp;
            (union > 0).then_some((tp, union))
        })
        .collect();
    let divisor = match mode {
        MeanMode::ExcludeAbsent => terms.len() as u128,
        MeanMode::Strict => k as u128,
    };
    let miou = fraction_sum(terms.iter().map(|&(tp, u)| (tp, u * divisor)));
    let weighted = (0..k).filter_map(|c| {
        let tp = cm.get(c, c) as u128;
        let union = (gt_count[c] + pred_count[c]) as u128 - tp;
        (union > 0).then(|| (gt_count[c] as u128 * tp, union * total as u128))
    });
    let fwiou = fraction_sum(weighted);
    Metrics {
        acc: Some(cm.trace() as f64 / total as f64),
        miou: Some(miou),
        fwiou: Some(fwiou),
        per_class_iou,
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Sum of `num / den` terms, exact while it fits in `u128`, otherwise a
/// plain floating-point sum.
fn fraction_sum(terms: impl Iterator<Item = (u128, u128)> + Clone) -> f64 {
    let exact = terms.clone().try_fold((0u128, 1u128), |(n, d), (tn, td)| {
        let g = gcd(tn, td).max(1);
        let (tn, td) = (tn / g, td / g);
        let l = d / gcd(d, td) * td;
        let num = n.checked_mul(l / d)?.checked_add(tn.checked_mul(l / td)?)?;
        let g = gcd(num, l).max(1);
        Some((num / g, l / g))
    });
    match exact {
        Some((n, d)) if n < (1 << 53) && d < (1 << 53) => n as f64 / d as f64,
        _ => terms.map(|(n, d)| n as f64 / d as f64).sum(),
    }
}
