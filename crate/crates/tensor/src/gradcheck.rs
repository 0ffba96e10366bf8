//! Central finite-difference verification of the reverse pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, floor)`,
    /// so gradients below `floor` are compared in absolute terms.
    pub floor: f64,
    /// Entries checked per input; `None` checks all of them.
    pub max_entries: Option<usize>,
    /// Seed for choosing the checked entries.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-4,
            floor: 1e-6,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InputReport {
    pub input: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn worst(&self) -> Option<&InputReport> {
        self.inputs
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.numel() != 1 {
        return Err(TensorError::Dimension(format!(
            "grad_check: closure must return a scalar, got shape {:?}",
            value.shape()
        )));
    }
    Ok(value.item())
}

/// Compares the reverse-mode gradient of a scalar-valued closure against
/// central differences, input by input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(TensorError::Dimension(format!(
            "grad_check: closure must return a scalar, got shape {:?}",
            tape.shape(out)
        )));
    }
    let grads = tape.backward(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let numel = inputs[idx].numel();
        let zeros;
        let analytic = match grads.get(*var) {
            Some(g) => g.data(),
            None => {
                zeros = vec![0.0; numel];
                &zeros
            }
        };
        let entries: Vec<usize> = match cfg.max_entries {
            Some(m) if m < numel => {
                let mut e = sample(&mut rng, numel, m).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..numel).collect(),
        };
        let mut report = InputReport {
            input: idx,
            checked: entries.len(),
            max_rel_error: 0.0,
            worst_entry: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &e in &entries {
            let orig = inputs[idx].data()[e];
            probe[idx].data_mut()[e] = orig + cfg.step;
            let plus = evaluate(&f, &probe)?;
            probe[idx].data_mut()[e] = orig - cfg.step;
            let minus = evaluate(&f, &probe)?;
            probe[idx].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(analytic[e], numeric, cfg.floor);
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                report.worst_entry = e;
                report.analytic = analytic[e];
                report.numeric = numeric;
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        inputs: reports,
        tolerance: cfg.tolerance,
    })
}
