//! Ramp-style class encoding: the target row of the true class rises
//! linearly over the sequence, every other row stays at zero. The predicted
//! class is the row with the largest time-averaged real output.

use crate::tensor::ComplexTensor;

use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct RampTarget {
    /// `[num_classes, T]`, row-major.
    pub matrix: Vec<f64>,
    pub num_classes: usize,
    pub steps: usize,
    pub label: usize,
}

impl RampTarget {
    pub fn row(&self, class: usize) -> &[f64] {
        &self.matrix[class * self.steps..(class + 1) * self.steps]
    }

    pub fn to_tensor(&self) -> ComplexTensor {
        ComplexTensor::from_real(&[self.num_classes, self.steps], self.matrix.clone())
            .expect("sized by construction")
    }
}

/// Row `label` goes 0 → 1 over `t = 0..T-1`.
pub fn make_ramp_targets(num_classes: usize, steps: usize, label: usize) -> Result<RampTarget, TrainError> {
    if label >= num_classes {
        return Err(TrainError::Label { label, num_classes });
    }
    if steps < 2 {
        return Err(TrainError::Config(format!("ramp needs at least 2 steps, got {steps}")));
    }
    let mut matrix = vec![0.0; num_classes * steps];
    let denom = (steps - 1) as f64;
    for t in 0..steps {
        matrix[label * steps + t] = t as f64 / denom;
    }
    Ok(RampTarget {
        matrix,
        num_classes,
        steps,
        label,
    })
}

/// Argmax over classes of the time-mean of `Re(outputs)`; ties go to the
/// lowest index.
pub fn classify(outputs: &ComplexTensor) -> usize {
    let shape = outputs.shape();
    let classes = shape.first().copied().unwrap_or(0);
    let steps = if classes == 0 { 0 } else { outputs.len() / classes };
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for c in 0..classes {
        let row = &outputs.re()[c * steps..(c + 1) * steps];
        let mean = row.iter().sum::<f64>() / steps.max(1) as f64;
        if mean > best_mean {
            best_mean = mean;
            best = c;
        }
    }
    best
}
