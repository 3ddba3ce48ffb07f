//! Central finite-difference verification of tape gradients.

use thiserror::Error;

use crate::autodiff::{AdjointFault, AutodiffError, Tape};
use crate::layers::Network;
use crate::tensor::ComplexTensor;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite loss while perturbing {param}[{index}].{part}")]
    NonFinite {
        param: String,
        index: usize,
        part: &'static str,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    /// `"re"` or `"im"`.
    pub part: &'static str,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Gradient magnitudes below this are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

fn mse(network: &Network, input: &ComplexTensor, target: &ComplexTensor) -> Result<f64, AutodiffError> {
    let mut tape = Tape::new();
    let y = network.forward(&mut tape, input)?;
    let l = tape.mse_real(y, target)?;
    Ok(tape.value(l).re()[0])
}

/// Compares the tape gradient of the MSE loss against central differences
/// for every real coordinate of every trainable parameter.
pub fn grad_check(
    network: &Network,
    input: &ComplexTensor,
    target: &ComplexTensor,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, GradCheckError> {
    grad_check_with(network, input, target, epsilon, tolerance, None)
}

pub fn grad_check_with(
    network: &Network,
    input: &ComplexTensor,
    target: &ComplexTensor,
    epsilon: f64,
    tolerance: f64,
    fault: Option<AdjointFault>,
) -> Result<GradCheckReport, GradCheckError> {
    let mut tape = Tape::new();
    tape.set_adjoint_fault(fault);
    let y = network.forward(&mut tape, input)?;
    let loss = tape.mse_real(y, target)?;
    let base = tape.value(loss).re()[0];
    if !base.is_finite() {
        let param = network
            .store
            .iter()
            .next()
            .map(|p| p.name.clone())
            .unwrap_or_default();
        return Err(GradCheckError::NonFinite {
            param,
            index: 0,
            part: "re",
        });
    }
    let grads = tape.gradients(loss, network.store.len())?;

    let mut probe = network.clone();
    let mut entries = Vec::new();
    for (pi, param) in network.store.iter().enumerate() {
        if !param.trainable {
            continue;
        }
        let g = grads.0[pi]
            .clone()
            .unwrap_or_else(|| ComplexTensor::zeros(param.value.shape()));
        for index in 0..param.value.len() {
            for part in ["re", "im"] {
                let analytic = if part == "re" { g.re()[index] } else { g.im()[index] };
                let mut eval = |delta: f64| -> Result<f64, GradCheckError> {
                    let p = probe.store.iter_mut().nth(pi).expect("same layout");
                    let slot = if part == "re" {
                        &mut p.value.re_mut()[index]
                    } else {
                        &mut p.value.im_mut()[index]
                    };
                    let orig = *slot;
                    *slot = orig + delta;
                    let l = mse(&probe, input, target);
                    let p = probe.store.iter_mut().nth(pi).expect("same layout");
                    if part == "re" {
                        p.value.re_mut()[index] = orig;
                    } else {
                        p.value.im_mut()[index] = orig;
                    }
                    let l = l?;
                    if !l.is_finite() {
                        return Err(GradCheckError::NonFinite {
                            param: param.name.clone(),
                            index,
                            part,
                        });
                    }
                    Ok(l)
                };
                let numeric = (eval(epsilon)? - eval(-epsilon)?) / (2.0 * epsilon);
                entries.push(GradCheckEntry {
                    param: param.name.clone(),
                    index,
                    part,
                    analytic,
                    numeric,
                    rel_error: relative_error(analytic, numeric),
                });
            }
        }
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error <= tolerance,
        entries,
        max_rel_error,
        tolerance,
    })
}
