//! Central finite-difference checks of analytic parameter gradients.

use crate::model::Model;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error. It sits above the round-off
/// noise of the difference quotient, so parameters whose exact gradient is
/// zero (dead ReLU units) do not dominate.
pub const ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub worst_parameter: usize,
    pub checked: usize,
}

/// `|fd − analytic| / max(|fd|, |analytic|, ERROR_FLOOR)`.
pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(ERROR_FLOOR)
}

/// Checks the partials of `f` at `indices` against `analytic`.
pub fn check_indices(
    model: &Model,
    f: impl Fn(&Model) -> f64,
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
) -> FdReport {
    let mut report = FdReport { max_relative_error: 0.0, worst_parameter: 0, checked: 0 };
    let mut probe = model.clone();
    for i in indices {
        let x = model.params()[i];
        probe.params_mut()[i] = x + FD_STEP;
        let up = f(&probe);
        probe.params_mut()[i] = x - FD_STEP;
        let down = f(&probe);
        probe.params_mut()[i] = x;
        let err = relative_error((up - down) / (2.0 * FD_STEP), analytic[i]);
        report.checked += 1;
        if err > report.max_relative_error || err.is_nan() {
            report.max_relative_error = err;
            report.worst_parameter = i;
        }
    }
    report
}

/// Checks every parameter.
pub fn check_all(model: &Model, f: impl Fn(&Model) -> f64, analytic: &[f64]) -> FdReport {
    check_indices(model, f, analytic, 0..model.params().len())
}
