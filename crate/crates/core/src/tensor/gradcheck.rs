use super::{Gradients, ParamSet};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|g_analytic - g_numeric| / max(1e-8, |g_analytic| + |g_numeric|)`
    /// over every checked coordinate.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss_and_grad` with central
/// finite differences of step `epsilon` on every parameter coordinate.
///
/// Costs two loss evaluations per scalar parameter, so keep fixtures small.
pub fn check_gradients<F>(
    params: &ParamSet,
    epsilon: f64,
    loss_and_grad: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss_and_grad(params)?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let expected = analytic.get(&name)?.clone();
        for i in 0..expected.len() {
            let original = work.get(&name)?.data()[i];
            work.get_mut(&name)?.data_mut()[i] = original + epsilon;
            let (plus, _) = loss_and_grad(&work)?;
            work.get_mut(&name)?.data_mut()[i] = original - epsilon;
            let (minus, _) = loss_and_grad(&work)?;
            work.get_mut(&name)?.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = expected.data()[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((name.clone(), i));
                }
            }
        }
    }
    Ok(report)
}
