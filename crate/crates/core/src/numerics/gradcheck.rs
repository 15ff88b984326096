use super::{NumericsError, ParameterStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric values at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Compares tape gradients with central finite differences.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// entries whose true gradient is zero from dividing by noise. At most
/// `max_per_param` entries are probed per parameter, spread evenly.
pub fn gradient_check(
    store: &ParameterStore<f64>,
    eps: f64,
    floor: f64,
    max_per_param: usize,
    f: impl Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<Var, NumericsError>,
) -> Result<GradCheckReport, NumericsError> {
    let eval = |s: &ParameterStore<f64>| -> Result<f64, NumericsError> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.value(l).item())
    };
    let mut t = Tape::new();
    let l = f(&mut t, store)?;
    let grads = t.backward(l)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    let mut probe = store.clone();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        let base = store.value(&name).expect("listed").clone();
        let n = base.len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let mut plus = base.clone();
            plus.data_mut()[k] += eps;
            probe.set_value(&name, plus)?;
            let fp = eval(&probe)?;
            let mut minus = base.clone();
            minus.data_mut()[k] -= eps;
            probe.set_value(&name, minus)?;
            let fm = eval(&probe)?;
            probe.set_value(&name, base.clone())?;

            let numeric = (fp - fm) / (2.0 * eps);
            let analytic = grads.param(&name).map_or(0.0, |g| g.data()[k]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((name.clone(), k));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}
