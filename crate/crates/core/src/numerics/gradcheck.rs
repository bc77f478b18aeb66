use super::{NumericsError, Tape, Tensor2, Var};

/// Compares the tape gradient of `f` at `x` against central differences.
///
/// Returns the largest `|analytic - numeric| / max(1, |analytic|)` over all
/// entries of `x`. `f` receives a fresh tape and the handle of `x` and must
/// return a scalar node.
pub fn grad_check<E, F>(f: F, x: &Tensor2, h: f64) -> Result<f64, E>
where
    E: From<NumericsError>,
    F: Fn(&mut Tape, Var) -> Result<Var, E>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(NumericsError::InvalidHyperParameter("h must lie in (0, 1e-2]").into());
    }
    let eval = |point: &Tensor2| -> Result<f64, E> {
        let mut tape = Tape::new();
        let v = tape.constant(point.clone());
        let out = f(&mut tape, v)?;
        scalar_value(&tape, out)
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    scalar_value(&tape, out)?;
    let grads = tape.backward(out)?;
    let analytic = grads.get(xv).cloned().unwrap_or_else(|| Tensor2::zeros(x.rows(), x.cols()));

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let err = libm::fabs(a - numeric) / libm::fabs(a).max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn scalar_value<E: From<NumericsError>>(tape: &Tape, v: Var) -> Result<f64, E> {
    let t = tape.value(v);
    let val = t.item().ok_or(NumericsError::NonScalarLoss {
        rows: t.rows(),
        cols: t.cols(),
    })?;
    if !val.is_finite() {
        return Err(NumericsError::NonFinite { index: 0 }.into());
    }
    Ok(val)
}
