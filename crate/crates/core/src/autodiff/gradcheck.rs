//! Central finite-difference checks of reverse-mode gradients.

use crate::autodiff::{Parameters, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Denominator floor of the relative error.
const REL_FLOOR: f64 = 1e-8;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences of step `step`, returning the maximum relative error.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("grad_check step must be positive, got {step}")));
    }
    let mut x = point.clone();
    x.set_trainable(true);

    let mut tape = Tape::new();
    let xv = tape.param(&x);
    let out = f(&mut tape, xv)?;
    finite(tape.scalar(out), "grad_check function value")?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .wrt(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |values: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.shape().to_vec(), values.to_vec())?;
        let out = f(&mut tape, xv)?;
        finite(tape.scalar(out), "grad_check function value")
    };

    let mut values = x.values().to_vec();
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let original = values[i];
        values[i] = original + step;
        let plus = eval(&values)?;
        values[i] = original - step;
        let minus = eval(&values)?;
        values[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Outcome of [`grad_check_params`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Finite-difference check over every trainable tensor of `model`.
///
/// `loss` builds the scalar objective on a fresh tape from the current
/// parameter values. The model's gradient slots are reset before and after.
pub fn grad_check_params<P, F>(model: &mut P, loss: F, step: f64) -> Result<GradCheckReport>
where
    P: Parameters + ?Sized,
    F: Fn(&P, &mut Tape) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("grad_check step must be positive, got {step}")));
    }
    model.zero_grad();
    let mut tape = Tape::new();
    let out = loss(model, &mut tape)?;
    finite(tape.scalar(out), "loss")?;
    let grads = tape.backward(out)?;
    model.accumulate_grad(&grads);

    let analytic: Vec<(String, Vec<f64>)> = model
        .named_params()
        .into_iter()
        .filter(|(_, t)| t.is_trainable())
        .map(|(name, t)| {
            let g = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            (name, g)
        })
        .collect();
    model.zero_grad();

    let eval = |model: &P| -> Result<f64> {
        let mut tape = Tape::new();
        let out = loss(model, &mut tape)?;
        finite(tape.scalar(out), "loss")
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (name, grad) in &analytic {
        for (i, &a) in grad.iter().enumerate() {
            let original = set_coordinate(model, name, i, None);
            set_coordinate(model, name, i, Some(original + step));
            let plus = eval(model);
            set_coordinate(model, name, i, Some(original - step));
            let minus = eval(model);
            set_coordinate(model, name, i, Some(original));
            let numeric = (plus? - minus?) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

/// Reads coordinate `i` of the named parameter, optionally overwriting it.
fn set_coordinate<P: Parameters + ?Sized>(model: &mut P, name: &str, i: usize, value: Option<f64>) -> f64 {
    let mut params = model.named_params_mut();
    let (_, tensor) = params
        .iter_mut()
        .find(|(n, _)| n == name)
        .expect("parameter names are stable");
    let slot = &mut tensor.values_mut()[i];
    let old = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    old
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let x = Tensor::vector(vec![3.0]);
        let err = grad_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_value_is_reported() {
        let x = Tensor::vector(vec![1.0]);
        let res = grad_check(
            |t, x| {
                let big = t.scale(x, f64::INFINITY)?;
                t.sum(big)
            },
            &x,
            1e-5,
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_non_positive_step() {
        let x = Tensor::vector(vec![1.0]);
        assert!(grad_check(|t, x| t.sum(x), &x, 0.0).is_err());
    }
}
