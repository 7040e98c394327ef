use super::layers::Module;
use crate::numcore::fd::{central_gradient, max_relative_error};
use crate::numcore::{Result, Tape, Var};

/// Compares tape gradients of `loss` with central differences for every named
/// parameter of `model`, returning the norm-wise relative error per parameter.
///
/// `loss` must bind `model` on the given tape and return the scalar loss and
/// the vars of the parameters in [`Module::params_mut`] order.
pub fn param_gradient_errors<M, F>(model: &M, loss: F, step: f64) -> Result<Vec<(String, f64)>>
where
    M: Module + Clone,
    F: Fn(&M, &mut Tape) -> Result<(Var, Vec<Var>)>,
{
    let mut tape = Tape::new();
    let (l, vars) = loss(model, &mut tape)?;
    tape.backward(l)?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let numel = probe.params_mut()[k].numel();
        let analytic = tape.grad(vars[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; numel]);
        let x0 = probe.params_mut()[k].data().to_vec();
        let mut failure = None;
        let numeric = central_gradient(
            |p| {
                probe.params_mut()[k].data_mut().copy_from_slice(p);
                let mut t = Tape::new();
                match loss(&probe, &mut t) {
                    Ok((l, _)) => t.scalar(l),
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &x0,
            step,
        );
        probe.params_mut()[k].data_mut().copy_from_slice(&x0);
        if let Some(e) = failure {
            return Err(e);
        }
        out.push((name, max_relative_error(&analytic, &numeric)));
    }
    Ok(out)
}
