use super::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Compares analytic gradients of a scalar loss with central differences.
///
/// `build` receives a fresh graph and the node ids of `params` (registered
/// as trainable leaves, in order) and must return the 1x1 loss node. The
/// result is the maximum over every parameter element of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Usage("grad_check needs finite parameters".into()));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.param(p.detached())).collect();
        let loss = build(&mut g, &ids)?;
        g.value(loss).item()
    };

    let first = eval(params)?;
    let second = eval(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Usage(format!(
            "loss is not deterministic: {first} then {second}"
        )));
    }

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.detached())).collect();
    let loss = build(&mut g, &ids)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| g.grad_tensor(id)).collect();

    let mut work: Vec<Tensor> = params.iter().map(Tensor::detached).collect();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..work[pi].len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(
            |g, p| {
                let sq = g.mul(p[0], p[0])?;
                Ok(g.sum(sq))
            },
            &[Tensor::scalar(3.0)],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        // Loss ignores the parameter's value: 0 * x.
        let err = grad_check(
            |g, p| {
                let z = g.scale(p[0], 0.0);
                Ok(g.sum(z))
            },
            &[Tensor::scalar(2.0)],
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn nondeterministic_loss_detected() {
        use std::cell::Cell;
        let calls = Cell::new(0.0);
        let res = grad_check(
            |g, p| {
                calls.set(calls.get() + 1.0);
                let s = g.scale(p[0], calls.get());
                Ok(g.sum(s))
            },
            &[Tensor::scalar(1.0)],
            DEFAULT_EPS,
        );
        assert!(matches!(res, Err(Error::Usage(_))));
    }
}
