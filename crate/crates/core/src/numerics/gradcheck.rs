//! Central-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::Tensor;

/// Relative error used throughout: `|analytic − numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn scalar_of<F>(f: &F, store: &ParamStore, point: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new(store);
    let x = tape.input(point.clone())?;
    let y = f(&mut tape, x)?;
    let v = tape.value(y).item()?;
    if !v.is_finite() {
        return Err(Error::Numeric {
            op: "finite difference".into(),
        });
    }
    Ok(v)
}

/// Compares the tape gradient of the scalar function `f` at `point` with
/// central differences of step `epsilon`, returning the max relative error
/// over all coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    grad_check_with(&ParamStore::new(), f, point, epsilon)
}

/// [`grad_check`] with parameters available to `f`.
pub fn grad_check_with<F>(store: &ParamStore, f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let x = tape.input(point.clone())?;
        let y = f(&mut tape, x)?;
        tape.backward(y)?.wrt(x, point.shape())
    };
    let mut worst = 0.0_f64;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += epsilon;
        let mut minus = point.clone();
        minus.data_mut()[i] -= epsilon;
        let numeric =
            (scalar_of(&f, store, &plus)? - scalar_of(&f, store, &minus)?) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Checks parameter gradients of `loss` at selected `(parameter, flat index)`
/// coordinates. `loss` builds the whole scalar on a fresh tape.
pub fn grad_check_params<F>(
    store: &ParamStore,
    loss: F,
    coords: &[(ParamId, usize)],
    epsilon: f64,
) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<NodeId>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let y = loss(&mut tape)?;
        tape.backward(y)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s);
        let y = loss(&mut tape)?;
        let v = tape.value(y).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric {
                op: "finite difference".into(),
            });
        }
        Ok(v)
    };
    let mut worst = 0.0_f64;
    let mut scratch = store.clone();
    for &(id, idx) in coords {
        let base = store.value(id).data()[idx];
        scratch.get_mut(id).value.data_mut()[idx] = base + epsilon;
        let up = eval(&scratch)?;
        scratch.get_mut(id).value.data_mut()[idx] = base - epsilon;
        let down = eval(&scratch)?;
        scratch.get_mut(id).value.data_mut()[idx] = base;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(grads.param(id).data()[idx], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::ElementwiseFn;
    use crate::numerics::tensor::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_point(&mut rng, 1, 4);
        let err = grad_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_then_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_point(&mut rng, 1, 3);
        let w = Tensor::row_vector(vec![0.3, -1.7, 2.2]);
        let err = grad_check(
            |t, x| {
                let s = t.softmax(x, Axis::Cols)?;
                let w = t.input(w.clone())?;
                let d = t.mul(s, w)?;
                t.sum(d)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn wrong_derivative_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_point(&mut rng, 1, 4);
        let broken = ElementwiseFn {
            name: "sin_with_wrong_slope",
            forward: f64::sin,
            derivative: f64::sin,
        };
        let err = grad_check(
            |t, x| {
                let y = t.map(x, broken)?;
                t.sum(y)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }
}
