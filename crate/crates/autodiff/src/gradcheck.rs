//! Central finite-difference verification of tape gradients.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative error floor used in the denominator.
const DENOM_FLOOR: f64 = 1e-8;

/// Options for [`GradCheck::run`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Check at most this many evenly spaced elements per input; `None` checks all.
    pub max_elements_per_input: Option<usize>,
    /// Elements whose plain central-difference error exceeds this are
    /// re-estimated with Ridders' extrapolation of central differences from a
    /// larger starting step; the smaller of the two errors is kept. Tiny
    /// gradients otherwise drown in the roundoff of `f(x+h) − f(x−h)`.
    pub refine_above: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            max_elements_per_input: None,
            refine_above: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Maximum over all checked elements of all inputs.
    pub max_relative_error: f64,
    /// Maximum per input, in input order.
    pub per_input: Vec<f64>,
    pub elements_checked: usize,
    /// Elements that went through extrapolation.
    pub elements_refined: usize,
}

/// `|a − c| / max(|a|, |c|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(TensorError::Contract(format!(
            "checked function must return a scalar, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

const RIDDERS_START: f64 = 1e-3;
const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_TABLE: usize = 10;

/// Ridders' polynomial extrapolation of central differences towards h → 0.
/// Returns the estimate with the smallest internal error estimate.
fn ridders<F>(f: &F, work: &mut [Tensor], slot: usize, i: usize) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let orig = work[slot].data()[i];
    let mut central = |h: f64| -> Result<f64> {
        let (hi, lo) = (orig + h, orig - h);
        work[slot].data_mut()[i] = hi;
        let plus = eval_scalar(f, work);
        work[slot].data_mut()[i] = lo;
        let minus = eval_scalar(f, work);
        work[slot].data_mut()[i] = orig;
        Ok((plus? - minus?) / (hi - lo))
    };
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut h = RIDDERS_START;
    let mut prev = vec![central(h)?];
    let mut best = prev[0];
    let mut best_err = f64::INFINITY;
    for _ in 1..RIDDERS_TABLE {
        h /= RIDDERS_SHRINK;
        let mut row = vec![central(h)?];
        let mut fac = c2;
        for j in 1..=prev.len() {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let err = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = v;
            }
            row.push(v);
        }
        let k = prev.len();
        let stop = (row[k] - prev[k - 1]).abs() >= 2.0 * best_err;
        prev = row;
        if stop {
            break;
        }
    }
    Ok(best)
}

fn sample_indices(numel: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(max) if max < numel => {
            let max = max.max(1);
            (0..max).map(|j| j * numel / max).collect()
        }
        _ => (0..numel).collect(),
    }
}

impl GradCheck {
    /// Compares tape gradients of `f` against central differences for every input.
    pub fn run<F>(&self, f: F, inputs: &[Tensor]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        if !(self.step > 0.0 && self.step <= 1e-2) {
            return Err(TensorError::Contract(format!(
                "step {} outside (0, 1e-2]",
                self.step
            )));
        }

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let base = tape.value(out).clone();
        let mut grads = tape.backward(out)?;

        let again = eval_scalar(&f, inputs)?;
        if again.to_bits() != base.item().to_bits() {
            return Err(TensorError::Determinism {
                difference: (again - base.item()).abs(),
            });
        }

        let mut per_input = Vec::with_capacity(inputs.len());
        let mut checked = 0;
        let mut refined_count = 0;
        let mut work: Vec<Tensor> = inputs.to_vec();
        for (slot, &var) in vars.iter().enumerate() {
            let analytic = grads
                .take(var)
                .unwrap_or_else(|| Tensor::zeros(inputs[slot].shape().to_vec()));
            let mut worst = 0.0_f64;
            for i in sample_indices(inputs[slot].numel(), self.max_elements_per_input) {
                let orig = inputs[slot].data()[i];
                let (hi, lo) = (orig + self.step, orig - self.step);
                work[slot].data_mut()[i] = hi;
                let plus = eval_scalar(&f, &work)?;
                work[slot].data_mut()[i] = lo;
                let minus = eval_scalar(&f, &work)?;
                work[slot].data_mut()[i] = orig;
                // divide by the perturbation actually applied, not the nominal 2h
                let numeric = (plus - minus) / (hi - lo);
                let mut err = relative_error(analytic.data()[i], numeric);
                if self.refine_above.is_some_and(|limit| err > limit) {
                    let refined = ridders(&f, &mut work, slot, i)?;
                    err = err.min(relative_error(analytic.data()[i], refined));
                    refined_count += 1;
                }
                worst = worst.max(err);
                checked += 1;
            }
            per_input.push(worst);
        }
        Ok(GradCheckReport {
            max_relative_error: per_input.iter().cloned().fold(0.0, f64::max),
            per_input,
            elements_checked: checked,
            elements_refined: refined_count,
        })
    }
}

/// Max relative error between the tape gradient of `f` at `x` and central differences.
pub fn finite_difference_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let check = GradCheck {
        step,
        ..Default::default()
    };
    let report = check.run(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x))?;
    Ok(report.max_relative_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn linear_map_has_zero_error() {
        let x = Tensor::from_fn([7], |i| i as f64 - 3.0);
        // a dyadic step keeps every perturbed sum exactly representable
        let err = finite_difference_check(|t, x| t.sum(x), &x, 2f64.powi(-17)).unwrap();
        assert_eq!(err, 0.0);
        let x = Tensor::from_fn([7], |i| (i as f64 * 0.913).sin());
        let err = finite_difference_check(|t, x| t.sum(x), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn doubled_backward_rule_is_caught() {
        // value of sum(x) with a gradient rule that reports twice the true slope
        let f = |t: &mut Tape, x: Var| {
            let v = Tensor::scalar(t.value(x).sum());
            Ok(t.custom("doubled-sum", &[x], v, |g, ins| {
                vec![Tensor::full(ins[0].shape().to_vec(), 2.0 * g.item())]
            }))
        };
        let x = Tensor::from_vec(vec![0.3, -1.2, 2.5]);
        let err = finite_difference_check(f, &x, 1e-5).unwrap();
        // |2g − g| / max(|2g|, |g|)
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn refinement_recovers_tiny_gradients_but_not_wrong_ones() {
        // loss ≈ 1 with one coordinate whose slope is 1e-9
        let f = |t: &mut Tape, v: &[Var]| {
            let x = v[0];
            let w = t.constant(Tensor::from_vec(vec![1.0, 1e-9]));
            let xw = t.mul(x, w)?;
            let s = t.sum(xw)?;
            let sq = t.mul(s, s)?;
            let one = t.constant(Tensor::scalar(1.0));
            t.add(sq, one)
        };
        let x = Tensor::from_vec(vec![0.37, 0.81]);
        let plain = GradCheck::default().run(f, std::slice::from_ref(&x)).unwrap();
        let refined = GradCheck {
            refine_above: Some(1e-8),
            ..Default::default()
        }
        .run(f, std::slice::from_ref(&x))
        .unwrap();
        assert!(plain.max_relative_error > 1e-4, "{plain:?}");
        assert!(refined.max_relative_error < 1e-4, "{refined:?}");

        let doubled = |t: &mut Tape, x: Var| {
            let v = Tensor::scalar(t.value(x).sum());
            Ok(t.custom("doubled-sum", &[x], v, |g, ins| {
                vec![Tensor::full(ins[0].shape().to_vec(), 2.0 * g.item())]
            }))
        };
        let r = GradCheck {
            refine_above: Some(1e-8),
            ..Default::default()
        }
        .run(|t, v| doubled(t, v[0]), &[Tensor::from_vec(vec![0.3, -1.2])])
        .unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6);
        assert_eq!(r.elements_refined, 2);
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        let calls = Cell::new(0u32);
        let f = |t: &mut Tape, x: Var| {
            calls.set(calls.get() + 1);
            let bump = t.constant(Tensor::scalar(calls.get() as f64));
            let s = t.sum(x)?;
            t.add(s, bump)
        };
        let err = finite_difference_check(f, &Tensor::ones([2]), 1e-5).unwrap_err();
        assert!(matches!(err, TensorError::Determinism { .. }));
    }

    #[test]
    fn step_must_be_in_range() {
        let x = Tensor::ones([2]);
        assert!(finite_difference_check(|t, x| t.sum(x), &x, 0.0).is_err());
        assert!(finite_difference_check(|t, x| t.sum(x), &x, 0.1).is_err());
    }
}
