#![allow(dead_code)]

//! Oracles shared by the integration suites and the acceptance harness.

pub mod criteria;

use patchsel::autograd::{ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Absolute slack below which two derivatives count as equal regardless of
/// the relative error (f64 round-off of the difference quotient).
pub const FD_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `[-1, 1]` kept at least `gap` away from zero, so kinks
/// at the origin are never straddled by a finite difference.
pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = r.gen_range(-1.0..1.0);
            if v.abs() >= gap {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn positive_tensor(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

pub fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_FLOOR || diff <= rel * analytic.abs().max(numeric.abs())
}

/// Reduces `out` to a scalar with fixed random weights so every output
/// element reaches the gradient.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let w = random_tensor(&mut rng(seed ^ 0x9e37), &shape, 0.0);
    let w = tape.constant(w);
    let p = tape.mul(out, w).unwrap();
    tape.sum(p)
}

/// Picks `cases` distinct-ish (input, element) coordinates.
fn coordinates(sizes: &[usize], cases: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng(seed);
    let total: usize = sizes.iter().sum();
    (0..cases)
        .map(|_| {
            let mut flat = r.gen_range(0..total);
            let mut i = 0;
            while flat >= sizes[i] {
                flat -= sizes[i];
                i += 1;
            }
            (i, flat)
        })
        .collect()
}

/// Compares tape gradients of `f` with respect to every input against
/// central differences at `cases` random coordinates. Returns the largest
/// relative error seen, or a description of the first mismatch.
pub fn check_op(
    name: &str,
    inputs: &[Tensor],
    f: &dyn Fn(&mut Tape, &[Var]) -> Var,
    cases: usize,
    rel: f64,
    seed: u64,
) -> Result<f64, String> {
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let loss = project(&mut tape, out, seed);
        tape.value(loss).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let loss = project(&mut tape, out, seed);
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let sizes: Vec<usize> = inputs.iter().map(Tensor::len).collect();
    let mut worst: f64 = 0.0;
    for (i, j) in coordinates(&sizes, cases, seed) {
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[j] += FD_STEP;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[j] -= FD_STEP;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        let a = analytic[i][j];
        if !close(a, numeric, rel) {
            return Err(format!(
                "{name}: input {i}[{j}] analytic {a:.10e} numeric {numeric:.10e}"
            ));
        }
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// Same comparison for a model: `run` evaluates the scalar loss with the
/// given parameters and, when asked, returns the per-parameter gradients
/// together with the gradient of the input.
pub struct ModelProbe<'a> {
    pub params: ParamStore,
    pub input: Tensor,
    #[allow(clippy::type_complexity)]
    pub run: &'a mut dyn FnMut(&ParamStore, &Tensor, bool) -> (f64, Vec<Option<Vec<f64>>>, Option<Vec<f64>>),
}

pub fn check_model(name: &str, probe: &mut ModelProbe, cases: usize, rel: f64, seed: u64) -> Result<f64, String> {
    let (_, pgrads, xgrad) = (probe.run)(&probe.params, &probe.input, true);
    let mut sizes: Vec<usize> = probe.params.iter().map(|p| p.value.len()).collect();
    sizes.push(probe.input.len());
    let np = sizes.len() - 1;
    let mut worst: f64 = 0.0;
    for (i, j) in coordinates(&sizes, cases, seed) {
        let numeric = {
            let mut at = |delta: f64| {
                let mut params = probe.params.clone();
                let mut input = probe.input.clone();
                if i < np {
                    params.iter_mut().nth(i).unwrap().value.data_mut()[j] += delta;
                } else {
                    input.data_mut()[j] += delta;
                }
                (probe.run)(&params, &input, false).0
            };
            (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
        };
        let a = if i < np {
            pgrads[i].as_ref().map_or(0.0, |g| g[j])
        } else {
            xgrad.as_ref().map_or(0.0, |g| g[j])
        };
        if !close(a, numeric, rel) {
            let what = if i < np {
                probe.params.iter().nth(i).unwrap().name.clone()
            } else {
                "input".to_string()
            };
            return Err(format!("{name}: {what}[{j}] analytic {a:.10e} numeric {numeric:.10e}"));
        }
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
