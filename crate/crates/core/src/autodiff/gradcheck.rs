//! Central finite-difference checks for tape gradients.

use super::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step used for the central differences.
pub const FD_EPS: f64 = 1e-5;
const ATOL: f64 = 1e-6;

/// Compares analytic gradients of `sum(w * f(inputs))` (fixed random `w`)
/// with central differences on every input coordinate.
///
/// Each input is `(values, shape)`. A coordinate passes when
/// `|analytic - numeric| <= rtol * max(|analytic|, |numeric|) + 1e-6`.
pub fn check_gradients<F>(inputs: &[(Vec<f64>, Vec<usize>)], f: F, rtol: f64) -> Result<(), String>
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let probe = {
        let xs: Vec<Tensor> = inputs
            .iter()
            .map(|(v, s)| Tensor::new(v.clone(), s).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        f(&xs)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w: Vec<f64> = (0..probe.numel()).map(|_| rng.random_range(0.5..1.5)).collect();
    let w = Tensor::new(w, probe.shape()).map_err(|e| e.to_string())?;
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let xs: Vec<Tensor> = vals
            .iter()
            .zip(inputs)
            .map(|(v, (_, s))| Tensor::new(v.clone(), s).unwrap())
            .collect();
        f(&xs).mul(&w).unwrap().sum().item().unwrap()
    };

    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(v, s)| tape.leaf(v.clone(), s).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let grads = f(&leaves)
        .mul(&w)
        .map_err(|e| e.to_string())?
        .sum()
        .backward()
        .map_err(|e| e.to_string())?;

    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    for (t, leaf) in leaves.iter().enumerate() {
        let analytic = grads
            .get(leaf)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; leaf.numel()]);
        for i in 0..leaf.numel() {
            let x0 = vals[t][i];
            vals[t][i] = x0 + FD_EPS;
            let up = eval(&vals);
            vals[t][i] = x0 - FD_EPS;
            let down = eval(&vals);
            vals[t][i] = x0;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let a = analytic[i];
            if (a - numeric).abs() > rtol * a.abs().max(numeric.abs()) + ATOL {
                return Err(format!("input {t}[{i}]: analytic {a:.9e} vs numeric {numeric:.9e}"));
            }
        }
    }
    Ok(())
}
