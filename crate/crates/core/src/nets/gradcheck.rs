//! Central-difference gradient verification.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;
use super::NetsError;

/// Compare an analytic gradient against central differences of `f` on a
/// random subsample of at least `min_coords` coordinates (all of them when
/// the parameter set is smaller).
///
/// Returns the maximum relative error `|Δ| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check(
    mut f: impl FnMut(&ParamSet) -> Result<f64, NetsError>,
    p: &ParamSet,
    analytic: &ParamSet,
    eps: f64,
    min_coords: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, NetsError> {
    assert!(eps > 0.0, "eps must be positive");
    let n = p.num_scalars();
    let base = f(p)?;
    if !base.is_finite() {
        return Err(NetsError::NonFinite(format!("loss at base point: {base}")));
    }
    let mut coords: Vec<usize> = (0..n).collect();
    coords.shuffle(rng);
    coords.truncate(min_coords.min(n).max(1));

    let flat = p.flat();
    let analytic_flat = analytic.flat();
    let mut work = p.clone();
    let mut max_err = 0.0f64;
    for &i in &coords {
        let mut plus = flat.clone();
        plus[i] += eps;
        work.set_flat(&plus)?;
        let fp = f(&work)?;
        let mut minus = flat.clone();
        minus[i] -= eps;
        work.set_flat(&minus)?;
        let fm = f(&work)?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NetsError::NonFinite(format!(
                "loss not finite at perturbed coordinate {i}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic_flat[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
