use serde::Serialize;

use crate::observation::{
    mean_abs_gaussian, mu_estimate_with, psi_estimate_with, Nonlinearity, ParamEstimate,
    DEFAULT_MOMENT_GRID,
};
use crate::{Error, Result, SimRng};

/// Parameters of the rescaled link `x -> f(rho x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RescaledParams {
    pub mu_bar: ParamEstimate,
    pub psi_bar: ParamEstimate,
}

/// Monte-Carlo `mu_bar = E[f(rho g) g]` and grid `psi_bar` of `f(rho g)`.
pub fn rescale_link(f: &Nonlinearity, rho: f64, samples: usize, rng: &mut SimRng) -> Result<RescaledParams> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rescaling factor must be positive, got {rho}")));
    }
    let mu_bar = mu_estimate_with(samples, rng, |g, rng| f.eval(rho * g, rng))?;
    let psi_bar = psi_estimate_with(samples, &DEFAULT_MOMENT_GRID, rng, |g, rng| f.eval(rho * g, rng))?;
    Ok(RescaledParams { mu_bar, psi_bar })
}

/// Exact `(mu_bar, psi_bar)` for `x -> f(rho x)` where they follow from
/// homogeneity: linear and tobit scale by `rho`, sign flips are invariant.
/// `psi_bar` is `None` when no closed form is available.
pub fn rescale_closed_form(f: &Nonlinearity, rho: f64) -> Option<(f64, Option<f64>)> {
    if f.is_scale_invariant() {
        return Some((f.mu_closed_form()?, f.psi_closed_form()));
    }
    match f {
        Nonlinearity::Linear => Some((rho, Some(rho * mean_abs_gaussian()))),
        Nonlinearity::Tobit => Some((0.5 * rho, None)),
        _ => None,
    }
}
