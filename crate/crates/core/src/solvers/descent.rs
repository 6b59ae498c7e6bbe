use crate::generative::{project_unchecked, LayeredGenerator};
use crate::linalg::Vector;

use super::SolverConfig;

/// Result of one projected-gradient run.
#[derive(Clone, Debug)]
pub struct DescentRun {
    pub z: Vector,
    pub value: f64,
    pub iters: usize,
    pub trace: Vec<f64>,
}

/// Smooth objective over the latent ball, to be minimized.
pub(crate) trait LatentObjective {
    fn value(&self, z: &Vector) -> f64;
    fn value_and_grad(&self, z: &Vector) -> (f64, Vector);
}

/// Projected gradient descent on the ball of radius `r` with backtracking.
///
/// A trial step `t` is accepted when
/// `h(z+) <= h(z) + <grad, z+ - z> + ||z+ - z||^2 / (2t)` and `h(z+) <= h(z)`,
/// so the objective sequence never increases. After an accepted step the
/// next trial step doubles. Returns `None` when the starting value is not
/// finite.
pub(crate) fn projected_descent(
    objective: &impl LatentObjective,
    r: f64,
    z0: &Vector,
    cfg: &SolverConfig,
) -> Option<DescentRun> {
    let mut z = project_unchecked(z0, r);
    let (mut h, mut grad) = objective.value_and_grad(&z);
    if !h.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(h);
    }
    let max_step = cfg.step * 1e6;
    let mut t = cfg.step;
    let mut iters = 0;
    while iters < cfg.max_iters {
        let mut trial = t;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let candidate = project_unchecked(&(&z - &grad * trial), r);
            let d = &candidate - &z;
            let h_new = objective.value(&candidate);
            let bound = h + grad.dot(&d) + d.norm_squared() / (2.0 * trial);
            if h_new.is_finite() && h_new <= bound && h_new <= h {
                accepted = Some((candidate, d.norm()));
                break;
            }
            trial *= cfg.backtrack_factor;
        }
        let Some((z_new, step_norm)) = accepted else {
            break;
        };
        iters += 1;
        z = z_new;
        let (h_new, g_new) = objective.value_and_grad(&z);
        h = h_new;
        grad = g_new;
        if cfg.record_trace {
            trace.push(h);
        }
        t = (trial / cfg.backtrack_factor).min(max_step);
        if step_norm < cfg.tol {
            break;
        }
    }
    Some(DescentRun {
        z,
        value: h,
        iters,
        trace,
    })
}

/// `h(z) = -<c, G(z)>`.
pub(crate) struct NegLinear<'a> {
    pub model: &'a LayeredGenerator,
    pub c: &'a Vector,
}

impl LatentObjective for NegLinear<'_> {
    fn value(&self, z: &Vector) -> f64 {
        -self.c.dot(&self.model.forward_unchecked(z))
    }

    fn value_and_grad(&self, z: &Vector) -> (f64, Vector) {
        let tape = self.model.tape_unchecked(z);
        let value = -self.c.dot(&tape.output);
        let grad = -self.model.vjp_with_tape(&tape, self.c);
        (value, grad)
    }
}

/// Approximates `sup_{||z|| <= r} <c, G(z)>` by projected gradient ascent from
/// the given starting points; returns the best run with its value negated back
/// to the maximized functional.
pub fn maximize_linear_functional(
    model: &LayeredGenerator,
    c: &Vector,
    starts: &[Vector],
    cfg: &SolverConfig,
) -> Option<DescentRun> {
    let objective = NegLinear { model, c };
    let mut best: Option<DescentRun> = None;
    for z0 in starts {
        if let Some(run) = projected_descent(&objective, model.radius(), z0, cfg) {
            if best.as_ref().is_none_or(|b| run.value < b.value) {
                best = Some(run);
            }
        }
    }
    best.map(|mut run| {
        run.value = -run.value;
        run
    })
}
