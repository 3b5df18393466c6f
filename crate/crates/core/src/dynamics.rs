//! Convex graph energy, a descent solver for `𝒰_α u = h`, and the growth audit
//! of the weak pairing.
//!
//! The energy is the double integral over pairs not both outside the free set
//!
//! ```text
//! E(u) = ∬ 𝒢((u(x) - u(y)) / |x - y|) |x - y|^{1-n-α} dx dy,   𝒢' = G,
//! ```
//!
//! discretized on the same lattice and far-field nodes as the curvature, so
//! that `∂E/∂u_i = hⁿ 𝒰_α u(x_i)` holds term by term. Each unordered pair
//! appears twice in the double integral and once in each node's variation,
//! which is where the factor 2 of the operator comes from. Far terms are
//! measured against a fixed reference value `c_i` so the integral converges.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{weak_pairing_with, GraphOperator, BOUNDARY_MARGIN};
use crate::error::{Error, Result};
use crate::field::{GraphField, QuadratureSpec};
use crate::quad::tree_sum;

/// Frozen geometry of the energy: exterior data, free nodes, lattice and far nodes.
struct EnergyModel<'a> {
    op: GraphOperator<'a>,
    free: Vec<bool>,
    refs: Vec<f64>,
    /// Far nodes `(dir, r, weight)` keyed by stencil radius.
    far: BTreeMap<usize, Vec<([f64; 2], f64, f64)>>,
}

impl<'a> EnergyModel<'a> {
    fn new(u: &'a GraphField, q: &QuadratureSpec) -> Result<Self> {
        let op = GraphOperator::new(u, q)?;
        let free: Vec<bool> = (0..u.len()).map(|k| u.node_margin(k) >= BOUNDARY_MARGIN).collect();
        let refs = (0..u.len()).map(|k| u.exterior_reference(&u.node_position(k))).collect();
        let mut far = BTreeMap::new();
        for k in 0..u.len() {
            if free[k] {
                let m = op.node_radius(k);
                far.entry(m).or_insert_with(|| op.far_rule().nodes(u.n(), (m as f64 + 0.5) * u.spacing()));
            }
        }
        Ok(Self { op, free, refs, far })
    }

    fn field(&self) -> &GraphField {
        self.op.field()
    }

    /// `E(vals)` when `step` is `None`, else `E(vals + step) - E(vals)`.
    fn evaluate(&self, vals: &[f64], step: Option<&[f64]>) -> f64 {
        let u = self.field();
        let n = u.n();
        let h = u.spacing();
        let cell = h.powi(n as i32);
        let shape = u.shape();
        let kernel = self.op.kernel();
        let term = |t: f64, eps: f64| match step {
            None => kernel.g_antideriv(t),
            Some(_) => kernel.g_antideriv_diff(t, eps),
        };
        let delta = |k: usize| step.map_or(0.0, |s| s[k]);
        let parts: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|i| {
                let idx = u.unravel(i);
                let ui = vals[i];
                let di = delta(i);
                let mut acc = Vec::new();
                // pairs (i, j) with j > i, skipping pairs of fixed nodes
                let mut pairs = 0.0;
                for j in i + 1..u.len() {
                    if !self.free[i] && !self.free[j] {
                        continue;
                    }
                    let jdx = u.unravel(j);
                    let o = [jdx[0] as isize - idx[0] as isize, jdx[1] as isize - idx[1] as isize];
                    let (inv, wt) = self.op.offset_weights(o);
                    pairs += cell * wt / inv * term((ui - vals[j]) * inv, (di - delta(j)) * inv);
                }
                acc.push(pairs);
                if self.free[i] {
                    // lattice points of the stencil outside the window
                    let m = self.op.node_radius(i) as isize;
                    let mut outside = 0.0;
                    let second = if n == 1 { 0..=0 } else { -m..=m };
                    for a in -m..=m {
                        for b in second.clone() {
                            let o = [a, b];
                            let inside = (0..n).all(|ax| {
                                let p = idx[ax] as isize + o[ax];
                                p >= 0 && p < shape[ax] as isize
                            });
                            if inside {
                                continue;
                            }
                            let (inv, wt) = self.op.offset_weights(o);
                            let e = self.op.ext_value(i, o);
                            outside += cell * wt / inv * term((ui - e) * inv, di * inv);
                        }
                    }
                    acc.push(outside);
                    // far field against the reference value
                    let x = u.node_position(i);
                    let c = self.refs[i];
                    let mut y = [0.0; 2];
                    let mut far = Vec::new();
                    for (dir, r, w) in &self.far[&(m as usize)] {
                        for ax in 0..n {
                            y[ax] = x[ax] + r * dir[ax];
                        }
                        let e = u.exterior_value(&y[..n]);
                        let v = match step {
                            None => kernel.g_antideriv_diff((c - e) / r, (ui - c) / r),
                            Some(_) => kernel.g_antideriv_diff((ui - e) / r, di / r),
                        };
                        far.push(w * 2.0 * r * v);
                    }
                    acc.push(cell * tree_sum(&far));
                }
                tree_sum(&acc)
            })
            .collect();
        tree_sum(&parts)
    }
}

/// Discrete graph energy of `u`, with the exterior held at `u`'s own model.
pub fn graph_energy(u: &GraphField, q: &QuadratureSpec) -> Result<f64> {
    let model = EnergyModel::new(u, q)?;
    Ok(model.evaluate(u.values(), None))
}

/// Solver controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(rename = "tol")]
    pub tolerance: f64,
    pub max_iter: usize,
    /// Backtracking stops once the step falls below this fraction of the trial step.
    #[serde(default = "default_step_floor")]
    pub step_floor: f64,
    /// Sufficient-decrease constant of the line search.
    #[serde(default = "default_armijo")]
    pub armijo: f64,
}

fn default_step_floor() -> f64 {
    1e-8
}

fn default_armijo() -> f64 {
    1e-4
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_iter: 20_000, step_floor: default_step_floor(), armijo: default_armijo() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    /// `E(u) - h ∫u` at each accepted iterate.
    pub energy_trace: Vec<f64>,
    #[serde(rename = "final")]
    pub final_field: GraphField,
    pub converged: bool,
    pub tolerance: f64,
    /// Largest curvature error bound at the final iterate.
    pub final_err: f64,
}

/// Residual `𝒰_α u - h` on the free nodes, with error bounds.
fn residual(u: &GraphField, free: &[usize], h: f64, q: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let op = GraphOperator::new(u, q)?;
    let est: Vec<_> = free.par_iter().map(|&k| op.at_node(k)).collect::<Result<_>>()?;
    Ok((est.iter().map(|e| e.value - h).collect(), est.iter().map(|e| e.err).collect()))
}

/// Steepest descent on `E(u) - h ∫u` over interior nodes, exterior frozen.
pub fn solve(u0: &GraphField, h: f64, opts: &SolveOptions, q: &QuadratureSpec) -> Result<SolveReport> {
    if !(opts.tolerance > 0.0) || !h.is_finite() || !(opts.step_floor > 0.0 && opts.step_floor < 1.0) {
        return Err(Error::Parameter("tolerance and step floor must be positive, h finite".into()));
    }
    let model = EnergyModel::new(u0, q)?;
    let free: Vec<usize> = (0..u0.len()).filter(|&k| model.free[k]).collect();
    if free.is_empty() {
        return Err(Error::Domain("window has no interior nodes".into()));
    }
    let cell = u0.spacing().powi(u0.n() as i32);
    let alpha = u0.params().alpha;
    let guard = 1e6 * (1.0 + u0.sup_norm());

    let mut u = u0.clone();
    let mut energy = model.evaluate(u.values(), None) - h * cell * free.iter().map(|&k| u.values()[k]).sum::<f64>();
    let mut energy_trace = vec![energy];
    let mut residual_trace = Vec::new();
    let mut tau = u0.spacing().powf(1.0 + alpha) / 10.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    loop {
        let (res, errs) = residual(&u, &free, h, q)?;
        let sup = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        residual_trace.push(sup);
        let final_err = errs.iter().fold(0.0f64, |m, e| m.max(*e));
        // The residual is the exact gradient of the discrete energy, so it is
        // driven below the tolerance itself; `final_err` reports quadrature error.
        if sup <= opts.tolerance || iterations >= opts.max_iter {
            let converged = sup <= opts.tolerance;
            return Ok(SolveReport {
                iterations,
                residual_trace,
                energy_trace,
                final_field: u,
                converged,
                tolerance: opts.tolerance,
                final_err,
            });
        }
        // Barzilai–Borwein step from the last accepted move.
        let x: Vec<f64> = free.iter().map(|&k| u.values()[k]).collect();
        if let Some((px, pr)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..free.len() {
                let s = x[i] - px[i];
                ss += s * s;
                sy += s * (res[i] - pr[i]);
            }
            if sy > 0.0 && (ss / sy).is_finite() {
                tau = ss / sy;
            }
        }
        let slope = cell * res.iter().map(|r| r * r).sum::<f64>();
        let trial = tau;
        let mut step = vec![0.0; u.len()];
        loop {
            for (i, &k) in free.iter().enumerate() {
                step[k] = -tau * res[i];
            }
            let change = model.evaluate(u.values(), Some(&step)) - h * cell * step.iter().sum::<f64>();
            if change <= -opts.armijo * tau * slope {
                let vals: Vec<f64> = u.values().iter().zip(&step).map(|(v, s)| v + s).collect();
                if vals.iter().any(|v| !v.is_finite() || v.abs() > guard) {
                    return Err(Error::StepFailure { iteration: iterations, reason: "iterate diverged".into() });
                }
                u = u.with_values(vals)?;
                energy += change;
                energy_trace.push(energy);
                break;
            }
            tau *= 0.5;
            if tau < opts.step_floor * trial {
                return Err(Error::StepFailure {
                    iteration: iterations,
                    reason: format!("no energy decrease down to step {tau:e} (residual {sup:e})"),
                });
            }
        }
        prev = Some((x, res));
        iterations += 1;
    }
}

/// Result of the weak-pairing growth audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmcAudit {
    /// `(R, p(R), err)` per radius.
    pub samples: Vec<(f64, f64, f64)>,
    /// Intercept of the fit `p(R) ≈ h + C R^γ`.
    pub fitted_h: f64,
    /// Log-log slope `γ` of `|p(R)|`; `None` when every `p(R)` is within its error.
    pub fitted_exponent: Option<f64>,
}

/// Smoothed indicator of `B_R`: 1 inside, cosine taper on `R ≤ |x| ≤ 5R/4`.
pub fn mollified_ball(u: &GraphField, radius: f64) -> Result<GraphField> {
    let width = 0.25 * radius;
    let taper = |x: &[f64]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= radius {
            1.0
        } else if r >= radius + width {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (r - radius) / width).cos())
        }
    };
    let bounds = u.window().clone();
    let ext = crate::field::ExteriorModel::Affine { gradient: vec![0.0; u.n()], offset: 0.0 };
    let v = GraphField::from_fn(u.params(), bounds, u.spacing(), ext, taper)?;
    if v.values().iter().enumerate().any(|(k, x)| *x != 0.0 && v.node_margin(k) == 0) {
        return Err(Error::Domain(format!("ball of radius {radius} does not fit the window")));
    }
    Ok(v)
}

/// `p(R) = ⟨𝒰_α u, χ̃_{B_R}⟩ / (|B'_1| Rⁿ)` over the radii, with the fitted limit and decay.
pub fn cmc_exponent_audit(u: &GraphField, radii: &[f64], q: &QuadratureSpec) -> Result<CmcAudit> {
    if radii.len() < 3 {
        return Err(Error::Parameter(format!("need at least 3 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::Parameter("radii must be positive and increasing".into()));
    }
    let op = GraphOperator::new(u, q)?;
    let n = u.n() as i32;
    let ball = u.params().unit_ball_volume();
    let mut samples = Vec::with_capacity(radii.len());
    for &r in radii {
        let v = mollified_ball(u, r)?;
        let pair = weak_pairing_with(&op, &v)?;
        let norm = ball * r.powi(n);
        samples.push((r, pair.value / norm, pair.err / norm));
    }
    let significant = samples.iter().all(|(_, p, e)| p.abs() > *e);
    if !significant {
        return Ok(CmcAudit { fitted_h: 0.0, fitted_exponent: None, samples });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.abs().ln()).collect();
    let gamma = slope(&xs, &ys);
    // p = h + C R^γ is linear in (1, R^γ)
    let zs: Vec<f64> = samples.iter().map(|s| s.0.powf(gamma)).collect();
    let ps: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let c = slope(&zs, &ps);
    let mean_z = zs.iter().sum::<f64>() / zs.len() as f64;
    let mean_p = ps.iter().sum::<f64>() / ps.len() as f64;
    Ok(CmcAudit { fitted_h: mean_p - c * mean_z, fitted_exponent: Some(gamma), samples })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::GraphOperator;
    use crate::field::{Aabb, ExteriorModel};
    use crate::kernel::FracParams;

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(3)
        } else {
            0.0
        }
    }

    fn bumped(alpha: f64, half: f64, nodes: usize, slope: f64) -> GraphField {
        let p = FracParams::new(1, alpha).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![slope], offset: 0.0 };
        let h = 2.0 * half / (nodes - 1) as f64;
        GraphField::from_fn(p, Aabb::cube(1, half).unwrap(), h, ext, |x| slope * x[0] + bump(x[0])).unwrap()
    }

    #[test]
    fn constant_field_has_zero_energy() {
        let p = FracParams::new(1, 0.5).unwrap();
        let u = GraphField::from_fn(p, Aabb::cube(1, 1.0).unwrap(), 0.1, ExteriorModel::ConstantBeyond, |_| 0.7).unwrap();
        assert_eq!(graph_energy(&u, &QuadratureSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn energy_gradient_matches_curvature() {
        let u = bumped(0.5, 2.0, 33, 0.3);
        let q = QuadratureSpec::default();
        let model = EnergyModel::new(&u, &q).unwrap();
        let op = GraphOperator::new(&u, &q).unwrap();
        let h = u.spacing();
        let eps = 1e-5;
        for k in [4usize, 10, 16, 22, 28] {
            let mut step = vec![0.0; u.len()];
            step[k] = eps;
            let up = model.evaluate(u.values(), Some(&step));
            step[k] = -eps;
            let down = model.evaluate(u.values(), Some(&step));
            let fd = (up - down) / (2.0 * eps);
            let want = h * op.at_node(k).unwrap().value;
            assert!((fd - want).abs() <= 1e-6 * want.abs().max(h), "node {k}: {fd} vs {want}");
        }
    }

    #[test]
    fn energy_is_convex_on_a_segment() {
        let a = bumped(0.5, 2.0, 33, 0.3);
        let b = a.with_values(a.values().iter().enumerate().map(|(k, v)| if a.node_margin(k) >= 2 { -0.5 * v } else { *v }).collect()).unwrap();
        let q = QuadratureSpec::default();
        let mid = a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect()).unwrap();
        let (ea, eb, em) = (graph_energy(&a, &q).unwrap(), graph_energy(&b, &q).unwrap(), graph_energy(&mid, &q).unwrap());
        assert!(em <= 0.5 * (ea + eb) + 1e-10 * (ea.abs() + eb.abs()));
    }

    #[test]
    fn affine_start_is_converged() {
        let p = FracParams::new(1, 0.5).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![0.4], offset: 0.1 };
        let u = GraphField::from_fn(p, Aabb::cube(1, 2.0).unwrap(), 0.125, ext, |x| 0.4 * x[0] + 0.1).unwrap();
        let r = solve(&u, 0.0, &SolveOptions { tolerance: 1e-8, ..Default::default() }, &QuadratureSpec::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn audit_needs_three_radii() {
        let u = bumped(0.5, 4.0, 33, 0.0);
        assert!(matches!(cmc_exponent_audit(&u, &[1.0, 2.0], &QuadratureSpec::default()), Err(Error::Parameter(_))));
    }
}
