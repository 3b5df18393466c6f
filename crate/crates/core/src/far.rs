//! Far-field rule: polar quadrature outside a cube in the variable `σ = r^{-α}`.
//!
//! With `σ = r^{-α}`, `r^{-1-α} dr = dσ/α`, so a bounded integrand against
//! `r^{-1-α} dr` becomes a bounded integrand on the finite interval
//! `(σ_min, σ_box]`. Everything below `σ_min` is the tail, bounded using
//! `|integrand| ≤ bound`.

use crate::error::Result;
use crate::field::QuadratureSpec;
use crate::kernel::FracParams;
use crate::quad::{gk15_rule, tree_sum, Estimate};

/// Ratio between consecutive radial panel endpoints in `σ`.
const PANEL_RATIO: f64 = 1.0 / 16.0;

#[derive(Clone, Debug)]
pub(crate) struct FarRule {
    alpha: f64,
    sigma_min: f64,
    tail: f64,
    /// Unit directions with Kronrod and Gauss angular weights.
    dirs: Vec<([f64; 2], f64, f64)>,
}

impl FarRule {
    /// `bound` caps `|f|` in [`FarRule::integrate`]; it sets the tail size.
    pub fn new(params: FracParams, q: &QuadratureSpec, bound: f64) -> Result<Self> {
        let omega = params.sphere_measure();
        let alpha = params.alpha;
        let (far_radius, tail) = q.resolve_far_radius(bound * omega / alpha, alpha)?;
        let dirs = if params.n == 1 {
            vec![([1.0, 0.0], 1.0, 1.0), ([-1.0, 0.0], 1.0, 1.0)]
        } else {
            let step = std::f64::consts::FRAC_PI_4;
            (0..8)
                .flat_map(|k| gk15_rule(k as f64 * step, (k + 1) as f64 * step))
                .map(|(th, wk, wg)| ([th.cos(), th.sin()], wk, wg))
                .collect()
        };
        Ok(Self { alpha, sigma_min: far_radius.powf(-alpha), tail, dirs })
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Nodes `(dir, r, weight)` of the rule outside the cube `|y|∞ ≤ half`.
    /// Kronrod weights only; used where the integrand changes between calls
    /// but the node set must not.
    pub fn nodes(&self, n: usize, half: f64) -> Vec<([f64; 2], f64, f64)> {
        let mut out = Vec::new();
        for (dir, wk, _) in &self.dirs {
            for (sigma, w, _) in self.radial_nodes(n, dir, half) {
                out.push((*dir, sigma.powf(-1.0 / self.alpha), wk * w / self.alpha));
            }
        }
        out
    }

    fn radial_nodes(&self, n: usize, dir: &[f64; 2], half: f64) -> Vec<(f64, f64, f64)> {
        let reach = dir[..n].iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let sigma_box = (half / reach).powf(-self.alpha);
        let mut out = Vec::new();
        let mut hi = sigma_box;
        while hi > self.sigma_min {
            let lo = (hi * PANEL_RATIO).max(self.sigma_min);
            out.extend(gk15_rule(lo, hi));
            hi = lo;
        }
        out
    }

    /// `∫_{|y|∞ > half, |y| < R_far} f(dir, r) r^{-1-α} dr dθ`, with the
    /// quadrature error estimate. `f` must be bounded by the constructor's `bound`
    /// for the tail to be valid; the tail is not included here.
    pub fn integrate<F: FnMut(&[f64; 2], f64) -> f64>(&self, n: usize, half: f64, mut f: F) -> Estimate {
        let mut kron = Vec::with_capacity(self.dirs.len());
        let mut gauss = Vec::with_capacity(self.dirs.len());
        let mut radial_err = Vec::with_capacity(self.dirs.len());
        for (dir, wk, wg) in &self.dirs {
            let mut k = Vec::new();
            let mut g = Vec::new();
            let mut err = 0.0;
            let nodes = self.radial_nodes(n, dir, half);
            for panel in nodes.chunks(15) {
                let mut pk = 0.0;
                let mut pg = 0.0;
                for &(sigma, w1, w2) in panel {
                    let v = f(dir, sigma.powf(-1.0 / self.alpha));
                    pk += w1 * v;
                    pg += w2 * v;
                }
                err += (pk - pg).abs();
                k.push(pk);
                g.push(pg);
            }
            let radial = tree_sum(&k) / self.alpha;
            kron.push(wk * radial);
            gauss.push(wg * radial);
            radial_err.push(wk * err / self.alpha);
        }
        let value = tree_sum(&kron);
        let angular = if n == 1 { 0.0 } else { (value - tree_sum(&gauss)).abs() };
        Estimate::new(value, angular + tree_sum(&radial_err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrand_matches_closed_form() {
        // ∫_{|y|>L} r^{-1-α} dr dθ = ω L^{-α}/α, minus the tail ω σ_min/α.
        for n in [1usize, 2] {
            let p = FracParams::new(n, 0.4).unwrap();
            let q = QuadratureSpec::default();
            let rule = FarRule::new(p, &q, 1.0).unwrap();
            let l = 1.5;
            let got = rule.integrate(n, l, |_, _| 1.0);
            let omega = p.sphere_measure();
            let sigma_min = rule.sigma_min;
            let want = if n == 1 {
                omega * (l.powf(-0.4) - sigma_min) / 0.4
            } else {
                // outside a square: ∫ dθ (L/max|cos|,|sin|)^{-α}/α
                let inner = crate::quad::adaptive(
                    |th: f64| (l / th.cos().abs().max(th.sin().abs())).powf(-0.4),
                    0.0,
                    std::f64::consts::FRAC_PI_4,
                    1e-14,
                    1e-14,
                )
                .value;
                (8.0 * inner - omega * sigma_min) / 0.4
            };
            assert!((got.value - want).abs() < 1e-9 * want, "n={n}: {} vs {want}", got.value);
            assert!(rule.tail() <= q.tail_budget * (1.0 + 1e-12));
        }
    }

    #[test]
    fn unattainable_budget_reports_radius() {
        let p = FracParams::new(1, 0.1).unwrap();
        let q = QuadratureSpec { tail_budget: 1e-30, max_far_radius: 1e12, ..Default::default() };
        match FarRule::new(p, &q, 2.0) {
            Err(crate::error::Error::Budget { required_far_radius, .. }) => assert!(required_far_radius > 1e12),
            other => panic!("{other:?}"),
        }
    }
}
