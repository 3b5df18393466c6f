//! The one-dimensional kernel behind every graph computation.
//!
//! For a graph dimension `n` and order `alpha` the kernel is
//! `G(t) = ∫_0^t (1 + τ²)^{-(n+1+α)/2} dτ`, an odd increasing function
//! saturating at `±Λ`. Direct quadrature is far too slow for the inner loops of
//! curvature and energy evaluation, so construction tabulates two smooth
//! functions with piecewise Chebyshev interpolants:
//!
//! * `G(t)/t` on `|t| ≤ 1`;
//! * `ψ(w)` on `w = 1/|t| ∈ [0, 1]`, where `Λ - G(t) = w^{n+α} ψ(w)`.
//!
//! Both are analytic on their interval with the nearest singularities at
//! `±i`, so a dozen coefficients per panel reach round-off. The tabulated
//! values come from adaptive Gauss–Kronrod quadrature in the compactified
//! variable `τ = tan θ`.

use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::{adaptive, Chebyshev};

/// Graph dimension and fractional order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub n: usize,
    pub alpha: f64,
}

impl FracParams {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        let p = Self { n, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n == 1 || self.n == 2) {
            return Err(Error::Parameter(format!("n must be 1 or 2, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Kernel power `n + 1 + α`.
    pub fn exponent(&self) -> f64 {
        self.n as f64 + 1.0 + self.alpha
    }

    /// Closed form of `Λ = G(+∞) = (√π/2) Γ((n+α)/2) / Γ((n+1+α)/2)`.
    pub fn lambda(&self) -> f64 {
        let a = 0.5 * (self.n as f64 + self.alpha);
        let b = 0.5 * (self.n as f64 + 1.0 + self.alpha);
        0.5 * PI.sqrt() * (ln_gamma(a) - ln_gamma(b)).exp()
    }

    /// Surface measure of the unit sphere `S^{n-1}` in the graph domain.
    pub fn sphere_measure(&self) -> f64 {
        match self.n {
            1 => 2.0,
            _ => 2.0 * PI,
        }
    }

    /// Volume of the unit ball in the graph domain.
    pub fn unit_ball_volume(&self) -> f64 {
        match self.n {
            1 => 2.0,
            _ => PI,
        }
    }
}

const PANELS: usize = 16;
const PANEL_DEGREE: usize = 14;

const KERNEL_CACHE_SIZE: usize = 32;

type CacheEntry = ((usize, u64), Kernel);

static KERNEL_CACHE: OnceLock<Mutex<Vec<CacheEntry>>> = OnceLock::new();

/// Tabulated kernel for one `(n, α)` pair. Immutable and cheap to share.
#[derive(Clone, Debug)]
pub struct Kernel {
    params: FracParams,
    exponent: f64,
    lambda: f64,
    inner: Vec<Chebyshev>,
    outer: Vec<Chebyshev>,
}

/// `∫_0^{atan t} cos^{p-2} θ dθ`, the raw definition after `τ = tan θ`.
pub(crate) fn g_by_quadrature(t: f64, exponent: f64) -> f64 {
    let sign = t.signum();
    let theta = t.abs().atan();
    if theta == 0.0 {
        return 0.0;
    }
    let m = exponent - 2.0;
    sign * adaptive(|th| th.cos().max(0.0).powf(m), 0.0, theta, 1e-16, 1e-15).value
}

/// `ψ(w) = ∫_0^1 r^{p-2} (1 + w² r²)^{-p/2} dr`.
fn psi_by_quadrature(w: f64, exponent: f64) -> f64 {
    let m = exponent - 2.0;
    adaptive(
        |r| r.powf(m) * (1.0 + w * w * r * r).powf(-0.5 * exponent),
        0.0,
        1.0,
        1e-16,
        1e-15,
    )
    .value
}

impl Kernel {
    /// Builds the tables and cross-checks the closed-form `Λ` against raw
    /// quadrature of the full integral. Tables are cached per `(n, α)`.
    pub fn new(params: FracParams) -> Result<Self> {
        params.validate()?;
        let key = (params.n, params.alpha.to_bits());
        let cache = KERNEL_CACHE.get_or_init(|| Mutex::new(Vec::new()));
        if let Some((_, k)) = cache.lock().unwrap_or_else(|e| e.into_inner()).iter().find(|(k, _)| *k == key) {
            return Ok(k.clone());
        }
        let built = Self::build(params)?;
        let mut entries = cache.lock().unwrap_or_else(|e| e.into_inner());
        if entries.len() >= KERNEL_CACHE_SIZE {
            entries.remove(0);
        }
        entries.push((key, built.clone()));
        Ok(built)
    }

    fn build(params: FracParams) -> Result<Self> {
        let exponent = params.exponent();
        let lambda = params.lambda();
        let raw = g_by_quadrature(f64::INFINITY, exponent);
        if ((raw - lambda) / lambda).abs() > 1e-10 {
            return Err(Error::Parameter(format!(
                "kernel self-check failed: closed form {lambda} vs quadrature {raw}"
            )));
        }
        let width = 1.0 / PANELS as f64;
        // G(t)/t is even and analytic, so `t * table(t)` is exactly odd.
        let inner = (0..PANELS)
            .map(|k| {
                let lo = k as f64 * width;
                Chebyshev::fit(|t| g_by_quadrature(t, exponent) / t, lo, lo + width, PANEL_DEGREE)
            })
            .collect();
        let outer = (0..PANELS)
            .map(|k| {
                let lo = k as f64 * width;
                Chebyshev::fit(|w| psi_by_quadrature(w, exponent), lo, lo + width, PANEL_DEGREE)
            })
            .collect();
        Ok(Self { params, exponent, lambda, inner, outer })
    }

    pub fn params(&self) -> FracParams {
        self.params
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// The saturation constant `Λ = sup |G|`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    fn panel(tables: &[Chebyshev], x: f64) -> f64 {
        let idx = ((x * PANELS as f64) as usize).min(PANELS - 1);
        tables[idx].eval(x)
    }

    /// `G(t)`; accepts `±∞`.
    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        let a = t.abs();
        let v = if a <= 1.0 {
            a * Self::panel(&self.inner, a)
        } else if a.is_infinite() {
            self.lambda
        } else {
            let w = 1.0 / a;
            self.lambda - w.powf(self.exponent - 1.0) * Self::panel(&self.outer, w)
        };
        if t < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `G'(t) = (1 + t²)^{-p/2}`.
    #[inline]
    pub fn g_prime(&self, t: f64) -> f64 {
        (1.0 + t * t).powf(-0.5 * self.exponent)
    }

    /// `G''(t) = -p t (1 + t²)^{-p/2 - 1}`.
    #[inline]
    pub fn g_second(&self, t: f64) -> f64 {
        -self.exponent * t * (1.0 + t * t).powf(-0.5 * self.exponent - 1.0)
    }

    /// Antiderivative `𝒢(t) = ∫_0^t G`, via `𝒢(t) = t G(t) - ∫_0^t τ G'(τ) dτ`.
    #[inline]
    pub fn g_antideriv(&self, t: f64) -> f64 {
        let q = 0.5 * (self.exponent - 2.0);
        // ∫_0^t τ (1+τ²)^{-p/2} dτ = (1 - (1+t²)^{-q}) / (2q)
        let second = -(-q * (t * t).ln_1p()).exp_m1() / (2.0 * q);
        t * self.g(t) - second
    }

    /// `𝒢(a + eps) - 𝒢(a)`, accurate when `eps` is tiny relative to `a`.
    #[inline]
    pub fn g_antideriv_diff(&self, a: f64, eps: f64) -> f64 {
        if eps.abs() <= 1e-3 * (1.0 + a.abs()) {
            let g = self.g(a);
            let g1 = self.g_prime(a);
            let g2 = self.g_second(a);
            eps * (g + eps * (0.5 * g1 + eps * g2 / 6.0))
        } else {
            self.g_antideriv(a + eps) - self.g_antideriv(a)
        }
    }
}

/// `G(t)` for the given parameters.
pub fn eval_g(t: f64, p: FracParams) -> Result<f64> {
    Ok(Kernel::new(p)?.g(t))
}

/// The constant `Λ`.
pub fn lambda_const(p: FracParams) -> Result<f64> {
    p.validate()?;
    Ok(p.lambda())
}

/// `𝒢(t)`, the even convex antiderivative of `G`.
pub fn eval_g_antideriv(t: f64, p: FracParams) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("antiderivative needs finite t, got {t}")));
    }
    Ok(Kernel::new(p)?.g_antideriv(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta_reg;

    fn params(n: usize, alpha: f64) -> FracParams {
        FracParams::new(n, alpha).unwrap()
    }

    /// Independent route: `G(t) = sign(t) Λ I_{t²/(1+t²)}(1/2, (n+α)/2)`.
    fn g_oracle(t: f64, p: FracParams) -> f64 {
        let b = 0.5 * (p.n as f64 + p.alpha);
        if t.abs() <= 1.0 {
            let x = t * t / (1.0 + t * t);
            t.signum() * p.lambda() * beta_reg(0.5, b, x)
        } else {
            let y = 1.0 / (1.0 + t * t);
            t.signum() * p.lambda() * (1.0 - beta_reg(b, 0.5, y))
        }
    }

    #[test]
    fn rejects_out_of_domain_parameters() {
        assert!(FracParams::new(3, 0.5).is_err());
        assert!(FracParams::new(1, 0.0).is_err());
        assert!(FracParams::new(1, 1.0).is_err());
        assert!(FracParams::new(0, 0.5).is_err());
        assert!(lambda_const(FracParams { n: 1, alpha: 1.5 }).is_err());
    }

    #[test]
    fn lambda_for_half_order_line() {
        let p = params(1, 0.5);
        let l = lambda_const(p).unwrap();
        assert!((l - 1.198140234735592).abs() < 1e-12, "{l}");
        let k = Kernel::new(p).unwrap();
        assert!(((k.g(f64::INFINITY) - l) / l).abs() < 1e-10);
    }

    #[test]
    fn g_basic_examples() {
        let p = params(1, 0.5);
        let k = Kernel::new(p).unwrap();
        assert_eq!(k.g(0.0), 0.0);
        assert_eq!(k.g(-1.0), -k.g(1.0));
        for t in [0.5, 5.0, 50.0] {
            assert!(k.g(t) <= k.lambda());
        }
    }

    #[test]
    fn g_matches_incomplete_beta_oracle() {
        for (n, alpha) in [(1, 0.1), (1, 0.5), (1, 0.9), (2, 0.3), (2, 0.7)] {
            let p = params(n, alpha);
            let k = Kernel::new(p).unwrap();
            for i in 0..400 {
                let t = -20.0 + 40.0 * i as f64 / 399.0;
                let want = g_oracle(t, p);
                assert!((k.g(t) - want).abs() < 1e-12, "n={n} a={alpha} t={t}");
            }
            for t in [1e3, 1e6, 1e12] {
                let e = (k.g(t) - g_oracle(t, p)).abs();
                assert!(e < 1e-12, "t={t} err={e}");
            }
        }
    }

    #[test]
    fn lambda_decreases_in_alpha() {
        for n in [1, 2] {
            let ls: Vec<f64> = (1..=9).map(|i| params(n, i as f64 / 10.0).lambda()).collect();
            assert!(ls.windows(2).all(|w| w[1] < w[0]), "{ls:?}");
        }
    }

    #[test]
    fn antiderivative_examples() {
        let p = params(1, 0.5);
        let k = Kernel::new(p).unwrap();
        assert_eq!(k.g_antideriv(0.0), 0.0);
        assert_eq!(k.g_antideriv(-2.0), k.g_antideriv(2.0));
        let t = 1.0;
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-3] {
            let fd = (k.g_antideriv(t + h) - k.g_antideriv(t - h)) / (2.0 * h);
            let e = (fd - k.g(t)).abs();
            // O(h²) with G''(1) bounded
            assert!(e < 0.2 * h * h, "h={h} e={e}");
            assert!(e < prev);
            prev = e;
        }
        assert!(eval_g_antideriv(f64::NAN, p).is_err());
    }

    #[test]
    fn antiderivative_diff_matches_direct_difference() {
        let k = Kernel::new(params(2, 0.3)).unwrap();
        for a in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            for eps in [1e-9, 1e-5, 1e-2, 0.5] {
                let d = k.g_antideriv_diff(a, eps);
                let direct = k.g_antideriv(a + eps) - k.g_antideriv(a);
                assert!((d - direct).abs() < 1e-12 * (1.0 + direct.abs()).max(1.0) + 1e-15);
            }
        }
    }
}
