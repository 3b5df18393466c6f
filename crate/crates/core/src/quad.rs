//! Quadrature building blocks shared by the kernel, curvature and perimeter code.
//!
//! Everything here is deterministic: node sets are fixed tables or generated by
//! a fixed Newton iteration, and reductions go through [`tree_sum`] so results
//! do not depend on evaluation order.

/// Gauss–Kronrod 15-point abscissae on [-1, 1] (non-negative half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching [`XGK`].
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss 7-point weights for the odd-indexed Kronrod abscissae (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of a quadrature with its error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

impl Estimate {
    pub fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate::new(self.value + rhs.value, self.err + rhs.err)
    }
}

/// The 15 Kronrod nodes mapped to `[a, b]`, with Kronrod and Gauss weights.
///
/// Gauss weights are zero at the Kronrod-only nodes.
pub fn gk15_rule(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[2 * i] = (c - h * XGK[i], h * WGK[i], h * wg);
        out[2 * i + 1] = (c + h * XGK[i], h * WGK[i], h * wg);
    }
    out[14] = (c, h * WGK[7], h * WG[3]);
    out
}

/// One Gauss–Kronrod 15 panel. The error is `|K15 - G7|`.
pub fn gk15<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> Estimate {
    let mut k = 0.0;
    let mut g = 0.0;
    for (x, wk, wg) in gk15_rule(a, b) {
        let fx = f(x);
        k += wk * fx;
        g += wg * fx;
    }
    Estimate::new(k, (k - g).abs())
}

/// Globally adaptive Gauss–Kronrod integration on a finite interval.
///
/// Splits the panel with the largest error until the summed error drops below
/// `max(abs_tol, rel_tol * |value|)` or the panel budget is exhausted.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Estimate {
    const MAX_PANELS: usize = 4000;
    let first = gk15(&mut f, a, b);
    let mut panels: Vec<(f64, f64, Estimate)> = vec![(a, b, first)];
    loop {
        let value = tree_sum(&panels.iter().map(|p| p.2.value).collect::<Vec<_>>());
        let err = tree_sum(&panels.iter().map(|p| p.2.err).collect::<Vec<_>>());
        if err <= abs_tol.max(rel_tol * value.abs()) || panels.len() >= MAX_PANELS {
            return Estimate::new(value, err);
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.2.err > best.1 { (i, p.2.err) } else { best });
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Panel can no longer be split in floating point.
            let value = tree_sum(&panels.iter().map(|p| p.2.value).collect::<Vec<_>>());
            let err = tree_sum(&panels.iter().map(|p| p.2.err).collect::<Vec<_>>());
            let last = gk15(&mut f, lo, hi);
            return Estimate::new(value + last.value, err + last.err);
        }
        panels.push((lo, mid, gk15(&mut f, lo, mid)));
        panels.push((mid, hi, gk15(&mut f, mid, hi)));
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_m.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    assert!(m > 0);
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Pairwise summation. Order of reduction depends only on the slice length.
pub fn tree_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}

/// Chebyshev interpolant of a function on a fixed interval.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolates `f` at `m` Chebyshev points of the first kind on `[lo, hi]`.
    pub fn fit<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, m: usize) -> Self {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let pi = std::f64::consts::PI;
        let samples: Vec<f64> = (0..m)
            .map(|k| {
                let theta = pi * (k as f64 + 0.5) / m as f64;
                f(mid + half * theta.cos())
            })
            .collect();
        let coeffs = (0..m)
            .map(|j| {
                let terms: Vec<f64> = (0..m)
                    .map(|k| {
                        let theta = pi * (k as f64 + 0.5) / m as f64;
                        samples[k] * (j as f64 * theta).cos()
                    })
                    .collect();
                let c = 2.0 / m as f64 * tree_sum(&terms);
                if j == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Self { lo, hi, coeffs }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let s = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let s2 = 2.0 * s;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = c + s2 * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + s * b1 - b2
    }

    /// Magnitude of the trailing coefficients, a proxy for truncation error.
    pub fn tail_magnitude(&self) -> f64 {
        let m = self.coeffs.len();
        self.coeffs[m.saturating_sub(3)..].iter().map(|c| c.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let e = gk15(|x| x.powi(6) - 3.0 * x * x + 1.0, -1.0, 2.0);
        let exact = (2f64.powi(7) + 1.0) / 7.0 - (8.0 + 1.0) + 3.0;
        assert!((e.value - exact).abs() < 1e-12);
        assert!(e.err < 1e-12);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // int_0^1 x^{-1/2} = 2
        let e = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert!((e.value - 2.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for m in [1, 2, 5, 8, 16] {
            let gl = gauss_legendre(m);
            let s: f64 = gl.iter().map(|p| p.1).sum();
            assert!((s - 2.0).abs() < 1e-13);
            // exact for degree 2m-1
            let v: f64 = gl.iter().map(|(x, w)| w * x.powi(2 * m as i32 - 2)).sum();
            assert!((v - 2.0 / (2 * m - 1) as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn chebyshev_reproduces_smooth_function() {
        let c = Chebyshev::fit(|x| (1.0 + x * x).recip(), 0.0, 1.0, 24);
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            assert!((c.eval(x) - (1.0 + x * x).recip()).abs() < 1e-13);
        }
    }

    #[test]
    fn tree_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(tree_sum(&xs), 499500.0);
    }
}
