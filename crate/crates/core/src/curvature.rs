//! Principal-value evaluation of the graph operator `𝒰_α`, the set operator
//! `H_α`, and the weak pairing.
//!
//! Graph curvature at `x` is approximated by the symmetric lattice sum
//!
//! ```text
//! S_h(x) = 2 Σ_{o ≠ 0, |o|∞ ≤ M} G((u(x) - u(x + h o)) / (h|o|)) (h|o|)^{-n-α} hⁿ
//! ```
//!
//! over a cube covering the window, plus a polar far field outside the cube.
//! The lattice is symmetric under `o ↦ -o`, which realizes the principal
//! value: the cell at `o = 0` is dropped and the paired terms cancel to
//! leading order. Terms at lattice points outside the window use the
//! exterior model.

pub mod set;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::far::FarRule;
use crate::field::{GraphField, QuadratureSpec};
use crate::kernel::Kernel;
use crate::quad::{tree_sum, Estimate};

pub use set::{graph_set_consistency, set_curvature_at, Consistency};

/// Nodes closer than this to the window edge are not evaluated.
pub const BOUNDARY_MARGIN: usize = 2;

/// Precomputed state for repeated curvature evaluation on one field.
pub struct GraphOperator<'a> {
    u: &'a GraphField,
    kernel: Kernel,
    far: FarRule,
    h: f64,
    /// Widest stencil radius needed by any node.
    mmax: usize,
    /// Extended values over `[-mmax, N - 1 + mmax]ⁿ`.
    ext: Vec<f64>,
    ext_row: usize,
    /// `1/(h|o|)` and `2 (h|o|)^{-n-α} hⁿ` on `[-mmax, mmax]ⁿ`.
    inv: Vec<f64>,
    wt: Vec<f64>,
    stride: usize,
}

/// The lattice sum at one point, with its error components.
#[derive(Clone, Copy, Debug, Default)]
struct LatticeSum {
    value: f64,
    richardson: f64,
    /// Signed Richardson difference; `richardson` is its magnitude.
    richardson_signed: f64,
    singular: f64,
    /// Signed leading term of the excluded cell.
    singular_signed: f64,
    roundoff: f64,
}

/// Node value with error components kept apart, for the weak pairing: the
/// signed parts cancel across nodes in divergence form.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NodeParts {
    pub value: f64,
    pub richardson: f64,
    pub singular: f64,
    pub other: f64,
}

impl<'a> GraphOperator<'a> {
    pub fn new(u: &'a GraphField, q: &QuadratureSpec) -> Result<Self> {
        let params = u.params();
        q.validate(u.window().diameter())?;
        let kernel = Kernel::new(params)?;
        let far = FarRule::new(params, q, 2.0 * kernel.lambda())?;
        let n = u.n();
        let h = u.spacing();
        let shape = u.shape();
        let mmax = shape.iter().copied().max().unwrap_or(1) - 1;
        let pad = mmax;
        let ext_dims: Vec<usize> = shape.iter().map(|s| s + 2 * pad).collect();
        let ext_row = if n == 1 { 1 } else { ext_dims[1] };
        let total: usize = ext_dims.iter().product();
        let lo = &u.window().lo;
        let mut ext = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = if n == 1 { [flat, 0] } else { [flat / ext_row, flat % ext_row] };
            let inside = (0..n).all(|a| idx[a] >= pad && idx[a] < pad + shape[a]);
            if inside {
                let node = if n == 1 { [idx[0] - pad, 0] } else { [idx[0] - pad, idx[1] - pad] };
                ext.push(u.values()[u.ravel(node)]);
            } else {
                let x: Vec<f64> = (0..n).map(|a| lo[a] + (idx[a] as f64 - pad as f64) * h).collect();
                ext.push(u.exterior_value(&x));
            }
        }
        let stride = 2 * mmax + 1;
        let count = stride.pow(n as u32);
        let power = -(n as f64) - params.alpha;
        let cell = h.powi(n as i32);
        let mut inv = vec![0.0; count];
        let mut wt = vec![0.0; count];
        for t in 0..count {
            let o = if n == 1 { [t as f64 - mmax as f64, 0.0] } else {
                [(t / stride) as f64 - mmax as f64, (t % stride) as f64 - mmax as f64]
            };
            let dist = h * (o[0] * o[0] + o[1] * o[1]).sqrt();
            if dist > 0.0 {
                inv[t] = 1.0 / dist;
                wt[t] = 2.0 * dist.powf(power) * cell;
            }
        }
        Ok(Self { u, kernel, far, h, mmax, ext, ext_row, inv, wt, stride })
    }

    pub fn field(&self) -> &GraphField {
        self.u
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub(crate) fn far_rule(&self) -> &FarRule {
        &self.far
    }

    /// Stencil radius used at node `k`: just enough to cover the window.
    pub fn node_radius(&self, k: usize) -> usize {
        let idx = self.u.unravel(k);
        let shape = self.u.shape();
        (0..self.u.n()).map(|a| idx[a].max(shape[a] - 1 - idx[a])).max().unwrap_or(0)
    }

    /// `1/(h|o|)` and `2 (h|o|)^{-n-α} hⁿ` for a lattice offset within the widest stencil.
    #[inline]
    pub(crate) fn offset_weights(&self, o: [isize; 2]) -> (f64, f64) {
        let t = self.table_index(o);
        (self.inv[t], self.wt[t])
    }

    #[inline]
    fn table_index(&self, o: [isize; 2]) -> usize {
        let m = self.mmax as isize;
        if self.u.n() == 1 {
            (o[0] + m) as usize
        } else {
            (o[0] + m) as usize * self.stride + (o[1] + m) as usize
        }
    }

    /// Extended-array value at node `k` shifted by lattice offset `o`.
    #[inline]
    pub(crate) fn ext_value(&self, k: usize, o: [isize; 2]) -> f64 {
        let idx = self.u.unravel(k);
        let pad = self.mmax as isize;
        if self.u.n() == 1 {
            self.ext[(idx[0] as isize + pad + o[0]) as usize]
        } else {
            let r = idx[0] as isize + pad + o[0];
            let c = idx[1] as isize + pad + o[1];
            self.ext[r as usize * self.ext_row + c as usize]
        }
    }

    /// `𝒰_α u` at node `k`.
    pub fn at_node(&self, k: usize) -> Result<Estimate> {
        if self.u.node_margin(k) < BOUNDARY_MARGIN {
            return Err(Error::Domain(format!(
                "node {:?} is within {BOUNDARY_MARGIN} nodes of the window edge",
                self.u.node_position(k)
            )));
        }
        let u0 = self.u.values()[k];
        let m = self.node_radius(k);
        let sum = self.lattice_sum(u0, m, |o| self.ext_value(k, o));
        let x = self.u.node_position(k);
        Ok(self.finish(sum, &x, u0, m))
    }

    /// `𝒰_α u` at an arbitrary point at least `2h` inside the window.
    pub fn at_point(&self, x: &[f64]) -> Result<Estimate> {
        let n = self.u.n();
        let w = self.u.window();
        let slack = 1e-9 * self.h;
        let mut reach: f64 = 0.0;
        for a in 0..n {
            let d = (x[a] - w.lo[a]).min(w.hi[a] - x[a]);
            if !x[a].is_finite() || d < BOUNDARY_MARGIN as f64 * self.h - slack {
                return Err(Error::Domain(format!(
                    "point {x:?} is closer than {BOUNDARY_MARGIN}h to the window edge"
                )));
            }
            reach = reach.max((x[a] - w.lo[a]).max(w.hi[a] - x[a]));
        }
        let m = ((reach / self.h - 1e-9).ceil() as usize).min(self.mmax);
        let u0 = self.u.sample(x);
        let h = self.h;
        let sum = self.lattice_sum(u0, m, |o| {
            let y: Vec<f64> = (0..n).map(|a| x[a] + o[a] as f64 * h).collect();
            self.u.sample(&y)
        });
        Ok(self.finish(sum, x, u0, m))
    }

    fn lattice_sum<F: Fn([isize; 2]) -> f64>(&self, u0: f64, m: usize, fetch: F) -> LatticeSum {
        let n = self.u.n();
        let alpha = self.kernel.alpha();
        let mi = m as isize;
        // Richardson pair: the fine sum on |o|∞ ≤ 3J+1 and the 3h sub-lattice
        // on |o|∞ ≤ 3J cover the same cube.
        let j = ((m.max(1) - 1) / 3) as isize;
        let reach = 3 * j + 1;
        let inner = if n == 1 { 0..=0 } else { -mi..=mi };
        let mut rows = Vec::with_capacity(2 * m + 1);
        let mut fine_inner = Vec::with_capacity(2 * m + 1);
        let mut coarse = Vec::with_capacity(2 * m + 1);
        let mut abs_sum = 0.0;
        let mut value_bound = 0.0;
        let mut count = 0usize;
        for a in -mi..=mi {
            let mut row = 0.0;
            let mut row_inner = 0.0;
            let mut row_coarse = 0.0;
            for b in inner.clone() {
                if a == 0 && b == 0 {
                    continue;
                }
                let t = self.table_index([a, b]);
                let big_u = fetch([a, b]);
                let term = self.wt[t] * self.kernel.g((u0 - big_u) * self.inv[t]);
                row += term;
                abs_sum += term.abs();
                value_bound += self.wt[t] * self.inv[t] * (u0.abs() + big_u.abs());
                count += 1;
                if a.abs() <= reach && b.abs() <= reach {
                    row_inner += term;
                    if a % 3 == 0 && b % 3 == 0 {
                        row_coarse += term;
                    }
                }
            }
            rows.push(row);
            fine_inner.push(row_inner);
            coarse.push(row_coarse);
        }
        let value = tree_sum(&rows);
        let fine = tree_sum(&fine_inner);
        let coarse = 3f64.powi(n as i32) * tree_sum(&coarse);
        let richardson_signed = if j > 0 { (fine - coarse) / (3f64.powf(1.0 - alpha) - 1.0) } else { 0.0 };
        let richardson = richardson_signed.abs();
        // Second differences at the center bound the excluded cell.
        let dirs: &[[isize; 2]] = if n == 1 { &[[1, 0]] } else { &[[1, 0], [0, 1], [1, 1], [1, -1]] };
        // The excluded cell contributes about
        // -(ρ^{1-α}/(1-α)) ∫_S G'(∇u·θ) θᵀD²uθ dθ, a divergence in x.
        let mut m2: f64 = 0.0;
        let mut directional = 0.0;
        for d in dirs {
            let len = ((d[0] * d[0] + d[1] * d[1]) as f64).sqrt() * self.h;
            let (fwd, bwd) = (fetch(*d), fetch([-d[0], -d[1]]));
            let second = (fwd + bwd - 2.0 * u0) / (len * len);
            m2 = m2.max(second.abs());
            // G'(∂u)∂²u as a difference of G along the line, so it telescopes
            directional += (self.kernel.g((fwd - u0) / len) - self.kernel.g((u0 - bwd) / len)) / len;
        }
        let omega = self.kernel.params().sphere_measure();
        let rho = 0.5 * self.h * (n as f64).sqrt();
        let cell_factor = rho.powf(1.0 - alpha) / (1.0 - alpha);
        let singular = m2 * omega * cell_factor;
        let singular_signed = -cell_factor * omega * directional / dirs.len() as f64;
        let eps = f64::EPSILON;
        let roundoff = eps * (((count as f64).log2() + 4.0) * abs_sum + 4.0 * value_bound);
        LatticeSum { value, richardson, richardson_signed, singular, singular_signed, roundoff }
    }

    fn finish(&self, sum: LatticeSum, x: &[f64], u0: f64, m: usize) -> Estimate {
        let p = self.parts(sum, x, u0, m);
        Estimate::new(p.value, sum.richardson + sum.singular + p.other)
    }

    /// Node value with separated error components.
    pub(crate) fn node_parts(&self, k: usize) -> Result<NodeParts> {
        if self.u.node_margin(k) < BOUNDARY_MARGIN {
            return Err(Error::Domain(format!(
                "node {:?} is within {BOUNDARY_MARGIN} nodes of the window edge",
                self.u.node_position(k)
            )));
        }
        let u0 = self.u.values()[k];
        let m = self.node_radius(k);
        let sum = self.lattice_sum(u0, m, |o| self.ext_value(k, o));
        let x = self.u.node_position(k);
        Ok(self.parts(sum, &x, u0, m))
    }

    fn parts(&self, sum: LatticeSum, x: &[f64], u0: f64, m: usize) -> NodeParts {
        let n = self.u.n();
        let half = (m as f64 + 0.5) * self.h;
        let mut y = [0.0; 2];
        let far = self.far.integrate(n, half, |dir, r| {
            for a in 0..n {
                y[a] = x[a] + r * dir[a];
            }
            2.0 * self.kernel.g((u0 - self.u.sample(&y[..n])) / r)
        });
        let far_roundoff = 8.0 * f64::EPSILON * 2.0 * self.kernel.lambda() * self.kernel.params().sphere_measure()
            * half.powf(-self.kernel.alpha())
            / self.kernel.alpha();
        NodeParts {
            value: sum.value + far.value,
            richardson: sum.richardson_signed,
            singular: sum.singular_signed,
            other: sum.roundoff + far.err + far_roundoff + self.far.tail(),
        }
    }
}

/// `𝒰_α u(x)` with its error bound.
pub fn curvature_at(u: &GraphField, x: &[f64], q: &QuadratureSpec) -> Result<Estimate> {
    GraphOperator::new(u, q)?.at_point(x)
}

/// Curvature at every node at least [`BOUNDARY_MARGIN`] nodes inside the window.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureField {
    pub nodes: Vec<usize>,
    pub positions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub error_bounds: Vec<f64>,
}

impl CurvatureField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_err(&self) -> f64 {
        self.error_bounds.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// Columns `x1..xn, value, err`.
    pub fn to_csv(&self) -> String {
        let n = self.positions.first().map_or(1, |p| p.len());
        let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
        out.push_str("value,err\n");
        for ((p, v), e) in self.positions.iter().zip(&self.values).zip(&self.error_bounds) {
            for c in p {
                out.push_str(&format!("{c:?},"));
            }
            out.push_str(&format!("{v:?},{e:?}\n"));
        }
        out
    }
}

pub fn curvature_field(u: &GraphField, q: &QuadratureSpec) -> Result<CurvatureField> {
    let op = GraphOperator::new(u, q)?;
    let nodes = u.interior_nodes(BOUNDARY_MARGIN);
    let results: Vec<Estimate> = nodes.par_iter().map(|&k| op.at_node(k)).collect::<Result<_>>()?;
    Ok(CurvatureField {
        positions: nodes.iter().map(|&k| u.node_position(k)).collect(),
        values: results.iter().map(|e| e.value).collect(),
        error_bounds: results.iter().map(|e| e.err).collect(),
        nodes,
    })
}

/// `∬ G((u(x)-u(y))/|x-y|) (v(x)-v(y)) |x-y|^{-n-α} dx dy` for compactly supported `v`.
///
/// On the lattice the double sum over pairs collapses, since `G` is odd and
/// the weights are symmetric, to `Σ_i v_i hⁿ S(x_i)` where `S` is the full
/// one-point sum (lattice plus far field) at node `i`.
pub fn weak_pairing(u: &GraphField, v: &GraphField, q: &QuadratureSpec) -> Result<Estimate> {
    let op = GraphOperator::new(u, q)?;
    weak_pairing_with(&op, v)
}

pub(crate) fn weak_pairing_with(op: &GraphOperator<'_>, v: &GraphField) -> Result<Estimate> {
    let u = op.field();
    if v.n() != u.n() {
        return Err(Error::Domain("test function dimension differs from u".into()));
    }
    let probe = 1e3 * u.window().diameter();
    let far_probe: Vec<f64> = vec![probe; u.n()];
    let far_neg: Vec<f64> = vec![-probe; u.n()];
    if v.sample(&far_probe) != 0.0 || v.sample(&far_neg) != 0.0 {
        return Err(Error::Domain("test function is not compactly supported".into()));
    }
    let mut weights = Vec::new();
    for k in 0..u.len() {
        let vk = v.sample(&u.node_position(k));
        if vk == 0.0 {
            continue;
        }
        if u.node_margin(k) < BOUNDARY_MARGIN {
            return Err(Error::Domain(
                "test function support reaches the window edge of u".into(),
            ));
        }
        weights.push((k, vk));
    }
    // The discretization error of the pairing is estimated on the pairing
    // itself: the signed per-node Richardson and excluded-cell terms are
    // summed before taking magnitudes (twice, as a safety factor), since they
    // are discrete divergences that cancel against smooth test functions.
    let cell = u.spacing().powi(u.n() as i32);
    let parts: Vec<NodeParts> = weights.par_iter().map(|&(k, _)| op.node_parts(k)).collect::<Result<_>>()?;
    let column = |f: &dyn Fn(&NodeParts, f64) -> f64| {
        tree_sum(&parts.iter().zip(&weights).map(|(p, &(_, vk))| f(p, vk)).collect::<Vec<_>>())
    };
    let value = column(&|p, vk| vk * cell * p.value);
    let richardson = column(&|p, vk| vk * cell * p.richardson).abs();
    let singular = column(&|p, vk| vk * cell * p.singular).abs();
    let other = column(&|p, vk| vk.abs() * cell * p.other);
    Ok(Estimate::new(value, 2.0 * (richardson + singular) + other))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Aabb, ExteriorModel};
    use crate::kernel::FracParams;

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(3)
        } else {
            0.0
        }
    }

    fn bump_field(alpha: f64, half: f64, h: f64, slope: f64) -> GraphField {
        let p = FracParams::new(1, alpha).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![slope], offset: 0.0 };
        GraphField::from_fn(p, Aabb::cube(1, half).unwrap(), h, ext, |x| slope * x[0] + bump(x[0])).unwrap()
    }

    #[test]
    fn affine_data_is_null() {
        let p = FracParams::new(1, 0.5).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![-3.3], offset: 0.7 };
        let u = GraphField::from_fn(p, Aabb::cube(1, 2.0).unwrap(), 1.0 / 32.0, ext, |x| -3.3 * x[0] + 0.7).unwrap();
        let f = curvature_field(&u, &QuadratureSpec::default()).unwrap();
        for (v, e) in f.values.iter().zip(&f.error_bounds) {
            assert!(v.abs() <= *e, "{v} > {e}");
        }
    }

    #[test]
    fn maximum_gives_positive_curvature() {
        let u = bump_field(0.5, 2.0, 1.0 / 32.0, 0.0);
        let c = curvature_at(&u, &[0.0], &QuadratureSpec::default()).unwrap();
        assert!(c.value - c.err > 0.0, "{c:?}");
        let d = curvature_at(&u.negated(), &[0.0], &QuadratureSpec::default()).unwrap();
        assert_eq!(d.value, -c.value);
    }

    #[test]
    fn converges_under_refinement() {
        // Differences between successive grids shrink, and the reported error
        // covers the distance to the finest grid.
        let q = QuadratureSpec::default();
        let vals: Vec<Estimate> = [16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|m| curvature_at(&bump_field(0.5, 2.0, 1.0 / m, 0.4), &[0.25], &q).unwrap())
            .collect();
        let d1 = (vals[1].value - vals[0].value).abs();
        let d2 = (vals[2].value - vals[1].value).abs();
        assert!(d2 < d1, "{vals:?}");
        for v in &vals[..2] {
            assert!((v.value - vals[3].value).abs() <= v.err, "{v:?} vs {:?}", vals[3]);
        }
    }

    #[test]
    fn node_and_point_paths_agree() {
        let u = bump_field(0.3, 2.0, 1.0 / 16.0, 1.2);
        let q = QuadratureSpec::default();
        let op = GraphOperator::new(&u, &q).unwrap();
        let k = u.ravel([20, 0]);
        let a = op.at_node(k).unwrap();
        let b = op.at_point(&u.node_position(k)).unwrap();
        assert!((a.value - b.value).abs() < 1e-12 * (1.0 + a.value.abs()), "{a:?} {b:?}");
    }

    #[test]
    fn boundary_points_are_rejected() {
        let u = bump_field(0.5, 1.0, 0.125, 0.0);
        let q = QuadratureSpec::default();
        assert!(matches!(curvature_at(&u, &[0.9], &q), Err(Error::Domain(_))));
        let op = GraphOperator::new(&u, &q).unwrap();
        assert!(op.at_node(1).is_err());
        assert!(op.at_node(2).is_ok());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let u = bump_field(0.5, 1.0, 0.25, 0.0);
        let f = curvature_field(&u, &QuadratureSpec::default()).unwrap();
        let csv = f.to_csv();
        assert!(csv.starts_with("x1,value,err\n"));
        assert_eq!(csv.lines().count(), 1 + f.values.len());
    }
}
