//! `H_α[E](x) = PV ∫ (χ_{E^c} - χ_E)(y) |x - y|^{-n-1-α} dy` on voxel sets.
//!
//! Lines parallel to one coordinate axis (the axis closest to the normal at
//! `x`) are integrated exactly: along a line at transverse distance `ρ`,
//! `∫ χ_run |x - y|^{-n-1-α} dt = ρ^{-n-α} [G(τ_b) - G(τ_a)]` with
//! `τ = (t - z)/ρ`. The transverse directions use the same symmetric lattice
//! as the graph operator, with `x` snapped to a column center and to the
//! nearest occupancy transition in its column.

use crate::error::{Error, Result};
use crate::far::FarRule;
use crate::field::{Aabb, GraphField, QuadratureSpec};
use crate::kernel::Kernel;
use crate::quad::{tree_sum, Estimate};
use crate::voxel::{subgraph_of, SetExterior, VoxelSet};

/// Samples per generic line search before bisection.
const LINE_SAMPLES: usize = 64;
const BISECTIONS: usize = 48;

/// Precomputed state for curvature of one voxel set.
pub struct SetOperator<'a> {
    e: &'a VoxelSet,
    kernel: Kernel,
    far: FarRule,
}

/// A line `{ base + t e_axis }` through the set.
struct Line {
    base: [f64; 3],
    axis: usize,
}

impl<'a> SetOperator<'a> {
    pub fn new(e: &'a VoxelSet, q: &QuadratureSpec) -> Result<Self> {
        let params = e.params();
        q.validate(e.bbox().diameter())?;
        let kernel = Kernel::new(params)?;
        let far = FarRule::new(params, q, 2.0 * kernel.lambda())?;
        Ok(Self { e, kernel, far })
    }

    /// Occupancy-difference estimate of the outward-to-inward normal at voxel `k`.
    fn normal_estimate(&self, k: usize) -> [f64; 3] {
        let e = self.e;
        let d = e.dim();
        let idx = e.unravel(k);
        let mut nu = [0.0; 3];
        let neighbors = 3usize.pow(d as u32);
        for m in 0..neighbors {
            let mut off = [0isize; 3];
            let mut r = m;
            for o in off.iter_mut().take(d) {
                *o = (r % 3) as isize - 1;
                r /= 3;
            }
            let mut nb = [0usize; 3];
            let mut ok = true;
            for a in 0..d {
                let v = idx[a] as isize + off[a];
                if v < 0 || v >= e.resolution()[a] as isize {
                    ok = false;
                }
                nb[a] = v.max(0) as usize;
            }
            if !ok {
                continue;
            }
            if e.occupied_raw(e.ravel(&nb[..d])) {
                for a in 0..d {
                    nu[a] += off[a] as f64;
                }
            }
        }
        nu
    }

    /// Occupancy transition along `axis` in the column of voxel index `idx`
    /// nearest to coordinate `t`.
    fn nearest_face(&self, idx: &[usize; 3], axis: usize, t: f64) -> Option<f64> {
        let e = self.e;
        let d = e.dim();
        let mut cur = *idx;
        let size = e.voxel_size(axis);
        let lo = e.bbox().lo[axis];
        let mut best: Option<f64> = None;
        cur[axis] = 0;
        let mut prev = e.occupied_raw(e.ravel(&cur[..d]));
        for m in 1..e.resolution()[axis] {
            cur[axis] = m;
            let now = e.occupied_raw(e.ravel(&cur[..d]));
            if now != prev {
                let face = lo + m as f64 * size;
                if best.is_none_or(|b| (face - t).abs() < (b - t).abs()) {
                    best = Some(face);
                }
            }
            prev = now;
        }
        best
    }

    /// `H_α[E](x)` with its error bound. `x` must lie within one voxel of an
    /// occupancy transition.
    pub fn at(&self, x: &[f64]) -> Result<Estimate> {
        let e = self.e;
        let d = e.dim();
        let n = d - 1;
        if x.len() != d || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("point must be finite with {d} coordinates")));
        }
        let k0 = e
            .voxel_of(x)
            .ok_or_else(|| Error::Domain(format!("point {x:?} lies outside the voxel box")))?;
        let idx = e.unravel(k0);
        let nu = self.normal_estimate(k0);
        let mut axes: Vec<usize> = (0..d).filter(|&a| nu[a] != 0.0).collect();
        axes.sort_by(|&a, &b| nu[b].abs().total_cmp(&nu[a].abs()).then(a.cmp(&b)));
        let mut chosen = None;
        for a in axes {
            if let Some(face) = self.nearest_face(&idx, a, x[a]) {
                if (face - x[a]).abs() <= e.voxel_size(a) * (1.0 + 1e-9) {
                    chosen = Some((a, face));
                    break;
                }
            }
        }
        let (axis, _) = chosen.ok_or_else(|| {
            Error::Domain(format!("point {x:?} is not within a voxel of the set boundary"))
        })?;
        let transverse: Vec<usize> = (0..d).filter(|&b| b != axis).collect();
        let ds = e.voxel_size(transverse[0]);
        if transverse.iter().any(|&b| (e.voxel_size(b) - ds).abs() > 1e-9 * ds) {
            return Err(Error::Resolution(
                "voxels must be square in the directions transverse to the boundary".into(),
            ));
        }
        let (idx, z) = self.snap(x, &idx, axis, &transverse);
        let mut center = [0.0; 3];
        for a in 0..d {
            center[a] = e.bbox().lo[a] + (idx[a] as f64 + 0.5) * e.voxel_size(a);
        }
        center[axis] = z;
        let m = transverse
            .iter()
            .map(|&b| idx[b].max(e.resolution()[b] - 1 - idx[b]))
            .max()
            .unwrap_or(0);
        let sign = if e.is_complemented() { -1.0 } else { 1.0 };
        let lattice = self.lattice(&center, &idx, axis, &transverse, ds, m);
        let half = (m as f64 + 0.5) * ds;
        let far = self.far.integrate(n, half, |dir, r| {
            let mut base = center;
            for (j, &b) in transverse.iter().enumerate() {
                base[b] += r * dir[j];
            }
            let line = Line { base, axis };
            self.column_value(&line, None, z, r)
        });
        let err = lattice.1 + far.err + self.far.tail();
        Ok(Estimate::new(sign * (lattice.0 + far.value), err))
    }

    /// Chooses the evaluation point among staircase points within three
    /// columns of `x`: the one whose neighboring transition heights are most
    /// nearly symmetric, then the nearest.
    fn snap(&self, x: &[f64], idx: &[usize; 3], axis: usize, tr: &[usize]) -> ([usize; 3], f64) {
        let e = self.e;
        let size = e.voxel_size(axis);
        let reach = 3isize;
        let span = if tr.len() == 1 { 0..=0 } else { -reach..=reach };
        let mut best: Option<(f64, f64, [usize; 3], f64)> = None;
        for a in -reach..=reach {
            for b in span.clone() {
                let o = [a, b];
                let mut col = *idx;
                let mut ok = true;
                for (j, &t) in tr.iter().enumerate() {
                    let c = idx[t] as isize + o[j];
                    if c < 0 || c >= e.resolution()[t] as isize {
                        ok = false;
                    } else {
                        col[t] = c as usize;
                    }
                }
                if !ok {
                    continue;
                }
                let Some(face) = self.nearest_face(&col, axis, x[axis]) else { continue };
                if (face - x[axis]).abs() > 1.5 * size {
                    continue;
                }
                let score = self.asymmetry(&col, axis, tr, face);
                let mut dist = (face - x[axis]).powi(2);
                for &t in tr {
                    let c = e.bbox().lo[t] + (col[t] as f64 + 0.5) * e.voxel_size(t);
                    dist += (c - x[t]).powi(2);
                }
                let better = match &best {
                    None => true,
                    Some((s0, d0, _, _)) => score < *s0 || (score == *s0 && dist < *d0),
                };
                if better {
                    best = Some((score, dist, col, face));
                }
            }
        }
        match best {
            Some((_, _, col, face)) => (col, face),
            None => (*idx, self.nearest_face(idx, axis, x[axis]).unwrap_or(x[axis])),
        }
    }

    /// `Σ_s |t(+s) + t(-s) - 2z| s^{-2-α}` over the first four neighbor rings,
    /// roughly the size of the near-field error each asymmetry causes.
    /// Missing transitions count as infinite.
    fn asymmetry(&self, col: &[usize; 3], axis: usize, tr: &[usize], z: f64) -> f64 {
        let e = self.e;
        let dirs: &[[isize; 2]] = if tr.len() == 1 { &[[1, 0]] } else { &[[1, 0], [0, 1], [1, 1], [1, -1]] };
        let mut total = 0.0;
        for dvec in dirs {
            for s in 1..=4isize {
                let mut pair = 0.0;
                for sign in [1isize, -1] {
                    let mut c = *col;
                    for (j, &t) in tr.iter().enumerate() {
                        let v = col[t] as isize + sign * s * dvec[j];
                        if v < 0 || v >= e.resolution()[t] as isize {
                            return f64::INFINITY;
                        }
                        c[t] = v as usize;
                    }
                    match self.nearest_face(&c, axis, z) {
                        Some(f) => pair += f - z,
                        None => return f64::INFINITY,
                    }
                }
                total += pair.abs() * (s as f64).powf(-2.0 - self.kernel.alpha());
            }
        }
        total
    }

    /// Transverse lattice sum; returns `(value, err)`.
    fn lattice(&self, center: &[f64; 3], idx: &[usize; 3], axis: usize, tr: &[usize], ds: f64, m: usize) -> (f64, f64) {
        let e = self.e;
        let n = tr.len();
        let alpha = self.kernel.alpha();
        let mi = m as isize;
        let j = ((m.max(1) - 1) / 3) as isize;
        let reach = 3 * j + 1;
        let cell = ds.powi(n as i32);
        let power = -(n as f64) - alpha;
        let inner = if n == 1 { 0..=0 } else { -mi..=mi };
        let mut rows = Vec::new();
        let mut fine_inner = Vec::new();
        let mut coarse = Vec::new();
        let mut abs_sum = 0.0;
        let mut count = 0usize;
        for a in -mi..=mi {
            let (mut row, mut row_inner, mut row_coarse) = (0.0, 0.0, 0.0);
            for b in inner.clone() {
                if a == 0 && b == 0 {
                    continue;
                }
                let o = [a, b];
                let mut base = *center;
                let mut col = *idx;
                let mut in_box = true;
                for (jj, &t) in tr.iter().enumerate() {
                    base[t] += o[jj] as f64 * ds;
                    let c = idx[t] as isize + o[jj];
                    if c < 0 || c >= e.resolution()[t] as isize {
                        in_box = false;
                    } else {
                        col[t] = c as usize;
                    }
                }
                let rho = ds * ((a * a + b * b) as f64).sqrt();
                let line = Line { base, axis };
                let v = self.column_value(&line, in_box.then_some(&col), center[axis], rho);
                let term = cell * rho.powf(power) * v;
                row += term;
                abs_sum += term.abs();
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
        let richardson = if j > 0 { (fine - coarse).abs() / (3f64.powf(1.0 - alpha) - 1.0) } else { 0.0 };
        let singular = self.singular_bound(center, idx, axis, tr, ds);
        let roundoff = 4.0 * f64::EPSILON * ((count as f64).log2() + 4.0) * abs_sum;
        (value, richardson + singular + roundoff)
    }

    /// Bound on the excluded column from second differences of the
    /// transition heights in neighboring columns.
    fn singular_bound(&self, center: &[f64; 3], idx: &[usize; 3], axis: usize, tr: &[usize], ds: f64) -> f64 {
        let e = self.e;
        let n = tr.len();
        let z = center[axis];
        let dirs: &[[isize; 2]] = if n == 1 { &[[1, 0]] } else { &[[1, 0], [0, 1], [1, 1], [1, -1]] };
        let mut m2: f64 = 0.0;
        for dvec in dirs {
            let mut heights = [0.0; 2];
            let mut found = true;
            for (s, sign) in [1isize, -1].iter().enumerate() {
                let mut col = *idx;
                for (jj, &t) in tr.iter().enumerate() {
                    let c = idx[t] as isize + sign * dvec[jj];
                    if c < 0 || c >= e.resolution()[t] as isize {
                        found = false;
                    } else {
                        col[t] = c as usize;
                    }
                }
                if !found {
                    break;
                }
                match self.nearest_face(&col, axis, z) {
                    Some(f) if (f - z).abs() <= 3.0 * e.voxel_size(axis) => heights[s] = f,
                    _ => found = false,
                }
            }
            let len2 = (dvec[0] * dvec[0] + dvec[1] * dvec[1]) as f64 * ds * ds;
            let second = if found { (heights[0] + heights[1] - 2.0 * z).abs() / len2 } else { 1.0 / ds };
            m2 = m2.max(second);
        }
        let alpha = self.kernel.alpha();
        let omega = self.e.params().sphere_measure();
        let rho = 0.5 * ds * (n as f64).sqrt();
        m2 * omega * rho.powf(1.0 - alpha) / (1.0 - alpha)
    }

    /// `ρ^{n+α} ∫ (χ_{E^c} - χ_E)|x - y|^{-n-1-α} dt` along the line, for the
    /// raw (uncomplemented) set. `column` is the voxel index of an in-box line.
    fn column_value(&self, line: &Line, column: Option<&[usize; 3]>, z: f64, rho: f64) -> f64 {
        let mut runs = Vec::new();
        match column {
            Some(col) => {
                let e = self.e;
                let d = e.dim();
                let a = line.axis;
                let lo = e.bbox().lo[a];
                let hi = e.bbox().hi[a];
                let size = e.voxel_size(a);
                self.exterior_runs(line, f64::NEG_INFINITY, lo, z, rho, &mut runs);
                let mut cur = *col;
                let mut start: Option<f64> = None;
                let res = e.resolution()[a];
                for m in 0..res {
                    cur[a] = m;
                    let inside = e.occupied_raw(e.ravel(&cur[..d]));
                    let face = lo + m as f64 * size;
                    match (inside, start) {
                        (true, None) => start = Some(face),
                        (false, Some(s)) => {
                            runs.push((s, face));
                            start = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = start {
                    runs.push((s, hi));
                }
                self.exterior_runs(line, hi, f64::INFINITY, z, rho, &mut runs);
            }
            None => self.exterior_runs(line, f64::NEG_INFINITY, f64::INFINITY, z, rho, &mut runs),
        }
        let g = &self.kernel;
        let mut inside = 0.0;
        for (ta, tb) in runs {
            inside += g.g((tb - z) / rho) - g.g((ta - z) / rho);
        }
        2.0 * g.lambda() - 2.0 * inside
    }

    /// Runs of the raw exterior model on the line for `t ∈ (t0, t1)`.
    fn exterior_runs(&self, line: &Line, t0: f64, t1: f64, z: f64, rho: f64, out: &mut Vec<(f64, f64)>) {
        let e = self.e;
        let d = e.dim();
        let a = line.axis;
        let push_below = |thr: f64, out: &mut Vec<(f64, f64)>| {
            if thr > t0 {
                out.push((t0, thr.min(t1)));
            }
        };
        match e.exterior() {
            SetExterior::Empty => {}
            SetExterior::Full => out.push((t0, t1)),
            SetExterior::HalfSpace { normal, offset } => {
                let s = offset - (0..d).filter(|&b| b != a).map(|b| normal[b] * line.base[b]).sum::<f64>();
                let na = normal[a];
                if na > 0.0 {
                    push_below(s / na, out);
                } else if na < 0.0 {
                    let thr = s / na;
                    if thr < t1 {
                        out.push((thr.max(t0), t1));
                    }
                } else if s > 0.0 {
                    out.push((t0, t1));
                }
            }
            SetExterior::SubgraphOf { graph } if a == d - 1 => {
                push_below(graph.sample(&line.base[..d - 1]), out);
            }
            _ => self.generic_runs(line, t0, t1, z, rho, out),
        }
    }

    /// Sampling in `θ = atan((t - z)/ρ)` with bisection at sign changes.
    fn generic_runs(&self, line: &Line, t0: f64, t1: f64, z: f64, rho: f64, out: &mut Vec<(f64, f64)>) {
        let d = self.e.dim();
        let th0 = ((t0 - z) / rho).atan();
        let th1 = ((t1 - z) / rho).atan();
        let at = |th: f64| -> bool {
            let mut p = line.base;
            p[line.axis] = z + rho * th.tan();
            self.e.member_raw(&p[..d])
        };
        let to_t = |th: f64| z + rho * th.tan();
        let step = (th1 - th0) / LINE_SAMPLES as f64;
        let mut prev_th = th0 + 0.5 * step;
        let mut prev = at(prev_th);
        let mut start = if prev { Some(t0) } else { None };
        for k in 1..LINE_SAMPLES {
            let th = th0 + (k as f64 + 0.5) * step;
            let now = at(th);
            if now != prev {
                let (mut lo, mut hi) = (prev_th, th);
                for _ in 0..BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) == prev {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let cut = to_t(0.5 * (lo + hi));
                if now {
                    start = Some(cut);
                } else if let Some(s) = start.take() {
                    out.push((s, cut));
                }
            }
            prev = now;
            prev_th = th;
        }
        if let Some(s) = start {
            out.push((s, t1));
        }
    }
}

/// `H_α[E](x)` with its error bound.
pub fn set_curvature_at(e: &VoxelSet, x: &[f64], q: &QuadratureSpec) -> Result<Estimate> {
    SetOperator::new(e, q)?.at(x)
}

/// Graph and set curvature at the same graph point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Consistency {
    pub defect: f64,
    pub graph: Estimate,
    pub set: Estimate,
}

/// Compares `𝒰_α u(x')` with `H_α` of the voxelized subgraph at `(x', u(x'))`.
///
/// Voxels are cubes of side `h` with column centers on the graph nodes and
/// horizontal faces aligned with `u(x')`.
pub fn graph_set_consistency(u: &GraphField, x: &[f64], q: &QuadratureSpec) -> Result<Consistency> {
    let graph = super::curvature_at(u, x, q)?;
    let e = consistency_subgraph(u, x)?;
    let z0 = u.sample(x);
    let mut p = x.to_vec();
    p.push(z0);
    let set = set_curvature_at(&e, &p, q)?;
    Ok(Consistency { defect: (set.value - graph.value).abs(), graph, set })
}

/// The voxelization used by [`graph_set_consistency`].
pub fn consistency_subgraph(u: &GraphField, x: &[f64]) -> Result<VoxelSet> {
    let n = u.n();
    let h = u.spacing();
    let z0 = u.sample(x);
    let (lo_v, hi_v) = u.values().iter().fold((z0, z0), |(a, b), v| (a.min(*v), b.max(*v)));
    let below = ((z0 - lo_v) / h).ceil() + 4.0;
    let above = ((hi_v - z0) / h).ceil() + 4.0;
    let mut lo: Vec<f64> = u.window().lo.iter().map(|v| v - 0.5 * h).collect();
    let mut hi: Vec<f64> = u.window().hi.iter().map(|v| v + 0.5 * h).collect();
    lo.push(z0 - below * h);
    hi.push(z0 + above * h);
    let mut res: Vec<usize> = u.shape().to_vec();
    res.push((below + above) as usize);
    debug_assert_eq!(res.len(), n + 1);
    subgraph_of(u, Aabb::new(lo, hi)?, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::FracParams;
    use crate::field::ExteriorModel;

    fn p1() -> FracParams {
        FracParams::new(1, 0.5).unwrap()
    }

    /// Slope-one half-space whose boundary avoids voxel centers, so the
    /// staircase is centered on the plane.
    fn tilted_half_space(res: usize) -> VoxelSet {
        let d = 2.0 / res as f64;
        let c = 0.5 * d;
        let ext = SetExterior::HalfSpace { normal: vec![-1.0, 1.0], offset: c };
        VoxelSet::from_fn(p1(), Aabb::cube(2, 1.0).unwrap(), vec![res, res], ext, |x| x[1] - x[0] < c).unwrap()
    }

    #[test]
    fn tilted_half_space_is_null() {
        let e = tilted_half_space(64);
        let q = QuadratureSpec::default();
        let d = 2.0 / 64.0;
        for k in [-20, -7, 0, 3, 19] {
            let s = k as f64 * d;
            let x = [s, s + 0.5 * d];
            let v = set_curvature_at(&e, &x, &q).unwrap();
            assert!(v.value.abs() <= v.err, "{x:?}: {v:?}");
        }
    }

    #[test]
    fn complement_negates_exactly() {
        let e = tilted_half_space(32);
        let q = QuadratureSpec::default();
        let ball = VoxelSet::from_fn(p1(), Aabb::cube(2, 1.5).unwrap(), vec![48, 48], SetExterior::Empty, |x| {
            x[0] * x[0] + x[1] * x[1] < 1.0
        })
        .unwrap();
        for (set, x) in [(&e, [0.0, 1.0 / 32.0]), (&ball, [0.6, 0.8])] {
            let a = set_curvature_at(set, &x, &q).unwrap();
            let b = set_curvature_at(&set.complement(), &x, &q).unwrap();
            assert_eq!(a.value, -b.value);
            assert_eq!(a.err, b.err);
        }
    }

    #[test]
    fn far_points_are_rejected() {
        let e = tilted_half_space(32);
        let q = QuadratureSpec::default();
        assert!(matches!(set_curvature_at(&e, &[0.0, 0.7], &q), Err(Error::Domain(_))));
        assert!(matches!(set_curvature_at(&e, &[0.0, 5.0], &q), Err(Error::Domain(_))));
    }

    #[test]
    fn affine_graph_and_subgraph_agree() {
        let ext = ExteriorModel::Affine { gradient: vec![1.0], offset: 0.0 };
        let u = GraphField::from_fn(p1(), Aabb::cube(1, 1.0).unwrap(), 1.0 / 16.0, ext, |x| x[0]).unwrap();
        let c = graph_set_consistency(&u, &[0.25], &QuadratureSpec::default()).unwrap();
        assert!(c.defect <= c.graph.err + c.set.err, "{c:?}");
    }

    #[test]
    fn cone_exterior_lines_are_found() {
        // |x| cone graph as a voxel set with a cone exterior; far lines cross the
        // boundary at t = |y'|.
        let ext = SetExterior::ConeFrom { apex: vec![0.0, 0.0] };
        let e = VoxelSet::from_fn(p1(), Aabb::cube(2, 1.0).unwrap(), vec![32, 32], ext, |x| x[1] < x[0].abs()).unwrap();
        let op = SetOperator::new(&e, &QuadratureSpec::default()).unwrap();
        let line = Line { base: [5.0, 0.0, 0.0], axis: 1 };
        let mut runs = Vec::new();
        op.exterior_runs(&line, f64::NEG_INFINITY, f64::INFINITY, 0.0, 5.0, &mut runs);
        assert_eq!(runs.len(), 1);
        assert!(runs[0].0 == f64::NEG_INFINITY && (runs[0].1 - 5.0).abs() < 0.4, "{runs:?}");
    }

    #[test]
    fn unit_disk_approaches_polar_value() {
        // Circle of radius 1: H = (2^{1-α}/α) B(1/2, (1-α)/2), from
        // ∫_{E^c} - ∫_E of |x - y|^{-2-α} in polar form about the boundary point.
        let alpha: f64 = 0.5;
        let want = 2f64.powf(1.0 - alpha) / alpha * statrs::function::beta::beta(0.5, (1.0 - alpha) / 2.0);
        let p = FracParams::new(1, alpha).unwrap();
        let q = QuadratureSpec::default();
        let mut gaps = Vec::new();
        for res in [96usize, 192] {
            let disk = VoxelSet::from_fn(p, Aabb::cube(2, 1.5).unwrap(), vec![res, res], SetExterior::Empty, |x| {
                x[0] * x[0] + x[1] * x[1] < 1.0
            })
            .unwrap();
            let vals: Vec<f64> = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
                .iter()
                .map(|x| set_curvature_at(&disk, x, &q).unwrap().value)
                .collect();
            for v in &vals[1..] {
                assert!((v - vals[0]).abs() < 1e-9 * want, "{vals:?}");
            }
            gaps.push((vals[0] - want).abs());
        }
        assert!(gaps[1] < gaps[0] && gaps[1] < 0.12 * want, "{gaps:?} vs {want}");
    }
}
