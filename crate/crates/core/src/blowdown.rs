//! Rescalings `E_{x,r} = (E - x)/r`, cone and cylinder defects, center gaps,
//! and the blow-down verdict for graphs.
//!
//! Defects are voxel-measured on a ball `B_R`: sample points are voxel
//! centers of the set's own grid, so translated and dilated membership
//! queries stay consistent with the column heights of a voxelized subgraph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Aabb, GraphField};
use crate::voxel::{subgraph_of, VoxelSet};

/// `u(r·x)/r` on the grid `window/r`.
pub fn rescale_graph(u: &GraphField, r: f64) -> Result<GraphField> {
    u.similarity(&vec![0.0; u.n()], 0.0, r)
}

/// `(E - x)/r`.
pub fn rescale_set(e: &VoxelSet, x: &[f64], r: f64) -> Result<VoxelSet> {
    if x.len() != e.dim() {
        return Err(Error::Domain(format!("point needs {} coordinates", e.dim())));
    }
    e.similarity(x, r)
}

/// Volume of the unit ball in `dim` dimensions.
fn unit_ball(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("dimension {dim}"),
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

/// Voxel centers of `e` inside `B_R(0)`; `B_R` must lie in the box.
fn centers_in_ball(e: &VoxelSet, radius: f64) -> Result<Vec<Vec<f64>>> {
    check_radius(radius)?;
    let d = e.dim();
    let ball = Aabb::cube(d, radius)?;
    if !(0..d).all(|i| e.bbox().lo[i] <= ball.lo[i] && ball.hi[i] <= e.bbox().hi[i]) {
        return Err(Error::Domain(format!("B_{radius} is not inside the voxel box")));
    }
    Ok((0..e.len())
        .map(|k| e.voxel_center(k))
        .filter(|c| c.iter().map(|v| v * v).sum::<f64>() < radius * radius)
        .collect())
}

/// `|(E_{x,r} Δ E_{y,r}) ∩ B_R|`, measured on the rescaled voxel grid.
pub fn center_gap(e: &VoxelSet, x: &[f64], y: &[f64], r: f64, radius: f64) -> Result<f64> {
    check_radius(radius)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {r}")));
    }
    let d = e.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::Domain(format!("centers need {d} coordinates")));
    }
    let bbox = e.bbox();
    for c in [x, y] {
        if !(0..d).all(|i| bbox.lo[i] <= c[i] - r * radius && c[i] + r * radius <= bbox.hi[i]) {
            return Err(Error::Domain(format!("x + r·B_R leaves the voxel box for center {c:?}")));
        }
    }
    // z such that x + r z runs over voxel centers
    let vol: f64 = (0..d).map(|i| e.voxel_size(i) / r).product();
    let mut count = 0usize;
    let mut p = vec![0.0; d];
    for k in 0..e.len() {
        let c = e.voxel_center(k);
        let z2: f64 = (0..d).map(|i| ((c[i] - x[i]) / r).powi(2)).sum();
        if z2 >= radius * radius {
            continue;
        }
        for i in 0..d {
            p[i] = c[i] - x[i] + y[i];
        }
        if e.member(&c) != e.member(&p) {
            count += 1;
        }
    }
    Ok(count as f64 * vol)
}

/// `|(E Δ E/2) ∩ B_R| / |B_R|`; zero when occupancy is dilation invariant between `R/2` and `R`.
pub fn cone_defect(e: &VoxelSet, radius: f64) -> Result<f64> {
    let pts = centers_in_ball(e, radius)?;
    let mut q = vec![0.0; e.dim()];
    let mut count = 0usize;
    for z in &pts {
        for (qi, zi) in q.iter_mut().zip(z) {
            *qi = 2.0 * zi;
        }
        if e.member(z) != e.member(&q) {
            count += 1;
        }
    }
    Ok(count as f64 * e.voxel_volume() / (unit_ball(e.dim()) * radius.powi(e.dim() as i32)))
}

fn shifted_defect(e: &VoxelSet, v: &[f64], radius: f64, one_sided: bool) -> Result<f64> {
    let d = e.dim();
    if v.len() != d {
        return Err(Error::Domain(format!("direction needs {d} components")));
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("direction must be a unit vector, |v| = {norm}")));
    }
    let pts = centers_in_ball(e, radius)?;
    let mut q = vec![0.0; d];
    let mut count = 0usize;
    for z in &pts {
        for i in 0..d {
            q[i] = z[i] - v[i];
        }
        let in_shift = e.member(&q);
        let in_e = e.member(z);
        let hit = if one_sided { in_shift && !in_e } else { in_shift != in_e };
        if hit {
            count += 1;
        }
    }
    Ok(count as f64 * e.voxel_volume() / (unit_ball(d) * radius.powi(d as i32)))
}

/// `|((E + v) Δ E) ∩ B_R| / |B_R|`.
pub fn cylinder_defect(e: &VoxelSet, v: &[f64], radius: f64) -> Result<f64> {
    shifted_defect(e, v, radius, false)
}

/// `|((E + v) ∖ E) ∩ B_R| / |B_R|`: zero when `E + v ⊆ E` on the ball.
pub fn inclusion_defect(e: &VoxelSet, v: &[f64], radius: f64) -> Result<f64> {
    shifted_defect(e, v, radius, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "directions", rename_all = "snake_case")]
pub enum Verdict {
    HalfSpace,
    CylinderSplit(Vec<Vec<f64>>),
    ConeDetected,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowdownReport {
    pub scales: Vec<f64>,
    pub cone_defects: Vec<f64>,
    /// Keyed by the direction written as a JSON array.
    pub cylinder_defects: BTreeMap<String, Vec<f64>>,
    pub center_gaps: Vec<f64>,
    /// Distance from the best-fitting half-space.
    pub halfspace_defects: Vec<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowdownOptions {
    /// Radius of the measuring ball after rescaling.
    #[serde(rename = "R", default = "default_radius")]
    pub radius: f64,
    /// Horizontal voxels per axis, the vertical axis gets one more; defaults to 96 for curves and 64 for surfaces.
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Horizontal offset of the second center for the center gaps.
    #[serde(default)]
    pub gap_offset: Option<Vec<f64>>,
}

fn default_radius() -> f64 {
    1.0
}

impl Default for BlowdownOptions {
    fn default() -> Self {
        Self { radius: 1.0, resolution: None, gap_offset: None }
    }
}

/// Column heights of `u` at the voxel columns of `e` within `B'_R`, fit by least squares.
fn fitted_halfspace_defect(u: &GraphField, e: &VoxelSet, radius: f64) -> Result<f64> {
    let d = e.dim();
    let n = d - 1;
    let pts = centers_in_ball(e, radius)?;
    // normal equations for ℓ(x') = a·x' + b over the horizontal disk
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let step: Vec<f64> = (0..n).map(|i| e.voxel_size(i)).collect();
    let counts: Vec<usize> = (0..n).map(|i| e.resolution()[i]).collect();
    let columns: usize = counts.iter().product();
    for col in 0..columns {
        let mut rest = col;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = e.bbox().lo[i] + ((rest % counts[i]) as f64 + 0.5) * step[i];
            rest /= counts[i];
        }
        if x.iter().map(|v| v * v).sum::<f64>() < radius * radius {
            let mut basis = x.clone();
            basis.push(1.0);
            rows.push((basis, u.sample(&x)));
        }
    }
    let m = n + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (basis, y) in &rows {
        for i in 0..m {
            for j in 0..m {
                a[i][j] += basis[i] * basis[j];
            }
            a[i][m] += basis[i] * y;
        }
    }
    let coef = solve_small(a).ok_or_else(|| Error::Resolution("too few voxel columns for a half-space fit".into()))?;
    let mut count = 0usize;
    for z in &pts {
        let plane: f64 = (0..n).map(|i| coef[i] * z[i]).sum::<f64>() + coef[n];
        if e.member(z) != (z[n] < plane) {
            count += 1;
        }
    }
    Ok(count as f64 * e.voxel_volume() / (unit_ball(d) * radius.powi(d as i32)))
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_small(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            for k in c..=m {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][m] - s) / a[r][r];
    }
    Some(x)
}

/// Small now and not growing over the last three scales.
fn tends_to_zero(trace: &[f64], tol: f64) -> bool {
    let k = trace.len();
    k >= 3 && trace[k - 1] < tol && trace[k - 3..].windows(2).all(|w| w[1] <= w[0])
}

/// Blow-down analysis of the subgraph of `u` over increasing scales.
pub fn blowdown_analyze(
    u: &GraphField,
    scales: &[f64],
    directions: &[Vec<f64>],
    opts: &BlowdownOptions,
) -> Result<BlowdownReport> {
    if scales.len() < 3 {
        return Err(Error::Parameter(format!("need at least 3 scales, got {}", scales.len())));
    }
    if scales.windows(2).any(|w| !(w[1] > w[0])) || !(scales[0] > 0.0) {
        return Err(Error::Parameter("scales must be positive and increasing".into()));
    }
    check_radius(opts.radius)?;
    let n = u.n();
    let d = n + 1;
    let res = opts.resolution.unwrap_or(if n == 1 { 96 } else { 64 });
    let half = 1.25 * opts.radius;
    let bbox = Aabb::cube(d, half)?;
    // One extra vertical voxel keeps voxel centers off the faces t = ±x of
    // slope-one cones, where membership would be decided by rounding.
    let mut shape = vec![res; d];
    shape[n] = res + 1;
    let offset = opts.gap_offset.clone().unwrap_or_else(|| {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        e1
    });
    if offset.len() != n {
        return Err(Error::Parameter(format!("gap offset needs {n} components")));
    }
    let origin = vec![0.0; n];
    let (h0, h1) = (u.sample(&origin), u.sample(&offset));

    let mut report = BlowdownReport {
        scales: scales.to_vec(),
        cone_defects: Vec::new(),
        cylinder_defects: directions.iter().map(|v| (direction_key(v), Vec::new())).collect(),
        center_gaps: Vec::new(),
        halfspace_defects: Vec::new(),
        tolerance: 0.0,
        verdict: Verdict::Inconclusive,
    };
    for &r in scales {
        let ur = rescale_graph(u, r)?;
        let e = subgraph_of(&ur, bbox.clone(), shape.clone())?;
        report.cone_defects.push(cone_defect(&e, opts.radius)?);
        for v in directions {
            let value = cylinder_defect(&e, v, opts.radius)?;
            report.cylinder_defects.get_mut(&direction_key(v)).expect("key inserted").push(value);
        }
        report.halfspace_defects.push(fitted_halfspace_defect(&ur, &e, opts.radius)?);
        // E_{x,r} and E_{y,r} for x = (0, u(0)), y = (offset, u(offset)) on one grid
        let ex = subgraph_of(&u.similarity(&origin, h0, r)?, bbox.clone(), shape.clone())?;
        let ey = subgraph_of(&u.similarity(&offset, h1, r)?, bbox.clone(), shape.clone())?;
        let pts = centers_in_ball(&ex, opts.radius)?;
        let diff = pts.iter().filter(|z| ex.member(z) != ey.member(z)).count();
        report.center_gaps.push(diff as f64 * ex.voxel_volume());
    }
    // three voxel layers across the horizontal cross-section, relative to |B_R|
    let dz = 2.0 * half / shape[n] as f64;
    let layer = dz * unit_ball(n) * opts.radius.powi(n as i32);
    let tol = 3.0 * layer / (unit_ball(d) * opts.radius.powi(d as i32));
    report.tolerance = tol;
    let split: Vec<Vec<f64>> = directions
        .iter()
        .filter(|v| tends_to_zero(&report.cylinder_defects[&direction_key(v)], tol))
        .cloned()
        .collect();
    report.verdict = if tends_to_zero(&report.halfspace_defects, tol) {
        Verdict::HalfSpace
    } else if !split.is_empty() {
        Verdict::CylinderSplit(split)
    } else if tends_to_zero(&report.cone_defects, tol) {
        Verdict::ConeDetected
    } else {
        Verdict::Inconclusive
    };
    Ok(report)
}

fn direction_key(v: &[f64]) -> String {
    serde_json::to_string(v).expect("direction serializes")
}
