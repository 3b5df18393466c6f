//! Fractional perimeter `Per_α(E, Ω)` of voxel sets.
//!
//! With `K(z) = |z|^{-n-1-α}`,
//!
//! ```text
//! Per_α(E, Ω) = ∬_{(E∩Ω) × E^c} K + ∬_{(E∖Ω) × (Ω∖E)} K.
//! ```
//!
//! A pair `x ∈ E, y ∉ E` is counted with weight `χ_Ω(x) + χ_Ω(y) - χ_Ω(x)χ_Ω(y)`;
//! with per-voxel Ω-fractions `f` this becomes `f_x + f_y - f_x f_y`, which
//! is symmetric in `x, y`, so `E` and `E^c` sum the same terms. Voxel-pair
//! weights `W(o) = ∫_{cell}∫_{cell + o} K` are integrated accurately near the
//! diagonal and by a corrected midpoint rule further out. Pairs with one
//! point outside the voxel box use the exterior model along rays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Aabb, QuadratureSpec};
use crate::quad::{adaptive, gauss_legendre, gk15_rule, tree_sum};
use crate::voxel::{SetExterior, VoxelSet};

/// Offsets with `|o|∞` at most this use tensor Gauss–Legendre (polar
/// quadrature when the cells touch).
const NEAR_RANGE: usize = 6;

/// The localizing window Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { bounds: Aabb },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn ball(dim: usize, radius: f64) -> Self {
        Region::Ball { center: vec![0.0; dim], radius }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { bounds } => bounds.contains(x),
            Region::Ball { center, radius } => {
                center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum::<f64>() < radius * radius
            }
        }
    }

    fn bounding(&self) -> Result<Aabb> {
        match self {
            Region::Box { bounds } => Ok(bounds.clone()),
            Region::Ball { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
                }
                Aabb::new(center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }

    /// Fraction of the voxel `[lo, lo + size]` inside the region.
    fn fraction(&self, lo: &[f64], size: &[f64]) -> f64 {
        let d = lo.len();
        match self {
            Region::Box { bounds } => (0..d)
                .map(|i| {
                    let a = lo[i].max(bounds.lo[i]);
                    let b = (lo[i] + size[i]).min(bounds.hi[i]);
                    ((b - a) / size[i]).max(0.0)
                })
                .product(),
            Region::Ball { center, radius } => {
                let mut near = 0.0;
                let mut far = 0.0;
                for i in 0..d {
                    let c = center[i];
                    let a = lo[i] - c;
                    let b = lo[i] + size[i] - c;
                    let closest = if a > 0.0 { a } else if b < 0.0 { b } else { 0.0 };
                    near += closest * closest;
                    far += a.abs().max(b.abs()).powi(2);
                }
                let r2 = radius * radius;
                if near >= r2 {
                    return 0.0;
                }
                if far <= r2 {
                    return 1.0;
                }
                let m: usize = if d == 2 { 32 } else { 12 };
                let total = m.pow(d as u32);
                let mut hits = 0usize;
                let mut p = [0.0; 3];
                for k in 0..total {
                    let mut r = k;
                    for i in 0..d {
                        p[i] = lo[i] + ((r % m) as f64 + 0.5) / m as f64 * size[i];
                        r /= m;
                    }
                    if self.contains(&p[..d]) {
                        hits += 1;
                    }
                }
                hits as f64 / total as f64
            }
        }
    }
}

/// Perimeter value with its two defining terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerimeterResult {
    pub value: f64,
    pub err: f64,
    /// `[∬_{(E∩Ω)×E^c} K, ∬_{(E∖Ω)×(Ω∖E)} K]`.
    pub split: [f64; 2],
}

/// `∫_{cell}∫_{cell + o∘size} |x - y|^{-s}`, with an error estimate.
struct PairWeights {
    dim: usize,
    extent: [usize; 3],
    table: Vec<f64>,
    err: Vec<f64>,
}

impl PairWeights {
    fn new(size: &[f64], extent: [usize; 3], s: f64) -> Self {
        let dim = size.len();
        let len: usize = (0..dim).map(|i| extent[i] + 1).product();
        let mut table = vec![0.0; len];
        let mut err = vec![0.0; len];
        let gl = gauss_legendre(8);
        let vol: f64 = size.iter().product();
        for k in 1..len {
            let mut o = [0usize; 3];
            let mut r = k;
            for i in (0..dim).rev() {
                o[i] = r % (extent[i] + 1);
                r /= extent[i] + 1;
            }
            let c: Vec<f64> = (0..dim).map(|i| o[i] as f64 * size[i]).collect();
            let inf = (0..dim).map(|i| o[i]).max().unwrap_or(0);
            let (w, e) = if inf <= 1 {
                touching_weight(size, &c, s)
            } else if inf <= NEAR_RANGE {
                (tent_gl(size, &c, s, &gl), 0.0)
            } else {
                let r2: f64 = c.iter().map(|v| v * v).sum();
                let f = r2.powf(-0.5 * s);
                let mut corr = 0.0;
                for i in 0..dim {
                    let d2f = s * r2.powf(-0.5 * s - 1.0) * ((s + 2.0) * c[i] * c[i] / r2 - 1.0);
                    corr += size[i] * size[i] / 12.0 * d2f;
                }
                let mid = vol * vol * f;
                let cor = vol * vol * corr;
                (mid + cor, cor * cor / mid.abs().max(f64::MIN_POSITIVE))
            };
            table[k] = w;
            err[k] = e;
        }
        Self { dim, extent, table, err }
    }

    #[inline]
    fn index(&self, o: &[isize]) -> usize {
        let mut k = 0;
        for i in 0..self.dim {
            k = k * (self.extent[i] + 1) + o[i].unsigned_abs();
        }
        k
    }
}

/// Tent weight `Π (size_i - |z_i - c_i|)_+` of the difference of two uniform points.
fn tent(size: &[f64], c: &[f64], z: &[f64]) -> f64 {
    (0..size.len()).map(|i| (size[i] - (z[i] - c[i]).abs()).max(0.0)).product()
}

/// Tensor Gauss–Legendre over the tent support, split at the kinks.
fn tent_gl(size: &[f64], c: &[f64], s: f64, gl: &[(f64, f64)]) -> f64 {
    let dim = size.len();
    let pieces = 1usize << dim;
    let m = gl.len();
    let mut parts = Vec::with_capacity(pieces);
    for piece in 0..pieces {
        let mut lo = [0.0; 3];
        for i in 0..dim {
            lo[i] = if piece >> i & 1 == 1 { c[i] } else { c[i] - size[i] };
        }
        let mut acc = 0.0;
        let mut z = [0.0; 3];
        for k in 0..m.pow(dim as u32) {
            let mut r = k;
            let mut w = 1.0;
            for i in 0..dim {
                let (x, wi) = gl[r % m];
                r /= m;
                z[i] = lo[i] + 0.5 * size[i] * (x + 1.0);
                w *= 0.5 * size[i] * wi;
            }
            let r2: f64 = z[..dim].iter().map(|v| v * v).sum();
            acc += w * tent(size, c, &z[..dim]) * r2.powf(-0.5 * s);
        }
        parts.push(acc);
    }
    tree_sum(&parts)
}

/// Weight for cells that share a face, edge or corner. Sub-boxes with the
/// origin at a corner are integrated in polar form around it: along a ray the
/// tent is a polynomial in `r`, so the radial integral is closed-form.
fn touching_weight(size: &[f64], c: &[f64], s: f64) -> (f64, f64) {
    let dim = size.len();
    let gl = gauss_legendre(12);
    let pieces = 1usize << dim;
    let mut total = 0.0;
    let mut err = 0.0;
    for piece in 0..pieces {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..dim {
            if piece >> i & 1 == 1 {
                lo[i] = c[i];
                hi[i] = c[i] + size[i];
            } else {
                lo[i] = c[i] - size[i];
                hi[i] = c[i];
            }
        }
        let at_corner = (0..dim).all(|i| lo[i] == 0.0 || hi[i] == 0.0);
        if at_corner {
            let est = corner_polar(size, c, s, &lo[..dim], &hi[..dim]);
            total += est.value;
            err += est.err;
        } else {
            // away from the origin by at least one cell: split into 4^d sub-boxes
            let parts = 4usize;
            let mut acc = Vec::new();
            for k in 0..parts.pow(dim as u32) {
                let mut r = k;
                let mut sl = [0.0; 3];
                let mut ss = [0.0; 3];
                for i in 0..dim {
                    ss[i] = (hi[i] - lo[i]) / parts as f64;
                    sl[i] = lo[i] + (r % parts) as f64 * ss[i];
                    r /= parts;
                }
                acc.push(box_gl(&sl[..dim], &ss[..dim], &gl, |z| {
                    let r2: f64 = z.iter().map(|v| v * v).sum();
                    tent(size, c, z) * r2.powf(-0.5 * s)
                }));
            }
            total += tree_sum(&acc);
        }
    }
    (total, err + 1e-12 * total)
}

/// Tensor Gauss–Legendre over the box `[lo, lo + span]`.
fn box_gl<F: Fn(&[f64]) -> f64>(lo: &[f64], span: &[f64], gl: &[(f64, f64)], f: F) -> f64 {
    let dim = lo.len();
    let m = gl.len();
    let mut acc = 0.0;
    let mut z = [0.0; 3];
    for k in 0..m.pow(dim as u32) {
        let mut r = k;
        let mut w = 1.0;
        for i in 0..dim {
            let (x, wi) = gl[r % m];
            r /= m;
            z[i] = lo[i] + 0.5 * span[i] * (x + 1.0);
            w *= 0.5 * span[i] * wi;
        }
        acc += w * f(&z[..dim]);
    }
    acc
}

/// `∫_{[lo, hi]} tent(z) |z|^{-s} dz` for a box with the origin at a corner.
fn corner_polar(size: &[f64], c: &[f64], s: f64, lo: &[f64], hi: &[f64]) -> crate::quad::Estimate {
    let dim = size.len();
    // Reflect to w ∈ [0, L]; z_i = sign_i w_i.
    let mut sign = [1.0; 3];
    let mut len = [0.0; 3];
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    for i in 0..dim {
        sign[i] = if lo[i] == 0.0 { 1.0 } else { -1.0 };
        len[i] = hi[i] - lo[i];
        let mid = 0.5 * (lo[i] + hi[i]);
        // tent factor size - |z - c| is linear on the box
        a[i] = size[i] - c[i].abs();
        b[i] = -sign[i] * (mid - c[i]).signum();
    }
    let radial = |dir: &[f64]| -> f64 {
        let mut rho = f64::INFINITY;
        for i in 0..dim {
            if dir[i] > 0.0 {
                rho = rho.min(len[i] / dir[i]);
            }
        }
        // Π (a_i + b_i dir_i r) as a polynomial in r
        let mut poly = [0.0; 4];
        poly[0] = 1.0;
        for i in 0..dim {
            let (p, q) = (a[i], b[i] * dir[i]);
            for k in (0..=dim).rev() {
                poly[k] = poly[k] * p + if k > 0 { poly[k - 1] * q } else { 0.0 };
            }
        }
        let mut v = 0.0;
        for (k, coef) in poly.iter().enumerate().take(dim + 1).skip(1) {
            let e = k as f64 + dim as f64 - s;
            v += coef * rho.powf(e) / e;
        }
        v
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    if dim == 2 {
        let kink = (len[1] / len[0]).atan();
        let f = |t: f64| radial(&[t.cos(), t.sin()]);
        adaptive(f, 0.0, kink, 1e-14, 1e-12) + adaptive(f, kink, half_pi, 1e-14, 1e-12)
    } else {
        adaptive(
            |th: f64| {
                let (st, ct) = th.sin_cos();
                st * adaptive(|ph: f64| radial(&[st * ph.cos(), st * ph.sin(), ct]), 0.0, half_pi, 1e-14, 1e-11).value
            },
            0.0,
            half_pi,
            1e-14,
            1e-10,
        )
    }
}

/// Ray directions on the unit circle or sphere with Kronrod and Gauss weights.
fn ray_directions(dim: usize) -> Vec<([f64; 3], f64, f64)> {
    let two_pi = 2.0 * std::f64::consts::PI;
    if dim == 2 {
        let panels = 16;
        (0..panels)
            .flat_map(|k| gk15_rule(two_pi * k as f64 / panels as f64, two_pi * (k + 1) as f64 / panels as f64))
            .map(|(t, wk, wg)| ([t.cos(), t.sin(), 0.0], wk, wg))
            .collect()
    } else {
        let phis = 48;
        let mut out = Vec::new();
        for k in 0..4 {
            let a = -1.0 + 0.5 * k as f64;
            for (ct, wk, wg) in gk15_rule(a, a + 0.5) {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for j in 0..phis {
                    let ph = two_pi * (j as f64 + 0.5) / phis as f64;
                    let wp = two_pi / phis as f64;
                    out.push(([st * ph.cos(), st * ph.sin(), ct], wk * wp, wg * wp));
                }
            }
        }
        out
    }
}

/// `∫_{y ∉ box, χ_E(y) ≠ inside} |c - y|^{-d-α} dy` along rays, raw membership.
fn exterior_interaction(e: &VoxelSet, c: &[f64], inside: bool, dirs: &[([f64; 3], f64, f64)]) -> (f64, f64) {
    let d = e.dim();
    let alpha = e.params().alpha;
    let bbox = e.bbox();
    let mut kron = Vec::with_capacity(dirs.len());
    let mut gauss = Vec::with_capacity(dirs.len());
    for (dir, wk, wg) in dirs {
        let mut exit = f64::INFINITY;
        for i in 0..d {
            if dir[i] > 0.0 {
                exit = exit.min((bbox.hi[i] - c[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                exit = exit.min((bbox.lo[i] - c[i]) / dir[i]);
            }
        }
        let sigma_exit = exit.powf(-alpha);
        // measure in σ of the part of (0, σ_exit) where membership != inside
        let opposite = ray_measure(e, c, &dir[..d], exit, sigma_exit, alpha, inside);
        let v = opposite / alpha;
        kron.push(wk * v);
        gauss.push(wg * v);
    }
    let value = tree_sum(&kron);
    (value, (value - tree_sum(&gauss)).abs())
}

/// σ-measure of `{σ ∈ (0, σ_exit) : χ_E(c + σ^{-1/α} dir) ≠ inside}`.
fn ray_measure(e: &VoxelSet, c: &[f64], dir: &[f64], exit: f64, sigma_exit: f64, alpha: f64, inside: bool) -> f64 {
    let d = e.dim();
    match e.exterior() {
        SetExterior::Empty => {
            if inside {
                sigma_exit
            } else {
                0.0
            }
        }
        SetExterior::Full => {
            if inside {
                0.0
            } else {
                sigma_exit
            }
        }
        SetExterior::HalfSpace { normal, offset } => {
            // member iff r (ν·dir) < offset - ν·c
            let slope: f64 = (0..d).map(|i| normal[i] * dir[i]).sum();
            let gap = offset - (0..d).map(|i| normal[i] * c[i]).sum::<f64>();
            // σ-measure of r ∈ (exit, ∞) where member, member set is r < gap/slope or r > gap/slope
            let member_measure = if slope > 0.0 {
                let thr = gap / slope;
                if thr > exit {
                    sigma_exit - thr.powf(-alpha)
                } else {
                    0.0
                }
            } else if slope < 0.0 {
                let thr = gap / slope;
                if thr > exit {
                    thr.powf(-alpha)
                } else {
                    sigma_exit
                }
            } else if gap > 0.0 {
                sigma_exit
            } else {
                0.0
            };
            if inside {
                sigma_exit - member_measure
            } else {
                member_measure
            }
        }
        _ => {
            let samples = 48;
            let mut total = 0.0;
            let at = |sigma: f64| -> bool {
                let r = sigma.powf(-1.0 / alpha).max(exit * (1.0 + 1e-12));
                let p: Vec<f64> = (0..d).map(|i| c[i] + r * dir[i]).collect();
                e.member_raw(&p) != inside
            };
            let step = sigma_exit / samples as f64;
            let mut prev = at(0.5 * step);
            let mut seg_start = 0.0;
            for k in 1..samples {
                let s = (k as f64 + 0.5) * step;
                let now = at(s);
                if now != prev {
                    let (mut lo, mut hi) = (s - step, s);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if at(mid) == prev {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let cut = 0.5 * (lo + hi);
                    if prev {
                        total += cut - seg_start;
                    }
                    seg_start = cut;
                    prev = now;
                }
            }
            if prev {
                total += sigma_exit - seg_start;
            }
            total
        }
    }
}

/// `Per_α(E, Ω)` with the two defining terms reported separately.
pub fn frac_perimeter(e: &VoxelSet, omega: &Region, q: &QuadratureSpec) -> Result<PerimeterResult> {
    q.validate(e.bbox().diameter())?;
    let d = e.dim();
    let outer = omega.bounding()?;
    if outer.dim() != d || !e.bbox().strictly_contains(&outer) {
        return Err(Error::Domain("Ω must lie strictly inside the voxel box".into()));
    }
    let size: Vec<f64> = (0..d).map(|i| e.voxel_size(i)).collect();
    let min_extent = (0..d).map(|i| (outer.hi[i] - outer.lo[i]) / size[i]).fold(f64::INFINITY, f64::min);
    if min_extent < 2.0 {
        return Err(Error::Resolution(format!(
            "Ω spans only {min_extent:.2} voxels; at least 2 per axis are needed"
        )));
    }
    let res = e.resolution().to_vec();
    let mut extent = [0usize; 3];
    for i in 0..d {
        extent[i] = res[i] - 1;
    }
    let s = d as f64 + e.params().alpha;
    let weights = PairWeights::new(&size, extent, s);

    // Ω-fractions of the voxels that meet Ω.
    let mut frac = vec![0.0; e.len()];
    let mut active = Vec::new();
    for k in 0..e.len() {
        let c = e.voxel_center(k);
        let lo: Vec<f64> = (0..d).map(|i| c[i] - 0.5 * size[i]).collect();
        let f = omega.fraction(&lo, &size);
        if f > 0.0 {
            frac[k] = f;
            active.push(k);
        }
    }
    let raw: Vec<bool> = (0..e.len()).map(|k| e.occupied_raw(k)).collect();
    let flip = e.is_complemented();

    // Per active voxel: [term 1, term 2, symmetric total, error].
    let mut o = [0isize; 3];
    let mut rows = Vec::with_capacity(active.len());
    for &a in &active {
        let ia = e.unravel(a);
        let fa = frac[a];
        let a_in = raw[a] != flip;
        let (mut t1, mut t2, mut tot, mut er) = (0.0, 0.0, 0.0, 0.0);
        for b in 0..e.len() {
            if raw[b] == raw[a] || (frac[b] > 0.0 && b < a) {
                continue;
            }
            let ib = e.unravel(b);
            for i in 0..d {
                o[i] = ib[i] as isize - ia[i] as isize;
            }
            let t = weights.index(&o[..d]);
            let w = weights.table[t];
            let fb = frac[b];
            let (fx, fy) = if a_in { (fa, fb) } else { (fb, fa) };
            t1 += w * fx;
            t2 += w * (1.0 - fx) * fy;
            tot += w * (fa + fb - fa * fb);
            er += weights.err[t] * (fa + fb);
            if fa < 1.0 && fb > 0.0 && fb < 1.0 {
                let (lo, hi) = (fa.min(fb), fa.max(fb));
                let joint = if fa + fb <= 1.0 { fa * fb } else { (1.0 - fa) * (1.0 - fb) };
                er += w * (lo * (1.0 - hi)).max(joint);
            }
        }
        rows.push([t1, t2, tot, er]);
    }

    // Pairs reaching outside the box: only the Ω-side voxel carries weight.
    let dirs = ray_directions(d);
    let vol: f64 = size.iter().product();
    let h2: f64 = size.iter().map(|v| v * v).sum();
    for (row, &a) in rows.iter_mut().zip(&active) {
        let c = e.voxel_center(a);
        let (v, ang_err) = exterior_interaction(e, &c, raw[a], &dirs);
        let dist = (0..d)
            .map(|i| (c[i] - e.bbox().lo[i]).min(e.bbox().hi[i] - c[i]))
            .fold(f64::INFINITY, f64::min);
        let centering = v * s * (s + 2.0) * h2 / (24.0 * dist * dist);
        let contrib = vol * frac[a] * v;
        if raw[a] != flip {
            row[0] += contrib;
        } else {
            row[1] += contrib;
        }
        row[2] += contrib;
        row[3] += vol * frac[a] * (ang_err + centering.abs());
    }

    let column = |j: usize| tree_sum(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    Ok(PerimeterResult { value: column(2), err: column(3), split: [column(0), column(1)] })
}

/// `Per_α(E, B_R)` for balls centered at the origin.
pub fn perimeter_growth(e: &VoxelSet, radii: &[f64], q: &QuadratureSpec) -> Result<Vec<(f64, PerimeterResult)>> {
    radii
        .iter()
        .map(|&r| frac_perimeter(e, &Region::ball(e.dim(), r), q).map(|p| (r, p)))
        .collect()
}
