//! Finite stand-ins for an entire function `u: ℝⁿ → ℝ`: node values on a
//! uniform grid over a window, and an exterior model for everything outside.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FracParams;

/// Axis-aligned box, serialized as `[[lo, hi], ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Field("box bounds must have equal, nonzero length".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Field(format!("empty or non-finite box axis [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// True when `other` lies in the interior of `self`.
    pub fn strictly_contains(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|i| other.lo[i] > self.lo[i] && other.hi[i] < self.hi[i])
    }
}

impl Serialize for Aabb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let axes: Vec<[f64; 2]> = self.lo.iter().zip(&self.hi).map(|(a, b)| [*a, *b]).collect();
        axes.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Aabb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let axes = Vec::<[f64; 2]>::deserialize(d)?;
        Aabb::new(axes.iter().map(|a| a[0]).collect(), axes.iter().map(|a| a[1]).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// How `u` continues outside the sampled window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExteriorModel {
    /// `u(x) = gradient · x + offset`.
    Affine { gradient: Vec<f64>, offset: f64 },
    /// `u(x) = u(nearest window point)`.
    ConstantBeyond,
    /// Degree-one extension along rays from `apex`:
    /// `u(x) = u(c) + t (u(b) - u(c))` with `b = c + (x - c)/t` on the window boundary.
    Homogeneous1 { apex: Vec<f64> },
}

/// Quadrature controls shared by curvature, pairing and energy evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Minimum far radius; `None` lets the tail budget decide.
    #[serde(default)]
    pub far_radius: Option<f64>,
    /// Absolute error allowed for the truncated tail beyond the far radius.
    pub tail_budget: f64,
    /// Target relative accuracy for inner quadratures.
    pub inner_tolerance: f64,
    /// Hard cap on the far radius; exceeding it is a budget error.
    #[serde(default = "default_max_far")]
    pub max_far_radius: f64,
}

fn default_max_far() -> f64 {
    1e300
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { far_radius: None, tail_budget: 1e-6, inner_tolerance: 1e-10, max_far_radius: 1e300 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self, window_diameter: f64) -> Result<()> {
        if !(self.tail_budget > 0.0) {
            return Err(Error::Domain(format!("tail_budget must be > 0, got {}", self.tail_budget)));
        }
        if let Some(r) = self.far_radius {
            if !(r > window_diameter) {
                return Err(Error::Domain(format!(
                    "far_radius {r} must exceed the window diameter {window_diameter}"
                )));
            }
        }
        Ok(())
    }

    /// Far radius meeting `tail_coeff * R^{-α} <= tail_budget`, and the tail bound at it.
    pub fn resolve_far_radius(&self, tail_coeff: f64, alpha: f64) -> Result<(f64, f64)> {
        let needed = (tail_coeff / self.tail_budget).powf(1.0 / alpha);
        let r = self.far_radius.map_or(needed, |r| r.max(needed));
        if !r.is_finite() || r > self.max_far_radius {
            return Err(Error::Budget { budget: self.tail_budget, required_far_radius: needed });
        }
        Ok((r, tail_coeff * r.powf(-alpha)))
    }
}

/// Grid-sampled graph function with an exterior model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFieldFile", into = "GraphFieldFile")]
pub struct GraphField {
    params: FracParams,
    window: Aabb,
    spacing: f64,
    shape: Vec<usize>,
    values: Vec<f64>,
    exterior: ExteriorModel,
}

fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() < 1e-9 {
        r
    } else {
        f
    }
}

impl GraphField {
    pub fn new(
        params: FracParams,
        window: Aabb,
        spacing: f64,
        values: Vec<f64>,
        exterior: ExteriorModel,
    ) -> Result<Self> {
        params.validate()?;
        if window.dim() != params.n {
            return Err(Error::Field(format!(
                "window has {} axes but n = {}",
                window.dim(),
                params.n
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Field(format!("spacing must be positive, got {spacing}")));
        }
        let mut shape = Vec::with_capacity(params.n);
        for i in 0..params.n {
            let cells = (window.hi[i] - window.lo[i]) / spacing;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-6 * rounded.max(1.0) || rounded < 1.0 {
                return Err(Error::Field(format!(
                    "window axis {i} length is not a positive multiple of spacing {spacing}"
                )));
            }
            shape.push(rounded as usize + 1);
        }
        let count: usize = shape.iter().product();
        if values.len() != count {
            return Err(Error::Field(format!(
                "values has {} entries, grid needs {count}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Field(format!("values[{i}] is not finite")));
        }
        match &exterior {
            ExteriorModel::Affine { gradient, offset } => {
                if gradient.len() != params.n || gradient.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Field("affine gradient must be finite with n entries".into()));
                }
                if !offset.is_finite() {
                    return Err(Error::Field("affine offset must be finite".into()));
                }
            }
            ExteriorModel::Homogeneous1 { apex } => {
                if apex.len() != params.n {
                    return Err(Error::Field("apex must have n coordinates".into()));
                }
                let inside = (0..params.n).all(|i| apex[i] > window.lo[i] && apex[i] < window.hi[i]);
                if !inside {
                    return Err(Error::Field("homogeneous extension needs the apex inside the window".into()));
                }
            }
            ExteriorModel::ConstantBeyond => {}
        }
        let field = Self { params, window, spacing, shape, values, exterior };
        field.check_seam()?;
        Ok(field)
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        params: FracParams,
        window: Aabb,
        spacing: f64,
        exterior: ExteriorModel,
        f: F,
    ) -> Result<Self> {
        let probe = Self {
            params,
            window: window.clone(),
            spacing,
            shape: vec![],
            values: vec![],
            exterior: exterior.clone(),
        };
        let mut shape = Vec::new();
        for i in 0..window.dim().min(2) {
            shape.push(((window.hi[i] - window.lo[i]) / spacing).round().max(0.0) as usize + 1);
        }
        let count: usize = shape.iter().product();
        let probe = Self { shape, ..probe };
        let values = (0..count).map(|k| f(&probe.node_position(k))).collect();
        Self::new(params, window, spacing, values, exterior)
    }

    /// Same geometry and exterior, new node values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.params, self.window.clone(), self.spacing, values, self.exterior.clone())
    }

    /// Same data under different fractional parameters.
    pub fn with_params(&self, params: FracParams) -> Result<Self> {
        Self::new(params, self.window.clone(), self.spacing, self.values.clone(), self.exterior.clone())
    }

    pub fn params(&self) -> FracParams {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn window(&self) -> &Aabb {
        &self.window
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exterior(&self) -> &ExteriorModel {
        &self.exterior
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Seam tolerance `1e-6 (1 + ‖values‖∞)`.
    pub fn seam_tolerance(&self) -> f64 {
        1e-6 * (1.0 + self.sup_norm())
    }

    /// Multi-index of flat node `k` (row-major, last axis fastest).
    pub fn unravel(&self, k: usize) -> [usize; 2] {
        if self.shape.len() == 1 {
            [k, 0]
        } else {
            [k / self.shape[1], k % self.shape[1]]
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        if self.shape.len() == 1 {
            idx[0]
        } else {
            idx[0] * self.shape[1] + idx[1]
        }
    }

    pub fn node_position(&self, k: usize) -> Vec<f64> {
        let idx = self.unravel(k);
        (0..self.shape.len()).map(|i| self.window.lo[i] + idx[i] as f64 * self.spacing).collect()
    }

    /// Distance from node `k` to the window edge, in nodes.
    pub fn node_margin(&self, k: usize) -> usize {
        let idx = self.unravel(k);
        (0..self.shape.len()).map(|i| idx[i].min(self.shape[i] - 1 - idx[i])).min().unwrap_or(0)
    }

    /// Nodes at least `margin` nodes from every window edge.
    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.node_margin(k) >= margin).collect()
    }

    fn inside_window(&self, x: &[f64]) -> bool {
        let eps = 1e-12 * self.spacing;
        (0..self.n()).all(|i| x[i] >= self.window.lo[i] - eps && x[i] <= self.window.hi[i] + eps)
    }

    /// Multilinear interpolation of node values; `x` is clamped to the window.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for i in 0..n {
            let xi = x[i].clamp(self.window.lo[i], self.window.hi[i]);
            let f = snap((xi - self.window.lo[i]) / self.spacing);
            let cells = self.shape[i] - 1;
            let mut b = f.floor() as usize;
            if b >= cells {
                b = cells - 1;
            }
            base[i] = b;
            frac[i] = (f - b as f64).clamp(0.0, 1.0);
        }
        if n == 1 {
            let v0 = self.values[base[0]];
            if frac[0] == 0.0 {
                return v0;
            }
            let v1 = self.values[base[0] + 1];
            if frac[0] == 1.0 {
                return v1;
            }
            (1.0 - frac[0]) * v0 + frac[0] * v1
        } else {
            let at = |a: usize, b: usize| self.values[self.ravel([base[0] + a, base[1] + b])];
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let wa = if a == 0 { 1.0 - frac[0] } else { frac[0] };
                    let wb = if b == 0 { 1.0 - frac[1] } else { frac[1] };
                    let w = wa * wb;
                    if w != 0.0 {
                        acc += w * at(a, b);
                    }
                }
            }
            acc
        }
    }

    /// Exterior model evaluated at any point (used outside the window).
    pub fn exterior_value(&self, x: &[f64]) -> f64 {
        match &self.exterior {
            ExteriorModel::Affine { gradient, offset } => {
                gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() + offset
            }
            ExteriorModel::ConstantBeyond => self.interpolate(x),
            ExteriorModel::Homogeneous1 { apex } => {
                let n = self.n();
                let mut t: f64 = 0.0;
                for i in 0..n {
                    let d = x[i] - apex[i];
                    let ti = if d > 0.0 {
                        d / (self.window.hi[i] - apex[i])
                    } else if d < 0.0 {
                        d / (self.window.lo[i] - apex[i])
                    } else {
                        0.0
                    };
                    t = t.max(ti);
                }
                let uc = self.interpolate(apex);
                if t <= 1.0 {
                    return self.interpolate(x);
                }
                let b: Vec<f64> = (0..n).map(|i| apex[i] + (x[i] - apex[i]) / t).collect();
                uc + t * (self.interpolate(&b) - uc)
            }
        }
    }

    /// `u(x)`: interpolation inside the window, exterior model outside.
    pub fn sample(&self, x: &[f64]) -> f64 {
        if self.inside_window(x) {
            self.interpolate(x)
        } else {
            self.exterior_value(x)
        }
    }

    /// Fixed reference value of the exterior at an interior point; it never
    /// depends on free (interior) node values.
    pub fn exterior_reference(&self, x: &[f64]) -> f64 {
        match &self.exterior {
            ExteriorModel::Affine { .. } => self.exterior_value(x),
            ExteriorModel::ConstantBeyond => {
                // nearest window face
                let n = self.n();
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for i in 0..n {
                    let dl = x[i] - self.window.lo[i];
                    let dh = self.window.hi[i] - x[i];
                    if dl < best.0 {
                        best = (dl, i, self.window.lo[i]);
                    }
                    if dh < best.0 {
                        best = (dh, i, self.window.hi[i]);
                    }
                }
                let mut p = x.to_vec();
                p[best.1] = best.2;
                self.interpolate(&p)
            }
            ExteriorModel::Homogeneous1 { .. } => 0.0,
        }
    }

    fn check_seam(&self) -> Result<()> {
        if let ExteriorModel::Affine { .. } = self.exterior {
            let tol = self.seam_tolerance();
            for k in 0..self.len() {
                if self.node_margin(k) == 0 {
                    let x = self.node_position(k);
                    let e = self.exterior_value(&x);
                    let gap = (e - self.values[k]).abs();
                    if gap > tol {
                        return Err(Error::Field(format!(
                            "seam mismatch {gap:e} > {tol:e} at boundary node {x:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `-u`, with the exterior negated consistently.
    pub fn negated(&self) -> Self {
        let exterior = match &self.exterior {
            ExteriorModel::Affine { gradient, offset } => ExteriorModel::Affine {
                gradient: gradient.iter().map(|g| -g).collect(),
                offset: -offset,
            },
            other => other.clone(),
        };
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            exterior,
            ..self.clone()
        }
    }

    /// `(u(c + s·y) - z)/s` on the grid `(window - c)/s`: the graph of the set
    /// `(E - (c, z))/s`.
    pub fn similarity(&self, center: &[f64], height: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {scale}")));
        }
        let n = self.n();
        let lo: Vec<f64> = (0..n).map(|i| (self.window.lo[i] - center[i]) / scale).collect();
        let hi: Vec<f64> = (0..n).map(|i| (self.window.hi[i] - center[i]) / scale).collect();
        let values = self.values.iter().map(|v| (v - height) / scale).collect();
        let exterior = match &self.exterior {
            ExteriorModel::Affine { gradient, offset } => {
                let at_center: f64 = gradient.iter().zip(center).map(|(g, c)| g * c).sum();
                ExteriorModel::Affine {
                    gradient: gradient.clone(),
                    offset: (at_center + offset - height) / scale,
                }
            }
            ExteriorModel::ConstantBeyond => ExteriorModel::ConstantBeyond,
            ExteriorModel::Homogeneous1 { apex } => ExteriorModel::Homogeneous1 {
                apex: (0..n).map(|i| (apex[i] - center[i]) / scale).collect(),
            },
        };
        let window = Aabb::new(lo, hi)?;
        let shape = self.shape.clone();
        let out = Self {
            params: self.params,
            window,
            spacing: self.spacing / scale,
            shape,
            values,
            exterior,
        };
        out.check_seam()?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuesEncoding {
    /// Little-endian `f64` bytes, base64 (standard alphabet).
    #[default]
    Base64F64le,
    /// Comma, whitespace or newline separated decimal text, row-major.
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ValuesPayload {
    Text(String),
    Array(Vec<f64>),
}

/// On-disk layout of a [`GraphField`].
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphFieldFile {
    n: usize,
    alpha: f64,
    window: Aabb,
    spacing: f64,
    exterior: ExteriorModel,
    #[serde(default)]
    values_encoding: ValuesEncoding,
    values: ValuesPayload,
}

impl From<GraphField> for GraphFieldFile {
    fn from(u: GraphField) -> Self {
        let bytes: Vec<u8> = u.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            n: u.params.n,
            alpha: u.params.alpha,
            window: u.window,
            spacing: u.spacing,
            exterior: u.exterior,
            values_encoding: ValuesEncoding::Base64F64le,
            values: ValuesPayload::Text(BASE64.encode(bytes)),
        }
    }
}

impl TryFrom<GraphFieldFile> for GraphField {
    type Error = Error;

    fn try_from(f: GraphFieldFile) -> Result<Self> {
        let params = FracParams::new(f.n, f.alpha)?;
        let values = match (f.values, f.values_encoding) {
            (ValuesPayload::Array(v), _) => v,
            (ValuesPayload::Text(t), ValuesEncoding::Base64F64le) => decode_f64s(&t)?,
            (ValuesPayload::Text(t), ValuesEncoding::Csv) => parse_csv(&t)?,
        };
        GraphField::new(params, f.window, f.spacing, values, f.exterior)
    }
}

fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text.trim())
        .map_err(|e| Error::Format(format!("values: bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("values: byte length is not a multiple of 8".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn parse_csv(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("values: {t:?}: {e}"))))
        .collect()
}

/// Parses JSON, naming the offending key on failure.
pub fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Format(format!("at `{path}`: {}", e.into_inner()))
    })
}

impl GraphField {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph field serializes")
    }

    /// Node values as CSV: one line per first-axis index.
    pub fn values_csv(&self) -> String {
        let row = if self.shape.len() == 1 { self.len() } else { self.shape[1] };
        let mut out = String::new();
        for chunk in self.values.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}
