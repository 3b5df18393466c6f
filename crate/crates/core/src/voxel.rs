//! Voxelized sets `E ⊆ ℝ^{n+1}`: occupancy on a box plus an exterior model.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Aabb, GraphField};
use crate::kernel::FracParams;

/// Membership outside the voxel box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetExterior {
    Empty,
    Full,
    /// `{ y : normal · y < offset }`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `{ y : y_{n+1} < u(y') }`.
    SubgraphOf { graph: Box<GraphField> },
    /// Rays from `apex` continue the occupancy found where they leave the box.
    ConeFrom { apex: Vec<f64> },
}

/// Occupancy grid over a box in ℝ^{n+1}. Row-major, last axis (vertical) fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VoxelSetFile", into = "VoxelSetFile")]
pub struct VoxelSet {
    params: FracParams,
    bbox: Aabb,
    resolution: Vec<usize>,
    occupancy: Vec<bool>,
    exterior: SetExterior,
    /// Every membership answer is flipped.
    complement: bool,
}

impl VoxelSet {
    pub fn new(
        params: FracParams,
        bbox: Aabb,
        resolution: Vec<usize>,
        occupancy: Vec<bool>,
        exterior: SetExterior,
    ) -> Result<Self> {
        Self::with_flag(params, bbox, resolution, occupancy, exterior, false)
    }

    fn with_flag(
        params: FracParams,
        bbox: Aabb,
        resolution: Vec<usize>,
        occupancy: Vec<bool>,
        exterior: SetExterior,
        complement: bool,
    ) -> Result<Self> {
        params.validate()?;
        let d = params.n + 1;
        if bbox.dim() != d || resolution.len() != d {
            return Err(Error::Field(format!("set box and resolution need {d} axes")));
        }
        if resolution.contains(&0) {
            return Err(Error::Resolution("voxel resolution must be positive on every axis".into()));
        }
        let count: usize = resolution.iter().product();
        if occupancy.len() != count {
            return Err(Error::Field(format!(
                "occupancy has {} voxels, resolution needs {count}",
                occupancy.len()
            )));
        }
        match &exterior {
            SetExterior::HalfSpace { normal, offset } => {
                let norm: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if normal.len() != d || !(norm > 0.0) || !norm.is_finite() || !offset.is_finite() {
                    return Err(Error::Field("half-space needs a finite nonzero normal in ℝ^{n+1}".into()));
                }
            }
            SetExterior::SubgraphOf { graph } => {
                if graph.n() != params.n {
                    return Err(Error::Field("subgraph exterior has the wrong dimension".into()));
                }
            }
            SetExterior::ConeFrom { apex } => {
                if apex.len() != d || !bbox.contains(apex) {
                    return Err(Error::Field("cone apex must lie in the box".into()));
                }
            }
            SetExterior::Empty | SetExterior::Full => {}
        }
        let set = Self { params, bbox, resolution, occupancy, exterior, complement };
        set.check_seam()?;
        Ok(set)
    }

    /// Occupancy from a membership predicate evaluated at voxel centers.
    pub fn from_fn<F: Fn(&[f64]) -> bool>(
        params: FracParams,
        bbox: Aabb,
        resolution: Vec<usize>,
        exterior: SetExterior,
        inside: F,
    ) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(Error::Resolution("voxel resolution must be positive on every axis".into()));
        }
        let count: usize = resolution.iter().product();
        let mut probe = Self {
            params,
            bbox,
            resolution,
            occupancy: vec![],
            exterior: SetExterior::Empty,
            complement: false,
        };
        probe.occupancy = (0..count).map(|k| inside(&probe.voxel_center(k))).collect();
        Self::new(params, probe.bbox, probe.resolution, probe.occupancy, exterior)
    }

    pub fn params(&self) -> FracParams {
        self.params
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.params.n + 1
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn exterior(&self) -> &SetExterior {
        &self.exterior
    }

    pub fn is_complemented(&self) -> bool {
        self.complement
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn voxel_size(&self, axis: usize) -> f64 {
        (self.bbox.hi[axis] - self.bbox.lo[axis]) / self.resolution[axis] as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.voxel_size(i)).product()
    }

    pub fn unravel(&self, mut k: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim()).rev() {
            idx[axis] = k % self.resolution[axis];
            k /= self.resolution[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for axis in 0..self.dim() {
            k = k * self.resolution[axis] + idx[axis];
        }
        k
    }

    pub fn voxel_center(&self, k: usize) -> Vec<f64> {
        let idx = self.unravel(k);
        (0..self.dim())
            .map(|i| self.bbox.lo[i] + (idx[i] as f64 + 0.5) * self.voxel_size(i))
            .collect()
    }

    /// Membership of voxel `k`.
    pub fn occupied(&self, k: usize) -> bool {
        self.occupancy[k] ^ self.complement
    }

    /// Voxel containing `x`, if `x` is in the box.
    pub fn voxel_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 3];
        for i in 0..self.dim() {
            if !(x[i] >= self.bbox.lo[i] && x[i] <= self.bbox.hi[i]) {
                return None;
            }
            let f = ((x[i] - self.bbox.lo[i]) / self.voxel_size(i)).floor() as usize;
            idx[i] = f.min(self.resolution[i] - 1);
        }
        Some(self.ravel(&idx[..self.dim()]))
    }

    pub fn member(&self, x: &[f64]) -> bool {
        match self.voxel_of(x) {
            Some(k) => self.occupied(k),
            None => self.exterior_member(x) ^ self.complement,
        }
    }

    /// Occupancy of voxel `k` ignoring the complement flag.
    pub(crate) fn occupied_raw(&self, k: usize) -> bool {
        self.occupancy[k]
    }

    /// Membership ignoring the complement flag.
    pub(crate) fn member_raw(&self, x: &[f64]) -> bool {
        match self.voxel_of(x) {
            Some(k) => self.occupancy[k],
            None => self.exterior_member(x),
        }
    }

    /// Exterior model at `x`, before any complement flag.
    pub(crate) fn exterior_member(&self, x: &[f64]) -> bool {
        match &self.exterior {
            SetExterior::Empty => false,
            SetExterior::Full => true,
            SetExterior::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() < *offset
            }
            SetExterior::SubgraphOf { graph } => {
                let d = self.dim();
                x[d - 1] < graph.sample(&x[..d - 1])
            }
            SetExterior::ConeFrom { apex } => {
                let d = self.dim();
                let mut t: f64 = 0.0;
                for i in 0..d {
                    let dx = x[i] - apex[i];
                    let ti = if dx > 0.0 {
                        dx / (self.bbox.hi[i] - apex[i])
                    } else if dx < 0.0 {
                        dx / (self.bbox.lo[i] - apex[i])
                    } else {
                        0.0
                    };
                    t = t.max(ti);
                }
                if t == 0.0 {
                    return false;
                }
                let s = (1.0 - 1e-12) / t.max(1.0);
                let p: Vec<f64> = (0..d).map(|i| apex[i] + (x[i] - apex[i]) * s).collect();
                self.voxel_of(&p).is_some_and(|k| self.occupancy[k])
            }
        }
    }

    /// Boundary voxels must agree with the exterior model unless the
    /// exterior's own boundary passes through the voxel.
    fn check_seam(&self) -> Result<()> {
        if matches!(self.exterior, SetExterior::ConeFrom { .. }) {
            return Ok(());
        }
        let d = self.dim();
        for k in 0..self.len() {
            let idx = self.unravel(k);
            if !(0..d).any(|i| idx[i] == 0 || idx[i] + 1 == self.resolution[i]) {
                continue;
            }
            let c = self.voxel_center(k);
            let e = self.exterior_member(&c);
            if e == self.occupancy[k] {
                continue;
            }
            let straddles = (0..1usize << d).any(|corner| {
                let p: Vec<f64> = (0..d)
                    .map(|i| {
                        let s = if corner >> i & 1 == 1 { 0.5 } else { -0.5 };
                        c[i] + s * self.voxel_size(i)
                    })
                    .collect();
                self.exterior_member(&p) != e
            });
            if !straddles {
                return Err(Error::Field(format!(
                    "occupancy disagrees with the exterior model at boundary voxel {c:?}"
                )));
            }
        }
        Ok(())
    }

    /// Same occupancy under different fractional parameters.
    pub fn with_params(&self, params: FracParams) -> Result<Self> {
        let exterior = match &self.exterior {
            SetExterior::SubgraphOf { graph } => SetExterior::SubgraphOf { graph: Box::new(graph.with_params(params)?) },
            other => other.clone(),
        };
        Self::with_flag(params, self.bbox.clone(), self.resolution.clone(), self.occupancy.clone(), exterior, self.complement)
    }

    /// `E^c`.
    pub fn complement(&self) -> Self {
        Self { complement: !self.complement, ..self.clone() }
    }

    /// `(E - x)/r`. The voxel grid maps onto itself, so occupancy is unchanged.
    pub fn similarity(&self, x: &[f64], r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {r}")));
        }
        let d = self.dim();
        let bbox = Aabb::new(
            (0..d).map(|i| (self.bbox.lo[i] - x[i]) / r).collect(),
            (0..d).map(|i| (self.bbox.hi[i] - x[i]) / r).collect(),
        )?;
        let exterior = match &self.exterior {
            SetExterior::Empty => SetExterior::Empty,
            SetExterior::Full => SetExterior::Full,
            SetExterior::HalfSpace { normal, offset } => {
                let at_x: f64 = normal.iter().zip(x).map(|(a, b)| a * b).sum();
                SetExterior::HalfSpace { normal: normal.clone(), offset: (offset - at_x) / r }
            }
            SetExterior::SubgraphOf { graph } => SetExterior::SubgraphOf {
                graph: Box::new(graph.similarity(&x[..d - 1], x[d - 1], r)?),
            },
            SetExterior::ConeFrom { apex } => SetExterior::ConeFrom {
                apex: (0..d).map(|i| (apex[i] - x[i]) / r).collect(),
            },
        };
        Ok(Self { bbox, exterior, ..self.clone() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("voxel set serializes")
    }
}

/// `{ (x', t) : t < u(x') }` voxelized on `bbox`.
pub fn subgraph_of(u: &GraphField, bbox: Aabb, resolution: Vec<usize>) -> Result<VoxelSet> {
    let params = u.params();
    let d = params.n + 1;
    if resolution.len() != d || bbox.dim() != d {
        return Err(Error::Field(format!("subgraph box and resolution need {d} axes")));
    }
    if resolution.contains(&0) {
        return Err(Error::Resolution("voxel resolution must be positive on every axis".into()));
    }
    let vertical = resolution[d - 1];
    let columns: usize = resolution[..d - 1].iter().product();
    let dz = (bbox.hi[d - 1] - bbox.lo[d - 1]) / vertical as f64;
    let mut occupancy = Vec::with_capacity(columns * vertical);
    for col in 0..columns {
        let mut xp = Vec::with_capacity(d - 1);
        let mut rest = col;
        let mut idx = vec![0usize; d - 1];
        for axis in (0..d - 1).rev() {
            idx[axis] = rest % resolution[axis];
            rest /= resolution[axis];
        }
        for axis in 0..d - 1 {
            let h = (bbox.hi[axis] - bbox.lo[axis]) / resolution[axis] as f64;
            xp.push(bbox.lo[axis] + (idx[axis] as f64 + 0.5) * h);
        }
        let height = u.sample(&xp);
        for j in 0..vertical {
            let z = bbox.lo[d - 1] + (j as f64 + 0.5) * dz;
            occupancy.push(z < height);
        }
    }
    VoxelSet::new(params, bbox, resolution, occupancy, SetExterior::SubgraphOf { graph: Box::new(u.clone()) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct VoxelSetFile {
    n: usize,
    alpha: f64,
    #[serde(rename = "box")]
    bbox: Aabb,
    resolution: Vec<usize>,
    /// Bit-packed, least significant bit first, base64.
    occupancy: String,
    exterior: SetExterior,
    #[serde(default)]
    complement: bool,
}

impl From<VoxelSet> for VoxelSetFile {
    fn from(e: VoxelSet) -> Self {
        let mut bytes = vec![0u8; e.occupancy.len().div_ceil(8)];
        for (k, &b) in e.occupancy.iter().enumerate() {
            if b {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        Self {
            n: e.params.n,
            alpha: e.params.alpha,
            bbox: e.bbox,
            resolution: e.resolution,
            occupancy: BASE64.encode(bytes),
            exterior: e.exterior,
            complement: e.complement,
        }
    }
}

impl TryFrom<VoxelSetFile> for VoxelSet {
    type Error = Error;

    fn try_from(f: VoxelSetFile) -> Result<Self> {
        let params = FracParams::new(f.n, f.alpha)?;
        let bytes = BASE64
            .decode(f.occupancy.trim())
            .map_err(|e| Error::Format(format!("occupancy: bad base64: {e}")))?;
        let count: usize = f.resolution.iter().product();
        if bytes.len() != count.div_ceil(8) {
            return Err(Error::Format(format!(
                "occupancy: {} bytes for {count} voxels",
                bytes.len()
            )));
        }
        let occupancy = (0..count).map(|k| bytes[k / 8] >> (k % 8) & 1 == 1).collect();
        VoxelSet::with_flag(params, f.bbox, f.resolution, occupancy, f.exterior, f.complement)
    }
}
