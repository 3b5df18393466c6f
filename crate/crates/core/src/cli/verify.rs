//! Suites that run each module end to end and compare measured values with bounds.

use std::time::{Duration, Instant};

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blowdown::{blowdown_analyze, center_gap, BlowdownOptions, Verdict};
use crate::curvature::set::{graph_set_consistency, set_curvature_at};
use crate::curvature::{curvature_at, curvature_field};
use crate::dynamics::{cmc_exponent_audit, slope, solve, SolveOptions};
use crate::error::Result;
use crate::field::{Aabb, ExteriorModel, GraphField, QuadratureSpec};
use crate::kernel::{FracParams, Kernel};
use crate::perimeter::perimeter_growth;
use crate::voxel::{SetExterior, VoxelSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Suite {
    Kernel,
    #[value(alias = "affine-nullity")]
    Affine,
    #[value(alias = "scaling-law")]
    Scaling,
    #[value(alias = "halfspace-nullity")]
    Halfspace,
    Consistency,
    #[value(alias = "perimeter-growth")]
    Perimeter,
    #[value(alias = "cmc-audit")]
    Cmc,
    #[value(alias = "solver-flatness")]
    Solver,
    #[value(alias = "blowdown-rigidity")]
    Blowdown,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Kernel,
        Suite::Affine,
        Suite::Scaling,
        Suite::Halfspace,
        Suite::Consistency,
        Suite::Perimeter,
        Suite::Cmc,
        Suite::Solver,
        Suite::Blowdown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernel => "kernel",
            Suite::Affine => "affine",
            Suite::Scaling => "scaling",
            Suite::Halfspace => "halfspace",
            Suite::Consistency => "consistency",
            Suite::Perimeter => "perimeter",
            Suite::Cmc => "cmc",
            Suite::Solver => "solver",
            Suite::Blowdown => "blowdown",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Case {
    pub name: String,
    pub status: Status,
    /// Non-finite values serialize as `null` and fail.
    pub measured: f64,
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Case {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        let status = if measured <= bound { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, measured, bound, detail: None }
    }

    fn failed(name: impl Into<String>, bound: f64, why: String) -> Self {
        Self { name: name.into(), status: Status::Fail, measured: f64::INFINITY, bound, detail: Some(why) }
    }

    fn from_result(name: impl Into<String>, bound: f64, r: Result<f64>) -> Self {
        match r {
            Ok(m) => Self::new(name, m, bound),
            Err(e) => Self::failed(name, bound, e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySuiteResult {
    pub suite: &'static str,
    pub cases: Vec<Case>,
    /// Reported on stderr only, so the JSON stays reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl VerifySuiteResult {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.status == Status::Pass)
    }
}

/// Runs `suites` in order. Each suite draws from its own stream of `seed`.
pub fn verify_suites(seed: u64, suites: &[Suite]) -> Vec<VerifySuiteResult> {
    suites
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let start = Instant::now();
            let cases = match s {
                Suite::Kernel => kernel(&mut rng),
                Suite::Affine => affine(&mut rng),
                Suite::Scaling => scaling(&mut rng),
                Suite::Halfspace => halfspace(&mut rng),
                Suite::Consistency => consistency(),
                Suite::Perimeter => perimeter(),
                Suite::Cmc => cmc(),
                Suite::Solver => solver(&mut rng),
                Suite::Blowdown => blowdown(),
            };
            VerifySuiteResult { suite: s.name(), cases, wall_time: start.elapsed() }
        })
        .collect()
}

const ALPHAS: [f64; 3] = [0.3, 0.5, 0.7];

fn params(n: usize, alpha: f64) -> FracParams {
    FracParams::new(n, alpha).expect("suite parameters are valid")
}

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - x * x).powi(3)
    } else {
        0.0
    }
}

/// `slope·x + bump(x)` on `[-half, half]` with `nodes` nodes and the matching affine exterior.
fn bumped(alpha: f64, half: f64, nodes: usize, slope: f64) -> Result<GraphField> {
    let ext = ExteriorModel::Affine { gradient: vec![slope], offset: 0.0 };
    let h = 2.0 * half / (nodes - 1) as f64;
    GraphField::from_fn(params(1, alpha), Aabb::cube(1, half)?, h, ext, |x| slope * x[0] + bump(x[0]))
}

fn kernel(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    for n in [1usize, 2] {
        for alpha in ALPHAS {
            let p = params(n, alpha);
            let oracle = 0.5 * statrs::function::beta::beta(0.5, 0.5 * (n as f64 + alpha));
            let name = format!("lambda n={n} alpha={alpha}");
            let r = Kernel::new(p).map(|k| ((k.lambda() - oracle) / oracle).abs());
            cases.push(Case::from_result(name, 1e-10, r));
        }
    }
    let k = Kernel::new(params(1, 0.5)).expect("valid kernel");
    let mut ts: Vec<f64> = (0..1000).map(|_| rng.gen_range(-50.0..50.0)).collect();
    ts.sort_by(f64::total_cmp);
    let odd = ts.iter().fold(0.0f64, |m, &t| m.max((k.g(t) + k.g(-t)).abs()));
    let mono = ts.windows(2).fold(f64::NEG_INFINITY, |m, w| m.max(k.g(w[0]) - k.g(w[1])));
    let bounded = ts.iter().fold(f64::NEG_INFINITY, |m, &t| m.max(k.g(t).abs() - k.lambda()));
    cases.push(Case::new("G odd on 1000 samples", odd, 1e-15));
    cases.push(Case::new("G nondecreasing on 1000 samples", mono, 0.0));
    cases.push(Case::new("|G| - lambda on 1000 samples", bounded, 0.0));
    cases
}

/// `max(|value| - err)` over the curvature field.
fn excess(u: &GraphField) -> Result<f64> {
    let f = curvature_field(u, &QuadratureSpec::default())?;
    Ok(f.values.iter().zip(&f.error_bounds).fold(f64::NEG_INFINITY, |m, (v, e)| m.max(v.abs() - e)))
}

fn affine(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    for i in 0..4 {
        let alpha = ALPHAS[i % 3];
        let g = rng.gen_range(-2.0..2.0);
        let c = rng.gen_range(-1.0..1.0);
        let name = format!("1d 129 nodes alpha={alpha} gradient={g:.4}");
        let ext = ExteriorModel::Affine { gradient: vec![g], offset: c };
        let r = Aabb::cube(1, 2.0)
            .and_then(|w| GraphField::from_fn(params(1, alpha), w, 1.0 / 32.0, ext, |x| g * x[0] + c))
            .and_then(|u| excess(&u));
        cases.push(Case::from_result(name, 0.0, r));
    }
    let g = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let name = format!("2d 17x17 nodes alpha=0.5 gradient=({:.4},{:.4})", g[0], g[1]);
    let ext = ExteriorModel::Affine { gradient: g.to_vec(), offset: 0.0 };
    let r = Aabb::cube(2, 1.0)
        .and_then(|w| GraphField::from_fn(params(2, 0.5), w, 1.0 / 8.0, ext, |x| g[0] * x[0] + g[1] * x[1]))
        .and_then(|u| excess(&u));
    cases.push(Case::from_result(name, 0.0, r));
    cases
}

fn scaling(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let q = QuadratureSpec::default();
    let x = rng.gen_range(-0.3..0.3);
    let mut cases = Vec::new();
    for r in [0.5, 2.0] {
        let name = format!("r={r} x={x:.4}");
        let run = || -> Result<(f64, f64)> {
            let u = bumped(0.5, 2.0, 129, 0.0)?;
            let ur = u.similarity(&[0.0], 0.0, r)?;
            let a = curvature_at(&ur, &[x], &q)?;
            let b = curvature_at(&u, &[r * x], &q)?;
            let s = r.powf(0.5);
            Ok(((a.value - s * b.value).abs(), 2.0 * (a.err + s * b.err)))
        };
        cases.push(match run() {
            Ok((m, b)) => Case::new(name, m, b),
            Err(e) => Case::failed(name, 0.0, e.to_string()),
        });
    }
    cases
}

fn halfspace(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let q = QuadratureSpec::default();
    let res = 64usize;
    let d = 2.0 / res as f64;
    let c = 0.5 * d;
    let ext = SetExterior::HalfSpace { normal: vec![-1.0, 1.0], offset: c };
    let e = match Aabb::cube(2, 1.0)
        .and_then(|b| VoxelSet::from_fn(params(1, 0.5), b, vec![res, res], ext, |x| x[1] - x[0] < c))
    {
        Ok(e) => e,
        Err(err) => return vec![Case::failed("tilted half-plane", 0.0, err.to_string())],
    };
    let ec = e.complement();
    let mut nullity = f64::NEG_INFINITY;
    let mut anti = 0.0f64;
    let mut failure = None;
    for _ in 0..4 {
        let s = rng.gen_range(-20i32..=20) as f64 * d;
        let x = [s, s + 0.5 * d];
        match (set_curvature_at(&e, &x, &q), set_curvature_at(&ec, &x, &q)) {
            (Ok(a), Ok(b)) => {
                nullity = nullity.max(a.value.abs() - a.err);
                anti = anti.max((a.value + b.value).abs());
            }
            (Err(err), _) | (_, Err(err)) => failure = Some(err.to_string()),
        }
    }
    if let Some(why) = failure {
        return vec![Case::failed("tilted half-plane", 0.0, why)];
    }
    vec![Case::new("tilted half-plane |H| - err", nullity, 0.0), Case::new("complement antisymmetry", anti, 0.0)]
}

fn consistency() -> Vec<Case> {
    let q = QuadratureSpec::default();
    let run = |nodes: usize| bumped(0.5, 2.0, nodes, 0.0).and_then(|u| graph_set_consistency(&u, &[0.0], &q));
    let (coarse, fine) = match (run(65), run(129)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![Case::failed("bump center", 0.0, e.to_string())],
    };
    let ratio = coarse.defect / fine.defect;
    vec![
        Case::new("bump center defect h=1/32 vs err", fine.defect, fine.graph.err + fine.set.err),
        // halving under refinement: ratio in [1.5, 3]
        Case::new("bump center refinement ratio distance from [1.5, 3]", (ratio - 2.25).abs(), 0.75),
    ]
}

fn perimeter() -> Vec<Case> {
    let radii = [1.0, 2.0, 4.0];
    let ext = SetExterior::HalfSpace { normal: vec![0.0, 1.0], offset: 0.0 };
    let growth = Aabb::cube(2, 6.0)
        .and_then(|b| VoxelSet::from_fn(params(1, 0.5), b, vec![48, 48], ext, |x| x[1] < 0.0))
        .and_then(|e| perimeter_growth(&e, &radii, &QuadratureSpec::default()));
    let g = match growth {
        Ok(g) => g,
        Err(e) => return vec![Case::failed("half-plane growth", 0.1, e.to_string())],
    };
    let xs: Vec<f64> = g.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = g.iter().map(|s| s.1.value.ln()).collect();
    let drop = g.windows(2).fold(f64::NEG_INFINITY, |m, w| m.max(w[0].1.value - w[1].1.value));
    vec![
        Case::new("half-plane log-log slope vs 2 - alpha", (slope(&xs, &ys) - 1.5).abs(), 0.1),
        Case::new("growth is monotone", drop, 0.0),
    ]
}

fn cmc() -> Vec<Case> {
    let alpha = 0.5;
    let radii = [2.0, 4.0, 8.0];
    let audit = Aabb::cube(1, 12.0)
        .and_then(|w| {
            let ext = ExteriorModel::Affine { gradient: vec![0.0], offset: 0.0 };
            GraphField::from_fn(params(1, alpha), w, 1.0 / 16.0, ext, |x| bump(x[0]))
        })
        .and_then(|u| cmc_exponent_audit(&u, &radii, &QuadratureSpec::default()));
    let a = match audit {
        Ok(a) => a,
        Err(e) => return vec![Case::failed("bump audit", 0.2, e.to_string())],
    };
    let envelope = 2.0 * radii[radii.len() - 1].powf(-alpha);
    let exponent = a.fitted_exponent.map_or(f64::INFINITY, |g| (g + alpha).abs());
    vec![
        Case::new("fitted exponent distance from -alpha", exponent, 0.2),
        Case::new("|fitted h| vs 2 R_max^-alpha", a.fitted_h.abs(), envelope),
    ]
}

fn solver(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let s = rng.gen_range(-0.5..0.5);
    let opts = SolveOptions::default();
    let tag = format!("65 nodes slope={s:.4}");
    let report = bumped(0.5, 2.0, 65, s).and_then(|u| solve(&u, 0.0, &opts, &QuadratureSpec::default()));
    let r = match report {
        Ok(r) => r,
        Err(e) => return vec![Case::failed(format!("{tag} converged"), 0.0, e.to_string())],
    };
    let u = &r.final_field;
    let dist = (0..u.len()).fold(0.0f64, |m, k| m.max((u.values()[k] - s * u.node_position(k)[0]).abs()));
    let rise = r.energy_trace.windows(2).fold(f64::NEG_INFINITY, |m, w| m.max(w[1] - w[0]));
    vec![
        Case::new(format!("{tag} converged"), if r.converged { 0.0 } else { 1.0 }, 0.0),
        Case::new(format!("{tag} sup distance to affine"), dist, 10.0 * opts.tolerance),
        Case::new(format!("{tag} energy increase"), rise, 0.0),
    ]
}

fn blowdown() -> Vec<Case> {
    let mut cases = Vec::new();
    let ext = SetExterior::HalfSpace { normal: vec![0.0, 1.0], offset: 0.0 };
    let gaps: Result<Vec<f64>> = Aabb::cube(2, 10.0)
        .and_then(|b| VoxelSet::from_fn(params(1, 0.5), b, vec![256, 256], ext, |x| x[1] < 0.0))
        .and_then(|e| [2.0, 4.0].iter().map(|&r| center_gap(&e, &[0.0, -0.5], &[0.0, 0.5], r, 1.0)).collect());
    cases.push(Case::from_result("half-plane center gap ratio distance from 1/2", 0.1, gaps.map(|g| (g[1] / g[0] - 0.5).abs())));

    let scales = [2.0, 4.0, 8.0, 16.0];
    let dirs = [vec![1.0, 0.0]];
    let opts = BlowdownOptions::default();
    let verdict = |u: Result<GraphField>, want: Verdict| -> Result<f64> {
        let r = blowdown_analyze(&u?, &scales, &dirs, &opts)?;
        Ok(if r.verdict == want { 0.0 } else { 1.0 })
    };
    let affine_bump = bumped(0.5, 2.0, 129, 1.0);
    cases.push(Case::from_result("affine + bump verdict is half-space", 0.0, verdict(affine_bump, Verdict::HalfSpace)));
    let cone = Aabb::cube(1, 2.0).and_then(|w| {
        let ext = ExteriorModel::Homogeneous1 { apex: vec![0.0] };
        GraphField::from_fn(params(1, 0.5), w, 1.0 / 32.0, ext, |x| x[0].abs())
    });
    cases.push(Case::from_result("|x| verdict is cone", 0.0, verdict(cone, Verdict::ConeDetected)));
    cases
}
