//! Command-line surface: argument parsing, file I/O and the verify harness.

pub mod verify;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::blowdown::{blowdown_analyze, BlowdownOptions, BlowdownReport};
use crate::curvature::curvature_field;
use crate::dynamics::{slope, solve, SolveOptions};
use crate::error::{Error, Result};
use crate::field::{from_json, GraphField, QuadratureSpec};
use crate::kernel::FracParams;
use crate::perimeter::{frac_perimeter, perimeter_growth, Region};
use crate::voxel::VoxelSet;
use verify::{verify_suites, Status, Suite};

/// Exit status of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SUITE_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlmg", version, about = "Nonlocal minimal graphs: curvature, perimeter, solver, blow-downs")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curvature at every interior node of a graph field: CSV to --output, summary JSON to stdout.
    Curvature {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        params: ParamsOverride,
        #[command(flatten)]
        quad: QuadOverride,
    },
    /// Fractional perimeter of a voxel set in Ω, or in origin balls with --radii.
    Perimeter {
        #[command(flatten)]
        io: OptionalOutput,
        #[command(flatten)]
        params: ParamsOverride,
        #[command(flatten)]
        quad: QuadOverride,
        /// JSON file {"omega": region}; defaults to the box shrunk by a tenth per side.
        #[arg(long)]
        options: Option<PathBuf>,
        /// Ball radii for the growth table.
        #[arg(long, value_delimiter = ',', conflicts_with = "options")]
        radii: Option<Vec<f64>>,
    },
    /// Gradient flow towards a solution of 𝒰_α u = h; writes the final field and a report.
    Solve {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        params: ParamsOverride,
        #[command(flatten)]
        quad: QuadOverride,
        /// JSON file {"h", "tol", "max_iter"}.
        #[arg(long)]
        options: Option<PathBuf>,
        /// Report path; defaults to the output path with extension `report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Blow-down analysis of a graph field: JSON report to --output, CSV traces beside it.
    Blowdown {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        params: ParamsOverride,
        /// JSON file {"scales", "directions", "R"}.
        #[arg(long)]
        options: Option<PathBuf>,
        /// Scales, overriding the options file.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Trace CSV path; defaults to the output path with extension `csv`.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Runs the verification suites; exit 1 if any case fails.
    Verify {
        /// Suites to run, in order; all by default.
        #[arg(long, value_enum)]
        suite: Vec<Suite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON results path; stdout by default.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Io {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptionalOutput {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON result path; stdout by default.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsOverride {
    /// Replaces the fractional order stored in the input.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Replaces the graph dimension stored in the input.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QuadOverride {
    /// JSON file holding a `QuadratureSpec`.
    #[arg(long)]
    pub quadrature: Option<PathBuf>,
    /// Tail budget for curvature and perimeter, residual tolerance for solve.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl ParamsOverride {
    fn apply(&self, p: FracParams) -> Result<Option<FracParams>> {
        if self.alpha.is_none() && self.n.is_none() {
            return Ok(None);
        }
        FracParams::new(self.n.unwrap_or(p.n), self.alpha.unwrap_or(p.alpha)).map(Some)
    }

    fn graph(&self, u: GraphField) -> Result<GraphField> {
        match self.apply(u.params())? {
            Some(p) => u.with_params(p),
            None => Ok(u),
        }
    }

    fn set(&self, e: VoxelSet) -> Result<VoxelSet> {
        match self.apply(e.params())? {
            Some(p) => e.with_params(p),
            None => Ok(e),
        }
    }
}

impl QuadOverride {
    fn resolve(&self, tol_is_budget: bool) -> Result<QuadratureSpec> {
        let mut q: QuadratureSpec = match &self.quadrature {
            Some(p) => read_json(p)?,
            None => QuadratureSpec::default(),
        };
        if tol_is_budget {
            if let Some(t) = self.tol {
                q.tail_budget = t;
            }
        }
        Ok(q)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveFile {
    #[serde(default)]
    h: f64,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
    #[serde(default)]
    step_floor: Option<f64>,
    #[serde(default)]
    armijo: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlowdownFile {
    #[serde(default)]
    scales: Option<Vec<f64>>,
    #[serde(default)]
    directions: Vec<Vec<f64>>,
    #[serde(rename = "R", default)]
    radius: Option<f64>,
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    gap_offset: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerimeterFile {
    omega: Region,
}

const DEFAULT_SCALES: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match dispatch(config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Caps the rayon pool at `NLMG_THREADS` workers when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("NLMG_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parameter(format!("NLMG_THREADS must be a positive integer, got {v:?}")))?;
    // a pool may already exist when run is called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(config: RunConfig) -> Result<i32> {
    match config.command {
        Command::Curvature { io, params, quad } => {
            let u = params.graph(read_json(&io.input)?)?;
            let f = curvature_field(&u, &quad.resolve(true)?)?;
            write_atomic(&io.output, f.to_csv().as_bytes())?;
            let summary = json!({
                "nodes": f.values.len(),
                "max_abs": f.max_abs(),
                "max_err": f.max_err(),
                "params": u.params(),
            });
            print_json(&summary)?;
        }
        Command::Perimeter { io, params, quad, options, radii } => {
            let e = params.set(read_json(&io.input)?)?;
            let q = quad.resolve(true)?;
            let out = match radii {
                Some(radii) => {
                    let g = perimeter_growth(&e, &radii, &q)?;
                    let xs: Vec<f64> = g.iter().map(|s| s.0.ln()).collect();
                    let ys: Vec<f64> = g.iter().map(|s| s.1.value.ln()).collect();
                    let rows: Vec<Value> = g
                        .iter()
                        .map(|(r, p)| json!({"R": r, "value": p.value, "err": p.err, "split": p.split}))
                        .collect();
                    let fit = if g.len() >= 2 { Some(slope(&xs, &ys)) } else { None };
                    json!({"growth": rows, "slope": fit, "params": e.params()})
                }
                None => {
                    let omega = match options {
                        Some(p) => read_json::<PerimeterFile>(&p)?.omega,
                        None => default_omega(&e),
                    };
                    let p = frac_perimeter(&e, &omega, &q)?;
                    json!({"value": p.value, "err": p.err, "split": p.split, "params": e.params()})
                }
            };
            emit_json(io.output.as_deref(), &out)?;
        }
        Command::Solve { io, params, quad, options, report } => {
            let u = params.graph(read_json(&io.input)?)?;
            let file = match options {
                Some(p) => read_json(&p)?,
                None => SolveFile { h: 0.0, tol: None, max_iter: None, step_floor: None, armijo: None },
            };
            let d = SolveOptions::default();
            let opts = SolveOptions {
                tolerance: quad.tol.or(file.tol).unwrap_or(d.tolerance),
                max_iter: file.max_iter.unwrap_or(d.max_iter),
                step_floor: file.step_floor.unwrap_or(d.step_floor),
                armijo: file.armijo.unwrap_or(d.armijo),
            };
            let r = solve(&u, file.h, &opts, &quad.resolve(false)?)?;
            write_atomic(&io.output, r.final_field.to_json().as_bytes())?;
            let mut body = serde_json::to_value(&r).map_err(format_err)?;
            if let Value::Object(m) = &mut body {
                m.remove("final");
                m.insert("h".into(), json!(file.h));
                m.insert("final_path".into(), json!(io.output));
            }
            let path = report.unwrap_or_else(|| io.output.with_extension("report.json"));
            write_atomic(&path, pretty(&body)?.as_bytes())?;
            eprintln!("converged={} iterations={} report={}", r.converged, r.iterations, path.display());
        }
        Command::Blowdown { io, params, options, scales, traces } => {
            let u = params.graph(read_json(&io.input)?)?;
            let file = match options {
                Some(p) => read_json(&p)?,
                None => BlowdownFile {
                    scales: None,
                    directions: vec![],
                    radius: None,
                    resolution: None,
                    gap_offset: None,
                },
            };
            let scales = scales.or(file.scales).unwrap_or_else(|| DEFAULT_SCALES.to_vec());
            let opts = BlowdownOptions {
                radius: file.radius.unwrap_or(BlowdownOptions::default().radius),
                resolution: file.resolution,
                gap_offset: file.gap_offset,
            };
            let r = blowdown_analyze(&u, &scales, &file.directions, &opts)?;
            write_atomic(&io.output, pretty(&r)?.as_bytes())?;
            let path = traces.unwrap_or_else(|| io.output.with_extension("csv"));
            write_atomic(&path, blowdown_csv(&r).as_bytes())?;
        }
        Command::Verify { suite, seed, output } => {
            let suites = if suite.is_empty() { Suite::ALL.to_vec() } else { suite };
            let results = verify_suites(seed, &suites);
            for s in &results {
                for c in &s.cases {
                    let tag = if c.status == Status::Pass { "pass" } else { "FAIL" };
                    eprintln!("[{tag}] {}/{}: measured {:e} bound {:e}", s.suite, c.name, c.measured, c.bound);
                }
                eprintln!("{}: {:.2} s", s.suite, s.wall_time.as_secs_f64());
            }
            emit_json(output.as_deref(), &json!({"seed": seed, "suites": results}))?;
            return Ok(if results.iter().all(|s| s.passed()) { EXIT_OK } else { EXIT_SUITE_FAILURE });
        }
    }
    Ok(EXIT_OK)
}

/// The voxel box shrunk by a tenth of its extent on every side.
fn default_omega(e: &VoxelSet) -> Region {
    let b = e.bbox();
    let pad: Vec<f64> = b.lo.iter().zip(&b.hi).map(|(l, h)| 0.1 * (h - l)).collect();
    let lo = b.lo.iter().zip(&pad).map(|(l, p)| l + p).collect();
    let hi = b.hi.iter().zip(&pad).map(|(h, p)| h - p).collect();
    Region::Box { bounds: crate::field::Aabb::new(lo, hi).expect("shrunk box is valid") }
}

/// One row per scale: scale, cone, half-space and center-gap defects, then one column per direction.
fn blowdown_csv(r: &BlowdownReport) -> String {
    let mut out = String::from("scale,cone_defect,halfspace_defect,center_gap");
    for key in r.cylinder_defects.keys() {
        out.push_str(&format!(",\"cylinder {key}\""));
    }
    out.push('\n');
    for (i, s) in r.scales.iter().enumerate() {
        out.push_str(&format!("{s:?},{:?},{:?},{:?}", r.cone_defects[i], r.halfspace_defects[i], r.center_gaps[i]));
        for v in r.cylinder_defects.values() {
            out.push_str(&format!(",{:?}", v[i]));
        }
        out.push('\n');
    }
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    from_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn format_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(format_err)?;
    s.push('\n');
    Ok(s)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    std::io::stdout().write_all(pretty(v)?.as_bytes())?;
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, v: &T) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, pretty(v)?.as_bytes()),
        None => print_json(v),
    }
}

/// Writes through a temporary file in the target directory, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
