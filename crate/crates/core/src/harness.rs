//! Experiment plumbing behind the `sphere4` binary: data generation, solve
//! dispatch, resumable sweeps, landscape batches and filter alignment.
//!
//! Every function takes a [`RunContext`] carrying the output directory, the
//! base seed and the command line recorded as provenance. Outputs are CSV
//! for data (17 significant digits) and JSON for metadata and results.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdl::{build_preconditioner, deprecondition, CdlObjective, ConvProblem, ScaleConvention};
use crate::error::{invalid, shape, Error, Result};
use crate::io::{
    fmt_f64, read_matrix_csv, read_sidecar, write_atomic, write_matrix_with_sidecar, MatrixKind, Provenance,
    Sidecar,
};
use crate::landscape::{self, BatchRow, CriticalThresholds, LandscapeReport, RegionParams};
use crate::model::{make_untf, sample_bg, synth_odl, Dictionary, FilterBank, ObservationSet, SpherePoint, UntfConfig};
use crate::objective::{OdlObjective, SphereObjective, TensorObjective};
use crate::optimize::{init_cdl, solve, SolveConfig, SolveResult, Termination};
use crate::recovery::{align_shift, recovery_error, Alignment, RecoveryOutcome, EPS_CDL};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub command: String,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>, seed: u64, command: impl Into<String>) -> Result<Self> {
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir)?;
        Ok(RunContext {
            out_dir,
            seed,
            command: command.into(),
        })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.command.clone(), self.seed)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn sidecar(&self, m: &DMatrix<f64>, kind: MatrixKind, theta: Option<f64>) -> Sidecar {
        Sidecar {
            rows: m.nrows(),
            cols: m.ncols(),
            kind,
            seed: Some(self.seed),
            theta,
            provenance: Some(self.provenance()),
        }
    }

    fn write(&self, name: &str, m: &DMatrix<f64>, kind: MatrixKind, theta: Option<f64>) -> Result<PathBuf> {
        let path = self.path(name);
        write_matrix_with_sidecar(&path, m, &self.sidecar(m, kind, theta))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

// ───────────────────────────── gen ─────────────────────────────

/// Writes `dictionary.csv` (n×m UNTF), `code.csv` (m×p BG(θ)) and
/// `observations.csv` (n×p, `Y = A·X`), each with a JSON sidecar.
pub fn gen_odl(ctx: &RunContext, n: usize, m: usize, theta: f64, p: usize) -> Result<Vec<PathBuf>> {
    let (dict, report) = make_untf(n, m, ctx.seed, UntfConfig::default())?;
    if !report.converged {
        return Err(Error::Numerical(format!(
            "UNTF iteration did not converge (frame residual {:.3e})",
            report.frame_residual
        )));
    }
    let code = sample_bg(m, p, theta, ctx.seed)?;
    let obs = synth_odl(&dict, &code)?;
    Ok(vec![
        ctx.write("dictionary.csv", dict.entries(), MatrixKind::Dictionary, None)?,
        ctx.write("code.csv", code.entries(), MatrixKind::Code, Some(theta))?,
        ctx.write("observations.csv", obs.entries(), MatrixKind::Observations, Some(theta))?,
    ])
}

/// Writes `filters.csv` (K rows of n), `codes.csv` (p rows of n·K) and
/// `measurements.csv` (p rows of n), each with a JSON sidecar.
pub fn gen_cdl(ctx: &RunContext, n: usize, k: usize, theta: f64, p: usize) -> Result<Vec<PathBuf>> {
    let prob = ConvProblem::generate(n, k, theta, p, ctx.seed)?;
    let filters = rows_matrix(prob.filters.filters());
    let codes = rows_matrix(&prob.codes);
    let meas = prob.measurements.entries().transpose();
    Ok(vec![
        ctx.write("filters.csv", &filters, MatrixKind::Filters, None)?,
        ctx.write("codes.csv", &codes, MatrixKind::Code, Some(theta))?,
        ctx.write("measurements.csv", &meas, MatrixKind::Measurements, Some(theta))?,
    ])
}

fn rows_matrix(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.row_iter().map(|r| r.transpose()).collect()
}

/// Reads observations as an n×p matrix; `measurements` files (p rows of n) are transposed.
pub fn load_observations(path: &Path) -> Result<(ObservationSet, Option<f64>)> {
    let m = read_matrix_csv(path)?;
    let side = read_sidecar(path)?;
    let theta = side.as_ref().and_then(|s| s.theta);
    let entries = match side.map(|s| s.kind) {
        Some(MatrixKind::Measurements) => m.transpose(),
        _ => m,
    };
    Ok((ObservationSet::new(entries), theta))
}

pub fn load_filters(path: &Path) -> Result<FilterBank> {
    FilterBank::new(matrix_rows(&read_matrix_csv(path)?))
}

// ───────────────────────────── solve ─────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Odl,
    Cdl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Data,
}

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub model: ModelKind,
    /// ODL: reference dictionary (required for `φ_T`, used for `ρ_e` otherwise).
    pub dictionary: Option<PathBuf>,
    /// ODL observations or CDL measurements. Absent for ODL means `φ_T`.
    pub observations: Option<PathBuf>,
    /// CDL: true filters for alignment (and K when `k` is absent).
    pub filters: Option<PathBuf>,
    pub theta: Option<f64>,
    pub k: Option<usize>,
    /// Defaults: random for ODL, data for CDL.
    pub init: Option<InitKind>,
    pub solver: SolveConfig,
    pub convention: ScaleConvention,
    pub emit_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub objective: &'static str,
    pub q_init: SpherePoint,
    pub result: SolveResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryOutcome>,
    /// CDL: de-preconditioned estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_estimate: Option<SpherePoint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alignments: Vec<Alignment>,
}

/// Runs one solve and writes `solve.json` plus `recovery.csv` (ODL) or
/// `alignment.csv` (CDL with reference filters).
pub fn cmd_solve(ctx: &RunContext, req: &SolveRequest) -> Result<SolveReport> {
    let cfg = SolveConfig { seed: ctx.seed, ..req.solver };
    let report = match req.model {
        ModelKind::Odl => solve_odl(ctx, req, &cfg)?,
        ModelKind::Cdl => solve_cdl(ctx, req, &cfg)?,
    };
    #[derive(Serialize)]
    struct Out<'a> {
        provenance: Provenance,
        objective: &'a str,
        q_init: &'a SpherePoint,
        result: serde_json::Value,
        #[serde(skip_serializing_if = "Option::is_none")]
        recovery: Option<RecoveryOutcome>,
        #[serde(skip_serializing_if = "Option::is_none")]
        filter_estimate: Option<&'a SpherePoint>,
        #[serde(skip_serializing_if = "<[_]>::is_empty")]
        alignments: &'a [Alignment],
    }
    let result: serde_json::Value = serde_json::from_str(&report.result.to_json(req.emit_trace)?)?;
    ctx.write_json(
        "solve.json",
        &Out {
            provenance: ctx.provenance(),
            objective: report.objective,
            q_init: &report.q_init,
            result,
            recovery: report.recovery,
            filter_estimate: report.filter_estimate.as_ref(),
            alignments: &report.alignments,
        },
    )?;
    if let Some(out) = report.recovery {
        let mut w = csv::Writer::from_path(ctx.path("recovery.csv"))?;
        w.write_record(["seed", "rho_e", "best_index", "success", "iterations", "termination"])?;
        w.write_record([
            ctx.seed.to_string(),
            fmt_f64(out.rho_e),
            out.best_index.to_string(),
            out.success.to_string(),
            report.result.iterations.to_string(),
            termination_str(report.result.termination).to_string(),
        ])?;
        w.flush()?;
    }
    if !report.alignments.is_empty() {
        write_alignment_csv(&ctx.path("alignment.csv"), &report.alignments, EPS_CDL)?;
    }
    Ok(report)
}

fn solve_odl(ctx: &RunContext, req: &SolveRequest, cfg: &SolveConfig) -> Result<SolveReport> {
    let dict = match &req.dictionary {
        Some(p) => Some(Dictionary::new(read_matrix_csv(p)?)?),
        None => None,
    };
    if req.init == Some(InitKind::Data) {
        return invalid("--init data applies to the cdl model only");
    }
    let (objective, result, q0) = match &req.observations {
        Some(path) => {
            let (obs, side_theta) = load_observations(path)?;
            let theta = req
                .theta
                .or(side_theta)
                .ok_or_else(|| Error::InvalidParameter("theta not given and not in the sidecar".into()))?;
            let obj = OdlObjective::new(&obs, theta)?;
            let q0 = SpherePoint::random(obj.dim(), ctx.seed, 0);
            ("phi_dl", solve(&obj, &q0, cfg)?, q0)
        }
        None => {
            let Some(d) = &dict else {
                return invalid("odl solve needs --observations or --dictionary");
            };
            let obj = TensorObjective::new(d.clone());
            let q0 = SpherePoint::random(obj.dim(), ctx.seed, 0);
            ("phi_t", solve(&obj, &q0, cfg)?, q0)
        }
    };
    if let Some(d) = &dict {
        if d.n() != result.q_star.dim() {
            return shape("dictionary and observation dimensions differ");
        }
    }
    Ok(SolveReport {
        objective,
        recovery: dict.as_ref().map(|d| recovery_error(&result.q_star, d)),
        q_init: q0,
        result,
        filter_estimate: None,
        alignments: Vec::new(),
    })
}

fn solve_cdl(ctx: &RunContext, req: &SolveRequest, cfg: &SolveConfig) -> Result<SolveReport> {
    let Some(path) = &req.observations else {
        return invalid("cdl solve needs --observations (measurements file)");
    };
    let (obs, side_theta) = load_observations(path)?;
    let theta = req
        .theta
        .or(side_theta)
        .ok_or_else(|| Error::InvalidParameter("theta not given and not in the sidecar".into()))?;
    let filters = match &req.filters {
        Some(p) => Some(load_filters(p)?),
        None => None,
    };
    let k = req
        .k
        .or(filters.as_ref().map(FilterBank::k))
        .ok_or_else(|| Error::InvalidParameter("cdl solve needs --k or --filters".into()))?;
    let precond = build_preconditioner(&obs, theta, k, req.convention)?;
    let obj = CdlObjective::new(&obs, precond.clone(), theta, k)?;
    let q0 = match req.init.unwrap_or(InitKind::Data) {
        InitKind::Data => init_cdl(&obs, &precond, None, ctx.seed)?,
        InitKind::Random => SpherePoint::random(obs.n(), ctx.seed, 0),
    };
    let result = solve(&obj, &q0, cfg)?;
    let a = deprecondition(&result.q_star, &precond)?;
    let alignments = match &filters {
        Some(fb) => fb
            .filters()
            .iter()
            .map(|f| align_shift(a.coords().as_slice(), f.as_slice()))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(SolveReport {
        objective: "phi_cdl",
        q_init: q0,
        result,
        recovery: None,
        filter_estimate: Some(a),
        alignments,
    })
}

pub fn termination_str(t: Termination) -> &'static str {
    match t {
        Termination::GradTol => "grad_tol",
        Termination::MaxIters => "max_iters",
        Termination::Stalled => "stalled",
    }
}

// ───────────────────────────── sweep ─────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    #[serde(rename = "phi_T")]
    PhiT,
    #[serde(rename = "phi_DL")]
    PhiDl,
    #[serde(rename = "phi_CDL")]
    PhiCdl,
}

/// One grid cell. `m` is ignored for CDL (it is n·K); `p`, `theta` are
/// ignored for `φ_T`; `k` is used only for CDL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub theta: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub cells: Vec<Cell>,
    pub repeats: usize,
    pub objective: SweepObjective,
    pub solver: SolveConfig,
}

/// Axes of a Cartesian grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub p: Vec<usize>,
    pub theta: Vec<f64>,
    pub k: Vec<usize>,
}

impl SweepSpec {
    pub fn grid(axes: &SweepAxes, repeats: usize, objective: SweepObjective, solver: SolveConfig) -> Self {
        let mut cells = Vec::new();
        for &n in &axes.n {
            for &m in &axes.m {
                for &p in &axes.p {
                    for &theta in &axes.theta {
                        for &k in &axes.k {
                            cells.push(Cell { n, m, p, theta, k });
                        }
                    }
                }
            }
        }
        SweepSpec {
            cells,
            repeats,
            objective,
            solver,
        }
    }

    /// Overcompleteness phase transition on `φ_T`: for each `n`, the cells
    /// `m = ⌊n²/2⌋` and `m = ⌈1.5·n²⌉`, 12 repeats.
    pub fn overcompleteness(ns: &[usize]) -> Self {
        let cells = ns
            .iter()
            .flat_map(|&n| {
                let n2 = (n * n) as f64;
                [(n2 / 2.0).floor() as usize, (1.5 * n2).ceil() as usize]
                    .into_iter()
                    .map(move |m| Cell {
                        n,
                        m: m.max(n),
                        p: 0,
                        theta: 0.0,
                        k: 1,
                    })
            })
            .collect();
        SweepSpec {
            cells,
            repeats: 12,
            objective: SweepObjective::PhiT,
            solver: SolveConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        if self.cells.is_empty() {
            return invalid("sweep has no cells");
        }
        for c in &self.cells {
            let bad = c.n == 0
                || match self.objective {
                    SweepObjective::PhiT => c.m < c.n,
                    SweepObjective::PhiDl => c.m < c.n || c.p == 0 || !(c.theta > 0.0 && c.theta < 1.0),
                    SweepObjective::PhiCdl => c.k == 0 || c.p == 0 || !(c.theta > 0.0 && c.theta < 1.0),
                };
            if bad {
                return invalid(format!("invalid sweep cell {c:?} for {:?}", self.objective));
            }
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub cell: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub theta: f64,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub rho_e: f64,
    pub best_index: usize,
    pub success: bool,
    pub iterations: usize,
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub cell: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub theta: f64,
    pub k: usize,
    pub repeats: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub provenance: Provenance,
    pub spec: SweepSpec,
    pub completed: BTreeSet<usize>,
}

pub const RAW_CSV: &str = "sweep_raw.csv";
pub const RATES_CSV: &str = "sweep_rates.csv";
pub const MANIFEST: &str = "sweep_manifest.json";

/// Seed of repeat `r` in cell `c`: an independent stream keyed by both.
pub fn trial_seed(base: u64, cell: usize, repeat: usize) -> u64 {
    rng::stream(base, ((cell as u64) << 20) | repeat as u64, Purpose::Query).next_u64()
}

/// One repeat of one cell.
pub fn run_trial(objective: SweepObjective, cell: &Cell, solver: &SolveConfig, seed: u64) -> Result<(RecoveryOutcome, SolveResult)> {
    let cfg = SolveConfig { seed, ..*solver };
    match objective {
        SweepObjective::PhiT => {
            let (dict, _) = make_untf(cell.n, cell.m, seed, UntfConfig::default())?;
            let obj = TensorObjective::new(dict.clone());
            let res = solve(&obj, &SpherePoint::random(cell.n, seed, 0), &cfg)?;
            Ok((recovery_error(&res.q_star, &dict), res))
        }
        SweepObjective::PhiDl => {
            let (dict, _) = make_untf(cell.n, cell.m, seed, UntfConfig::default())?;
            let obs = synth_odl(&dict, &sample_bg(cell.m, cell.p, cell.theta, seed)?)?;
            let obj = OdlObjective::new(&obs, cell.theta)?;
            let res = solve(&obj, &SpherePoint::random(cell.n, seed, 0), &cfg)?;
            Ok((recovery_error(&res.q_star, &dict), res))
        }
        SweepObjective::PhiCdl => {
            let prob = ConvProblem::generate(cell.n, cell.k, cell.theta, cell.p, seed)?;
            let precond = build_preconditioner(&prob.measurements, cell.theta, cell.k, ScaleConvention::default())?;
            let obj = CdlObjective::new(&prob.measurements, precond.clone(), cell.theta, cell.k)?;
            let q0 = init_cdl(&prob.measurements, &precond, None, seed)?;
            let res = solve(&obj, &q0, &cfg)?;
            let a = deprecondition(&res.q_star, &precond)?;
            let mut best = (0, f64::INFINITY);
            for (i, f) in prob.filters.filters().iter().enumerate() {
                let al = align_shift(a.coords().as_slice(), f.as_slice())?;
                if al.error < best.1 {
                    best = (i, al.error);
                }
            }
            // ‖s·s_ℓ[a] − â‖² = 2(1 − |⟨â, s_ℓ[a]⟩|), so this is ρ_e over all shifts
            let outcome = RecoveryOutcome {
                rho_e: best.1 * best.1 / 2.0,
                best_index: best.0,
                success: best.1 <= EPS_CDL,
            };
            Ok((outcome, res))
        }
    }
}

/// Runs (or resumes) a sweep. Cells listed as completed in an existing
/// manifest for the same spec are kept from the existing raw CSV.
pub fn cmd_sweep(ctx: &RunContext, spec: &SweepSpec) -> Result<Vec<RateRow>> {
    spec.validate()?;
    let manifest_path = ctx.path(MANIFEST);
    let raw_path = ctx.path(RAW_CSV);
    let mut manifest = SweepManifest {
        provenance: ctx.provenance(),
        spec: spec.clone(),
        completed: BTreeSet::new(),
    };
    let mut rows: Vec<RawRow> = Vec::new();
    if manifest_path.exists() && raw_path.exists() {
        let old: SweepManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if old.spec == *spec && old.provenance.seed == ctx.seed {
            manifest.completed = old.completed;
            rows = read_raw_csv(&raw_path)?
                .into_iter()
                .filter(|r| manifest.completed.contains(&r.cell))
                .collect();
        }
    }

    let pending: Vec<usize> = (0..spec.cells.len()).filter(|c| !manifest.completed.contains(c)).collect();
    let batch = rayon::current_num_threads().max(1);
    for cells in pending.chunks(batch) {
        let jobs: Vec<(usize, usize)> = cells
            .iter()
            .flat_map(|&c| (0..spec.repeats).map(move |r| (c, r)))
            .collect();
        let done: Vec<RawRow> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let cell = &spec.cells[c];
                let seed = trial_seed(ctx.seed, c, r);
                let (out, res) = run_trial(spec.objective, cell, &spec.solver, seed)?;
                Ok(RawRow {
                    cell: c,
                    n: cell.n,
                    m: if spec.objective == SweepObjective::PhiCdl { cell.n * cell.k } else { cell.m },
                    p: cell.p,
                    theta: cell.theta,
                    k: cell.k,
                    repeat: r,
                    seed,
                    rho_e: out.rho_e,
                    best_index: out.best_index,
                    success: out.success,
                    iterations: res.iterations,
                    termination: termination_str(res.termination).to_string(),
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(done);
        rows.sort_by_key(|r| (r.cell, r.repeat));
        manifest.completed.extend(cells.iter().copied());
        write_atomic(&raw_path, &raw_csv_bytes(&rows)?)?;
        write_atomic(&manifest_path, (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    }

    let rates = aggregate(&rows);
    write_atomic(&ctx.path(RATES_CSV), &rates_csv_bytes(&rates)?)?;
    Ok(rates)
}

/// Success rates per cell, in cell order.
pub fn aggregate(rows: &[RawRow]) -> Vec<RateRow> {
    let mut out: Vec<RateRow> = Vec::new();
    let mut sorted: Vec<&RawRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.cell, r.repeat));
    for r in sorted {
        match out.last_mut() {
            Some(last) if last.cell == r.cell => {
                last.repeats += 1;
                last.successes += r.success as usize;
            }
            _ => out.push(RateRow {
                cell: r.cell,
                n: r.n,
                m: r.m,
                p: r.p,
                theta: r.theta,
                k: r.k,
                repeats: 1,
                successes: r.success as usize,
                rate: 0.0,
            }),
        }
    }
    for r in &mut out {
        r.rate = r.successes as f64 / r.repeats as f64;
    }
    out
}

fn raw_csv_bytes(rows: &[RawRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "cell", "n", "m", "p", "theta", "k", "repeat", "seed", "rho_e", "best_index", "success", "iterations",
        "termination",
    ])?;
    for r in rows {
        w.write_record([
            r.cell.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.p.to_string(),
            fmt_f64(r.theta),
            r.k.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            fmt_f64(r.rho_e),
            r.best_index.to_string(),
            r.success.to_string(),
            r.iterations.to_string(),
            r.termination.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn rates_csv_bytes(rows: &[RateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell", "n", "m", "p", "theta", "k", "repeats", "successes", "rate"])?;
    for r in rows {
        w.write_record([
            r.cell.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.p.to_string(),
            fmt_f64(r.theta),
            r.k.to_string(),
            r.repeats.to_string(),
            r.successes.to_string(),
            fmt_f64(r.rate),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

// ───────────────────────────── landscape ─────────────────────────────

/// Points to examine: explicit rows from a CSV (one point per row) or
/// `count` uniform random points.
#[derive(Debug, Clone)]
pub enum PointSource {
    File(PathBuf),
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LandscapeOutput {
    Single(Box<LandscapeReport>),
    Batch(Vec<BatchRow>),
}

/// One point → `landscape.json`; several → `landscape.csv`
/// (or `landscape.json` holding the rows when `format` is JSON).
pub fn cmd_landscape(
    ctx: &RunContext,
    dict: &Dictionary,
    points: &PointSource,
    region: &RegionParams,
    cdl_mode: bool,
    format: OutputFormat,
) -> Result<LandscapeOutput> {
    let pts: Vec<(u64, SpherePoint)> = match points {
        PointSource::File(p) => matrix_rows(&read_matrix_csv(p)?)
            .into_iter()
            .enumerate()
            .map(|(i, v)| SpherePoint::project(v).map(|q| (i as u64, q)))
            .collect::<Result<_>>()?,
        PointSource::Random { count } => (0..*count as u64)
            .map(|t| (ctx.seed.wrapping_add(t), SpherePoint::random(dict.n(), ctx.seed.wrapping_add(t), 0)))
            .collect(),
    };
    if pts.is_empty() {
        return invalid("no points to examine");
    }
    if let Some((_, q)) = pts.iter().find(|(_, q)| q.dim() != dict.n()) {
        return shape(format!("point of dimension {} for a dictionary with n = {}", q.dim(), dict.n()));
    }
    let th = CriticalThresholds::default();
    if pts.len() == 1 {
        let rep = landscape::critical_point_report(dict, &pts[0].1, region, cdl_mode, &th)?;
        ctx.write_json("landscape.json", &rep)?;
        return Ok(LandscapeOutput::Single(Box::new(rep)));
    }
    let rows = landscape::report_batch(dict, &pts, region, cdl_mode, &th)?;
    match format {
        OutputFormat::Csv => landscape::write_batch_csv(&ctx.path("landscape.csv"), &rows)?,
        OutputFormat::Json => {
            ctx.write_json("landscape.json", &rows)?;
        }
    }
    Ok(LandscapeOutput::Batch(rows))
}

// ───────────────────────────── align ─────────────────────────────

/// Aligns every estimate row against every reference row; keeps, per
/// reference filter, the best-aligned estimate. Writes `alignment.csv`.
pub fn cmd_align(ctx: &RunContext, estimates: &Path, truth: &Path, eps: f64) -> Result<Vec<Alignment>> {
    let est = matrix_rows(&read_matrix_csv(estimates)?);
    let tru = matrix_rows(&read_matrix_csv(truth)?);
    if est.is_empty() || tru.is_empty() {
        return invalid("align needs at least one estimate and one reference filter");
    }
    let mut best = Vec::with_capacity(tru.len());
    for t in &tru {
        let mut b: Option<Alignment> = None;
        for e in &est {
            let al = align_shift(e.as_slice(), t.as_slice())?;
            if b.is_none_or(|x| al.error < x.error) {
                b = Some(al);
            }
        }
        best.push(b.expect("non-empty estimates"));
    }
    write_alignment_csv(&ctx.path("alignment.csv"), &best, eps)?;
    Ok(best)
}

pub fn write_alignment_csv(path: &Path, al: &[Alignment], eps: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["filter", "shift", "sign", "aligned_error", "recovered"])?;
    for (i, a) in al.iter().enumerate() {
        w.write_record([
            i.to_string(),
            a.shift.to_string(),
            fmt_f64(a.sign),
            fmt_f64(a.error),
            (a.error <= eps).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
