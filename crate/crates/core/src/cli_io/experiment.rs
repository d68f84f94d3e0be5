//! The generate → minimize → extract → eigensolve → diagnose → persist pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DiagnosticsConfig, ExperimentConfig, Generator};
use super::io::{write_coeff, write_field, write_fits, write_history, write_points};
use crate::coeff::{
    make_checkerboard, make_identity, make_random_piecewise, validate_ellipticity, CoeffField,
    Ellipticity, SymMatrix,
};
use crate::diagnostics::{
    boundary_growth_fit, boundary_layer_volume, caccioppoli_scan, equivalence_check,
    exponent_stats, extract_free_boundary, holder_scan, interior_sample_points, support_shape,
    verify_rescaling_identity, EquivalenceCheck, ExponentStats, RegularityFit, RescaleParams,
    RescalingCheck, SupportShape,
};
use crate::eigensolver::{inflate_to_volume, lambda1, SolverSummary};
use crate::error::{Error, Result};
use crate::functional::{FunctionalValue, PenaltyParams, VolumeMode};
use crate::mesh::{BoxDomain, DomainMask, Mesh, ScalarField};
use crate::optimizer::{initial_state_at, minimize, MinimizerResult, Schedule, StageExit};

pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub mass_residual: f64,
    pub exact_volume: f64,
    pub smeared_volume: f64,
    /// Measure of the cells cut by the level set `{u = s}`.
    pub boundary_layer_volume: f64,
    /// `exact_volume ≤ target + boundary_layer_volume`.
    pub volume_within_layer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub stage_exits: Vec<StageExit>,
    pub iterations: usize,
    pub restarts: usize,
    /// Final totals of every start; the lowest is kept.
    pub start_totals: Vec<f64>,
    pub best_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub interior: ExponentStats,
    pub boundary: ExponentStats,
    pub free_boundary_points: usize,
    pub caccioppoli_max_ratio: f64,
    pub caccioppoli_max_growth: f64,
    pub equivalence: EquivalenceCheck,
    pub rescaling: Option<RescalingCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub box_sides: Vec<f64>,
    pub box_volume: f64,
    pub coefficient_bounds: [f64; 2],
    pub lambda1: f64,
    pub eigen: SolverSummary,
    pub mask_measure: f64,
    pub inflated: bool,
    pub functional: FunctionalValue,
    pub constraints: ConstraintReport,
    pub convergence: ConvergenceReport,
    pub shape: Option<SupportShape>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<DiagnosticsSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub minimize_seconds: f64,
    pub eigen_seconds: f64,
    pub diagnostics_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub timing: Timing,
    pub dir: PathBuf,
    pub minimizer: MinimizerResult,
    pub coeff: CoeffField,
    pub interior_fits: Vec<RegularityFit>,
    pub boundary_fits: Vec<RegularityFit>,
}

pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.output.dir).join(&cfg.output.run_id)
}

pub fn build_mesh(cfg: &ExperimentConfig) -> Result<Arc<Mesh>> {
    let dim = cfg.mesh.dim;
    Mesh::build(
        BoxDomain::new(&vec![cfg.mesh.side; dim], &vec![0.0; dim])?,
        &vec![cfg.mesh.resolution; dim],
    )
}

pub fn build_coeff(cfg: &ExperimentConfig, mesh: &Arc<Mesh>) -> Result<CoeffField> {
    let c = &cfg.coeff;
    let block_cells = (cfg.mesh.resolution / c.blocks).max(1);
    let bounds = Ellipticity::new(c.theta, c.big_theta)?;
    match c.generator {
        Generator::Identity => make_identity(mesh, c.scale),
        Generator::Checkerboard => make_checkerboard(
            mesh,
            block_cells,
            SymMatrix::scaled_identity(mesh.dim(), c.theta),
            SymMatrix::scaled_identity(mesh.dim(), c.big_theta),
            bounds,
        ),
        Generator::Random => make_random_piecewise(mesh, c.seed, bounds, block_cells),
    }
}

pub fn build_schedule(cfg: &ExperimentConfig, u0: &ScalarField) -> Schedule {
    let o = &cfg.optimizer;
    let smear0 = if o.smear0 > 0.0 {
        o.smear0
    } else {
        u0.max() / 4.0
    };
    let mut s = Schedule::geometric(o.delta, o.epsilon0, smear0, o.stages, o.factor);
    s.max_inner = o.max_inner;
    s.tol_rel = o.tol_rel;
    s.window = o.window;
    s.step_init = (o.step_init > 0.0).then_some(o.step_init);
    s.backtrack_factor = o.backtrack;
    s.armijo_c = o.armijo_c;
    s.target_volume = o.target_volume;
    s
}

/// Initial bump centers: the box center, then seeded points that keep the
/// bump inside the box.
fn start_centers(cfg: &ExperimentConfig, mesh: &Mesh) -> Vec<Vec<f64>> {
    let dim = mesh.dim();
    let center = mesh.domain().center();
    let unit_ball = if dim == 2 {
        std::f64::consts::PI
    } else {
        4.0 / 3.0 * std::f64::consts::PI
    };
    let radius = (cfg.optimizer.init_volume / unit_ball).powf(1.0 / dim as f64);
    let room = (0.5 * cfg.mesh.side - radius) * 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    let mut out = vec![center.clone()];
    for _ in 1..cfg.optimizer.starts {
        out.push(
            center
                .iter()
                .map(|c| {
                    if room > 0.0 {
                        c + rng.random_range(-room..room)
                    } else {
                        *c
                    }
                })
                .collect(),
        );
    }
    out
}

fn minimize_multistart(
    cfg: &ExperimentConfig,
    a: &CoeffField,
) -> Result<(MinimizerResult, Schedule, Vec<f64>, usize)> {
    let mesh = a.mesh();
    let mut best: Option<(MinimizerResult, Schedule)> = None;
    let mut totals = Vec::new();
    let mut best_start = 0;
    for (k, center) in start_centers(cfg, mesh).iter().enumerate() {
        let u0 = initial_state_at(mesh, cfg.optimizer.init_volume, center)?;
        let sched = build_schedule(cfg, &u0);
        let r = minimize(a, &sched, &u0)?;
        totals.push(r.final_value.total);
        if best
            .as_ref()
            .is_none_or(|(b, _)| r.final_value.total < b.final_value.total)
        {
            best_start = k;
            best = Some((r, sched));
        }
    }
    let (r, s) = best.ok_or_else(|| Error::param("optimizer.starts", "must be at least 1"))?;
    Ok((r, s, totals, best_start))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs the whole pipeline and writes every artifact under
/// `output.dir/run_id/`. On failure a `FAILED` file with the error is left
/// next to whatever was already written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    match run_pipeline(cfg, &dir) {
        Ok(out) => Ok(out),
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

fn run_pipeline(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    let t0 = Instant::now();
    fs::write(dir.join("config.txt"), cfg.serialize())
        .map_err(|e| Error::from(e).in_stage("persist"))?;

    let mesh = build_mesh(cfg).map_err(|e| e.in_stage("generate"))?;
    let a = build_coeff(cfg, &mesh).map_err(|e| e.in_stage("generate"))?;
    let ell = validate_ellipticity(&a).map_err(|e| e.in_stage("generate"))?;
    write_coeff(&a, &dir.join("coeff.csv")).map_err(|e| e.in_stage("persist"))?;

    let t_min = Instant::now();
    let (r, sched, start_totals, best_start) =
        minimize_multistart(cfg, &a).map_err(|e| e.in_stage("minimize"))?;
    let minimize_seconds = t_min.elapsed().as_secs_f64();
    write_field(&r.u_star, &dir.join("u_star.csv")).map_err(|e| e.in_stage("persist"))?;
    write_history(&r.history, &dir.join("history.csv")).map_err(|e| e.in_stage("persist"))?;

    let p = sched.final_penalty();
    let mut mask = DomainMask::from_field(&r.u_star, p.smear_s);
    if mask.active_count() == 0 {
        return Err(Error::EmptyMask.in_stage("extract"));
    }
    if cfg.eigen.inflate {
        mask = inflate_to_volume(&mask, cfg.optimizer.target_volume)
            .map_err(|e| e.in_stage("inflate"))?;
    }
    write_field(&mask.to_field(), &dir.join("mask.csv")).map_err(|e| e.in_stage("persist"))?;

    let t_eig = Instant::now();
    let eig = lambda1(&mask, &a, cfg.eigen.tol).map_err(|e| e.in_stage("eigen"))?;
    let eigen_seconds = t_eig.elapsed().as_secs_f64();
    write_field(&eig.eigenfunction, &dir.join("eigenfunction.csv"))
        .map_err(|e| e.in_stage("persist"))?;

    let layer = boundary_layer_volume(&r.u_star, p.smear_s);
    let fv = r.final_value;
    let constraints = ConstraintReport {
        mass_residual: (fv.mass - 1.0).abs(),
        exact_volume: fv.exact_volume,
        smeared_volume: fv.smeared_volume,
        boundary_layer_volume: layer,
        volume_within_layer: fv.exact_volume <= p.target_volume + layer,
    };

    let t_diag = Instant::now();
    let (diagnostics, interior_fits, boundary_fits) = if cfg.diagnostics.enabled {
        let (summary, interior, boundary) =
            run_diagnostics(&r.u_star, &a, &p, &cfg.diagnostics, Some(dir))
                .map_err(|e| e.in_stage("diagnostics"))?;
        (Some(summary), interior, boundary)
    } else {
        (None, Vec::new(), Vec::new())
    };
    let diagnostics_seconds = t_diag.elapsed().as_secs_f64();

    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        box_sides: mesh.domain().side_lengths.clone(),
        box_volume: mesh.domain().volume(),
        coefficient_bounds: [ell.theta_observed, ell.big_theta_observed],
        lambda1: eig.lambda1,
        eigen: eig.summary(),
        mask_measure: mask.measure(),
        inflated: cfg.eigen.inflate,
        functional: fv,
        constraints,
        convergence: ConvergenceReport {
            converged: r.converged,
            stage_exits: r.stage_exits.clone(),
            iterations: r.iterations,
            restarts: r.restarts,
            start_totals,
            best_start,
        },
        shape: support_shape(&mask),
        diagnostics,
    };
    write_json(&report, &dir.join("report.json")).map_err(|e| e.in_stage("persist"))?;
    let timing = Timing {
        total_seconds: t0.elapsed().as_secs_f64(),
        minimize_seconds,
        eigen_seconds,
        diagnostics_seconds,
    };
    write_json(&timing, &dir.join("timing.json")).map_err(|e| e.in_stage("persist"))?;
    Ok(RunOutput {
        report,
        timing,
        dir: dir.to_path_buf(),
        minimizer: r,
        coeff: a,
        interior_fits,
        boundary_fits,
    })
}

/// Interior Hölder scan, boundary growth, Caccioppoli scan, equivalence and
/// rescaling checks for a field `u` whose support is read at `p.smear_s`.
/// With `dir` set, the per-point fits and free-boundary points are written
/// there as CSV.
pub fn run_diagnostics(
    u: &ScalarField,
    a: &CoeffField,
    p: &PenaltyParams,
    d: &DiagnosticsConfig,
    dir: Option<&Path>,
) -> Result<(DiagnosticsSummary, Vec<RegularityFit>, Vec<RegularityFit>)> {
    let dim = u.mesh().dim();
    let points = interior_sample_points(u, p.smear_s, d.spacing, d.r_max);
    let interior = holder_scan(u, &points, d.r_max, d.levels)?;
    let fb = extract_free_boundary(u, p.smear_s)?;
    let boundary = boundary_growth_fit(u, &fb, d.r_max, d.levels)?;
    if let Some(dir) = dir {
        write_fits(&interior, dim, &dir.join("holder_fits.csv"))?;
        write_fits(&boundary, dim, &dir.join("boundary_fits.csv"))?;
        write_points(&fb.points, dim, &dir.join("free_boundary.csv"))?;
    }
    let cacc = caccioppoli_scan(u, d.caccioppoli_samples, d.caccioppoli_r0, 2, d.seed)?;
    let summary = DiagnosticsSummary {
        interior: exponent_stats(&interior),
        boundary: exponent_stats(&boundary),
        free_boundary_points: fb.points.len(),
        caccioppoli_max_ratio: cacc.max_ratio,
        caccioppoli_max_growth: cacc.max_growth,
        equivalence: equivalence_check(u, a, p)?,
        rescaling: rescaling_probe(u, a, p)?,
    };
    Ok((summary, interior, boundary))
}

/// Rescaling identity centered at the vertex where `u` peaks, with a
/// grid-aligned radius of eight cells.
fn rescaling_probe(
    u: &ScalarField,
    a: &CoeffField,
    p: &PenaltyParams,
) -> Result<Option<RescalingCheck>> {
    let mesh = u.mesh();
    let dim = mesh.dim();
    let Some(v) = (0..mesh.vertex_count()).max_by(|x, y| u.values()[*x].total_cmp(&u.values()[*y]))
    else {
        return Ok(None);
    };
    let x0 = mesh.vertex_position(v)[..dim].to_vec();
    let r = 8.0 * mesh.h_min();
    if mesh.domain().distance_to_boundary(&x0) <= r {
        return Ok(None);
    }
    let rp = RescaleParams::new(&x0, 1.0, r, 0.0);
    let res = rp.aligned_resolution(mesh);
    Ok(Some(verify_rescaling_identity(
        u,
        a,
        p,
        &rp,
        res,
        VolumeMode::Support,
    )?))
}
