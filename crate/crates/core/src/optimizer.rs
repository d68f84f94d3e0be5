//! Projected gradient descent on the penalized functional with continuation in
//! `(ε, s)`.
//!
//! Each step moves along the lumped-mass preconditioned negative gradient,
//! truncates to the nonnegative cone and renormalizes to unit mass. Steps are
//! accepted by the projected Armijo rule
//! `F(u⁺) ≤ F(u) − (c/τ)‖u⁺ − u‖²_w`, so accepted totals never increase.
//!
//! When a trial point overshoots the volume target, a second candidate is
//! formed by lowering the smear band `{u < s}` until the smeared volume meets
//! the target (see [`band_shift`]). The candidate with the lower total is
//! tested against the same Armijo threshold.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::mass;
use crate::coeff::CoeffField;
use crate::error::{Error, Result};
use crate::functional::{descent_direction, evaluate, FunctionalValue, PenaltyParams};
use crate::mesh::{Mesh, ScalarField};

/// Smallest step tried before a stage is declared stalled.
const MIN_STEP_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub delta: f64,
    pub epsilon_sequence: Vec<f64>,
    pub smear_sequence: Vec<f64>,
    pub max_inner: usize,
    pub tol_rel: f64,
    /// Iterations over which the relative decrease is measured.
    pub window: usize,
    /// `None` uses `h_min²/Θ`.
    pub step_init: Option<f64>,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub target_volume: f64,
}

impl Schedule {
    /// `stages` geometric stages starting at `(epsilon0, smear0)`, each shrunk by `factor`.
    pub fn geometric(delta: f64, epsilon0: f64, smear0: f64, stages: usize, factor: f64) -> Self {
        let seq = |x0: f64| (0..stages).map(|k| x0 * factor.powi(k as i32)).collect();
        Self {
            delta,
            epsilon_sequence: seq(epsilon0),
            smear_sequence: seq(smear0),
            max_inner: 4000,
            tol_rel: 1e-7,
            window: 25,
            step_init: None,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            target_volume: 1.0,
        }
    }

    pub fn stages(&self) -> usize {
        self.epsilon_sequence.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_sequence.is_empty() {
            return Err(Error::param(
                "epsilon_sequence",
                "at least one stage required",
            ));
        }
        if self.epsilon_sequence.len() != self.smear_sequence.len() {
            return Err(Error::param(
                "smear_sequence",
                "must have as many entries as epsilon_sequence",
            ));
        }
        for (name, seq) in [
            ("epsilon_sequence", &self.epsilon_sequence),
            ("smear_sequence", &self.smear_sequence),
        ] {
            if seq.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::param(name, "entries must be positive"));
            }
            if seq.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::param(name, "entries must be nonincreasing"));
            }
        }
        let positive: [(&'static str, f64); 3] = [
            ("delta", self.delta),
            ("tol_rel", self.tol_rel),
            ("target_volume", self.target_volume),
        ];
        for (name, x) in positive {
            if !(x > 0.0) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        for (name, x) in [
            ("backtrack_factor", self.backtrack_factor),
            ("armijo_c", self.armijo_c),
        ] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::param(name, "must lie in (0, 1)"));
            }
        }
        if let Some(s) = self.step_init {
            if !(s > 0.0) {
                return Err(Error::param("step_init", "must be positive"));
            }
        }
        if self.max_inner == 0 || self.window == 0 {
            return Err(Error::param(
                "max_inner",
                "max_inner and window must be positive",
            ));
        }
        Ok(())
    }

    pub fn penalty(&self, stage: usize) -> PenaltyParams {
        PenaltyParams {
            delta: self.delta,
            epsilon: self.epsilon_sequence[stage],
            smear_s: self.smear_sequence[stage],
            target_volume: self.target_volume,
            target_mass: 1.0,
        }
    }

    pub fn final_penalty(&self) -> PenaltyParams {
        self.penalty(self.stages() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub stage: usize,
    pub iter: usize,
    pub total: f64,
    pub dirichlet: f64,
    pub mass_penalty: f64,
    pub volume_penalty: f64,
    pub smeared_volume: f64,
    pub exact_volume: f64,
    pub step: f64,
}

impl HistoryRow {
    fn new(stage: usize, iter: usize, f: &FunctionalValue, step: f64) -> Self {
        Self {
            stage,
            iter,
            total: f.total,
            dirichlet: f.dirichlet,
            mass_penalty: f.mass_penalty,
            volume_penalty: f.volume_penalty,
            smeared_volume: f.smeared_volume,
            exact_volume: f.exact_volume,
            step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageExit {
    /// Relative decrease over the window fell below `tol_rel`.
    Converged,
    /// No step satisfied the Armijo rule: projected stationarity at mesh precision.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct MinimizerResult {
    pub u_star: ScalarField,
    pub history: Vec<HistoryRow>,
    pub stage_exits: Vec<StageExit>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub final_value: FunctionalValue,
}

/// `max(u, 0) / ‖max(u, 0)‖_{L²}` with zero trace.
pub fn project(u: &ScalarField) -> Result<ScalarField> {
    let mut v = u.with_values(u.values().iter().map(|x| x.max(0.0)).collect())?;
    v.zero_trace();
    let m = mass(&v);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::DegenerateState);
    }
    let k = 1.0 / m.sqrt();
    v.values_mut().iter_mut().for_each(|x| *x *= k);
    Ok(v)
}

/// Projected paraboloid bump `(1 − |x−c|²/R²)₊` whose support has the given
/// measure, centered in the box.
pub fn initial_state(mesh: &Arc<Mesh>, volume: f64) -> Result<ScalarField> {
    initial_state_at(mesh, volume, &mesh.domain().center())
}

/// As [`initial_state`], centered at `center`.
pub fn initial_state_at(mesh: &Arc<Mesh>, volume: f64, center: &[f64]) -> Result<ScalarField> {
    let dim = mesh.dim();
    let unit_ball = match dim {
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    };
    let radius = (volume / unit_ball).powf(1.0 / dim as f64);
    if center.len() != dim || mesh.domain().distance_to_boundary(center) <= radius {
        return Err(Error::BallOutsideBox {
            center: center.to_vec(),
            radius,
        });
    }
    let u = ScalarField::from_fn(mesh, |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
        (1.0 - r2 / (radius * radius)).max(0.0)
    });
    project(&u)
}

fn weighted_sq_dist(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum()
}

/// Lowers only the vertices in the smear band `{u < s}`: `(u − t[u < s])₊`,
/// renormalized, with the smallest `t` for which the smeared volume drops to
/// `target`. `None` when no such level exists.
pub fn band_shift(u: &ScalarField, smear_s: f64, target: f64) -> Result<Option<ScalarField>> {
    let band: Vec<f64> = u
        .values()
        .iter()
        .map(|x| if *x < smear_s { 1.0 } else { 0.0 })
        .collect();
    shift_to_volume(u, &band, smear_s, target)
}

fn shift_to_volume(
    u: &ScalarField,
    shape: &[f64],
    smear_s: f64,
    target: f64,
) -> Result<Option<ScalarField>> {
    let mesh = u.mesh();
    let k = mesh.corners_per_cell();
    let support_cells: Vec<usize> = (0..mesh.cell_count())
        .filter(|c| {
            mesh.cell_vertices(*c)[..k]
                .iter()
                .any(|v| u.values()[*v] > 0.0)
        })
        .collect();
    let em = crate::assembly::ElementMatrices::new(mesh);
    let me = em.mass();
    let weights = mesh.vertex_weights();
    let shifted = |t: f64, v: usize| (u.values()[v] - t * shape[v]).max(0.0);
    let shifted_volume = |t: f64| -> f64 {
        let mut m = 0.0;
        for c in &support_cells {
            let verts = mesh.cell_vertices(*c);
            let mut x = [0.0; crate::mesh::MAX_CORNERS];
            for a in 0..k {
                x[a] = shifted(t, verts[a]);
            }
            for p in 0..k {
                let mut row = 0.0;
                for q in 0..k {
                    row += me[p][q] * x[q];
                }
                m += x[p] * row;
            }
        }
        if !(m > 0.0) {
            return 0.0;
        }
        let scale = 1.0 / m.sqrt();
        (0..weights.len())
            .map(|v| weights[v] * (shifted(t, v) * scale / smear_s).min(1.0))
            .sum()
    };
    let top = u.max();
    let (mut lo, mut hi) = (0.0, top);
    if !(top > 0.0) || shifted_volume(lo) <= target || shifted_volume(hi) > target {
        return Ok(None);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shifted_volume(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cut = u.with_values((0..shape.len()).map(|v| shifted(hi, v)).collect())?;
    match project(&cut) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateState) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs every continuation stage, warm-starting each from the previous one.
pub fn minimize(a: &CoeffField, sched: &Schedule, u0: &ScalarField) -> Result<MinimizerResult> {
    sched.validate()?;
    if !u0.same_mesh(a.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let mesh = Arc::clone(a.mesh());
    let weights = mesh.vertex_weights();
    let mut restarts = 0;
    let mut u = match project(u0) {
        Ok(u) => u,
        Err(Error::DegenerateState) => {
            restarts += 1;
            initial_state(&mesh, 0.9 * sched.target_volume)?
        }
        Err(e) => return Err(e),
    };
    let step0 = sched
        .step_init
        .unwrap_or(mesh.h_min().powi(2) / a.big_theta());
    let min_step = step0 * MIN_STEP_RATIO;
    let mut step = step0;
    let mut history = Vec::new();
    let mut stage_exits = Vec::with_capacity(sched.stages());
    let mut iterations = 0;
    let mut value = evaluate(&u, a, &sched.penalty(0))?;

    for stage in 0..sched.stages() {
        let p = sched.penalty(stage);
        value = evaluate(&u, a, &p)?;
        history.push(HistoryRow::new(stage, 0, &value, 0.0));
        let mut totals = vec![value.total];
        let mut exit = StageExit::MaxIterations;
        let mut stage_restarted = false;

        for iter in 1..=sched.max_inner {
            let g = descent_direction(&u, a, &p)?;
            let dir: Vec<f64> = g
                .values()
                .iter()
                .zip(weights)
                .map(|(g, w)| -g / w)
                .collect();
            let mut accepted = None;
            while step >= min_step {
                let trial_raw: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(&dir)
                    .map(|(x, d)| x + step * d)
                    .collect();
                let plain = match project(&u.with_values(trial_raw)?) {
                    Ok(t) => t,
                    Err(Error::DegenerateState) => {
                        step *= sched.backtrack_factor;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let required =
                    sched.armijo_c / step * weighted_sq_dist(plain.values(), u.values(), weights);
                let f_plain = evaluate(&plain, a, &p)?;
                let mut best = (plain, f_plain);
                if f_plain.smeared_volume > p.target_volume {
                    if let Some(cut) = band_shift(&best.0, p.smear_s, p.target_volume)? {
                        let f_cut = evaluate(&cut, a, &p)?;
                        if f_cut.total < best.1.total {
                            best = (cut, f_cut);
                        }
                    }
                }
                if best.1.total <= value.total - required {
                    accepted = Some(best);
                    break;
                }
                step *= sched.backtrack_factor;
            }
            let Some((trial, ft)) = accepted else {
                if !stage_restarted && value.total.is_nan() {
                    stage_restarted = true;
                    restarts += 1;
                    u = initial_state(&mesh, 0.9 * sched.target_volume)?;
                    value = evaluate(&u, a, &p)?;
                    step = step0;
                    continue;
                }
                exit = StageExit::Stalled;
                step = step0;
                break;
            };
            u = trial;
            value = ft;
            iterations += 1;
            history.push(HistoryRow::new(stage, iter, &value, step));
            totals.push(value.total);
            step /= sched.backtrack_factor;

            if totals.len() > sched.window {
                let old = totals[totals.len() - 1 - sched.window];
                let rel = (old - value.total) / value.total.abs().max(f64::MIN_POSITIVE);
                if rel < sched.tol_rel {
                    exit = StageExit::Converged;
                    break;
                }
            }
        }
        stage_exits.push(exit);
    }
    let converged = stage_exits
        .last()
        .map(|e| *e != StageExit::MaxIterations)
        .unwrap_or(false);
    Ok(MinimizerResult {
        u_star: u,
        history,
        stage_exits,
        converged,
        iterations,
        restarts,
        final_value: value,
    })
}
