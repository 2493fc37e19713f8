//! The three convergence experiments: harmonic mesh motion on the disk and
//! the ball, and diffusion on a growing rotating disk.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{aggregate_time_errors, error_vs_exact, matrix_norm, Eoc, ErrorRow, ErrorTable};
use crate::assembly::assemble_mass_stiffness;
use crate::error::{FemError, Result};
use crate::evolution::{advance, rk4_reference_positions, startup, step_count, BdfHistory, DiffusionData};
use crate::harmonic::{solve_harmonic_extension, trace_boundary_velocity, BoundaryVelocityField};
use crate::mesh::{generate_ball_mesh, generate_disk_mesh, mesh_size, MeshTopology, NodalVector};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Ex1,
    Ex2,
    Ex3,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2 => "ex2",
            Self::Ex3 => "ex3",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Ex2 => 3,
            _ => 2,
        }
    }
}

impl FromStr for ExperimentId {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(Self::Ex1),
            "ex2" => Ok(Self::Ex2),
            "ex3" => Ok(Self::Ex3),
            other => Err(FemError::Invalid(format!("unknown experiment '{other}'"))),
        }
    }
}

pub const DISK_TARGETS: [f64; 6] = [0.35, 0.26, 0.18, 0.13, 0.10, 0.074];
pub const BALL_TARGETS: [f64; 5] = [0.73, 0.62, 0.55, 0.49, 0.43];

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub degree: usize,
    pub h_targets: Vec<f64>,
    pub tau: f64,
    /// RK4 step for the reference positions; unused by ex3.
    pub tau_ref: Option<f64>,
    pub t_end: f64,
    pub beta: f64,
    pub bdf: usize,
    pub seed: u64,
    pub workers: usize,
    /// Replaces the boundary velocity by zero.
    pub stationary: bool,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentId) -> Self {
        let (h_targets, tau, tau_ref, t_end) = match experiment {
            ExperimentId::Ex1 => (DISK_TARGETS.to_vec(), 8e-3, Some(2e-4), 1.0),
            ExperimentId::Ex2 => (BALL_TARGETS.to_vec(), 1e-3, Some(1e-6), 0.1),
            ExperimentId::Ex3 => (DISK_TARGETS.to_vec(), 1e-3, None, 1.0),
        };
        Self {
            experiment,
            degree: 2,
            h_targets,
            tau,
            tau_ref,
            t_end,
            beta: 1.0,
            bdf: 4,
            seed: 0,
            workers: 1,
            stationary: false,
        }
    }

    /// Keeps the first `levels` refinement targets.
    pub fn with_levels(mut self, levels: usize) -> Result<Self> {
        if levels == 0 || levels > self.h_targets.len() {
            return Err(FemError::Invalid(format!(
                "levels must be in 1..={}, got {levels}",
                self.h_targets.len()
            )));
        }
        self.h_targets.truncate(levels);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(FemError::UnsupportedElement {
                dim: self.experiment.dim(),
                degree: self.degree,
            });
        }
        if !(1..=4).contains(&self.bdf) {
            return Err(FemError::BdfOrder(self.bdf));
        }
        if self.h_targets.is_empty() {
            return Err(FemError::Invalid("no refinement levels".into()));
        }
        let steps = step_count(self.tau, self.t_end)?;
        if steps < self.bdf {
            return Err(FemError::Invalid("fewer time steps than BDF startup values".into()));
        }
        if self.experiment != ExperimentId::Ex3 {
            let tr = self
                .tau_ref
                .ok_or_else(|| FemError::Invalid("reference step required".into()))?;
            stride(self.tau, tr)?;
        }
        if self.workers == 0 {
            return Err(FemError::Invalid("workers must be positive".into()));
        }
        Ok(())
    }

    /// Applies flat `key = value` settings; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FemError::Invalid(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| FemError::Invalid(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| FemError::Invalid(format!("invalid value '{v}' for {key}")))
        }
        match key {
            "experiment" => {
                let id: ExperimentId = value.parse()?;
                if id != self.experiment {
                    *self = Self::defaults(id);
                }
            }
            "degree" => self.degree = num(key, value)?,
            "levels" => {
                let l: usize = num(key, value)?;
                let all = match self.experiment.dim() {
                    3 => BALL_TARGETS.to_vec(),
                    _ => DISK_TARGETS.to_vec(),
                };
                self.h_targets = all;
                *self = self.clone().with_levels(l)?;
            }
            "h_targets" => {
                self.h_targets = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "tau" => self.tau = num(key, value)?,
            "tau_ref" => self.tau_ref = Some(num(key, value)?),
            "t_end" => self.t_end = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "bdf" => self.bdf = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "stationary" => self.stationary = num(key, value)?,
            other => return Err(FemError::Invalid(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

fn stride(tau: f64, tau_ref: f64) -> Result<usize> {
    let s = (tau / tau_ref).round();
    if s < 1.0 || (s * tau_ref - tau).abs() > 1e-9 * tau {
        return Err(FemError::Invalid(format!(
            "reference step {tau_ref} must divide the step {tau}"
        )));
    }
    Ok(s as usize)
}

/// Velocity of experiment 1 (harmonic in the disk).
pub fn ex1_velocity() -> BoundaryVelocityField {
    BoundaryVelocityField::new(2, |p, t| {
        let (x, y) = (p[0], p[1]);
        [
            (-2.0 * t).exp() * (x.exp() * y.sin() - y.exp() * x.sin()),
            2.0 * (-5.0 * t).exp() * (x * x - y * y),
            0.0,
        ]
    })
}

/// Velocity of experiment 2 (harmonic in the ball).
pub fn ex2_velocity() -> BoundaryVelocityField {
    BoundaryVelocityField::new(3, |p, t| {
        let (x, y, z) = (p[0], p[1], p[2]);
        let s = (-t / 10.0).sin();
        [
            s * (x * x - 2.0 * y * y + z * z),
            s * (y.exp() * z.sin() - z.exp() * y.sin()),
            (-5.0 * t).exp() * (x * x - z * z),
        ]
    })
}

/// Growth rate `1 - 1/r(t)` of experiment 3 with `r(t) = 2 / (1 + e^{-t})`.
fn ex3_growth(t: f64) -> f64 {
    0.5 * (1.0 - (-t).exp())
}

/// Velocity of experiment 3: radial growth plus rigid rotation.
pub fn ex3_velocity() -> BoundaryVelocityField {
    BoundaryVelocityField::new(2, |p, t| {
        let s = ex3_growth(t);
        [s * p[0] - p[1], s * p[1] + p[0], 0.0]
    })
}

/// Exact flow of the experiment-3 velocity: scaling by `e^{a(t)}` and
/// rotation by `t`, `a(t) = (t - 1 + e^{-t}) / 2`.
pub fn ex3_flow(p: &Point, t: f64) -> Point {
    let scale = (0.5 * (t - 1.0 + (-t).exp())).exp();
    let (s, c) = t.sin_cos();
    [scale * (c * p[0] - s * p[1]), scale * (s * p[0] + c * p[1]), 0.0]
}

pub fn ex3_solution(p: &Point, t: f64) -> f64 {
    let (x, y) = (p[0], p[1]);
    (-t).exp() * (x * x + y * y) * (x * x - y * y)
}

pub fn ex3_gradient(p: &Point, t: f64) -> Point {
    let (x, y) = (p[0], p[1]);
    let e = (-t).exp();
    [4.0 * e * x * x * x, -4.0 * e * y * y * y, 0.0]
}

/// Right-hand side `f = ∂•u + u ∇·v - β Δu` and Neumann datum
/// `g = ∇u · x/|x|` for experiment 3.
pub fn derive_ex3_data(beta: f64) -> DiffusionData {
    let f = move |p: &Point, t: f64| {
        let (x, y) = (p[0], p[1]);
        let e = (-t).exp();
        let s = ex3_growth(t);
        let u = ex3_solution(p, t);
        let transport = e * (4.0 * s * (x.powi(4) - y.powi(4)) - 4.0 * x * y * (x * x + y * y));
        let div_v = 2.0 * s;
        let lap = 12.0 * e * (x * x - y * y);
        -u + transport + u * div_v - beta * lap
    };
    let g = |p: &Point, t: f64| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let gu = ex3_gradient(p, t);
        (gu[0] * p[0] + gu[1] * p[1]) / r
    };
    DiffusionData {
        f: Arc::new(f),
        g: Arc::new(g),
        beta,
    }
}

/// Outcome of one refinement level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub h_target: f64,
    pub row: ErrorRow,
    pub n_nodes: usize,
    pub n_elements: usize,
    pub failure: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn generate_mesh(config: &ExperimentConfig, h: f64) -> Result<(MeshTopology, NodalVector)> {
    match config.experiment.dim() {
        3 => generate_ball_mesh(h, config.degree),
        _ => generate_disk_mesh(h, config.degree),
    }
}

fn field_for(config: &ExperimentConfig) -> BoundaryVelocityField {
    if config.stationary {
        return BoundaryVelocityField::zero(config.experiment.dim());
    }
    match config.experiment {
        ExperimentId::Ex1 => ex1_velocity(),
        ExperimentId::Ex2 => ex2_velocity(),
        ExperimentId::Ex3 => ex3_velocity(),
    }
}

fn interpolate_vector(field: &BoundaryVelocityField, x: &NodalVector, t: f64) -> NodalVector {
    let mut v = NodalVector::zeros(x.arity, x.n_nodes());
    for j in 0..x.n_nodes() {
        v.set_node(j, &field.eval(&x.node(j), t));
    }
    v
}

/// Nodal-difference norms `(‖e‖_M, ‖e‖_A)` on the reference geometry.
fn nodal_errors(
    m: &crate::assembly::SparseSymMatrix,
    a: &crate::assembly::SparseSymMatrix,
    approx: &NodalVector,
    exact: &NodalVector,
) -> Result<(f64, f64)> {
    let diff = approx.axpy(-1.0, exact);
    Ok((matrix_norm(&diff, m)?, matrix_norm(&diff, a)?))
}

fn run_motion_level(config: &ExperimentConfig, topo: &MeshTopology, x0: &NodalVector) -> Result<[Option<f64>; 6]> {
    let field = field_for(config);
    let exact = if config.stationary {
        BoundaryVelocityField::zero(topo.dim)
    } else {
        field.clone()
    };
    let tau_ref = config.tau_ref.expect("validated");
    let reference = rk4_reference_positions(topo, x0, &exact, tau_ref, config.t_end, stride(config.tau, tau_ref)?)?;
    let q = config.bdf;
    let mut history = BdfHistory::new(q, config.tau)?;
    startup(&mut history, topo, &reference.positions[..q], None)?;
    let mut x_series = Vec::with_capacity(reference.len());
    let mut v_series = Vec::with_capacity(reference.len());
    for n in 0..reference.len() {
        let t = reference.times[n];
        let xr = &reference.positions[n];
        let x = if n < q {
            xr.clone()
        } else {
            advance(&mut history, topo, &field, None)?.0
        };
        let vg = trace_boundary_velocity(&field, topo, &x, t)?;
        let v = solve_harmonic_extension(topo, &x, &vg)?;
        let (m, a) = assemble_mass_stiffness(topo, xr)?;
        x_series.push(nodal_errors(&m, &a, &x, xr)?);
        v_series.push(nodal_errors(&m, &a, &v, &interpolate_vector(&exact, xr, t))?);
    }
    let ex = aggregate_time_errors(&x_series, config.tau);
    let ev = aggregate_time_errors(&v_series, config.tau);
    Ok([
        Some(ex.linf_l2),
        Some(ex.linf_h1),
        Some(ev.linf_l2),
        Some(ev.linf_h1),
        None,
        None,
    ])
}

fn run_diffusion_level(config: &ExperimentConfig, topo: &MeshTopology, x0: &NodalVector) -> Result<[Option<f64>; 6]> {
    let field = field_for(config);
    let data = derive_ex3_data(config.beta);
    let steps = step_count(config.tau, config.t_end)?;
    let q = config.bdf;
    let exact_positions = |t: f64| -> NodalVector {
        if config.stationary {
            return x0.clone();
        }
        let mut x = x0.clone();
        for j in 0..x0.n_nodes() {
            x.set_node(j, &ex3_flow(&x0.node(j), t));
        }
        x
    };
    let interp =
        |x: &NodalVector, t: f64| NodalVector::scalar((0..x.n_nodes()).map(|j| ex3_solution(&x.node(j), t)).collect());
    let xs: Vec<NodalVector> = (0..q).map(|m| exact_positions(m as f64 * config.tau)).collect();
    let us: Vec<NodalVector> = xs
        .iter()
        .enumerate()
        .map(|(m, x)| interp(x, m as f64 * config.tau))
        .collect();
    let mut history = BdfHistory::new(q, config.tau)?;
    startup(&mut history, topo, &xs, Some(&us))?;
    let mut series = Vec::with_capacity(steps + 1);
    let grad: &dyn Fn(&Point, f64) -> Point = &ex3_gradient;
    for n in 0..=steps {
        let t = n as f64 * config.tau;
        let (x, u) = if n < q {
            (xs[n].clone(), us[n].clone())
        } else {
            let (x, _, u) = advance(&mut history, topo, &field, Some(&data))?;
            (x, u.expect("diffusion tracked"))
        };
        let (l2, semi) = error_vs_exact(topo, &x, &u, &ex3_solution, Some(grad), t)?;
        series.push((l2, (l2 * l2 + semi * semi).sqrt()));
    }
    let agg = aggregate_time_errors(&series, config.tau);
    Ok([None, None, None, None, Some(agg.linf_l2), Some(agg.l2_h1)])
}

/// Runs one refinement level; failures are reported in the result.
pub fn run_level(config: &ExperimentConfig, h_target: f64) -> LevelResult {
    let start = Instant::now();
    let mesh = generate_mesh(config, h_target);
    let (topo, x0) = match mesh {
        Ok(m) => m,
        Err(e) => {
            return LevelResult {
                h_target,
                row: ErrorRow {
                    h: h_target,
                    tau: config.tau,
                    errors: [None; 6],
                },
                n_nodes: 0,
                n_elements: 0,
                failure: Some(e.to_string()),
                wall_seconds: start.elapsed().as_secs_f64(),
            }
        }
    };
    let h = mesh_size(&topo, &x0);
    log::info!(
        "{} level h={h:.4} nodes={} elements={}",
        config.experiment.name(),
        topo.n_nodes,
        topo.n_elements()
    );
    let outcome = match config.experiment {
        ExperimentId::Ex3 => run_diffusion_level(config, &topo, &x0),
        _ => run_motion_level(config, &topo, &x0),
    };
    let (errors, failure) = match outcome {
        Ok(e) => (e, None),
        Err(e) => {
            log::error!("level h={h} failed: {e}");
            ([None; 6], Some(e.to_string()))
        }
    };
    LevelResult {
        h_target,
        row: ErrorRow {
            h,
            tau: config.tau,
            errors,
        },
        n_nodes: topo.n_nodes,
        n_elements: topo.n_elements(),
        failure,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Error table plus per-level metadata of a full run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelResult>,
    pub table: ErrorTable,
}

#[derive(Serialize)]
struct ColumnSlopes<'a> {
    column: &'a str,
    #[serde(flatten)]
    eoc: &'a Eoc,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    levels: &'a [LevelResult],
    slopes: Vec<ColumnSlopes<'a>>,
}

#[derive(Serialize)]
struct Timing<'a> {
    experiment: &'a str,
    h: Vec<f64>,
    wall_clock_seconds: Vec<f64>,
}

impl ExperimentResult {
    pub fn slopes(&self) -> Vec<(&'static str, Eoc)> {
        self.table.slopes()
    }

    /// Deterministic summary: config echo, per-level metadata, slopes.
    pub fn summary_json(&self) -> Result<String> {
        let slopes = self.slopes();
        let summary = Summary {
            experiment: self.config.experiment.name(),
            config: &self.config,
            levels: &self.levels,
            slopes: slopes.iter().map(|(c, e)| ColumnSlopes { column: c, eoc: e }).collect(),
        };
        Ok(serde_json::to_string_pretty(&summary)? + "\n")
    }

    pub fn timing_json(&self) -> Result<String> {
        let timing = Timing {
            experiment: self.config.experiment.name(),
            h: self.levels.iter().map(|l| l.row.h).collect(),
            wall_clock_seconds: self.levels.iter().map(|l| l.wall_seconds).collect(),
        };
        Ok(serde_json::to_string_pretty(&timing)? + "\n")
    }

    /// Writes `<out>` (CSV), `<out>.json` (summary) and `<out>.timing.json`.
    pub fn write(&self, out: &Path) -> Result<(PathBuf, PathBuf, PathBuf)> {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let json = out.with_extension("json");
        let timing = out.with_extension("timing.json");
        std::fs::write(out, self.table.to_csv())?;
        std::fs::write(&json, self.summary_json()?)?;
        std::fs::write(&timing, self.timing_json()?)?;
        Ok((out.to_path_buf(), json, timing))
    }
}

/// Runs all refinement levels, in parallel over `config.workers` threads,
/// and assembles the table in order of decreasing `h`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| FemError::Invalid(e.to_string()))?;
    let mut levels: Vec<LevelResult> =
        pool.install(|| config.h_targets.par_iter().map(|&h| run_level(config, h)).collect());
    levels.sort_by(|a, b| b.row.h.total_cmp(&a.row.h));
    let table = ErrorTable {
        rows: levels.iter().map(|l| l.row.clone()).collect(),
    };
    Ok(ExperimentResult {
        config: config.clone(),
        levels,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ex1_field_at_unit_point() {
        let v = ex1_velocity().eval(&[1.0, 0.0, 0.0], 0.0);
        assert!((v[0] + 1f64.sin()).abs() < 1e-15);
        assert!((v[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ex3_flow_solves_ode() {
        let field = ex3_velocity();
        let p = [0.3, -0.7, 0.0];
        for t in [0.0, 0.4, 0.9] {
            let h = 1e-6;
            let a = ex3_flow(&p, t + h);
            let b = ex3_flow(&p, t - h);
            let x = ex3_flow(&p, t);
            let v = field.eval(&x, t);
            for c in 0..2 {
                assert!(((a[c] - b[c]) / (2.0 * h) - v[c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ex3_divergence_and_neumann_values() {
        let field = ex3_velocity();
        let h = 1e-6;
        let div = (field.eval(&[h, 0.0, 0.0], 0.0)[0] - field.eval(&[-h, 0.0, 0.0], 0.0)[0]
            + field.eval(&[0.0, h, 0.0], 0.0)[1]
            - field.eval(&[0.0, -h, 0.0], 0.0)[1])
            / (2.0 * h);
        assert!(div.abs() < 1e-9);
        let data = derive_ex3_data(1.0);
        assert!(((data.g)(&[1.0, 0.0, 0.0], 0.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn ex3_residual_oracle() {
        let data = derive_ex3_data(1.0);
        let field = ex3_velocity();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let t = rng.gen_range(0.0..1.0);
            let r = rng.gen_range(0.0..1.0f64).sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = ex3_flow(&[r * th.cos(), r * th.sin(), 0.0], t);
            let u = |q: &Point, s: f64| ex3_solution(q, s);
            let v = field.eval(&p, t);
            let ut = (u(&p, t + h) - u(&p, t - h)) / (2.0 * h);
            let mut grad = [0.0; 2];
            let mut lap = 0.0;
            let mut div = 0.0;
            for d in 0..2 {
                let (mut a, mut b) = (p, p);
                a[d] += h;
                b[d] -= h;
                grad[d] = (u(&a, t) - u(&b, t)) / (2.0 * h);
                lap += (u(&a, t) - 2.0 * u(&p, t) + u(&b, t)) / (h * h);
                div += (field.eval(&a, t)[d] - field.eval(&b, t)[d]) / (2.0 * h);
            }
            let material = ut + v[0] * grad[0] + v[1] * grad[1];
            let residual = material + u(&p, t) * div - lap - (data.f)(&p, t);
            worst = worst.max(residual.abs());
        }
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn config_text_overrides() {
        let mut c = ExperimentConfig::defaults(ExperimentId::Ex1);
        c.apply_config_text("# comment\nexperiment = ex3\ndegree = 1\nlevels = 2\ntau = 0.002 # inline\n")
            .unwrap();
        assert_eq!(c.experiment, ExperimentId::Ex3);
        assert_eq!(c.degree, 1);
        assert_eq!(c.h_targets, vec![0.35, 0.26]);
        assert_eq!(c.tau, 0.002);
        assert!(c.apply_config_text("bogus = 1").is_err());
        assert!(c.apply_config_text("tau 1").is_err());
    }

    #[test]
    fn stationary_override_gives_solver_level_errors() {
        let mut c = ExperimentConfig::defaults(ExperimentId::Ex1).with_levels(1).unwrap();
        c.stationary = true;
        c.tau_ref = Some(c.tau);
        let r = run_experiment(&c).unwrap();
        for e in r.table.rows[0].errors.iter().flatten() {
            assert!(*e <= 1e-10, "{e}");
        }
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::defaults(ExperimentId::Ex1);
        c.tau_ref = Some(3e-3);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults(ExperimentId::Ex3);
        c.bdf = 5;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::defaults(ExperimentId::Ex2).with_levels(6).is_err());
    }
}
