//! Driving the flow system along a rough path: streaming joint solver, staged solvers
//! and the inverse flow.

use rayon::prelude::*;

use crate::coeffs::NoiseSpec;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::roughpath::{merge_times, Level2RoughPath};

use super::bundle::{BundleSlice, FlowBundle, MAX_LOG_SCALE};
use super::stepping::{log_ode_step, rde_step, DrivenFields, StepIncrement, Workspace};
use super::system::{FlowSystem, Layout, PositionSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMethod {
    /// RK4 on the log-ODE vector field of each increment.
    #[default]
    LogOde,
    /// Level-2 Taylor (Milstein-type) step.
    Milstein,
}

/// Step control for the flow solvers. A driver interval is split into `m` equal
/// portions with `dt / m <= max_step` and `|Δz| / m <= max_increment`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub method: FlowMethod,
    pub max_step: f64,
    pub max_increment: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            method: FlowMethod::LogOde,
            max_step: 1e-2,
            max_increment: 0.05,
        }
    }
}

impl FlowOptions {
    fn substeps(&self, inc: &StepIncrement) -> usize {
        let dz = inc.element.inc().iter().map(|v| v * v).sum::<f64>().sqrt();
        let area = inc.element.homogeneous_norm();
        let by_t = (inc.dt.abs() / self.max_step).ceil();
        let by_z = (dz.max(area) / self.max_increment).ceil();
        by_t.max(by_z).max(1.0) as usize
    }

    fn step<F: DrivenFields + ?Sized>(&self, f: &F, y: &mut [f64], inc: &StepIncrement, ws: &mut Workspace) {
        match self.method {
            FlowMethod::LogOde => log_ode_step(f, y, inc, ws),
            FlowMethod::Milstein => rde_step(f, y, inc, ws),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0) || !(self.max_increment > 0.0) {
            return Err(Error::invalid("flow step limits must be positive"));
        }
        Ok(())
    }
}

fn time_tol(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

/// Increments of `driver` over `[t0, t1]`, one per driver interval met (portions at the
/// ends), each split according to `opts`.
pub(crate) fn driver_pieces(
    driver: &Level2RoughPath,
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
) -> Result<Vec<StepIncrement>> {
    let times = driver.times();
    let horizon = driver.horizon();
    if t1 > horizon + time_tol(horizon) || t0 < times[0] - time_tol(times[0]) {
        return Err(Error::TimeOutOfRange { t: t1, horizon });
    }
    let mut out = Vec::new();
    for k in 0..driver.len() {
        let (a, b) = (times[k], times[k + 1]);
        let lo = a.max(t0);
        let hi = b.min(t1);
        if hi - lo <= time_tol(b) {
            continue;
        }
        let el = driver.element(k);
        let inc = if lo == a && hi == b {
            StepIncrement::new(b - a, el.clone())
        } else {
            StepIncrement::new(hi - lo, el.portion((hi - lo) / (b - a)))
        };
        let m = opts.substeps(&inc);
        out.extend(inc.split(m));
    }
    Ok(out)
}

fn check_dims(noise: &NoiseSpec, driver: &Level2RoughPath, grid: &Grid) -> Result<()> {
    if driver.dim() != noise.driver_dim() {
        return Err(Error::DimensionMismatch {
            expected: noise.driver_dim(),
            got: driver.dim(),
            context: "driver channels (d1 + d2 + d3)",
        });
    }
    if grid.dim() != noise.dim() {
        return Err(Error::DimensionMismatch {
            expected: noise.dim(),
            got: grid.dim(),
            context: "grid dimension",
        });
    }
    Ok(())
}

fn check_overflow(layout: &Layout, states: &[f64], t: f64) -> Result<()> {
    for (node, y) in states.chunks_exact(layout.len).enumerate() {
        let li = y[layout.log_scale];
        if !li.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, node });
        }
        if li.abs() > MAX_LOG_SCALE {
            return Err(Error::ScaleOverflow { t, node, log_scale: li });
        }
    }
    Ok(())
}

/// Joint flow state on every grid node, advanced forward in time on demand.
pub struct FlowStepper<'a> {
    system: FlowSystem,
    driver: &'a Level2RoughPath,
    opts: FlowOptions,
    grid: Grid,
    states: Vec<f64>,
    t: f64,
}

impl<'a> FlowStepper<'a> {
    pub fn new(noise: &NoiseSpec, driver: &'a Level2RoughPath, grid: &Grid, opts: FlowOptions) -> Result<Self> {
        check_dims(noise, driver, grid)?;
        opts.validate()?;
        let system = FlowSystem::new(noise.clone());
        let layout = *system.layout();
        let t0 = driver.times()[0];
        let mut states = vec![0.0; grid.len() * layout.len];
        let mut x = vec![0.0; grid.dim()];
        for (i, y) in states.chunks_exact_mut(layout.len).enumerate() {
            grid.point(i, &mut x);
            layout.initial(t0, &x, y);
        }
        Ok(Self {
            system,
            driver,
            opts,
            grid: grid.clone(),
            states,
            t: t0,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn layout(&self) -> &Layout {
        self.system.layout()
    }

    pub fn noise(&self) -> &NoiseSpec {
        self.system.noise()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn driver(&self) -> &'a Level2RoughPath {
        self.driver
    }

    /// Raw states, `grid.len() x layout.len`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        if target < self.t - time_tol(self.t) {
            return Err(Error::invalid("flow stepper cannot move backwards in time"));
        }
        if target <= self.t {
            return Ok(());
        }
        let pieces = driver_pieces(self.driver, self.t, target, &self.opts)?;
        let s = self.system.layout().len;
        let system = &self.system;
        let opts = &self.opts;
        self.states
            .par_chunks_mut(s)
            .for_each_init(|| Workspace::new(s), |ws, y| {
                for inc in &pieces {
                    opts.step(system, y, inc, ws);
                }
            });
        self.t = target;
        check_overflow(self.system.layout(), &self.states, target)
    }

    /// Derived data at the current time.
    pub fn slice(&self) -> Result<BundleSlice> {
        BundleSlice::from_states(self.t, self.system.layout(), &self.states)
    }

    /// `ψ_t^{-1}` at the grid nodes for the current time.
    pub fn inverse_on_grid(&self) -> Result<Vec<f64>> {
        let pts: Vec<f64> = (0..self.grid.len()).flat_map(|i| self.grid.point_vec(i)).collect();
        inverse_flow(self.system.noise(), self.driver, self.t, &pts, &self.opts)
    }
}

/// `ψ_t^{-1}(y)` for the flattened points `y`, by integrating the characteristic
/// equation backwards along the reversed increments.
pub fn inverse_flow(
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    t: f64,
    points: &[f64],
    opts: &FlowOptions,
) -> Result<Vec<f64>> {
    let n = noise.dim();
    if points.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: points.len() % n,
            context: "flattened points",
        });
    }
    opts.validate()?;
    let t0 = driver.times()[0];
    let pieces: Vec<StepIncrement> = driver_pieces(driver, t0, t, opts)?
        .iter()
        .rev()
        .map(StepIncrement::inverse)
        .collect();
    let sys = PositionSystem::new(noise);
    let mut out = vec![0.0; points.len()];
    out.par_chunks_mut(n)
        .zip(points.par_chunks(n))
        .for_each_init(
            || (Workspace::new(n + 1), vec![0.0; n + 1]),
            |(ws, y), (o, p)| {
                y[0] = t;
                y[1..].copy_from_slice(p);
                for inc in &pieces {
                    opts.step(&sys, y, inc, ws);
                }
                o.copy_from_slice(&y[1..]);
            },
        );
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t, node: 0 });
    }
    Ok(out)
}

fn check_output_times(times: &[f64], driver: &Level2RoughPath) -> Result<()> {
    let t0 = driver.times()[0];
    let horizon = driver.horizon();
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("output times must increase strictly"));
        }
    }
    for &t in times {
        if t < t0 - time_tol(t0) || t > horizon + time_tol(horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
    }
    Ok(())
}

/// Joint solve of the flow, scale and shift equations (with first and second spatial
/// derivatives) on every grid node; slices are taken at `times`.
pub fn solve_joint_rde(
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    grid: &Grid,
    times: &[f64],
    opts: &FlowOptions,
    with_inverse: bool,
) -> Result<FlowBundle> {
    check_output_times(times, driver)?;
    let mut stepper = FlowStepper::new(noise, driver, grid, *opts)?;
    let mut slices = Vec::with_capacity(times.len());
    for &t in times {
        stepper.advance_to(t)?;
        let mut s = stepper.slice()?;
        if with_inverse {
            s.psi_inv = Some(stepper.inverse_on_grid()?);
        }
        slices.push(s);
    }
    Ok(FlowBundle {
        grid: grid.clone(),
        slices,
    })
}

/// Full per-node states at every node of a time partition, filled block by block by the
/// staged solvers.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub layout: Layout,
    pub grid: Grid,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl FlowTrajectory {
    fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= time_tol(t))
            .ok_or(Error::TimeOutOfRange {
                t,
                horizon: *self.times.last().unwrap_or(&0.0),
            })
    }

    pub fn slice_at(&self, t: f64) -> Result<BundleSlice> {
        let k = self.index_of(t)?;
        BundleSlice::from_states(self.times[k], &self.layout, &self.states[k])
    }

    pub fn bundle(&self, times: &[f64]) -> Result<FlowBundle> {
        Ok(FlowBundle {
            grid: self.grid.clone(),
            slices: times.iter().map(|&t| self.slice_at(t)).collect::<Result<_>>()?,
        })
    }
}

fn zero_fields(count: usize, n: usize) -> Vec<ScalarField> {
    (0..count).map(|_| ScalarField::constant(0.0, n)).collect()
}

/// Characteristic flow alone (`ψ`, `Dψ`, `D²ψ`), stored on the driver nodes, the output
/// `times` and the substep nodes required by `opts`.
pub fn solve_inner_flow(
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    grid: &Grid,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    check_dims(noise, driver, grid)?;
    check_output_times(times, driver)?;
    opts.validate()?;
    let n = noise.dim();
    let inner = NoiseSpec::new(
        n,
        noise.sigma().to_vec(),
        zero_fields(noise.d2(), n),
        zero_fields(noise.d3(), n),
    )?;
    let dt = driver.times();
    let mut nodes = Vec::new();
    for k in 0..driver.len() {
        let inc = StepIncrement::new(dt[k + 1] - dt[k], driver.element(k).clone());
        let m = opts.substeps(&inc);
        for j in 0..m {
            nodes.push(dt[k] + (dt[k + 1] - dt[k]) * j as f64 / m as f64);
        }
    }
    nodes.push(driver.horizon());
    let nodes = merge_times(&nodes, times);
    // each node gap lies inside one driver interval and needs no further splitting
    let single = FlowOptions {
        max_step: f64::INFINITY,
        max_increment: f64::INFINITY,
        ..*opts
    };
    let mut stepper = FlowStepper::new(&inner, driver, grid, single)?;
    let mut states = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        stepper.advance_to(t)?;
        states.push(stepper.states().to_vec());
    }
    Ok(FlowTrajectory {
        layout: *stepper.layout(),
        grid: grid.clone(),
        times: nodes,
        states,
    })
}

/// Integrates the block `unknown` driven by channels `unknown_ch` along a trajectory
/// whose block `0..unknown.start` (driven by channels `0..unknown_ch.start`) is already
/// known. The known block is interpolated by cubic Hermite polynomials on each segment;
/// the unknown block takes classical RK4 steps in time.
fn staged_pass(
    traj: &mut FlowTrajectory,
    system: &FlowSystem,
    driver: &Level2RoughPath,
    unknown: std::ops::Range<usize>,
    unknown_ch: std::ops::Range<usize>,
) -> Result<()> {
    let s = traj.layout.len;
    let known_end = unknown.start;
    let dtimes = driver.times();
    let mut k = 0usize;
    for seg in 0..traj.times.len() - 1 {
        let (t0, t1) = (traj.times[seg], traj.times[seg + 1]);
        let h = t1 - t0;
        while k + 1 < driver.len() && dtimes[k + 1] <= t0 + time_tol(t0) {
            k += 1;
        }
        let el = driver.element(k);
        let width = dtimes[k + 1] - dtimes[k];
        let scale_norm = el.inc().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if !el.is_area_free(1e-14 * scale_norm * scale_norm) {
            return Err(Error::AreaInStagedSolver { t0, t1 });
        }
        let mut slope = vec![1.0];
        slope.extend(el.inc().iter().map(|v| v / width));
        let (head, tail) = traj.states.split_at_mut(seg + 1);
        let y0s = &head[seg];
        let y1s = &mut tail[0];
        let known_ch = 0..unknown_ch.start;
        y1s.par_chunks_mut(s)
            .zip(y0s.par_chunks(s))
            .for_each_init(
                || (vec![0.0; s], vec![0.0; s], vec![0.0; s], vec![0.0; s], vec![0.0; s]),
                |(f0, f1, tmp, stage, kk), (y1, y0)| {
                    let field = |chs: std::ops::Range<usize>, y: &[f64], out: &mut [f64], tmp: &mut [f64]| {
                        out.fill(0.0);
                        for c in chs {
                            if slope[c] == 0.0 || !system.is_active(c) {
                                continue;
                            }
                            system.eval(c, y, tmp);
                            for (o, v) in out.iter_mut().zip(tmp.iter()) {
                                *o += slope[c] * v;
                            }
                        }
                    };
                    field(known_ch.clone(), y0, f0, tmp);
                    field(known_ch.clone(), y1, f1, tmp);
                    // known block at the midpoint
                    let mut mid = y0.to_vec();
                    for i in 0..known_end {
                        mid[i] = 0.5 * (y0[i] + y1[i]) + h * (f0[i] - f1[i]) / 8.0;
                    }
                    let mut end = y1.to_vec();
                    let u = unknown.clone();
                    let mut acc = vec![0.0; u.len()];
                    // k1 at y0
                    field(unknown_ch.clone(), y0, kk, tmp);
                    for (a, i) in acc.iter_mut().zip(u.clone()) {
                        *a += kk[i] / 6.0;
                    }
                    stage.copy_from_slice(&mid);
                    for i in u.clone() {
                        stage[i] = y0[i] + 0.5 * h * kk[i];
                    }
                    field(unknown_ch.clone(), stage, kk, tmp);
                    for (a, i) in acc.iter_mut().zip(u.clone()) {
                        *a += kk[i] / 3.0;
                    }
                    for i in u.clone() {
                        stage[i] = y0[i] + 0.5 * h * kk[i];
                    }
                    field(unknown_ch.clone(), stage, kk, tmp);
                    for (a, i) in acc.iter_mut().zip(u.clone()) {
                        *a += kk[i] / 3.0;
                    }
                    for i in u.clone() {
                        end[i] = y0[i] + h * kk[i];
                    }
                    field(unknown_ch.clone(), &end, kk, tmp);
                    for (a, i) in acc.iter_mut().zip(u.clone()) {
                        *a += kk[i] / 6.0;
                    }
                    for (a, i) in acc.iter().zip(u) {
                        y1[i] = y0[i] + h * a;
                    }
                },
            );
    }
    Ok(())
}

/// Fills the log-scale block `I, DI, D²I` of a trajectory produced by
/// [`solve_inner_flow`], driven by the `ν` channels.
pub fn solve_scale(traj: &mut FlowTrajectory, noise: &NoiseSpec, driver: &Level2RoughPath) -> Result<()> {
    check_dims(noise, driver, &traj.grid)?;
    let system = FlowSystem::new(noise.clone());
    let l = traj.layout;
    let c0 = 1 + noise.d1();
    staged_pass(traj, &system, driver, l.log_scale..l.scale_end(), c0..c0 + noise.d2())?;
    for (st, &t) in traj.states.iter().zip(&traj.times) {
        check_overflow(&l, st, t)?;
    }
    Ok(())
}

/// Fills the shift block `θ, Dθ, D²θ` after [`solve_scale`], driven by the `g` channels.
pub fn solve_shift(traj: &mut FlowTrajectory, noise: &NoiseSpec, driver: &Level2RoughPath) -> Result<()> {
    check_dims(noise, driver, &traj.grid)?;
    let system = FlowSystem::new(noise.clone());
    let l = traj.layout;
    let c0 = 1 + noise.d1() + noise.d2();
    staged_pass(traj, &system, driver, l.theta..l.len, c0..c0 + noise.d3())
}

/// Inner flow, scale and shift in three stages.
pub fn solve_staged(
    noise: &NoiseSpec,
    driver: &Level2RoughPath,
    grid: &Grid,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<FlowBundle> {
    let mut traj = solve_inner_flow(noise, driver, grid, times, opts)?;
    solve_scale(&mut traj, noise, driver)?;
    solve_shift(&mut traj, noise, driver)?;
    traj.bundle(times)
}
