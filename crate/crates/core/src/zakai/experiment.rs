//! Stability, wrong-limit, contraction and oracle experiments on filtering models.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::FlowOptions;
use crate::grid::Grid;
use crate::pdesolve::{contraction_check, ContractionReport, SolverConfig};
use crate::roughpath::{oscillator_path, SampledPath};

use super::filter::{prior_on_grid, robust_filter_with, FilterOutput};
use super::model::{build_zakai_operators, FilteringModel, ZakaiOperators};
use super::particle::{particle_filter_oracle, DegeneracyEvent, ParticleConfig};
use super::simulate::simulate_signal_observation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    Gyongy,
    Contraction,
    OracleCompare,
}

/// Experiment settings, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Dyadic ladder: the observation is sampled with mesh `2^-level`.
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    /// The observation is simulated once with mesh `2^-fine_level` and subsampled.
    #[serde(default = "default_fine_level")]
    pub fine_level: u32,
    /// Grid spec `lo:hi:n[,lo:hi:n]`.
    #[serde(default = "default_grid")]
    pub grid: String,
    /// Nominal PDE time step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Oscillator indices for the wrong-limit experiment.
    #[serde(default = "default_oscillators")]
    pub oscillators: Vec<u32>,
    /// Rates `C` of the `+C u dt` term for the contraction experiment.
    #[serde(default = "default_growth")]
    pub growth: Vec<f64>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_levels() -> Vec<u32> {
    vec![6, 7, 8, 9]
}
fn default_fine_level() -> u32 {
    12
}
fn default_grid() -> String {
    "-16:16:641".into()
}
fn default_dt() -> f64 {
    1e-3
}
fn default_oscillators() -> Vec<u32> {
    vec![8, 16, 32]
}
fn default_growth() -> Vec<f64> {
    vec![0.0, -0.5]
}
fn default_particles() -> usize {
    10_000
}
fn default_out_dir() -> PathBuf {
    "out".into()
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seeds: default_seeds(),
            levels: default_levels(),
            fine_level: default_fine_level(),
            grid: default_grid(),
            dt: default_dt(),
            oscillators: default_oscillators(),
            growth: default_growth(),
            particles: default_particles(),
            out_dir: default_out_dir(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("mesh ladder must be strictly refining"));
        }
        if self.kind == ExperimentKind::Stability && self.levels.len() < 2 {
            return Err(Error::invalid("the stability ladder needs at least two levels"));
        }
        if self.levels.last().is_some_and(|&l| l > self.fine_level) {
            return Err(Error::invalid("ladder levels cannot exceed the fine level"));
        }
        if self.fine_level > 20 {
            return Err(Error::invalid("fine level above 20 is not supported"));
        }
        if self.kind == ExperimentKind::OracleCompare && self.particles < 2 {
            return Err(Error::invalid("at least two particles are needed"));
        }
        Grid::parse(&self.grid)?;
        Ok(())
    }

    pub fn solver(&self, horizon: f64) -> Result<SolverConfig> {
        Ok(SolverConfig::new(Grid::parse(&self.grid)?, self.dt, horizon).adaptive(true))
    }

    pub fn fine_mesh(&self) -> f64 {
        dyadic(self.fine_level)
    }
}

pub fn dyadic(level: u32) -> f64 {
    (-f64::from(level)).exp2()
}

fn filter_observation(ops: &ZakaiOperators, obs: &SampledPath, u0: &[f64], cfg: &SolverConfig) -> Result<FilterOutput> {
    robust_filter_with(ops, &obs.lift(), u0, cfg, FlowOptions::default())
}

/// Successive sup-distances, on the core, of the normalized filter at the horizon when
/// the observation is sampled on a refining dyadic ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderResult {
    pub seed: u64,
    pub levels: Vec<u32>,
    /// Posterior mean at the horizon per level.
    pub means: Vec<f64>,
    /// `gaps[k]` compares `levels[k]` and `levels[k + 1]`.
    pub gaps: Vec<f64>,
}

impl LadderResult {
    pub fn strictly_decreasing(&self) -> bool {
        self.gaps.windows(2).all(|w| w[1] < w[0])
    }

    pub fn final_over_first(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(f64::NAN) / self.gaps.first().copied().unwrap_or(f64::NAN)
    }
}

pub fn stability_ladder(
    model: &FilteringModel,
    obs: &SampledPath,
    fine_level: u32,
    levels: &[u32],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<LadderResult> {
    let ops = build_zakai_operators(model)?;
    let u0 = prior_on_grid(model, &cfg.grid);
    let outputs = levels
        .par_iter()
        .map(|&level| {
            let coarse = obs.subsample(1usize << (fine_level - level))?;
            filter_observation(&ops, &coarse, &u0, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let last = |o: &FilterOutput| o.normalized.len() - 1;
    let means = outputs.iter().map(|o| o.moments(last(o)).0[0]).collect();
    let gaps = outputs
        .windows(2)
        .map(|w| Ok(*w[0].normalized.sup_diff_core(&w[1].normalized)?.last().expect("slices")))
        .collect::<Result<Vec<_>>>()?;
    Ok(LadderResult {
        seed,
        levels: levels.to_vec(),
        means,
        gaps,
    })
}

/// Distance between the filter for `obs` and for `obs` plus a fast oscillator in the
/// first two channels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WrongLimitResult {
    pub seed: u64,
    pub oscillators: Vec<u32>,
    /// Uniform distance between perturbed and unperturbed observations.
    pub driver_distance: Vec<f64>,
    /// Sup-distance of the normalized filters at the horizon, on the core.
    pub filter_difference: Vec<f64>,
    pub eps0: f64,
}

pub fn wrong_limit(
    model: &FilteringModel,
    obs: &SampledPath,
    mesh: f64,
    oscillators: &[u32],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<WrongLimitResult> {
    let d = model.obs_dim();
    if d < 2 {
        return Err(Error::Model("the wrong-limit experiment needs two observation channels".into()));
    }
    let ops = build_zakai_operators(model)?;
    let u0 = prior_on_grid(model, &cfg.grid);
    let mut embed = vec![0.0; d * 2];
    embed[0] = 1.0;
    embed[3] = 1.0;
    let base = filter_observation(&ops, obs, &u0, cfg)?;
    let rows = oscillators
        .par_iter()
        .map(|&n| {
            let osc = oscillator_path(n, obs.horizon(), mesh)?.map_linear(&embed, d)?;
            let perturbed = obs.add(&osc)?;
            let out = filter_observation(&ops, &perturbed, &u0, cfg)?;
            let diff = *base.normalized.sup_diff_core(&out.normalized)?.last().expect("slices");
            Ok((perturbed.sup_distance(obs), diff))
        })
        .collect::<Result<Vec<_>>>()?;
    let filter_difference: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(WrongLimitResult {
        seed,
        oscillators: oscillators.to_vec(),
        driver_distance: rows.iter().map(|r| r.0).collect(),
        eps0: filter_difference.iter().copied().fold(f64::INFINITY, f64::min),
        filter_difference,
    })
}

/// Contraction of the robust filter when the zeroth-order Zakai term is replaced by
/// `+C u dt`: the prior against the prior shifted by one prior standard deviation.
pub fn contraction_experiment(
    model: &FilteringModel,
    obs: &SampledPath,
    growth: f64,
    cfg: &SolverConfig,
) -> Result<ContractionReport> {
    let ops = build_zakai_operators(model)?.with_linear_reaction(growth)?;
    let u0 = prior_on_grid(model, &cfg.grid);
    let mut shifted = model.clone();
    for (m, s) in shifted.prior_mean.iter_mut().zip(&model.prior_std) {
        *m += s;
    }
    let v0 = prior_on_grid(&shifted, &cfg.grid);
    let cfg = cfg.clone().with_outputs(output_ladder(model.horizon, 10));
    let u = filter_observation(&ops, obs, &u0, &cfg)?;
    let v = filter_observation(&ops, obs, &v0, &cfg)?;
    contraction_check(&u.unnormalized, &v.unnormalized, growth, model.horizon)
}

fn output_ladder(horizon: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|i| horizon * i as f64 / k as f64).collect()
}

/// Posterior mean and standard deviation at the horizon from the PDE filter and the
/// particle reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRow {
    pub seed: u64,
    pub pde_mean: f64,
    pub pde_std: f64,
    pub particle_mean: f64,
    pub particle_std: f64,
    /// `|pde_mean - particle_mean| / pde_std`.
    pub error_in_std: f64,
    /// Sup-distance between the PDE density and the kernel density estimate.
    pub density_distance: f64,
    pub resamples: usize,
    pub min_ess: f64,
    pub degeneracy: Vec<DegeneracyEvent>,
}

pub fn oracle_compare(
    model: &FilteringModel,
    obs: &SampledPath,
    particles: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<OracleRow> {
    let ops = build_zakai_operators(model)?;
    let u0 = prior_on_grid(model, &cfg.grid);
    let pde = filter_observation(&ops, obs, &u0, cfg)?;
    let k = pde.normalized.len() - 1;
    let (mean, std) = pde.moments(k);
    let pf = particle_filter_oracle(model, obs, &ParticleConfig::new(particles, seed ^ 0x5eed))?;
    let last = pf.times.len() - 1;
    let kde = pf.density(&cfg.grid);
    let density_distance = pde.normalized.values[k]
        .iter()
        .zip(&kde)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(OracleRow {
        seed,
        pde_mean: mean[0],
        pde_std: std[0],
        particle_mean: pf.mean_at(last)[0],
        particle_std: pf.std_at(last)[0],
        error_in_std: (mean[0] - pf.mean_at(last)[0]).abs() / std[0],
        density_distance,
        resamples: pf.resamples,
        min_ess: pf.min_ess,
        degeneracy: pf.degeneracy,
    })
}

/// Results of one experiment run, also written as `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentReport {
    Stability { runs: Vec<LadderResult> },
    Gyongy { runs: Vec<WrongLimitResult> },
    Contraction { runs: Vec<ContractionRun> },
    OracleCompare { runs: Vec<OracleRow> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionRun {
    pub seed: u64,
    pub growth: f64,
    pub report: ContractionReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub seconds: f64,
    pub report: ExperimentReport,
}

fn observation(model: &FilteringModel, seed: u64, mesh: f64) -> Result<SampledPath> {
    Ok(simulate_signal_observation(model, seed, mesh)?.observation)
}

/// Runs the experiment for every seed and writes `table.csv` and `summary.json` into
/// `cfg.out_dir`, plus a gnuplot-ready `convergence.dat` for the stability ladder.
pub fn run_experiment(model: &FilteringModel, cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let solver = cfg.solver(model.horizon)?;
    let mesh = cfg.fine_mesh();
    let report = match cfg.kind {
        ExperimentKind::Stability => ExperimentReport::Stability {
            runs: cfg
                .seeds
                .iter()
                .map(|&s| stability_ladder(model, &observation(model, s, mesh)?, cfg.fine_level, &cfg.levels, &solver, s))
                .collect::<Result<_>>()?,
        },
        ExperimentKind::Gyongy => ExperimentReport::Gyongy {
            runs: cfg
                .seeds
                .iter()
                .map(|&s| wrong_limit(model, &observation(model, s, mesh)?, mesh, &cfg.oscillators, &solver, s))
                .collect::<Result<_>>()?,
        },
        ExperimentKind::Contraction => {
            let mut runs = Vec::new();
            for &s in &cfg.seeds {
                let obs = observation(model, s, mesh)?;
                for &growth in &cfg.growth {
                    let report = contraction_experiment(model, &obs, growth, &solver)?;
                    runs.push(ContractionRun { seed: s, growth, report });
                }
            }
            ExperimentReport::Contraction { runs }
        }
        ExperimentKind::OracleCompare => ExperimentReport::OracleCompare {
            runs: cfg
                .seeds
                .iter()
                .map(|&s| oracle_compare(model, &observation(model, s, mesh)?, cfg.particles, &solver, s))
                .collect::<Result<_>>()?,
        },
    };
    let summary = ExperimentSummary {
        config: cfg.clone(),
        seconds: start.elapsed().as_secs_f64(),
        report,
    };
    write_outputs(&cfg.out_dir, &summary)?;
    Ok(summary)
}

fn write_outputs(dir: &Path, summary: &ExperimentSummary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("summary.json");
    fs::write(&json, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&json, e))?;
    let table = dir.join("table.csv");
    let mut w = csv::Writer::from_path(&table)?;
    match &summary.report {
        ExperimentReport::Stability { runs } => {
            let mut dat = String::from("# level gap (one block per seed)\n");
            for r in runs {
                dat.push_str(&format!("# seed {}\n", r.seed));
                for (k, g) in r.gaps.iter().enumerate() {
                    dat.push_str(&format!("{} {g:.6e}\n", r.levels[k + 1]));
                }
                dat.push('\n');
            }
            let path = dir.join("convergence.dat");
            fs::write(&path, dat).map_err(|e| Error::io(&path, e))?;
            w.write_record(["seed", "level_from", "level_to", "gap", "mean_from"])?;
            for r in runs {
                for (k, g) in r.gaps.iter().enumerate() {
                    w.write_record([
                        r.seed.to_string(),
                        r.levels[k].to_string(),
                        r.levels[k + 1].to_string(),
                        format!("{g:.6e}"),
                        format!("{:.6e}", r.means[k]),
                    ])?;
                }
            }
        }
        ExperimentReport::Gyongy { runs } => {
            w.write_record(["seed", "n", "driver_distance", "filter_difference"])?;
            for r in runs {
                for (k, n) in r.oscillators.iter().enumerate() {
                    w.write_record([
                        r.seed.to_string(),
                        n.to_string(),
                        format!("{:.6e}", r.driver_distance[k]),
                        format!("{:.6e}", r.filter_difference[k]),
                    ])?;
                }
            }
        }
        ExperimentReport::Contraction { runs } => {
            w.write_record(["seed", "growth", "t", "ratio", "bound"])?;
            for r in runs {
                for (k, t) in r.report.times.iter().enumerate() {
                    w.write_record([
                        r.seed.to_string(),
                        r.growth.to_string(),
                        format!("{t:.6}"),
                        format!("{:.6e}", r.report.ratios[k]),
                        format!("{:.6e}", r.report.bounds[k]),
                    ])?;
                }
            }
        }
        ExperimentReport::OracleCompare { runs } => {
            w.write_record([
                "seed",
                "pde_mean",
                "pde_std",
                "particle_mean",
                "particle_std",
                "error_in_std",
                "density_distance",
                "resamples",
                "min_ess",
            ])?;
            for r in runs {
                w.write_record([
                    r.seed.to_string(),
                    format!("{:.6e}", r.pde_mean),
                    format!("{:.6e}", r.pde_std),
                    format!("{:.6e}", r.particle_mean),
                    format!("{:.6e}", r.particle_std),
                    format!("{:.6e}", r.error_in_std),
                    format!("{:.6e}", r.density_distance),
                    r.resamples.to_string(),
                    format!("{:.1}", r.min_ess),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&table, e))?;
    Ok(())
}
