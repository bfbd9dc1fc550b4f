use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rpde::coeffs::NodeCoefficients;
use rpde::field::ScalarField;
use rpde::flows::{solve_joint_rde, FlowBundle, FlowOptions};
use rpde::grid::Grid;
use rpde::model_file::{load_experiment_config, load_filtering_model, load_pde_model, PdeModel};
use rpde::pdesolve::{solve_parabolic, SolveReport, SolverConfig};
use rpde::roughpath::io::{read_path_csv, read_rough_csv, write_path_csv, write_rough_csv};
use rpde::roughpath::{pvar_distance_parts, sample_brownian_path, Level2RoughPath, SampledPath};
use rpde::transform::{pipeline_bundle, solve_transformed, transform_at, Stages};
use rpde::zakai::{
    particle_filter_oracle, prior_on_grid, robust_filter, run_experiment, simulate_signal_observation, FilteringModel,
    ParticleConfig,
};

#[derive(Parser)]
#[command(name = "rpde", version, about = "Rough-path robust solvers for Zakai-type SPDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lifts, distances and Brownian samples.
    #[command(subcommand)]
    Rough(RoughCmd),
    /// Flows of the noise vector fields with scale and shift.
    #[command(subcommand)]
    Flows(FlowsCmd),
    /// Transformed coefficients.
    #[command(subcommand)]
    Transform(TransformCmd),
    /// Parabolic solves.
    #[command(subcommand)]
    Pde(PdeCmd),
    /// Filtering: simulation, robust filter, particle reference and experiments.
    #[command(subcommand)]
    Zakai(ZakaiCmd),
}

#[derive(Subcommand)]
enum RoughCmd {
    /// Piecewise-linear level-2 lift of a path CSV.
    Lift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// p-variation rough-path distance between two paths (CSV paths or lifts).
    Dist {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 2.5)]
        p: f64,
        /// Treat the inputs as rough-path CSVs instead of sampled paths.
        #[arg(long)]
        rough: bool,
    },
    /// Brownian path on a uniform mesh, with its lift.
    Sample {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        mesh: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rough_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelGrid {
    /// PDE model TOML.
    #[arg(long)]
    model: PathBuf,
    /// Grid spec `lo:hi:n[,lo:hi:n]`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
}

#[derive(Subcommand)]
enum FlowsCmd {
    /// Solves the flow along the lifted driver and writes the bundle CSV.
    Solve {
        #[command(flatten)]
        mg: ModelGrid,
        /// Driver path CSV `t,z1,...`.
        #[arg(long)]
        driver: PathBuf,
        /// Slice times (comma separated); defaults to the driver horizon.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Use the flow of the negated gradient fields, as the transformation does.
        #[arg(long)]
        pipeline: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TransformCmd {
    /// Prints the transformed coefficients at the grid node nearest to `x`.
    Emit {
        #[command(flatten)]
        mg: ModelGrid,
        /// Bundle CSV written by `flows solve --pipeline`.
        #[arg(long)]
        bundle: PathBuf,
        /// `t,x1,...,xn,r`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        at: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum PdeCmd {
    /// Solves the model driven by the lifted path (a plain parabolic solve without noise).
    Solve {
        #[command(flatten)]
        mg: ModelGrid,
        #[arg(long)]
        driver: Option<PathBuf>,
        /// Initial condition as an expression in `x`.
        #[arg(long, allow_hyphen_values = true, default_value = "exp(-x^2)")]
        initial: String,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Output times (comma separated); defaults to the horizon.
        #[arg(long, value_delimiter = ',')]
        outputs: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// JSON summary; defaults to the output path with extension `json`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ZakaiCommon {
    /// Filtering model TOML, or one of `smoke`, `smoke-uncorrelated`, `two-channel`.
    #[arg(long, default_value = "smoke")]
    model: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum ZakaiCmd {
    /// Simulates signal and observation.
    Simulate {
        #[command(flatten)]
        common: ZakaiCommon,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        mesh: f64,
    },
    /// Robust filter for an observation CSV.
    Filter {
        #[command(flatten)]
        common: ZakaiCommon,
        #[arg(long)]
        observation: PathBuf,
        #[arg(long, allow_hyphen_values = true, default_value = "-16:16:641")]
        grid: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Particle reference for an observation CSV.
    Oracle {
        #[command(flatten)]
        common: ZakaiCommon,
        #[arg(long)]
        observation: PathBuf,
        #[arg(long, allow_hyphen_values = true, default_value = "-16:16:641")]
        grid: String,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
    },
    /// Runs an experiment described by a TOML config.
    Experiment {
        #[arg(long, default_value = "smoke")]
        model: String,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seeds of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Rough(cmd) => rough(cmd),
        Command::Flows(cmd) => flows(cmd),
        Command::Transform(cmd) => transform(cmd),
        Command::Pde(cmd) => pde(cmd),
        Command::Zakai(cmd) => zakai(cmd),
    }
}

fn rough(cmd: RoughCmd) -> Result<()> {
    match cmd {
        RoughCmd::Lift { input, out } => {
            let path = read_path_csv(&input)?;
            write_rough_csv(&out, &path.lift())?;
        }
        RoughCmd::Dist { a, b, p, rough } => {
            let load = |f: &Path| -> Result<Level2RoughPath> {
                Ok(if rough { read_rough_csv(f)? } else { read_path_csv(f)?.lift() })
            };
            let d = pvar_distance_parts(&load(&a)?, &load(&b)?, p)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "p": p,
                    "level1": d.level1,
                    "level2": d.level2,
                    "distance": d.value(),
                }))?
            );
        }
        RoughCmd::Sample {
            seed,
            mesh,
            dim,
            horizon,
            out,
            rough_out,
        } => {
            let path = sample_brownian_path(seed, dim, mesh, horizon)?;
            write_path_csv(&out, &path)?;
            if let Some(r) = rough_out {
                write_rough_csv(r, &path.lift())?;
            }
        }
    }
    Ok(())
}

fn flows(cmd: FlowsCmd) -> Result<()> {
    let FlowsCmd::Solve {
        mg,
        driver,
        times,
        pipeline,
        out,
    } = cmd;
    let model = load_pde_model(&mg.model)?;
    let grid = Grid::parse(&mg.grid)?;
    let noise = model.noise()?;
    let driver = read_path_csv(&driver)?.lift();
    let times = if times.is_empty() { vec![driver.horizon()] } else { times };
    let opts = FlowOptions::default();
    let bundle = if pipeline {
        pipeline_bundle(&noise, &driver, &grid, &times, &opts)?
    } else {
        solve_joint_rde(&noise, &driver, &grid, &times, &opts, true)?
    };
    bundle.write_csv(&out)?;
    Ok(())
}

fn transform(cmd: TransformCmd) -> Result<()> {
    let TransformCmd::Emit { mg, bundle, at } = cmd;
    let model = load_pde_model(&mg.model)?;
    let grid = Grid::parse(&mg.grid)?;
    let n = grid.dim();
    if at.len() != n + 2 {
        bail!("--at needs t, {n} coordinates and r");
    }
    let (t, x, r) = (at[0], &at[1..=n], at[n + 1]);
    let bundle = FlowBundle::read_csv(&bundle, &grid)?;
    let slice = bundle.slice_at(t)?;
    let op = model.operator(&grid, t.max(1e-12))?;
    let mut out = NodeCoefficients::new(n, grid.len(), op.reaction().clone());
    transform_at(&op, slice, Stages::ALL, &mut out, &grid)?;
    let node = nearest_node(&grid, x);
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "t": t,
            "node": grid.point_vec(node),
            "r": r,
            "diffusion": out.a_at(node),
            "drift": out.b_at(node),
            "reaction": out.reaction(node, r),
            "reaction_dr": out.reaction_dr(node, r),
        }))?
    );
    Ok(())
}

fn nearest_node(grid: &Grid, x: &[f64]) -> usize {
    (0..grid.len())
        .min_by(|&i, &j| {
            let d = |k: usize| {
                grid.point_vec(k)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };
            d(i).total_cmp(&d(j))
        })
        .expect("grid has nodes")
}

fn pde(cmd: PdeCmd) -> Result<()> {
    let PdeCmd::Solve {
        mg,
        driver,
        initial,
        horizon,
        dt,
        outputs,
        out,
        summary,
    } = cmd;
    let model: PdeModel = load_pde_model(&mg.model)?;
    let grid = Grid::parse(&mg.grid)?;
    let op = model.operator(&grid, horizon)?;
    let noise = model.noise()?;
    let init = ScalarField::parse(&initial, grid.dim())?;
    let u0: Vec<f64> = (0..grid.len()).map(|i| init.eval(0.0, &grid.point_vec(i))).collect();
    let outputs = if outputs.is_empty() { vec![horizon] } else { outputs };
    let cfg = SolverConfig::new(grid, dt, horizon).with_outputs(outputs).adaptive(true);
    let (u, report) = if noise.is_zero() {
        let sol = solve_parabolic(&mut op.clone(), &u0, &cfg)?;
        (sol.u, sol.report)
    } else {
        let Some(driver) = driver else {
            bail!("the model has noise terms; pass --driver");
        };
        let driver = read_path_csv(&driver)?.lift();
        let sol = solve_transformed(&op, &noise, &driver, &u0, &cfg, FlowOptions::default())?;
        (sol.u, sol.report)
    };
    u.write_csv(&out)?;
    let sup: Vec<f64> = (0..u.len()).map(|k| u.sup_norm(k)).collect();
    write_json(
        &summary.unwrap_or_else(|| out.with_extension("json")),
        &json!({
            "times": u.times,
            "sup_norm": sup,
            "boundary_width": u.boundary_width,
            "report": report,
        }),
    )
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn filtering_model(name: &str) -> Result<FilteringModel> {
    Ok(match name {
        "smoke" => FilteringModel::smoke(),
        "smoke-uncorrelated" => FilteringModel::smoke_uncorrelated(),
        "two-channel" => FilteringModel::two_channel(),
        file => load_filtering_model(file)?,
    })
}

fn report_json(r: &SolveReport) -> serde_json::Value {
    serde_json::to_value(r).unwrap_or_default()
}

fn zakai(cmd: ZakaiCmd) -> Result<()> {
    match cmd {
        ZakaiCmd::Simulate { common, mesh } => {
            let model = filtering_model(&common.model)?;
            let so = simulate_signal_observation(&model, common.seed, mesh)?;
            fs::create_dir_all(&common.out_dir)?;
            write_path_csv(common.out_dir.join("signal.csv"), &so.signal)?;
            write_path_csv(common.out_dir.join("observation.csv"), &so.observation)?;
        }
        ZakaiCmd::Filter {
            common,
            observation,
            grid,
            dt,
        } => {
            let model = filtering_model(&common.model)?;
            let obs: SampledPath = read_path_csv(&observation)?;
            let grid = Grid::parse(&grid)?;
            let u0 = prior_on_grid(&model, &grid);
            let cfg = SolverConfig::new(grid, dt, model.horizon.min(obs.horizon())).adaptive(true);
            let out = robust_filter(&model, &obs.lift(), &u0, &cfg, FlowOptions::default())?;
            fs::create_dir_all(&common.out_dir)?;
            out.unnormalized.write_csv(common.out_dir.join("unnormalized.csv"))?;
            out.normalized.write_csv(common.out_dir.join("density.csv"))?;
            let moments: Vec<_> = (0..out.normalized.len()).map(|k| out.moments(k)).collect();
            write_json(
                &common.out_dir.join("summary.json"),
                &json!({
                    "times": out.normalized.times,
                    "mass": out.mass,
                    "mean": moments.iter().map(|m| &m.0).collect::<Vec<_>>(),
                    "std": moments.iter().map(|m| &m.1).collect::<Vec<_>>(),
                    "boundary_width": out.normalized.boundary_width,
                    "report": report_json(&out.report),
                }),
            )?;
        }
        ZakaiCmd::Oracle {
            common,
            observation,
            grid,
            particles,
        } => {
            let model = filtering_model(&common.model)?;
            let obs = read_path_csv(&observation)?;
            let grid = Grid::parse(&grid)?;
            let pf = particle_filter_oracle(&model, &obs, &ParticleConfig::new(particles, common.seed))?;
            let density = pf.density(&grid);
            fs::create_dir_all(&common.out_dir)?;
            let gf = rpde::pdesolve::GridFunction::new(
                grid,
                vec![*pf.times.last().expect("times")],
                vec![density],
                vec![0.0],
            )?;
            gf.write_csv(common.out_dir.join("density.csv"))?;
            let last = pf.times.len() - 1;
            write_json(
                &common.out_dir.join("summary.json"),
                &json!({
                    "particles": particles,
                    "mean": pf.mean_at(last),
                    "std": pf.std_at(last),
                    "resamples": pf.resamples,
                    "min_ess": pf.min_ess,
                    "degeneracy": pf.degeneracy,
                }),
            )?;
        }
        ZakaiCmd::Experiment {
            model,
            config,
            seed,
            out_dir,
        } => {
            let model = filtering_model(&model)?;
            let mut cfg = load_experiment_config(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let summary = run_experiment(&model, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary.report)?);
        }
    }
    Ok(())
}
