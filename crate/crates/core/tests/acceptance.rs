//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//!
//! Run with `cargo test -p rpde-core --test acceptance`. The process exits with a
//! non-zero status if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rpde::coeffs::{NoiseSpec, OperatorCoefficients};
use rpde::flows::{solve_joint_rde, FlowOptions};
use rpde::grid::Grid;
use rpde::pdesolve::{check_order, solve_driven, solve_parabolic, SolverConfig};
use rpde::roughpath::{
    chen_concat, oscillator_path, pure_area_path, sample_brownian_rough_path, Level2RoughPath, SampledPath,
};
use rpde::transform::{
    outer_transform_generic, solve_transformed, Hamiltonian, InverseMap, SymbolicMap,
};
use rpde::zakai::{
    build_zakai_operators, contraction_experiment, dyadic, oracle_compare, robust_filter_with,
    simulate_signal_observation, stability_ladder, wrong_limit, ExperimentConfig, ExperimentKind,
    FilteringModel,
};
use rpde::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Values shared between criteria.
#[derive(Default)]
struct Shared {
    stability_final_gap: Option<f64>,
}

fn solver() -> SolverConfig {
    ExperimentConfig::new(ExperimentKind::Stability).solver(1.0).unwrap()
}

fn random_path(rng: &mut ChaCha8Rng) -> SampledPath {
    let d = rng.random_range(2..=3);
    let m = rng.random_range(5..=30);
    let mut times: Vec<f64> = (0..m - 2).map(|_| rng.random_range(0.0..1.0)).collect();
    times.push(0.0);
    times.push(1.0);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let mut values = vec![0.0; times.len() * d];
    for k in 0..d {
        values[k] = rng.random_range(-1.0..1.0);
    }
    for j in 1..times.len() {
        let sd = (times[j] - times[j - 1]).sqrt();
        for k in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            values[j * d + k] = values[(j - 1) * d + k] + sd * g;
        }
    }
    SampledPath::new(times, values, d).unwrap()
}

fn sub_path(p: &SampledPath, from: usize, to: usize) -> SampledPath {
    let d = p.dim();
    let t0 = p.times()[from];
    let times = p.times()[from..=to].iter().map(|t| t - t0).collect();
    SampledPath::new(times, p.values()[from * d..(to + 1) * d].to_vec(), d).unwrap()
}

/// Trapezoid sums of `∫ (z_t - z_0) ⊗ dz_t` on a uniform mesh.
fn riemann_level2(p: &SampledPath, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let d = p.dim();
    let z0 = p.value(0).to_vec();
    let mut prev = vec![0.0; d];
    let mut cur = vec![0.0; d];
    let mut l2 = vec![0.0; d * d];
    for k in 1..=steps {
        p.eval(k as f64 / steps as f64, &mut cur);
        for c in cur.iter_mut().zip(&z0) {
            *c.0 -= c.1;
        }
        for i in 0..d {
            for j in 0..d {
                l2[i * d + j] += 0.5 * (prev[i] + cur[i]) * (cur[j] - prev[j]);
            }
        }
        prev.copy_from_slice(&cur);
    }
    (prev, l2)
}

fn rough_lift(_: &mut Shared) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut chen, mut geo, mut quad) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = random_path(&mut rng);
        let lift = p.lift();
        let total = lift.total();
        let split = rng.random_range(1..p.len() - 1);
        let glued = chen_concat(&sub_path(&p, 0, split).lift().total(), &sub_path(&p, split, p.len() - 1).lift().total())?;
        for (a, b) in glued.inc().iter().zip(total.inc()).chain(glued.level2().iter().zip(total.level2())) {
            chen = chen.max((a - b).abs());
        }
        for j in 1..=lift.len() {
            geo = geo.max(lift.over(0, j).geometric_defect());
        }
        let (inc, l2) = riemann_level2(&p, 100_000);
        for (a, b) in inc.iter().zip(total.inc()).chain(l2.iter().zip(total.level2())) {
            quad = quad.max((a - b).abs());
        }
    }
    Ok(Outcome::new(
        chen <= 1e-10 && geo <= 1e-10 && quad <= 1e-6,
        format!("chen {chen:.1e}, geometric {geo:.1e}, quadrature {quad:.1e} over 100 lifts"),
    ))
}

fn oscillator_area(_: &mut Shared) -> Result<Outcome> {
    let noise = NoiseSpec::parse(1, &[vec!["sin(x)"], vec!["cos(x)"]], &[], &[])?;
    let grid = Grid::uniform(-1.0, 1.0, 3, 1)?;
    let centre = 1;
    let opts = FlowOptions {
        max_step: 1e-2,
        max_increment: 0.5,
        ..FlowOptions::default()
    };
    let part: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let area = solve_joint_rde(&noise, &pure_area_path(PI, &part)?, &grid, &[1.0], &opts, false)?;
    let limit = area.last().psi_at(centre)[0];
    // the bracket [sin, cos] = -1 moves y at unit speed per unit area
    let mut pass = (limit.abs() - PI).abs() < 1e-6;
    let mut rows = Vec::new();
    let mut y64 = 0.0;
    for n in [8u32, 16, 32, 64] {
        let mesh = 1.0 / (200.0 * f64::from(n * n));
        let z = oscillator_path(n, 1.0, mesh)?;
        let sup = z.sup_norm();
        pass &= (sup * f64::from(n) - 1.0).abs() < 1e-9;
        let y = solve_joint_rde(&noise, &z.lift(), &grid, &[1.0], &opts, false)?.last().psi_at(centre)[0];
        rows.push(format!("n={n}: |z|={sup:.4} y(1)={y:.4}"));
        y64 = y;
    }
    let gap = (y64 - limit).abs();
    pass &= gap <= 1e-2;
    Ok(Outcome::new(
        pass,
        format!("{}; area limit {limit:.6}, |y64 - limit| = {gap:.1e}", rows.join(", ")),
    ))
}

fn phi() -> SymbolicMap {
    SymbolicMap::parse("r*exp(0.5*x1*sin(t)) + 0.2*r^3 + t*x1^2 + 0.1*x2*r", 2).unwrap()
}

fn nonlinear_f(t: f64, x: &[f64], r: f64, p: &[f64], xx: &[f64]) -> f64 {
    let a = [1.0 + x[0] * x[0], 0.3, 0.3, 0.5 + t];
    -(a[0] * xx[0] + a[1] * xx[2] + a[2] * xx[1] + a[3] * xx[3]) + (x[1] * p[0] - p[1]) + 0.5 * (p[0] * p[0] + p[1] * p[1])
        + r.powi(3)
        + (x[0] * r).sin()
}

fn smooth_path(d: usize, steps: usize) -> SampledPath {
    SampledPath::from_fn(SampledPath::uniform_times(1.0, steps), d, |t, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let kf = k as f64 + 1.0;
            *o = 0.6 * (kf * 2.3 * t).sin() + 0.3 * kf * t * t;
        }
    })
    .unwrap()
}

fn pipeline_gap(points: usize) -> Result<f64> {
    let op = OperatorCoefficients::parse(&["0.125"], &["-x"], "0", 0.0)?;
    let noise = NoiseSpec::parse(1, &[vec!["0.2"]], &["sin(x)"], &["cos(x)"])?;
    let path = smooth_path(3, 200);
    let grid = Grid::uniform(-12.0, 12.0, points, 1)?;
    let h = grid.spacing(0);
    let cfg = SolverConfig::new(grid.clone(), 0.4 * h * h / 0.125, 1.0)
        .with_outputs(vec![0.25, 0.5, 0.75, 1.0])
        .adaptive(true);
    let u0: Vec<f64> = (0..grid.len())
        .map(|i| (-2.0 * (grid.point_vec(i)[0] - 0.3).powi(2)).exp())
        .collect();
    let direct = solve_driven(&op, &noise, &path, &u0, &cfg)?;
    let rough = solve_transformed(&op, &noise, &path.lift(), &u0, &cfg, FlowOptions::default())?;
    Ok(direct.u.sup_diff_core(&rough.u)?.into_iter().fold(0.0, f64::max))
}

fn transforms(_: &mut Shared) -> Result<Outcome> {
    let there = outer_transform_generic(nonlinear_f, phi());
    let back = outer_transform_generic(there, InverseMap::new(phi()));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(0.0..1.0);
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let r = rng.random_range(-2.0..2.0);
        let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let off = rng.random_range(-1.0..1.0);
        let xx = [rng.random_range(-1.0..1.0), off, off, rng.random_range(-1.0..1.0)];
        let want = nonlinear_f(t, &x, r, &p, &xx);
        let got = back.eval(t, &x, r, &p, &xx)?;
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    let coarse = pipeline_gap(961)?;
    let fine = pipeline_gap(1921)?;
    Ok(Outcome::new(
        worst <= 1e-8 && coarse <= 5e-2 && fine <= 5e-2 && fine < coarse,
        format!("round trip {worst:.1e}; pipeline gap {coarse:.2e} (h=0.025) -> {fine:.2e} (h=0.0125)"),
    ))
}

fn heat_error(points: usize) -> Result<f64> {
    let grid = Grid::uniform(-4.0, 4.0, points, 1)?;
    let s2 = 0.25f64;
    let u0: Vec<f64> = (0..grid.len())
        .map(|i| (-grid.point_vec(i)[0].powi(2) / (2.0 * s2)).exp())
        .collect();
    let h = grid.spacing(0);
    let cfg = SolverConfig::new(grid.clone(), 0.4 * h * h, 0.1);
    let mut heat = OperatorCoefficients::parse(&["1"], &["0"], "0", 0.0)?;
    let sol = solve_parabolic(&mut heat, &u0, &cfg)?;
    let v = 2.0 * 0.1 + s2;
    Ok(sol
        .u
        .last()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let x = grid.point_vec(i)[0];
            (u - (s2 / v).sqrt() * (-x * x / (2.0 * v)).exp()).abs()
        })
        .fold(0.0, f64::max))
}

fn scheme(_: &mut Shared) -> Result<Outcome> {
    let e1 = heat_error(400)?;
    let e2 = heat_error(799)?;

    let model = FilteringModel::smoke();
    let ops = build_zakai_operators(&model)?;
    let obs = simulate_signal_observation(&model, 1, dyadic(8))?.observation.lift();
    let grid = Grid::uniform(-5.0, 5.0, 101, 1)?;
    let cfg = SolverConfig::new(grid.clone(), 1e-3, 1.0)
        .with_outputs(vec![0.25, 0.5, 0.75, 1.0])
        .adaptive(true);
    let mut ordered = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let v0: Vec<f64> = u0.iter().map(|u| u + rng.random_range(0.0..0.5)).collect();
        let a = robust_filter_with(&ops, &obs, &u0, &cfg, FlowOptions::default())?;
        let b = robust_filter_with(&ops, &obs, &v0, &cfg, FlowOptions::default())?;
        if check_order(&a.unnormalized, &b.unnormalized)? {
            ordered += 1;
        }
    }

    let grid = Grid::uniform(-4.0, 4.0, 161, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u0: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sup0 = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cfg = SolverConfig::new(grid, 1e-3, 1.0).with_outputs(vec![0.1, 0.5, 1.0]).adaptive(true);
    let mut ou = OperatorCoefficients::parse(&["0.125"], &["-x"], "0", 0.0)?;
    let sol = solve_parabolic(&mut ou, &u0, &cfg)?;
    let excess = (0..sol.u.len()).map(|k| sol.u.sup_norm(k) - sup0).fold(f64::NEG_INFINITY, f64::max);

    Ok(Outcome::new(
        e1 <= 2e-3 && e2 <= 0.5 * e1 && ordered == 50 && excess <= 1e-12,
        format!("heat {e1:.2e} -> {e2:.2e}; ordered pairs {ordered}/50; max-principle excess {excess:.1e}"),
    ))
}

fn contraction(_: &mut Shared) -> Result<Outcome> {
    let model = FilteringModel::smoke();
    let obs = simulate_signal_observation(&model, 1, dyadic(10))?.observation;
    let mut pass = true;
    let mut rows = Vec::new();
    for c in [0.0, -0.5] {
        let r = contraction_experiment(&model, &obs, c, &solver())?;
        pass &= r.pass;
        let k = (0..r.ratios.len())
            .max_by(|&a, &b| (r.ratios[a] / r.bounds[a]).total_cmp(&(r.ratios[b] / r.bounds[b])))
            .unwrap_or(0);
        rows.push(format!(
            "C={c}: worst ratio {:.3} vs bound {:.3} at t={:.1}",
            r.ratios[k], r.bounds[k], r.times[k]
        ));
    }
    Ok(Outcome::new(pass, rows.join("; ")))
}

fn stability(shared: &mut Shared) -> Result<Outcome> {
    let cfg = ExperimentConfig::new(ExperimentKind::Stability);
    let model = FilteringModel::smoke();
    let seed = cfg.seeds[0];
    let obs = simulate_signal_observation(&model, seed, cfg.fine_mesh())?.observation;
    let r = stability_ladder(&model, &obs, cfg.fine_level, &cfg.levels, &cfg.solver(model.horizon)?, seed)?;
    let last = *r.gaps.last().unwrap();
    shared.stability_final_gap = Some(last);
    let gaps: Vec<String> = r.gaps.iter().map(|g| format!("{g:.2e}")).collect();
    Ok(Outcome::new(
        r.strictly_decreasing() && r.final_over_first() < 0.25,
        format!(
            "levels {:?}, gaps [{}], final/first {:.3}",
            r.levels,
            gaps.join(", "),
            r.final_over_first()
        ),
    ))
}

fn wrong_area(shared: &mut Shared) -> Result<Outcome> {
    let Some(floor) = shared.stability_final_gap else {
        return Ok(Outcome::new(false, "stability floor unavailable"));
    };
    let model = FilteringModel::two_channel();
    let mesh = dyadic(15);
    let obs = simulate_signal_observation(&model, 1, mesh)?.observation;
    let r = wrong_limit(&model, &obs, mesh, &[8, 16, 32], &solver(), 1)?;
    let rows: Vec<String> = r
        .oscillators
        .iter()
        .zip(r.driver_distance.iter().zip(&r.filter_difference))
        .map(|(n, (d, f))| format!("n={n}: |dz|={d:.4} filter {f:.3e}"))
        .collect();
    Ok(Outcome::new(
        r.eps0 > 5.0 * floor,
        format!("{}; eps0 {:.3e} vs 5 x floor {:.3e}", rows.join(", "), r.eps0, 5.0 * floor),
    ))
}

fn oracle(_: &mut Shared) -> Result<Outcome> {
    let model = FilteringModel::smoke_uncorrelated();
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for seed in 1..=5 {
        let obs = simulate_signal_observation(&model, seed, dyadic(10))?.observation;
        let r = oracle_compare(&model, &obs, 10_000, &solver(), seed)?;
        worst = worst.max(r.error_in_std);
        rows.push(format!("{:.3}", r.error_in_std));
    }
    Ok(Outcome::new(
        worst < 0.1,
        format!("mean error in posterior std per seed [{}]", rows.join(", ")),
    ))
}

fn levy_area(_: &mut Shared) -> Result<Outcome> {
    let samples = 10_000u64;
    let squares: Vec<f64> = (0..samples)
        .map(|seed| {
            let x: Level2RoughPath = sample_brownian_rough_path(seed, 2, dyadic(10), 1.0)?;
            Ok(x.total().area(0, 1).powi(2))
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let var = squares.iter().sum::<f64>() / n;
    let se = (squares.iter().map(|s| (s - var).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    Ok(Outcome::new(
        (var - 0.25).abs() <= 3.0 * se,
        format!("variance {var:.4} (standard error {se:.4})"),
    ))
}

type Criterion = fn(&mut Shared) -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion, Duration); 9] = [
        ("rough lift", rough_lift, Duration::from_secs(60)),
        ("oscillator area", oscillator_area, Duration::from_secs(60)),
        ("transform round trips", transforms, Duration::from_secs(300)),
        ("scheme validity", scheme, Duration::MAX),
        ("contraction", contraction, Duration::from_secs(300)),
        ("rough-path stability", stability, Duration::from_secs(900)),
        ("wrong limit", wrong_area, Duration::from_secs(900)),
        ("particle oracle", oracle, Duration::from_secs(600)),
        ("Levy area variance", levy_area, Duration::from_secs(120)),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run(&mut shared).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let over = if in_time { String::new() } else { format!(", over the {}s budget", budget.as_secs()) };
        println!(
            "{} {}. {name}: {} [{:.1}s{over}]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
