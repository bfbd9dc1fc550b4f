use super::*;
use crate::coeffs::NoiseSpec;
use crate::grid::Grid;
use crate::roughpath::{lift_piecewise_linear, oscillator_path, pure_area_path, Level2RoughPath, SampledPath};
use crate::Error;

fn smooth_driver(d: usize, steps: usize) -> Level2RoughPath {
    let path = SampledPath::from_fn(SampledPath::uniform_times(1.0, steps), d, |t, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let kf = k as f64 + 1.0;
            *o = 0.6 * (kf * 2.3 * t).sin() + 0.3 * kf * t * t;
        }
    })
    .unwrap();
    lift_piecewise_linear(&path)
}

fn fine() -> FlowOptions {
    FlowOptions {
        max_step: 2e-3,
        max_increment: 1e-2,
        ..FlowOptions::default()
    }
}

#[test]
fn constant_field_translates() {
    let noise = NoiseSpec::parse(1, &[vec!["1"]], &[], &[]).unwrap();
    let driver = smooth_driver(1, 40);
    let grid = Grid::uniform(-1.0, 1.0, 5, 1).unwrap();
    let times = [0.5, 1.0];
    let b = solve_joint_rde(&noise, &driver, &grid, &times, &fine(), true).unwrap();
    let z = driver.trace();
    for s in &b.slices {
        let zt = z.eval_vec(s.t)[0];
        for i in 0..grid.len() {
            let x = grid.point_vec(i)[0];
            assert!((s.psi_at(i)[0] - (x + zt)).abs() < 1e-12);
            assert!((s.jac_at(i)[0] - 1.0).abs() < 1e-12);
            assert!(s.hess[i].abs() < 1e-12);
            assert!((s.psi_inv.as_ref().unwrap()[i] - (x - zt)).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_field_gives_exponential() {
    let noise = NoiseSpec::parse(1, &[vec!["x"]], &[], &[]).unwrap();
    let driver = smooth_driver(1, 40);
    let grid = Grid::uniform(-1.0, 2.0, 7, 1).unwrap();
    let b = solve_joint_rde(&noise, &driver, &grid, &[1.0], &fine(), false).unwrap();
    let zt = driver.total().inc()[0];
    let s = b.last();
    for i in 0..grid.len() {
        let x = grid.point_vec(i)[0];
        assert!((s.psi_at(i)[0] - x * zt.exp()).abs() < 1e-9);
        assert!((s.jac_at(i)[0] - zt.exp()).abs() < 1e-9);
        assert!((s.inv_jac_at(i)[0] - (-zt).exp()).abs() < 1e-9);
    }
}

/// `σ1 = (1, 0)`, `σ2 = (0, x)` have bracket `(0, 1)`: a pure area `a` moves `ψ²` by `a`.
#[test]
fn area_drives_bracket_direction() {
    let noise = NoiseSpec::parse(2, &[vec!["1", "0"], vec!["0", "x"]], &[], &[]).unwrap();
    let grid = Grid::uniform(-1.0, 1.0, 3, 2).unwrap();
    let part: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let driver = pure_area_path(0.8, &part).unwrap();
    let b = solve_joint_rde(&noise, &driver, &grid, &[1.0], &fine(), true).unwrap();
    let s = b.last();
    for i in 0..grid.len() {
        let x = grid.point_vec(i);
        assert!((s.psi_at(i)[0] - x[0]).abs() < 1e-9);
        assert!((s.psi_at(i)[1] - (x[1] + 0.8)).abs() < 1e-9);
        let inv = &s.psi_inv.as_ref().unwrap()[2 * i..2 * i + 2];
        assert!((inv[1] - (x[1] - 0.8)).abs() < 1e-9);
    }

    // the fast oscillator approximates the same limit
    let osc = oscillator_path(50, 1.0, 1.0 / (200.0 * 2500.0)).unwrap().lift();
    let opts = FlowOptions {
        max_step: 1e-2,
        max_increment: 0.5,
        ..FlowOptions::default()
    };
    let b = solve_joint_rde(&noise, &osc, &grid, &[1.0], &opts, false).unwrap();
    let centre = 4;
    let y = b.last().psi_at(centre);
    // limit is (x1, x2 + π) up to the O(1/n) end point of the oscillator
    assert!((y[1] - std::f64::consts::PI).abs() < 0.05, "{y:?}");
}

#[test]
fn scale_and_shift_closed_forms() {
    // σ = 1, ν = x, g = 2: ψ = x + z1, I = x z2 + ∫ z1 dz2, θ = ∫ 2 e^{-I} dz3
    let noise = NoiseSpec::parse(1, &[vec!["1"]], &["x"], &["2"]).unwrap();
    let steps = 400;
    let driver = smooth_driver(3, steps);
    let z = driver.trace();
    let grid = Grid::uniform(-1.0, 1.0, 5, 1).unwrap();
    let b = solve_joint_rde(&noise, &driver, &grid, &[1.0], &fine(), false).unwrap();
    let s = b.last();
    // trapezoid quadrature on the same piecewise-linear path
    let fine_steps = steps * 50;
    let zs: Vec<Vec<f64>> = (0..=fine_steps)
        .map(|k| z.eval_vec(k as f64 / fine_steps as f64))
        .collect();
    let mut area = vec![0.0; fine_steps + 1];
    for k in 1..=fine_steps {
        area[k] = area[k - 1] + 0.5 * (zs[k - 1][0] + zs[k][0]) * (zs[k][1] - zs[k - 1][1]);
    }
    let z2 = zs[fine_steps][1];
    for i in 0..grid.len() {
        let x = grid.point_vec(i)[0];
        let li = |k: usize| x * zs[k][1] + area[k];
        assert!((s.log_scale[i] - li(fine_steps)).abs() < 1e-6);
        assert!((s.d_log_scale[i] - z2).abs() < 1e-9);
        assert!(s.d2_log_scale[i].abs() < 1e-9);
        let (mut th, mut dth, mut d2th) = (0.0, 0.0, 0.0);
        for k in 1..=fine_steps {
            let dz3 = zs[k][2] - zs[k - 1][2];
            let f = |k: usize| 2.0 * (-li(k)).exp();
            th += 0.5 * (f(k) + f(k - 1)) * dz3;
            dth += 0.5 * (-zs[k][1] * f(k) - zs[k - 1][1] * f(k - 1)) * dz3;
            d2th += 0.5 * (zs[k][1].powi(2) * f(k) + zs[k - 1][1].powi(2) * f(k - 1)) * dz3;
        }
        assert!((s.theta[i] - th).abs() < 1e-6, "{} vs {th}", s.theta[i]);
        assert!((s.dtheta[i] - dth).abs() < 1e-6);
        assert!((s.d2theta[i] - d2th).abs() < 1e-6);
    }
}

#[test]
fn staged_matches_joint() {
    let noise = NoiseSpec::parse(
        2,
        &[vec!["0.3*sin(y)", "0.2*x"], vec!["0.1", "0.2*cos(x)"]],
        &["0.3*x*y", "0.2*cos(y)"],
        &["0.5*exp(0.1*x)", "y"],
    )
    .unwrap();
    let driver = smooth_driver(noise.driver_dim(), 50);
    let grid = Grid::uniform(-1.0, 1.0, 5, 2).unwrap();
    let times = [0.25, 0.5, 1.0];
    let opts = FlowOptions {
        max_step: 1e-3,
        max_increment: 1e-2,
        ..FlowOptions::default()
    };
    let joint = solve_joint_rde(&noise, &driver, &grid, &times, &opts, false).unwrap();
    let staged = solve_staged(&noise, &driver, &grid, &times, &opts).unwrap();
    let mut worst = 0.0f64;
    for (a, b) in joint.slices.iter().zip(&staged.slices) {
        let pairs = [
            (&a.psi, &b.psi),
            (&a.jac, &b.jac),
            (&a.hess, &b.hess),
            (&a.log_scale, &b.log_scale),
            (&a.d_log_scale, &b.d_log_scale),
            (&a.d2_log_scale, &b.d2_log_scale),
            (&a.theta, &b.theta),
            (&a.dtheta, &b.dtheta),
            (&a.d2theta, &b.d2theta),
        ];
        for (u, v) in pairs {
            for (x, y) in u.iter().zip(v.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst < 1e-8, "joint vs staged {worst:e}");
}

#[test]
fn staged_rejects_area() {
    let noise = NoiseSpec::parse(1, &[vec!["1"]], &["x"], &[]).unwrap();
    let driver = pure_area_path(0.5, &[0.0, 0.5, 1.0]).unwrap();
    let grid = Grid::uniform(-1.0, 1.0, 3, 1).unwrap();
    let err = solve_staged(&noise, &driver, &grid, &[1.0], &fine()).unwrap_err();
    assert!(matches!(err, Error::AreaInStagedSolver { .. }));
}

#[test]
fn scale_overflow_is_reported() {
    let noise = NoiseSpec::parse(1, &[vec!["0"]], &["1000"], &[]).unwrap();
    let path = SampledPath::new(vec![0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0], 2).unwrap();
    let driver = path.lift();
    let grid = Grid::uniform(-1.0, 1.0, 3, 1).unwrap();
    let err = solve_joint_rde(&noise, &driver, &grid, &[1.0], &fine(), false).unwrap_err();
    assert!(matches!(err, Error::ScaleOverflow { .. }), "{err}");
}

#[test]
fn inverse_round_trip_and_second_derivatives() {
    let noise = NoiseSpec::parse(2, &[vec!["0.4*sin(y)", "0.3*x^2"], vec!["0.2*y", "0.1"]], &[], &[]).unwrap();
    let driver = smooth_driver(2, 30);
    let grid = Grid::uniform(-1.0, 1.0, 5, 2).unwrap();
    let opts = fine();
    let b = solve_joint_rde(&noise, &driver, &grid, &[1.0], &opts, false).unwrap();
    let s = b.last();
    let back = inverse_flow(&noise, &driver, 1.0, &s.psi, &opts).unwrap();
    for i in 0..grid.len() {
        let x = grid.point_vec(i);
        for a in 0..2 {
            assert!((back[2 * i + a] - x[a]).abs() < 1e-9);
        }
        // M J = I
        let (m, j) = (s.inv_jac_at(i), s.jac_at(i));
        for a in 0..2 {
            for c in 0..2 {
                let v: f64 = (0..2).map(|k| m[a * 2 + k] * j[k * 2 + c]).sum();
                assert!((v - if a == c { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        // D²ψ^{-1} at ψ(x) against differences of the inverse flow around ψ(x)
        let y = s.psi_at(i).to_vec();
        let h = 1e-3;
        for a in 0..2 {
            for c in 0..2 {
                let mut pts = Vec::new();
                for (sa, sc) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut p = y.clone();
                    p[a] += sa * h;
                    p[c] += sc * h;
                    pts.extend(p);
                }
                let g = inverse_flow(&noise, &driver, 1.0, &pts, &opts).unwrap();
                for k in 0..2 {
                    let fd = (g[k] - g[2 + k] - g[4 + k] + g[6 + k]) / (4.0 * h * h);
                    let got = s.inv_hess_at(i)[(k * 2 + a) * 2 + c];
                    assert!((fd - got).abs() < 1e-4, "{fd} vs {got}");
                }
            }
        }
    }
}

#[test]
fn refining_the_driver_partition_converges() {
    let noise = NoiseSpec::parse(2, &[vec!["0.4*sin(y)", "0.3*x"], vec!["0.2*y", "0.1"]], &["0.2*x"], &[]).unwrap();
    let base = smooth_driver(3, 20);
    let grid = Grid::uniform(-1.0, 1.0, 3, 2).unwrap();
    let run = |max_step: f64| {
        let opts = FlowOptions {
            max_step,
            max_increment: 10.0,
            ..FlowOptions::default()
        };
        solve_joint_rde(&noise, &base, &grid, &[1.0], &opts, false).unwrap()
    };
    let reference = run(1e-4);
    let err = |b: &FlowBundle| {
        b.last()
            .psi
            .iter()
            .zip(&reference.last().psi)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
    };
    let e1 = err(&run(0.05));
    let e2 = err(&run(0.025));
    assert!(e2 < e1 && e1 / e2 > 8.0, "{e1:e} {e2:e}");
}

#[test]
fn milstein_converges_to_log_ode() {
    let noise = NoiseSpec::parse(1, &[vec!["sin(x)"]], &["0.5*x"], &["1"]).unwrap();
    let driver = smooth_driver(3, 20);
    let grid = Grid::uniform(-1.0, 1.0, 5, 1).unwrap();
    let log = solve_joint_rde(&noise, &driver, &grid, &[1.0], &fine(), false).unwrap();
    let mil = |step: f64| {
        let opts = FlowOptions {
            method: FlowMethod::Milstein,
            max_step: step,
            max_increment: step,
        };
        let b = solve_joint_rde(&noise, &driver, &grid, &[1.0], &opts, false).unwrap();
        b.last()
            .psi
            .iter()
            .zip(&log.last().psi)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (mil(1e-2), mil(2.5e-3));
    assert!(e2 < e1 / 2.0 && e2 < 1e-3, "{e1:e} {e2:e}");
}

#[test]
fn bundle_csv_round_trip() {
    let noise = NoiseSpec::parse(1, &[vec!["sin(x)"]], &["0.5*x"], &["1"]).unwrap();
    let driver = smooth_driver(3, 10);
    let grid = Grid::uniform(-1.0, 1.0, 4, 1).unwrap();
    let b = solve_joint_rde(&noise, &driver, &grid, &[0.5, 1.0], &fine(), true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.csv");
    b.write_csv(&path).unwrap();
    let back = FlowBundle::read_csv(&path, &grid).unwrap();
    assert_eq!(back.slices.len(), 2);
    for (a, c) in b.slices.iter().zip(&back.slices) {
        assert_eq!(a.psi, c.psi);
        assert_eq!(a.theta, c.theta);
        assert_eq!(a.psi_inv, c.psi_inv);
    }
}
