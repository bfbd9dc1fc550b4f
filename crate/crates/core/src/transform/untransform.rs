//! Maps between the original unknown `u` and the transformed unknown `ũ`.

use crate::error::{Error, Result};
use crate::flows::FlowBundle;
use crate::pdesolve::GridFunction;

fn check_grid(f: &GridFunction, bundle: &FlowBundle) -> Result<()> {
    if f.grid != bundle.grid {
        return Err(Error::GridMismatch(format!(
            "function grid {} vs bundle grid {}",
            f.grid.spec(),
            bundle.grid.spec()
        )));
    }
    Ok(())
}

/// `u(t,y) = E(t,x)·(ũ(t,x) + θ(t,x))` at `x = ψ_t^{-1}(y)`, by multilinear interpolation
/// of `E(ũ + θ)` on the grid. Points whose preimage leaves the box are clamped and noted.
/// The boundary width grows by the largest displacement of `ψ_t^{-1}`.
pub fn untransform_solution(u_tilde: &GridFunction, bundle: &FlowBundle) -> Result<GridFunction> {
    check_grid(u_tilde, bundle)?;
    let grid = &u_tilde.grid;
    let n = grid.dim();
    let mut out = u_tilde.clone();
    for (k, &t) in u_tilde.times.iter().enumerate() {
        let s = bundle.slice_at(t)?;
        let inv = s.psi_inv.as_ref().ok_or(Error::MissingInverse(t))?;
        let w: Vec<f64> = (0..grid.len())
            .map(|i| s.scale(i) * (u_tilde.values[k][i] + s.theta[i]))
            .collect();
        let mut outside = 0usize;
        let mut shift = 0.0f64;
        let mut y = vec![0.0; n];
        for i in 0..grid.len() {
            let x = &inv[i * n..(i + 1) * n];
            let (v, o) = grid.interpolate(&w, x);
            outside += usize::from(o);
            grid.point(i, &mut y);
            let d = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            shift = shift.max(d);
            out.values[k][i] = v;
        }
        out.boundary_width[k] = u_tilde.boundary_width[k] + shift;
        if outside > 0 {
            out.notes.push(format!(
                "t = {t}: {outside} nodes have preimages outside the box (boundary extrapolation)"
            ));
        }
    }
    Ok(out)
}

/// `ũ(t,x) = u(t, ψ_t(x)) / E(t,x) - θ(t,x)`.
pub fn forward_transform(u: &GridFunction, bundle: &FlowBundle) -> Result<GridFunction> {
    check_grid(u, bundle)?;
    let grid = &u.grid;
    let mut out = u.clone();
    for (k, &t) in u.times.iter().enumerate() {
        let s = bundle.slice_at(t)?;
        let mut outside = 0usize;
        let mut disp = 0.0f64;
        let mut y = vec![0.0; grid.dim()];
        for i in 0..grid.len() {
            let (v, o) = grid.interpolate(&u.values[k], s.psi_at(i));
            outside += usize::from(o);
            grid.point(i, &mut y);
            let d = s
                .psi_at(i)
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            disp = disp.max(d);
            out.values[k][i] = v * s.inv_scale(i) - s.theta[i];
        }
        out.boundary_width[k] = u.boundary_width[k] + disp;
        if outside > 0 {
            out.notes.push(format!(
                "t = {t}: {outside} nodes map outside the box (boundary extrapolation)"
            ));
        }
    }
    Ok(out)
}
