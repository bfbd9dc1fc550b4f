//! One-step integrators for systems `dy = Σ_k U_k(y) dz^k` driven by level-2 increments.
//!
//! Channel 0 is time; channels `1..=m` follow the driver components. Time-space
//! increments are taken with zero area between time and the driver, which is exact for
//! piecewise-linear lifts and for pure-area paths.

use crate::roughpath::GroupElement2;

/// Vector fields `U_0, ..., U_m` on a state space of dimension `state_dim`.
pub trait DrivenFields: Sync {
    fn state_dim(&self) -> usize;

    /// Number of channels including time.
    fn channels(&self) -> usize;

    fn eval(&self, k: usize, y: &[f64], out: &mut [f64]);

    /// Channels whose field vanishes identically may be skipped.
    fn is_active(&self, _k: usize) -> bool {
        true
    }

    /// `DU_k(y) v`, by default a central difference.
    fn directional_derivative(&self, k: usize, y: &[f64], v: &[f64], out: &mut [f64], ws: &mut FdScratch) {
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if vn == 0.0 {
            out.fill(0.0);
            return;
        }
        let yn = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        let eps = 1e-6 * (1.0 + yn) / vn;
        for i in 0..y.len() {
            ws.plus[i] = y[i] + eps * v[i];
            ws.minus[i] = y[i] - eps * v[i];
        }
        self.eval(k, &ws.plus, &mut ws.f_plus);
        self.eval(k, &ws.minus, &mut ws.f_minus);
        for i in 0..out.len() {
            out[i] = (ws.f_plus[i] - ws.f_minus[i]) / (2.0 * eps);
        }
    }
}

pub struct FdScratch {
    plus: Vec<f64>,
    minus: Vec<f64>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
}

impl FdScratch {
    pub fn new(n: usize) -> Self {
        Self {
            plus: vec![0.0; n],
            minus: vec![0.0; n],
            f_plus: vec![0.0; n],
            f_minus: vec![0.0; n],
        }
    }
}

/// Time-space increment over one step: `dt`, driver increment and the strictly upper
/// triangular Lévy areas that are nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIncrement {
    pub dt: f64,
    pub element: GroupElement2,
    areas: Vec<(usize, usize, f64)>,
}

impl StepIncrement {
    pub fn new(dt: f64, element: GroupElement2) -> Self {
        let d = element.dim();
        let mut areas = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                let a = element.area(i, j);
                if a != 0.0 {
                    areas.push((i, j, a));
                }
            }
        }
        Self { dt, element, areas }
    }

    pub fn has_area(&self) -> bool {
        !self.areas.is_empty()
    }

    /// Splits into `m` equal pieces (uniform-rate model).
    pub fn split(&self, m: usize) -> Vec<StepIncrement> {
        if m <= 1 {
            return vec![self.clone()];
        }
        let piece = StepIncrement::new(self.dt / m as f64, self.element.portion(1.0 / m as f64));
        vec![piece; m]
    }

    pub fn inverse(&self) -> StepIncrement {
        StepIncrement::new(-self.dt, self.element.inverse())
    }
}

/// Buffers reused across steps of one state.
pub struct Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    acc: Vec<f64>,
    ui: Vec<f64>,
    uj: Vec<f64>,
    dv: Vec<f64>,
    fd: FdScratch,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
            acc: vec![0.0; n],
            ui: vec![0.0; n],
            uj: vec![0.0; n],
            dv: vec![0.0; n],
            fd: FdScratch::new(n),
        }
    }
}

/// `W(y) = dt U_0 + Σ inc_k U_k + Σ_{i<j} A_ij [U_i, U_j]` with `[U,V] = DV·U - DU·V`.
fn log_vector_field<F: DrivenFields + ?Sized>(
    f: &F,
    inc: &StepIncrement,
    y: &[f64],
    out: &mut [f64],
    ws_acc: &mut Vec<f64>,
    ui: &mut [f64],
    uj: &mut [f64],
    dv: &mut [f64],
    fd: &mut FdScratch,
) {
    out.fill(0.0);
    let coeff = |k: usize| if k == 0 { inc.dt } else { inc.element.inc()[k - 1] };
    for k in 0..f.channels() {
        let c = coeff(k);
        if c == 0.0 || !f.is_active(k) {
            continue;
        }
        f.eval(k, y, ws_acc);
        for (o, v) in out.iter_mut().zip(ws_acc.iter()) {
            *o += c * v;
        }
    }
    for &(i, j, a) in &inc.areas {
        let (ci, cj) = (i + 1, j + 1);
        if !f.is_active(ci) || !f.is_active(cj) {
            continue;
        }
        f.eval(ci, y, ui);
        f.eval(cj, y, uj);
        f.directional_derivative(cj, y, ui, dv, fd);
        for (o, v) in out.iter_mut().zip(dv.iter()) {
            *o += a * v;
        }
        f.directional_derivative(ci, y, uj, dv, fd);
        for (o, v) in out.iter_mut().zip(dv.iter()) {
            *o -= a * v;
        }
    }
}

/// Log-ODE step: one classical RK4 step on `ẏ = W(y)` over unit time. For area-free
/// increments this is RK4 for the segment ODE with step `dt`.
pub fn log_ode_step<F: DrivenFields + ?Sized>(f: &F, y: &mut [f64], inc: &StepIncrement, ws: &mut Workspace) {
    let n = y.len();
    let Workspace {
        k,
        stage,
        acc,
        ui,
        uj,
        dv,
        fd,
    } = ws;
    let [k1, k2, k3, k4] = k;
    log_vector_field(f, inc, y, k1, acc, ui, uj, dv, fd);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * k1[i];
    }
    log_vector_field(f, inc, stage, k2, acc, ui, uj, dv, fd);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * k2[i];
    }
    log_vector_field(f, inc, stage, k3, acc, ui, uj, dv, fd);
    for i in 0..n {
        stage[i] = y[i] + k3[i];
    }
    log_vector_field(f, inc, stage, k4, acc, ui, uj, dv, fd);
    for i in 0..n {
        y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
}

/// Level-2 (Milstein-type) step `y += Σ_k U_k inc_k + Σ_{i,j} DU_j·U_i L_ij` on the
/// time-space increment (`L_00 = dt²/2`, `L_0j = L_j0 = dt inc_j / 2`).
pub fn rde_step<F: DrivenFields + ?Sized>(f: &F, y: &mut [f64], inc: &StepIncrement, ws: &mut Workspace) {
    let m = inc.element.dim();
    let c = |k: usize| if k == 0 { inc.dt } else { inc.element.inc()[k - 1] };
    let l2 = |i: usize, j: usize| match (i, j) {
        (0, 0) => 0.5 * inc.dt * inc.dt,
        (0, j) => 0.5 * inc.dt * inc.element.inc()[j - 1],
        (i, 0) => 0.5 * inc.dt * inc.element.inc()[i - 1],
        (i, j) => inc.element.l2(i - 1, j - 1),
    };
    let Workspace { acc, ui, dv, fd, .. } = ws;
    acc.fill(0.0);
    let channels = f.channels().min(m + 1);
    for i in 0..channels {
        if !f.is_active(i) {
            continue;
        }
        f.eval(i, y, ui);
        let ci = c(i);
        for (a, v) in acc.iter_mut().zip(ui.iter()) {
            *a += ci * *v;
        }
        for j in 0..channels {
            let l = l2(i, j);
            if l == 0.0 || !f.is_active(j) {
                continue;
            }
            f.directional_derivative(j, y, ui, dv, fd);
            for (a, v) in acc.iter_mut().zip(dv.iter()) {
                *a += l * v;
            }
        }
    }
    for (yi, a) in y.iter_mut().zip(acc.iter()) {
        *yi += a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar fields: channel 1 is `y`, channel 2 is `2y` (commuting).
    struct Linear;

    impl DrivenFields for Linear {
        fn state_dim(&self) -> usize {
            1
        }
        fn channels(&self) -> usize {
            3
        }
        fn eval(&self, k: usize, y: &[f64], out: &mut [f64]) {
            out[0] = match k {
                0 => 0.0,
                1 => y[0],
                _ => 2.0 * y[0],
            };
        }
    }

    #[test]
    fn milstein_matches_taylor() {
        let h = 0.1;
        let inc = StepIncrement::new(0.0, GroupElement2::segment(&[h, 0.0]));
        let mut y = [1.5];
        rde_step(&Linear, &mut y, &inc, &mut Workspace::new(1));
        let expect = 1.5 * (1.0 + h + 0.5 * h * h);
        assert!((y[0] - expect).abs() < 1e-8);
    }

    #[test]
    fn zero_increment_is_identity() {
        let inc = StepIncrement::new(0.0, GroupElement2::identity(2));
        let mut y = [0.7];
        rde_step(&Linear, &mut y, &inc, &mut Workspace::new(1));
        assert_eq!(y[0], 0.7);
        log_ode_step(&Linear, &mut y, &inc, &mut Workspace::new(1));
        assert_eq!(y[0], 0.7);
    }

    #[test]
    fn commuting_fields_ignore_area() {
        let inc = StepIncrement::new(0.0, GroupElement2::pure_area(2, &[0.0, 0.4, -0.4, 0.0]));
        let mut y = [0.7];
        rde_step(&Linear, &mut y, &inc, &mut Workspace::new(1));
        assert!((y[0] - 0.7).abs() < 1e-9);
        log_ode_step(&Linear, &mut y, &inc, &mut Workspace::new(1));
        assert!((y[0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn log_ode_is_fourth_order_on_linear_segments() {
        let err = |steps: usize| {
            let h = 1.0 / steps as f64;
            let mut y = [1.0];
            let inc = StepIncrement::new(0.0, GroupElement2::segment(&[h, 0.0]));
            let mut ws = Workspace::new(1);
            for _ in 0..steps {
                log_ode_step(&Linear, &mut y, &inc, &mut ws);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = err(8) / err(16);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
