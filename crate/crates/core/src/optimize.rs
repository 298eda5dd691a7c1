//! Fidelity recovery by constrained local optimization of node settings.
//!
//! Each node reflectivity is parametrized as `R = cos^2(theta)`, so the box
//! `[R_min, R_max]` becomes a box in `theta`. Node phases and output phases
//! are free. The minimizer is a projected quasi-Newton method: BFGS on the
//! free variables with an active set for variables pinned at their bounds and
//! a projected Armijo backtracking line search. After the first descent a
//! fixed number of seeded restarts perturb the phases and pull pinned angles
//! inward; the best point found is kept.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::decompose::{square_decompose, clip_to_hardware};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mesh::{
    self, mesh_unitary, HardwareSample, LayoutKind, MeshLayout, MeshSettings, NodeSetting,
};
use crate::seed;
use crate::unitary::{self, UnitaryMatrix};
use rand::Rng;

/// Slack allowed when checking that a start point respects its hardware ranges.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    #[serde(skip)]
    pub settings: MeshSettings,
    pub fidelity_before: f64,
    pub fidelity_after: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective `1 - F` after every accepted iteration, starting point first.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Ratio of infidelities, direct over optimized.
///
/// Returns 1 when the two fidelities agree to 1e-15 and `f64::INFINITY` when
/// the optimized fidelity is 1 to that precision.
pub fn enhancement_ratio(before: f64, after: f64) -> f64 {
    const EPS: f64 = 1e-15;
    if (before - after).abs() <= EPS {
        return 1.0;
    }
    let lost_after = 1.0 - after;
    if lost_after <= EPS {
        return f64::INFINITY;
    }
    (1.0 - before) / lost_after
}

/// Format an enhancement ratio for reports, using "∞" for the sentinel.
pub fn format_enhancement(ratio: f64) -> String {
    if ratio.is_infinite() {
        "∞".to_string()
    } else {
        format!("{ratio}")
    }
}

/// Start point for a redundant square mesh: the clipped square decomposition
/// on the first `N` layers, every extra node as reflective as its hardware allows.
pub fn initial_guess_redundant(u: &UnitaryMatrix, layout: &MeshLayout, hw: &HardwareSample) -> Result<MeshSettings> {
    if layout.kind() != LayoutKind::Square {
        return Err(Error::InvalidArgument(
            "redundant initial guess needs a square layout".into(),
        ));
    }
    if layout.n_modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_modes(),
            found: u.dim(),
        });
    }
    hw.check_layout(layout)?;
    let base = square_decompose(u)?;
    let base_len = base.per_node().len();
    let base_hw = HardwareSample::from_parts(
        base.layout().clone(),
        hw.sigma(),
        hw.seed(),
        hw.nodes()[..base_len].to_vec(),
    )?;
    let (clipped, _) = clip_to_hardware(&base, &base_hw)?;
    let mut per_node = clipped.per_node().to_vec();
    per_node.extend(hw.nodes()[base_len..].iter().map(|h| NodeSetting {
        reflectivity: h.r_max,
        phase: 0.0,
    }));
    MeshSettings::new(layout.clone(), per_node, clipped.output_phases().to_vec())
}

/// `1 - F(target, mesh(x))` over the variable vector
/// `[theta_1, phi_1, ..., theta_K, phi_K, delta_1, ..., delta_N]`.
pub struct FidelityObjective<'a> {
    target: &'a UnitaryMatrix,
    layout: &'a MeshLayout,
}

impl<'a> FidelityObjective<'a> {
    pub fn new(target: &'a UnitaryMatrix, layout: &'a MeshLayout) -> Result<Self> {
        if target.dim() != layout.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_modes(),
                found: target.dim(),
            });
        }
        Ok(Self { target, layout })
    }

    pub fn n_vars(&self) -> usize {
        2 * self.layout.len() + self.layout.n_modes()
    }

    /// Variable vector for `settings`.
    pub fn encode(&self, settings: &MeshSettings) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        for s in settings.per_node() {
            x.push(theta_of(s.reflectivity));
            x.push(s.phase);
        }
        x.extend_from_slice(settings.output_phases());
        x
    }

    /// Settings for `x`, with phases wrapped.
    pub fn decode(&self, x: &[f64]) -> Result<MeshSettings> {
        let k = self.layout.len();
        let per_node = (0..k)
            .map(|i| NodeSetting {
                reflectivity: x[2 * i].cos().powi(2).clamp(0.0, 1.0),
                phase: x[2 * i + 1],
            })
            .collect();
        MeshSettings::new(self.layout.clone(), per_node, x[2 * k..].to_vec())
    }

    fn forward(&self, x: &[f64]) -> ComplexMatrix {
        let n = self.layout.n_modes();
        let mut m = ComplexMatrix::identity(n).expect("n >= 2");
        for (i, node) in self.layout.nodes().iter().enumerate() {
            m.apply_rows(node.top_mode, &theta_block(x[2 * i], x[2 * i + 1]));
        }
        mesh::apply_output_phases(&mut m, &x[2 * self.layout.len()..]);
        m
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.layout.n_modes() as f64;
        let m = self.forward(x);
        1.0 - unitary::overlap(self.target, &m).norm_sqr() / (n * n)
    }

    /// Objective value, writing the analytic gradient into `grad`.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.layout.n_modes();
        let k = self.layout.len();
        let nn = (n * n) as f64;
        let m = self.forward(x);
        let tau = unitary::overlap(self.target, &m);
        let scale = -2.0 / nn;
        let d_of = |dtau: Complex64| scale * (tau.conj() * dtau).re;

        // M = D A_k T_k B_k; C_k = B_k U^dag D A_k obeys
        // C_1 = U^dag M T_1^dag and C_{k+1} = T_k C_k T_{k+1}^dag.
        let i = Complex64::i();
        let udag = self.target.adjoint();
        for row in 0..n {
            let dtau: Complex64 = (0..n).map(|j| udag[(j, row)] * m[(row, j)]).sum::<Complex64>() * i;
            grad[2 * k + row] = d_of(dtau);
        }
        if k == 0 {
            return 1.0 - tau.norm_sqr() / nn;
        }
        let nodes = self.layout.nodes();
        let mut c = udag.matmul(&m).expect("square");
        c.apply_cols(nodes[0].top_mode, &adjoint(&theta_block(x[0], x[1])));
        for (idx, node) in nodes.iter().enumerate() {
            let (theta, phi) = (x[2 * idx], x[2 * idx + 1]);
            let mm = node.top_mode;
            let (st, ct) = theta.sin_cos();
            let e = Complex64::from_polar(1.0, phi);
            // dT/dtheta and dT/dphi on the 2x2 block
            let dth = [[-e * st, Complex64::new(-ct, 0.0)], [e * ct, Complex64::new(-st, 0.0)]];
            let dph = [[i * e * ct, Complex64::new(0.0, 0.0)], [i * e * st, Complex64::new(0.0, 0.0)]];
            let trace = |dt: &[[Complex64; 2]; 2]| -> Complex64 {
                let mut s = Complex64::new(0.0, 0.0);
                for a in 0..2 {
                    for b in 0..2 {
                        s += c[(mm + b, mm + a)] * dt[a][b];
                    }
                }
                s
            };
            grad[2 * idx] = d_of(trace(&dth));
            grad[2 * idx + 1] = d_of(trace(&dph));
            if idx + 1 < k {
                c.apply_rows(mm, &theta_block(theta, phi));
                let next = &nodes[idx + 1];
                c.apply_cols(next.top_mode, &adjoint(&theta_block(x[2 * idx + 2], x[2 * idx + 3])));
            }
        }
        1.0 - tau.norm_sqr() / nn
    }
}

fn theta_of(reflectivity: f64) -> f64 {
    reflectivity.clamp(0.0, 1.0).sqrt().acos()
}

fn theta_block(theta: f64, phi: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    [[e * c, Complex64::new(-s, 0.0)], [e * s, Complex64::new(c, 0.0)]]
}

fn adjoint(b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [[b[0][0].conj(), b[1][0].conj()], [b[0][1].conj(), b[1][1].conj()]]
}

/// Box bounds per variable; phases are unbounded.
fn bounds(layout: &MeshLayout, hw: &HardwareSample) -> (Vec<f64>, Vec<f64>) {
    let n_vars = 2 * layout.len() + layout.n_modes();
    let mut lo = vec![f64::NEG_INFINITY; n_vars];
    let mut hi = vec![f64::INFINITY; n_vars];
    for (i, h) in hw.nodes().iter().enumerate() {
        // theta decreases as R grows
        lo[2 * i] = theta_of(h.r_max);
        hi[2 * i] = theta_of(h.r_min);
    }
    (lo, hi)
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of perturbed restarts tried after the first local solve.
pub const RESTARTS: usize = 8;

/// Fraction of each reflectivity interval by which a pinned angle is pulled inward before a restart.
const KICK: f64 = 0.25;

struct LocalRun {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Locally minimize `1 - F(u, mesh(s))` subject to every node's hardware range.
///
/// Symmetric start points (for instance redundant nodes at phase 0) can be
/// saddle points, so after the first local solve the best point is perturbed
/// in its phases and re-solved a few times. Perturbations come from a fixed
/// seed, and a restart is kept only if it lowers the objective.
pub fn optimize_settings(
    u: &UnitaryMatrix,
    layout: &MeshLayout,
    hw: &HardwareSample,
    start: &MeshSettings,
    max_iters: usize,
    tol: f64,
) -> Result<OptimizationResult> {
    hw.check_layout(layout)?;
    if start.layout() != layout {
        return Err(Error::LayoutMismatch("start settings use a different layout".into()));
    }
    for (k, (s, h)) in start.per_node().iter().zip(hw.nodes()).enumerate() {
        if s.reflectivity < h.r_min - FEASIBILITY_SLACK || s.reflectivity > h.r_max + FEASIBILITY_SLACK {
            return Err(Error::Infeasible(format!(
                "node {k} reflectivity {} outside [{}, {}]",
                s.reflectivity, h.r_min, h.r_max
            )));
        }
    }
    let objective = FidelityObjective::new(u, layout)?;
    let fidelity_before = unitary::fidelity(u, &mesh_unitary(start))?;
    let (lo, hi) = bounds(layout, hw);

    let mut x0 = objective.encode(start);
    project(&mut x0, &lo, &hi);
    let mut trace = vec![objective.value(&x0)];
    let mut best = local_solve(&objective, x0, &lo, &hi, max_iters, tol, &mut trace);
    let mut iterations = best.iterations;
    let mut rng = seed::rng(seed::derive(0x0b7, &[layout.len() as u64]));
    for _ in 0..RESTARTS {
        if best.f <= tol || iterations >= max_iters {
            break;
        }
        let mut x = best.x.clone();
        for k in 0..layout.len() {
            x[2 * k + 1] += rng.random_range(-PI..PI);
            let (l, h) = (lo[2 * k], hi[2 * k]);
            let pull = KICK * (h - l) * rng.random::<f64>();
            if x[2 * k] - l <= h - x[2 * k] {
                x[2 * k] = (x[2 * k] + pull).min(h);
            } else {
                x[2 * k] = (x[2 * k] - pull).max(l);
            }
        }
        let mut scratch = Vec::new();
        let run = local_solve(&objective, x, &lo, &hi, max_iters - iterations, tol, &mut scratch);
        iterations += run.iterations;
        if run.f < best.f {
            trace.push(run.f);
            best = run;
        }
    }

    let mut settings = objective.decode(&best.x)?;
    for (k, h) in hw.nodes().iter().enumerate() {
        let r = settings.per_node()[k].reflectivity;
        settings.set_reflectivity(k, h.clamp(r));
    }
    let mut fidelity_after = unitary::fidelity(u, &mesh_unitary(&settings))?;
    if fidelity_after < fidelity_before {
        // roundoff in the parametrization can cost a few ulps; never return worse than the start
        settings = start.clone();
        fidelity_after = fidelity_before;
    }
    Ok(OptimizationResult {
        settings,
        fidelity_before,
        fidelity_after,
        iterations,
        converged: best.converged,
        trace,
    })
}

/// Projected BFGS from `x`, appending the objective after every accepted step to `trace`.
fn local_solve(
    objective: &FidelityObjective<'_>,
    mut x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
    tol: f64,
    trace: &mut Vec<f64>,
) -> LocalRun {
    let n_vars = x.len();
    let mut g = vec![0.0; n_vars];
    let mut f = objective.value_and_gradient(&x, &mut g);
    let mut h_inv = identity(n_vars);
    let mut iterations = 0;
    let mut converged = false;
    let mut xn = vec![0.0; n_vars];
    let mut gn = vec![0.0; n_vars];
    let mut prev_free: Vec<bool> = Vec::new();

    while iterations < max_iters {
        let free: Vec<bool> = (0..n_vars)
            .map(|j| !((x[j] <= lo[j] && g[j] > 0.0) || (x[j] >= hi[j] && g[j] < 0.0)))
            .collect();
        if !prev_free.is_empty() && free != prev_free {
            h_inv = identity(n_vars);
        }
        prev_free.clone_from(&free);
        let pg_norm = (0..n_vars).filter(|&j| free[j]).map(|j| g[j].abs()).fold(0.0, f64::max);
        if pg_norm < tol {
            converged = true;
            break;
        }

        let mut accepted = false;
        for use_bfgs in [true, false] {
            let d: Vec<f64> = (0..n_vars)
                .map(|a| {
                    if !free[a] {
                        return 0.0;
                    }
                    if use_bfgs {
                        -(0..n_vars).filter(|&b| free[b]).map(|b| h_inv[a][b] * g[b]).sum::<f64>()
                    } else {
                        -g[a]
                    }
                })
                .collect();
            if use_bfgs && dot(&d, &g) >= 0.0 {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..60 {
                for j in 0..n_vars {
                    xn[j] = x[j] + alpha * d[j];
                }
                project(&mut xn, lo, hi);
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let fnew = objective.value(&xn);
                if fnew <= f + 1e-4 * dot(&g, &step) && fnew <= f {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
            h_inv = identity(n_vars);
        }
        if !accepted {
            // no descent along the quasi-Newton or steepest-descent direction
            converged = true;
            break;
        }
        let fnew = objective.value_and_gradient(&xn, &mut gn);
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = (0..n_vars).map(|j| if free[j] { gn[j] - g[j] } else { 0.0 }).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if iterations == 1 {
                let gamma = sy / dot(&y, &y);
                for (j, row) in h_inv.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[j] = gamma;
                }
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        let decrease = f - fnew;
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        f = fnew;
        trace.push(f);
        if decrease < tol {
            converged = true;
            break;
        }
    }
    LocalRun {
        x,
        f,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect()
}

/// Inverse-Hessian BFGS update `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    for a in 0..n {
        for b in 0..n {
            h[a][b] += -rho * (hy[a] * s[b] + s[a] * hy[b]) + (rho * rho * yhy + rho) * s[a] * s[b];
        }
    }
}
