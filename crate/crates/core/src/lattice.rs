//! Random-walk lattice for the backward equation along a fixed noise path.
//!
//! `W` is replaced by a symmetric walk with steps `±sqrt(dt)`, so the
//! conditional expectation of a backward step is `½(up) + ½(down)`. The
//! lattice is rectangular: nodes `x_i = (i - J) sqrt(dt)` with
//! `J = Nt + ceil(R / sqrt(dt)) + 1`, wide enough that a walk started
//! anywhere in `D` never sees a value influenced by the frontier.
//!
//! The two-sided integral `-½ ∫ g * dW` enters as the drift `+∫ div g dt`,
//! valid for `g` smooth in `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{Env, EvalError, Expr};
use crate::grid::{coefficient_slices, penalty_step, project_step, solve, GridSolution, PenaltyMode, SolveError, SolveMode};
use crate::model::{path_seed, Discretization, NoisePath, Obstacle, ProblemSpec};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("evaluating test function: {0}")]
    Eval(#[from] EvalError),
    #[error("energy identity needs a deterministic lower-obstacle problem: {0}")]
    IllPosed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeMode {
    Free,
    Projected,
    Penalized { n: f64, submode: PenaltyMode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSolution {
    pub horizon: f64,
    pub dt: f64,
    /// Node spacing `sqrt(dt)`.
    pub step: f64,
    /// Index of the node at `x = 0`.
    pub half_width: usize,
    /// `y[k][i]` for `k = 0..=Nt`.
    pub y: Vec<Vec<f64>>,
    /// `z[k][i] = (y[k+1][i+1] - y[k+1][i-1]) / (2 sqrt(dt))`.
    pub z: Vec<Vec<f64>>,
    /// Pointwise increments of `K⁺` on `[t_k, t_{k+1})`, `k = 0..Nt`.
    pub kp: Vec<Vec<f64>>,
    pub km: Vec<Vec<f64>>,
}

impl LatticeSolution {
    pub fn nt(&self) -> usize {
        self.kp.len()
    }

    pub fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn node_x(&self, i: usize) -> f64 {
        (i as f64 - self.half_width as f64) * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.width()).map(|i| self.node_x(i)).collect()
    }

    /// Nearest node to `x`, clamped to the lattice.
    pub fn nearest(&self, x: f64) -> usize {
        let i = (x / self.step).round() as i64 + self.half_width as i64;
        i.clamp(0, self.width() as i64 - 1) as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.nt() {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
}

fn symmetric_difference(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / h
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / h
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Backward induction on the lattice. Coefficients at step `k` are evaluated
/// at `t_{k+1}` on the lattice values `(y, z)` of slice `k + 1`; the obstacle
/// treatment matches the grid solver's.
pub fn lattice_solve(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    mode: LatticeMode,
) -> Result<LatticeSolution, SolveError> {
    spec.validate()?;
    let nt = disc.nt;
    if noise.nt() != nt || noise.d1() != spec.d1 {
        return Err(SolveError::Shape(format!(
            "noise path is {}x{}, lattice needs {}x{}",
            noise.nt(),
            noise.d1(),
            nt,
            spec.d1
        )));
    }
    let dt = disc.dt(spec.horizon);
    let step = dt.sqrt();
    let half_width = nt + (disc.radius / step).ceil() as usize + 1;
    let width = 2 * half_width + 1;
    let xs: Vec<f64> = (0..width).map(|i| (i as f64 - half_width as f64) * step).collect();
    let times = disc.times(spec.horizon);

    let mut y = vec![Vec::new(); nt + 1];
    let mut z = vec![Vec::new(); nt + 1];
    let mut kp = vec![vec![0.0; width]; nt];
    let mut km = vec![vec![0.0; width]; nt];
    y[nt] = spec.terminal_slice(&xs)?;
    z[nt] = symmetric_difference(&y[nt], step);

    for k in (0..nt).rev() {
        let next = &y[k + 1];
        let co = coefficient_slices(
            &spec.f,
            &spec.g,
            &spec.h,
            k + 1,
            times[k + 1],
            &xs,
            Some(next),
            Some(&z[k + 1]),
        )?;
        let div_g = symmetric_difference(&co.g, step);
        let db = &noise.increments[k];
        let mut v: Vec<f64> = (0..width)
            .map(|i| {
                let down = if i == 0 { next[i] } else { next[i - 1] };
                let up = if i == width - 1 { next[i] } else { next[i + 1] };
                let mut s = 0.5 * (up + down) + co.f[i] * dt + div_g[i] * dt;
                for (hj, &dbj) in co.h.iter().zip(db) {
                    s += hj[i] * dbj;
                }
                s
            })
            .collect();
        z[k] = symmetric_difference(next, step);

        if mode == LatticeMode::Free {
            y[k] = v;
            continue;
        }
        let lo = spec.obstacle_slice(Obstacle::Lower, k, times[k], &xs)?;
        let hi = spec.obstacle_slice(Obstacle::Upper, k, times[k], &xs)?;
        let r = match mode {
            LatticeMode::Penalized { n, submode } => {
                if let Some(j) = (0..width).find(|&j| lo[j] > hi[j]) {
                    return Err(SolveError::ObstacleCrossing { k, j, lower: lo[j], upper: hi[j] });
                }
                penalty_step(&v, &lo, &hi, n, dt, submode)
            }
            _ => project_step(&v, &lo, &hi).map_err(|e| SolveError::ObstacleCrossing {
                k,
                j: e.j,
                lower: e.lower,
                upper: e.upper,
            })?,
        };
        v = r.u;
        kp[k] = r.dkp;
        km[k] = r.dkm;
        y[k] = v;
    }

    Ok(LatticeSolution {
        horizon: spec.horizon,
        dt,
        step,
        half_width,
        y,
        z,
        kp,
        km,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeynmanKacResidual {
    pub sup_err_y: f64,
    pub sup_err_z: f64,
}

fn interpolate(values: &[f64], x0: f64, dx: f64, x: f64) -> f64 {
    let p = (x - x0) / dx;
    let j = (p.floor().max(0.0) as usize).min(values.len() - 2);
    let w = p - j as f64;
    values[j] * (1.0 - w) + values[j + 1] * w
}

/// Sup distance between lattice `(y, z)` and the grid's `(u, ∇u)` linearly
/// interpolated at every lattice node inside `[-R + dx, R - dx]`, over all
/// time slices.
pub fn feynman_kac_residual(grid: &GridSolution, lat: &LatticeSolution, disc: &Discretization) -> FeynmanKacResidual {
    assert_eq!(lat.nt(), disc.nt, "grid and lattice must share the time grid");
    let dx = disc.dx();
    let x0 = -disc.radius + dx;
    let x1 = disc.radius - dx;
    let inside: Vec<usize> = (0..lat.width())
        .filter(|&i| {
            let x = lat.node_x(i);
            x >= x0 - 1e-12 && x <= x1 + 1e-12
        })
        .collect();
    let mut out = FeynmanKacResidual { sup_err_y: 0.0, sup_err_z: 0.0 };
    for k in 0..=disc.nt {
        for &i in &inside {
            let x = lat.node_x(i);
            let u = interpolate(&grid.u.values[k], x0, dx, x);
            let du = interpolate(&grid.u.grad[k], x0, dx, x);
            out.sup_err_y = out.sup_err_y.max((lat.y[k][i] - u).abs());
            out.sup_err_z = out.sup_err_z.max((lat.z[k][i] - du).abs());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Push {
    /// `K⁺` / `ν⁺`.
    Up,
    /// `K⁻` / `ν⁻`.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Walk from a uniform start in `[-R, R]` (snapped to the lattice) at slice
/// `k0`, returning the node index at every slice `k0..=Nt`. Generator seed is
/// `seed XOR index`.
fn walk(lat: &LatticeSolution, radius: f64, k0: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, index));
    let x0: f64 = rng.random_range(-radius..radius);
    let mut i = lat.nearest(x0);
    let last = lat.width() - 1;
    let mut path = Vec::with_capacity(lat.nt() - k0 + 1);
    path.push(i);
    for _ in k0..lat.nt() {
        i = if rng.random::<bool>() { (i + 1).min(last) } else { i.saturating_sub(1) };
        path.push(i);
    }
    path
}

/// Monte Carlo estimate of `ν(φ) = E^m Σ_k φ(t_k, W_k) ΔK_k` with `W_0`
/// uniform on `D` and total weight `|D| = 2R`. `φ` may read `t`, `x` and the
/// lattice `y`, `z1`. Paths run concurrently; the result does not depend on
/// scheduling.
pub fn measure_mc(
    lat: &LatticeSolution,
    phi: &Expr,
    which: Push,
    radius: f64,
    paths: usize,
    seed: u64,
) -> Result<McEstimate, LatticeError> {
    assert!(paths >= 1, "measure_mc needs at least one path");
    let increments = match which {
        Push::Up => &lat.kp,
        Push::Down => &lat.km,
    };
    // φ·ΔK on the whole lattice, once.
    let weighted: Vec<Vec<f64>> = increments
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(i, &dk)| {
                    if dk == 0.0 {
                        return Ok(0.0);
                    }
                    let env = Env {
                        t: lat.time(k),
                        x: lat.node_x(i),
                        y: lat.y[k][i],
                        z1: lat.z[k][i],
                    };
                    Ok(phi.eval(&env)? * dk)
                })
                .collect::<Result<Vec<f64>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;
    let samples: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            walk(lat, radius, 0, seed, p)
                .iter()
                .take(lat.nt())
                .enumerate()
                .map(|(k, &i)| weighted[k][i])
                .sum()
        })
        .collect();
    let (mean, se) = mean_and_stderr(&samples);
    let weight = 2.0 * radius;
    Ok(McEstimate {
        estimate: weight * mean,
        stderr: weight * se,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPoint {
    pub k: usize,
    pub t: f64,
    /// `‖u_t‖² + Σ_{s ≥ t} ‖∇u_s‖² dt` from the grid.
    pub lhs: f64,
    /// Monte Carlo `E^m (A_T - A_t)²` on the lattice.
    pub rhs: f64,
    pub stderr: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub points: Vec<EnergyPoint>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Relative tolerance of the energy identity check (plus three standard errors).
pub const ENERGY_REL_TOL: f64 = 0.05;

/// Compares both sides of `‖u_t‖² + ∫_t^T ‖∇u_s‖² ds = E^m (A_T - A_t)²` at
/// `t = 0, T/5, …, 4T/5` for a deterministic problem with a lower obstacle
/// only. Walks for checkpoint `c` use path indices `c·M .. (c+1)·M`.
pub fn energy_identity_check(
    spec: &ProblemSpec,
    disc: &Discretization,
    paths: usize,
    seed: u64,
) -> Result<EnergyReport, LatticeError> {
    if !spec.h.iter().all(Expr::is_literal_zero) {
        return Err(LatticeError::IllPosed("h must be zero (no noise)".into()));
    }
    if !spec.f.is_literal_zero() || !spec.g.is_literal_zero() {
        return Err(LatticeError::IllPosed("f and g must be zero".into()));
    }
    let noise = NoisePath::zero(disc.nt, spec.d1, spec.horizon);
    let grid = solve(spec, disc, &noise, None, SolveMode::Projected)?;
    if grid.nu_minus.total_mass() > 0.0 {
        return Err(LatticeError::IllPosed("upper obstacle is active".into()));
    }
    let lat = lattice_solve(spec, disc, &noise, LatticeMode::Projected)?;
    let dt = disc.dt(spec.horizon);
    let weight = disc.domain_length();
    let energy = &grid.diagnostics.energy;

    let mut points = Vec::new();
    for c in 0..5usize {
        let k0 = c * disc.nt / 5;
        let lhs = energy[k0].norm_sq + energy[k0..disc.nt].iter().map(|e| e.grad_norm_sq * dt).sum::<f64>();
        let base = (c * paths) as u64;
        let samples: Vec<f64> = (0..paths as u64)
            .into_par_iter()
            .map(|p| {
                let path = walk(&lat, disc.radius, k0, seed, base + p);
                let a: f64 = path
                    .iter()
                    .take(disc.nt - k0)
                    .enumerate()
                    .map(|(s, &i)| lat.kp[k0 + s][i])
                    .sum();
                a * a
            })
            .collect();
        let (mean, se) = mean_and_stderr(&samples);
        let (rhs, stderr) = (weight * mean, weight * se);
        let diff = (lhs - rhs).abs();
        let rel_err = if diff == 0.0 { 0.0 } else { diff / lhs.abs() };
        points.push(EnergyPoint {
            k: k0,
            t: k0 as f64 * dt,
            lhs,
            rhs,
            stderr,
            rel_err,
            pass: diff <= ENERGY_REL_TOL * lhs.abs() + 3.0 * stderr,
        });
    }
    let max_rel_err = points.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    let pass = points.iter().all(|p| p.pass);
    Ok(EnergyReport { points, max_rel_err, pass })
}
