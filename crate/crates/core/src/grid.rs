//! Pathwise backward finite-difference solver on `D = [-R, R]`.
//!
//! One backward step from slice `k + 1` to slice `k` is split as heat step,
//! then explicit sources (`f`, `div g`, `h · ΔB_k`, all frozen at slice
//! `k + 1`), then the obstacle treatment of the selected [`SolveMode`].
//! Boundary conditions are homogeneous Neumann. Measure increments are stored
//! as mass per space-time cell (pointwise increment times `dx`).

use thiserror::Error;

use crate::dsl::{eval_slice, Expr, SliceEvalError};
use crate::model::{
    gradient, DiscreteMeasure, Discretization, FieldSeries, ModelError, NoisePath, Obstacle,
    ProblemSpec,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("evaluating {what} at slice {k}: {source}")]
    Eval {
        what: &'static str,
        k: usize,
        #[source]
        source: SliceEvalError,
    },
    #[error("obstacles cross at slice {k}, node {j}: lower {lower} > upper {upper}")]
    ObstacleCrossing {
        k: usize,
        j: usize,
        lower: f64,
        upper: f64,
    },
    #[error("coefficients depend on (y, z1) but no frozen fields were supplied")]
    MissingFrozenFields,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Which barrier(s) the penalty replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyMode {
    /// Upper barrier penalized, lower barrier reflected by projection.
    Upper,
    /// Both barriers penalized.
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Obstacles ignored.
    Free,
    /// Exact discrete reflection (clamp onto `[L, U]`).
    Projected,
    /// Implicit penalty of level `n`.
    Penalized { n: f64, submode: PenaltyMode },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceEnergy {
    /// `‖u_k‖²_{L²(D)} = Σ_j u_kj² dx`.
    pub norm_sq: f64,
    /// `‖∇u_k‖²_{L²(D)}`.
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `max (u - U)⁺` over the whole grid.
    pub max_upper_excess: f64,
    /// `max (L - u)⁺` over the whole grid.
    pub max_lower_excess: f64,
    pub upper_excess: Vec<f64>,
    pub lower_excess: Vec<f64>,
    pub energy: Vec<SliceEnergy>,
    /// Set when the solution is not flat at the ends of `D` (see [`solve`]).
    pub boundary_flux: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub u: FieldSeries,
    pub nu_plus: DiscreteMeasure,
    pub nu_minus: DiscreteMeasure,
    pub diagnostics: Diagnostics,
}

/// `dt / dx² > 1` with `theta = 0` exceeds the explicit stability bound of `½Δ`.
pub fn explicit_unstable(dt: f64, dx: f64, theta: f64) -> bool {
    theta == 0.0 && dt / (dx * dx) > 1.0
}

/// One theta-step of `∂_t u + ½Δu = 0` backward in time:
/// `(I - θ dt ½Δ_h) u = (I + (1 - θ) dt ½Δ_h) u_next` with Neumann ends.
pub fn heat_step(u_next: &[f64], dt: f64, dx: f64, theta: f64) -> Vec<f64> {
    if explicit_unstable(dt, dx, theta) {
        log::warn!("explicit heat step with dt/dx^2 = {:.3} > 1 is unstable", dt / (dx * dx));
    }
    heat_step_quiet(u_next, dt, dx, theta)
}

fn half_laplacian(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let c = 0.5 / (dx * dx);
    (0..n)
        .map(|j| {
            let left = if j == 0 { u[0] } else { u[j - 1] };
            let right = if j == n - 1 { u[n - 1] } else { u[j + 1] };
            c * ((right - u[j]) - (u[j] - left))
        })
        .collect()
}

// Solved in increment form `(I - θ dt L) w = dt L u_next`, `u = u_next + w`,
// so constants pass through bit-exactly.
fn heat_step_quiet(u_next: &[f64], dt: f64, dx: f64, theta: f64) -> Vec<f64> {
    let n = u_next.len();
    let mut rhs = half_laplacian(u_next, dx);
    for r in rhs.iter_mut() {
        *r *= dt;
    }
    let w = if theta == 0.0 {
        rhs
    } else {
        let r = theta * dt * 0.5 / (dx * dx);
        let lower = vec![-r; n];
        let upper = vec![-r; n];
        let mut diag = vec![1.0 + 2.0 * r; n];
        diag[0] = 1.0 + r;
        diag[n - 1] = 1.0 + r;
        solve_tridiagonal(&lower, &diag, &upper, &rhs)
    };
    u_next.iter().zip(&w).map(|(a, b)| a + b).collect()
}

/// Thomas algorithm for a diagonally dominant tridiagonal system.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// `u + f dt + div_h(g) dt + Σ_j h_j ΔB_j`, with `div_h` the central
/// difference (one-sided at the ends).
pub fn source_step(
    u: &[f64],
    dt: f64,
    dx: f64,
    f: &[f64],
    g: &[f64],
    h: &[Vec<f64>],
    db: &[f64],
) -> Vec<f64> {
    let div_g = gradient(g, dx);
    let mut out: Vec<f64> = (0..u.len())
        .map(|j| u[j] + f[j] * dt + div_g[j] * dt)
        .collect();
    for (hj, &dbj) in h.iter().zip(db) {
        if dbj != 0.0 {
            for (o, &v) in out.iter_mut().zip(hj) {
                *o += v * dbj;
            }
        }
    }
    out
}

/// Result of an obstacle step: new slice plus pointwise pushes up (`dkp`)
/// and down (`dkm`).
#[derive(Debug, Clone, PartialEq)]
pub struct Reflected {
    pub u: Vec<f64>,
    pub dkp: Vec<f64>,
    pub dkm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("obstacles cross at node {j}: lower {lower} > upper {upper}")]
pub struct ObstacleCrossing {
    pub j: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Clamps `u` onto `[L, U]`. `dkp = (L - u)⁺`, `dkm = (u - U)⁺`, and the new
/// value sits exactly on the obstacle wherever an increment is nonzero.
pub fn project_step(u: &[f64], lower: &[f64], upper: &[f64]) -> Result<Reflected, ObstacleCrossing> {
    let n = u.len();
    let mut out = Reflected {
        u: Vec::with_capacity(n),
        dkp: vec![0.0; n],
        dkm: vec![0.0; n],
    };
    for j in 0..n {
        let (lo, hi) = (lower[j], upper[j]);
        if lo > hi {
            return Err(ObstacleCrossing { j, lower: lo, upper: hi });
        }
        let v = u[j];
        if v < lo {
            out.dkp[j] = lo - v;
            out.u.push(lo);
        } else if v > hi {
            out.dkm[j] = v - hi;
            out.u.push(hi);
        } else {
            out.u.push(v);
        }
    }
    Ok(out)
}

/// Implicit nodewise penalty `u' = u - n dt (u' - U)⁺ (+ n dt (L - u')⁺)`,
/// solved in closed form: above the barrier `u' = U + (u - U)/(1 + n dt)`.
/// In [`PenaltyMode::Upper`] the lower barrier is then enforced by projection.
pub fn penalty_step(
    u: &[f64],
    lower: &[f64],
    upper: &[f64],
    n: f64,
    dt: f64,
    mode: PenaltyMode,
) -> Reflected {
    let a = n * dt;
    let len = u.len();
    let mut out = Reflected {
        u: u.to_vec(),
        dkp: vec![0.0; len],
        dkm: vec![0.0; len],
    };
    for j in 0..len {
        let v = u[j];
        if a > 0.0 && v > upper[j] {
            let excess = (v - upper[j]) / (1.0 + a);
            out.u[j] = upper[j] + excess;
            out.dkm[j] = a * excess;
        } else if a > 0.0 && mode == PenaltyMode::Double && v < lower[j] {
            let deficit = (lower[j] - v) / (1.0 + a);
            out.u[j] = lower[j] - deficit;
            out.dkp[j] = a * deficit;
        }
        if mode == PenaltyMode::Upper && out.u[j] < lower[j] {
            out.dkp[j] = lower[j] - out.u[j];
            out.u[j] = lower[j];
        }
    }
    out
}

/// Coefficient slices frozen at a given time slice.
pub(crate) struct CoefficientSlices {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<Vec<f64>>,
}

pub(crate) fn coefficient_slices(
    f: &Expr,
    g: &Expr,
    h: &[Expr],
    k: usize,
    t: f64,
    xs: &[f64],
    ys: Option<&[f64]>,
    zs: Option<&[f64]>,
) -> Result<CoefficientSlices, SolveError> {
    let ev = |e: &Expr, what: &'static str| {
        eval_slice(e, t, xs, ys, zs).map_err(|source| SolveError::Eval { what, k, source })
    };
    Ok(CoefficientSlices {
        f: ev(f, "f")?,
        g: ev(g, "g")?,
        h: h.iter().map(|e| ev(e, "h")).collect::<Result<_, _>>()?,
    })
}

fn l2_sq(v: &[f64], dx: f64) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>() * dx
}

/// Backward solve of the frozen-coefficient two-obstacle equation along one
/// noise path.
///
/// Coefficients at step `k` are evaluated at `t_{k+1}` on `frozen` slice
/// `k + 1` (values for `y`, gradient for `z1`); `frozen` is required when
/// any coefficient depends on the solution. A warning is logged (and
/// `boundary_flux` set) when `|u(t, ±R∓dx) - u(t, ±R∓2dx)|` exceeds
/// `1e-6 ‖u_t‖∞`, i.e. when the truncation of `D` is felt.
pub fn solve(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    frozen: Option<&FieldSeries>,
    mode: SolveMode,
) -> Result<GridSolution, SolveError> {
    spec.validate()?;
    let (nt, nx) = (disc.nt, disc.nx);
    if noise.nt() != nt || noise.d1() != spec.d1 {
        return Err(SolveError::Shape(format!(
            "noise path is {}x{}, grid needs {}x{}",
            noise.nt(),
            noise.d1(),
            nt,
            spec.d1
        )));
    }
    if let Some(fr) = frozen {
        if fr.values.len() != nt + 1 || fr.values.iter().any(|r| r.len() != nx) {
            return Err(SolveError::Shape("frozen fields do not match the grid".into()));
        }
    } else if spec.depends_on_solution() {
        return Err(SolveError::MissingFrozenFields);
    }

    let xs = disc.nodes();
    let times = disc.times(spec.horizon);
    let dt = disc.dt(spec.horizon);
    let dx = disc.dx();
    if explicit_unstable(dt, dx, disc.theta) {
        log::warn!("explicit heat step with dt/dx^2 = {:.3} > 1 is unstable", dt / (dx * dx));
    }

    let mut values = vec![Vec::new(); nt + 1];
    values[nt] = spec.terminal_slice(&xs)?;
    let mut nu_plus = DiscreteMeasure::zeros(nt, nx);
    let mut nu_minus = DiscreteMeasure::zeros(nt, nx);
    let mut upper_excess = vec![0.0; nt + 1];
    let mut lower_excess = vec![0.0; nt + 1];
    let record_excess = |u: &[f64], lo: &[f64], hi: &[f64]| -> (f64, f64) {
        u.iter().zip(lo).zip(hi).fold((0.0f64, 0.0f64), |(up, dn), ((&v, &l), &h)| {
            (up.max(v - h), dn.max(l - v))
        })
    };
    if mode != SolveMode::Free {
        let lo = spec.obstacle_slice(Obstacle::Lower, nt, spec.horizon, &xs)?;
        let hi = spec.obstacle_slice(Obstacle::Upper, nt, spec.horizon, &xs)?;
        (upper_excess[nt], lower_excess[nt]) = record_excess(&values[nt], &lo, &hi);
    }

    for k in (0..nt).rev() {
        let (ys, zs) = match frozen {
            Some(fr) => (Some(fr.values[k + 1].as_slice()), Some(fr.grad[k + 1].as_slice())),
            None => (None, None),
        };
        let co = coefficient_slices(&spec.f, &spec.g, &spec.h, k + 1, times[k + 1], &xs, ys, zs)?;
        let heated = heat_step_quiet(&values[k + 1], dt, dx, disc.theta);
        let sourced = source_step(&heated, dt, dx, &co.f, &co.g, &co.h, &noise.increments[k]);

        let step = match mode {
            SolveMode::Free => {
                values[k] = sourced;
                continue;
            }
            SolveMode::Projected => {
                let lo = spec.obstacle_slice(Obstacle::Lower, k, times[k], &xs)?;
                let hi = spec.obstacle_slice(Obstacle::Upper, k, times[k], &xs)?;
                let r = project_step(&sourced, &lo, &hi).map_err(|e| SolveError::ObstacleCrossing {
                    k,
                    j: e.j,
                    lower: e.lower,
                    upper: e.upper,
                })?;
                (r, lo, hi)
            }
            SolveMode::Penalized { n, submode } => {
                let lo = spec.obstacle_slice(Obstacle::Lower, k, times[k], &xs)?;
                let hi = spec.obstacle_slice(Obstacle::Upper, k, times[k], &xs)?;
                if let Some(j) = (0..nx).find(|&j| lo[j] > hi[j]) {
                    return Err(SolveError::ObstacleCrossing { k, j, lower: lo[j], upper: hi[j] });
                }
                (penalty_step(&sourced, &lo, &hi, n, dt, submode), lo, hi)
            }
        };
        let (r, lo, hi) = step;
        for j in 0..nx {
            nu_plus.increments[k][j] = r.dkp[j] * dx;
            nu_minus.increments[k][j] = r.dkm[j] * dx;
        }
        (upper_excess[k], lower_excess[k]) = record_excess(&r.u, &lo, &hi);
        values[k] = r.u;
    }

    let u = FieldSeries::from_values(values, dx);
    let mut boundary_flux = false;
    for row in &u.values {
        let sup = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let left = (row[0] - row[1]).abs();
        let right = (row[nx - 1] - row[nx - 2]).abs();
        if left.max(right) > 1e-6 * sup {
            boundary_flux = true;
            break;
        }
    }
    if boundary_flux {
        log::debug!("solution varies at the ends of D = [-{r}, {r}]", r = disc.radius);
    }
    let energy = u
        .values
        .iter()
        .zip(&u.grad)
        .map(|(v, g)| SliceEnergy {
            norm_sq: l2_sq(v, dx),
            grad_norm_sq: l2_sq(g, dx),
        })
        .collect();
    Ok(GridSolution {
        diagnostics: Diagnostics {
            max_upper_excess: upper_excess.iter().copied().fold(0.0, f64::max),
            max_lower_excess: lower_excess.iter().copied().fold(0.0, f64::max),
            upper_excess,
            lower_excess,
            energy,
            boundary_flux,
        },
        u,
        nu_plus,
        nu_minus,
    })
}

/// `Σ (u - L) dK⁺` and `Σ (U - u) dK⁻` over all cells with nonzero mass.
/// Both are exactly zero for projected solves.
pub fn complementarity(
    spec: &ProblemSpec,
    disc: &Discretization,
    sol: &GridSolution,
) -> Result<(f64, f64), SolveError> {
    let xs = disc.nodes();
    let times = disc.times(spec.horizon);
    let mut lower_sum = 0.0;
    let mut upper_sum = 0.0;
    for k in 0..disc.nt {
        let lo = spec.obstacle_slice(Obstacle::Lower, k, times[k], &xs)?;
        let hi = spec.obstacle_slice(Obstacle::Upper, k, times[k], &xs)?;
        for j in 0..disc.nx {
            let (p, m) = (sol.nu_plus.increments[k][j], sol.nu_minus.increments[k][j]);
            if p != 0.0 {
                lower_sum += (sol.u.values[k][j] - lo[j]) * p;
            }
            if m != 0.0 {
                upper_sum += (hi[j] - sol.u.values[k][j]) * m;
            }
        }
    }
    Ok((lower_sum, upper_sum))
}
