//! Executable checks: each theorem-level property of the scheme becomes a
//! function returning a report with a pass flag and the numbers behind it,
//! and [`run_suite`] runs named checks over problem instances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ProblemFile};
use crate::dsl::{Env, EvalError, Expr};
use crate::grid::{coefficient_slices, complementarity, solve, GridSolution, PenaltyMode, SolveError, SolveMode};
use crate::lattice::{
    energy_identity_check, feynman_kac_residual, lattice_solve, measure_mc, LatticeError, LatticeMode, Push,
};
use crate::model::{
    check_hypotheses, gradient, Discretization, LipschitzData, ModelError, NoisePath, Obstacle, ProblemSpec,
};
use crate::picard::{picard_solve, solve_projected, ContractionStatus, PicardError};

/// Slack allowed in `u¹ ≤ u² + COMPARISON_SLACK`.
pub const COMPARISON_SLACK: f64 = 1e-10;
/// Relative factor on declared Lipschitz bounds.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;
/// Maximum relative Itô residual at the stated resolution.
pub const ITO_REL_TOL: f64 = 0.05;
/// Required error reduction when `(dt, dx)` are halved.
pub const ITO_SHRINK: f64 = 1.5;
/// Maximum grid/lattice discrepancy on `y`.
pub const FK_TOL: f64 = 5e-2;
/// Required reduction of the grid/lattice discrepancy under refinement.
pub const FK_SHRINK: f64 = 1.4;
/// Errors below this are treated as exact; refinement ratios are then moot.
pub const EXACT_FLOOR: f64 = 1e-12;
/// Relative tolerance of Monte Carlo measure estimates (plus 3 stderr).
pub const MEASURE_REL_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("precondition unmet: {hypothesis}: {detail}")]
    PreconditionUnmet { hypothesis: &'static str, detail: String },
    #[error("unsupported Phi {0:?}; expected one of x^2, (x+)^2, x^4/(1+x^2)")]
    UnsupportedPhi(String),
    #[error("check needs coefficients independent of (y, z1)")]
    NotLinear,
    #[error("penalty levels must be a non-empty, strictly increasing list of finite values >= 0")]
    InvalidLevels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Picard(#[from] PicardError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ValidationError {
    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationError::PreconditionUnmet { .. } => "precondition",
            ValidationError::UnsupportedPhi(_) => "unsupported_phi",
            ValidationError::NotLinear => "not_linear",
            ValidationError::InvalidLevels => "invalid_levels",
            ValidationError::Model(_) => "model",
            ValidationError::Solve(SolveError::ObstacleCrossing { .. }) => "obstacle_crossing",
            ValidationError::Solve(_) => "solve",
            ValidationError::Picard(PicardError::NotContractive { .. }) => "not_contractive",
            ValidationError::Picard(PicardError::NoConvergence { .. }) => "no_convergence",
            ValidationError::Picard(_) => "solve",
            ValidationError::Lattice(LatticeError::IllPosed(_)) => "ill_posed",
            ValidationError::Lattice(_) => "lattice",
            ValidationError::Eval(_) => "eval",
        }
    }
}

/// Picard settings used wherever a nonlinear problem must be solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

fn ensure_linear(spec: &ProblemSpec) -> Result<(), ValidationError> {
    if spec.depends_on_solution() {
        Err(ValidationError::NotLinear)
    } else {
        Ok(())
    }
}

fn unmet(hypothesis: &'static str, detail: String) -> ValidationError {
    ValidationError::PreconditionUnmet { hypothesis, detail }
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `max (u¹ - u²)` over the grid (≤ 0 when ordered).
    pub grid_worst: f64,
    /// `(t, x)` of the grid maximum.
    pub grid_location: (f64, f64),
    /// `max (y¹ - y²)` over the lattice.
    pub lattice_worst: f64,
    pub lattice_location: (f64, f64),
    /// Set when `f¹ ≤ f²` could only be checked along the computed `u¹` and
    /// failed there: the ordering of the solutions is then not implied.
    pub conditional: bool,
    pub pass: bool,
}

fn check_ordered(
    what: &'static str,
    a: &[f64],
    b: &[f64],
    t: f64,
    xs: &[f64],
) -> Result<(), ValidationError> {
    for j in 0..xs.len() {
        if a[j] > b[j] {
            return Err(unmet(
                what,
                format!("{} > {} at t = {t}, x = {}", a[j], b[j], xs[j]),
            ));
        }
    }
    Ok(())
}

fn f_slices(spec: &ProblemSpec, disc: &Discretization, along: Option<&GridSolution>) -> Result<Vec<Vec<f64>>, SolveError> {
    let xs = disc.nodes();
    let times = disc.times(spec.horizon);
    (1..=disc.nt)
        .map(|k| {
            let (ys, zs) = match along {
                Some(s) => (Some(s.u.values[k].as_slice()), Some(s.u.grad[k].as_slice())),
                None => (None, None),
            };
            Ok(coefficient_slices(&spec.f, &spec.g, &spec.h, k, times[k], &xs, ys, zs)?.f)
        })
        .collect()
}

fn worst_gap(a: &[Vec<f64>], b: &[Vec<f64>], time: impl Fn(usize) -> f64, x: impl Fn(usize) -> f64) -> (f64, (f64, f64)) {
    let mut worst = f64::NEG_INFINITY;
    let mut loc = (0.0, 0.0);
    for (k, (ra, rb)) in a.iter().zip(b).enumerate() {
        for (j, (va, vb)) in ra.iter().zip(rb).enumerate() {
            let d = va - vb;
            if d > worst {
                worst = d;
                loc = (time(k), x(j));
            }
        }
    }
    (worst, loc)
}

/// Solves both problems (grid and lattice, projected mode, same noise) and
/// checks `u¹ ≤ u² + 1e-10` at every node. Requires shared `g`, `h` and
/// ordered terminal data and obstacles; `f¹ ≤ f²` is checked on the grid
/// beforehand for linear problems and along `(u¹, ∇u¹)` afterwards
/// otherwise.
pub fn check_comparison(
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    picard: PicardSettings,
) -> Result<ComparisonReport, ValidationError> {
    spec1.validate()?;
    spec2.validate()?;
    if spec1.g != spec2.g {
        return Err(unmet("shared g", format!("{} vs {}", spec1.g, spec2.g)));
    }
    if spec1.h != spec2.h {
        return Err(unmet("shared h", "noise coefficients differ".into()));
    }
    if spec1.horizon != spec2.horizon {
        return Err(unmet("shared horizon", format!("{} vs {}", spec1.horizon, spec2.horizon)));
    }
    let xs = disc.nodes();
    let times = disc.times(spec1.horizon);
    check_ordered("psi1 <= psi2", &spec1.terminal_slice(&xs)?, &spec2.terminal_slice(&xs)?, spec1.horizon, &xs)?;
    for (k, &t) in times.iter().enumerate() {
        for which in [Obstacle::Lower, Obstacle::Upper] {
            let what = match which {
                Obstacle::Lower => "L1 <= L2",
                Obstacle::Upper => "U1 <= U2",
            };
            check_ordered(
                what,
                &spec1.obstacle_slice(which, k, t, &xs)?,
                &spec2.obstacle_slice(which, k, t, &xs)?,
                t,
                &xs,
            )?;
        }
    }
    let nonlinear = spec1.depends_on_solution() || spec2.depends_on_solution();
    if !nonlinear {
        let (f1, f2) = (f_slices(spec1, disc, None)?, f_slices(spec2, disc, None)?);
        for (k, (a, b)) in f1.iter().zip(&f2).enumerate() {
            check_ordered("f1 <= f2", a, b, times[k + 1], &xs)?;
        }
    }

    let solve_one = |s: &ProblemSpec| solve_projected(s, disc, noise, picard.tol, picard.max_iter);
    let (g1, g2) = (solve_one(spec1)?, solve_one(spec2)?);
    let conditional = if nonlinear {
        let (f1, f2) = (f_slices(spec1, disc, Some(&g1))?, f_slices(spec2, disc, Some(&g1))?);
        f1.iter().flatten().zip(f2.iter().flatten()).any(|(a, b)| a > b)
    } else {
        false
    };
    let dx = disc.dx();
    let (grid_worst, grid_location) = worst_gap(&g1.u.values, &g2.u.values, |k| times[k], |j| xs[0] + j as f64 * dx);

    let l1 = lattice_solve(spec1, disc, noise, LatticeMode::Projected)?;
    let l2 = lattice_solve(spec2, disc, noise, LatticeMode::Projected)?;
    let (lattice_worst, lattice_location) = worst_gap(&l1.y, &l2.y, |k| l1.time(k), |i| l1.node_x(i));

    Ok(ComparisonReport {
        grid_worst,
        grid_location,
        lattice_worst,
        lattice_location,
        conditional,
        pass: grid_worst <= COMPARISON_SLACK && lattice_worst <= COMPARISON_SLACK,
    })
}

// ---------------------------------------------------------------------------
// Penalization sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: f64,
    pub max_upper_excess: f64,
    pub sup_diff_to_projected: f64,
    pub mass_kp: f64,
    pub mass_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `u^{n'} ≤ u^n` at every node for consecutive levels `n < n'`.
    pub nodewise_monotone: bool,
    /// First violation `(n, n', k, j, u^{n'} - u^n)`.
    pub first_violation: Option<(f64, f64, usize, usize, f64)>,
    pub excess_monotone: bool,
    pub diff_monotone: bool,
    /// Empirical order in `n` of the excess and of the distance to the
    /// projected solution, from the last pair of levels with positive values.
    pub excess_rate: Option<f64>,
    pub diff_rate: Option<f64>,
    pub tol_excess: f64,
    pub pass: bool,
}

/// Default terminal tolerance on the upper-barrier excess:
/// `1e-2 · max(1, ‖U‖∞)` over the grid.
pub fn default_tol_excess(spec: &ProblemSpec, disc: &Discretization) -> Result<f64, ValidationError> {
    let xs = disc.nodes();
    let mut sup = 0.0f64;
    for (k, &t) in disc.times(spec.horizon).iter().enumerate() {
        for v in spec.obstacle_slice(Obstacle::Upper, k, t, &xs)? {
            if v.is_finite() {
                sup = sup.max(v.abs());
            }
        }
    }
    Ok(1e-2 * sup.max(1.0))
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn last_rate(levels: &[f64], values: &[f64]) -> Option<f64> {
    (1..levels.len()).rev().find_map(|i| {
        let (a, b) = (values[i - 1], values[i]);
        (a > 0.0 && b > 0.0 && levels[i - 1] > 0.0).then(|| (a / b).ln() / (levels[i] / levels[i - 1]).ln())
    })
}

/// Runs the penalized scheme (upper barrier penalized, lower reflected) at
/// each level in `levels` on the same noise path. Monotonicity in `n` is
/// asserted without tolerance.
pub fn check_penalization_sweep(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    levels: &[f64],
    tol_excess: Option<f64>,
) -> Result<SweepReport, ValidationError> {
    ensure_linear(spec)?;
    if levels.is_empty() || levels.iter().any(|n| !n.is_finite() || *n < 0.0) || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ValidationError::InvalidLevels);
    }
    let tol_excess = match tol_excess {
        Some(t) => t,
        None => default_tol_excess(spec, disc)?,
    };
    let projected = solve(spec, disc, noise, None, SolveMode::Projected)?;
    let sols: Vec<GridSolution> = levels
        .par_iter()
        .map(|&n| {
            solve(
                spec,
                disc,
                noise,
                None,
                SolveMode::Penalized { n, submode: PenaltyMode::Upper },
            )
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<SweepRow> = levels
        .iter()
        .zip(&sols)
        .map(|(&n, s)| SweepRow {
            n,
            max_upper_excess: s.diagnostics.max_upper_excess,
            sup_diff_to_projected: s.u.sup_distance(&projected.u),
            mass_kp: s.nu_plus.total_mass(),
            mass_km: s.nu_minus.total_mass(),
        })
        .collect();

    let mut first_violation = None;
    'outer: for i in 1..sols.len() {
        for (k, (hi, lo)) in sols[i].u.values.iter().zip(&sols[i - 1].u.values).enumerate() {
            for (j, (a, b)) in hi.iter().zip(lo).enumerate() {
                if a > b {
                    first_violation = Some((levels[i - 1], levels[i], k, j, a - b));
                    break 'outer;
                }
            }
        }
    }
    let excess: Vec<f64> = rows.iter().map(|r| r.max_upper_excess).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.sup_diff_to_projected).collect();
    let nodewise_monotone = first_violation.is_none();
    let excess_monotone = non_increasing(&excess);
    let diff_monotone = non_increasing(&diff);
    let last = *excess.last().expect("levels are non-empty");
    Ok(SweepReport {
        excess_rate: last_rate(levels, &excess),
        diff_rate: last_rate(levels, &diff),
        pass: nodewise_monotone && excess_monotone && diff_monotone && last <= tol_excess,
        rows,
        nodewise_monotone,
        first_violation,
        excess_monotone,
        diff_monotone,
        tol_excess,
    })
}

// ---------------------------------------------------------------------------
// Itô formula

/// Test functions admitted by the Itô check, with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItoPhi {
    /// `x²`
    Square,
    /// `(x⁺)²`, with `Φ'' = 2·1{x > 0}`.
    PositiveSquare,
    /// `x⁴ / (1 + x²)`
    QuarticRational,
}

impl ItoPhi {
    pub const ALL: [ItoPhi; 3] = [ItoPhi::Square, ItoPhi::PositiveSquare, ItoPhi::QuarticRational];

    pub fn value(self, x: f64) -> f64 {
        match self {
            ItoPhi::Square => x * x,
            ItoPhi::PositiveSquare => x.max(0.0).powi(2),
            ItoPhi::QuarticRational => x.powi(4) / (1.0 + x * x),
        }
    }

    pub fn d1(self, x: f64) -> f64 {
        match self {
            ItoPhi::Square => 2.0 * x,
            ItoPhi::PositiveSquare => 2.0 * x.max(0.0),
            ItoPhi::QuarticRational => {
                let q = 1.0 + x * x;
                2.0 * x - 2.0 * x / (q * q)
            }
        }
    }

    pub fn d2(self, x: f64) -> f64 {
        match self {
            ItoPhi::Square => 2.0,
            ItoPhi::PositiveSquare => {
                if x > 0.0 {
                    2.0
                } else {
                    0.0
                }
            }
            ItoPhi::QuarticRational => {
                let q = 1.0 + x * x;
                2.0 - 2.0 / (q * q) + 8.0 * x * x / (q * q * q)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ItoPhi::Square => "x^2",
            ItoPhi::PositiveSquare => "(x+)^2",
            ItoPhi::QuarticRational => "x^4/(1+x^2)",
        }
    }
}

impl fmt::Display for ItoPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ItoPhi {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "x^2" | "x*x" | "square" => Ok(ItoPhi::Square),
            "(x+)^2" | "max(x,0)^2" | "positive_square" => Ok(ItoPhi::PositiveSquare),
            "x^4/(1+x^2)" | "quartic_rational" => Ok(ItoPhi::QuarticRational),
            _ => Err(ValidationError::UnsupportedPhi(s.to_string())),
        }
    }
}

/// Discrete terms of
/// `∫Φ(u_0) + ½∫∫Φ''(u)|∇u|² = ∫Φ(Ψ) + ∫∫Φ'(u)(f + div g) + Σ∫∫Φ'(u) h dB
///  + ½Σ∫∫Φ''(u) h² d⟨B⟩ + ∫Φ'(u) dν⁺ - ∫Φ'(u) dν⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItoTerms {
    pub phi_u0: f64,
    pub gradient: f64,
    pub phi_terminal: f64,
    pub drift: f64,
    pub divergence: f64,
    pub noise: f64,
    pub noise_correction: f64,
    pub push_up: f64,
    pub push_down: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` over the largest term's magnitude (0 when all vanish).
    pub residual: f64,
}

/// Evaluates the discrete identity on one projected grid solve.
///
/// `dt`-integrals against `f` and `div g` use the trapezoid average of
/// `Φ'(u_k)` and `Φ'(u_{k+1})`; the backward stochastic integral and its
/// correction use slice `k + 1` and the realized `ΔB_k²`; the gradient term
/// uses slice `k`, as does `Φ'(u)` against the measures.
pub fn ito_terms(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    phi: ItoPhi,
) -> Result<ItoTerms, ValidationError> {
    ensure_linear(spec)?;
    let sol = solve(spec, disc, noise, None, SolveMode::Projected)?;
    let xs = disc.nodes();
    let times = disc.times(spec.horizon);
    let (dx, dt) = (disc.dx(), disc.dt(spec.horizon));
    let u = &sol.u;
    let cell_sum = |v: &[f64], w: &dyn Fn(usize) -> f64| -> f64 { v.iter().enumerate().map(|(j, &a)| a * w(j)).sum::<f64>() };

    let mut t = ItoTerms {
        phi_u0: u.values[0].iter().map(|&v| phi.value(v)).sum::<f64>() * dx,
        phi_terminal: u.values[disc.nt].iter().map(|&v| phi.value(v)).sum::<f64>() * dx,
        gradient: 0.0,
        drift: 0.0,
        divergence: 0.0,
        noise: 0.0,
        noise_correction: 0.0,
        push_up: 0.0,
        push_down: 0.0,
        lhs: 0.0,
        rhs: 0.0,
        residual: 0.0,
    };
    for k in 0..disc.nt {
        let co = coefficient_slices(&spec.f, &spec.g, &spec.h, k + 1, times[k + 1], &xs, None, None)?;
        let (uk, uk1) = (&u.values[k], &u.values[k + 1]);
        let avg_d1: Vec<f64> = uk.iter().zip(uk1).map(|(&a, &b)| 0.5 * (phi.d1(a) + phi.d1(b))).collect();
        let div_g = gradient(&co.g, dx);
        t.drift += cell_sum(&co.f, &|j| avg_d1[j]) * dx * dt;
        t.divergence += cell_sum(&div_g, &|j| avg_d1[j]) * dx * dt;
        t.gradient += 0.5 * cell_sum(&u.grad[k], &|j| phi.d2(uk[j]) * u.grad[k][j]) * dx * dt;
        for (hi, &db) in co.h.iter().zip(&noise.increments[k]) {
            if db != 0.0 {
                t.noise += cell_sum(hi, &|j| phi.d1(uk1[j])) * dx * db;
                t.noise_correction += 0.5 * cell_sum(hi, &|j| phi.d2(uk1[j]) * hi[j]) * dx * db * db;
            }
        }
        t.push_up += cell_sum(&sol.nu_plus.increments[k], &|j| phi.d1(uk[j]));
        t.push_down += cell_sum(&sol.nu_minus.increments[k], &|j| phi.d1(uk[j]));
    }
    t.lhs = t.phi_u0 + t.gradient;
    t.rhs = t.phi_terminal + t.drift + t.divergence + t.noise + t.noise_correction + t.push_up - t.push_down;
    let scale = [
        t.phi_u0,
        t.gradient,
        t.phi_terminal,
        t.drift,
        t.divergence,
        t.noise,
        t.noise_correction,
        t.push_up,
        t.push_down,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    t.residual = if scale == 0.0 { 0.0 } else { (t.lhs - t.rhs).abs() / scale };
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoReport {
    pub phi: ItoPhi,
    pub coarse: ItoTerms,
    /// Same identity with `(dt, dx)` halved and the noise path refined by
    /// Brownian bridge sampling.
    pub fine: ItoTerms,
    /// `coarse.residual / fine.residual` (infinite when the fine residual is 0).
    pub shrink: f64,
    pub pass: bool,
}

/// Itô identity residual at `disc` and at `disc.refined()`. Passes when the
/// coarse residual is at most 5% and halving `(dt, dx)` shrinks it by 1.5
/// (waived when the coarse residual is already at rounding level).
pub fn check_ito_residual(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    phi: ItoPhi,
) -> Result<ItoReport, ValidationError> {
    let coarse = ito_terms(spec, disc, noise, phi)?;
    let fine = ito_terms(spec, &disc.refined(), &noise.bridge_refined(), phi)?;
    let shrink = if fine.residual == 0.0 { f64::INFINITY } else { coarse.residual / fine.residual };
    let pass = coarse.residual <= ITO_REL_TOL && (coarse.residual <= EXACT_FLOOR || shrink >= ITO_SHRINK);
    Ok(ItoReport {
        phi,
        coarse,
        fine,
        shrink,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Separability

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityReport {
    /// `min (z - L)` over the grid (`+∞` without a lower obstacle).
    pub kappa_hat: f64,
    /// `max (z - U)` over the grid (`-∞` without an upper obstacle).
    pub max_upper_excess: f64,
    pub pass: bool,
}

/// Solves the witness equation in free mode with the same noise and checks
/// that it separates the obstacles: `z ≤ U` everywhere and `min (z - L) > 0`.
pub fn check_separability(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
) -> Result<SeparabilityReport, ValidationError> {
    let w = spec
        .witness
        .as_ref()
        .ok_or_else(|| unmet("separability witness", "no witness data declared".into()))?;
    let aux = ProblemSpec {
        psi: w.psi.clone(),
        f: w.f.clone(),
        g: w.g.clone(),
        h: w.h.clone(),
        lower: None,
        upper: None,
        lip: LipschitzData { c: 0.0, alpha: 0.0, beta: 0.0 },
        witness: None,
        ..spec.clone()
    };
    if aux.depends_on_solution() {
        return Err(unmet("separability witness", "witness coefficients must not depend on (y, z1)".into()));
    }
    let z = solve(&aux, disc, noise, None, SolveMode::Free)?;
    let xs = disc.nodes();
    let mut kappa_hat = f64::INFINITY;
    let mut max_upper_excess = f64::NEG_INFINITY;
    for (k, &t) in disc.times(spec.horizon).iter().enumerate() {
        let lo = spec.obstacle_slice(Obstacle::Lower, k, t, &xs)?;
        let hi = spec.obstacle_slice(Obstacle::Upper, k, t, &xs)?;
        for j in 0..xs.len() {
            kappa_hat = kappa_hat.min(z.u.values[k][j] - lo[j]);
            max_upper_excess = max_upper_excess.max(z.u.values[k][j] - hi[j]);
        }
    }
    Ok(SeparabilityReport {
        kappa_hat,
        max_upper_excess,
        pass: max_upper_excess <= 0.0 && kappa_hat > 0.0,
    })
}

// ---------------------------------------------------------------------------
// Declared Lipschitz constants

/// Sampling box for `(y, y')` and `(z, z')`; `t` ranges over `[0, T]` and
/// `x` over `[-R, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBox {
    pub y: f64,
    pub z: f64,
}

impl Default for LipschitzBox {
    fn default() -> Self {
        Self { y: 10.0, z: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzWitness {
    /// `"f"`, `"g"` or `"h"`.
    pub coefficient: &'static str,
    pub t: f64,
    pub x: f64,
    pub y: (f64, f64),
    pub z: (f64, f64),
    /// `|c(y, z) - c(y', z')|` (Euclidean norm for `h`).
    pub difference: f64,
    /// Declared bound for this tuple.
    pub bound: f64,
}

impl LipschitzWitness {
    pub fn ratio(&self) -> f64 {
        if self.difference == 0.0 {
            0.0
        } else {
            self.difference / self.bound
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub samples: usize,
    /// Tuple with the largest difference/bound ratio.
    pub worst: Option<LipschitzWitness>,
    pub pass: bool,
}

/// Samples `samples` tuples `(t, x, y, y', z, z')` and checks
/// `|Δf| ≤ C(|Δy| + |Δz|)`, `|Δg| ≤ C|Δy| + α|Δz|` and
/// `|Δh| ≤ C|Δy| + β|Δz|`, each up to a factor `1 + 1e-9`.
pub fn check_lipschitz_declared(
    spec: &ProblemSpec,
    disc: &Discretization,
    samples: usize,
    seed: u64,
    bounds: LipschitzBox,
) -> Result<LipschitzReport, ValidationError> {
    let LipschitzData { c, alpha, beta } = spec.lip;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<LipschitzWitness> = None;
    let mut pass = true;
    let sym = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    for _ in 0..samples {
        let t = rng.random_range(0.0..=spec.horizon);
        let x = sym(&mut rng, disc.radius);
        let (y1, y2) = (sym(&mut rng, bounds.y), sym(&mut rng, bounds.y));
        let (z1, z2) = (sym(&mut rng, bounds.z), sym(&mut rng, bounds.z));
        let a = Env { t, x, y: y1, z1 };
        let b = Env { t, x, y: y2, z1: z2 };
        let (dy, dz) = ((y1 - y2).abs(), (z1 - z2).abs());
        let df = (spec.f.eval(&a)? - spec.f.eval(&b)?).abs();
        let dg = (spec.g.eval(&a)? - spec.g.eval(&b)?).abs();
        let mut dh2 = 0.0;
        for e in &spec.h {
            dh2 += (e.eval(&a)? - e.eval(&b)?).powi(2);
        }
        for (coefficient, difference, bound) in [
            ("f", df, c * (dy + dz)),
            ("g", dg, c * dy + alpha * dz),
            ("h", dh2.sqrt(), c * dy + beta * dz),
        ] {
            if difference > bound * (1.0 + LIPSCHITZ_SLACK) {
                pass = false;
            }
            let cand = LipschitzWitness {
                coefficient,
                t,
                x,
                y: (y1, y2),
                z: (z1, z2),
                difference,
                bound,
            };
            if worst.as_ref().is_none_or(|w| cand.ratio() > w.ratio()) {
                worst = Some(cand);
            }
        }
    }
    Ok(LipschitzReport { samples, worst, pass })
}

// ---------------------------------------------------------------------------
// Suite

/// A problem instance ready to run: compiled spec, grid, noise path 0 of the
/// instance seed and Picard settings.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub spec: ProblemSpec,
    pub disc: Discretization,
    pub noise: NoisePath,
    pub seed: u64,
    pub picard: PicardSettings,
}

impl Instance {
    pub fn from_file(name: &str, file: &ProblemFile) -> Result<Self, ConfigError> {
        let spec = file.spec()?;
        let disc = file.discretization()?;
        let noise = crate::model::make_noise(file.noise.seed, disc.nt, spec.d1, spec.horizon);
        Ok(Self {
            name: name.to_string(),
            spec,
            disc,
            noise,
            seed: file.noise.seed,
            picard: PicardSettings {
                tol: file.picard.tol,
                max_iter: file.picard.max_iter,
            },
        })
    }

    /// Loads a file path or bundled instance name.
    pub fn load(path_or_name: &str) -> Result<Self, ConfigError> {
        Self::from_file(path_or_name, &ProblemFile::load(path_or_name)?)
    }
}

/// Checks available to [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    Hypotheses,
    Complementarity,
    Comparison,
    PenalizationSweep,
    Ito,
    Separability,
    Lipschitz,
    Picard,
    FeynmanKac,
    Measure,
    Energy,
}

impl CheckKind {
    pub const ALL: [CheckKind; 11] = [
        CheckKind::Hypotheses,
        CheckKind::Complementarity,
        CheckKind::Comparison,
        CheckKind::PenalizationSweep,
        CheckKind::Ito,
        CheckKind::Separability,
        CheckKind::Lipschitz,
        CheckKind::Picard,
        CheckKind::FeynmanKac,
        CheckKind::Measure,
        CheckKind::Energy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Hypotheses => "hypotheses",
            CheckKind::Complementarity => "complementarity",
            CheckKind::Comparison => "comparison",
            CheckKind::PenalizationSweep => "penalization_sweep",
            CheckKind::Ito => "ito",
            CheckKind::Separability => "separability",
            CheckKind::Lipschitz => "lipschitz",
            CheckKind::Picard => "picard",
            CheckKind::FeynmanKac => "feynman_kac",
            CheckKind::Measure => "measure",
            CheckKind::Energy => "energy",
        }
    }
}

impl FromStr for CheckKind {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SuiteError::UnknownCheck(s.to_string()))
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite file: {0}")]
    Syntax(String),
    #[error("unknown check {0:?}")]
    UnknownCheck(String),
    #[error("instance {name}: {source}")]
    Instance {
        name: String,
        #[source]
        source: ConfigError,
    },
    #[error("run {index}: {detail}")]
    Option { index: usize, detail: String },
}

/// One `[[run]]` entry of a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub check: String,
    pub instance: String,
    /// Itô test function (default `x^2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Penalty levels (default `1, 2, 4, …, 256`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Monte Carlo paths or Lipschitz samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub run: Vec<RunEntry>,
}

/// The bundled default suite.
pub const DEFAULT_SUITE: &str = include_str!("../suites/default.toml");

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, SuiteError> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| SuiteError::Syntax(e.message().to_string()))?;
        for entry in &cfg.run {
            entry.check.parse::<CheckKind>()?;
        }
        Ok(cfg)
    }

    pub fn default_suite() -> Self {
        Self::from_toml(DEFAULT_SUITE).expect("bundled default suite parses")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowStatus {
    Pass,
    Fail,
    /// The check could not run; carries the error kind.
    Error(String),
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowStatus::Pass => f.write_str("pass"),
            RowStatus::Fail => f.write_str("fail"),
            RowStatus::Error(kind) => write!(f, "error:{kind}"),
        }
    }
}

impl Serialize for RowStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub check: String,
    pub instance: String,
    pub status: RowStatus,
    /// Name of the key metric.
    pub metric: String,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Pass)
    }
}

struct Outcome {
    pass: bool,
    metric: &'static str,
    value: f64,
    detail: String,
}

fn outcome(pass: bool, metric: &'static str, value: f64, detail: String) -> Outcome {
    Outcome { pass, metric, value, detail }
}

const DEFAULT_LEVELS: [f64; 9] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
const DEFAULT_MEASURE_PATHS: usize = 100_000;
const DEFAULT_ENERGY_PATHS: usize = 200_000;
const DEFAULT_LIPSCHITZ_SAMPLES: usize = 100_000;

/// Grid/lattice discrepancy at the instance resolution and after halving
/// `(dt, dx)` along a bridge-refined noise path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeynmanKacReport {
    pub coarse: crate::lattice::FeynmanKacResidual,
    pub fine: crate::lattice::FeynmanKacResidual,
    pub shrink: f64,
    pub pass: bool,
}

pub fn check_feynman_kac(inst: &Instance) -> Result<FeynmanKacReport, ValidationError> {
    ensure_linear(&inst.spec)?;
    let run = |disc: &Discretization, noise: &NoisePath| -> Result<_, ValidationError> {
        let g = solve(&inst.spec, disc, noise, None, SolveMode::Projected)?;
        let l = lattice_solve(&inst.spec, disc, noise, LatticeMode::Projected)?;
        Ok(feynman_kac_residual(&g, &l, disc))
    };
    let coarse = run(&inst.disc, &inst.noise)?;
    let fine = run(&inst.disc.refined(), &inst.noise.bridge_refined())?;
    let shrink = if fine.sup_err_y == 0.0 { f64::INFINITY } else { coarse.sup_err_y / fine.sup_err_y };
    let pass = coarse.sup_err_y <= FK_TOL && (coarse.sup_err_y <= EXACT_FLOOR || shrink >= FK_SHRINK);
    Ok(FeynmanKacReport { coarse, fine, shrink, pass })
}

/// Monte Carlo lattice estimates of both measure masses against the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureReport {
    pub grid_plus: f64,
    pub grid_minus: f64,
    pub mc_plus: crate::lattice::McEstimate,
    pub mc_minus: crate::lattice::McEstimate,
    pub pass: bool,
}

pub fn check_measure(inst: &Instance, paths: usize) -> Result<MeasureReport, ValidationError> {
    ensure_linear(&inst.spec)?;
    let g = solve(&inst.spec, &inst.disc, &inst.noise, None, SolveMode::Projected)?;
    let l = lattice_solve(&inst.spec, &inst.disc, &inst.noise, LatticeMode::Projected)?;
    let one = Expr::Num(1.0);
    let mc_plus = measure_mc(&l, &one, Push::Up, inst.disc.radius, paths, inst.seed)?;
    let mc_minus = measure_mc(&l, &one, Push::Down, inst.disc.radius, paths, inst.seed)?;
    let (grid_plus, grid_minus) = (g.nu_plus.total_mass(), g.nu_minus.total_mass());
    let close = |grid: f64, mc: crate::lattice::McEstimate| {
        (mc.estimate - grid).abs() <= 3.0 * mc.stderr + MEASURE_REL_TOL * grid.abs()
    };
    Ok(MeasureReport {
        grid_plus,
        grid_minus,
        mc_plus,
        mc_minus,
        pass: close(grid_plus, mc_plus) && close(grid_minus, mc_minus),
    })
}

fn run_check(kind: CheckKind, entry: &RunEntry, inst: &Instance) -> Result<Outcome, ValidationError> {
    let (spec, disc, noise) = (&inst.spec, &inst.disc, &inst.noise);
    Ok(match kind {
        CheckKind::Hypotheses => {
            let r = check_hypotheses(spec, disc)?;
            let worst = r.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max);
            let names: Vec<&str> = r.violations.iter().map(|v| v.hypothesis.label()).collect();
            outcome(r.is_admissible(), "worst_violation", worst, names.join(" "))
        }
        CheckKind::Complementarity => {
            let sol = solve_projected(spec, disc, noise, inst.picard.tol, inst.picard.max_iter)?;
            let (lo, hi) = complementarity(spec, disc, &sol)?;
            let worst = lo.abs().max(hi.abs());
            outcome(lo == 0.0 && hi == 0.0, "max_abs_sum", worst, format!("lower {lo:e} upper {hi:e}"))
        }
        CheckKind::Comparison => {
            // Raising f by a constant orders the pair.
            let mut bigger = spec.clone();
            bigger.f = Expr::Binary(crate::dsl::BinOp::Add, Box::new(spec.f.clone()), Box::new(Expr::Num(0.1)));
            let r = check_comparison(spec, &bigger, disc, noise, inst.picard)?;
            let worst = r.grid_worst.max(r.lattice_worst);
            let cond = if r.conditional { " (conditional)" } else { "" };
            outcome(r.pass, "worst_violation", worst, format!("grid {:e} lattice {:e}{cond}", r.grid_worst, r.lattice_worst))
        }
        CheckKind::PenalizationSweep => {
            let levels = entry.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let r = check_penalization_sweep(spec, disc, noise, &levels, None)?;
            let last = r.rows.last().map_or(0.0, |row| row.max_upper_excess);
            outcome(
                r.pass,
                "final_excess",
                last,
                format!(
                    "nodewise {} excess {} diff {} tol {:e}",
                    r.nodewise_monotone, r.excess_monotone, r.diff_monotone, r.tol_excess
                ),
            )
        }
        CheckKind::Ito => {
            let phi: ItoPhi = entry.phi.as_deref().unwrap_or("x^2").parse()?;
            let r = check_ito_residual(spec, disc, noise, phi)?;
            outcome(r.pass, "residual", r.coarse.residual, format!("phi {phi} fine {:e} shrink {:.3}", r.fine.residual, r.shrink))
        }
        CheckKind::Separability => {
            let r = check_separability(spec, disc, noise)?;
            outcome(r.pass, "kappa_hat", r.kappa_hat, format!("max z - U {:e}", r.max_upper_excess))
        }
        CheckKind::Lipschitz => {
            let samples = entry.paths.unwrap_or(DEFAULT_LIPSCHITZ_SAMPLES);
            let r = check_lipschitz_declared(spec, disc, samples, inst.seed, LipschitzBox::default())?;
            let (ratio, detail) = match &r.worst {
                Some(w) => (w.ratio(), format!("{} at y=({:.3},{:.3}) z=({:.3},{:.3})", w.coefficient, w.y.0, w.y.1, w.z.0, w.z.1)),
                None => (0.0, String::new()),
            };
            outcome(r.pass, "worst_ratio", ratio, detail)
        }
        CheckKind::Picard => {
            let out = picard_solve(spec, disc, noise, inst.picard.tol, inst.picard.max_iter)?;
            let status = out.trace.contraction_status(out.consts.delta0);
            let ratio = out.trace.max_ratio().unwrap_or(0.0);
            outcome(
                status == ContractionStatus::Within,
                "max_ratio",
                ratio,
                format!("{} iterations, delta0 {:.4}, {status:?}", out.trace.records.len(), out.consts.delta0),
            )
        }
        CheckKind::FeynmanKac => {
            let r = check_feynman_kac(inst)?;
            outcome(r.pass, "sup_err_y", r.coarse.sup_err_y, format!("fine {:e} shrink {:.3}", r.fine.sup_err_y, r.shrink))
        }
        CheckKind::Measure => {
            let r = check_measure(inst, entry.paths.unwrap_or(DEFAULT_MEASURE_PATHS))?;
            let rel = if r.grid_minus > 0.0 { (r.mc_minus.estimate - r.grid_minus).abs() / r.grid_minus } else { 0.0 };
            outcome(
                r.pass,
                "rel_err_minus",
                rel,
                format!(
                    "minus {:.5}±{:.5} vs {:.5}; plus {:.5}±{:.5} vs {:.5}",
                    r.mc_minus.estimate, r.mc_minus.stderr, r.grid_minus, r.mc_plus.estimate, r.mc_plus.stderr, r.grid_plus
                ),
            )
        }
        CheckKind::Energy => {
            let r = energy_identity_check(spec, disc, entry.paths.unwrap_or(DEFAULT_ENERGY_PATHS), inst.seed)?;
            outcome(r.pass, "max_rel_err", r.max_rel_err, format!("{} checkpoints", r.points.len()))
        }
    })
}

/// Runs every entry of `cfg` (concurrently) and returns one row per entry in
/// file order. Instances are resolved up front; an unknown instance or check
/// is a configuration error, while a check that cannot run is reported as an
/// `error:<kind>` row.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Summary, SuiteError> {
    let mut jobs = Vec::with_capacity(cfg.run.len());
    for (index, entry) in cfg.run.iter().enumerate() {
        let kind: CheckKind = entry.check.parse()?;
        let inst = Instance::load(&entry.instance).map_err(|source| SuiteError::Instance {
            name: entry.instance.clone(),
            source,
        })?;
        if let Some(levels) = &entry.levels {
            if levels.is_empty() {
                return Err(SuiteError::Option { index, detail: "empty level list".into() });
            }
        }
        if entry.paths == Some(0) {
            return Err(SuiteError::Option { index, detail: "paths must be at least 1".into() });
        }
        jobs.push((kind, entry, inst));
    }
    let rows = jobs
        .par_iter()
        .map(|(kind, entry, inst)| {
            let (status, metric, value, detail) = match run_check(*kind, entry, inst) {
                Ok(o) => (if o.pass { RowStatus::Pass } else { RowStatus::Fail }, o.metric.to_string(), o.value, o.detail),
                Err(e) => (RowStatus::Error(e.kind().to_string()), String::new(), f64::NAN, e.to_string()),
            };
            log::info!("{kind} on {}: {status}", inst.name);
            SummaryRow {
                check: kind.name().to_string(),
                instance: entry.instance.clone(),
                status,
                metric,
                value,
                detail,
            }
        })
        .collect();
    Ok(Summary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn small() -> Discretization {
        Discretization::new(2.0, 40, 40, 1.0).unwrap()
    }

    #[test]
    fn phi_derivatives_match_finite_differences() {
        let h = 1e-5;
        for phi in ItoPhi::ALL {
            for &x in &[-1.7, -0.3, 0.4, 1.1, 2.5] {
                let d1 = (phi.value(x + h) - phi.value(x - h)) / (2.0 * h);
                let d2 = (phi.d1(x + h) - phi.d1(x - h)) / (2.0 * h);
                assert!((d1 - phi.d1(x)).abs() < 1e-6, "{phi} d1 at {x}");
                assert!((d2 - phi.d2(x)).abs() < 1e-6, "{phi} d2 at {x}");
            }
            assert_eq!(phi.name().parse::<ItoPhi>().unwrap(), phi);
        }
        assert!(matches!("sin(x)".parse::<ItoPhi>(), Err(ValidationError::UnsupportedPhi(_))));
    }

    #[test]
    fn identical_specs_compare_with_zero_violation() {
        let mut spec = ProblemSpec::linear(1.0, e("exp(-x*x)"));
        spec.f = e("cos(x)");
        spec.h = vec![e("0.3")];
        spec.lower = Some(e("-0.5"));
        spec.upper = Some(e("0.8"));
        let disc = small();
        let noise = crate::model::make_noise(3, disc.nt, 1, 1.0);
        let r = check_comparison(&spec, &spec, &disc, &noise, PicardSettings::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.grid_worst, 0.0);
        assert_eq!(r.lattice_worst, 0.0);
    }

    #[test]
    fn comparison_preconditions_are_named() {
        let disc = small();
        let noise = NoisePath::zero(disc.nt, 1, 1.0);
        let a = ProblemSpec::linear(1.0, e("0.1"));
        let b = ProblemSpec::linear(1.0, e("0"));
        let err = check_comparison(&a, &b, &disc, &noise, PicardSettings::default()).unwrap_err();
        assert!(matches!(err, ValidationError::PreconditionUnmet { hypothesis: "psi1 <= psi2", .. }));
        let mut c = ProblemSpec::linear(1.0, e("0"));
        c.g = e("0.1*x");
        let err = check_comparison(&b, &c, &disc, &noise, PicardSettings::default()).unwrap_err();
        assert!(matches!(err, ValidationError::PreconditionUnmet { hypothesis: "shared g", .. }));
        let mut d = ProblemSpec::linear(1.0, e("0"));
        d.f = e("-1");
        let err = check_comparison(&b, &d, &disc, &noise, PicardSettings::default()).unwrap_err();
        assert!(matches!(err, ValidationError::PreconditionUnmet { hypothesis: "f1 <= f2", .. }));
    }

    #[test]
    fn ito_identity_is_exact_for_the_constant_drift() {
        let mut spec = ProblemSpec::linear(1.0, e("0"));
        spec.f = e("1");
        let disc = small();
        let noise = NoisePath::zero(disc.nt, 1, 1.0);
        let t = ito_terms(&spec, &disc, &noise, ItoPhi::Square).unwrap();
        let area = disc.nx as f64 * disc.dx();
        assert!((t.phi_u0 - area).abs() < 1e-12);
        assert!((t.drift - area).abs() < 1e-12);
        assert!(t.residual < 1e-12);
        let zero = ito_terms(&ProblemSpec::linear(1.0, e("0")), &disc, &noise, ItoPhi::PositiveSquare).unwrap();
        assert_eq!(zero.residual, 0.0);
        assert_eq!(zero.lhs, 0.0);
    }

    #[test]
    fn separability_examples() {
        let disc = small();
        let noise = NoisePath::zero(disc.nt, 1, 1.0);
        let mut spec = ProblemSpec::linear(1.0, e("0"));
        spec.lower = Some(e("-1"));
        spec.upper = Some(e("1"));
        spec.witness = Some(crate::model::SeparabilityWitness {
            psi: e("0"),
            f: e("0"),
            g: e("0"),
            h: vec![e("0")],
        });
        let r = check_separability(&spec, &disc, &noise).unwrap();
        assert!(r.pass);
        assert_eq!(r.kappa_hat, 1.0);
        spec.lower = Some(e("0.5"));
        assert!(!check_separability(&spec, &disc, &noise).unwrap().pass);
        spec.lower = Some(e("-0.1"));
        spec.upper = Some(e("1.5"));
        spec.witness.as_mut().unwrap().f = e("1");
        let r = check_separability(&spec, &disc, &noise).unwrap();
        assert!(r.pass);
        assert!((r.kappa_hat - 0.1).abs() < 1e-12);
        spec.witness = None;
        assert!(matches!(
            check_separability(&spec, &disc, &noise),
            Err(ValidationError::PreconditionUnmet { .. })
        ));
    }

    #[test]
    fn lipschitz_examples() {
        let disc = small();
        let mut spec = ProblemSpec::linear(1.0, e("0"));
        spec.f = e("clamp(y, -1, 1)");
        spec.lip = LipschitzData { c: 1.0, alpha: 0.0, beta: 0.0 };
        assert!(check_lipschitz_declared(&spec, &disc, 5000, 1, LipschitzBox::default()).unwrap().pass);

        spec.f = e("y*y");
        let r = check_lipschitz_declared(&spec, &disc, 5000, 1, LipschitzBox::default()).unwrap();
        assert!(!r.pass);
        let w = r.worst.unwrap();
        assert_eq!(w.coefficient, "f");
        assert!(w.y.0.abs() > 8.0 && w.y.1.abs() > 8.0, "{w:?}");

        let mut spec = ProblemSpec::linear(1.0, e("0"));
        spec.h = vec![e("0.4*z1")];
        spec.lip = LipschitzData { c: 0.0, alpha: 0.0, beta: 0.4 };
        assert!(check_lipschitz_declared(&spec, &disc, 5000, 1, LipschitzBox::default()).unwrap().pass);
    }

    #[test]
    fn sweep_rejects_bad_levels_and_is_trivial_without_activity() {
        let disc = small();
        let noise = NoisePath::zero(disc.nt, 1, 1.0);
        let mut spec = ProblemSpec::linear(1.0, e("0.5*exp(-x*x)"));
        spec.lower = Some(e("-5"));
        spec.upper = Some(e("5"));
        for bad in [vec![], vec![2.0, 1.0], vec![-1.0], vec![f64::NAN]] {
            assert!(matches!(
                check_penalization_sweep(&spec, &disc, &noise, &bad, None),
                Err(ValidationError::InvalidLevels)
            ));
        }
        let r = check_penalization_sweep(&spec, &disc, &noise, &[1.0, 2.0, 4.0], None).unwrap();
        assert!(r.pass);
        let free = solve(&spec, &disc, &noise, None, SolveMode::Free).unwrap();
        for row in &r.rows {
            assert_eq!(row.max_upper_excess, 0.0);
            assert_eq!(row.sup_diff_to_projected, 0.0);
        }
        assert_eq!(r.tol_excess, 0.05);
        let again = solve(&spec, &disc, &noise, None, SolveMode::Penalized { n: 4.0, submode: PenaltyMode::Upper }).unwrap();
        assert_eq!(again.u, free.u);
    }

    #[test]
    fn suite_config_errors() {
        assert!(matches!(
            SuiteConfig::from_toml("[[run]]\ncheck = \"nope\"\ninstance = \"reflected_ode\"\n"),
            Err(SuiteError::UnknownCheck(_))
        ));
        let cfg = SuiteConfig::from_toml("[[run]]\ncheck = \"picard\"\ninstance = \"missing_instance\"\n").unwrap();
        assert!(matches!(run_suite(&cfg), Err(SuiteError::Instance { .. })));
        let empty = run_suite(&SuiteConfig::default()).unwrap();
        assert!(empty.rows.is_empty() && empty.all_pass());
        let _ = SuiteConfig::default_suite();
    }

    #[test]
    fn broken_contraction_is_reported() {
        let cfg = SuiteConfig::from_toml("[[run]]\ncheck = \"picard\"\ninstance = \"broken_contraction\"\n").unwrap();
        let s = run_suite(&cfg).unwrap();
        assert_eq!(s.rows[0].status, RowStatus::Error("not_contractive".into()));
        assert!(!s.all_pass());
    }
}
