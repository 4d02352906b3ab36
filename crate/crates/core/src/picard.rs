//! Picard fixed-point iteration for coefficients that depend on `(u, ∇u)`.
//!
//! Each iterate freezes `f`, `g`, `h` on the previous iterate's fields and
//! solves the resulting linear two-obstacle problem in projected mode. The
//! increments are measured in the weighted norm
//! `Σ_k e^{μ t_k} (δ ‖Δu_k‖² + ‖∇Δu_k‖²) dt`, in which the iteration
//! contracts with factor `δ₀ < 1` whenever `alpha + beta²/2 < 1/2`.

use thiserror::Error;

use crate::grid::{solve, GridSolution, SolveError, SolveMode};
use crate::model::{validate_contraction, Discretization, FieldSeries, LipschitzData, NoisePath, ProblemSpec};

/// Lower bound on `δ` when `C = 0` makes the `μ` equation degenerate.
pub const DELTA_FLOOR: f64 = 1e-6;

/// Slack added to `δ₀` when judging measured increment ratios.
pub const RATIO_SLACK: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("contraction condition fails: alpha + beta^2/2 = {level} >= 1/2")]
    NotContractive { level: f64 },
    #[error("no convergence after {max_iter} iterations (last increment norm^2 {last_norm_sq:e})")]
    NoConvergence {
        max_iter: usize,
        last_norm_sq: f64,
        trace: PicardTrace,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConstants {
    pub eps: f64,
    pub mu: f64,
    pub delta: f64,
    pub delta0: f64,
}

/// `C ε + α + β²(1 + ε) - (1 - α - C ε)`; admissible iff negative. Increasing in `ε`.
fn admissibility_gap(lip: &LipschitzData, eps: f64) -> f64 {
    let LipschitzData { c, alpha, beta } = *lip;
    c * eps + alpha + beta * beta * (1.0 + eps) - (1.0 - alpha - c * eps)
}

/// Chooses `ε` as half the largest admissible value (capped at 1, located by
/// bisection to 1e-12), then `δ` and `μ` from
/// `(μ - 1/ε)/(1 - α - Cε) = C(C+1)(1 + 1/ε)/(Cε + α + β²(1+ε))`.
///
/// For `C = 0` that equation forces `δ = 0`; we take `μ = 1/ε` and floor `δ`
/// at [`DELTA_FLOOR`] so the norm stays definite.
pub fn contraction_constants(lip: &LipschitzData) -> Result<ContractionConstants, PicardError> {
    if !validate_contraction(lip) {
        return Err(PicardError::NotContractive {
            level: lip.contraction_level(),
        });
    }
    let bracket = 2.0;
    let eps_max = if admissibility_gap(lip, bracket) < 0.0 {
        bracket
    } else {
        let (mut lo, mut hi) = (0.0, bracket);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if admissibility_gap(lip, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let eps = (0.5 * eps_max).min(1.0);
    let LipschitzData { c, alpha, beta } = *lip;
    let numer = c * eps + alpha + beta * beta * (1.0 + eps);
    let denom = 1.0 - alpha - c * eps;
    let delta0 = numer / denom;
    let (mu, delta) = if c > 0.0 {
        let delta = c * (c + 1.0) * (1.0 + 1.0 / eps) / numer;
        (1.0 / eps + delta * denom, delta)
    } else {
        (1.0 / eps, DELTA_FLOOR)
    };
    Ok(ContractionConstants { eps, mu, delta, delta0 })
}

/// `Σ_{k<Nt} e^{μ t_k} (δ ‖du_k‖² + ‖∇du_k‖²) dt` with `‖v‖² = Σ_j v_j² dx`.
/// The terminal slice is excluded (increments vanish there).
pub fn weighted_norm_sq(du: &FieldSeries, consts: &ContractionConstants, disc: &Discretization, horizon: f64) -> f64 {
    let dt = disc.dt(horizon);
    let dx = disc.dx();
    let times = disc.times(horizon);
    let mut acc = 0.0;
    for k in 0..disc.nt {
        let v: f64 = du.values[k].iter().map(|a| a * a).sum::<f64>() * dx;
        let g: f64 = du.grad[k].iter().map(|a| a * a).sum::<f64>() * dx;
        acc += (consts.mu * times[k]).exp() * (consts.delta * v + g) * dt;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardRecord {
    pub iter: usize,
    /// Weighted norm² of `u^{iter} - u^{iter-1}`.
    pub norm_sq: f64,
    /// `norm_sq / previous norm_sq`, from the second iteration on.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardTrace {
    pub records: Vec<PicardRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionStatus {
    /// Every ratio is at most `δ₀ + 0.1`.
    Within,
    /// Some ratio exceeds `δ₀ + 0.1` but none exceeds `2 δ₀`.
    Flagged,
    Exceeded,
}

impl PicardTrace {
    pub fn max_ratio(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn contraction_status(&self, delta0: f64) -> ContractionStatus {
        match self.max_ratio() {
            None => ContractionStatus::Within,
            Some(r) if r <= delta0 + RATIO_SLACK => ContractionStatus::Within,
            Some(r) if r <= 2.0 * delta0 => ContractionStatus::Flagged,
            Some(_) => ContractionStatus::Exceeded,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub solution: GridSolution,
    pub trace: PicardTrace,
    pub consts: ContractionConstants,
}

/// Picard iteration started from the zero field.
pub fn picard_solve(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome, PicardError> {
    picard_solve_from(spec, disc, noise, tol, max_iter, &FieldSeries::zeros(disc.nt, disc.nx))
}

/// Picard iteration from an arbitrary starting field. Stops once the
/// increment's weighted norm² drops below `tol²`.
pub fn picard_solve_from(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    tol: f64,
    max_iter: usize,
    start: &FieldSeries,
) -> Result<PicardOutcome, PicardError> {
    let consts = contraction_constants(&spec.lip)?;
    let mut trace = PicardTrace::default();
    let mut prev = start.clone();
    let mut last_norm: Option<f64> = None;
    for iter in 1..=max_iter {
        let sol = solve(spec, disc, noise, Some(&prev), SolveMode::Projected)?;
        let norm_sq = weighted_norm_sq(&sol.u.difference(&prev), &consts, disc, spec.horizon);
        let ratio = last_norm.map(|p| if p > 0.0 { norm_sq / p } else { 0.0 });
        trace.records.push(PicardRecord { iter, norm_sq, ratio });
        log::debug!("picard iter {iter}: norm^2 {norm_sq:e}");
        if norm_sq < tol * tol {
            return Ok(PicardOutcome {
                solution: sol,
                trace,
                consts,
            });
        }
        last_norm = Some(norm_sq);
        prev = sol.u;
    }
    Err(PicardError::NoConvergence {
        max_iter,
        last_norm_sq: last_norm.unwrap_or(f64::NAN),
        trace,
    })
}

/// Projected solve for any problem: a single linear solve when the
/// coefficients ignore `(y, z1)`, Picard iteration otherwise.
pub fn solve_projected(
    spec: &ProblemSpec,
    disc: &Discretization,
    noise: &NoisePath,
    tol: f64,
    max_iter: usize,
) -> Result<GridSolution, PicardError> {
    if spec.depends_on_solution() {
        Ok(picard_solve(spec, disc, noise, tol, max_iter)?.solution)
    } else {
        Ok(solve(spec, disc, noise, None, SolveMode::Projected)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn lip(c: f64, alpha: f64, beta: f64) -> LipschitzData {
        LipschitzData { c, alpha, beta }
    }

    fn check_invariants(l: &LipschitzData, k: &ContractionConstants) {
        let numer = l.c * k.eps + l.alpha + l.beta * l.beta * (1.0 + k.eps);
        let denom = 1.0 - l.alpha - l.c * k.eps;
        assert!(numer < denom);
        assert!((k.delta0 - numer / denom).abs() < 1e-10);
        assert!(k.delta0 >= 0.0 && k.delta0 < 1.0);
        if l.c > 0.0 {
            assert!((k.delta - (k.mu - 1.0 / k.eps) / denom).abs() < 1e-10 * k.delta.max(1.0));
            let rhs = l.c * (l.c + 1.0) * (1.0 + 1.0 / k.eps) / numer;
            assert!(((k.mu - 1.0 / k.eps) / denom - rhs).abs() < 1e-10 * rhs.max(1.0));
        }
    }

    // Expected values from direct evaluation of the closed-form admissibility
    // root ε* = (1 - 2α - β²)/(2C + β²) in exact rational arithmetic.
    #[test]
    fn constants_match_closed_form() {
        let k = contraction_constants(&lip(0.0, 0.0, 0.0)).unwrap();
        assert_eq!((k.eps, k.mu, k.delta, k.delta0), (1.0, 1.0, DELTA_FLOOR, 0.0));

        let l = lip(0.0, 0.2, 0.4);
        let k = contraction_constants(&l).unwrap();
        assert_eq!(k.eps, 1.0);
        assert_eq!(k.mu, 1.0);
        assert!((k.delta0 - 0.65).abs() < 1e-12);
        check_invariants(&l, &k);

        let l = lip(0.1, 0.3, 0.5);
        let k = contraction_constants(&l).unwrap();
        assert!((k.eps - 0.16666666666666666).abs() < 1e-10);
        assert!((k.mu - 6.864931506849315).abs() < 1e-9);
        assert!((k.delta - 1.2657534246575342).abs() < 1e-9);
        assert!((k.delta0 - 0.8902439024390244).abs() < 1e-10);
        check_invariants(&l, &k);

        let l = lip(1.0, 0.0, 0.0);
        let k = contraction_constants(&l).unwrap();
        assert!((k.eps - 0.25).abs() < 1e-11);
        assert!((k.mu - 34.0).abs() < 1e-8);
        assert!((k.delta - 40.0).abs() < 1e-8);
        assert!((k.delta0 - 1.0 / 3.0).abs() < 1e-10);
        check_invariants(&l, &k);
    }

    #[test]
    fn not_contractive_is_rejected() {
        assert!(matches!(
            contraction_constants(&lip(0.0, 0.6, 0.0)),
            Err(PicardError::NotContractive { .. })
        ));
        assert!(contraction_constants(&lip(3.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let disc = Discretization::new(1.0, 9, 20, 1.0).unwrap();
        let consts = ContractionConstants { eps: 1.0, mu: 0.0, delta: 1.0, delta0: 0.0 };
        let zero = FieldSeries::zeros(20, 9);
        assert_eq!(weighted_norm_sq(&zero, &consts, &disc, 2.0), 0.0);
        let c = 0.7;
        let constant = FieldSeries::from_values(vec![vec![c; 9]; 21], disc.dx());
        let got = weighted_norm_sq(&constant, &consts, &disc, 2.0);
        let want = c * c * (9.0 * disc.dx()) * 2.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn weighted_norm_matches_naive_loop() {
        let disc = Discretization::new(1.5, 13, 17, 1.0).unwrap();
        let horizon = 0.8;
        let consts = ContractionConstants { eps: 0.5, mu: 3.0, delta: 2.5, delta0: 0.3 };
        let values: Vec<Vec<f64>> = (0..=17)
            .map(|k| (0..13).map(|j| ((k * 31 + j * 7) as f64 * 0.37).sin()).collect())
            .collect();
        let field = FieldSeries::from_values(values, disc.dx());
        let dt = horizon / 17.0;
        let mut naive = 0.0;
        for k in 0..17 {
            for j in 0..13 {
                let w = (3.0 * (k as f64 * dt)).exp();
                naive += w * (2.5 * field.values[k][j].powi(2) + field.grad[k][j].powi(2)) * disc.dx() * dt;
            }
        }
        let got = weighted_norm_sq(&field, &consts, &disc, horizon);
        assert!((got - naive).abs() < 1e-12 * naive, "{got} vs {naive}");
    }

    #[test]
    fn linear_problem_converges_in_two_iterations() {
        let mut spec = ProblemSpec::linear(1.0, parse("sin(x)").unwrap());
        spec.f = parse("0.5").unwrap();
        spec.upper = Some(parse("1.2").unwrap());
        let disc = Discretization::new(2.0, 40, 50, 1.0).unwrap();
        let out = picard_solve(&spec, &disc, &NoisePath::zero(50, 1, 1.0), 1e-10, 10).unwrap();
        assert_eq!(out.trace.records.len(), 2);
        assert_eq!(out.trace.records[1].norm_sq, 0.0);
        let direct = solve(&spec, &disc, &NoisePath::zero(50, 1, 1.0), None, SolveMode::Projected).unwrap();
        assert_eq!(out.solution, direct);
    }

    #[test]
    fn degenerate_solution_dependence_matches_linear_solve() {
        let mut spec = ProblemSpec::linear(1.0, parse("cos(x)").unwrap());
        spec.f = parse("clamp(y,-1,1)*0 + 0").unwrap();
        spec.lip.c = 1.0;
        let disc = Discretization::new(2.0, 30, 40, 1.0).unwrap();
        let noise = NoisePath::zero(40, 1, 1.0);
        let out = picard_solve(&spec, &disc, &noise, 1e-12, 10).unwrap();
        let mut linear = spec.clone();
        linear.f = parse("0").unwrap();
        let direct = solve(&linear, &disc, &noise, None, SolveMode::Projected).unwrap();
        assert_eq!(out.solution.u, direct.u);
    }

    #[test]
    fn no_convergence_is_reported_with_trace() {
        let mut spec = ProblemSpec::linear(1.0, parse("1").unwrap());
        spec.f = parse("-y").unwrap();
        spec.lip.c = 1.0;
        let disc = Discretization::new(1.0, 5, 100, 1.0).unwrap();
        match picard_solve(&spec, &disc, &NoisePath::zero(100, 1, 1.0), 1e-14, 3) {
            Err(PicardError::NoConvergence { max_iter, trace, .. }) => {
                assert_eq!(max_iter, 3);
                assert_eq!(trace.records.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
