//! Domain types shared by every solver: problem data, discretization, noise
//! paths, space-time fields and discrete measures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dsl::{eval_slice, Expr, SliceEvalError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),
    #[error("evaluating {what} at slice {k}: {source}")]
    Eval {
        what: &'static str,
        k: usize,
        #[source]
        source: SliceEvalError,
    },
}

/// Declared Lipschitz constants of the coefficients: `c` bounds `f`, `g`, `h`
/// in `y` and `f` in `z`; `alpha` bounds `g` in `z`; `beta` bounds `h` in `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzData {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LipschitzData {
    pub fn new(c: f64, alpha: f64, beta: f64) -> Result<Self, ModelError> {
        for (name, v) in [("C", c), ("alpha", alpha), ("beta", beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidProblem(format!(
                    "Lipschitz constant {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self { c, alpha, beta })
    }

    /// `alpha + beta^2 / 2`, compared against `1/2` by the contraction test.
    pub fn contraction_level(&self) -> f64 {
        self.alpha + 0.5 * self.beta * self.beta
    }
}

/// True iff `alpha + beta^2/2 < 1/2` (strict).
pub fn validate_contraction(lip: &LipschitzData) -> bool {
    lip.contraction_level() < 0.5
}

/// Coefficients of the auxiliary linear equation whose solution must separate
/// the obstacles strictly.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityWitness {
    pub psi: Expr,
    pub f: Expr,
    pub g: Expr,
    pub h: Vec<Expr>,
}

/// Full two-obstacle problem. Absent obstacles are `None` (i.e. `∓∞`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub horizon: f64,
    pub dim: usize,
    pub d1: usize,
    pub psi: Expr,
    pub f: Expr,
    pub g: Expr,
    pub h: Vec<Expr>,
    pub lower: Option<Expr>,
    pub upper: Option<Expr>,
    pub lip: LipschitzData,
    pub witness: Option<SeparabilityWitness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Obstacle {
    Lower,
    Upper,
}

impl ProblemSpec {
    /// Problem with zero coefficients, no obstacles and declared constants zero.
    pub fn linear(horizon: f64, psi: Expr) -> Self {
        Self {
            horizon,
            dim: 1,
            d1: 1,
            psi,
            f: Expr::zero(),
            g: Expr::zero(),
            h: vec![Expr::zero()],
            lower: None,
            upper: None,
            lip: LipschitzData { c: 0.0, alpha: 0.0, beta: 0.0 },
            witness: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ModelError::InvalidProblem(format!(
                "horizon T must be positive, got {}",
                self.horizon
            )));
        }
        if self.dim != 1 {
            return Err(ModelError::InvalidProblem(format!(
                "only dim = 1 is supported, got {}",
                self.dim
            )));
        }
        if self.d1 < 1 {
            return Err(ModelError::InvalidProblem("d1 must be at least 1".into()));
        }
        if self.h.len() != self.d1 {
            return Err(ModelError::InvalidProblem(format!(
                "h has {} components but d1 = {}",
                self.h.len(),
                self.d1
            )));
        }
        if let Some(w) = &self.witness {
            if w.h.len() != self.d1 {
                return Err(ModelError::InvalidProblem(format!(
                    "witness h has {} components but d1 = {}",
                    w.h.len(),
                    self.d1
                )));
            }
        }
        LipschitzData::new(self.lip.c, self.lip.alpha, self.lip.beta)?;
        Ok(())
    }

    /// True when any of `f`, `g`, `h` depends on `(y, z1)`; such problems are
    /// solved by Picard iteration over frozen fields.
    pub fn depends_on_solution(&self) -> bool {
        self.f.depends_on_solution()
            || self.g.depends_on_solution()
            || self.h.iter().any(Expr::depends_on_solution)
    }

    pub fn obstacle(&self, which: Obstacle) -> Option<&Expr> {
        match which {
            Obstacle::Lower => self.lower.as_ref(),
            Obstacle::Upper => self.upper.as_ref(),
        }
    }

    /// Obstacle values at time `t`; `-∞`/`+∞` when the obstacle is absent.
    pub fn obstacle_slice(
        &self,
        which: Obstacle,
        k: usize,
        t: f64,
        xs: &[f64],
    ) -> Result<Vec<f64>, ModelError> {
        match self.obstacle(which) {
            None => Ok(vec![
                match which {
                    Obstacle::Lower => f64::NEG_INFINITY,
                    Obstacle::Upper => f64::INFINITY,
                };
                xs.len()
            ]),
            Some(e) => eval_slice(e, t, xs, None, None).map_err(|source| ModelError::Eval {
                what: match which {
                    Obstacle::Lower => "lower obstacle",
                    Obstacle::Upper => "upper obstacle",
                },
                k,
                source,
            }),
        }
    }

    pub fn terminal_slice(&self, xs: &[f64]) -> Result<Vec<f64>, ModelError> {
        eval_slice(&self.psi, self.horizon, xs, None, None).map_err(|source| ModelError::Eval {
            what: "terminal condition",
            k: usize::MAX,
            source,
        })
    }
}

/// Space-time grid on `D = [-R, R]` with `nx` interior nodes and `nt` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub radius: f64,
    pub nx: usize,
    pub nt: usize,
    pub theta: f64,
}

impl Discretization {
    pub fn new(radius: f64, nx: usize, nt: usize, theta: f64) -> Result<Self, ModelError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ModelError::InvalidDiscretization(format!("R must be positive, got {radius}")));
        }
        if nx < 3 {
            return Err(ModelError::InvalidDiscretization(format!("Nx must be at least 3, got {nx}")));
        }
        if nt < 1 {
            return Err(ModelError::InvalidDiscretization("Nt must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(ModelError::InvalidDiscretization(format!("theta must lie in [0, 1], got {theta}")));
        }
        Ok(Self { radius, nx, nt, theta })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.radius / (self.nx as f64 + 1.0)
    }

    pub fn dt(&self, horizon: f64) -> f64 {
        horizon / self.nt as f64
    }

    /// `|D| = 2R`.
    pub fn domain_length(&self) -> f64 {
        2.0 * self.radius
    }

    /// Interior nodes `x_j = -R + (j + 1) dx`, `j = 0..nx`.
    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx)
            .map(|j| -self.radius + (j as f64 + 1.0) * dx)
            .collect()
    }

    /// `t_k = k dt` for `k = 0..=nt`; the last entry is exactly `T`.
    pub fn times(&self, horizon: f64) -> Vec<f64> {
        let dt = self.dt(horizon);
        (0..=self.nt)
            .map(|k| if k == self.nt { horizon } else { k as f64 * dt })
            .collect()
    }

    /// Same grid with `dt` and `dx` halved (`nx -> 2 nx + 1` keeps every old
    /// node on the new grid).
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx + 1,
            nt: 2 * self.nt,
            ..*self
        }
    }
}

/// Sampled increments of the driving Brownian motion `B`. Row `k` is the
/// increment over `[t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub increments: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn nt(&self) -> usize {
        self.increments.len()
    }

    pub fn d1(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    /// Same Brownian path on a grid with twice the step: increments summed in
    /// consecutive pairs. Panics on an odd step count.
    pub fn coarsened(&self) -> Self {
        assert!(self.nt().is_multiple_of(2), "coarsening needs an even step count");
        Self {
            seed: self.seed,
            path_index: self.path_index,
            dt: 2.0 * self.dt,
            increments: self
                .increments
                .chunks(2)
                .map(|pair| pair[0].iter().zip(&pair[1]).map(|(a, b)| a + b).collect())
                .collect(),
        }
    }

    /// Same Brownian path on a grid with half the step, filled in by Brownian
    /// bridge sampling: each increment `ΔB` splits as `ΔB/2 ± sqrt(dt)/2 · ξ`.
    /// The bridge draws use the generator seeded with `path_seed(seed, index)`
    /// plus the new step count, so `bridge_refined().coarsened()` recovers
    /// this path up to rounding.
    pub fn bridge_refined(&self) -> Self {
        let nt = 2 * self.nt();
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(self.seed, self.path_index).wrapping_add(nt as u64));
        let half = 0.5 * self.dt.sqrt();
        let mut increments = Vec::with_capacity(nt);
        for row in &self.increments {
            let (first, second): (Vec<f64>, Vec<f64>) = row
                .iter()
                .map(|&db| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    (0.5 * db + half * xi, 0.5 * db - half * xi)
                })
                .unzip();
            increments.push(first);
            increments.push(second);
        }
        Self {
            seed: self.seed,
            path_index: self.path_index,
            dt: 0.5 * self.dt,
            increments,
        }
    }

    /// Path with every increment zero (deterministic problems).
    pub fn zero(nt: usize, d1: usize, horizon: f64) -> Self {
        Self {
            seed: 0,
            path_index: 0,
            dt: horizon / nt as f64,
            increments: vec![vec![0.0; d1]; nt],
        }
    }
}

/// Generator seed for path `index` under top-level `seed`: `seed XOR index`.
pub fn path_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Noise path 0 for `seed`.
pub fn make_noise(seed: u64, nt: usize, d1: usize, horizon: f64) -> NoisePath {
    make_noise_indexed(seed, 0, nt, d1, horizon)
}

/// Noise path `index`: a pure function of `(seed, index, nt, d1, horizon)`,
/// so paths can be generated in any order or concurrently.
pub fn make_noise_indexed(seed: u64, index: u64, nt: usize, d1: usize, horizon: f64) -> NoisePath {
    assert!(nt >= 1 && d1 >= 1, "noise path needs nt >= 1 and d1 >= 1");
    let dt = horizon / nt as f64;
    let scale = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, index));
    let increments = (0..nt)
        .map(|_| {
            (0..d1)
                .map(|_| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    n * scale
                })
                .collect()
        })
        .collect();
    NoisePath {
        seed,
        path_index: index,
        dt,
        increments,
    }
}

/// Central difference with one-sided stencils at both ends.
pub fn gradient(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 2, "gradient needs at least two nodes");
    (0..n)
        .map(|j| {
            if j == 0 {
                (values[1] - values[0]) / dx
            } else if j == n - 1 {
                (values[n - 1] - values[n - 2]) / dx
            } else {
                (values[j + 1] - values[j - 1]) / (2.0 * dx)
            }
        })
        .collect()
}

/// Solution values `u[k][j]` on every time slice with their discrete gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub values: Vec<Vec<f64>>,
    pub grad: Vec<Vec<f64>>,
}

impl FieldSeries {
    pub fn from_values(values: Vec<Vec<f64>>, dx: f64) -> Self {
        let grad = values.iter().map(|v| gradient(v, dx)).collect();
        Self { values, grad }
    }

    pub fn zeros(nt: usize, nx: usize) -> Self {
        Self {
            values: vec![vec![0.0; nx]; nt + 1],
            grad: vec![vec![0.0; nx]; nt + 1],
        }
    }

    /// Nodewise `self - other` for values and gradients.
    pub fn difference(&self, other: &FieldSeries) -> FieldSeries {
        let sub = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
                .collect()
        };
        FieldSeries {
            values: sub(&self.values, &other.values),
            grad: sub(&self.grad, &other.grad),
        }
    }

    /// `max |self - other|` over all nodes and slices.
    pub fn sup_distance(&self, other: &FieldSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Per-cell masses of `ν⁺` or `ν⁻`: entry `[k][j]` is the mass of
/// `[t_k, t_{k+1}) × [x_j - dx/2, x_j + dx/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub increments: Vec<Vec<f64>>,
}

impl DiscreteMeasure {
    pub fn zeros(nt: usize, nx: usize) -> Self {
        Self {
            increments: vec![vec![0.0; nx]; nt],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.increments.iter().flatten().sum()
    }

    /// `Σ φ(t_k, x_j) ν_{kj}`.
    pub fn apply<F: Fn(usize, usize) -> f64>(&self, phi: F) -> f64 {
        let mut acc = 0.0;
        for (k, row) in self.increments.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m != 0.0 {
                    acc += phi(k, j) * m;
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `L <= U` at every grid node.
    ObstacleOrder,
    /// `L(T) <= Ψ <= U(T)`.
    TerminalSandwich,
    /// `alpha + beta^2/2 < 1/2`.
    Contraction,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::ObstacleOrder => "obstacle_order",
            Hypothesis::TerminalSandwich => "terminal_sandwich",
            Hypothesis::Contraction => "contraction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub hypothesis: Hypothesis,
    /// Number of offending grid nodes (1 for the contraction condition).
    pub count: usize,
    /// Location `(t, x)` of the worst violation, when it has one.
    pub location: Option<(f64, f64)>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HypothesisReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn find(&self, h: Hypothesis) -> Option<&Violation> {
        self.violations.iter().find(|v| v.hypothesis == h)
    }
}

struct Worst {
    count: usize,
    magnitude: f64,
    location: Option<(f64, f64)>,
}

impl Worst {
    fn new() -> Self {
        Self { count: 0, magnitude: 0.0, location: None }
    }

    fn record(&mut self, excess: f64, t: f64, x: f64) {
        if excess > 0.0 {
            self.count += 1;
            if excess > self.magnitude {
                self.magnitude = excess;
                self.location = Some((t, x));
            }
        }
    }

    fn into_violation(self, hypothesis: Hypothesis) -> Option<Violation> {
        (self.count > 0).then_some(Violation {
            hypothesis,
            count: self.count,
            location: self.location,
            magnitude: self.magnitude,
        })
    }
}

/// Checks obstacle ordering, the terminal sandwich and the contraction
/// condition on the grid. Time jumps of an obstacle larger than `sqrt(dt)`
/// between consecutive slices produce a warning, not a violation.
pub fn check_hypotheses(spec: &ProblemSpec, disc: &Discretization) -> Result<HypothesisReport, ModelError> {
    spec.validate()?;
    let xs = disc.nodes();
    let times = disc.times(spec.horizon);
    let mut order = Worst::new();
    let mut report = HypothesisReport::default();
    let jump_tol = disc.dt(spec.horizon).sqrt();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut max_jump = [0.0f64; 2];

    for (k, &t) in times.iter().enumerate() {
        let lo = spec.obstacle_slice(Obstacle::Lower, k, t, &xs)?;
        let hi = spec.obstacle_slice(Obstacle::Upper, k, t, &xs)?;
        for j in 0..xs.len() {
            order.record(lo[j] - hi[j], t, xs[j]);
        }
        if let Some((plo, phi)) = &prev {
            for j in 0..xs.len() {
                if lo[j].is_finite() {
                    max_jump[0] = max_jump[0].max((lo[j] - plo[j]).abs());
                }
                if hi[j].is_finite() {
                    max_jump[1] = max_jump[1].max((hi[j] - phi[j]).abs());
                }
            }
        }
        prev = Some((lo, hi));
    }
    report.violations.extend(order.into_violation(Hypothesis::ObstacleOrder));

    let psi = spec.terminal_slice(&xs)?;
    let lo = spec.obstacle_slice(Obstacle::Lower, disc.nt, spec.horizon, &xs)?;
    let hi = spec.obstacle_slice(Obstacle::Upper, disc.nt, spec.horizon, &xs)?;
    let mut sandwich = Worst::new();
    for j in 0..xs.len() {
        sandwich.record((lo[j] - psi[j]).max(psi[j] - hi[j]), spec.horizon, xs[j]);
    }
    report.violations.extend(sandwich.into_violation(Hypothesis::TerminalSandwich));

    if !validate_contraction(&spec.lip) {
        report.violations.push(Violation {
            hypothesis: Hypothesis::Contraction,
            count: 1,
            location: None,
            magnitude: spec.lip.contraction_level() - 0.5,
        });
    }

    for (name, jump) in ["lower", "upper"].into_iter().zip(max_jump) {
        if jump > jump_tol {
            report.warnings.push(format!(
                "{name} obstacle jumps by {jump:.3e} between consecutive slices (> sqrt(dt) = {jump_tol:.3e}); \
                 time continuity is only checked on grid nodes"
            ));
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn spec_with(lower: &str, upper: &str, psi: &str) -> ProblemSpec {
        ProblemSpec {
            lower: Some(parse(lower).unwrap()),
            upper: Some(parse(upper).unwrap()),
            ..ProblemSpec::linear(1.0, parse(psi).unwrap())
        }
    }

    #[test]
    fn contraction_examples() {
        assert!(validate_contraction(&LipschitzData { c: 1.0, alpha: 0.2, beta: 0.5 }));
        assert!(!validate_contraction(&LipschitzData { c: 0.0, alpha: 0.5, beta: 0.0 }));
        assert!(!validate_contraction(&LipschitzData { c: 3.0, alpha: 0.0, beta: 1.0 }));
        assert!(LipschitzData::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_consistency() {
        let disc = Discretization::new(2.5, 199, 333, 1.0).unwrap();
        let t = 0.7;
        assert!((disc.dt(t) * disc.nt as f64 - t).abs() < 1e-15);
        assert!((disc.dx() * (disc.nx as f64 + 1.0) - 2.0 * disc.radius).abs() < 1e-14);
        assert_eq!(*disc.times(t).last().unwrap(), t);
        let xs = disc.nodes();
        assert!((xs[0] + disc.radius - disc.dx()).abs() < 1e-14);
        assert!((xs[disc.nx - 1] - disc.radius + disc.dx()).abs() < 1e-13);
        assert!(Discretization::new(1.0, 2, 10, 1.0).is_err());
        assert!(Discretization::new(1.0, 10, 0, 1.0).is_err());
        assert!(Discretization::new(1.0, 10, 10, 1.5).is_err());
        assert!(Discretization::new(0.0, 10, 10, 1.0).is_err());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let a = make_noise(7, 10, 2, 1.0);
        let b = make_noise(7, 10, 2, 1.0);
        let c = make_noise(8, 10, 2, 1.0);
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
        assert_eq!(a.nt(), 10);
        assert_eq!(a.d1(), 2);
        let coarse = a.coarsened();
        assert_eq!(coarse.nt(), 5);
        assert_eq!(coarse.increments[2][1], a.increments[4][1] + a.increments[5][1]);
        let p3 = make_noise_indexed(7, 3, 10, 2, 1.0);
        assert_eq!(p3.increments, make_noise(7 ^ 3, 10, 2, 1.0).increments);
    }

    #[test]
    fn bridge_refinement_keeps_the_coarse_path() {
        let a = make_noise(5, 50, 2, 1.0);
        let fine = a.bridge_refined();
        assert_eq!(fine.nt(), 100);
        assert_eq!(fine.dt, 0.01);
        assert_eq!(fine, a.bridge_refined());
        for (x, y) in fine.coarsened().increments.iter().flatten().zip(a.increments.iter().flatten()) {
            assert!((x - y).abs() < 1e-15);
        }
        // Half-step increments have variance dt/2.
        let big = make_noise(9, 200_000, 1, 1.0).bridge_refined();
        let var = big.increments.iter().map(|r| r[0] * r[0]).sum::<f64>() / big.nt() as f64;
        assert!((var / big.dt - 1.0).abs() < 0.02, "variance ratio {}", var / big.dt);
    }

    #[test]
    fn noise_moments() {
        // 10^6 draws of N(0, dt); the mean must sit within 4 standard errors.
        let nt = 1_000_000;
        let path = make_noise(11, nt, 1, 1.0);
        let dt = 1.0 / nt as f64;
        let m = nt as f64;
        let draws: Vec<f64> = path.increments.iter().map(|r| r[0]).collect();
        let mean = draws.iter().sum::<f64>() / m;
        assert!(mean.abs() < 4.0 * dt.sqrt() / m.sqrt(), "mean {mean}");
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((var / dt - 1.0).abs() < 0.01, "variance ratio {}", var / dt);
    }

    #[test]
    fn noise_steps_are_uncorrelated() {
        // Lag-1 sample autocorrelation over M = 10^5 draws.
        let m = 100_000;
        let path = make_noise(5, m, 1, 1.0);
        let d: Vec<f64> = path.increments.iter().map(|r| r[0]).collect();
        let mean = d.iter().sum::<f64>() / m as f64;
        let var: f64 = d.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = d.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let rho = cov / var;
        assert!(rho.abs() < 5.0 * (1.0 / m as f64).sqrt(), "rho {rho}");
    }

    #[test]
    fn admissible_problem_has_empty_report() {
        let disc = Discretization::new(1.0, 9, 10, 1.0).unwrap();
        let report = check_hypotheses(&spec_with("-1", "1", "0"), &disc).unwrap();
        assert!(report.is_admissible());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn terminal_sandwich_violation() {
        let disc = Discretization::new(1.0, 9, 10, 1.0).unwrap();
        let report = check_hypotheses(&spec_with("0.5", "1", "0"), &disc).unwrap();
        let v = report.find(Hypothesis::TerminalSandwich).unwrap();
        assert_eq!(v.count, disc.nx);
        assert_eq!(v.magnitude, 0.5);
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn obstacle_order_and_contraction_violations() {
        let disc = Discretization::new(1.0, 9, 10, 1.0).unwrap();
        let mut spec = spec_with("x", "0", "0");
        spec.lip = LipschitzData { c: 0.0, alpha: 0.4, beta: 0.6 };
        let report = check_hypotheses(&spec, &disc).unwrap();
        let order = report.find(Hypothesis::ObstacleOrder).unwrap();
        let (_, x) = order.location.unwrap();
        assert!((x - disc.nodes()[8]).abs() < 1e-15);
        let c = report.find(Hypothesis::Contraction).unwrap();
        assert!((c.magnitude - 0.08).abs() < 1e-12);
    }

    #[test]
    fn jumping_obstacle_warns() {
        let disc = Discretization::new(1.0, 9, 100, 1.0).unwrap();
        let spec = spec_with("-1 - 5*pos(t - 0.5)/(t - 0.5 + 1e-9)", "1", "-1");
        // lower falls from -1 to -6 across t = 0.5 and is -6 at T; Ψ = -1 stays inside.
        let report = check_hypotheses(&spec, &disc).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert!(report.is_admissible());
    }

    #[test]
    fn measure_and_gradient_helpers() {
        let g = gradient(&[0.0, 1.0, 4.0, 9.0], 1.0);
        assert_eq!(g, vec![1.0, 2.0, 4.0, 5.0]);
        let mut m = DiscreteMeasure::zeros(2, 3);
        m.increments[1][2] = 0.5;
        m.increments[0][0] = 0.25;
        assert_eq!(m.total_mass(), 0.75);
        assert_eq!(m.apply(|k, _| k as f64), 0.5);
    }
}
