//! The homogenized drift and its ODE.
//!
//! Averaging the stacked increment against the invariant distribution of
//! the frozen wrapped kernel gives the drift field
//!
//! ```text
//! beta(x) = sum_g mu_x(g) * f(x, g)
//! ```
//!
//! with `mu_x` solved from the limit kernel (`Scale::Limit`); the finite-N
//! variant `beta^N` exists for the kernel-perturbation diagnostics only.
//! The increment enters unscaled — the `1/N` is absorbed by the time
//! rescaling that turns `N` updates into one unit of ODE time, so the
//! Euler scheme with step `h = 1/N` is the discrete process with the
//! noise averaged out.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::stationary::{stationary_distribution, DEFAULT_STATIONARY_TOL};
use crate::wrapped::{Scale, WrappedGame};

/// A vector field on parameter space, evaluated node by node during
/// integration. `&mut self` lets implementations keep solver state such as
/// a warm-started invariant distribution.
pub trait Drift {
    fn dim(&self) -> usize;
    fn eval(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    /// Radius of the ball trajectories are expected to stay in, when the
    /// field knows one. Used to flag (not fail) excursions.
    fn ball_radius(&self) -> Option<f64> {
        None
    }
}

fn drift_from_mu(w: &WrappedGame, x: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; w.dim()];
    for (g, &weight) in mu.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let inc = w.increment(x, g)?;
        for (o, v) in out.iter_mut().zip(&inc) {
            *o += weight * v;
        }
    }
    Ok(out)
}

/// Drift at `x`: builds the kernel for the requested scale, solves its
/// invariant distribution, and averages the unscaled increment.
pub fn beta(w: &WrappedGame, x: &[f64], scale: Scale) -> Result<Vec<f64>> {
    let p = w.transition_matrix(x, scale)?;
    let mu = stationary_distribution(&p, DEFAULT_STATIONARY_TOL)?;
    drift_from_mu(w, x, mu.as_slice())
}

/// Euclidean gap `‖beta^N(x) - beta(x)‖_2` between the finite-scale and
/// limit drifts.
pub fn beta_gap(w: &WrappedGame, x: &[f64], scale: u64) -> Result<f64> {
    let finite = beta(w, x, Scale::Finite(scale))?;
    let limit = beta(w, x, Scale::Limit)?;
    Ok(finite
        .iter()
        .zip(&limit)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Wrapped-game drift with an optional warm start: reusing the previous
/// node's invariant distribution as a power-iteration seed is much cheaper
/// along an ODE orbit where consecutive kernels nearly coincide. Results
/// agree with the cold path within the solver tolerance either way.
pub struct DriftField<'w> {
    wrapped: &'w WrappedGame,
    scale: Scale,
    tol: f64,
    warm_start: bool,
    last_mu: Option<Vec<f64>>,
    ergodicity_checked: bool,
}

impl<'w> DriftField<'w> {
    pub fn new(wrapped: &'w WrappedGame, scale: Scale) -> Self {
        DriftField {
            wrapped,
            scale,
            tol: DEFAULT_STATIONARY_TOL,
            warm_start: false,
            last_mu: None,
            ergodicity_checked: false,
        }
    }

    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn with_solver_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn solve_mu(&mut self, p: &crate::matrix::RowMatrix) -> Result<Vec<f64>> {
        if self.warm_start {
            if let Some(seed) = self.last_mu.take() {
                let mut mu = seed;
                for _ in 0..50_000 {
                    if crate::stationary::residual_l1(p, &mu) <= self.tol {
                        return Ok(mu);
                    }
                    mu = p.left_mul(&mu);
                }
                // Seed did not converge quickly; fall through to the solver.
            }
        }
        // Verify ergodicity on the first kernel of the orbit; the uniform
        // exploration floor that certifies it does not move with x, so
        // subsequent nodes reuse the cheaper unverified solve.
        let mu = if self.ergodicity_checked {
            crate::stationary::stationary_distribution_unverified(p, self.tol)?
        } else {
            let mu = stationary_distribution(p, self.tol)?;
            self.ergodicity_checked = true;
            mu
        };
        Ok(mu.as_slice().to_vec())
    }
}

impl Drift for DriftField<'_> {
    fn dim(&self) -> usize {
        self.wrapped.dim()
    }

    fn eval(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.wrapped.transition_matrix(x, self.scale)?;
        let mu = self.solve_mu(&p)?;
        let out = drift_from_mu(self.wrapped, x, &mu)?;
        if self.warm_start {
            self.last_mu = Some(mu);
        }
        Ok(out)
    }

    fn ball_radius(&self) -> Option<f64> {
        self.wrapped.ball_radius().ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Euler,
    Rk4,
}

impl OdeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OdeMethod::Euler => "euler",
            OdeMethod::Rk4 => "rk4",
        }
    }
}

/// Fixed-step solution on a uniform grid of `steps + 1` nodes.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub method: OdeMethod,
    /// First node (if any) whose sup norm exceeded the parameter ball by
    /// more than 1e-6 — a warning sign, not an error.
    pub ball_exceeded_at: Option<usize>,
}

impl OdeTrajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step_size(&self) -> f64 {
        self.horizon() / self.steps() as f64
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("non-empty grid")
    }

    /// Linear interpolation between grid nodes; `t` is clamped to the grid.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let h = self.step_size();
        let k = self.steps();
        let pos = (t / h).clamp(0.0, k as f64);
        let lo = (pos.floor() as usize).min(k);
        if lo == k {
            return self.states[k].clone();
        }
        let w = pos - lo as f64;
        self.states[lo]
            .iter()
            .zip(&self.states[lo + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// CSV with columns `t, y_0, ..., y_{d-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for j in 0..self.dim() {
            write!(w, ",y_{}", j)?;
        }
        writeln!(w)?;
        for (t, y) in self.times.iter().zip(&self.states) {
            write!(w, "{}", t)?;
            for v in y {
                write!(w, ",{}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrate `y' = field(y)` from `x0` over `[0, horizon]` with a fixed
/// step `h = horizon / steps`. Euler reproduces the natural discrete
/// scheme at `steps = N * horizon`; RK4 serves as the high-accuracy
/// reference. A drift failure aborts with the offending node index.
pub fn integrate(
    field: &mut dyn Drift,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    method: OdeMethod,
) -> Result<OdeTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {}",
            horizon
        )));
    }
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries, drift expects {}",
            x0.len(),
            field.dim()
        )));
    }
    let h = horizon / steps as f64;
    let radius = field.ball_radius();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut ball_exceeded_at = None;
    let mut y = x0.to_vec();

    let note_ball = |node: usize, y: &[f64], slot: &mut Option<usize>| {
        if slot.is_none() {
            if let Some(r) = radius {
                let sup = y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                if sup > r + 1e-6 {
                    *slot = Some(node);
                }
            }
        }
    };

    times.push(0.0);
    states.push(y.clone());
    note_ball(0, &y, &mut ball_exceeded_at);

    let eval = |field: &mut dyn Drift, node: usize, x: &[f64]| -> Result<Vec<f64>> {
        field.eval(x).map_err(|e| Error::DriftEvaluation {
            node,
            source: Box::new(e),
        })
    };

    for n in 0..steps {
        match method {
            OdeMethod::Euler => {
                let k1 = eval(field, n, &y)?;
                for (yj, kj) in y.iter_mut().zip(&k1) {
                    *yj += h * kj;
                }
            }
            OdeMethod::Rk4 => {
                let k1 = eval(field, n, &y)?;
                let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
                let k2 = eval(field, n, &y2)?;
                let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
                let k3 = eval(field, n, &y3)?;
                let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
                let k4 = eval(field, n, &y4)?;
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
        }
        times.push((n + 1) as f64 * h);
        states.push(y.clone());
        note_ball(n + 1, &y, &mut ball_exceeded_at);
    }

    Ok(OdeTrajectory {
        times,
        states,
        method,
        ball_exceeded_at,
    })
}
