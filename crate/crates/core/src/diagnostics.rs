//! Agreement between the stochastic scaled process and its ODE limit, and
//! empirical convergence-rate fits.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{integrate, DriftField, OdeMethod, OdeTrajectory};
use crate::rng::RngStream;
use crate::sim::{sample_trajectory, TrajectoryRecord};
use crate::stationary::{
    find_doeblin, stationary_distribution, tv_distance, DoeblinCertificate,
    DEFAULT_STATIONARY_TOL,
};
use crate::wrapped::{Scale, WrappedGame};

/// Sup over snapshot times of the Euclidean distance between the recorded
/// parameters and the (linearly interpolated) ODE solution.
///
/// The stochastic path is the step function here, so the comparison runs
/// on its own grid `t = n / N` against the interpolated reference, which
/// must cover the same horizon at least as finely.
pub fn sup_error(traj: &TrajectoryRecord, ode: &OdeTrajectory) -> Result<f64> {
    let horizon_gap = (traj.horizon - ode.horizon()).abs();
    if horizon_gap > 1e-9 * traj.horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "trajectory horizon {} vs ODE horizon {}",
            traj.horizon,
            ode.horizon()
        )));
    }
    if ode.step_size() > traj.min_snapshot_dt() + 1e-12 {
        return Err(Error::GridMismatch(format!(
            "ODE step {} coarser than snapshot spacing {}",
            ode.step_size(),
            traj.min_snapshot_dt()
        )));
    }
    let mut worst = 0.0f64;
    for snap in &traj.snapshots {
        if snap.params.len() != ode.dim() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot dimension {} vs ODE dimension {}",
                snap.params.len(),
                ode.dim()
            )));
        }
        let t = snap.n as f64 / traj.scale as f64;
        let y = ode.value_at(t);
        let dist = snap
            .params
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dist);
    }
    Ok(worst)
}

/// Monte Carlo estimate of the expected sup-error at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub scale: u64,
    pub horizon: f64,
    pub reps: usize,
    pub base_seed: u64,
    pub ode_steps: usize,
    /// Per-replication sup-errors, in seed order.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

impl ComparisonReport {
    /// CSV with one row per replication: `rep, seed, sup_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "rep,seed,sup_error")?;
        for (i, e) in self.errors.iter().enumerate() {
            writeln!(out, "{},{},{}", i, self.base_seed + i as u64, e)?;
        }
        Ok(())
    }
}

/// Reference grid for the ODE solution backing a scale-`N` comparison:
/// ten nodes per update, capped at 100_000.
pub fn ode_reference_steps(scale: u64, horizon: f64) -> usize {
    let wanted = (10.0 * scale as f64 * horizon).ceil();
    (wanted.min(100_000.0) as usize).max(1)
}

/// Run `reps` independent trajectories (seeds `base_seed..base_seed+reps`)
/// against one shared RK4 reference solution and aggregate the sup-errors.
/// Replications run in parallel; the report is deterministic in
/// `(base_seed, scale, horizon, reps)`.
pub fn mc_sup_error(
    w: &WrappedGame,
    x0: &[f64],
    scale: u64,
    horizon: f64,
    reps: usize,
    base_seed: u64,
) -> Result<ComparisonReport> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    let ode_steps = ode_reference_steps(scale, horizon);
    let mut field = DriftField::new(w, Scale::Limit).with_warm_start(true);
    let ode = integrate(&mut field, x0, horizon, ode_steps, OdeMethod::Rk4)?;

    let errors: Result<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let traj = sample_trajectory(w, x0, scale, horizon, base_seed + i as u64, None)?;
            sup_error(&traj, &ode)
        })
        .collect();
    let errors = errors?;

    let mean = errors.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(ComparisonReport {
        scale,
        horizon,
        reps,
        base_seed,
        ode_steps,
        errors,
        mean,
        std_error,
    })
}

/// Least-squares fit of `log(error)` against `log(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// The points that entered the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Points dropped for non-positive or non-finite values.
    pub excluded: usize,
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(n, e)| n > 0.0 && e > 0.0 && n.is_finite() && e.is_finite())
        .collect();
    let excluded = points.len() - usable.len();
    let mut distinct: Vec<f64> = usable.iter().map(|&(n, _)| n).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateRateFit(distinct.len()));
    }
    let logs: Vec<(f64, f64)> = usable.iter().map(|&(n, e)| (n.ln(), e.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(RateFit {
        points: usable,
        slope,
        intercept,
        residual_rms,
        excluded,
    })
}

/// Empirical estimates of the smoothness and minorization constants the
/// convergence theory runs on. All parameter-space distances are sup-norm;
/// distribution distances are L1 (rows) or total variation (invariant
/// laws); the drift gap is Euclidean.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub samples: usize,
    pub ball_radius: f64,
    /// Largest observed `‖f(x, g)‖∞` over probed points and wrapped states.
    pub update_sup: f64,
    /// Fitted Lipschitz constant of the joint policy.
    pub policy_lipschitz: f64,
    /// Analytic bound from the per-player policy Jacobians (infinite when
    /// some player provides none).
    pub policy_lipschitz_bound: f64,
    /// Fitted Lipschitz constant of the limit kernel (max-row-L1 metric).
    pub kernel_lipschitz: f64,
    /// Fitted Lipschitz constant of the invariant-law map (TV metric).
    pub stationary_lipschitz: f64,
    /// Fitted Lipschitz constant of the drift.
    pub drift_lipschitz: f64,
    pub doeblin: Option<DoeblinCertificate>,
    /// Analytic two-step floor `(kappa * eps / S)^2`, available when every
    /// transition probability is positive and every player explores.
    pub doeblin_floor: Option<f64>,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ball radius            {}", self.ball_radius)?;
        writeln!(f, "sup |f|                {}", self.update_sup)?;
        writeln!(
            f,
            "policy Lipschitz       {} (bound {})",
            self.policy_lipschitz, self.policy_lipschitz_bound
        )?;
        writeln!(f, "kernel Lipschitz       {}", self.kernel_lipschitz)?;
        writeln!(f, "stationary Lipschitz   {}", self.stationary_lipschitz)?;
        writeln!(f, "drift Lipschitz        {}", self.drift_lipschitz)?;
        match &self.doeblin {
            Some(cert) => writeln!(f, "Doeblin                k={} c={}", cert.k, cert.c)?,
            None => writeln!(f, "Doeblin                none")?,
        }
        if let Some(floor) = self.doeblin_floor {
            writeln!(f, "Doeblin floor (k=2)    {}", floor)?;
        }
        for v in &self.violations {
            writeln!(f, "violation: {}", v)?;
        }
        Ok(())
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn joint_policy(w: &WrappedGame, x: &[f64], state: usize) -> Result<Vec<f64>> {
    let game = w.game();
    let n_players = game.n_players();
    let mut per_player = Vec::with_capacity(n_players);
    for i in 0..n_players {
        let mut p = vec![0.0; game.n_actions(i)];
        w.stack().player_policy_into(i, x, state, &mut p)?;
        per_player.push(p);
    }
    let mut actions = vec![0usize; n_players];
    let mut joint = vec![0.0; game.joint_actions()];
    for (a, slot) in joint.iter_mut().enumerate() {
        game.indexer().decode_into(a, &mut actions)?;
        *slot = actions
            .iter()
            .enumerate()
            .map(|(i, &ai)| per_player[i][ai])
            .product();
    }
    Ok(joint)
}

/// Probe the smoothness and minorization structure of a wrapped game at
/// `samples` random parameter pairs in the ball (plus one structured pair
/// at the ball's center, where the softmax Jacobian peaks). A missing
/// Doeblin certificate is reported as a violation, not an error.
pub fn assumption_probe(w: &WrappedGame, samples: usize, seed: u64) -> Result<AssumptionReport> {
    if samples < 2 {
        return Err(Error::InvalidParameter(
            "assumption probe needs at least 2 samples".into(),
        ));
    }
    let radius = w.ball_radius()?;
    let d = w.dim();
    let game = w.game();
    let mut rng = RngStream::new(seed);

    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(samples + 1);
    // Structured pair: center of the ball, tickled along the first two
    // actions of every player in every state. The softmax Jacobian is
    // maximal at equal q-values, so this pins the fitted constant near its
    // analytic ceiling.
    let delta = 1e-3;
    let mut tickle = vec![0.0; d];
    for i in 0..w.stack().len() {
        let off = w.stack().offset(i);
        let s = game.n_states();
        for state in 0..s {
            tickle[off + state] = delta; // action 0 block
            if game.n_actions(i) > 1 {
                tickle[off + s + state] = -delta; // action 1 block
            }
        }
    }
    pairs.push((vec![0.0; d], tickle));
    for _ in 0..samples {
        let a: Vec<f64> = (0..d)
            .map(|_| (rng.next_uniform() * 2.0 - 1.0) * radius)
            .collect();
        let b: Vec<f64> = (0..d)
            .map(|_| (rng.next_uniform() * 2.0 - 1.0) * radius)
            .collect();
        pairs.push((a, b));
    }

    let mut policy_lip = 0.0f64;
    let mut kernel_lip = 0.0f64;
    let mut stationary_lip = 0.0f64;
    let mut drift_lip = 0.0f64;
    let mut update_sup = 0.0f64;

    for (x, y) in &pairs {
        let dist = x
            .iter()
            .zip(y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if dist == 0.0 {
            continue;
        }
        for state in 0..game.n_states() {
            let px = joint_policy(w, x, state)?;
            let py = joint_policy(w, y, state)?;
            let l1: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).abs()).sum();
            policy_lip = policy_lip.max(l1 / dist);
        }
        let kx = w.transition_matrix(x, Scale::Limit)?;
        let ky = w.transition_matrix(y, Scale::Limit)?;
        kernel_lip = kernel_lip.max(kx.max_row_l1_distance(&ky)? / dist);

        let mx = stationary_distribution(&kx, DEFAULT_STATIONARY_TOL)?;
        let my = stationary_distribution(&ky, DEFAULT_STATIONARY_TOL)?;
        stationary_lip = stationary_lip.max(tv_distance(&mx, &my)? / dist);

        let bx = crate::ode::beta(w, x, Scale::Limit)?;
        let by = crate::ode::beta(w, y, Scale::Limit)?;
        let gap = bx
            .iter()
            .zip(&by)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        drift_lip = drift_lip.max(gap / dist);

        for g in 0..w.size() {
            update_sup = update_sup.max(sup_norm(&w.increment(x, g)?));
            update_sup = update_sup.max(sup_norm(&w.increment(y, g)?));
        }
    }

    let policy_bound = (0..w.stack().len())
        .map(|i| w.stack().member(i).policy_lipschitz_bound())
        .try_fold(0.0f64, |acc, b| b.map(|v| acc + v))
        .unwrap_or(f64::INFINITY);

    let mut violations = Vec::new();
    if policy_lip > policy_bound {
        violations.push(format!(
            "fitted policy Lipschitz {} exceeds analytic bound {}",
            policy_lip, policy_bound
        ));
    }

    let eps_min = w.stack().min_exploration_rate();
    let doeblin = if eps_min > 0.0 {
        let x0 = w.stack().initial_params();
        let kernel = w.transition_matrix(&x0, Scale::Limit)?;
        let cert = find_doeblin(&kernel, 2 * w.size())?;
        if cert.is_none() {
            violations.push(format!(
                "no Doeblin certificate found up to k = {}",
                2 * w.size()
            ));
        }
        cert
    } else {
        violations.push("exploration rate is zero: Doeblin certification skipped".into());
        None
    };

    let doeblin_floor = match (game.min_positive_transition(), eps_min > 0.0) {
        (Some(kappa), true) if game.min_transition() > 0.0 => {
            let floor = (kappa * eps_min / game.n_states() as f64).powi(2);
            if let Some(cert) = &doeblin {
                if cert.k == 2 && cert.c < floor {
                    violations.push(format!(
                        "two-step Doeblin constant {} below analytic floor {}",
                        cert.c, floor
                    ));
                }
            }
            Some(floor)
        }
        _ => None,
    };

    Ok(AssumptionReport {
        samples,
        ball_radius: radius,
        update_sup,
        policy_lipschitz: policy_lip,
        policy_lipschitz_bound: policy_bound,
        kernel_lipschitz: kernel_lip,
        stationary_lipschitz: stationary_lip,
        drift_lipschitz: drift_lip,
        doeblin,
        doeblin_floor,
        violations,
    })
}
