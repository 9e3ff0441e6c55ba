//! The seven subcommands. Each file-writing command records its outputs
//! through a [`ManifestWriter`] and writes the manifest last.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;

use qfluid::{
    assumption_probe, find_doeblin, integrate, mc_sup_error, mixing_curve, rate_fit,
    sample_coupled, sample_trajectory, stationary_distribution, DriftField, OdeMethod, RowMatrix,
    Scale,
};

use crate::config::ExperimentConfig;
use crate::manifest::ManifestWriter;

pub struct Ctx {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub config_dir: PathBuf,
    pub config_sha256: String,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Ctx {
    fn manifest(&self, command: &str) -> ManifestWriter {
        ManifestWriter::new(
            command,
            &self.out_dir,
            &self.config_path,
            &self.config_sha256,
            self.seed,
        )
    }

    fn wrapped(&self) -> Result<qfluid::WrappedGame> {
        self.config.build_wrapped(&self.config_dir)
    }
}

/// `validate`: game invariants plus the assumption probe. Exit 0 iff the
/// game is valid and, unless skipped, a Doeblin certificate exists.
pub fn cmd_validate(ctx: &Ctx, no_doeblin: bool) -> Result<i32> {
    let tensors = ctx.config.game_tensors(&ctx.config_dir)?;
    let report = qfluid::validate_game(
        tensors.n_states,
        &tensors.actions,
        &tensors.transition,
        &tensors.rewards,
        &tensors.initial_law,
    )
    .map_err(|e| anyhow::anyhow!("{}", e))?;
    if !report.is_valid() {
        for v in &report.violations {
            println!("violation: {}", v);
        }
        println!("game: INVALID ({} violations)", report.violations.len());
        return Ok(1);
    }
    println!("game: ok");

    let w = ctx.wrapped()?;
    println!(
        "wrapped: |E| = {}, parameter dimension d = {}",
        w.size(),
        w.dim()
    );

    if no_doeblin {
        println!("doeblin: skipped (--no-doeblin)");
        return Ok(0);
    }

    if w.stack().min_exploration_rate() <= 0.0 {
        println!(
            "warning: a reinforcer has exploration rate 0; Doeblin certification \
             needs epsilon > 0 (pass --no-doeblin to run simulation-only setups)"
        );
        return Ok(1);
    }

    let probe = assumption_probe(&w, ctx.config.run.probe_samples.max(2), ctx.seed)
        .map_err(|e| anyhow::anyhow!("{}", e))?;
    print!("{}", probe);
    match &probe.doeblin {
        Some(cert) => {
            println!("doeblin: certificate found (k = {}, c = {})", cert.k, cert.c);
            if probe.is_clean() {
                Ok(0)
            } else {
                Ok(1)
            }
        }
        None => {
            println!("doeblin: no certificate up to k = {}", 2 * w.size());
            Ok(1)
        }
    }
}

fn parse_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            // A single non-numeric leading line is tolerated as a header.
            Err(e) if lineno == 0 => {
                let _ = e;
            }
            Err(e) => bail!("{} line {}: {}", path.display(), lineno + 1, e),
        }
    }
    if rows.is_empty() {
        bail!("{} holds no numeric rows", path.display());
    }
    Ok(rows)
}

/// `stationary`: invariant distribution, Doeblin certificate, and mixing
/// curve — of the config's wrapped limit kernel at `X0`, or of a raw
/// row-stochastic matrix given with `--matrix`.
pub fn cmd_stationary(
    ctx: &Ctx,
    n_max: Option<usize>,
    dump_kernel: bool,
    matrix: Option<PathBuf>,
) -> Result<i32> {
    let mut mw = ctx.manifest("stationary");
    let n_max = n_max.unwrap_or(ctx.config.run.mixing_steps);

    let (kernel, mu0, wrapped) = match &matrix {
        Some(path) => {
            let rows = parse_numeric_csv(path)?;
            let m = RowMatrix::from_rows(rows).map_err(|e| anyhow::anyhow!("{}", e))?;
            let uniform = qfluid::Distribution::uniform(m.n());
            (m, uniform, None)
        }
        None => {
            let w = ctx.wrapped()?;
            let x0 = w.stack().initial_params();
            let kernel = w
                .transition_matrix(&x0, Scale::Limit)
                .map_err(|e| anyhow::anyhow!("{}", e))?;
            let mu0 = w
                .initial_distribution(&x0)
                .map_err(|e| anyhow::anyhow!("{}", e))?;
            (kernel, mu0, Some(w))
        }
    };

    let mu = stationary_distribution(&kernel, 1e-12).map_err(|e| anyhow::anyhow!("{}", e))?;
    let residual = qfluid::stationary::residual_l1(&kernel, mu.as_slice());
    let cert = find_doeblin(&kernel, 2 * kernel.n()).map_err(|e| anyhow::anyhow!("{}", e))?;
    let curve = mixing_curve(&kernel, &mu0, n_max).map_err(|e| anyhow::anyhow!("{}", e))?;
    let gap = qfluid::stationary::estimate_decay_rate(&curve).map(|rate| 1.0 - rate);

    let mut stationary_csv = String::new();
    match &wrapped {
        Some(w) => {
            stationary_csv.push_str("index,s_c,a,s_n,probability\n");
            for g in 0..w.size() {
                let (s_c, a, s_n) = w.decode(g);
                stationary_csv.push_str(&format!("{},{},{},{},{}\n", g, s_c, a, s_n, mu.get(g)));
            }
        }
        None => {
            stationary_csv.push_str("index,probability\n");
            for i in 0..mu.len() {
                stationary_csv.push_str(&format!("{},{}\n", i, mu.get(i)));
            }
        }
    }
    mw.write_output("stationary.csv", stationary_csv.as_bytes())?;

    let mut mixing_csv = String::from("n,tv,bound\n");
    for (n, tv) in curve.iter().enumerate() {
        let bound = cert.as_ref().map_or(1.0, |c| c.mixing_bound(n));
        mixing_csv.push_str(&format!("{},{},{}\n", n, tv, bound));
    }
    mw.write_output("mixing.csv", mixing_csv.as_bytes())?;

    if dump_kernel {
        if let Some(w) = &wrapped {
            let mut buf = Vec::new();
            w.write_kernel_csv(&kernel, &mut buf)?;
            mw.write_output("kernel.csv", &buf)?;
        } else {
            println!("note: --dump-kernel ignored in --matrix mode");
        }
    }

    let summary = json!({
        "mode": if matrix.is_some() { "matrix" } else { "wrapped" },
        "size": kernel.n(),
        "residual_l1": residual,
        "doeblin": cert.as_ref().map(|c| json!({"k": c.k, "c": c.c})),
        "spectral_gap_estimate": gap,
        "mixing_steps": n_max,
    });
    mw.write_output(
        "stationary_summary.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    mw.finish()?;

    match &cert {
        Some(c) => println!("stationary: residual {residual:e}, doeblin k={} c={}", c.k, c.c),
        None => println!("stationary: residual {residual:e}, no doeblin certificate"),
    }
    Ok(0)
}

/// `ode`: integrate the fluid limit from `X0`.
pub fn cmd_ode(ctx: &Ctx, method: Option<String>, steps: Option<usize>) -> Result<i32> {
    let mut mw = ctx.manifest("ode");
    let w = ctx.wrapped()?;
    let x0 = w.stack().initial_params();
    let method = match method {
        Some(m) => match m.as_str() {
            "euler" => OdeMethod::Euler,
            "rk4" => OdeMethod::Rk4,
            other => bail!("--method must be euler or rk4, got {:?}", other),
        },
        None => ctx.config.ode_method()?,
    };
    let steps = steps
        .or(if ctx.config.run.ode_steps > 0 {
            Some(ctx.config.run.ode_steps)
        } else {
            None
        })
        .unwrap_or(1000);

    let started = Instant::now();
    let mut field = DriftField::new(&w, Scale::Limit).with_warm_start(true);
    let traj = integrate(
        &mut field,
        &x0,
        ctx.config.run.horizon,
        steps,
        method,
    )
    .map_err(|e| anyhow::anyhow!("{}", e))?;
    let wall = started.elapsed().as_secs_f64();

    if let Some(node) = traj.ball_exceeded_at {
        println!(
            "warning: trajectory left the parameter ball at node {} (of {})",
            node, steps
        );
    }

    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    mw.write_output("ode_trajectory.csv", &buf)?;

    let summary = json!({
        "method": traj.method.name(),
        "steps": steps,
        "horizon": ctx.config.run.horizon,
        "terminal": traj.terminal(),
        "ball_exceeded_at": traj.ball_exceeded_at,
        "wall_time_s": wall,
    });
    mw.write_output(
        "ode_summary.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    mw.finish()?;
    println!(
        "ode: {} steps of {} over horizon {} ({:.3}s)",
        steps,
        traj.method.name(),
        ctx.config.run.horizon,
        wall
    );
    Ok(0)
}

/// `simulate`: one trajectory per configured scale.
pub fn cmd_simulate(ctx: &Ctx) -> Result<i32> {
    let mut mw = ctx.manifest("simulate");
    let w = ctx.wrapped()?;
    let x0 = w.stack().initial_params();
    for &scale in &ctx.config.run.scales {
        let rec = sample_trajectory(
            &w,
            &x0,
            scale,
            ctx.config.run.horizon,
            ctx.seed,
            ctx.config.stride_for(scale),
        )
        .map_err(|e| anyhow::anyhow!("{}", e))?;
        let mut buf = Vec::new();
        rec.write_csv(&w, &mut buf)?;
        mw.write_output(&format!("trajectory_N{}.csv", scale), &buf)?;

        let meta = json!({
            "scale": rec.scale,
            "horizon": rec.horizon,
            "seed": rec.seed,
            "steps": rec.steps,
            "snapshot_stride": rec.snapshot_stride,
            "rng_algorithm": rec.rng_algorithm,
            "rng_draws": rec.rng_draws,
            "cumulative_rewards": rec.cumulative_rewards,
            "config_sha256": ctx.config_sha256,
        });
        mw.write_output(
            &format!("trajectory_N{}_meta.json", scale),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
        println!(
            "simulate: N = {} -> {} steps, {} snapshots",
            scale,
            rec.steps,
            rec.snapshots.len()
        );
    }
    mw.finish()?;
    Ok(0)
}

/// `couple`: live and frozen chains on a shared uniform stream, per scale.
pub fn cmd_couple(ctx: &Ctx) -> Result<i32> {
    let mut mw = ctx.manifest("couple");
    let w = ctx.wrapped()?;
    let x0 = w.stack().initial_params();
    let mut entries = Vec::new();
    for &scale in &ctx.config.run.scales {
        let rec = sample_coupled(&w, &x0, scale, ctx.config.run.horizon, ctx.seed)
            .map_err(|e| anyhow::anyhow!("{}", e))?;
        let mut buf = Vec::new();
        rec.write_csv(&mut buf)?;
        mw.write_output(&format!("coupled_N{}.csv", scale), &buf)?;
        entries.push(json!({
            "scale": scale,
            "steps": rec.steps,
            "first_disagreement": rec.first_disagreement,
            "disagreements": rec.disagreement_count(),
        }));
        println!(
            "couple: N = {} -> {} steps, first disagreement {:?}",
            scale, rec.steps, rec.first_disagreement
        );
    }
    mw.write_output(
        "couple_summary.json",
        serde_json::to_string_pretty(&json!({ "runs": entries }))?.as_bytes(),
    )?;
    mw.finish()?;
    Ok(0)
}

/// `compare`: Monte Carlo sup-error against the shared ODE reference, per
/// scale, plus the combined rate table. Threshold failures flip the exit
/// code after all outputs (manifest included) are written.
pub fn cmd_compare(ctx: &Ctx) -> Result<i32> {
    let mut mw = ctx.manifest("compare");
    let w = ctx.wrapped()?;
    let x0 = w.stack().initial_params();
    let reps = ctx.config.run.reps;
    let horizon = ctx.config.run.horizon;

    let mut reports = Vec::new();
    for &scale in &ctx.config.run.scales {
        let report = mc_sup_error(&w, &x0, scale, horizon, reps, ctx.seed)
            .map_err(|e| anyhow::anyhow!("{}", e))?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        mw.write_output(&format!("compare_N{}.csv", scale), &buf)?;
        println!(
            "compare: N = {} -> mean sup-error {} (se {}, {} reps)",
            scale, report.mean, report.std_error, reps
        );
        reports.push(report);
    }

    let mut rate_csv = String::from("scale,mean_error,std_error\n");
    for r in &reports {
        rate_csv.push_str(&format!("{},{},{}\n", r.scale, r.mean, r.std_error));
    }
    mw.write_output("rate.csv", rate_csv.as_bytes())?;

    let points: Vec<(f64, f64)> = reports.iter().map(|r| (r.scale as f64, r.mean)).collect();
    let fit = rate_fit(&points).ok();
    if let Some(f) = &fit {
        println!("compare: fitted rate slope {}", f.slope);
    }

    let mut failures = Vec::new();
    if let Some(thresholds) = &ctx.config.acceptance {
        if thresholds.monotone {
            for pair in reports.windows(2) {
                if !(pair[1].mean < pair[0].mean) {
                    failures.push(format!(
                        "mean error not strictly decreasing: {} (N={}) -> {} (N={})",
                        pair[0].mean, pair[0].scale, pair[1].mean, pair[1].scale
                    ));
                }
            }
        }
        if let Some(factor) = thresholds.improvement_factor {
            let first = reports.first().unwrap();
            let last = reports.last().unwrap();
            if !(first.mean >= factor * last.mean) {
                failures.push(format!(
                    "improvement factor {} not reached: {} (N={}) vs {} (N={})",
                    factor, first.mean, first.scale, last.mean, last.scale
                ));
            }
        }
        if let Some(cap) = thresholds.max_final_error {
            let last = reports.last().unwrap();
            if !(last.mean <= cap) {
                failures.push(format!(
                    "final mean error {} exceeds cap {}",
                    last.mean, cap
                ));
            }
        }
    }

    let summary = json!({
        "horizon": horizon,
        "reps": reps,
        "base_seed": ctx.seed,
        "per_scale": reports.iter().map(|r| json!({
            "scale": r.scale,
            "mean_error": r.mean,
            "std_error": r.std_error,
            "ode_steps": r.ode_steps,
        })).collect::<Vec<_>>(),
        "rate_fit": fit.as_ref().map(|f| json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "residual_rms": f.residual_rms,
        })),
        "threshold_failures": failures,
    });
    mw.write_output(
        "compare_summary.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    mw.finish()?;

    if failures.is_empty() {
        Ok(0)
    } else {
        for f in &failures {
            println!("threshold failure: {}", f);
        }
        Ok(1)
    }
}

/// `rate`: fit a log-log slope to `(scale, error)` rows from a CSV
/// (defaults to the `rate.csv` a previous `compare` wrote).
pub fn cmd_rate(ctx: &Ctx, input: Option<PathBuf>) -> Result<i32> {
    let mut mw = ctx.manifest("rate");
    let path = input.unwrap_or_else(|| ctx.out_dir.join("rate.csv"));
    let rows = parse_numeric_csv(&path)?;
    let mut points = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() < 2 {
            bail!("{} row {}: need at least two columns", path.display(), i + 1);
        }
        points.push((row[0], row[1]));
    }
    let fit = rate_fit(&points).map_err(|e| anyhow::anyhow!("{}", e))?;
    println!(
        "rate: slope {} intercept {} residual {} ({} points, {} excluded)",
        fit.slope,
        fit.intercept,
        fit.residual_rms,
        fit.points.len(),
        fit.excluded
    );
    let summary = json!({
        "input": path.display().to_string(),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "residual_rms": fit.residual_rms,
        "points": fit.points,
        "excluded": fit.excluded,
    });
    mw.write_output(
        "rate_fit.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    mw.finish()?;
    Ok(0)
}
