//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::Context;
use evcharge::fluid::{default_step, integrate_with, lyapunov_series, IntegrationOptions};
use evcharge::model::{cost_cs, QueueState};
use evcharge::sim::{simulate, summarize, SimConfig};
use evcharge::social::{poa_sweep, solve_social_optimum};
use evcharge::spatial::{raster, Raster, SpatialInstance};
use evcharge::{solve_equilibrium, EquilibriumSolution, Exec, SolverConfig};

use crate::config::{ConfigError, RunConfig};
use crate::output::{g9, Table};
use crate::{Cli, Command, FluidArgs, MuSource, RegionArgs, StochasticArgs, SweepArgs};

struct Context_ {
    cfg: RunConfig,
    sp: SpatialInstance,
    exec: Exec,
    out: PathBuf,
}

impl Context_ {
    fn load(cli: &Cli, path: &Path) -> anyhow::Result<Self> {
        let cfg = RunConfig::load(path)?;
        let sp = cfg.instance()?;
        std::fs::create_dir_all(&cli.out_dir)
            .with_context(|| format!("cannot create {}", cli.out_dir.display()))?;
        let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
        Ok(Context_ {
            cfg,
            sp,
            exec,
            out: cli.out_dir.clone(),
        })
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            exec: self.exec,
            ..self.cfg.solver()
        }
    }

    fn equilibrium(&self) -> anyhow::Result<EquilibriumSolution> {
        solve_equilibrium(&self.sp.instance, &self.solver()).context("equilibrium solve failed")
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::SolveEq(a) => solve_eq(&Context_::load(cli, &a.config)?),
        Command::SimulateFluid(a) => simulate_fluid(&Context_::load(cli, &a.config)?, a),
        Command::SocialOpt(a) => social_opt(&Context_::load(cli, &a.config)?),
        Command::PoaSweep(a) => sweep(&Context_::load(cli, &a.config)?, a),
        Command::SolveElastic(a) => solve_elastic(&Context_::load(cli, &a.config)?),
        Command::SimulateStochastic(a) => stochastic(&Context_::load(cli, &a.config)?, a),
        Command::Regions(a) => regions(&Context_::load(cli, &a.config)?, a),
    }
}

fn station_label(j: usize) -> String {
    (j + 1).to_string()
}

fn write_equilibrium(ctx: &Context_, sol: &EquilibriumSolution) -> anyhow::Result<()> {
    let mut t = Table::create(&ctx.out, "equilibrium.csv", &["station", "mu_star_min", "q_star_ev", "inflow_rate_ev_per_min"])?;
    for (j, f) in sol.inflow().iter().enumerate() {
        t.row(&[station_label(j), g9(sol.mu[j]), g9(sol.queues[j]), g9(*f)])?;
    }
    t.finish()?;
    let mut c = Table::create(
        &ctx.out,
        "certificate.csv",
        &["dual_value_ev", "duality_gap_ev", "kkt_residual", "projected_gradient_ev_per_min", "iterations"],
    )?;
    c.row(&[
        g9(sol.dual_value),
        g9(sol.duality_gap),
        g9(sol.kkt_residual),
        g9(sol.projected_gradient),
        sol.iterations.to_string(),
    ])?;
    c.finish()?;
    Ok(())
}

fn solve_eq(ctx: &Context_) -> anyhow::Result<()> {
    let sol = ctx.equilibrium()?;
    write_equilibrium(ctx, &sol)
}

fn solve_elastic(ctx: &Context_) -> anyhow::Result<()> {
    if !ctx.cfg.is_elastic() {
        return Err(usage("solve-elastic needs demand of type \"elastic_uniform\""));
    }
    let sol = ctx.equilibrium()?;
    write_equilibrium(ctx, &sol)?;
    let inst = &ctx.sp.instance;
    let mut t = Table::create(
        &ctx.out,
        "elastic_sites.csv",
        &["site", "x_coord", "y_coord", "rbar_ev_per_min", "r_star_ev_per_min", "tau_star_min"],
    )?;
    for (i, (&id, p)) in inst.site_ids().iter().zip(&ctx.sp.site_positions).enumerate() {
        t.row(&[
            (id + 1).to_string(),
            g9(p[0]),
            g9(p[1]),
            g9(inst.nominal_rates()[i]),
            g9(sol.rates[i]),
            g9(sol.delays[i]),
        ])?;
    }
    t.finish()?;
    Ok(())
}

fn initial_state(ctx: &Context_, spec: &str) -> anyhow::Result<QueueState> {
    let n = ctx.sp.instance.n_stations();
    match spec {
        "zeros" => Ok(QueueState(vec![0.0; n])),
        "equilibrium" => Ok(ctx.equilibrium()?.queues),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read q0 file {path}: {e}")))?;
            let q: Vec<f64> = serde_json::from_str(&text).map_err(|e| usage(format!("q0 file {path}: {e}")))?;
            if q.len() != n {
                return Err(usage(format!("q0 file {path} has {} entries for {n} stations", q.len())));
            }
            Ok(QueueState(q))
        }
    }
}

fn simulate_fluid(ctx: &Context_, a: &FluidArgs) -> anyhow::Result<()> {
    let inst = &ctx.sp.instance;
    let ode = ctx.cfg.ode.clone().unwrap_or_default();
    let horizon = a.horizon.or(ode.horizon_min).unwrap_or(40.0 * inst.sojourn());
    let step = a.step.or(ode.step_min).unwrap_or_else(|| default_step(inst));
    let stride = a.stride.or(ode.stride).unwrap_or(1);
    let q0 = initial_state(ctx, &a.q0)?;
    let opts = IntegrationOptions { stride, exec: ctx.exec };
    let traj = integrate_with(&q0, horizon, step, inst, opts).context("fluid integration failed")?;

    let n = inst.n_stations();
    let mut header = vec!["t_min".to_string()];
    header.extend((1..=n).map(|j| format!("q_{j}_ev")));
    header.extend((1..=n).map(|j| format!("mu_{j}_min")));
    header.push("dual_value_ev".into());
    let mut t = Table::create(&ctx.out, "trajectory.csv", &header)?;
    for k in 0..traj.len() {
        let mut row = vec![g9(traj.times[k])];
        row.extend(traj.states[k].iter().map(|&v| g9(v)));
        row.extend(traj.multipliers[k].iter().map(|&v| g9(v)));
        row.push(g9(traj.dual_values[k]));
        t.row(&row)?;
    }
    t.finish()?;

    let rep = lyapunov_series(&traj, inst);
    let mut m = Table::create(
        &ctx.out,
        "monotonicity.csv",
        &["pass", "largest_decrease_ev", "worst_t_min", "tolerance_ev", "samples"],
    )?;
    m.row(&[
        rep.pass.to_string(),
        g9(-rep.largest_decrease),
        rep.worst_index.map(|k| g9(traj.times[k])).unwrap_or_default(),
        g9(rep.tolerance),
        traj.len().to_string(),
    ])?;
    m.finish()?;
    Ok(())
}

fn social_opt(ctx: &Context_) -> anyhow::Result<()> {
    let inst = &ctx.sp.instance;
    if ctx.cfg.is_elastic() {
        return Err(usage("social-opt needs inelastic demand"));
    }
    let opt = solve_social_optimum(inst).context("social optimum failed")?;
    let n = inst.n_stations();
    let mut t = Table::create(&ctx.out, "social.csv", &["site", "station", "x_ev_per_min"])?;
    for (i, &id) in inst.site_ids().iter().enumerate() {
        for j in 0..n {
            let x = opt.routing.0.get(i, j);
            if x > 0.0 {
                t.row(&[(id + 1).to_string(), station_label(j), g9(x)])?;
            }
        }
    }
    t.finish()?;
    let inflow = opt.routing.station_inflow();
    let mut s = Table::create(&ctx.out, "social_stations.csv", &["station", "q_ev", "inflow_rate_ev_per_min"])?;
    for j in 0..n {
        s.row(&[station_label(j), g9(opt.queues[j]), g9(inflow[j])])?;
    }
    s.finish()?;
    let mut c = Table::create(&ctx.out, "social_cost.csv", &["cs_opt_ev"])?;
    c.row(&[g9(cost_cs(&opt.routing, &opt.queues, inst))])?;
    c.finish()?;
    Ok(())
}

fn sweep(ctx: &Context_, a: &SweepArgs) -> anyhow::Result<()> {
    if ctx.cfg.is_elastic() {
        return Err(usage("poa-sweep needs inelastic demand"));
    }
    if a.r_steps == 0 || !(a.r_from > 0.0) || !(a.r_to >= a.r_from) {
        return Err(usage("need 0 < r-from <= r-to and r-steps >= 1"));
    }
    let rs: Vec<f64> = if a.r_steps == 1 {
        vec![a.r_from]
    } else {
        (0..a.r_steps)
            .map(|k| a.r_from + (a.r_to - a.r_from) * k as f64 / (a.r_steps - 1) as f64)
            .collect()
    };
    let rows = poa_sweep(&ctx.sp.instance, &rs, &ctx.solver(), ctx.exec).context("sweep failed")?;
    let mut t = Table::create(
        &ctx.out,
        "poa.csv",
        &["r_ev_per_min", "c0_selfish_ev", "cs_selfish_ev", "cs_opt_ev", "gap_ev"],
    )?;
    for row in rows {
        t.row(&[g9(row.r), g9(row.c0_selfish), g9(row.cs_selfish), g9(row.cs_opt), g9(row.gap)])?;
    }
    t.finish()?;
    Ok(())
}

fn stochastic(ctx: &Context_, a: &StochasticArgs) -> anyhow::Result<()> {
    let inst = &ctx.sp.instance;
    if ctx.cfg.is_elastic() {
        return Err(usage("simulate-stochastic needs inelastic demand"));
    }
    let spec = ctx.cfg.sim.clone().unwrap_or_default();
    let t = inst.sojourn();
    let horizon = a.horizon.or(spec.horizon_min).unwrap_or(100.0 * t);
    let cfg = SimConfig {
        seed: a.seed.or(spec.seed).unwrap_or(0),
        horizon,
        warmup: a.warmup.or(spec.warmup_min).unwrap_or(10.0 * t),
        rate: inst.total_rate(),
        sample_stride: a.stride.or(spec.stride_min).unwrap_or(t),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let log = simulate(inst, &cfg).context("simulation failed")?;
    let eq = if a.with_equilibrium { Some(ctx.equilibrium()?) } else { None };
    let summary = summarize(&log, inst, eq.as_ref()).context("summary failed")?;

    let mut e = Table::create(&ctx.out, "events.csv", &["t_min", "kind", "ev", "site", "station"])?;
    for ev in &log.events {
        e.row(&[
            g9(ev.time),
            ev.kind.as_str().to_string(),
            ev.ev.to_string(),
            (inst.site_ids()[ev.site] + 1).to_string(),
            station_label(ev.station),
        ])?;
    }
    e.finish()?;

    let n = inst.n_stations();
    let mut header = vec!["t_min".to_string(), "arrivals".into(), "departures".into()];
    header.extend((1..=n).map(|j| format!("q_{j}_ev")));
    let mut o = Table::create(&ctx.out, "occupancy.csv", &header)?;
    for s in &log.snapshots {
        let mut row = vec![g9(s.time), s.arrivals.to_string(), s.departures.to_string()];
        row.extend(s.occupancy.iter().map(|q| q.to_string()));
        o.row(&row)?;
    }
    o.finish()?;

    let mut s = Table::create(
        &ctx.out,
        "summary.csv",
        &[
            "scope",
            "mean_q_ev",
            "variance_q_ev2",
            "mu_bar_min",
            "fluid_q_star_ev",
            "fluid_relative_error",
            "effective_rate_ev_per_min",
            "little_residual",
        ],
    )?;
    for j in 0..n {
        let (q_star, rel) = match (&eq, &summary.fluid_relative_error) {
            (Some(eq), Some(rel)) => (g9(eq.queues[j]), g9(rel[j])),
            _ => (String::new(), String::new()),
        };
        s.row(&[
            station_label(j),
            g9(summary.mean_occupancy[j]),
            String::new(),
            g9(summary.mean_delay[j]),
            q_star,
            rel,
            String::new(),
            String::new(),
        ])?;
    }
    s.row(&[
        "total".to_string(),
        g9(summary.total_mean),
        g9(summary.total_variance),
        String::new(),
        eq.as_ref().map(|e| g9(e.queues.iter().sum())).unwrap_or_default(),
        String::new(),
        g9(summary.effective_rate),
        g9(summary.little_residual),
    ])?;
    s.finish()?;
    Ok(())
}

fn write_raster(ctx: &Context_, name: &str, r: &Raster) -> anyhow::Result<()> {
    let region = ctx.sp.region.expect("checked by caller");
    let mut t = Table::create(&ctx.out, name, &["x_index", "y_index", "x_coord", "y_coord", "station_index"])?;
    for (i, &id) in ctx.sp.instance.site_ids().iter().enumerate() {
        let (ix, iy) = region.cell_of(id);
        let p = ctx.sp.site_positions[i];
        t.row(&[ix.to_string(), iy.to_string(), g9(p[0]), g9(p[1]), station_label(r.assignment[i])])?;
    }
    t.finish()?;
    Ok(())
}

fn regions(ctx: &Context_, a: &RegionArgs) -> anyhow::Result<()> {
    if ctx.sp.region.is_none() {
        return Err(usage("regions needs a \"region\" grid"));
    }
    let n = ctx.sp.instance.n_stations();
    let mu = match a.mu {
        MuSource::Zero => vec![0.0; n],
        MuSource::FromEquilibrium => ctx.equilibrium()?.mu.0,
    };
    write_raster(ctx, "voronoi.csv", &raster(&ctx.sp, &vec![0.0; n], ctx.exec))?;
    write_raster(ctx, "attraction.csv", &raster(&ctx.sp, &mu, ctx.exec))?;
    Ok(())
}
