use clap::{Args, ValueEnum};
use ergodic_core::control::{ControlSignal, Interp};
use ergodic_core::floquet::{
    epsilon_sweep, first_directional, first_directional_fd, lambda_f, second_directional,
    second_directional_fd,
};
use ergodic_core::hjb::{
    extract_eigenvector, optimal_trajectory, run_discounted, run_time_dependent,
    verify_particular_solution, GridField, HjbConfig, SimplexGrid,
};
use ergodic_core::perron::{
    classify_monotonicity, d2lambda_p, lambda_p, optimize_perron, perron_curve,
};
use ergodic_core::simplex::{
    attractiveness_probe, build_ergodic_set, connect, from_chart, h_checks, integrate,
    monotonicity_probe, phi_cubic, stability_check, trace_phi0, BoundaryCurve, IntegrateOptions,
    RandomBangSampler, TrajectoryRecord,
};
use ergodic_core::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{Sink, Table};
use crate::CliError;

fn prepare(cfg: &ExperimentConfig) -> Result<(ModelParams, Sink), CliError> {
    cfg.validate()?;
    let params = cfg.params()?;
    let sink = Sink::new(&cfg.outputs.dir, cfg.outputs.format)?;
    Ok((params, sink))
}

fn trajectory_table(rec: &TrajectoryRecord) -> Table {
    let mut t = Table::new(&["t", "y1", "y2", "y3", "alpha", "phi"]);
    for k in 0..rec.times.len() {
        let y = rec.points[k];
        t.push(vec![
            rec.times[k],
            y[0],
            y[1],
            y[2],
            rec.controls[k],
            rec.phi[k],
        ]);
    }
    t
}

#[derive(Debug, Args)]
pub struct PerronArgs {
    /// Largest sampled control value.
    #[arg(long, default_value_t = 20.0)]
    alpha_max: f64,
    /// Number of equally spaced samples on [0, alpha_max].
    #[arg(long, default_value_t = 401)]
    points: usize,
}

pub fn perron(cfg: &ExperimentConfig, args: &PerronArgs) -> Result<(), CliError> {
    let (params, sink) = prepare(cfg)?;
    if !(args.alpha_max > 0.0) || args.points < 2 {
        return Err(CliError::Config(
            "--alpha-max must be positive and --points at least 2".into(),
        ));
    }
    let alphas: Vec<f64> = (0..args.points)
        .map(|k| args.alpha_max * k as f64 / (args.points - 1) as f64)
        .collect();
    let curve = perron_curve(&params, &alphas)?;
    let mut t = Table::new(&["alpha", "lambda", "dlambda"]);
    for k in 0..alphas.len() {
        t.push(vec![curve.alphas[k], curve.values[k], curve.derivs[k]]);
    }
    let file = sink.table("perron_curve", &t)?;
    let opt = curve.optimum;
    sink.json(
        "perron.json",
        &json!({
            "optimum": opt,
            "boundary": !opt.is_interior(),
            "monotonicity": cfg.rates().map(|r| classify_monotonicity(r.tau1, r.tau2)),
            "tau1": cfg.rates().map(|r| r.tau1),
            "lambda_at_alpha_max": curve.values.last(),
            "curve": file,
            "config": cfg,
        }),
    )
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GammaKind {
    Sine,
    Cosine,
    Square,
    Constant,
    /// Piecewise-constant values given with --samples.
    Samples,
}

#[derive(Debug, Args)]
pub struct FloquetArgs {
    /// Shape of the periodic direction gamma.
    #[arg(long, value_enum, default_value = "square")]
    control: GammaKind,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    #[arg(long, value_delimiter = ',')]
    samples: Vec<f64>,
    /// Base control value (defaults to the Perron maximizer).
    #[arg(long)]
    alpha: Option<f64>,
    /// Step of the finite-difference cross-checks.
    #[arg(long, default_value_t = 1e-2)]
    fd_eps: f64,
    /// Amplitudes of the sweep alpha + eps gamma.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5])]
    epsilons: Vec<f64>,
}

pub fn floquet(cfg: &ExperimentConfig, args: &FloquetArgs) -> Result<(), CliError> {
    let (params, sink) = prepare(cfg)?;
    let gamma = match args.control {
        GammaKind::Sine => ControlSignal::sine(args.period, 64)?,
        GammaKind::Cosine => ControlSignal::cosine(args.period, 64)?,
        GammaKind::Square => ControlSignal::square(args.period)?,
        GammaKind::Constant => ControlSignal::constant(1.0),
        GammaKind::Samples => {
            ControlSignal::periodic(args.period, args.samples.clone(), Interp::PiecewiseConstant)?
        }
    };
    let alpha = match args.alpha {
        Some(a) => a,
        None => optimize_perron(&params)?.alpha(),
    };
    let lp = lambda_p(&params, alpha)?;
    let base = lambda_f(&params, &ControlSignal::constant(alpha))?;
    let second = second_directional(&params, alpha, &gamma)?;
    let second_fd = second_directional_fd(&params, alpha, &gamma, args.fd_eps)?;
    let sweep = epsilon_sweep(&params, alpha, &gamma, &args.epsilons)?;
    let mut t = Table::new(&["epsilon", "lambda_f"]);
    for &(e, l) in &sweep {
        t.push(vec![e, l]);
    }
    let file = sink.table("floquet_sweep", &t)?;
    sink.json(
        "floquet.json",
        &json!({
            "alpha": alpha,
            "gamma": gamma,
            "lambda_p": lp,
            "lambda_f_constant": base.lambda_f,
            "reduction_gap": (base.lambda_f - lp).abs(),
            "first_directional": first_directional(&params, alpha, &gamma)?,
            "first_directional_fd": first_directional_fd(&params, alpha, &gamma, args.fd_eps)?,
            "second_directional": second,
            "second_directional_fd": second_fd,
            "second_relative_gap": (second - second_fd).abs() / second_fd.abs(),
            "d2lambda_p": d2lambda_p(&params, alpha)?,
            "fd_eps": args.fd_eps,
            "sweep": file,
            "config": cfg,
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// The configured model unchanged.
    Running,
    GIrreducible,
    FIrreducible,
    BothIrreducible,
}

/// Couples the configured matrices by `eta` while keeping `G` Metzler and
/// `m^T F = 0`.
fn variant_params(
    params: &ModelParams,
    variant: Variant,
    eta: f64,
) -> Result<ModelParams, CliError> {
    if variant == Variant::Running {
        return Ok(params.clone());
    }
    let mut g = *params.g();
    let mut f = *params.f();
    if matches!(variant, Variant::GIrreducible | Variant::BothIrreducible) {
        g[(0, 2)] += eta;
        g[(2, 2)] -= eta;
    }
    if matches!(variant, Variant::FIrreducible | Variant::BothIrreducible) {
        let m = params.m();
        f[(1, 0)] += eta;
        f[(0, 0)] -= eta * m[1] / m[0];
        f[(2, 1)] += eta;
        f[(1, 1)] -= eta * m[2] / m[1];
    }
    Ok(ModelParams::new(
        g,
        f,
        *params.m(),
        params.lower(),
        params.upper(),
    )?)
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Offset of the shrunk and enlarged ergodic sets (overrides the config).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value = "running")]
    variant: Variant,
    /// Coupling strength of the irreducible variants.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Random-control trajectories of the attractiveness probe (0 skips it).
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Random pairs in the shrunk set steered onto each other.
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    #[arg(long, default_value_t = 400)]
    phi0_points: usize,
}

fn curve_table(curve: &BoundaryCurve) -> Table {
    let mut t = Table::new(&["t", "y1", "y2", "y3"]);
    for (s, y) in curve.times.iter().zip(&curve.points) {
        t.push(vec![*s, y[0], y[1], y[2]]);
    }
    t
}

/// Constant-control trajectories from points spread over the boundary of
/// the simplex.
fn local_charts(params: &ModelParams, alpha: f64) -> Result<Table, CliError> {
    let m = params.m();
    let corners = [0, 1, 2].map(|i| {
        let mut e = nalgebra::Vector3::zeros();
        e[i] = 1.0 / m[i];
        e
    });
    let mut t = Table::new(&["traj", "t", "y1", "y2", "y3"]);
    let opts = IntegrateOptions {
        record_every: 20,
        ..IntegrateOptions::default()
    };
    let mut k = 0;
    for e in 0..3 {
        let (p, q) = (corners[e], corners[(e + 1) % 3]);
        for s in 1..8 {
            let y0 = p + (q - p) * (s as f64 / 8.0);
            let rec = integrate(params, &y0, &alpha, 20.0, opts)?;
            for (tt, y) in rec.times.iter().zip(&rec.points) {
                t.push(vec![k as f64, *tt, y[0], y[1], y[2]]);
            }
            k += 1;
        }
    }
    Ok(t)
}

pub fn geometry(cfg: &mut ExperimentConfig, args: &GeometryArgs) -> Result<(), CliError> {
    if let Some(d) = args.delta {
        cfg.numerics.delta = d;
    }
    let (base, sink) = prepare(cfg)?;
    let params = variant_params(&base, args.variant, args.eta)?;
    let delta = cfg.numerics.delta;
    let seed = cfg.numerics.seed;

    let curve = trace_phi0(&params, 1e4, args.phi0_points)?;
    let mut t = Table::new(&["alpha", "y1", "y2", "y3", "phi"]);
    for (a, y) in &curve {
        t.push(vec![*a, y[0], y[1], y[2], phi_cubic(&params, y)]);
    }
    sink.table("phi0", &t)?;
    let hyp = h_checks(&params, 0.1)?;

    let mut summary = json!({
        "variant": args.variant,
        "eta": if args.variant == Variant::Running { None } else { Some(args.eta) },
        "delta": delta,
        "hypotheses": hyp,
        "hypotheses_passed": hyp.all_passed(),
        "config": cfg,
    });
    if !hyp.all_passed() {
        summary["ergodic_set"] = json!("skipped: hypotheses do not hold");
        return sink.json("geometry.json", &summary);
    }

    let set = build_ergodic_set(&params, delta)?;
    let mut endpoint_errors = Vec::new();
    for (name, region) in [
        ("z0", &set.z0),
        ("zminus", &set.z_minus),
        ("zplus2", &set.z_plus2),
    ] {
        for (side, c) in [("lower", &region.lower), ("upper", &region.upper)] {
            sink.table(&format!("{name}_{side}"), &curve_table(c))?;
            endpoint_errors.push(c.endpoint_error);
        }
    }
    let stability = stability_check(&params, &set.z0, 500, 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut connect_table = Table::new(&["pair", "t", "y1", "y2", "y3", "alpha"]);
    let mut landings = Vec::new();
    for k in 0..args.pairs {
        let z = set.z_minus.sample(&params, &mut rng);
        let target = set.z_minus.sample(&params, &mut rng);
        let plan = connect(&params, &set.z0, &z, &target)?;
        if let Some(signal) = plan.signal() {
            let rec = integrate(
                &params,
                &z,
                &signal,
                plan.total_time,
                IntegrateOptions::default(),
            )?;
            for i in (0..rec.times.len()).step_by(10) {
                let y = rec.points[i];
                connect_table.push(vec![
                    k as f64,
                    rec.times[i],
                    y[0],
                    y[1],
                    y[2],
                    rec.controls[i],
                ]);
            }
        }
        landings.push(json!({ "phases": plan.phases, "landing_error": plan.landing_error }));
    }
    sink.table("connect", &connect_table)?;

    let (a, big_a) = (params.lower(), params.upper());
    sink.table("local_charts_upper", &local_charts(&params, big_a + delta)?)?;
    sink.table("local_charts_lower", &local_charts(&params, a - delta)?)?;

    let mut attract = Table::new(&["traj", "t", "y1", "y2", "y3", "alpha"]);
    for k in 0..8u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(1000 + k);
        // Sorted uniforms split unit mass uniformly over the three compartments.
        let (u, v) = (r.gen::<f64>(), r.gen::<f64>());
        let m = params.m();
        let y0 = from_chart(&params, [u.min(v) / m[0], (u.max(v) - u.min(v)) / m[1]]);
        let values = (0..8).map(|_| r.gen_range(a..=big_a)).collect();
        let signal = ControlSignal::periodic(2.0, values, Interp::PiecewiseConstant)?;
        let opts = IntegrateOptions {
            record_every: 20,
            ..IntegrateOptions::default()
        };
        let rec = integrate(&params, &y0, &signal, 30.0, opts)?;
        for i in 0..rec.times.len() {
            let y = rec.points[i];
            attract.push(vec![
                k as f64,
                rec.times[i],
                y[0],
                y[1],
                y[2],
                rec.controls[i],
            ]);
        }
    }
    sink.table("attractiveness", &attract)?;

    let probe = if args.trials > 0 && delta > 0.0 {
        let sampler = RandomBangSampler::for_model(&params);
        Some(attractiveness_probe(
            &params,
            delta,
            args.trials,
            &sampler,
            seed,
        )?)
    } else {
        None
    };

    summary["endpoint_errors"] = json!(endpoint_errors);
    summary["stability"] = json!(stability);
    summary["connect"] = json!(landings);
    summary["probe"] = json!(probe);
    sink.json("geometry.json", &summary)
}

#[derive(Debug, Args)]
pub struct HjbArgs {
    /// Discount rates for stationary solves, e.g. 0.1,0.05,0.01.
    #[arg(long, value_delimiter = ',')]
    discounted: Vec<f64>,
    /// Check the explicit solution log<phi_A, y> instead of the main run.
    #[arg(long)]
    particular_solution: bool,
    /// Fail with a CFL error instead of splitting non-monotone time steps.
    #[arg(long)]
    strict_cfl: bool,
    /// Floquet value to compare against in the summary.
    #[arg(long)]
    lambda_f: Option<f64>,
    /// Horizon of the closed-loop trajectory (0 skips it).
    #[arg(long, default_value_t = 10.0)]
    trajectory_horizon: f64,
}

fn field_table(grid: &SimplexGrid, field: &GridField, scale: f64) -> Table {
    let mut t = Table::new(&["i", "j", "y1", "y2", "y3", "u"]);
    for n in 0..grid.len() {
        let [i, j] = grid.coords(n);
        let y = grid.point(n);
        t.push(vec![
            i as f64,
            j as f64,
            y[0],
            y[1],
            y[2],
            scale * field.values[n],
        ]);
    }
    t
}

pub fn hjb(cfg: &mut ExperimentConfig, args: &HjbArgs) -> Result<(), CliError> {
    if args.strict_cfl {
        cfg.numerics.allow_substeps = false;
    }
    let (params, sink) = prepare(cfg)?;
    let n = &cfg.numerics;
    let hcfg = HjbConfig {
        dy: n.dy,
        dt: n.dt,
        horizon: n.horizon,
        probe: n.probe,
        allow_substeps: n.allow_substeps,
        ..HjbConfig::default()
    };
    if args.particular_solution {
        let report = verify_particular_solution(&params, &hcfg)?;
        return sink.json(
            "particular.json",
            &json!({ "report": report, "passed": report.passed(), "config": cfg }),
        );
    }
    let opt = optimize_perron(&params)?;
    let grid = SimplexGrid::new(&params, n.dy)?;
    let run = run_time_dependent(&params, &hcfg)?;
    let sidecar = |name: &str, time: f64| {
        json!({
            "file": name, "dy": run.dy, "dt": run.dt, "time": time,
            "lambda_ratio": run.lambda_ratio, "lambda_slope": run.lambda_slope,
        })
    };
    let name = sink.table("u_T", &field_table(&grid, &run.field, 1.0))?;
    sink.json("u_T.meta.json", &sidecar(&name, run.horizon))?;
    for snap in &run.snapshots {
        let time = snap.time.unwrap_or(0.0);
        let name = sink.table(&format!("u_t{time}"), &field_table(&grid, snap, 1.0))?;
        sink.json(&format!("u_t{time}.meta.json"), &sidecar(&name, time))?;
    }
    let mut hist = Table::new(&["t", "u", "ratio"]);
    for &(t, u) in &run.history {
        hist.push(vec![t, u, if t > 0.0 { u / t } else { f64::NAN }]);
    }
    sink.table("history", &hist)?;

    let eig = extract_eigenvector(&params, &run)?;
    sink.table("ubar", &field_table(&grid, &eig.field, 1.0))?;
    let mut grad = Table::new(&["i", "j", "du1", "du2"]);
    for k in 0..grid.len() {
        let [i, j] = grid.coords(k);
        let g = eig.field.gradient(&grid, k);
        grad.push(vec![i as f64, j as f64, g[0], g[1]]);
    }
    sink.table("ubar_gradient", &grad)?;
    let mut sep = Table::new(&["segment", "y1", "y2"]);
    for (k, [p, q]) in eig.separation.iter().enumerate() {
        sep.push(vec![k as f64, p[0], p[1]]);
        sep.push(vec![k as f64, q[0], q[1]]);
    }
    sink.table("separation", &sep)?;

    let e_star = params.spectrum(opt.alpha())?.dominant.right;
    let mut trajectory = serde_json::Value::Null;
    if args.trajectory_horizon > 0.0 {
        let corner = from_chart(&params, [0.0, 1.0 / params.m()[1]]);
        let tr = optimal_trajectory(&params, &eig, &corner, args.trajectory_horizon, n.dt)?;
        sink.table("trajectory", &trajectory_table(&tr.record))?;
        let mut ma = Table::new(&["t", "alpha_avg"]);
        for (k, v) in tr.moving_average.iter().enumerate() {
            ma.push(vec![tr.record.times[k + tr.window], *v]);
        }
        sink.table("moving_average", &ma)?;
        trajectory = json!({
            "start": [corner[0], corner[1], corner[2]],
            "terminal_distance": tr.terminal_distance(&e_star),
            "tail_control": tr.tail_control,
            "average_reward": tr.average_reward,
            "switches": tr.switches,
            "window": tr.window,
        });
    }

    let mut discounted = Vec::new();
    for &eps in &args.discounted {
        let d = run_discounted(&params, n.dy, eps)?;
        let name = sink.table(
            &format!("discounted_eps{eps}"),
            &field_table(&grid, &d.field, eps),
        )?;
        discounted.push(json!({
            "file": name, "run": d, "spread": d.spread(),
            "within_reward_bound": d.within_reward_bound(),
        }));
    }

    sink.json(
        "hjb.json",
        &json!({
            "run": run,
            "probe_spread": run.probe_spread(),
            "lambda_p_star": opt.lambda(),
            "alpha_star": opt.alpha(),
            "lambda_f": args.lambda_f,
            "gap_ratio": run.lambda_ratio - opt.lambda(),
            "gap_slope": run.lambda_slope - opt.lambda(),
            "eigenvector": eig,
            "separation_distance_to_e_star": eig.distance_to_separation([e_star[0], e_star[1]]),
            "trajectory": trajectory,
            "discounted": discounted,
            "config": cfg,
        }),
    )
}

#[derive(Debug, Args)]
pub struct HypothesesArgs {
    /// Spread of the constant controls used for H5.
    #[arg(long, default_value_t = 0.1)]
    delta0: f64,
    /// Random trajectories of the monotonicity probe.
    #[arg(long, default_value_t = 20)]
    trajectories: usize,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
}

pub fn hypotheses(cfg: &ExperimentConfig, args: &HypothesesArgs) -> Result<(), CliError> {
    let (params, sink) = prepare(cfg)?;
    let report = h_checks(&params, args.delta0)?;
    let mut grid = Table::new(&["alpha", "criterion"]);
    for &(a, v) in &report.h4.grid {
        grid.push(vec![a, v]);
    }
    sink.table("h4_criterion", &grid)?;
    let mut checks = Table::new(&["alpha", "formula", "finite_difference"]);
    for &(a, f, d) in &report.h4.checks {
        checks.push(vec![a, f, d]);
    }
    sink.table("h4_checks", &checks)?;
    let mono = monotonicity_probe(
        &params,
        cfg.numerics.delta,
        args.trajectories,
        args.horizon,
        cfg.numerics.seed,
    );
    sink.json(
        "hypotheses.json",
        &json!({
            "report": report,
            "all_passed": report.all_passed(),
            "monotonicity": mono,
            "config": cfg,
        }),
    )
}
