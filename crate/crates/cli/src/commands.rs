use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asymopt::calibration::{
    calibrate, calibrate_estimates, reference_tables, CalibrationOptions, CalibrationReport,
    DiscreteEstimates, DriftMap, TimeSeriesData, UnitConventions,
};
use asymopt::criterion::{optimize, sweep_gamma, sweep_theta, OptimizerConfig, SweepResult};
use asymopt::linalg::{Matrix, Vector};
use asymopt::mc::{simulate, write_path_dump, FactorScheme, InitialState, SimConfig};
use asymopt::moments::MomentEngine;
use asymopt::{reference_model, CriterionParams, FactorModel, Strategy};
use serde_json::{json, Value};

use crate::args::{
    CalibrateArgs, Cli, Command, DriftMapArg, MomentsArgs, MonteCarloArgs, OptimizeArgs,
    OptimizerArgs, SchemeArg, SimulateArgs, StrategyArgs, SweepArgs, SweepMode,
};
use crate::manifest::{hash_file, sha256_hex, strip_out, FileHash, Manifest, MANIFEST_FILE};
use crate::svg::{line_chart, Series};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Input(msg) | Failure::Numeric(msg) => f.write_str(msg),
        }
    }
}

impl From<asymopt::Error> for Failure {
    fn from(err: asymopt::Error) -> Self {
        if err.is_input_error() {
            Failure::Input(err.to_string())
        } else {
            Failure::Numeric(err.to_string())
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn input_io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |err| Failure::Input(format!("{}: {err}", path.display()))
}

/// Collects written files and input hashes for the manifest.
struct Run {
    out: PathBuf,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &[u8]) -> Outcome {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|err| Failure::Input(format!("{}: {err}", path.display())))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Outcome {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Failure::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn record_input(&mut self, path: &Path) -> Outcome {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: hash_file(path).map_err(input_io(path))?,
        });
        Ok(())
    }
}

/// Runs a parsed command line. `raw_args` excludes the program name.
pub fn run(cli: Cli, raw_args: &[String]) -> Outcome {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        // Only the first configuration of the global pool takes effect.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if let Command::Replay(args) = &cli.command {
        return replay(&args.manifest, &cli.out);
    }
    std::fs::create_dir_all(&cli.out).map_err(input_io(&cli.out))?;
    let mut run = Run {
        out: cli.out.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let (name, config, flagged) = execute(&cli, &mut run)?;
    let manifest = Manifest {
        tool: "asymopt".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        args: strip_out(raw_args),
        seed: cli.seed,
        config,
        inputs: run.inputs.clone(),
        outputs: run.outputs.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Numeric(e.to_string()))?;
    text.push('\n');
    let path = cli.out.join(MANIFEST_FILE);
    std::fs::write(&path, text)
        .map_err(|err| Failure::Input(format!("{}: {err}", path.display())))?;
    if flagged > 0 {
        let msg = format!("{flagged} result(s) flagged");
        if cli.strict {
            return Err(Failure::Numeric(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

/// Returns the command name, resolved configuration and count of flagged
/// results.
fn execute(cli: &Cli, run: &mut Run) -> Outcome<(&'static str, Value, usize)> {
    match &cli.command {
        Command::Calibrate(args) => calibrate_cmd(args, run).map(|c| ("calibrate", c, 0)),
        Command::Moments(args) => {
            let model = load_model(cli, run)?;
            moments_cmd(&model, args, cli.seed, run).map(|c| ("moments", c, 0))
        }
        Command::Sweep(args) => {
            let model = load_model(cli, run)?;
            sweep_cmd(&model, args, cli.seed, run).map(|(c, f)| ("sweep", c, f))
        }
        Command::Simulate(args) => {
            let model = load_model(cli, run)?;
            simulate_cmd(&model, args, cli.seed, run).map(|c| ("simulate", c, 0))
        }
        Command::Optimize(args) => {
            let model = load_model(cli, run)?;
            optimize_cmd(&model, args, cli.seed, run).map(|(c, f)| ("optimize", c, f))
        }
        Command::Replay(_) => unreachable!("handled before execution"),
    }
}

fn load_model(cli: &Cli, run: &mut Run) -> Outcome<FactorModel> {
    match &cli.model {
        Some(path) => {
            run.record_input(path)?;
            Ok(FactorModel::read_json(path)?)
        }
        None => Ok(reference_model()),
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn strategy_from(model: &FactorModel, args: &StrategyArgs) -> Outcome<Strategy> {
    let (m, n) = (model.asset_count(), model.factor_count());
    let h = args.h.clone().unwrap_or_else(|| vec![1.0; m]);
    let tilt = args.tilt.clone().unwrap_or_else(|| vec![0.0; m * n]);
    if h.len() != m || tilt.len() != m * n {
        return Err(Failure::Usage(format!(
            "model has {m} asset(s) and {n} factor(s): --h needs {m} value(s), --tilt needs {}",
            m * n
        )));
    }
    Ok(Strategy::new(
        Vector::from_vec(h),
        Matrix::from_row_slice(m, n, &tilt),
    )?)
}

fn vector_arg(values: &Option<Vec<f64>>, len: usize, default: f64, flag: &str) -> Outcome<Vector> {
    match values {
        Some(v) if v.len() != len => Err(Failure::Usage(format!(
            "{flag} needs {len} value(s), got {}",
            v.len()
        ))),
        Some(v) => Ok(Vector::from_vec(v.clone())),
        None => Ok(Vector::from_element(len, default)),
    }
}

fn sim_config(args: &MonteCarloArgs, seed: u64) -> SimConfig {
    SimConfig {
        dt: args.dt,
        horizon: args.horizon,
        paths: args.paths,
        seed,
        scheme: match args.scheme {
            SchemeArg::Exact => FactorScheme::Exact,
            SchemeArg::Euler => FactorScheme::Euler,
        },
        antithetic: args.antithetic,
        initial: if args.zero_start {
            InitialState::Zero
        } else {
            InitialState::Stationary
        },
        keep_paths: false,
    }
}

fn optimizer_config(args: &OptimizerArgs, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        grid_bounds: [-args.grid_bound, args.grid_bound],
        grid_points: args.grid_points,
        local_restarts: args.restarts,
        seed,
        ..OptimizerConfig::default()
    }
}

fn calibrate_cmd(args: &CalibrateArgs, run: &mut Run) -> Outcome<Value> {
    let mut options = CalibrationOptions {
        units: UnitConventions {
            returns_in_percent: args.returns_percent,
            factor_scale: args.factor_scale,
        },
        drift_map: match args.drift_map {
            DriftMapArg::Euler => DriftMap::Euler,
            DriftMapArg::Log => DriftMap::Log,
        },
        min_mean_reversion: args.min_mean_reversion,
    };
    let report: CalibrationReport = match (&args.data, &args.from_tables) {
        (Some(path), _) => {
            run.record_input(path)?;
            let data = TimeSeriesData::read_csv_path(path)?;
            calibrate(&data, &options)?
        }
        (None, Some(source)) if source == "reference" => {
            options.units = UnitConventions::tables();
            calibrate_estimates(reference_tables(), &options)?
        }
        (None, Some(source)) => {
            let path = Path::new(source);
            run.record_input(path)?;
            let text = std::fs::read_to_string(path).map_err(input_io(path))?;
            let estimates: DiscreteEstimates = serde_json::from_str(&text)
                .map_err(|e| Failure::Input(format!("{source}: {e}")))?;
            calibrate_estimates(estimates, &options)?
        }
        (None, None) => {
            return Err(Failure::Usage(
                "one of --data or --from-tables is required".into(),
            ))
        }
    };
    let model = report.model()?;
    let mut model_json = model.to_json()?;
    model_json.push('\n');
    run.write("model.json", model_json.as_bytes())?;
    run.write_json("report.json", &report)?;
    println!("a      = {:?}", list(model.drift()));
    println!("A      = {:?}", rows(model.drift_loading()));
    println!("B      = {:?}", rows(model.mean_reversion()));
    println!("Sigma  = {:?}", rows(model.asset_diffusion()));
    println!("Lambda = {:?}", rows(model.factor_diffusion()));
    Ok(json!({ "options": options }))
}

fn moments_cmd(
    model: &FactorModel,
    args: &MomentsArgs,
    seed: u64,
    run: &mut Run,
) -> Outcome<Value> {
    let strategy = strategy_from(model, &args.strategy)?;
    let out = MomentEngine::new(model)?.moments(&strategy)?;
    let mut doc = json!({
        "h": list(strategy.base()),
        "H": rows(strategy.tilt()),
        "K": out.growth_rate,
        "varRate": out.variance_rate,
        "P": list(&out.covariance_limit),
        "Delta": rows(&out.delta),
        "Y": list(&out.y),
        "S": rows(&out.s),
        "R": rows(&out.r),
    });
    println!("K       {}", out.growth_rate);
    println!("varRate {}", out.variance_rate);
    println!("P       {:?}", list(&out.covariance_limit));
    println!("Delta   {:?}", rows(&out.delta));
    println!("Y       {:?}", list(&out.y));
    println!("S       {:?}", rows(&out.s));
    let config = sim_config(&args.monte_carlo, seed);
    if args.check {
        let stats = simulate(model, &strategy, &config)?;
        let z = stats.z_scores(&out);
        println!(
            "z-scores: K {} varRate {} P {:?}",
            z.growth_rate, z.variance_rate, z.covariance_limit
        );
        doc["check"] = json!({
            "growth_rate": stats.growth_rate(),
            "variance_rate": stats.variance_rate(),
            "covariance_limit": stats.cov_ux,
            "z_scores": z,
        });
    }
    run.write_json("moments.json", &doc)?;
    Ok(json!({ "check": args.check, "simulation": args.check.then_some(config) }))
}

fn sweep_values(args: &SweepArgs) -> Outcome<Vec<f64>> {
    let (from, to, points) = match args.mode {
        SweepMode::Tilt => (-3.0, 3.0, 121),
        SweepMode::Theta => (0.01, 100.0, 33),
        SweepMode::Gamma => (0.0, 0.01, 11),
    };
    let from = args.from.unwrap_or(from);
    let to = args.to.unwrap_or(to);
    let points = args.points.unwrap_or(points);
    if points < 2 || !(from.is_finite() && to.is_finite()) || from >= to {
        return Err(Failure::Usage(format!(
            "invalid range: need finite --from < --to and --points ≥ 2, got {from}, {to}, {points}"
        )));
    }
    let at = |i: usize| i as f64 / (points - 1) as f64;
    Ok(match args.mode {
        SweepMode::Theta => {
            if from <= 0.0 {
                return Err(Failure::Usage(
                    "θ range must be positive (values are log-spaced)".into(),
                ));
            }
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        to
                    } else {
                        from * (to / from).powf(at(i))
                    }
                })
                .collect()
        }
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    to
                } else {
                    from + (to - from) * at(i)
                }
            })
            .collect(),
    })
}

fn csv_line(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

fn sweep_cmd(
    model: &FactorModel,
    args: &SweepArgs,
    seed: u64,
    run: &mut Run,
) -> Outcome<(Value, usize)> {
    let values = sweep_values(args)?;
    let (m, n) = (model.asset_count(), model.factor_count());
    let mut csv = String::new();
    let mut flagged = 0;
    let series: Vec<(&str, Vec<(f64, f64)>)>;
    let optimizer = optimizer_config(&args.optimizer, seed);
    let config;

    match args.mode {
        SweepMode::Tilt => {
            if (m, n) != (1, 1) {
                return Err(Failure::Usage(
                    "mode H needs a model with one asset and one factor".into(),
                ));
            }
            let engine = MomentEngine::new(model)?;
            csv.push_str("H,K,P,varRate\n");
            let mut k = Vec::new();
            let mut p = Vec::new();
            let mut v = Vec::new();
            for &big_h in &values {
                let out = engine.moments(&Strategy::scalar(args.h, big_h))?;
                csv.push_str(&csv_line(&[
                    big_h.to_string(),
                    out.growth_rate.to_string(),
                    out.covariance_limit[0].to_string(),
                    out.variance_rate.to_string(),
                ]));
                k.push((big_h, out.growth_rate));
                p.push((big_h, out.covariance_limit[0]));
                v.push((big_h, out.variance_rate));
            }
            series = vec![("K", k), ("P", p), ("varRate", v)];
            config = json!({ "mode": "H", "h": args.h, "values": values });
        }
        SweepMode::Theta | SweepMode::Gamma => {
            let result: SweepResult;
            if args.mode == SweepMode::Theta {
                let gamma = vector_arg(&args.gamma, n, 0.0, "--gamma")?;
                result = sweep_theta(model, &values, &gamma, &optimizer);
                config = json!({ "mode": "theta", "gamma": list(&gamma), "values": values, "optimizer": optimizer });
            } else {
                let direction = vector_arg(&args.direction, n, 1.0, "--direction")?;
                result = sweep_gamma(model, args.theta, &values, &direction, &optimizer);
                config = json!({
                    "mode": "gamma", "theta": args.theta, "direction": list(&direction),
                    "values": values, "optimizer": optimizer,
                });
            }
            let scalar = (m, n) == (1, 1);
            let mut header = vec!["parameter".to_string()];
            if scalar {
                header.extend(["h".to_string(), "H".to_string()]);
            } else {
                header.extend((1..=m).map(|i| format!("h_{i}")));
                header.extend((1..=m).flat_map(|i| (1..=n).map(move |j| format!("H_{i}_{j}"))));
            }
            header.extend(["W".to_string(), "ratio".to_string(), "status".to_string()]);
            csv.push_str(&csv_line(&header));
            let mut h_series = Vec::new();
            let mut tilt_series = Vec::new();
            let mut w_series = Vec::new();
            for point in &result.points {
                let mut row = vec![point.parameter.to_string()];
                match &point.optimum {
                    Some(opt) => {
                        row.extend(opt.coordinates().iter().map(f64::to_string));
                        row.push(opt.value().to_string());
                        row.push(opt.ratio().to_string());
                        let status = if opt.diagnostics.stationary {
                            "ok"
                        } else {
                            flagged += 1;
                            eprintln!(
                                "warning: optimum at {} fails the first-order check (gradient norm {})",
                                point.parameter, opt.diagnostics.gradient_norm
                            );
                            "not_stationary"
                        };
                        row.push(status.to_string());
                        h_series.push((point.parameter, opt.base[0]));
                        tilt_series.push((point.parameter, opt.tilt[0][0]));
                        w_series.push((point.parameter, opt.value()));
                    }
                    None => {
                        flagged += 1;
                        let message = point.error.clone().unwrap_or_default();
                        eprintln!(
                            "warning: optimization at {} failed: {message}",
                            point.parameter
                        );
                        row.extend(std::iter::repeat_n(String::new(), m + m * n + 2));
                        row.push(format!("\"error: {}\"", message.replace('"', "'")));
                    }
                }
                csv.push_str(&csv_line(&row));
            }
            series = vec![("h*", h_series), ("H*", tilt_series), ("W*", w_series)];
        }
    }

    run.write("sweep.csv", csv.as_bytes())?;
    if args.svg {
        let x_label = match args.mode {
            SweepMode::Tilt => "H",
            SweepMode::Theta => "theta",
            SweepMode::Gamma => "Gamma",
        };
        let panels: Vec<Series> = series
            .into_iter()
            .map(|(name, points)| Series { name, points })
            .collect();
        run.write("sweep.svg", line_chart(x_label, &panels).as_bytes())?;
    }
    Ok((config, flagged))
}

fn simulate_cmd(
    model: &FactorModel,
    args: &SimulateArgs,
    seed: u64,
    run: &mut Run,
) -> Outcome<Value> {
    let strategy = strategy_from(model, &args.strategy)?;
    let mut config = sim_config(&args.monte_carlo, seed);
    config.keep_paths = args.dump_paths;
    let stats = simulate(model, &strategy, &config)?;
    let closed = MomentEngine::new(model)?.moments(&strategy)?;
    let z = stats.z_scores(&closed);
    println!(
        "K {} ± {} (closed form {}, z {})",
        stats.growth_rate().value,
        stats.growth_rate().stderr,
        closed.growth_rate,
        z.growth_rate
    );
    println!(
        "varRate {} ± {} (closed form {}, z {})",
        stats.variance_rate().value,
        stats.variance_rate().stderr,
        closed.variance_rate,
        z.variance_rate
    );
    println!("P z-scores {:?}", z.covariance_limit);
    let doc = json!({
        "h": list(strategy.base()),
        "H": rows(strategy.tilt()),
        "estimates": {
            "growth_rate": stats.growth_rate(),
            "variance_rate": stats.variance_rate(),
            "covariance_limit": stats.cov_ux,
        },
        "closed_form": {
            "growth_rate": closed.growth_rate,
            "variance_rate": closed.variance_rate,
            "covariance_limit": list(&closed.covariance_limit),
        },
        "z_scores": z,
        "terminal": { "mean_u": stats.mean_u, "var_u": stats.var_u },
    });
    run.write_json("simulate.json", &doc)?;
    if args.dump_paths {
        let mut buf = Vec::new();
        write_path_dump(&stats, &mut buf)?;
        run.write("paths.csv", &buf)?;
    }
    Ok(json!({ "simulation": config }))
}

fn optimize_cmd(
    model: &FactorModel,
    args: &OptimizeArgs,
    seed: u64,
    run: &mut Run,
) -> Outcome<(Value, usize)> {
    let gamma = vector_arg(&args.gamma, model.factor_count(), 0.0, "--gamma")?;
    let params = CriterionParams::new(args.theta, gamma.clone())?;
    let config = optimizer_config(&args.optimizer, seed);
    let opt = optimize(model, &params, &config)?;
    println!("h* = {:?}", opt.base);
    println!("H* = {:?}", opt.tilt);
    println!("W* = {}", opt.value());
    let flagged = usize::from(!opt.diagnostics.stationary);
    if flagged > 0 {
        eprintln!(
            "warning: optimum fails the first-order check (gradient norm {})",
            opt.diagnostics.gradient_norm
        );
    }
    run.write_json("optimum.json", &opt)?;
    Ok((
        json!({ "theta": args.theta, "gamma": list(&gamma), "optimizer": config }),
        flagged,
    ))
}

fn replay(manifest_path: &Path, out: &Path) -> Outcome {
    let text = std::fs::read_to_string(manifest_path).map_err(input_io(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", manifest_path.display())))?;
    for input in &manifest.inputs {
        let path = Path::new(&input.path);
        let current = hash_file(path).map_err(input_io(path))?;
        if current != input.sha256 {
            return Err(Failure::Input(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }
    let mut argv = vec!["asymopt".to_string()];
    argv.extend(manifest.args.iter().cloned());
    argv.extend(["--out".to_string(), out.display().to_string()]);
    let cli = crate::parse(&argv)
        .map_err(|_| Failure::Input("manifest arguments do not parse".into()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::Input("a manifest cannot replay a replay".into()));
    }
    run(cli, &argv[1..])?;

    let replayed_text = std::fs::read_to_string(out.join(MANIFEST_FILE)).map_err(input_io(out))?;
    let mut mismatches = 0;
    for recorded in &manifest.outputs {
        let path = out.join(&recorded.path);
        let same = hash_file(&path).is_ok_and(|h| h == recorded.sha256);
        println!(
            "{} {}",
            if same { "identical" } else { "DIFFERS  " },
            recorded.path
        );
        mismatches += usize::from(!same);
    }
    let manifest_same = replayed_text == text;
    println!(
        "{} {MANIFEST_FILE}",
        if manifest_same {
            "identical"
        } else {
            "DIFFERS  "
        }
    );
    mismatches += usize::from(!manifest_same);
    if mismatches > 0 {
        return Err(Failure::Numeric(format!(
            "{mismatches} output(s) differ from the manifest"
        )));
    }
    Ok(())
}
