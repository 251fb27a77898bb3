use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use fkl_cli::config::ExperimentConfig;
use fkl_cli::pipeline::{
    build_from_pools, build_gaussian, dataset_coeffs, shuffle_pool, Backend, BuiltPair, NoiseSpec, PairSetup, SDE_INIT_MEAN,
    SDE_INIT_VAR,
};
use fkl_cli::validate::{all_pass, render_table, run_validation, ValidateOptions};
use fkl_core::fkl::{sweep, sweep_with, FklConfig, FklEstimate, SweepAxis, SweepRow};
use fkl_core::io::{
    import_trajectory_csv, read_snapshot_csv, read_trajectory_file, write_snapshot_csv, write_trajectory_file,
    TrajectoryManifest,
};
use fkl_core::metrics::{compute_metrics, rank_methods, MetricReport, MetricRow, MetricValues, PointCloud};
use fkl_core::oracles::{linear_sde_kl_closed_form, linear_sde_kl_quadrature, LinearSdeSpec};
use fkl_core::sde::{equispaced_times, euler_maruyama, extract_snapshots, SimConfig, Split, SplitRule, SystemSpec};
use fkl_core::spectral::Extension;
use fkl_core::velocity::{read_weights, write_weights, train_field};
use fkl_core::GaussianMeasure;
use serde_json::json;

#[derive(Parser)]
#[command(name = "fkl", version, about = "Functional KL divergence between path measures, with oracles, simulators and marginal metrics")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base seed (default: config, then FKL_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a built-in system and write an FKLT trajectory file.
    Simulate(SimulateArgs),
    /// Cut snapshot clouds out of a trajectory file.
    Snapshots(SnapshotArgs),
    /// Closed-form divergences.
    Oracle {
        #[command(subcommand)]
        case: OracleCase,
    },
    /// Estimate forward and reverse divergences.
    Fkl(FklArgs),
    /// Train the two-field network on a pair of trajectory files.
    FitVelocity(FitArgs),
    /// Marginal distances between snapshot files.
    Metrics(MetricsArgs),
    /// Average ranks of the methods in a metric table.
    Rank(RankArgs),
    /// Analytic-versus-estimated table; exit code 0 iff every checked row passes.
    Validate(ValidateArgs),
    /// Convert a CSV trajectory dump to FKLT.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Linear SDE only: drift coefficient.
    #[arg(long)]
    drift_coeff: Option<f64>,
    /// Linear SDE only: diffusion scale.
    #[arg(long)]
    diffusion: Option<f64>,
    /// Linear SDE only: state dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated rescaled times in [0, 1].
    #[arg(long, value_delimiter = ',', conflicts_with = "n_times")]
    times: Option<Vec<f64>>,
    /// Number of equispaced times including both ends.
    #[arg(long)]
    n_times: Option<usize>,
    /// odd-even, shared or explicit.
    #[arg(long, default_value = "odd-even")]
    rule: String,
    /// Positions of training times for the explicit rule.
    #[arg(long, value_delimiter = ',')]
    train: Vec<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCase {
    /// Linear SDEs `dY = c Y dt + g dW` differing in drift.
    LinearSde {
        #[arg(long, default_value_t = 0.01)]
        ca: f64,
        #[arg(long, default_value_t = 1.5)]
        cb: f64,
        #[arg(long, default_value_t = 0.75)]
        g: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = SDE_INIT_MEAN)]
        m0: f64,
        #[arg(long, default_value_t = SDE_INIT_VAR)]
        var0: f64,
        /// Also report Simpson quadrature with this many nodes.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Gaussian measures with a sine mean shift.
    Gaussian(GaussianArgs),
}

#[derive(Args, Clone, Default)]
struct GaussianArgs {
    #[arg(long)]
    mean_scale: Option<f64>,
    #[arg(long)]
    freq: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    gaussian_modes: Option<usize>,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Fourier modes kept per dimension.
    #[arg(long)]
    modes: Option<usize>,
    /// none or mirror.
    #[arg(long)]
    extension: Option<String>,
    /// matern, identity, empirical or roughened.
    #[arg(long)]
    noise: Option<String>,
    /// Use every path for both the fields and the estimator.
    #[arg(long)]
    no_split: bool,
    /// Training iterations for the trained backend.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct FklArgs {
    /// Trajectory file of measure A; without A and B the Gaussian case runs.
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    gaussian: GaussianArgs,
    /// Fresh samples per measure for non-analytic fields in the Gaussian case.
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    time_draws: Option<usize>,
    #[arg(long)]
    sum_modes: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Load a trained network instead of training.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// `axis=v1,v2,...` with axis one of modes, samples, time, t-max, seeds, noise.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sweep_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference snapshot CSV.
    #[arg(long)]
    reference: PathBuf,
    /// `name=path` of a candidate snapshot CSV; repeatable.
    #[arg(long = "candidate", required = true)]
    candidates: Vec<String>,
    /// `name=path` of an `fkl` result JSON attached to that method's row.
    #[arg(long = "fkl")]
    fkl: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Metric CSV written by `metrics`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    higher_is_better: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Skip the end-to-end SDE estimates.
    #[arg(long)]
    closed_form_only: bool,
    /// Training iterations for the SDE estimates.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// CSV with header `path,time,dim0,...`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cfg.resolve_seed(cli.seed)?;
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a)?,
        Command::Snapshots(a) => snapshots(&ctx, a)?,
        Command::Oracle { case } => oracle(&ctx, case)?,
        Command::Fkl(a) => fkl(&ctx, a)?,
        Command::FitVelocity(a) => fit_velocity(&ctx, a)?,
        Command::Metrics(a) => metrics(&ctx, a)?,
        Command::Rank(a) => rank(a)?,
        Command::Validate(a) => return validate(&ctx, a),
        Command::Convert(a) => convert(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn print_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(p) = out {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn parse_extension(s: &str) -> Result<Extension> {
    match s {
        "none" => Ok(Extension::None),
        "mirror" => Ok(Extension::Mirror),
        _ => bail!("unknown extension `{s}` (expected none or mirror)"),
    }
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let mut spec = match (&a.system, &ctx.cfg.system) {
        (Some(name), _) => SystemSpec::by_name(name).with_context(|| format!("unknown system `{name}`"))?,
        (None, Some(spec)) => *spec,
        (None, None) => bail!("no system given (use --system or a [system] config section)"),
    };
    if a.drift_coeff.is_some() || a.diffusion.is_some() || a.dim.is_some() {
        let SystemSpec::LinearSde { drift_coeff, diffusion, dim, .. } = &mut spec else {
            bail!("--drift-coeff, --diffusion and --dim apply to linear-sde only");
        };
        *drift_coeff = a.drift_coeff.unwrap_or(*drift_coeff);
        *diffusion = a.diffusion.unwrap_or(*diffusion);
        *dim = a.dim.unwrap_or(*dim);
    }
    let (h0, dt0) = spec.default_time();
    let sim = SimConfig {
        horizon: a.horizon.or(ctx.cfg.simulation.horizon).unwrap_or(h0),
        dt: a.dt.or(ctx.cfg.simulation.dt).unwrap_or(dt0),
        n_paths: a.paths.unwrap_or(ctx.cfg.simulation.n_paths),
        seed: ctx.seed,
    };
    let ds = euler_maruyama(&spec.build()?, &sim)?;
    let out = a.out.unwrap_or_else(|| ctx.cfg.output_dir().join(format!("{}.fklt", spec.name())));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_trajectory_file(&ds, &out)?;
    let manifest = TrajectoryManifest {
        shape: ds.shape(),
        dtype: "f64le".into(),
        layout: "path,time,dim".into(),
        physical_horizon: ds.grid().physical_horizon(),
        provenance: ds.provenance().clone(),
    };
    let manifest_path = out.with_extension("json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    print_json(&json!({ "path": out, "manifest": manifest_path, "shape": ds.shape() }), None)
}

fn snapshots(ctx: &Ctx, a: SnapshotArgs) -> Result<()> {
    let ds = read_trajectory_file(&a.input)?;
    let times = match (a.times, a.n_times) {
        (Some(t), _) => t,
        (None, Some(n)) => equispaced_times(n),
        (None, None) => bail!("give --times or --n-times"),
    };
    let rule = match a.rule.as_str() {
        "odd-even" => SplitRule::OddTrainEvenVal,
        "shared" => SplitRule::AllSharedResample,
        "explicit" => SplitRule::Explicit { train: a.train },
        other => bail!("unknown split rule `{other}` (expected odd-even, shared or explicit)"),
    };
    let set = extract_snapshots(&ds, &times, &rule)?;
    let dir = a.out_dir.unwrap_or_else(|| ctx.cfg.output_dir());
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for (split, name) in [(Split::Train, "train.csv"), (Split::Validation, "val.csv")] {
        if set.with_split(split).next().is_none() {
            continue;
        }
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write_snapshot_csv(set.with_split(split), &mut w)?;
        w.flush()?;
        written.push(path);
    }
    print_json(&json!({ "files": written, "times": times }), None)
}

fn oracle(ctx: &Ctx, case: OracleCase) -> Result<()> {
    match case {
        OracleCase::LinearSde { ca, cb, g, d, m0, var0, nodes } => {
            let base = LinearSdeSpec { drift_coeff: ca, diffusion: g, dim: d, init_mean: m0, init_var: var0 };
            // the closed form needs a nonzero drift under the expectation
            let kl = |c_expect: f64, c_other: f64| -> Result<f64> {
                let spec = base.with_drift(c_expect);
                Ok(if c_expect == 0.0 {
                    linear_sde_kl_quadrature(&spec, c_other, 10_001)?
                } else {
                    linear_sde_kl_closed_form(&spec, c_other)?
                })
            };
            let mut v = json!({ "kl_forward": kl(ca, cb)?, "kl_reverse": kl(cb, ca)? });
            if let Some(n) = nodes {
                v["quadrature_forward"] = json!(linear_sde_kl_quadrature(&base.with_drift(ca), cb, n)?);
                v["quadrature_reverse"] = json!(linear_sde_kl_quadrature(&base.with_drift(cb), ca, n)?);
            }
            print_json(&v, None)
        }
        OracleCase::Gaussian(args) => {
            let case = gaussian_case(ctx, &args);
            let kl = case.oracle()?;
            print_json(&json!({ "kl_forward": kl, "kl_reverse": kl, "case": case }), None)
        }
    }
}

fn gaussian_case(ctx: &Ctx, a: &GaussianArgs) -> fkl_cli::pipeline::GaussianCase {
    let mut case = ctx.cfg.gaussian;
    case.s = a.mean_scale.unwrap_or(case.s);
    case.f0 = a.freq.unwrap_or(case.f0);
    case.dims = a.dims.unwrap_or(case.dims);
    case.n_modes = a.gaussian_modes.unwrap_or(case.n_modes);
    case
}

fn pair_setup(ctx: &Ctx, f: &FieldArgs, n_modes: usize) -> Result<PairSetup> {
    let cfg = &ctx.cfg;
    let mut train = cfg.field.train.clone();
    train.iterations = f.iterations.unwrap_or(train.iterations);
    train.seed = ctx.seed;
    Ok(PairSetup {
        backend: f.backend.unwrap_or(cfg.field.backend),
        noise: match &f.noise {
            Some(name) => NoiseSpec::from_name(name)?,
            None => cfg.noise,
        },
        fkl: cfg.fkl.to_config(n_modes, ctx.seed),
        split: cfg.field.split && !f.no_split,
        train,
        network: None,
    })
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (axis, values) = spec.split_once('=').context("--sweep expects axis=v1,v2,...")?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    ensure!(!values.is_empty(), "--sweep needs at least one value");
    Ok((axis.trim().to_string(), values))
}

fn parse_all<T: std::str::FromStr>(values: &[String]) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    values.iter().map(|v| v.parse::<T>().with_context(|| format!("bad sweep value `{v}`"))).collect()
}

fn sweep_axis(axis: &str, values: &[String]) -> Result<SweepAxis> {
    Ok(match axis {
        "modes" => SweepAxis::SumModes(parse_all(values)?),
        "samples" => SweepAxis::FunctionSamples(parse_all(values)?),
        "time" => SweepAxis::TimeDraws(parse_all(values)?),
        "t-max" => SweepAxis::TMax(parse_all(values)?),
        "seeds" => SweepAxis::Seeds(parse_all(values)?),
        other => bail!("unknown sweep axis `{other}`"),
    })
}

fn write_sweep(rows: &[(String, SweepRow)], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "direction,axis,value,estimate,std_error,n_evals,n_sum_modes,seed")?;
    for (dir, r) in rows {
        let e = &r.estimate;
        writeln!(w, "{dir},{},{},{},{},{},{},{}", r.axis, r.value, e.value, e.std_error, e.n_evals, e.n_sum_modes, e.seed)?;
    }
    w.flush()?;
    Ok(())
}

fn fkl(ctx: &Ctx, a: FklArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let extension = match &a.field.extension {
        Some(s) => parse_extension(s)?,
        None => cfg.spectral.extension,
    };
    let sweep_spec = a.sweep.as_deref().map(parse_sweep).transpose()?;
    // a mode sweep needs at least as many stored modes as its largest value
    let sweep_modes = match &sweep_spec {
        Some((axis, values)) if axis == "modes" => parse_all::<usize>(values)?.into_iter().max(),
        _ => None,
    };
    let n_modes = a.field.modes.unwrap_or(cfg.spectral.n_modes.max(sweep_modes.unwrap_or(0)));
    let mut gaussian = a.a.is_none().then(|| gaussian_case(ctx, &a.gaussian));
    if let (Some(g), Some(m), None) = (gaussian.as_mut(), sweep_modes, a.gaussian.gaussian_modes) {
        g.n_modes = g.n_modes.max(m);
    }
    let data_modes = gaussian.map_or(n_modes, |g| g.n_modes);
    let mut setup = pair_setup(ctx, &a.field, data_modes)?;
    setup.fkl.n_function_samples = a.samples.unwrap_or(setup.fkl.n_function_samples);
    setup.fkl.n_time_per_function = a.time_draws.unwrap_or(setup.fkl.n_time_per_function);
    setup.fkl.n_sum_modes = a.sum_modes.unwrap_or(setup.fkl.n_sum_modes);
    if let Some(t) = a.t_max {
        setup.fkl.sampler = setup.fkl.sampler.with_t_max(t);
    }
    setup.fkl.validate()?;
    if let Some(p) = &a.weights {
        let net = read_weights(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?;
        setup.network = Some(Arc::new(net));
        setup.backend = Backend::Trained;
    }
    let pool_size = a.pool_size.unwrap_or(cfg.field.pool_size);

    let pools = match (&a.a, &a.b) {
        (Some(pa), Some(pb)) => {
            let (da, db) = (read_trajectory_file(pa)?, read_trajectory_file(pb)?);
            ensure!(da.dim() == db.dim(), "datasets differ in dimension: {} vs {}", da.dim(), db.dim());
            let (mut pa, mut pb) = (dataset_coeffs(&da, n_modes, extension)?, dataset_coeffs(&db, n_modes, extension)?);
            shuffle_pool(&mut pa, ctx.seed, "a");
            shuffle_pool(&mut pb, ctx.seed, "b");
            Some((pa, pb))
        }
        _ => None,
    };
    let build = |setup: &PairSetup| -> Result<BuiltPair<'_>> {
        match (&pools, &gaussian) {
            (Some((pa, pb)), _) => build_from_pools(pa, pb, setup),
            (None, Some(case)) => build_gaussian(case, pool_size, setup),
            _ => unreachable!("either files or the gaussian case"),
        }
    };

    let built = build(&setup)?;
    let (forward, reverse) = built.estimate(&setup.fkl)?;
    let mut result = json!({
        "backend": setup.backend,
        "noise": setup.noise.name(),
        "split": pools.is_some() && setup.split,
        "n_modes": data_modes,
        "forward": forward,
        "reverse": reverse,
        "training": built.training,
    });
    if let Some(case) = &gaussian {
        result["oracle"] = json!(case.oracle()?);
        result["case"] = json!(case);
    }

    if let Some((axis, values)) = sweep_spec {
        let mut rows: Vec<(String, SweepRow)> = Vec::new();
        if axis == "noise" {
            let noises = values.iter().map(|v| NoiseSpec::from_name(v)).collect::<Result<Vec<_>>>()?;
            let mut per_noise: Vec<(FklEstimate, FklEstimate)> = Vec::new();
            for noise in &noises {
                let s = PairSetup { noise: *noise, ..setup.clone() };
                per_noise.push(build(&s)?.estimate(&s.fkl)?);
            }
            let names: Vec<&str> = noises.iter().map(NoiseSpec::name).collect();
            let mut it = per_noise.iter();
            let fwd = sweep_with("noise", &names, |_| Ok(it.next().expect("one per noise").0.clone()))?;
            let mut it = per_noise.iter();
            let rev = sweep_with("noise", &names, |_| Ok(it.next().expect("one per noise").1.clone()))?;
            rows.extend(fwd.into_iter().map(|r| ("forward".to_string(), r)));
            rows.extend(rev.into_iter().map(|r| ("reverse".to_string(), r)));
        } else {
            let axis = sweep_axis(&axis, &values)?;
            let base: FklConfig = setup.fkl;
            let fwd = sweep(built.field_a.as_ref(), built.field_b.as_ref(), built.source_a.as_ref(), &built.noise, &base, &axis)?;
            let rev = sweep(built.field_b.as_ref(), built.field_a.as_ref(), built.source_b.as_ref(), &built.noise, &base, &axis)?;
            rows.extend(fwd.into_iter().map(|r| ("forward".to_string(), r)));
            rows.extend(rev.into_iter().map(|r| ("reverse".to_string(), r)));
        }
        let path = a.sweep_out.clone().unwrap_or_else(|| cfg.output_dir().join("sweep.csv"));
        write_sweep(&rows, &path)?;
        result["sweep_csv"] = json!(path);
    }
    print_json(&result, a.out.as_deref())
}

fn fit_velocity(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let extension = match &a.field.extension {
        Some(s) => parse_extension(s)?,
        None => cfg.spectral.extension,
    };
    let n_modes = a.field.modes.unwrap_or(cfg.spectral.n_modes);
    let setup = pair_setup(ctx, &a.field, n_modes)?;
    let (da, db) = (read_trajectory_file(&a.a)?, read_trajectory_file(&a.b)?);
    let (pa, pb) = (dataset_coeffs(&da, n_modes, extension)?, dataset_coeffs(&db, n_modes, extension)?);
    let noise = GaussianMeasure::centered(setup.noise.build(n_modes, da.dim(), &pa)?);
    let out = train_field(&pa, &pb, &noise, &setup.train)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    write_weights(out.field_a.network(), &mut w)?;
    w.flush()?;
    print_json(
        &json!({
            "weights": a.out,
            "iterations": setup.train.iterations,
            "initial_eval_loss": out.initial_eval_loss,
            "final_eval_loss": out.final_eval_loss,
            "final_train_loss": out.loss_history.last(),
        }),
        None,
    )
}

fn read_snapshots(path: &Path) -> Result<Vec<(f64, PointCloud)>> {
    read_snapshot_csv(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
        .with_context(|| format!("reading {}", path.display()))
}

fn named_path(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, path)) => Ok((name.to_string(), PathBuf::from(path))),
        None => {
            let p = PathBuf::from(s);
            let name = p.file_stem().context("candidate needs a name")?.to_string_lossy().into_owned();
            Ok((name, p))
        }
    }
}

fn metrics(ctx: &Ctx, a: MetricsArgs) -> Result<()> {
    let reference = read_snapshots(&a.reference)?;
    let times: Vec<f64> = reference.iter().map(|(t, _)| *t).collect();
    let mut settings = ctx.cfg.metrics;
    settings.seed = ctx.seed;
    let mut fkl_values = std::collections::HashMap::new();
    for spec in &a.fkl {
        let (name, path) = named_path(spec)?;
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let get = |dir: &str| v[dir]["value"].as_f64().with_context(|| format!("{} lacks {dir}.value", path.display()));
        fkl_values.insert(name, (get("forward")?, get("reverse")?));
    }
    let mut report = MetricReport::new(settings, times);
    for spec in &a.candidates {
        let (name, path) = named_path(spec)?;
        let cand = read_snapshots(&path)?;
        let values = reference
            .iter()
            .map(|(t, r)| {
                let (_, c) = cand
                    .iter()
                    .find(|(tc, _)| (tc - t).abs() < 1e-9)
                    .with_context(|| format!("{name} has no snapshot at time {t}"))?;
                compute_metrics(r, c, &settings).map_err(Into::into)
            })
            .collect::<Result<Vec<MetricValues>>>()?;
        let fkl = fkl_values.get(&name).copied();
        report.push(MetricRow { method: name, values, fkl })?;
    }
    match a.out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(&p)?);
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty metric table")?;
    let columns: Vec<&str> = header.split(',').skip(1).collect();
    let mut methods = Vec::new();
    let mut scores = Vec::new();
    for line in lines {
        let mut cells = line.split(',');
        methods.push(cells.next().unwrap_or_default().to_string());
        let row = cells.map(|c| c.trim().parse::<f64>().with_context(|| format!("bad score `{c}`"))).collect::<Result<Vec<_>>>()?;
        ensure!(row.len() == columns.len(), "row for {} has {} scores, header has {}", methods.last().unwrap(), row.len(), columns.len());
        scores.push(row);
    }
    // columns with a missing score for some method are dropped
    let keep: Vec<usize> = (0..columns.len()).filter(|&j| scores.iter().all(|r| r[j].is_finite())).collect();
    let table: Vec<Vec<f64>> = scores.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let summary = rank_methods(&table, !a.higher_is_better)?;
    let mut csv = String::from("method,avg_rank\n");
    for (m, r) in methods.iter().zip(&summary.avg_ranks) {
        csv.push_str(&format!("{m},{r}\n"));
    }
    match &a.out {
        Some(p) => std::fs::write(p, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!("friedman statistic {:.4} over {} columns", summary.friedman_statistic, keep.len());
    Ok(())
}

fn validate(ctx: &Ctx, a: ValidateArgs) -> Result<ExitCode> {
    let mut opts = ValidateOptions::new(ctx.seed);
    opts.estimate_sde = !a.closed_form_only;
    if let Some(n) = a.iterations {
        opts.sde.setup.train.iterations = n;
    }
    let rows = run_validation(&opts)?;
    print!("{}", render_table(&rows));
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&rows)? + "\n")?;
    }
    Ok(if all_pass(&rows) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn convert(a: ConvertArgs) -> Result<()> {
    let label = a.label.unwrap_or_else(|| a.input.file_stem().map_or("imported".into(), |s| s.to_string_lossy().into_owned()));
    let ds = import_trajectory_csv(BufReader::new(File::open(&a.input)?), &label)?;
    write_trajectory_file(&ds, &a.out)?;
    print_json(&json!({ "path": a.out, "shape": ds.shape() }), None)
}
