use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fomo::density::fit_kde;
use fomo::experiment::{
    draw_inputs, emit_plot_data, load_model, read_records, write_records, write_scatter, BatchOptions, Bench,
    FomoBatch, PlotBundle, Profile, ProblemKind, Sampling, ScatterRow,
};
use fomo::io::{write_atomic, write_string_atomic};
use fomo::metrics::{evaluate_surrogate, TestSuite};
use fomo::pool::{read_dataset_file, write_dataset_file, Sample};
use fomo::problems::{initial_condition, KlBasis, MmtSolver};
use fomo::{FomoError, InitStrategy, PdfDesign, Result};

#[derive(Parser)]
#[command(name = "fomo", version, about = "Sequential data selection for fixed datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample inputs, evaluate the map and write a dataset CSV.
    Generate(GenerateArgs),
    /// Integrate the wave model from one set of KL coefficients.
    Simulate(SimulateArgs),
    /// Random-sampling sweep over training set sizes.
    Sweep(SweepArgs),
    /// Batch of selection runs.
    Fomo(FomoArgs),
    /// Score a saved model against a test suite.
    Metrics(MetricsArgs),
    /// Fit a weighted output density to a dataset or a model.
    Pdf(PdfArgs),
    /// Turn saved result tables into band, trajectory and scatter files.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct ProfileArgs {
    /// Experiment profile (TOML).
    #[arg(long)]
    profile: PathBuf,
    /// Overrides the profile seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for cached test suites and datasets.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl ProfileArgs {
    fn load(&self) -> Result<Profile> {
        let mut profile = Profile::load(&self.profile)?;
        if let Some(seed) = self.seed {
            profile.seed = seed;
        }
        Ok(profile)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value = "lhs-distribution")]
    sampling: SamplingArg,
    #[arg(long)]
    out: PathBuf,
    /// Also write the profile's test suite into this directory.
    #[arg(long)]
    suite: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Comma-separated coefficients, real parts then imaginary parts per mode.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Vec<f64>,
    /// Write a snapshot every this many steps instead of only the final field.
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FomoArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    n_a: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    n_iter_max: Option<usize>,
    #[arg(long)]
    pdf_samples: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long, value_enum)]
    pdf_design: Option<PdfDesignArg>,
    /// Use this dataset CSV as the sample source instead of the profile's.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Also score a surrogate trained on each whole pool.
    #[arg(long)]
    full_reference: bool,
    /// Write every iteration's acquisition scores.
    #[arg(long)]
    dump_scores: bool,
    /// Save each run's final model under `out/models`.
    #[arg(long)]
    save_models: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Model directory written by `fomo --save-models`.
    #[arg(long)]
    model: PathBuf,
    /// Test suite directory written by `generate --suite`.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PdfArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Dataset whose outputs are weighted by `p_x` of their inputs.
    #[arg(long, conflicts_with = "model")]
    dataset: Option<PathBuf>,
    /// Model whose mean is evaluated on the suite design.
    #[arg(long, requires = "suite")]
    model: Option<PathBuf>,
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Directory written by `sweep` or `fomo`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SamplingArg {
    Uniform,
    Lhs,
    LhsDistribution,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Uniform => Sampling::Uniform,
            SamplingArg::Lhs => Sampling::Lhs,
            SamplingArg::LhsDistribution => Sampling::LhsDistribution,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum InitArg {
    FullData,
    Random,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PdfDesignArg {
    Box,
    Distribution,
}

const SWEEP_RECORDS: &str = "sweep_records.csv";
const FOMO_RECORDS: &str = "fomo_records.csv";
const SCATTER: &str = "scatter.csv";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    /// `e_mse` is the plain ratio; `e_mse_paper` carries the 1/(n-1) prefactor.
    mse_prefactor: &'a str,
    profile: &'a Profile,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a Path>,
}

fn write_manifest(dir: &Path, command: &str, profile: &Profile, dataset: Option<&Path>) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: profile.seed,
        mse_prefactor: "e_mse=ratio, e_mse_paper=ratio/(n-1)",
        profile,
        dataset,
    };
    write_string_atomic(dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    write_string_atomic(dir.join("profile.toml"), &profile.to_toml()?)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let profile = args.profile.load()?;
    let problem = profile.problem.build()?;
    let distribution = profile.problem.distribution()?;
    let mut rng = fomo::seeded_rng(profile.seed, "generate");
    let x = draw_inputs(&distribution, args.sampling.into(), args.count, &mut rng)?;
    let y = problem.evaluate_many(&x)?;
    let samples: Vec<Sample> = x.rows().into_iter().zip(y.iter()).map(|(r, &v)| Sample::new(r.to_vec(), v)).collect();
    write_dataset_file(&args.out, &samples)?;
    if let Some(dir) = &args.suite {
        Bench::build(&profile, None)?.suite.save(dir)?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let profile = args.profile.load()?;
    if profile.problem.kind != ProblemKind::Mmt {
        return Err(FomoError::Config("simulate needs an mmt profile".into()));
    }
    let settings = &profile.problem;
    let basis = KlBasis::new(settings.kl_modes, settings.mmt.grid_size, settings.kl)?;
    let u0 = initial_condition(&basis, &args.coeffs)?;
    let solver = MmtSolver::new(settings.mmt.clone())?;
    let every = args.snapshot_every.unwrap_or_else(|| settings.mmt.steps().0.max(1));
    let mut snapshots = solver.evolve_snapshots(&u0, every)?;
    if args.snapshot_every.is_none() {
        snapshots.drain(..snapshots.len() - 1);
    }
    let dx = settings.mmt.domain_length / settings.mmt.grid_size as f64;
    write_atomic(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "re", "im"])?;
        for (t, field) in &snapshots {
            for (j, u) in field.iter().enumerate() {
                out.serialize((t, j as f64 * dx, u.re, u.im))?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    let last = &snapshots.last().expect("final field").1;
    println!("{}", last.iter().map(|u| u.re.abs()).fold(0.0, f64::max));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut profile = args.profile.load()?;
    if let Some(s) = profile.sweep.as_mut() {
        if let Some(r) = args.replicates {
            s.replicates = r;
        }
        if let Some(sampling) = args.sampling {
            s.sampling = sampling.into();
        }
    }
    let spec = profile.sweep_spec()?;
    let bench = Bench::build(&profile, args.profile.cache.as_deref())?;
    let records = bench.sweep(&spec)?;
    write_records(&args.out.join(SWEEP_RECORDS), &records)?;
    emit_plot_data(&args.out, &PlotBundle { sweep: Some(&records), ..Default::default() })?;
    write_manifest(&args.out, "sweep", &profile, None)
}

fn apply_fomo_overrides(profile: &mut Profile, args: &FomoArgs) -> Result<()> {
    let f = profile.fomo.as_mut().ok_or_else(|| FomoError::Config("profile has no [fomo] section".into()))?;
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut f.replicates, args.replicates);
    set(&mut f.pool_size, args.pool_size);
    set(&mut f.run.n_a, args.n_a);
    set(&mut f.run.n_iter_max, args.n_iter_max);
    set(&mut f.run.pdf_sample_count, args.pdf_samples);
    set(&mut f.run.convergence_patience, args.patience);
    if args.n_init.is_some() {
        f.run.n_init = args.n_init;
    }
    if let Some(init) = args.init {
        f.run.init = match init {
            InitArg::FullData => InitStrategy::FullData,
            InitArg::Random => InitStrategy::Random,
        };
    }
    if let Some(design) = args.pdf_design {
        f.run.pdf_design = match design {
            PdfDesignArg::Box => PdfDesign::Box,
            PdfDesignArg::Distribution => PdfDesign::Distribution,
        };
    }
    f.full_reference |= args.full_reference;
    if let Some(seed) = args.profile.seed {
        f.run.seed = seed;
    }
    Ok(())
}

fn write_batch(dir: &Path, batch: &FomoBatch) -> Result<()> {
    write_records(&dir.join(FOMO_RECORDS), &batch.records)?;
    if !batch.full_pool.is_empty() {
        write_records(&dir.join("full_pool_records.csv"), &batch.full_pool)?;
    }
    write_atomic(dir.join("chosen.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["run_id", "index"])?;
        for (run, chosen) in batch.chosen.iter().enumerate() {
            for &i in chosen {
                out.serialize((run, i))?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    write_atomic(dir.join("outcomes.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["run_id", "outcome"])?;
        for (run, outcome) in batch.outcomes.iter().enumerate() {
            out.serialize((run, serde_json::to_string(outcome)?))?;
        }
        out.flush()?;
        Ok(())
    })
}

fn fomo_cmd(args: &FomoArgs) -> Result<()> {
    let mut profile = args.profile.load()?;
    apply_fomo_overrides(&mut profile, args)?;
    let mut bench = Bench::build(&profile, args.profile.cache.as_deref())?;
    if let Some(path) = &args.dataset {
        bench.dataset = Some(read_dataset_file(path)?);
    }
    let options = BatchOptions {
        full_reference: profile.fomo_settings()?.full_reference,
        dump_scores: args.dump_scores,
        save_models: args.save_models.then(|| args.out.join("models")),
    };
    let batch = bench.fomo_with(profile.fomo_settings()?, options)?;
    write_batch(&args.out, &batch)?;
    let scatter: Option<&[ScatterRow]> = args.dump_scores.then_some(&batch.scatter);
    emit_plot_data(&args.out, &PlotBundle { fomo: Some(&batch.records), scatter, ..Default::default() })?;
    write_manifest(&args.out, "fomo", &profile, args.dataset.as_deref())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let suite = TestSuite::load(&args.suite)?;
    let p_true = suite.true_pdf()?;
    let e = evaluate_surrogate(model.as_ref(), &suite, &p_true)?;
    write_atomic(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["e_mse_ratio", "e_mse_paper", "e_logpdf"])?;
        out.serialize((e.e_mse, e.e_mse_paper, e.e_logpdf))?;
        out.flush()?;
        Ok(())
    })
}

fn pdf(args: &PdfArgs) -> Result<()> {
    let estimate = match (&args.dataset, &args.model, &args.suite) {
        (Some(path), _, _) => {
            let profile = args.profile.load()?;
            let distribution = profile.problem.distribution()?;
            let samples = read_dataset_file(path)?;
            let y: Vec<f64> = samples.iter().map(|s| s.y).collect();
            let w = samples.iter().map(|s| distribution.density(&s.x)).collect::<Result<Vec<f64>>>()?;
            fit_kde(&y, &w)?
        }
        (None, Some(model), Some(suite)) => TestSuite::load(suite)?.model_pdf(load_model(model)?.as_ref())?,
        _ => return Err(FomoError::Config("pdf needs --dataset or --model with --suite".into())),
    };
    write_atomic(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["y", "density"])?;
        for (y, p) in estimate.eval_grid().iter().zip(estimate.grid_density()) {
            out.serialize((y, p))?;
        }
        out.flush()?;
        Ok(())
    })
}

fn plot_data(args: &PlotDataArgs) -> Result<()> {
    let read = |name: &str| -> Result<Option<Vec<fomo::experiment::ExperimentRecord>>> {
        let path = args.input.join(name);
        if path.is_file() {
            Ok(Some(read_records(&path)?))
        } else {
            Ok(None)
        }
    };
    let sweep = read(SWEEP_RECORDS)?;
    let fomo_records = read(FOMO_RECORDS)?;
    if sweep.is_none() && fomo_records.is_none() {
        return Err(FomoError::InvalidInput(format!("no result tables in {}", args.input.display())));
    }
    let scatter_path = args.input.join(SCATTER);
    let scatter: Option<Vec<ScatterRow>> = if scatter_path.is_file() {
        let mut reader = csv::Reader::from_path(&scatter_path)?;
        Some(reader.deserialize().collect::<std::result::Result<_, _>>()?)
    } else {
        None
    };
    let bundle = PlotBundle { sweep: sweep.as_deref(), fomo: fomo_records.as_deref(), scatter: scatter.as_deref() };
    emit_plot_data(&args.out, &bundle)?;
    if let Some(rows) = &scatter {
        write_scatter(&args.out.join(SCATTER), rows)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Fomo(a) => fomo_cmd(a),
        Command::Metrics(a) => metrics(a),
        Command::Pdf(a) => pdf(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
