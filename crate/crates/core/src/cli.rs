//! Command-line surface. [`run`] returns the process exit status:
//! 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, ErrorKind, Result};
use crate::inversion::{invert_series, PriorSpec};
use crate::io::export::export_diagnostics;
use crate::io::records::{exclude_sites, read_site_list, write_records};
use crate::io::{
    fmt17, generate_synthetic, load_artifact, load_csv, load_observations, parse_float_list,
    save_artifact, RunConfig, Standardization, SynthSpec,
};
use crate::trainer::train_raw;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hgpr", version, about = "Heteroscedastic GP calibration of UK'37 against SST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a calibration model and write an artifact
    Train(TrainArgs),
    /// Print predictive mean and 95% band at covariate values
    Predict(PredictArgs),
    /// Sample the covariate posterior for each proxy observation
    Invert(InvertArgs),
    /// Write diagnostic tables for a trained model
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic calibration dataset
    Synth(SynthArgs),
    /// Print a config file holding every default
    Config,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// CSV with sst and uk37 columns
    #[arg(long)]
    data: PathBuf,
    /// artifact path to write
    #[arg(long)]
    out: PathBuf,
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// derive standardization constants from data quantiles
    #[arg(long)]
    fit_standardization: bool,
    /// file listing site ids to drop, one per line
    #[arg(long)]
    exclude_sites: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// comma-separated SST values in °C
    #[arg(long, allow_hyphen_values = true)]
    at: String,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// CSV with a uk37 column
    #[arg(long)]
    obs: PathBuf,
    /// gaussian:MEAN,SD or uniform:LO,HI in °C
    #[arg(long, allow_hyphen_values = true)]
    prior: String,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// key=value config file (chain_* keys)
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides the chain seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// CSV to score, usually the training data
    #[arg(long)]
    data: PathBuf,
    /// output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// e.g. n=1000,mean=sigmoid,noise=ramp,outlier_frac=0.05,seed=42
    #[arg(long, default_value = "")]
    spec: String,
    /// CSV path; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    match dispatch(cli.command, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("hgpr: {e}");
            exit_code(e.kind())
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Invert(a) => cmd_invert(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Config => {
            out.write_all(RunConfig::default().render().as_bytes())?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_ref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let mut records = load_csv(&a.data)?;
    if let Some(path) = &a.exclude_sites {
        records = exclude_sites(records, &read_site_list(File::open(path)?)?);
    }
    let x: Vec<f64> = records.iter().map(|r| r.sst).collect();
    let y: Vec<f64> = records.iter().map(|r| r.uk37).collect();
    let s = if a.fit_standardization {
        Standardization::fit(&x, &y)?
    } else {
        Standardization::default()
    };
    let artifact = train_raw(&x, &y, s, &cfg.train)?;
    save_artifact(&artifact, &a.out)?;
    let last = artifact.history.last().expect("training records history");
    eprintln!(
        "trained on {} points in {} iterations; final outlier fraction {:.4}",
        x.len(),
        artifact.history.len(),
        last.outlier_fraction
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let xs = parse_float_list(&a.at)?;
    let artifact = load_artifact(&a.artifact)?;
    writeln!(out, "sst\tmean\tsd\tlower\tupper")?;
    for x in xs {
        let (m, sd) = artifact.predict_raw(x)?;
        let half = crate::io::export::BAND_Z * sd;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            fmt17(x),
            fmt17(m),
            fmt17(sd),
            fmt17(m - half),
            fmt17(m + half)
        )?;
    }
    Ok(())
}

fn cmd_invert(a: InvertArgs) -> Result<()> {
    let prior: PriorSpec = a.prior.parse()?;
    let mut cfg = load_config(a.config.as_ref())?.chain;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let artifact = load_artifact(&a.artifact)?;
    let obs = load_observations(&a.obs)?;
    if obs.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let y: Vec<f64> = obs.iter().map(|o| o.uk37).collect();
    let results = invert_series(&y, &artifact, &[prior], &cfg)?;

    fs::create_dir_all(&a.out)?;
    let mut summary = BufWriter::new(File::create(a.out.join("summary.tsv"))?);
    let mut samples = BufWriter::new(File::create(a.out.join("samples.tsv"))?);
    writeln!(
        summary,
        "index\tsite_id\tuk37\tstatus\tmean\tmedian\tsd\tq025\tq25\tq75\tq975\tacceptance\tmcse"
    )?;
    writeln!(samples, "index\tdraw\tsst")?;
    let mut failures = 0;
    for (i, (o, r)) in obs.iter().zip(&results).enumerate() {
        let site = o.site_id.as_deref().unwrap_or("NA");
        match r {
            Ok(p) => {
                let q = &p.quantiles;
                writeln!(
                    summary,
                    "{i}\t{site}\t{}\tok\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    fmt17(o.uk37),
                    fmt17(p.mean),
                    fmt17(p.median),
                    fmt17(p.sd),
                    fmt17(q.q025),
                    fmt17(q.q25),
                    fmt17(q.q75),
                    fmt17(q.q975),
                    fmt17(p.acceptance_rate),
                    fmt17(p.mcse)
                )?;
                for (d, v) in p.samples.iter().enumerate() {
                    writeln!(samples, "{i}\t{d}\t{}", fmt17(*v))?;
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("hgpr: observation {i}: {e}");
                writeln!(
                    summary,
                    "{i}\t{site}\t{}\tfailed\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA",
                    fmt17(o.uk37)
                )?;
            }
        }
    }
    summary.flush()?;
    samples.flush()?;
    if failures == obs.len() {
        return Err(Error::NoAcceptedProposals);
    }
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let artifact = load_artifact(&a.artifact)?;
    let data = load_csv(&a.data)?;
    export_diagnostics(&artifact, &data, &a.out)?;
    Ok(())
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec: SynthSpec = a.spec.parse()?;
    let d = generate_synthetic(&spec)?;
    let flag = Some(("is_outlier", d.is_outlier.as_slice()));
    match &a.out {
        Some(p) => write_records(File::create(p)?, &d.records, flag),
        None => write_records(out, &d.records, flag),
    }
}
