use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multidecoder::dsp::BandName;
use multidecoder::pipeline::{cmd_all, cmd_decode, cmd_null, cmd_predict, cmd_reduce, cmd_synth, RunConfig};
use multidecoder::{Error, Result};

#[derive(Parser)]
#[command(name = "multidecoder", version, about = "Predict speech reception thresholds from neural tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cohort.
    Synth,
    /// Train every decoder and fill the NT cache (resumable).
    Decode {
        /// Stop after computing this many bands.
        #[arg(long, hide = true)]
        stop_after_bands: Option<usize>,
    },
    /// Nested LOO prediction, evaluation report and SHAP groups.
    Predict,
    /// Permutation null of the prediction correlation.
    Null,
    /// Data-reduction sweeps.
    Reduce,
    /// synth, decode, predict and null.
    All,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated bands: delta, theta, broadband.
    #[arg(long, global = true, value_delimiter = ',')]
    bands: Option<Vec<BandName>>,
    /// Comma-separated maximum lags out of 5..=31.
    #[arg(long, global = true, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    #[arg(long, global = true)]
    n_perm: Option<usize>,
    /// Matrix sentences per condition in the generated cohort.
    #[arg(long, global = true)]
    sentences: Option<usize>,
    /// Story length of the generated cohort, in minutes.
    #[arg(long, global = true)]
    story_min: Option<f64>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        if let Some(b) = &self.bands {
            c.filter.bands = b.clone();
        }
        if let Some(w) = &self.windows {
            c.filter.windows = w.clone();
        }
        if let Some(n) = self.n_perm {
            c.n_perm = n;
        }
        if let Some(n) = self.sentences {
            c.cohort.n_sentences = n;
        }
        if let Some(m) = self.story_min {
            c.cohort.story_s = 60.0 * m;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.common.resolve()?;
    if cli.common.print_config {
        print!("{}", config.to_json());
        return Ok(());
    }
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let out = config.out_dir.display();
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&config)?;
            println!("synth: {} subjects, {} files in {out}/cohort", s.n_subjects, s.n_files);
        }
        Command::Decode { stop_after_bands } => {
            let d = cmd_decode(&config, stop_after_bands)?;
            println!(
                "decode: {} configurations, {} decoders per run, {} NT rows (computed {:?}, reused {:?}){}",
                d.n_configs,
                d.decoders_per_run,
                d.rows,
                d.bands_computed,
                d.bands_reused,
                if d.complete { "" } else { ", incomplete" }
            );
        }
        Command::Predict => {
            let p = cmd_predict(&config)?;
            println!(
                "predict: {} subjects, {}-dim vectors, r = {:.3} (p = {:.2e}), NRMSE = {:.3}, median |diff| = {:.2} dB",
                p.report.n_subjects,
                p.feature_dim,
                p.report.pearson_r,
                p.report.p_value,
                p.report.nrmse,
                p.report.median_abs_diff_db
            );
        }
        Command::Null => {
            let n = cmd_null(&config)?;
            println!(
                "null: {} permutations, z mean {:.3}, sd {:.3}; observed z {:.3}, p = {:.2e} (empirical {:.3})",
                n.n_perm(),
                n.mean,
                n.sd,
                n.observed_z,
                n.two_tailed_p,
                n.empirical_p
            );
        }
        Command::Reduce => {
            for g in cmd_reduce(&config)? {
                for c in &g.cells {
                    println!(
                        "reduce: {} {} {}: r = {:.3}, NRMSE = {:.3}",
                        c.mode, c.value, c.decoder_set, c.report.pearson_r, c.report.nrmse
                    );
                }
            }
        }
        Command::All => {
            let a = cmd_all(&config)?;
            println!(
                "all: {} subjects, {} NT rows, r = {:.3}, NRMSE = {:.3}, null p = {:.2e}; artifacts in {out}",
                a.synth.n_subjects, a.decode.rows, a.predict.report.pearson_r, a.predict.report.nrmse, a.null.two_tailed_p
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
