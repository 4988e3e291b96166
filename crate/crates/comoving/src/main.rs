use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comoving::config::{
    DmdStage, FieldSource, ForecastStage, Input, LvStage, ModalStage, PipelineConfig, PodStage, PreprocessStage,
    RefineStage, RpcaStage, Stage, TrackSource, TrackStage,
};
use comoving::io::load_json;
use comoving::pipeline::run_pipeline;
use comoving::{AppError, AppResult};
use comoving_core::library::TermKind;
use comoving_core::sr3::{Lambda, Regularizer};

/// Co-moving frames and reduced-order models for traveling waves on a
/// periodic domain.
///
/// Every subcommand runs the stage pipeline and writes its artifacts plus a
/// manifest.json into --out. With --config, the JSON pipeline document
/// supplies input, output, seed and stage parameters; flags override it.
///
/// Exit codes: 0 success, 2 bad command line, 3 invalid configuration,
/// 4 file system error, 5 malformed input file, 6 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "comoving", version)]
struct Cli {
    /// Seed for synthetic noise, clustering and network initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct FieldArg {
    /// Field CSV (`# K=.. T=.. dt=..` header, one time row per line).
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic field from a SynthSpec JSON document.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Detect fronts and group them into per-wave tracks.
    Track {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        n_waves: Option<usize>,
        #[arg(long)]
        seed_rows: Option<usize>,
        /// Also report the eigengap suggestion for the number of waves.
        #[arg(long)]
        suggest: bool,
    },
    /// Two-stage co-moving frame discovery.
    Untwist {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        n_waves: Option<usize>,
        /// Wave to hold stationary.
        #[arg(long)]
        wave: Option<usize>,
        /// Rows used by the linear preprocessing fit.
        #[arg(long)]
        window: Option<usize>,
        /// Sparsity weight as a fraction of max |T^T x|.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
        /// Regularizer: l1 or l0.
        #[arg(long, value_parser = parse_reg)]
        reg: Option<Regularizer>,
        /// Polynomial degree of the refining library.
        #[arg(long)]
        poly: Option<u32>,
        /// Comma-separated angular frequencies for sin/cos library terms.
        #[arg(long, value_delimiter = ',')]
        freqs: Option<Vec<f64>>,
    },
    /// Proper orthogonal decomposition.
    Pod {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        rank: Option<usize>,
        /// Decompose the low-rank part of robust PCA.
        #[arg(long)]
        rpca: bool,
    },
    /// Robust PCA (low-rank plus sparse).
    Rpca {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Exact dynamic mode decomposition with forecast.
    Dmd {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        train_rows: Option<usize>,
    },
    /// Lotka-Volterra fit to two tracked waves.
    Lv {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        n_waves: Option<usize>,
        #[arg(long)]
        y_wave: Option<usize>,
        #[arg(long)]
        z_wave: Option<usize>,
        #[arg(long)]
        train_len: Option<usize>,
        /// Use tracks from the co-moving frame (runs untwist first).
        #[arg(long)]
        untwist: bool,
    },
    /// Koopman forecast, or the modal variant with --modal.
    Koopman {
        #[command(flatten)]
        input: FieldArg,
        #[arg(long)]
        modal: bool,
        /// Frequencies (forecast) or modes (modal).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        source: Option<String>,
    },
    /// Run every stage of the --config document.
    Pipeline,
}

fn parse_reg(s: &str) -> Result<Regularizer, String> {
    match s {
        "l1" => Ok(Regularizer::L1),
        "l0" => Ok(Regularizer::L0),
        _ => Err(format!("expected l1 or l0, got '{s}'")),
    }
}

/// Stage of the given kind from the base config, or its default.
fn find<T: Default>(base: &PipelineConfig, pick: impl Fn(&Stage) -> Option<&T>) -> T
where
    T: Clone,
{
    base.stages.iter().find_map(pick).cloned().unwrap_or_default()
}

fn build(cli: &Cli) -> AppResult<PipelineConfig> {
    let mut base = match &cli.config {
        Some(p) => {
            let c: PipelineConfig = load_json(p)?;
            c
        }
        None => PipelineConfig {
            input: Input::Path(PathBuf::new()),
            output_dir: PathBuf::from("out"),
            seed: None,
            stages: Vec::new(),
        },
    };
    let set_field = |base: &mut PipelineConfig, f: &FieldArg| -> AppResult<()> {
        match &f.field {
            Some(p) => base.input = Input::Path(p.clone()),
            None if cli.config.is_none() => return Err(AppError::config("--field or --config is required")),
            None => {}
        }
        Ok(())
    };
    let stages = match &cli.command {
        Command::Pipeline => {
            if cli.config.is_none() {
                return Err(AppError::config("pipeline needs --config"));
            }
            base.stages.clone()
        }
        Command::Synth { spec } => {
            match spec {
                Some(p) => base.input = Input::Synth(load_json(p)?),
                None if matches!(base.input, Input::Synth(_)) => {}
                None => return Err(AppError::config("synth needs --spec or a config with a synth input")),
            }
            Vec::new()
        }
        Command::Track { input, n_waves, seed_rows, suggest } => {
            set_field(&mut base, input)?;
            let mut s: TrackStage = find(&base, |s| if let Stage::Track(t) = s { Some(t) } else { None });
            s.n_waves = n_waves.unwrap_or(s.n_waves);
            s.seed_rows = seed_rows.unwrap_or(s.seed_rows);
            s.suggest |= suggest;
            vec![Stage::Track(s)]
        }
        Command::Untwist { input, n_waves, wave, window, lambda, zeta, reg, poly, freqs } => {
            set_field(&mut base, input)?;
            let mut p: PreprocessStage = find(&base, |s| if let Stage::UntwistPreprocess(t) = s { Some(t) } else { None });
            let mut r: RefineStage = find(&base, |s| if let Stage::UntwistRefine(t) = s { Some(t) } else { None });
            if let Some(n) = n_waves {
                p.n_waves = *n;
                r.n_waves = *n;
            }
            p.window = window.unwrap_or(p.window);
            r.wave = wave.unwrap_or(r.wave);
            if let Some(l) = lambda {
                r.lambda = Lambda::Relative(*l);
            }
            r.zeta = zeta.unwrap_or(r.zeta);
            r.regularizer = reg.unwrap_or(r.regularizer);
            if poly.is_some() || freqs.is_some() {
                let mut lib = vec![TermKind::Polynomial(poly.unwrap_or(2))];
                if let Some(f) = freqs {
                    lib.push(TermKind::Sinusoid(f.clone()));
                }
                r.library = lib;
            }
            vec![Stage::UntwistPreprocess(p), Stage::UntwistRefine(r)]
        }
        Command::Pod { input, rank, rpca } => {
            set_field(&mut base, input)?;
            let mut s: PodStage = find(&base, |s| if let Stage::Pod(t) = s { Some(t) } else { None });
            s.source = FieldSource::Input;
            s.rank = rank.unwrap_or(s.rank);
            s.rpca |= rpca;
            vec![Stage::Pod(s)]
        }
        Command::Rpca { input, lambda, tol } => {
            set_field(&mut base, input)?;
            let mut s: RpcaStage = find(&base, |s| if let Stage::Rpca(t) = s { Some(t) } else { None });
            s.source = FieldSource::Input;
            s.options.lambda = lambda.or(s.options.lambda);
            s.options.tol = tol.unwrap_or(s.options.tol);
            vec![Stage::Rpca(s)]
        }
        Command::Dmd { input, rank, train_rows } => {
            set_field(&mut base, input)?;
            let mut s: DmdStage = find(&base, |s| if let Stage::Dmd(t) = s { Some(t) } else { None });
            s.source = FieldSource::Input;
            s.rank = rank.unwrap_or(s.rank);
            s.train_rows = train_rows.or(s.train_rows);
            vec![Stage::Dmd(s)]
        }
        Command::Lv { input, n_waves, y_wave, z_wave, train_len, untwist } => {
            set_field(&mut base, input)?;
            let mut s: LvStage = find(&base, |s| if let Stage::Lv(t) = s { Some(t) } else { None });
            s.y_wave = y_wave.unwrap_or(s.y_wave);
            s.z_wave = z_wave.unwrap_or(s.z_wave);
            s.train_len = train_len.unwrap_or(s.train_len);
            let n = n_waves.unwrap_or(2);
            let mut stages = Vec::new();
            if *untwist {
                let mut p: PreprocessStage = find(&base, |s| if let Stage::UntwistPreprocess(t) = s { Some(t) } else { None });
                let mut r: RefineStage = find(&base, |s| if let Stage::UntwistRefine(t) = s { Some(t) } else { None });
                p.n_waves = n;
                r.n_waves = n;
                stages.push(Stage::UntwistPreprocess(p));
                stages.push(Stage::UntwistRefine(r));
                s.source = TrackSource::Refined;
            } else {
                let mut t: TrackStage = find(&base, |s| if let Stage::Track(t) = s { Some(t) } else { None });
                t.n_waves = n;
                stages.push(Stage::Track(t));
                s.source = TrackSource::Track;
            }
            stages.push(Stage::Lv(s));
            stages
        }
        Command::Koopman { input, modal, n, epochs, rounds, hidden, source } => {
            set_field(&mut base, input)?;
            if let Some(src) = source {
                if src != "input" {
                    return Err(AppError::config("koopman subcommand reads the input field; use pipeline for other sources"));
                }
            }
            if *modal {
                let mut s: ModalStage = find(&base, |s| if let Stage::KoopmanModal(t) = s { Some(t) } else { None });
                s.source = FieldSource::Input;
                let o = &mut s.options;
                o.n_modes = n.unwrap_or(o.n_modes);
                o.schedule.epochs = epochs.unwrap_or(o.schedule.epochs);
                o.rounds = rounds.unwrap_or(o.rounds);
                o.hidden = hidden.clone().unwrap_or(o.hidden.clone());
                vec![Stage::KoopmanModal(s)]
            } else {
                let mut s: ForecastStage = find(&base, |s| if let Stage::KoopmanForecast(t) = s { Some(t) } else { None });
                s.source = FieldSource::Input;
                let o = &mut s.options;
                o.n_freq = n.unwrap_or(o.n_freq);
                o.schedule.epochs = epochs.unwrap_or(o.schedule.epochs);
                o.rounds = rounds.unwrap_or(o.rounds);
                o.hidden = hidden.clone().unwrap_or(o.hidden.clone());
                vec![Stage::KoopmanForecast(s)]
            }
        }
    };
    base.stages = stages;
    if let Some(out) = &cli.out {
        base.output_dir = out.clone();
    }
    if cli.seed.is_some() {
        base.seed = cli.seed;
    }
    Ok(base)
}

fn report(e: &AppError) {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = build(&cli).and_then(|cfg| run_pipeline(&cfg).map(|r| (cfg, r)));
    match run {
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
        Ok((cfg, run)) => {
            for (rec, (name, took)) in run.manifest.stages.iter().zip(&run.timings) {
                println!("{:02} {name:<20} {:>3} artifacts  {:>8.2}s", rec.index, rec.artifacts.len(), took.as_secs_f64());
            }
            println!("manifest: {}", cfg.output_dir.join(comoving::pipeline::MANIFEST).display());
            match &run.error {
                Some(e) => {
                    report(e);
                    ExitCode::from(run.exit_code() as u8)
                }
                None => ExitCode::SUCCESS,
            }
        }
    }
}
