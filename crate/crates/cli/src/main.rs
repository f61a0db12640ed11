//! `heartsplit` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O or protocol failure.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use heartsplit_core::edge::run_edge_session;
use heartsplit_core::eval::corpus::{balanced_beats, segment_record_with, synthetic_records};
use heartsplit_core::eval::{
    energy_report, evaluate_pipeline, front_end, load_record, mac_memory_report, record_id,
    simulate_case, write_annotations, Baseline, CaseSpec, LabeledRecord, Settings, SplitManifest,
    TrafficSummary,
};
use heartsplit_core::link::{FogNode, FogServer, Link, LoopbackLink, TcpLink};
use heartsplit_core::nn::{
    build_table1_model, load_weights, save_weights, train, train_edge_head, ModelGraph, TrainLog,
};
use heartsplit_core::qrs::{detect_rpeaks, segment_beats, BeatSegment, SEGMENT_FS};
use heartsplit_core::signal::io::load_ecg;
use heartsplit_core::signal::io::{meta_path, write_binary, write_csv};
use heartsplit_core::sqa::grade_record;
use heartsplit_core::{AamiClass, Error as CoreError};

/// Input that fails validation in the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "heartsplit",
    version,
    about = "Edge/fog ECG monitoring pipeline"
)]
struct Cli {
    /// key=value settings file overriding built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Split {
    All,
    Train,
    Test,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Directory of records: `<id>.csv` + `<id>.meta` or `<id>.ecg`, each
    /// with `<id>.ann` annotations.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Record split manifest; the bundled MIT-BIH split when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    split: Split,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic records.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        records: usize,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Grade 10 s windows of ECG files.
    Sqa {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the full network on head 2.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Train on a class-balanced synthetic corpus with this many beats
        /// per class instead of `--data`.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Retrain head 1 on the frozen first block.
    TrainEdgeHead {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Classify every detected beat of a file with the whole network.
    Infer {
        #[arg(long)]
        weights: Option<PathBuf>,
        input: PathBuf,
    },
    /// Run the fog service.
    ServeFog {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        max_sessions: Option<usize>,
        /// JSON-lines log of handled messages.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the edge pipeline over a file.
    RunEdge {
        #[arg(long)]
        weights: Option<PathBuf>,
        input: PathBuf,
        /// Fog address; an in-process fog node is used when omitted.
        #[arg(long)]
        fog: Option<String>,
        /// JSON-lines beat log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Traffic summary (JSON) for `energy-report`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Simulate a one-hour case through edge and fog.
    Simulate {
        #[arg(long)]
        case: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Untrained weights from `--seed` are used when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score the pipeline on labeled records.
    Eval {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Score head 1 alone, without the HRV and template gates.
        #[arg(long)]
        no_indicators: bool,
        /// Keep beats in windows graded unacceptable.
        #[arg(long)]
        no_sqa: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Communication energy of Cases I, II and III.
    EnergyReport {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Case II traffic from `run-edge --summary` instead of simulating.
        #[arg(long)]
        case_ii: Option<PathBuf>,
        #[arg(long)]
        case_iii: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer MACs and parameters beside baselines.
    MacReport {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// `name:macs:params`, repeatable.
        #[arg(long)]
        baseline: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| invalid(format!("missing required flag {flag}")))
}

fn load_model(path: &Path) -> Result<ModelGraph<f32>> {
    load_weights(path).with_context(|| format!("loading weights {}", path.display()))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Synth {
            out,
            records,
            duration,
            seed,
            format,
        } => cmd_synth(&out, records, duration, seed, format),
        Command::Sqa { inputs } => cmd_sqa(&settings, &inputs),
        Command::Train {
            data,
            synthetic,
            out,
            epochs,
            seed,
            log,
        } => {
            apply_train_flags(&mut settings, epochs, seed);
            let (tr, va) = training_beats(&settings, &data, synthetic)?;
            let mut model = build_table1_model(settings.train.seed);
            let tlog = train(&mut model, &tr, &va, &settings.train)?;
            finish_training(&model, &tlog, &out, log.as_ref())
        }
        Command::TrainEdgeHead {
            weights,
            data,
            synthetic,
            out,
            epochs,
            seed,
            log,
        } => {
            apply_train_flags(&mut settings, epochs, seed);
            let mut model = load_model(require(&weights, "--weights")?)?;
            let (tr, va) = training_beats(&settings, &data, synthetic)?;
            let tlog = train_edge_head(&mut model, &tr, &va, &settings.train)?;
            finish_training(&model, &tlog, &out, log.as_ref())
        }
        Command::Infer { weights, input } => {
            let model = load_model(require(&weights, "--weights")?)?;
            cmd_infer(&settings, &model, &input)
        }
        Command::ServeFog {
            weights,
            listen,
            max_sessions,
            log,
        } => {
            let mut cfg = settings.fog.clone();
            if let Some(w) = weights {
                cfg.weights = w;
            }
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(m) = max_sessions {
                cfg.max_sessions = m;
            }
            if log.is_some() {
                cfg.log_path = log;
            }
            let server = FogServer::from_config(&cfg)?;
            eprintln!("fog node listening on {}", server.local_addr()?);
            server.serve()?;
            Ok(())
        }
        Command::RunEdge {
            weights,
            input,
            fog,
            log,
            summary,
        } => {
            let model = load_model(require(&weights, "--weights")?)?;
            let sig = load_ecg(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut link: Box<dyn Link> = match fog {
                Some(addr) => Box::new(TcpLink::connect(addr.as_str())?),
                None => Box::new(LoopbackLink::new(Arc::new(FogNode::new(model.clone())?))),
            };
            let mut log_file = log
                .map(|p| {
                    File::create(&p)
                        .map(BufWriter::new)
                        .with_context(|| format!("creating {}", p.display()))
                })
                .transpose()?;
            let report = run_edge_session(
                &sig,
                &model,
                &settings.edge,
                link.as_mut(),
                log_file.as_mut().map(|w| w as &mut dyn Write),
            )?;
            if let Some(mut w) = log_file {
                w.flush()?;
            }
            let traffic = TrafficSummary::from_report(&report)?;
            if let Some(p) = summary {
                fs::write(&p, serde_json::to_string_pretty(&traffic)?)?;
            }
            emit(None, &session_text(&report, &traffic))
        }
        Command::Simulate {
            case,
            seed,
            weights,
            out,
            summary,
        } => {
            let case = CaseSpec::by_name(&case)?;
            let model = model_or_seeded(weights.as_ref(), seed)?;
            let report = simulate_case(&case, &model, &settings.edge, &settings.sim, seed)?;
            let traffic = TrafficSummary::from_report(&report)?;
            if let Some(p) = summary {
                fs::write(&p, serde_json::to_string_pretty(&traffic)?)?;
            }
            emit(out.as_ref(), &session_text(&report, &traffic))
        }
        Command::Eval {
            weights,
            data,
            no_indicators,
            no_sqa,
            out,
        } => {
            let model = load_model(require(&weights, "--weights")?)?;
            let records = load_records(&data)?;
            let mut cfg = settings.eval.clone();
            cfg.use_indicators &= !no_indicators;
            cfg.use_sqa &= !no_sqa;
            let report = evaluate_pipeline(&records, &model, &cfg)?;
            emit(out.as_ref(), &report.to_text())
        }
        Command::EnergyReport {
            weights,
            seed,
            case_ii,
            case_iii,
            csv,
            out,
        } => {
            let model = model_or_seeded(weights.as_ref(), seed)?;
            let traffic = |path: Option<PathBuf>, case: CaseSpec| -> Result<TrafficSummary> {
                match path {
                    Some(p) => {
                        let text = fs::read_to_string(&p)
                            .with_context(|| format!("reading {}", p.display()))?;
                        serde_json::from_str(&text)
                            .with_context(|| format!("parsing traffic summary {}", p.display()))
                    }
                    None => {
                        let r = simulate_case(&case, &model, &settings.edge, &settings.sim, seed)?;
                        Ok(TrafficSummary::from_report(&r)?)
                    }
                }
            };
            let ii = traffic(case_ii, CaseSpec::CASE_II)?;
            let iii = traffic(case_iii, CaseSpec::CASE_III)?;
            let report = energy_report(&settings.energy, &CaseSpec::CASE_I, &ii, &iii)?;
            emit(
                out.as_ref(),
                &if csv {
                    report.to_csv()
                } else {
                    report.to_text()
                },
            )
        }
        Command::MacReport {
            weights,
            baseline,
            out,
        } => {
            let model = match &weights {
                Some(p) => load_model(p)?,
                None => build_table1_model(0),
            };
            let baselines = baseline
                .iter()
                .map(|b| Baseline::parse(b))
                .collect::<Result<Vec<_>, _>>()?;
            emit(
                out.as_ref(),
                &mac_memory_report(&model, &baselines).to_text(),
            )
        }
    }
}

fn model_or_seeded(weights: Option<&PathBuf>, seed: u64) -> Result<ModelGraph<f32>> {
    match weights {
        Some(p) => load_model(p),
        None => {
            warn!("no --weights given; using an untrained network initialised from the seed");
            Ok(build_table1_model(seed))
        }
    }
}

fn apply_train_flags(settings: &mut Settings, epochs: Option<usize>, seed: Option<u64>) {
    if let Some(e) = epochs {
        settings.train.max_epochs = e;
    }
    if let Some(s) = seed {
        settings.train.seed = s;
    }
}

fn cmd_synth(out: &Path, records: usize, duration: f64, seed: u64, format: Format) -> Result<()> {
    if records == 0 {
        return Err(invalid("--records must be positive"));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for rec in synthetic_records(records, duration, seed)? {
        let ann = out.join(format!("{}.ann", rec.id));
        match format {
            Format::Csv => {
                let csv = out.join(format!("{}.csv", rec.id));
                write_csv(&csv, &rec.signal)?;
                fs::write(meta_path(&csv), format!("fs={}\n", rec.signal.fs))?;
            }
            Format::Bin => write_binary(&out.join(format!("{}.ecg", rec.id)), &rec.signal)?,
        }
        write_annotations(&ann, &rec.beats)?;
        info!("wrote {} ({} beats)", rec.id, rec.beats.len());
    }
    println!("wrote {records} record(s) to {}", out.display());
    Ok(())
}

fn cmd_sqa(settings: &Settings, inputs: &[PathBuf]) -> Result<()> {
    let e = &settings.edge;
    let mut s = String::from("record,start_s,grade,reason,mean_abs,mean_sigma\n");
    for path in inputs {
        let sig = load_ecg(path).with_context(|| format!("reading {}", path.display()))?;
        let filtered = front_end(&sig, e.band_low_hz, e.band_high_hz, e.filter_order)?;
        for (start, v) in grade_record(&filtered, &e.sqa)? {
            let _ = writeln!(
                s,
                "{},{:.1},{:?},{:?},{:.4},{:.4}",
                record_id(path),
                start as f64 / filtered.fs,
                v.grade,
                v.reason,
                v.mean_abs,
                v.mean_sigma
            );
        }
    }
    emit(None, &s)
}

fn cmd_infer(settings: &Settings, model: &ModelGraph<f32>, input: &Path) -> Result<()> {
    let e = &settings.edge;
    let sig = load_ecg(input).with_context(|| format!("reading {}", input.display()))?;
    let filtered = front_end(&sig, e.band_low_hz, e.band_high_hz, e.filter_order)?;
    let beats = segment_beats(&filtered, &detect_rpeaks(&filtered)?)?;
    let mut s = String::from("r_index,t_s,p_abnormal,p_n,p_s,p_v,p_f,class\n");
    for b in &beats {
        let out = model.forward_window(&b.window)?;
        let k = (0..4).fold(0, |k, i| if out.head2[i] > out.head2[k] { i } else { k });
        let _ = writeln!(
            s,
            "{},{:.3},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            (b.r_index as f64 * sig.fs / SEGMENT_FS).round(),
            b.r_index as f64 / SEGMENT_FS,
            out.head1[1],
            out.head2[0],
            out.head2[1],
            out.head2[2],
            out.head2[3],
            AamiClass::CLASSIFIED[k]
        );
    }
    emit(None, &s)
}

fn session_text(report: &heartsplit_core::edge::EdgeReport, traffic: &TrafficSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "windows          {}", report.windows.len());
    let _ = writeln!(s, "noise reports    {}", report.noise_reports());
    let _ = writeln!(s, "beats            {}", report.beats.len());
    let _ = writeln!(s, "feature maps     {}", report.feature_maps());
    let _ = writeln!(s, "fog replies      {}", report.replies.len());
    let _ = writeln!(s, "rate changes     {}", report.rate_changes.len());
    let _ = writeln!(s, "edge MACs        {}", report.edge_macs);
    let _ = writeln!(s, "dropped          {}", report.dropped);
    let _ = writeln!(s, "undelivered      {}", report.undelivered);
    let _ = writeln!(s, "bytes sent       {}", traffic.total_bytes());
    let _ = writeln!(s);
    let _ = writeln!(s, "type,frames,bytes");
    for (name, n) in &traffic.frames {
        let _ = writeln!(s, "{name},{n},{}", traffic.bytes[name]);
    }
    let mut counts = [0usize; 4];
    for r in &report.replies {
        if let Some(k) = r.class.head2_index() {
            counts[k] += 1;
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "fog class,count");
    for (c, n) in AamiClass::CLASSIFIED.iter().zip(counts) {
        let _ = writeln!(s, "{c},{n}");
    }
    s
}

/// Finds `<id>.csv` or `<id>.ecg` files that have a sibling `<id>.ann`.
fn load_records(args: &DataArgs) -> Result<Vec<LabeledRecord>> {
    let dir = require(&args.data, "--data")?;
    let manifest = match &args.manifest {
        Some(p) => SplitManifest::load(p)?,
        None => SplitManifest::default_mitbih(),
    };
    let wanted: Option<Vec<&str>> = match args.split {
        Split::All => None,
        Split::Train => Some(manifest.train_ids()),
        Split::Test => Some(manifest.test_ids()),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "ecg")))
        .filter(|p| p.with_extension("ann").exists())
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let id = record_id(&p);
        if manifest.is_excluded(&id) {
            info!("skipping excluded record {id}");
            continue;
        }
        if wanted.as_ref().is_some_and(|w| !w.contains(&id.as_str())) {
            continue;
        }
        let (signal, beats) = load_record(&p, &p.with_extension("ann"))
            .with_context(|| format!("loading record {id}"))?;
        out.push(LabeledRecord { id, signal, beats });
    }
    if out.is_empty() {
        return Err(invalid(format!(
            "no labeled records selected in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// Beats for training with a seeded 80/20 train/validation split, or two
/// independent synthetic sets.
fn training_beats(
    settings: &Settings,
    data: &DataArgs,
    synthetic: Option<usize>,
) -> Result<(Vec<BeatSegment>, Vec<BeatSegment>)> {
    let seed = settings.train.seed;
    if let Some(per_class) = synthetic {
        if per_class == 0 {
            return Err(invalid("--synthetic must be positive"));
        }
        let val = (per_class / 4).max(1);
        return Ok((
            balanced_beats(per_class, seed.wrapping_mul(2).wrapping_add(1))?,
            balanced_beats(val, seed.wrapping_mul(2).wrapping_add(2))?,
        ));
    }
    let e = &settings.edge;
    let mut beats = Vec::new();
    for rec in load_records(data)? {
        beats.extend(
            segment_record_with(&rec, e.band_low_hz, e.band_high_hz, e.filter_order)?
                .into_iter()
                .filter(|b| b.label.is_some_and(|c| c != AamiClass::Q)),
        );
    }
    if beats.len() < 5 {
        return Err(invalid(format!(
            "only {} classifiable beats found",
            beats.len()
        )));
    }
    beats.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = beats.len() / 5;
    let val = beats.split_off(beats.len() - n_val);
    info!(
        "training on {} beats, validating on {}",
        beats.len(),
        val.len()
    );
    Ok((beats, val))
}

fn finish_training(
    model: &ModelGraph<f32>,
    log: &TrainLog,
    out: &Path,
    log_path: Option<&PathBuf>,
) -> Result<()> {
    save_weights(model, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = log_path {
        let mut s = String::from("epoch,lr,train_loss,train_acc,val_acc\n");
        for e in &log.epochs {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                e.epoch, e.lr, e.train_loss, e.train_acc, e.val_acc
            );
        }
        fs::write(p, s)?;
    }
    println!(
        "best validation accuracy {:.4} at epoch {} of {}{}; weights in {}",
        log.best_val_acc,
        log.best_epoch,
        log.epochs.len(),
        if log.stopped_early {
            " (stopped early)"
        } else {
            ""
        },
        out.display()
    );
    Ok(())
}
