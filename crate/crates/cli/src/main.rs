use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use transcoder_core::autodiff::Precision;
use transcoder_core::channel::sigma_from_ebn0;
use transcoder_core::codes::{load_code, read_frozen_file, LinearCode};
use transcoder_core::decoders::{BpConfig, BpVariant, DecoderKind};
use transcoder_core::eval::flops::{compact, flop_estimate, FlopParams, FlopTarget};
use transcoder_core::eval::{distance_histogram, monte_carlo, write_results, EvalRecord, Mapper, McOptions, PipelineConfig, StopRule};
use transcoder_core::nn::{ModelConfig, TransCoder};
use transcoder_core::training::{train, write_trace_csv, LossKind, Modules, SoftDecoder, TrainConfig};

#[derive(Parser)]
#[command(name = "transcoder", version, about = "Channel-code simulation and block-attention neural coding", arg_required_else_help = true)]
struct Cli {
    /// Base seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for Monte Carlo runs.
    #[arg(long, global = true, env = "TRANSCODER_THREADS")]
    threads: Option<usize>,
    /// Output file (results CSV, or checkpoint manifest for `train`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the parameters of a code.
    Codeinfo(CodeArg),
    /// Monte Carlo error rates of a plain BPSK pipeline.
    Simulate(SimulateArgs),
    /// Train neural modules end to end.
    Train(TrainArgs),
    /// Monte Carlo error rates of a pipeline with neural modules.
    Eval(EvalArgs),
    /// Normalised pairwise distance histogram of mapped codewords.
    Histogram(HistogramArgs),
    /// Multiplication/addition counts.
    Flops(FlopsArgs),
}

#[derive(Args)]
struct CodeArg {
    /// Bundled code name, `polar_<N>_<k>`, or alist path.
    #[arg(long)]
    code: String,
    /// Frozen-set file overriding the constructed polar frozen set.
    #[arg(long)]
    frozen: Option<PathBuf>,
}

impl CodeArg {
    fn load(&self) -> Result<LinearCode> {
        let code = load_code(&self.code).with_context(|| format!("loading code `{}`", self.code))?;
        match &self.frozen {
            None => Ok(code),
            Some(path) => {
                let spec = read_frozen_file(path, code.n())?;
                Ok(LinearCode::polar(code.name(), spec))
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderName {
    Bp,
    Minsum,
    Sc,
    Scl,
}

#[derive(Args)]
struct DecoderArgs {
    #[arg(long, value_enum, default_value = "bp")]
    decoder: DecoderName,
    /// BP iterations per decoder run.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// SCL list size.
    #[arg(long, default_value_t = 8)]
    list: usize,
    /// Disable the syndrome early stop of BP.
    #[arg(long)]
    no_early_stop: bool,
}

impl DecoderArgs {
    fn kind(&self) -> DecoderKind {
        let bp = |variant| {
            DecoderKind::Bp(BpConfig {
                iterations: self.iters,
                variant,
                early_stop: !self.no_early_stop,
            })
        };
        match self.decoder {
            DecoderName::Bp => bp(BpVariant::SumProduct),
            DecoderName::Minsum => bp(BpVariant::MinSum),
            DecoderName::Sc => DecoderKind::Sc,
            DecoderName::Scl => DecoderKind::Scl { list_size: self.list },
        }
    }
}

#[derive(Args)]
struct StopArgs {
    /// Eb/N0 points in dB.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    ebn0: Vec<f64>,
    /// Stopping preset: `default` or `long`.
    #[arg(long, default_value = "default")]
    preset: String,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    min_frames: Option<u64>,
    #[arg(long)]
    max_frames: Option<u64>,
    /// Frames per work unit.
    #[arg(long, default_value_t = 500)]
    chunk: usize,
}

impl StopArgs {
    fn options(&self, cli: &Cli) -> Result<McOptions> {
        let mut stop = StopRule::preset(&self.preset).with_context(|| format!("unknown preset `{}`", self.preset))?;
        stop.min_errors = self.min_errors.unwrap_or(stop.min_errors);
        stop.min_frames = self.min_frames.unwrap_or(stop.min_frames);
        stop.max_frames = self.max_frames.unwrap_or(stop.max_frames);
        Ok(McOptions {
            stop,
            workers: workers(cli),
            seed: cli.seed,
            chunk: self.chunk,
            sigma_override: None,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    code: CodeArg,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[command(flatten)]
    stop: StopArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    code: CodeArg,
    /// Differentiable decoder: bp, minsum or sc.
    #[arg(long, value_enum, default_value = "bp")]
    decoder: DecoderName,
    /// Channel-decoder runs.
    #[arg(long, default_value_t = 2)]
    runs: usize,
    #[arg(long, default_value_t = 10)]
    iters_per_run: usize,
    /// Loss: tc, cd or bp.
    #[arg(long, default_value = "bp")]
    loss: LossKind,
    /// Trained modules: et, dt, et+dt, dt+rf or full.
    #[arg(long, default_value = "dt+rf")]
    modules: Modules,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batches_per_epoch: usize,
    #[arg(long, default_value_t = 1000)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Training Eb/N0 interval in dB, `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2.0, 8.0])]
    snr: Vec<f64>,
    /// Block size m.
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    enc_layers: usize,
    #[arg(long, default_value_t = 3)]
    dec_layers: usize,
    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionName,
    #[arg(long, default_value_t = 0)]
    validation_frames: usize,
    /// Continue from this checkpoint.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Loss trace CSV (defaults next to the checkpoint).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionName {
    F32,
    F64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    code: CodeArg,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "dt+rf")]
    modules: Modules,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long, default_value_t = 2)]
    runs: usize,
    /// Frames used to freeze the encoder power statistics at each point.
    #[arg(long, default_value_t = 10_000)]
    calibration_frames: usize,
    #[command(flatten)]
    stop: StopArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapperName {
    Bpsk,
    Encoder,
}

#[derive(Args)]
struct HistogramArgs {
    #[command(flatten)]
    code: CodeArg,
    #[arg(long, value_enum, default_value = "bpsk")]
    mapper: MapperName,
    /// Encoder checkpoint for `--mapper encoder`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Eb/N0 fed to the encoder, in dB.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    ebn0: f64,
    #[arg(long, default_value_t = 100_000)]
    pairs: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Print the distinct distances instead of the bins.
    #[arg(long)]
    support: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetName {
    Bp,
    TranscoderLayer,
    TranscoderEmbedding,
    TranscoderEncoder,
    TranscoderDecoder,
    CrossmptLayer,
    CrossmptEmbedding,
    CrossmptDecoder,
    EcctLayer,
    EcctEmbedding,
    EcctDecoder,
    All,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, value_enum)]
    target: TargetName,
    #[command(flatten)]
    code: CodeArg,
    #[arg(long, default_value_t = 1)]
    iters: u64,
    /// Block size; defaults to 3 below n = 200 and 4 otherwise.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 128)]
    d_cm: u64,
    #[arg(long, default_value_t = 8)]
    heads: u64,
}

fn workers(cli: &Cli) -> usize {
    cli.threads
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn print_records(records: &[EvalRecord]) {
    println!("pipeline,code,ebn0_db,frames,bit_errors,block_errors,ber,bler,minus_ln_bler,bler_se");
    for r in records {
        println!(
            "{},{},{},{},{},{},{:.6e},{:.6e},{:.4},{:.3e}",
            r.pipeline, r.code, r.ebn0_db, r.frames, r.bit_errors, r.block_errors, r.ber, r.bler, r.minus_ln_bler, r.bler_se
        );
    }
}

fn save_records(cli: &Cli, records: &[EvalRecord], config: serde_json::Value) -> Result<()> {
    if let Some(out) = &cli.out {
        write_results(records, out, Some(&config)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn codeinfo(a: &CodeArg) -> Result<()> {
    let code = a.load()?;
    let h = code.parity();
    let range = |w: Vec<usize>| (w.iter().copied().min().unwrap_or(0), w.iter().copied().max().unwrap_or(0));
    println!("name        {}", code.name());
    println!("n           {}", code.n());
    println!("k           {}", code.k());
    println!("rate        {:.4}", code.rate());
    println!("H rows      {} (rank {})", h.rows(), h.rank());
    println!("edges       {}", code.graph().num_edges());
    println!("row weight  {:?}", range(h.row_weights()));
    println!("col weight  {:?}", range(h.col_weights()));
    if let Some(spec) = code.polar_spec() {
        println!("info set    {:?}", spec.info());
    }
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let code = a.code.load()?;
    let pipe = PipelineConfig::plain(a.decoder.kind());
    let opts = a.stop.options(cli)?;
    let records = monte_carlo(&code, None, &pipe, &a.stop.ebn0, &opts)?;
    print_records(&records);
    save_records(
        cli,
        &records,
        serde_json::json!({
            "command": "simulate",
            "code": code.name(),
            "pipeline": pipe.id(),
            "stop": {"min_errors": opts.stop.min_errors, "min_frames": opts.stop.min_frames, "max_frames": opts.stop.max_frames},
            "chunk": opts.chunk,
            "seed": cli.seed,
        }),
    )
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = cli.out.as_deref().context("`train` needs --out <checkpoint.json>")?;
    let code = a.code.load()?;
    let decoder = match a.decoder {
        DecoderName::Bp => SoftDecoder::Bp { variant_min_sum: false },
        DecoderName::Minsum => SoftDecoder::Bp { variant_min_sum: true },
        DecoderName::Sc => SoftDecoder::Sc,
        DecoderName::Scl => bail!("the list decoder has no differentiable form; use bp, minsum or sc"),
    };
    let mut model = match &a.init {
        Some(path) => TransCoder::load(path)?,
        None => TransCoder::new(ModelConfig {
            m: a.m,
            d_model: a.d_model,
            n_heads: a.heads,
            d_khead: a.d_model / a.heads.max(1),
            enc_layers: a.enc_layers,
            dec_layers: a.dec_layers,
            precision: match a.precision {
                PrecisionName::F32 => Precision::F32,
                PrecisionName::F64 => Precision::F64,
            },
            seed: cli.seed,
            ..ModelConfig::standard(code.n())
        })?,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batches_per_epoch: a.batches_per_epoch,
        batch_size: a.batch,
        lr: a.lr,
        snr_db: (a.snr[0], a.snr[1]),
        runs: a.runs,
        iters_per_run: a.iters_per_run,
        decoder,
        loss: a.loss,
        modules: a.modules,
        seed: cli.seed,
        validation_frames: a.validation_frames,
        ..TrainConfig::default()
    };
    let every = (a.epochs / 20).max(1);
    let trace = train(&mut model, &code, &cfg, |r| {
        if (r.epoch + 1) % every == 0 {
            eprintln!("epoch {:>6}  lr {:.2e}  loss {:.5}", r.epoch + 1, r.lr, r.mean_loss);
        }
    })?;
    model.save(out).with_context(|| format!("writing {}", out.display()))?;
    let trace_path = a.trace.clone().unwrap_or_else(|| out.with_extension("trace.csv"));
    write_trace_csv(&trace_path, &trace)?;
    println!("{}", out.display());
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let code = a.code.load()?;
    let model = TransCoder::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let pipe = PipelineConfig {
        modules: a.modules,
        decoder: a.decoder.kind(),
        runs: a.runs,
        calibration_frames: a.calibration_frames,
    };
    let opts = a.stop.options(cli)?;
    let records = monte_carlo(&code, Some(&model), &pipe, &a.stop.ebn0, &opts)?;
    print_records(&records);
    save_records(
        cli,
        &records,
        serde_json::json!({
            "command": "eval",
            "code": code.name(),
            "pipeline": pipe.id(),
            "checkpoint": a.checkpoint,
            "model": model.config(),
            "calibration_frames": a.calibration_frames,
            "stop": {"min_errors": opts.stop.min_errors, "min_frames": opts.stop.min_frames, "max_frames": opts.stop.max_frames},
            "chunk": opts.chunk,
            "seed": cli.seed,
        }),
    )
}

fn histogram(cli: &Cli, a: &HistogramArgs) -> Result<()> {
    let code = a.code.load()?;
    let model;
    let mapper = match a.mapper {
        MapperName::Bpsk => Mapper::Bpsk,
        MapperName::Encoder => {
            let path = a.checkpoint.as_deref().context("`--mapper encoder` needs --checkpoint")?;
            let sigma = sigma_from_ebn0(a.ebn0, code.rate());
            let mut m = TransCoder::load(path)?;
            m.calibrate(&code, sigma, 10_000, cli.seed)?;
            model = m;
            Mapper::Encoder { model: &model, sigma }
        }
    };
    let h = distance_histogram(&code, mapper, a.pairs, a.bins, cli.seed)?;
    let mut text = String::new();
    if a.support {
        text.push_str("distance\n");
        for d in h.support(1e-9) {
            text.push_str(&format!("{d:.12}\n"));
        }
    } else {
        text.push_str("bin_lo,bin_hi,count\n");
        let edges = h.bin_edges();
        for (i, c) in h.counts.iter().enumerate() {
            text.push_str(&format!("{:.4},{:.4},{}\n", edges[i], edges[i + 1], c));
        }
    }
    emit(cli.out.as_deref(), &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn flops(cli: &Cli, a: &FlopsArgs) -> Result<()> {
    let code = a.code.load()?;
    let m = a.m.unwrap_or(if code.n() < 200 { 3 } else { 4 });
    let p = FlopParams {
        d_cm: a.d_cm,
        heads: a.heads,
        ..FlopParams::for_code(&code, m, a.d_model)
    };
    let target = match a.target {
        TargetName::Bp => FlopTarget::Bp { iterations: a.iters },
        TargetName::TranscoderLayer => FlopTarget::TranscoderLayer,
        TargetName::TranscoderEmbedding => FlopTarget::TranscoderEmbedding,
        TargetName::TranscoderEncoder => FlopTarget::TranscoderEncoder,
        TargetName::TranscoderDecoder => FlopTarget::TranscoderDecoder,
        TargetName::CrossmptLayer => FlopTarget::CrossMptLayer,
        TargetName::CrossmptEmbedding => FlopTarget::CrossMptEmbedding,
        TargetName::CrossmptDecoder => FlopTarget::CrossMptDecoder,
        TargetName::EcctLayer => FlopTarget::EcctLayer,
        TargetName::EcctEmbedding => FlopTarget::EcctEmbedding,
        TargetName::EcctDecoder => FlopTarget::EcctDecoder,
        TargetName::All => {
            let mut text = String::from("target,count,compact\n");
            for t in FlopTarget::TABLE {
                let c = flop_estimate(t, &p);
                text.push_str(&format!("{},{},{}\n", t.label(), c, compact(c)));
            }
            return emit(cli.out.as_deref(), &text);
        }
    };
    emit(cli.out.as_deref(), &format!("{}\n", flop_estimate(target, &p)))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Codeinfo(a) => codeinfo(a),
        Cmd::Simulate(a) => simulate(cli, a),
        Cmd::Train(a) => train_cmd(cli, a),
        Cmd::Eval(a) => eval_cmd(cli, a),
        Cmd::Histogram(a) => histogram(cli, a),
        Cmd::Flops(a) => flops(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
