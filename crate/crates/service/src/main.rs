use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecg_agent::agent::{Backend, ChatBackend, RulePolicyBackend, Session, ToolContext};
use ecg_agent::classify::{filter_registry, Classifier, RuleClassifier};
use ecg_agent::dialogue::{serialize_dialogue, AgentPayload, DialogueTurn, UserAction};
use ecg_agent::explain::{explain, ExplainConfig};
use ecg_agent::measure::measure_record;
use ecg_agent::mtd::{
    build_corpus, resolve_record_ref, write_corpus, CorpusConfig, CorpusSize, DialogueGenerator, LlmGenerator,
    TemplatedGenerator, ToolCache,
};
use ecg_agent::signal::{
    load_record, select_leads, synthesize_with, write_record, BeatKind, EcgRecord, LeadConfig, LoadOptions,
    PrematureBeat, RecordFormat, SynthParams,
};
use ecg_agent::tool::ToolStatus;
use ecg_agent_service::config::{BackendKind, Config, JudgeKind};
use ecg_agent_service::runner::{run_eval, AgentChoice, EvalRequest, ModeChoice};
use ecg_agent_service::{backend_factory, serve, AppState};

/// ECG dialogue agent: signal tools, live sessions, corpus synthesis and evaluation.
#[derive(Debug, Parser)]
#[command(name = "ecg-agent", version, about)]
struct Cli {
    /// TOML config file. Flags given on the command line win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Talk to the agent about a record in the terminal.
    Chat(ChatArgs),
    /// Heart rate, intervals and ST level of a record.
    Measure(MeasureArgs),
    /// Multi-label diagnostic classification of a record.
    Classify(ClassifyArgs),
    /// Where in time (and frequency) a class shows up in a single-lead record.
    Explain(ExplainArgs),
    /// Write a synthetic ECG with known landmarks.
    SynthEcg(SynthEcgArgs),
    /// Generate, filter and split a dialogue corpus.
    SynthMtd(SynthMtdArgs),
    /// Score an agent on a corpus.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RecordArgs {
    /// A record file (.csv, .hea) or a `synth:` reference.
    record: String,
    /// File format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<RecordFormat>,
    /// Sampling rate for CSV files without a sidecar.
    #[arg(long)]
    sampling_rate: Option<f64>,
    /// Project the record onto these leads first.
    #[arg(long)]
    lead: Option<LeadConfig>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[command(flatten)]
    input: RecordArgs,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    input: RecordArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: RecordArgs,
    /// Class code to explain, e.g. PVC.
    #[arg(long = "class")]
    class_code: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ChatArgs {
    #[command(flatten)]
    input: RecordArgs,
    /// Overrides `backend.kind` from the config.
    #[arg(long, value_parser = ["rule-policy", "chat"])]
    backend: Option<String>,
    /// Print each agent turn's thought and full tool outputs.
    #[arg(long)]
    thoughts: bool,
    /// Write the transcript as dialogue JSON when the session ends.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthEcgArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    hr: f64,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 500.0)]
    fs: f64,
    /// Gaussian noise standard deviation in mV.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "lead_ii")]
    lead: LeadConfig,
    #[arg(long)]
    no_p_wave: bool,
    /// ST level shift in mV; negative depresses the segment.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    st_offset: f64,
    /// RR variation as a fraction of RR.
    #[arg(long, default_value_t = 0.0)]
    rr_jitter: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude_scale: f64,
    /// Early beat as KIND:INDEX[:COUPLING], KIND atrial or ventricular. Repeatable.
    #[arg(long, value_parser = parse_premature)]
    premature: Vec<PrematureBeat>,
    #[arg(long)]
    format: Option<RecordFormat>,
    /// Also write the ground-truth landmarks as JSON.
    #[arg(long)]
    fiducials: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "size")]
struct SizeArgs {
    /// Number of uniformly drawn scenarios.
    #[arg(long, group = "size")]
    n: Option<usize>,
    /// Every scenario once.
    #[arg(long, group = "size")]
    sweep: bool,
}

#[derive(Debug, Args)]
struct SynthMtdArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long, default_value = "lead_ii")]
    lead: LeadConfig,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `llm` rewrites text through the configured chat backend.
    #[arg(long, default_value = "templated", value_parser = ["templated", "llm"])]
    generator: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Corpus directory (test split) or a dialogues JSONL file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "rule-policy")]
    agent: AgentChoice,
    /// Overrides `judge.kind` from the config.
    #[arg(long, value_parser = ["rule", "llm"])]
    judge: Option<String>,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report tables as Markdown.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// 0 picks a free port; the bound address is printed.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    debug_trace: bool,
}

type CliResult = Result<(), String>;

fn parse_premature(s: &str) -> Result<PrematureBeat, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected KIND:INDEX[:COUPLING], got `{s}`"));
    }
    let kind = match parts[0] {
        "atrial" | "pac" => BeatKind::Atrial,
        "ventricular" | "pvc" => BeatKind::Ventricular,
        other => return Err(format!("unknown beat kind `{other}`")),
    };
    let beat_index = parts[1].parse().map_err(|e| format!("beat index: {e}"))?;
    let coupling = match parts.get(2) {
        Some(c) => c.parse().map_err(|e| format!("coupling: {e}"))?,
        None if kind == BeatKind::Ventricular => 0.6,
        None => 0.7,
    };
    Ok(PrematureBeat { beat_index, kind, coupling })
}

fn load_input(a: &RecordArgs) -> Result<EcgRecord, String> {
    let opts = LoadOptions { sampling_rate_hz: a.sampling_rate, record_id: None };
    let record = if a.record.starts_with("synth:") {
        resolve_record_ref(&a.record, &opts).map_err(|e| e.to_string())?
    } else {
        let path = Path::new(&a.record);
        let format = a
            .format
            .or_else(|| RecordFormat::from_path(path))
            .ok_or_else(|| format!("cannot tell the format of `{}`; pass --format", path.display()))?;
        load_record(path, format, &opts).map_err(|e| e.to_string())?
    };
    match a.lead {
        Some(l) if l != record.lead_config() => select_leads(&record, l).map_err(|e| e.to_string()),
        _ => Ok(record),
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    // a closed pipe (`| head`) is not an error
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

fn tools_for(record: EcgRecord, config: &Config) -> Result<ToolContext, String> {
    let registry = filter_registry(&config.registry().map_err(|e| e.to_string())?, record.lead_config());
    Ok(ToolContext { registry, ..ToolContext::with_defaults(record) })
}

fn measure(a: MeasureArgs) -> CliResult {
    let record = load_input(&a.input)?;
    let report = measure_record(&record).map_err(|e| format!("measurement failed: {e}"))?;
    if a.json {
        print_json(&report);
    } else {
        let ms = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.1}"));
        println!("lead: {}", report.lead.as_deref().unwrap_or("?"));
        println!("beats: {}", report.beat_count);
        println!("heart rate (bpm): {}", ms(report.heart_rate_bpm));
        println!("RR mean/std (ms): {} / {}", ms(report.rr_mean_ms), ms(report.rr_std_ms));
        println!("PR (ms): {}", ms(report.pr_interval_ms));
        println!("QRS (ms): {}", ms(report.qrs_duration_ms));
        println!("QT / QTc (ms): {} / {}", ms(report.qt_interval_ms), ms(report.qtc_interval_ms));
        println!("ST (mV): {}", report.st_level_mv.map_or("n/a".into(), |x| format!("{x:.3}")));
    }
    if report.heart_rate_bpm.is_none() {
        return Err("no heart rate could be measured".into());
    }
    Ok(())
}

fn classify(a: ClassifyArgs, config: &Config) -> CliResult {
    let record = load_input(&a.input)?;
    let ctx = tools_for(record, config)?;
    let out = RuleClassifier::default().classify(&ctx.record, &ctx.registry);
    if a.json {
        print_json(&out);
    } else {
        println!("predicted: {}", out.predicted.iter().cloned().collect::<Vec<_>>().join(", "));
        for (code, score) in &out.scores {
            println!("{code:>6}  {score:.3}");
        }
    }
    match &out.status {
        ToolStatus::Valid => Ok(()),
        ToolStatus::Invalid(r) => Err(format!("classification invalid: {r}")),
    }
}

fn explain_cmd(a: ExplainArgs, config: &Config) -> CliResult {
    let record = load_input(&a.input)?;
    let ctx = tools_for(record, config)?;
    let out = explain(&ctx.record, &a.class_code, ctx.classifier.as_ref(), &ctx.registry, &ExplainConfig::default())
        .map_err(|e| e.to_string())?;
    if a.json {
        print_json(&out);
    } else {
        println!("class: {}", out.class_code);
        for i in &out.intervals {
            println!("{:8.3} s - {:8.3} s  saliency {:.3}", i.start_s, i.end_s, i.saliency);
        }
        if let Some((lo, hi)) = out.frequency_band_hz {
            println!("band: {lo:.1}-{hi:.1} Hz");
        }
    }
    match &out.status {
        ToolStatus::Valid => Ok(()),
        ToolStatus::Invalid(r) => Err(format!("explanation invalid: {r}")),
    }
}

fn synth_ecg(a: SynthEcgArgs) -> CliResult {
    let params = SynthParams {
        heart_rate_bpm: a.hr,
        duration_s: a.duration,
        sampling_rate_hz: a.fs,
        noise_amplitude_mv: a.noise,
        seed: a.seed,
        lead_config: a.lead,
        p_wave: !a.no_p_wave,
        st_offset_mv: a.st_offset,
        rr_jitter: a.rr_jitter,
        premature: a.premature,
        amplitude_scale: a.amplitude_scale,
    };
    let (record, truth) = synthesize_with(&params).map_err(|e| e.to_string())?;
    let format = a.format.or_else(|| RecordFormat::from_path(&a.out)).unwrap_or(RecordFormat::Csv);
    write_record(&record, &a.out, format).map_err(|e| e.to_string())?;
    if format == RecordFormat::Csv {
        let meta = serde_json::json!({ "sampling_rate_hz": record.sampling_rate_hz(), "record_id": record.record_id() });
        std::fs::write(ecg_agent::signal::sidecar_path(&a.out), meta.to_string()).map_err(|e| e.to_string())?;
    }
    if let Some(p) = a.fiducials {
        let text = serde_json::to_string_pretty(&truth).map_err(|e| e.to_string())? + "\n";
        std::fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    println!("wrote {} ({} samples x {} leads)", a.out.display(), record.len(), record.leads().len());
    Ok(())
}

fn synth_mtd(a: SynthMtdArgs, config: &Config) -> CliResult {
    let generator: Box<dyn DialogueGenerator> = match a.generator.as_str() {
        "llm" => Box::new(LlmGenerator::new(config.chat_backend().map_err(|e| e.to_string())?)),
        _ => Box::new(TemplatedGenerator),
    };
    let size = match a.size.n {
        Some(n) => CorpusSize::Sample(n),
        None => CorpusSize::Sweep,
    };
    let cc = CorpusConfig { lead_config: a.lead, seed: a.seed, size };
    let corpus = build_corpus(&cc, generator.as_ref(), &ToolCache::new()).map_err(|e| e.to_string())?;
    write_corpus(&corpus, &a.out).map_err(|e| e.to_string())?;
    let s = &corpus.stats;
    let splits = s.splits.as_ref().map_or("none (too few dialogues)".to_string(), |x| format!("{}/{}/{}", x.train, x.val, x.test));
    println!("{} generated, {} kept, {} dropped; splits {splits}; wrote {}", s.generated, s.kept, corpus.rejections.len(), a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs, config: &Config) -> CliResult {
    let judge = match a.judge.as_deref() {
        Some("llm") => JudgeKind::Llm,
        Some(_) => JudgeKind::Rule,
        None => config.judge.kind,
    };
    let request = EvalRequest {
        dataset: Some(a.dataset),
        dialogues: None,
        agent: a.agent,
        judge: Some(judge),
        mode: a.mode,
        seed: a.seed,
    };
    let report = run_eval(&request, config).map_err(|e| e.to_string())?;
    std::fs::write(&a.out, report.to_json()).map_err(|e| format!("{}: {e}", a.out.display()))?;
    if let Some(p) = a.markdown {
        std::fs::write(&p, report.to_markdown()).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    for (lead, r) in &report.per_lead {
        let show = |m: &ecg_agent::eval::Metric| m.get().map_or("n/a".to_string(), |v| format!("{v:.2}"));
        println!(
            "{lead}: NAP with GT {} / without GT {}, faithfulness {}",
            show(&r.nap_with_gt),
            show(&r.nap_without_gt),
            show(&r.faithfulness_pct)
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn print_turn(turn: &DialogueTurn, thoughts: bool) {
    if let DialogueTurn::Agent { action, thought, payload } = turn {
        if thoughts {
            println!("  ({thought})");
        }
        match payload {
            AgentPayload::Content(text) => println!("[{action}] {text}"),
            AgentPayload::Tool { output, .. } if thoughts => {
                println!("[{action}] {}", serde_json::to_string(output).expect("tool output serializes"))
            }
            AgentPayload::Tool { output, .. } => match output.status() {
                ToolStatus::Valid => println!("[{action}] valid"),
                ToolStatus::Invalid(r) => println!("[{action}] invalid: {r}"),
            },
        }
    }
}

fn chat(a: ChatArgs, config: &Config) -> CliResult {
    let record = load_input(&a.input)?;
    let record_ref = a.input.record.clone();
    let kind = match a.backend.as_deref() {
        Some("chat") => BackendKind::Chat,
        Some(_) => BackendKind::RulePolicy,
        None => config.backend.kind,
    };
    let mut backend: Box<dyn Backend> = match kind {
        BackendKind::RulePolicy => Box::new(RulePolicyBackend),
        BackendKind::Chat => Box::new(ChatBackend::new(config.chat_backend().map_err(|e| e.to_string())?)),
    };
    let mut session = Session::new("chat", record_ref, tools_for(record, config)?, config.session_config());
    eprintln!("Type a question. `/follow <text>` asks a follow-up, `/bye` ends the session.");
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    while !session.is_terminal() {
        eprint!("> ");
        let _ = std::io::stderr().flush();
        let Some(line) = lines.next() else { break };
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let turn = if let Some(rest) = line.strip_prefix("/follow") {
            DialogueTurn::user(UserAction::RequestFollowUp, rest.trim())
        } else if let Some(rest) = line.strip_prefix("/bye") {
            let text = if rest.trim().is_empty() { "Bye." } else { rest.trim() };
            DialogueTurn::user(UserAction::UserBye, text)
        } else {
            DialogueTurn::user(UserAction::EcgInquiry, line)
        };
        match session.run_turn(backend.as_mut(), turn) {
            Ok(turns) => turns.iter().for_each(|t| print_turn(t, a.thoughts)),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    if let Some(p) = a.transcript {
        let mut bytes = serialize_dialogue(session.transcript());
        bytes.push(b'\n');
        std::fs::write(&p, bytes).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs, mut config: Config) -> CliResult {
    if let Some(p) = a.port {
        config.server.port = p;
    }
    if let Some(b) = a.bind {
        config.server.bind = b;
    }
    if let Some(d) = a.data_dir {
        config.server.data_dir = d;
    }
    config.server.debug_trace |= a.debug_trace;
    let factory = backend_factory(&config).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let addr = format!("{}:{}", config.server.bind, config.server.port);
        let app = AppState::open(config, factory).map_err(|e| e.to_string())?;
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| format!("{addr}: {e}"))?;
        let bound = listener.local_addr().map_err(|e| e.to_string())?;
        println!("listening on http://{bound}");
        println!("port {}", bound.port());
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, app, shutdown).await.map_err(|e| e.to_string())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let config = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Command::Chat(a) => chat(a, &config),
        Command::Measure(a) => measure(a),
        Command::Classify(a) => classify(a, &config),
        Command::Explain(a) => explain_cmd(a, &config),
        Command::SynthEcg(a) => synth_ecg(a),
        Command::SynthMtd(a) => synth_mtd(a, &config),
        Command::Eval(a) => eval_cmd(a, &config),
        Command::Serve(a) => serve_cmd(a, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
