mod report;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stepguard_core::verifier::AuditLog;
use stepguard_core::{
    analyze_corpus, attack_surface, diff_policies, AccessLevel, EndpointMap, KnowledgeBase, LoadOptions, Mode,
    PermissionSet, Provenance, Verifier, VerifyOptions,
};
use stepguard_net::{
    run_proxy, serve, CertificateAuthority, FlowLog, ProxyConfig, ServiceConfig, Upstream, VerifierClient,
    VerifierEndpoint,
};

#[derive(Parser)]
#[command(name = "stepguard", version, about = "Step-level permission analysis and enforcement for CI workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report overprivileged jobs across a workflow corpus.
    Analyze(AnalyzeArgs),
    /// Compare static policies with learned ones.
    Diff(DiffArgs),
    /// Attack-surface reduction for each multi-step job.
    Surface(SurfaceArgs),
    /// Run the verifier HTTP service.
    Serve(ServeArgs),
    /// Run the intercepting proxy.
    Proxy(ProxyArgs),
    /// Generate a CA for TLS interception.
    Ca(CaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefaultPermissions {
    Write,
    Read,
    None,
}

impl DefaultPermissions {
    fn set(self) -> PermissionSet {
        PermissionSet::uniform(match self {
            DefaultPermissions::Write => AccessLevel::Write,
            DefaultPermissions::Read => AccessLevel::Read,
            DefaultPermissions::None => AccessLevel::None,
        })
    }
}

#[derive(clap::Args)]
struct KnowledgeArgs {
    /// Policy directory or consolidated JSON document.
    #[arg(long)]
    knowledge: PathBuf,
    /// Accept bare level tokens and trailing commas in policy files.
    #[arg(long)]
    lenient: bool,
}

impl KnowledgeArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions { lenient: self.lenient }
    }

    fn load(&self) -> Result<KnowledgeBase> {
        load_kb(&self.knowledge, self.options())
    }
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    workflows: PathBuf,
    #[command(flatten)]
    kb: KnowledgeArgs,
    /// Permissions assumed for jobs without a permissions block.
    #[arg(long, value_enum, default_value = "write")]
    default_permissions: DefaultPermissions,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(clap::Args)]
struct DiffArgs {
    #[arg(long = "static")]
    static_kb: PathBuf,
    #[arg(long)]
    learned: PathBuf,
    #[arg(long)]
    lenient: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(clap::Args)]
struct SurfaceArgs {
    #[arg(long)]
    workflows: PathBuf,
    #[command(flatten)]
    kb: KnowledgeArgs,
    /// Learned policies used for each step's own requirement.
    #[arg(long)]
    learned: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: SocketAddr,
    #[command(flatten)]
    kb: KnowledgeArgs,
    #[arg(long, default_value = "enforce")]
    mode: Mode,
    /// Allow requests to endpoints missing from the endpoint map.
    #[arg(long)]
    allow_unknown: bool,
    /// Endpoint map replacing the built-in one.
    #[arg(long)]
    endpoint_map: Option<PathBuf>,
    /// Append every decision here as JSON lines.
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Where learned policies are written on shutdown; defaults to the
    /// knowledge directory.
    #[arg(long)]
    learned_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ProxyArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Host whose traffic is checked; repeatable.
    #[arg(long = "api-host", default_value = "api.github.com")]
    api_hosts: Vec<String>,
    /// `live`, or a host:port that receives allowed API requests over plain HTTP.
    #[arg(long, default_value = "live")]
    upstream: String,
    #[arg(long, requires = "ca_key")]
    ca_cert: Option<PathBuf>,
    #[arg(long, requires = "ca_cert")]
    ca_key: Option<PathBuf>,
    /// Verifier service address. Without it the proxy runs a verifier in process.
    #[arg(long, conflicts_with_all = ["knowledge", "allow_unknown", "learned_dir"])]
    verifier: Option<String>,
    /// Knowledge for the in-process verifier.
    #[arg(long, required_unless_present = "verifier")]
    knowledge: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    allow_unknown: bool,
    #[arg(long)]
    learned_dir: Option<PathBuf>,
    /// Attribute every flow to this action.
    #[arg(long)]
    action_id: Option<String>,
    #[arg(long, default_value = "x-stepguard-action")]
    attribution_header: String,
    /// Mode the verifier must run in.
    #[arg(long, default_value = "enforce")]
    mode: Mode,
    /// Flow records as JSON lines; `-` for stdout.
    #[arg(long)]
    flow_log: Option<PathBuf>,
    /// Seconds to wait for open flows on shutdown.
    #[arg(long, default_value_t = 5)]
    grace: u64,
}

#[derive(clap::Args)]
struct CaArgs {
    #[arg(long)]
    cert: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value = "stepguard interception CA")]
    common_name: String,
}

fn load_kb(path: &Path, options: LoadOptions) -> Result<KnowledgeBase> {
    KnowledgeBase::load_path(path, options).with_context(|| format!("loading policies from {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let kb = args.kb.load()?;
    if !args.workflows.is_dir() {
        bail!("{} is not a directory", args.workflows.display());
    }
    let report = analyze_corpus(&args.workflows, &kb);
    match args.format {
        Format::Json => print_json(&report)?,
        Format::Table => print!("{}", report::corpus_table(&report, &args.default_permissions.set())),
    }
    Ok(if report.critical_findings() > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn diff(args: DiffArgs) -> Result<ExitCode> {
    let options = LoadOptions { lenient: args.lenient };
    let diff = diff_policies(&load_kb(&args.static_kb, options)?, &load_kb(&args.learned, options)?);
    match args.format {
        Format::Json => print_json(&diff)?,
        Format::Table => print!("{}", report::diff_table(&diff)),
    }
    Ok(ExitCode::SUCCESS)
}

fn surface(args: SurfaceArgs) -> Result<ExitCode> {
    let kb = args.kb.load()?;
    let learned = args.learned.as_deref().map(|p| load_kb(p, args.kb.options())).transpose()?;
    let report = analyze_corpus(&args.workflows, &kb);
    let rows: Vec<_> = report
        .jobs
        .iter()
        .filter(|j| j.covered_steps >= 2)
        .map(|j| attack_surface(j, learned.as_ref()))
        .collect();
    match args.format {
        Format::Json => print_json(&rows)?,
        Format::Table => print!("{}", report::surface_table(&rows)),
    }
    Ok(ExitCode::SUCCESS)
}

fn endpoint_map(path: Option<&Path>) -> Result<EndpointMap> {
    match path {
        None => Ok(EndpointMap::seed()),
        Some(path) => {
            let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            EndpointMap::load(&source).with_context(|| format!("loading endpoint map {}", path.display()))
        }
    }
}

fn build_verifier(
    kb_path: &Path,
    options: LoadOptions,
    mode: Mode,
    allow_unknown: bool,
    map: EndpointMap,
    audit_log: Option<&Path>,
) -> Result<Verifier> {
    let kb = if mode == Mode::Learning && !kb_path.exists() {
        KnowledgeBase::new(Provenance::RuntimeLearned)
    } else {
        load_kb(kb_path, options)?
    };
    let mut verifier = Verifier::new(kb, map, VerifyOptions { mode, allow_unknown });
    if let Some(path) = audit_log {
        let audit = AuditLog::open(path).with_context(|| format!("opening audit log {}", path.display()))?;
        verifier = verifier.with_audit(audit);
    }
    Ok(verifier)
}

fn learned_dir(explicit: Option<PathBuf>, knowledge: &Path, mode: Mode) -> Option<PathBuf> {
    match mode {
        Mode::Learning => explicit.or_else(|| (!knowledge.is_file()).then(|| knowledge.to_path_buf())),
        Mode::Enforcement => None,
    }
}

async fn shutdown_signal() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot listen for ctrl-c");
        std::future::pending::<()>().await;
    }
}

async fn run_serve(args: ServeArgs) -> Result<ExitCode> {
    let verifier = build_verifier(
        &args.kb.knowledge,
        args.kb.options(),
        args.mode,
        args.allow_unknown,
        endpoint_map(args.endpoint_map.as_deref())?,
        args.audit_log.as_deref(),
    )?;
    let config = ServiceConfig {
        knowledge: Some(args.kb.knowledge.clone()),
        load_options: args.kb.options(),
        learned_dir: learned_dir(args.learned_dir, &args.kb.knowledge, args.mode),
    };
    let handle = serve(args.listen, Arc::new(verifier), config).await?;
    eprintln!("verifier listening on {} ({} mode)", handle.url(), args.mode);
    shutdown_signal().await;
    for path in handle.shutdown().await? {
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

async fn run_proxy_command(args: ProxyArgs) -> Result<ExitCode> {
    let (endpoint, local, learned) = match (&args.verifier, &args.knowledge) {
        (Some(addr), _) => (VerifierEndpoint::Remote(VerifierClient::new(addr)?), None, None),
        (None, Some(kb)) => {
            let verifier = Arc::new(build_verifier(
                kb,
                LoadOptions { lenient: args.lenient },
                args.mode,
                args.allow_unknown,
                EndpointMap::seed().with_api_hosts(args.api_hosts.iter().cloned()),
                None,
            )?);
            let learned = learned_dir(args.learned_dir.clone(), kb, args.mode);
            (VerifierEndpoint::Local(verifier.clone()), Some(verifier), learned)
        }
        (None, None) => bail!("either --verifier or --knowledge is required"),
    };

    let mut config = ProxyConfig::new(args.listen, endpoint);
    config.api_hosts = args.api_hosts;
    config.upstream = match args.upstream.as_str() {
        "live" => Upstream::Live,
        other => Upstream::Fixed(
            tokio::net::lookup_host(other)
                .await
                .with_context(|| format!("resolving upstream {other}"))?
                .next()
                .with_context(|| format!("upstream {other} has no address"))?,
        ),
    };
    if let (Some(cert), Some(key)) = (&args.ca_cert, &args.ca_key) {
        config.ca = Some(Arc::new(CertificateAuthority::load(cert, key)?));
    }
    config.action_id = args.action_id;
    config.attribution_header = args
        .attribution_header
        .parse()
        .with_context(|| format!("invalid header name `{}`", args.attribution_header))?;
    config.expected_mode = Some(args.mode);
    config.grace = Duration::from_secs(args.grace);
    config.flows = Arc::new(match args.flow_log.as_deref() {
        None => FlowLog::disabled(),
        Some(p) if p == Path::new("-") => FlowLog::to_writer(std::io::stdout()),
        Some(p) => FlowLog::open(p).with_context(|| format!("opening flow log {}", p.display()))?,
    });

    let handle = run_proxy(config).await?;
    eprintln!("proxy listening on {} ({} mode)", handle.addr(), args.mode);
    shutdown_signal().await;
    if !handle.shutdown().await {
        eprintln!("grace period elapsed with flows still open");
    }
    if let (Some(verifier), Some(dir)) = (local, learned) {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for path in verifier.flush_learned(&dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ca(args: CaArgs) -> Result<ExitCode> {
    let ca = CertificateAuthority::generate(&args.common_name)?;
    ca.save(&args.cert, &args.key)?;
    eprintln!("wrote {} and {}", args.cert.display(), args.key.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("STEPGUARD_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Analyze(args) => analyze(args),
        Command::Diff(args) => diff(args),
        Command::Surface(args) => surface(args),
        Command::Ca(args) => ca(args),
        Command::Serve(args) => runtime()?.block_on(run_serve(args)),
        Command::Proxy(args) => runtime()?.block_on(run_proxy_command(args)),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
