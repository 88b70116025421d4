use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use notana_core::backend::ScriptedInterpreter;
use notana_core::pipeline::{infer_motions, PipelineConfig};
use notana_core::raster::Raster;
use notana_gateway::GatewayConfig;
use notana_service::demo::{run_example, Example};
use notana_service::engine::FrameView;
use notana_service::{ApiError, Backends, Engine, ErrorCode};
use notana_store::Store;

#[derive(Parser)]
#[command(name = "notana", version, about = "Sketch notations in, keyframes out")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    /// Scripted interpreter and digest-stamping image mock.
    Mock,
    /// Recorded cassettes only; never opens a socket.
    Replay,
    /// Whatever the backend config file describes.
    Live,
}

#[derive(clap::Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendChoice,
    /// Cassette directory for `--backend replay`.
    #[arg(long, default_value = "cassettes")]
    cassette_dir: PathBuf,
    /// TOML file with [interpreter] and [image] tables for `--backend live`.
    #[arg(long)]
    backend_config: Option<PathBuf>,
    /// Example whose canned replies the mock interpreter returns.
    #[arg(long, value_enum, default_value = "run")]
    mock_example: Example,
}

impl BackendArgs {
    fn build(&self) -> anyhow::Result<Backends> {
        Ok(match self.backend {
            BackendChoice::Mock => Backends::mock(self.mock_example.mock_interpreter()),
            BackendChoice::Replay => Backends::replay(&self.cassette_dir)?,
            BackendChoice::Live => {
                let path = self
                    .backend_config
                    .as_ref()
                    .ok_or_else(|| ApiError::validation("--backend live needs --backend-config"))?;
                Backends::from_config(&GatewayConfig::load(path)?)?
            }
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "notana-data")]
        data_dir: PathBuf,
        /// Without one, the service starts degraded and backend calls fail.
        #[arg(long)]
        backend_config: Option<PathBuf>,
    },
    /// Interpret a drawing plus notation layer and write the structured result.
    Infer {
        #[arg(long)]
        drawing: PathBuf,
        #[arg(long)]
        notations: PathBuf,
        #[arg(long, default_value = "result.json")]
        out: PathBuf,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Generate keyframes for a stored, already inferred workspace.
    Generate {
        #[arg(long)]
        workspace_dir: PathBuf,
        /// Generate at most this many frames.
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Run a bundled example end to end with mocks and write result.json plus frames.
    Demo {
        #[arg(long, value_enum)]
        example: Example,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let api = match e.downcast_ref::<ApiError>() {
                Some(api) => api.clone(),
                None => ApiError::new(ErrorCode::Internal, format!("{e:#}")),
            };
            eprintln!("{}", api.to_json());
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve {
            port,
            host,
            data_dir,
            backend_config,
        } => serve(&host, port, data_dir, backend_config.as_deref()),
        Command::Infer {
            drawing,
            notations,
            out,
            backends,
        } => infer(&drawing, &notations, &out, &backends),
        Command::Generate {
            workspace_dir,
            frames,
            backends,
        } => generate(&workspace_dir, frames, &backends),
        Command::Demo { example, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(format!("demo-{}", example.name())));
            let report = run_example(example, &out)?;
            println!(
                "{}: {} frames, chain verified: {}, output in {}",
                example.name(),
                report.frames.len(),
                report.chain_verified,
                out.display()
            );
            Ok(())
        }
    }
}

fn read_png(path: &Path) -> anyhow::Result<Raster> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Raster::decode_png(&bytes).map_err(ApiError::from)?)
}

fn infer(drawing: &Path, notations: &Path, out: &Path, args: &BackendArgs) -> anyhow::Result<()> {
    let drawing = read_png(drawing)?;
    let notations = read_png(notations)?;
    let backends = match args.backend {
        // Interpretation only needs the interpretation reply.
        BackendChoice::Mock => Backends::mock(ScriptedInterpreter::always([args.mock_example.interpretation_reply()])),
        _ => args.build()?,
    };
    let inference = infer_motions(&drawing, &notations, &*backends.interpreter, &PipelineConfig::default())
        .map_err(ApiError::from)?;
    fs::write(out, inference.result.to_pretty_json()).with_context(|| format!("writing {}", out.display()))?;
    println!("{} units written to {}", inference.result.units.len(), out.display());
    Ok(())
}

fn generate(workspace_dir: &Path, frames: Option<usize>, args: &BackendArgs) -> anyhow::Result<()> {
    let id = workspace_dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow!("cannot take a workspace id from {}", workspace_dir.display()))?
        .to_string();
    let root = workspace_dir.parent().unwrap_or(Path::new("."));
    let engine = Engine::new(Store::open(root)?, args.build()?);
    let ticket = engine.begin_generation(&id)?;
    let records = engine.generate(&ticket, frames, &mut |r| {
        eprintln!("frame {} {:?}", r.index, r.status);
    })?;
    let views: Vec<FrameView> = records.iter().map(|r| FrameView::of(&id, r)).collect();
    println!("{}", serde_json::to_string_pretty(&views)?);
    Ok(())
}

fn serve(host: &str, port: u16, data_dir: PathBuf, backend_config: Option<&Path>) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let backends = match backend_config {
        Some(path) => Backends::from_config(&GatewayConfig::load(path)?)?,
        None => Backends::unconfigured(),
    };
    if backends.degraded() {
        tracing::warn!("starting with missing backends: {backends:?}");
    }
    let engine = Arc::new(Engine::new(Store::open(&data_dir)?, backends));
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, notana_service::router(engine))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
