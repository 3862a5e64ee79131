use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use futures::StreamExt;

use hanja_core::client::GatewayClient;
use hanja_core::batch::{collect_inputs, run_batch, BatchOptions, BatchTask};
use hanja_core::config::{Config, Platform};
use hanja_core::gateway::{self, AppState};
use hanja_core::persistence::Store;
use hanja_core::punctuation::RenderMode;
use hanja_core::translation::LanguageTag;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "hanja", version, about = "Punctuation, entity tagging and translation for Hanja documents")]
struct Cli {
    /// TOML configuration file. HANJA_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Backend name from the configuration.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Send requests to a running gateway instead of processing locally.
    #[arg(long, global = true, env = "HANJA_SERVER")]
    server: Option<String>,
    /// Session token for `--server`.
    #[arg(long, global = true, env = "HANJA_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Process files or directories of .txt files.
    Batch {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: punctuate, ner, translate.
        #[arg(long, value_delimiter = ',', default_value = "punctuate,ner,translate")]
        tasks: Vec<BatchTask>,
        /// Translation targets, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "korean")]
        target: Vec<LanguageTag>,
        #[arg(long, default_value = "comprehensive")]
        mode: RenderMode,
        /// Documents processed concurrently. Defaults to the processor count.
        #[arg(long)]
        jobs: Option<NonZeroUsize>,
    },
    /// Restore punctuation.
    Punctuate {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "comprehensive")]
        mode: RenderMode,
        /// Print the full result as JSON instead of the rendered text.
        #[arg(long)]
        json: bool,
    },
    /// Tag named entities (prints JSON).
    Ner {
        #[command(flatten)]
        input: Input,
    },
    /// Translate, printing output as it streams.
    Translate {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "korean")]
        target: LanguageTag,
    },
    /// Per-character readings, definitions and dictionary links (prints JSON).
    Glossary {
        #[command(flatten)]
        input: Input,
    },
    /// Log in to the gateway given by `--server` and print a session token.
    Login {
        #[arg(long)]
        email: String,
        #[arg(long, env = "HANJA_PASSWORD", hide_env_values = true)]
        password: String,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Input {
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
}

impl Input {
    fn read(&self) -> Result<String, String> {
        match (&self.text, &self.file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(path)) => std::fs::read_to_string(path)
                .map(|s| s.trim().to_string())
                .map_err(|e| format!("{}: {e}", path.display())),
            (None, None) => Err("no input".into()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, String> {
    match path {
        Some(p) => Config::load(p),
        None => Config::from_env(),
    }
    .map_err(|e| e.to_string())
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

/// Writes a line to stdout, ignoring a closed pipe.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn print_json<T: serde::Serialize>(value: &T) {
    emit(&serde_json::to_string_pretty(value).expect("output serializes"));
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("HANJA_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Some(server) = cli.server.clone() {
        return remote(server, cli).await;
    }
    if matches!(cli.command, Command::Login { .. }) {
        return fail(EXIT_CONFIG, "login needs --server");
    }

    let mut config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Command::Serve { bind: Some(bind) } = &cli.command {
        config.bind = bind.clone();
    }
    let platform = match Platform::from_config(&config) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let backend = cli.backend.as_deref();

    match cli.command {
        Command::Serve { .. } => serve(&config, platform).await,
        Command::Batch {
            inputs,
            out,
            tasks,
            target,
            mode,
            jobs,
        } => {
            let inputs = match collect_inputs(&inputs) {
                Ok(i) => i,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let options = BatchOptions {
                tasks,
                targets: target,
                mode,
                backend: cli.backend.clone(),
                jobs: jobs.unwrap_or_else(|| BatchOptions::default().jobs),
            };
            match run_batch(&platform, &inputs, &out, &options).await {
                Ok(summary) => {
                    emit(&format!("{} of {} files processed; results in {}", summary.succeeded, summary.total, out.display()));
                    for f in summary.files.iter().filter(|f| !f.ok) {
                        eprintln!("{}: {}", f.source, f.errors.join("; "));
                    }
                    if summary.failed == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAILURE)
                    }
                }
                Err(e) => fail(EXIT_FAILURE, e),
            }
        }
        Command::Punctuate { input, mode, json } => {
            let text = match input.read() {
                Ok(t) => t,
                Err(e) => return fail(EXIT_FAILURE, e),
            };
            match platform.punctuate(&text, mode, backend).await {
                Ok(out) if json => {
                    print_json(&out);
                    ExitCode::SUCCESS
                }
                Ok(out) => {
                    emit(&out.rendered);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_FAILURE, e),
            }
        }
        Command::Ner { input } => {
            let text = match input.read() {
                Ok(t) => t,
                Err(e) => return fail(EXIT_FAILURE, e),
            };
            match platform.ner(&text, backend).await {
                Ok(out) => {
                    print_json(&out);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_FAILURE, e),
            }
        }
        Command::Translate { input, target } => {
            let text = match input.read() {
                Ok(t) => t,
                Err(e) => return fail(EXIT_FAILURE, e),
            };
            match platform.translate(&text, target, backend) {
                Ok(stream) => print_stream(stream.map(|d| d.map(|d| d.text))).await,
                Err(e) => fail(EXIT_FAILURE, e),
            }
        }
        Command::Glossary { input } => {
            let text = match input.read() {
                Ok(t) => t,
                Err(e) => return fail(EXIT_FAILURE, e),
            };
            match platform.glossary(&text) {
                Ok(entries) => {
                    print_json(&entries);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_FAILURE, e),
            }
        }
        Command::Login { .. } => unreachable!("handled above"),
    }
}

/// Prints text deltas as they arrive.
async fn print_stream<E: std::fmt::Display>(mut stream: impl futures::Stream<Item = Result<String, E>> + Unpin) -> ExitCode {
    let mut stdout = std::io::stdout();
    while let Some(delta) = stream.next().await {
        match delta {
            Ok(text) => {
                let _ = stdout.write_all(text.as_bytes());
                let _ = stdout.flush();
            }
            Err(e) => {
                emit("");
                return fail(EXIT_FAILURE, e);
            }
        }
    }
    emit("");
    ExitCode::SUCCESS
}

fn finish<T: serde::Serialize, E: std::fmt::Display>(result: Result<T, E>) -> ExitCode {
    match result {
        Ok(value) => {
            print_json(&value);
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_FAILURE, e),
    }
}

/// Runs a single-document command against a running gateway.
async fn remote(server: String, cli: Cli) -> ExitCode {
    let mut client = GatewayClient::new(&server, cli.token.clone());
    let backend = cli.backend.as_deref();
    let input = match &cli.command {
        Command::Punctuate { input, .. } | Command::Ner { input } | Command::Translate { input, .. } | Command::Glossary { input } => {
            match input.read() {
                Ok(t) => Some(t),
                Err(e) => return fail(EXIT_FAILURE, e),
            }
        }
        _ => None,
    };
    let text = input.unwrap_or_default();
    match &cli.command {
        Command::Serve { .. } | Command::Batch { .. } => fail(EXIT_CONFIG, "serve and batch run locally; drop --server"),
        Command::Login { email, password } => match client.login(email, password).await {
            Ok(token) => {
                emit(&token);
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_FAILURE, e),
        },
        Command::Punctuate { mode, json, .. } => match client.punctuate(&text, *mode, backend).await {
            Ok(out) if !json => {
                emit(&out.rendered);
                ExitCode::SUCCESS
            }
            other => finish(other),
        },
        Command::Ner { .. } => finish(client.ner(&text, backend).await),
        Command::Glossary { .. } => finish(client.glossary(&text).await),
        Command::Translate { target, .. } => match client.translate(&text, *target, backend).await {
            Ok(stream) => print_stream(stream.map(|d| d.map(|d| d.text))).await,
            Err(e) => fail(EXIT_FAILURE, e),
        },
    }
}

async fn serve(config: &Config, platform: Platform) -> ExitCode {
    let store = match Store::open(&config.database) {
        Ok(s) => s.with_session_lifetime(chrono::Duration::days(config.session_days)),
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", config.database.display())),
    };
    let listener = match tokio::net::TcpListener::bind(&config.bind).await {
        Ok(l) => l,
        Err(e) => return fail(EXIT_CONFIG, format!("cannot bind {}: {e}", config.bind)),
    };
    let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_else(|_| config.bind.clone());
    emit(&format!("listening on http://{addr}"));
    let _ = std::io::stdout().flush();
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match gateway::serve(listener, AppState::new(platform, store), shutdown).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_FAILURE, e),
    }
}
