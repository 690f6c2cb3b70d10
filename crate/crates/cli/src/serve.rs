use crate::{config, CliError, GlobalArgs, Status};
use clap::Args;
use protoagent_service::{serve, AppState, ServiceConfig, SessionStore};
use std::path::PathBuf;

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session storage; created when missing.
    #[arg(long, default_value = "./data")]
    pub store_dir: PathBuf,
    /// Browser origin allowed by CORS; any origin when unset.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

pub fn run(g: &GlobalArgs, args: ServeArgs) -> Result<Status, CliError> {
    let llm = config::llm_config(g, None)?;
    let agent = config::agent(g, &llm)?;
    std::fs::create_dir_all(&args.store_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.store_dir.display())))?;
    let store = SessionStore::open(&args.store_dir, config::syntax_options(g))
        .map_err(|e| CliError::Input(format!("cannot open store: {e}")))?;
    let state = AppState::new(store, agent);
    let service = ServiceConfig {
        cors_origin: args.cors_origin.clone(),
    };
    let addr = format!("{}:{}", args.host, args.port);

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Bind {
                addr: addr.clone(),
                message: e.to_string(),
            })?;
        let local = listener.local_addr().map_err(|e| CliError::Bind {
            addr: addr.clone(),
            message: e.to_string(),
        })?;
        tracing::info!(
            %local,
            store = %args.store_dir.display(),
            backend = ?llm.backend,
            model = %llm.chat.model,
            strict = g.strict,
            "service started"
        );
        println!("listening on http://{local}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, state, &service, shutdown)
            .await
            .map_err(|e| CliError::Input(format!("service stopped: {e}")))
    })?;
    Ok(Status::Ok)
}
