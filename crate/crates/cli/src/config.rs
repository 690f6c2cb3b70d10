use crate::{CliError, GlobalArgs, LlmKind};
use protoagent_agent::Agent;
use protoagent_core::protocol::SyntaxOptions;
use protoagent_core::{EditOptions, Toolset};
use protoagent_llm::{BackendKind, Gateway, LlmConfig};
use std::path::Path;

/// The config file when given, else an offline mock; `--llm` and `script`
/// override it.
pub fn llm_config(g: &GlobalArgs, script: Option<&Path>) -> Result<LlmConfig, CliError> {
    let mut config = match &g.config {
        Some(path) => LlmConfig::load(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => LlmConfig::default(),
    };
    match g.llm {
        Some(LlmKind::Mock) => config.backend = BackendKind::Mock,
        Some(LlmKind::Http) => config.backend = BackendKind::Http,
        None => {}
    }
    if let Some(script) = script {
        config.script = Some(script.to_path_buf());
    }
    config.check().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(config)
}

pub fn toolset(g: &GlobalArgs) -> Toolset {
    Toolset {
        options: EditOptions {
            strict: g.strict,
            ..EditOptions::default()
        },
        ..Toolset::default()
    }
}

pub fn syntax_options(g: &GlobalArgs) -> SyntaxOptions {
    SyntaxOptions {
        strict: g.strict,
        ..SyntaxOptions::default()
    }
}

pub fn agent(g: &GlobalArgs, config: &LlmConfig) -> Result<Agent, CliError> {
    let backend = config
        .chat_backend()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut agent =
        Agent::new(Gateway::new(backend).with_max_input_tokens(config.max_input_tokens));
    agent.params = config.params();
    agent.toolset = toolset(g);
    Ok(agent)
}
