//! Expert annotation service: pairwise and Likert tasks, practice gating,
//! an append-only judgment log and agreement reports.

pub mod http;
pub mod model;
pub mod report;
pub mod service;
pub mod store;

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use model::TaskSpec;
use service::AnnotationService;

/// Settings of `feedeval serve`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    /// Event log path.
    pub log: PathBuf,
    /// Seeds the A/B swaps and the per-annotator task order.
    pub seed: u64,
    /// Name of the environment variable holding the shared bearer token.
    pub token_env: Option<String>,
    /// Directory served under /app.
    pub static_dir: Option<PathBuf>,
    /// JSONL of task specs imported at start-up. Every spec needs a
    /// `task_id`; ids already in the log are skipped.
    pub tasks: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            log: PathBuf::from("annotation_log.jsonl"),
            seed: 42,
            token_env: None,
            static_dir: None,
            tasks: None,
        }
    }
}

impl ServeConfig {
    /// Reads a TOML file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ServeConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = path.parent() {
            for p in [Some(&mut cfg.log), cfg.static_dir.as_mut(), cfg.tasks.as_mut()]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Reads the token from the named variable. An unset or empty variable
    /// is a configuration error when a name is given.
    pub fn token(&self) -> Result<Option<String>> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(Error::Config(format!("environment variable {var} is not set"))),
            },
        }
    }
}

/// Opens the log, imports configured tasks and builds the router.
pub fn build(cfg: &ServeConfig) -> Result<axum::Router> {
    let mut svc = AnnotationService::open(&cfg.log, cfg.seed)?;
    if let Some(path) = &cfg.tasks {
        let specs: Vec<TaskSpec> = crate::io::read_jsonl(path)?;
        if specs.iter().any(|s| s.task_id.is_none()) {
            return Err(Error::Config(format!("{}: every task needs a task_id", path.display())));
        }
        let fresh: Vec<TaskSpec> = specs
            .into_iter()
            .filter(|s| s.task_id.as_ref().is_some_and(|id| !svc.state().tasks.contains_key(id)))
            .collect();
        let n = fresh.len();
        svc.create_tasks(fresh)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        log::info!("imported {n} tasks from {}", path.display());
    }
    let state = http::AppState {
        service: Arc::new(RwLock::new(svc)),
        token: cfg.token()?.map(Arc::from),
    };
    Ok(http::router(state, cfg.static_dir.clone()))
}
