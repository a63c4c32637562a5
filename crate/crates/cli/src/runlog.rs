use std::fs::OpenOptions;
use std::io::Write;

use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

/// Hex SHA-256 of the rendered effective configuration.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    Sha256::digest(cfg.render().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Appends `time, command line, config hash, versions, exit code` as one tab-separated line.
pub fn append(cfg: &PipelineConfig, exit_code: u8) -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let line = format!(
        "{}\t{}\tconfig_sha256={}\tcallsift={}\tcallsift-cli={}\texit={}\n",
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        args.join(" "),
        config_hash(cfg),
        callsift::VERSION,
        env!("CARGO_PKG_VERSION"),
        exit_code
    );
    if let Some(dir) = cfg.run_log.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(&cfg.run_log)?
        .write_all(line.as_bytes())
}
