//! `key = value` configuration file.
//!
//! ```text
//! # comments start with '#'
//! nseg = 3
//! batch_size = 512
//! bsp_timeout_ms = 60000
//! transfer_port = 7400
//! external.python = python3 -u {script}
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Config {
    pub nseg: Option<usize>,
    pub batch_size: Option<usize>,
    pub bsp_timeout: Option<Duration>,
    pub transfer_port: Option<u16>,
    /// Command template per language tag, split on whitespace.
    pub external: BTreeMap<String, Vec<String>>,
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if let Some(inner) = v.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            return inner;
        }
    }
    v
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let lineno = i + 1;
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {lineno}: expected key = value");
            };
            let key = key.trim().to_ascii_lowercase();
            let value = unquote(value);
            let num = |what: &str| -> Result<u64> {
                value
                    .parse::<u64>()
                    .with_context(|| format!("config line {lineno}: {what} must be a non-negative integer"))
            };
            match key.as_str() {
                "nseg" => {
                    let n = num("nseg")?;
                    if n == 0 {
                        bail!("config line {lineno}: nseg must be at least 1");
                    }
                    cfg.nseg = Some(n as usize);
                }
                "batch_size" => {
                    let n = num("batch_size")?;
                    if n == 0 {
                        bail!("config line {lineno}: batch_size must be at least 1");
                    }
                    cfg.batch_size = Some(n as usize);
                }
                "bsp_timeout_ms" => cfg.bsp_timeout = Some(Duration::from_millis(num("bsp_timeout_ms")?)),
                "transfer_port" => {
                    cfg.transfer_port = Some(
                        u16::try_from(num("transfer_port")?)
                            .with_context(|| format!("config line {lineno}: port out of range"))?,
                    )
                }
                k => {
                    let Some(lang) = k.strip_prefix("external.") else {
                        bail!("config line {lineno}: unknown key '{k}'");
                    };
                    let argv: Vec<String> = value.split_whitespace().map(String::from).collect();
                    if argv.is_empty() {
                        bail!("config line {lineno}: empty command for external.{lang}");
                    }
                    cfg.external.insert(lang.to_string(), argv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}
