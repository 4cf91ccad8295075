//! `key = value` config files, spliced into the argument list so that
//! flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parse a config file. Blank lines and lines starting with `#` are skipped;
/// keys are long flag names without the leading dashes.
pub fn read(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got {line:?}", n + 1);
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        if key == "config" {
            bail!(
                "line {}: config files cannot include other config files",
                n + 1
            );
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Flag tokens for config entries. `true` becomes a bare switch and `false`
/// drops the entry.
pub fn to_args(entries: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    out
}

/// Insert `extra` right after the token that names the innermost subcommand,
/// so that later command-line flags override config values.
pub fn splice(args: &[OsString], subcommands: &[String], extra: Vec<OsString>) -> Vec<OsString> {
    let mut pos = 0;
    for name in subcommands {
        match args[pos + 1..]
            .iter()
            .position(|a| a.to_str() == Some(name.as_str()))
        {
            Some(i) => pos += i + 1,
            None => break,
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    out
}
