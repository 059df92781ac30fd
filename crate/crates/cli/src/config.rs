//! Flat `key = value` configuration files merged into the command line.
//!
//! Every key names a long flag of the active subcommand (`alpha_kn` and
//! `alpha-kn` both mean `--alpha-kn`). Flags given explicitly on the command
//! line win over the file. List keys take comma-separated values.

use std::path::Path;

use zipgsk::Error;

const SWITCHES: &[&str] = &["plus", "no-copula", "record-timing"];
const LISTS: &[&str] = &["sources", "labels", "covariates", "depths", "model"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected 'key = value', got '{line}'", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn given(args: &[String], flag: &str) -> bool {
    args.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Expand `--config FILE` into explicit flags appended after the user's arguments.
pub fn merge_args(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| anyhow::Error::new(e).context(format!("reading config {path}")))?;
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        let flag = format!("--{key}");
        if key == "config" || given(&args, &flag) {
            continue;
        }
        if SWITCHES.contains(&key.as_str()) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => extra.push(flag),
                "false" | "no" | "0" => {}
                other => return Err(Error::Config(format!("config key '{key}' expects true or false, got '{other}'")).into()),
            }
        } else if LISTS.contains(&key.as_str()) {
            for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                extra.push(flag.clone());
                extra.push(item.to_string());
            }
        } else {
            extra.push(flag);
            extra.push(value);
        }
    }
    let mut out = args;
    out.extend(extra);
    Ok(out)
}
