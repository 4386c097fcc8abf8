//! `--config FILE` support. Settings become `--key=value` arguments placed right
//! after the subcommand, so flags given on the command line come later and win.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};

const SUBCOMMANDS: [&str; 4] = ["gen", "build", "search", "eval"];

/// Finds `--config`, reads the file and splices its settings into `args`.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&strs) else {
        return Ok(args);
    };
    let Some(pos) = strs.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let pos = pos + 1;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path))?;
    let pairs = parse(&text, &strs[pos]).with_context(|| format!("config {}", path))?;
    let mut out = args;
    let injected: Vec<OsString> = pairs
        .into_iter()
        .filter(|(k, _)| k != "config")
        .map(|(k, v)| match v {
            None => OsString::from(format!("--{k}")),
            Some(v) => OsString::from(format!("--{k}={v}")),
        })
        .collect();
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut found = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            found = it.next().cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        }
    }
    found
}

/// Settings that apply to `subcommand`: top-level keys plus the section named after it.
/// `None` values are bare switches.
pub fn parse(text: &str, subcommand: &str) -> Result<Vec<(String, Option<String>)>> {
    match text.parse::<toml::Table>() {
        Ok(table) => from_toml(&table, subcommand),
        Err(toml_err) => from_lines(text, subcommand).map_err(|e| {
            anyhow::anyhow!("{e} (also not valid TOML: {})", toml_err.message())
        }),
    }
}

fn flag_name(key: &str) -> String {
    key.trim().replace('_', "-")
}

fn from_toml(table: &toml::Table, subcommand: &str) -> Result<Vec<(String, Option<String>)>> {
    let mut out = Vec::new();
    let mut section = Vec::new();
    for (k, v) in table {
        match v {
            toml::Value::Table(t) if k == subcommand => {
                for (k2, v2) in t {
                    if let Some(p) = toml_pair(k2, v2)? {
                        section.push(p);
                    }
                }
            }
            toml::Value::Table(_) => {}
            _ => {
                if let Some(p) = toml_pair(k, v)? {
                    out.push(p);
                }
            }
        }
    }
    out.extend(section);
    Ok(out)
}

fn toml_pair(key: &str, v: &toml::Value) -> Result<Option<(String, Option<String>)>> {
    let scalar = |v: &toml::Value| -> Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!("{key}: unsupported value {other}"),
        })
    };
    Ok(match v {
        toml::Value::Boolean(true) => Some((flag_name(key), None)),
        toml::Value::Boolean(false) => None,
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>> = items.iter().map(scalar).collect();
            Some((flag_name(key), Some(parts?.join(","))))
        }
        other => Some((flag_name(key), Some(scalar(other)?))),
    })
}

fn from_lines(text: &str, subcommand: &str) -> Result<Vec<(String, Option<String>)>> {
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        if section.as_deref().is_some_and(|s| s != subcommand) {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        let v = v.trim().trim_matches('"');
        match v {
            "true" => out.push((flag_name(k), None)),
            "false" => {}
            _ => out.push((flag_name(k), Some(v.to_string()))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn key_value_lines_with_sections() {
        let text = "# shared\nseed = 3\n[eval]\nbudgets = 100,300\nno_plots = true\nkeep = false\n[build]\ndegree = 8\n";
        let got = parse(text, "eval").unwrap();
        assert_eq!(
            got,
            vec![
                ("seed".into(), Some("3".into())),
                ("budgets".into(), Some("100,300".into())),
                ("no-plots".into(), None),
            ]
        );
    }

    #[test]
    fn toml_tables_and_arrays() {
        let text = "seed = 3\n[eval]\nmethods = [\"rr\", \"rgs\"]\nbudgets = [100]\nno_plots = true\n[build]\ndegree = 8\n";
        let got = parse(text, "eval").unwrap();
        assert!(got.contains(&("methods".into(), Some("rr,rgs".into()))));
        assert!(got.contains(&("budgets".into(), Some("100".into()))));
        assert!(got.contains(&("no-plots".into(), None)));
        assert!(!got.iter().any(|(k, _)| k == "degree"));
    }

    #[test]
    fn injected_before_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        std::fs::write(&cfg, "budget = 50\n").unwrap();
        let args = os(&["rgs", "--config", cfg.to_str().unwrap(), "search", "--budget", "70"]);
        let out = expand(args).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(out[3..], ["search", "--budget=50", "--budget", "70"]);
    }

    #[test]
    fn bad_line_is_reported() {
        assert!(parse("just words\n", "eval").is_err());
    }
}
