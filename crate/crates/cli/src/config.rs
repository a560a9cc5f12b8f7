//! `--config` support. Keys of the file become flags placed ahead of the
//! command-line flags, so anything given explicitly wins.

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::{CommandFactory, Parser};

use crate::exit::Failure;
use crate::Cli;

pub fn parse_with_config(argv: &[String]) -> Result<Cli, Failure> {
    // The file may supply required flags, so it is merged before clap sees
    // the arguments.
    let Some(path) = config_path(argv) else {
        return parse(argv);
    };
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(pos) = argv.iter().skip(1).position(|a| names.contains(a)).map(|p| p + 1) else {
        return parse(argv);
    };
    let tokens = config_tokens(Path::new(&path), &argv[pos])?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&argv[pos + 1..]);
    parse(&merged)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = arg.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn parse(argv: &[String]) -> Result<Cli, Failure> {
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(cli),
        Err(e) => {
            // Help and version go to stdout with exit 0; usage errors exit 2.
            let _ = e.print();
            let _ = std::io::stdout().flush();
            std::process::exit(e.exit_code());
        }
    }
}

/// Flags for `sub` from the file: the `[sub]` table if present, otherwise
/// the top-level scalar keys.
pub fn config_tokens(path: &Path, sub: &str) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("reading {}", path.display()), e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let section = match table.get(sub) {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(Failure::Usage(format!("config key `{sub}` must be a table"))),
        None => table
            .into_iter()
            .filter(|(_, v)| !matches!(v, toml::Value::Table(_)))
            .collect(),
    };
    let known: Vec<String> = Cli::command()
        .find_subcommand(sub)
        .map(|c| c.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect())
        .unwrap_or_default();
    let mut tokens = Vec::new();
    for (key, value) in section {
        let flag = key.replace('_', "-");
        if flag == "config" || !known.contains(&flag) {
            return Err(Failure::Usage(format!("config {}: unknown key `{key}` for {sub}", path.display())));
        }
        tokens.push(format!("--{flag}"));
        tokens.push(scalar(&key, &value)?);
    }
    Ok(tokens)
}

fn scalar(key: &str, value: &toml::Value) -> Result<String, Failure> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| scalar(key, v))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => return Err(Failure::Usage(format!("config key `{key}` has an unsupported type"))),
    })
}
