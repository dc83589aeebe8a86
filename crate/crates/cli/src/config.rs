//! `key = value` configuration files. Keys are long flag names without the
//! leading dashes; `#` starts a comment. Boolean flags take `true` or
//! `false`. Values given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", i + 1);
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text)
}

/// Extra arguments supplying config values for options of the invoked
/// (sub)command that the command line left unset. Keys that do not apply
/// are returned separately.
pub fn extra_args(cmd: &Command, matches: &ArgMatches, entries: &[(String, String)]) -> (Vec<OsString>, Vec<String>) {
    // Walk down to the leaf subcommand, keeping global options of the root.
    let mut levels = vec![(cmd, matches)];
    while let Some((name, sub)) = levels.last().unwrap().1.subcommand() {
        let c = levels.last().unwrap().0.find_subcommand(name).expect("matched subcommand exists");
        levels.push((c, sub));
    }
    let leaf = levels.last().unwrap().0;
    let mut extra = Vec::new();
    let mut ignored = Vec::new();
    for (key, value) in entries {
        let arg = leaf
            .get_arguments()
            .chain(cmd.get_arguments().filter(|a| a.is_global_set()))
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            ignored.push(key.clone());
            continue;
        };
        let id = arg.get_id().as_str();
        let explicit = levels
            .iter()
            .any(|(_, m)| m.try_contains_id(id).unwrap_or(false) && m.value_source(id) == Some(ValueSource::CommandLine));
        if explicit {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => {
                if value == "true" {
                    extra.push(format!("--{key}").into());
                }
            }
            _ => {
                extra.push(format!("--{key}").into());
                extra.push(value.into());
            }
        }
    }
    (extra, ignored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let e = parse("# store\nstore = /tmp/s  # trailing\n\njson=true\n").unwrap();
        assert_eq!(e, vec![("store".into(), "/tmp/s".into()), ("json".into(), "true".into())]);
        assert!(parse("nonsense\n").is_err());
    }
}
