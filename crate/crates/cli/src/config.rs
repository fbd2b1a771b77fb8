use std::ffi::OsString;
use std::fmt;
use std::fs;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const SUBCOMMANDS: [&str; 7] = ["synth", "run", "eval", "compare", "interactive", "dtree", "features"];

/// Expand `--config FILE` into flags inserted right after the subcommand
/// name, so explicit flags later on the line override them.
pub fn apply_config(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub_at) = strs.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError(format!("{path}: {e}")))?;
    let doc: toml::Table = toml::from_str(&text).map_err(|e| ConfigError(format!("{path}: {e}")))?;
    let Some(section) = doc.get(&strs[sub_at]) else { return Ok(args) };
    let table = section.as_table().ok_or_else(|| ConfigError(format!("{path}: `{}` must be a table", strs[sub_at])))?;
    let mut extra = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => extra.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    extra.push(flag.clone());
                    extra.push(scalar(item).ok_or_else(|| ConfigError(format!("{path}: `{key}` holds a non-scalar")))?);
                }
            }
            v => {
                extra.push(flag);
                extra.push(scalar(v).ok_or_else(|| ConfigError(format!("{path}: `{key}` must be a scalar")))?);
            }
        }
    }
    let mut out: Vec<OsString> = args[..=sub_at].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}

fn scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}
