//! `key = value` run settings: built-in defaults, then a config file, then
//! command-line flags.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use fsegan_core::fsio;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Declaration order is preserved so the echoed config reads naturally.
    entries: Vec<(&'static str, String)>,
}

/// Parses config text; `#` starts a comment, blank lines are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {line:?}", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    /// Layers `file` (if any) and then `flags` over `defaults`. Keys not in
    /// `defaults` are rejected.
    pub fn resolve(
        defaults: &[(&'static str, &str)],
        file: Option<&Path>,
        flags: &[(&'static str, Option<String>)],
    ) -> Result<Self, CliError> {
        let mut s = Settings {
            entries: defaults.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        };
        if let Some(path) = file {
            let bytes = fsio::read(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Usage(format!("{}: config is not UTF-8", path.display())))?;
            for (k, v) in parse_config(&text)? {
                s.set(&k, v).map_err(|e| match e {
                    CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
                    e => e,
                })?;
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v.clone())?;
            }
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, value: String) -> Result<(), CliError> {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => {
                e.1 = value;
                Ok(())
            }
            None => {
                let known: Vec<&str> = self.entries.iter().map(|(k, _)| *k).collect();
                Err(CliError::Usage(format!("unknown config key {key:?} (known: {})", known.join(", "))))
            }
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("setting {key} was never declared"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| CliError::Usage(format!("bad value for {key}: {v:?}")))
    }

    /// `None` when the value is `auto`.
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.raw(key) == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn set_resolved(&mut self, key: &str, value: impl ToString) {
        self.set(key, value.to_string()).expect("declared key");
    }

    /// Effective configuration: a version line, the command, the file
    /// arguments and every setting.
    pub fn render(&self, command: &str, paths: &[(&str, Option<&Path>)]) -> String {
        let mut s = format!("# {}\n# command: {command}\n", crate::version_line());
        for (k, p) in paths {
            if let Some(p) = p {
                writeln!(s, "# {k}: {}", p.display()).unwrap();
            }
        }
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}
