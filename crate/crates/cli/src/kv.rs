//! `key = value` text files: one pair per line, `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::config(format!("manifest is missing `{key}`")))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.require(key)?;
        v.parse()
            .map_err(|e| CliError::config(format!("manifest `{key} = {v}`: {e}")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut m = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", n + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn render(&self, comment: &str) -> String {
        let mut s = String::new();
        for line in comment.lines() {
            let _ = writeln!(s, "# {line}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path, comment: &str) -> Result<(), CliError> {
        std::fs::write(path, self.render(comment)).map_err(|e| CliError::io(path, e))
    }
}

/// Parses `key=value` command-line tokens, e.g. `n=2000 c=4`.
pub fn parse_tokens(tokens: &[String]) -> Result<Manifest, CliError> {
    let mut m = Manifest::new();
    for t in tokens {
        for part in t.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("expected key=value, got `{part}`")))?;
            m.set(k.trim(), v.trim());
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut m = Manifest::new();
        m.set("a", 1.5);
        m.set("b", "x y");
        m.set("a", 2);
        let back = Manifest::parse(&m.render("hello\nworld")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("a"), Some("2"));
    }

    #[test]
    fn tokens_accept_spaces_or_commas() {
        let m = parse_tokens(&["n=10,c=3".into(), "d=2".into()]).unwrap();
        assert_eq!(m.parsed::<usize>("c").unwrap(), 3);
        assert!(parse_tokens(&["oops".into()]).is_err());
    }
}
