//! Buffered artifacts, committed with write-then-rename.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct Csv {
    pub name: String,
    pub columns: &'static [&'static str],
    pub body: String,
}

impl Csv {
    pub fn new(name: impl Into<String>, columns: &'static [&'static str]) -> Self {
        Self { name: name.into(), columns, body: String::new() }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            let _ = write!(self.body, "{f}");
        }
        self.body.push('\n');
    }

    /// Comment lines echoing the run, then the column header, then rows.
    pub fn render(&self, header: &[String]) -> String {
        let mut s = String::new();
        for line in header {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        s.push_str(&self.body);
        s
    }
}

/// Header comment lines shared by every CSV of one run.
pub fn echo_lines(subcommand: &str, seed: u64, config: &BTreeMap<String, String>) -> Vec<String> {
    let mut lines = vec![
        format!("coalweb {} {subcommand}", env!("CARGO_PKG_VERSION")),
        format!("seed = {seed} (0x{seed:016x})"),
    ];
    lines.extend(config.iter().map(|(k, v)| format!("{k} = {v}")));
    lines
}

/// Writes every file under a temporary name in its final directory, then
/// renames them into place. On failure the temporaries are removed and
/// nothing is left behind.
pub fn commit(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (name, bytes) in files {
            let target = dir.join(name);
            let parent = target.parent().unwrap_or(dir).to_path_buf();
            fs::create_dir_all(&parent)?;
            let file_name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
            let tmp = parent.join(format!(".{file_name}.{}.tmp", std::process::id()));
            fs::write(&tmp, bytes)?;
            staged.push((tmp, target));
        }
        for (tmp, target) in &staged {
            fs::rename(tmp, target)?;
        }
        Ok(staged.iter().map(|(_, t)| t.clone()).collect())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result.map_err(|e: std::io::Error| CliError::Io(format!("writing outputs to {}: {e}", dir.display())))
}
