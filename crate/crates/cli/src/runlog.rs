//! Per-command `key=value` log with the config echo and content hashes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gpkit::sha256_hex;

pub struct RunLog {
    command: String,
    lines: Vec<(String, String)>,
}

fn file_digest(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => format!("{} bytes={}", sha256_hex(&bytes), bytes.len()),
        Err(e) => format!("unreadable ({e})"),
    }
}

/// Newlines would break the one-record-per-line format.
fn flat(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r")
}

impl RunLog {
    pub fn new(command: &str) -> Self {
        RunLog {
            command: command.to_string(),
            lines: vec![
                ("command".into(), command.to_string()),
                ("version".into(), env!("CARGO_PKG_VERSION").to_string()),
            ],
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), flat(&value.to_string())));
    }

    pub fn input(&mut self, path: &Path) {
        self.set(&format!("input.{}", path.display()), file_digest(path));
    }

    pub fn output(&mut self, path: &Path) {
        self.set(&format!("output.{}", path.display()), file_digest(path));
    }

    pub fn outputs(&mut self, paths: &[PathBuf]) {
        for p in paths {
            self.output(p);
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    /// Writes `<dir>/<command>.run.log`, replacing any previous log.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.run.log", self.command));
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}
