//! Artifact writing: atomic file replacement and embedded run metadata.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::Failure;

pub const TOOL: &str = "graphclust";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header shared by every artifact so that outputs can be re-derived from
/// their own metadata.
#[derive(Serialize)]
pub struct Meta<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a C,
}

impl<'a, C: Serialize> Meta<'a, C> {
    pub fn new(command: &'static str, config: &'a C) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            config,
        }
    }

    /// `#`-comment lines for CSV and edge-list artifacts.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("{TOOL} {VERSION} {}", self.command),
            format!("config: {}", to_json_line(self.config)),
        ]
    }
}

pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("artifact types serialize")
}

pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

pub fn with_comments(lines: &[String], body: &str) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str("# ");
        s.push_str(l);
        s.push('\n');
    }
    s.push_str(body);
    s
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so readers never see a partial artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Input(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
