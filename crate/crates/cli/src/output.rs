//! Atomic file output and run manifests.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use tempfile::NamedTempFile;

/// Test hook: when set, writes fail after the body is produced but before
/// the temporary file is renamed into place.
const INJECT_FAILURE_ENV: &str = "DTEK_INJECT_WRITE_FAILURE";

/// Writes `path` via a temporary file in the same directory and a rename, so
/// the target either holds the complete output or is left untouched.
pub fn write_atomic<F>(path: &Path, body: F) -> dtek::Result<()>
where
    F: FnOnce(&mut dyn Write) -> dtek::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = NamedTempFile::new_in(&dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    if std::env::var_os(INJECT_FAILURE_ENV).is_some() {
        return Err(std::io::Error::other("injected write failure").into());
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> dtek::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| dtek::Error::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

/// `out.csv` -> `out.manifest.json`; `chan.bin` -> `chan.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn git_revision() -> Option<&'static str> {
    Some(env!("DTEK_GIT_REV")).filter(|s| !s.is_empty())
}

/// Provenance fields shared by every manifest.
pub fn provenance(command: &str) -> Value {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "tool": "dtek",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created_unix_s": created,
        "git_revision": git_revision(),
        "host": {
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "cpus": std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    })
}
