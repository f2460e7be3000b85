//! One run = one timestamped directory holding the config echo, the log
//! and every artifact.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct RunDir {
    pub path: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    /// Creates `<root>/<command>-<YYYYmmdd-HHMMSS>`, suffixed `-2`, `-3`, ...
    /// when that name is taken.
    pub fn create(root: &Path, command: &str) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", root.display())))?;
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let base = format!("{command}-{stamp}");
        for attempt in 1.. {
            let name = if attempt == 1 {
                base.clone()
            } else {
                format!("{base}-{attempt}")
            };
            let path = root.join(name);
            match std::fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(Self {
                        path,
                        artifacts: Vec::new(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => {
                    return Err(CliError::io(format!(
                        "cannot create {}: {e}",
                        path.display()
                    )))
                }
            }
        }
        unreachable!()
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let s = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
        self.write(name, &(s + "\n"))
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }
}

/// Sends log lines to stderr and to `run.log`.
struct Tee {
    file: Mutex<File>,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stderr().write_all(buf)?;
        self.file.lock().unwrap().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stderr().flush()?;
        self.file.lock().unwrap().flush()
    }
}

/// Level from `RUST_LOG`, default `info`.
pub fn init_logging(run: &RunDir) -> CliResult<()> {
    let file = File::create(run.path.join("run.log"))?;
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee {
            file: Mutex::new(file),
        })))
        .try_init();
    Ok(())
}
