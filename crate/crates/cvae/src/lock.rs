//! One writer per artifact directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".cvae.lock";

/// Held for the lifetime of a command; removes the lock file on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join(LOCK_FILE);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                if !holder_is_gone(&path) {
                    return Err(Error::Locked(dir.to_path_buf()));
                }
                log::warn!("taking over stale lock {}", path.display());
                OpenOptions::new()
                    .write(true)
                    .truncate(true)
                    .open(&path)
                    .map_err(Error::io(&path))?
            }
            Err(e) => return Err(Error::io(&path)(e)),
        };
        writeln!(f, "{}", std::process::id()).map_err(Error::io(&path))?;
        Ok(DirLock { path })
    }
}

/// True only when the recorded pid provably no longer runs (a killed
/// run leaves its lock behind). Elsewhere than Linux the lock is kept.
fn holder_is_gone(path: &Path) -> bool {
    let Ok(text) = std::fs::read_to_string(path) else {
        return false;
    };
    let Ok(pid) = text.trim().parse::<u32>() else {
        return false;
    };
    cfg!(target_os = "linux") && pid != std::process::id() && !Path::new("/proc").join(pid.to_string()).exists()
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn dead_holder_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        // pid_max never reaches this
        std::fs::write(dir.path().join(LOCK_FILE), "4294967295\n").unwrap();
        DirLock::acquire(dir.path()).unwrap();
        std::fs::write(dir.path().join(LOCK_FILE), "garbage\n").unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Locked(_))));
    }
}
