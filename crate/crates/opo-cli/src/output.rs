//! Artifact plumbing: atomic file writes and the metadata preamble every
//! CSV carries. No timestamps anywhere; reruns must be byte-identical.

use std::io::Write;
use std::path::Path;

/// `#`-prefixed lines naming the producing command, the hash of the physics
/// configuration, and the RNG seed. Consumers that skip comment lines read
/// the header row as the first line.
pub fn preamble(subcommand: &str, config_sha: &str, seed: u64) -> String {
    format!("# opo {subcommand}\n# config_sha256 = {config_sha}\n# seed = {seed}\n")
}

/// Writes via a sibling temp file and rename, so a crash mid-write cannot
/// leave a truncated artifact under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert!(!path.with_extension("txt.tmp").exists());
    }

    #[test]
    fn preamble_layout_is_stable() {
        let p = preamble("lock", "abc123", 7);
        assert_eq!(p, "# opo lock\n# config_sha256 = abc123\n# seed = 7\n");
    }
}
