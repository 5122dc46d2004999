//! Number formatting and atomic file writes shared by the persistence code.

use std::io::Write;
use std::path::Path;

/// `v` in scientific notation with `digits` significant digits.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    format!("{:.*e}", digits.saturating_sub(1), v)
}

/// Twelve significant digits, the precision of every CSV this crate writes.
pub fn fmt12(v: f64) -> String {
    fmt_sig(v, 12)
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| std::io::Error::other("path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits_round_trip() {
        for v in [1.0, -2.5e-300, std::f64::consts::PI, 1.0 / 3.0, 6.02e23] {
            let s = fmt12(v);
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 5e-12 * v.abs(), "{s}");
        }
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(0.5), "5.00000000000e-1");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("perron-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
