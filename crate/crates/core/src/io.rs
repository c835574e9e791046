//! Output helpers. Files are written to a temporary sibling and renamed into
//! place, so readers never see a partial file.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use tempfile::NamedTempFile;

/// Write `path` atomically through `body`.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Column labels `{prefix}_{l}_{i}` with one-based locus and allele.
pub fn flat_labels(prefix: &str, alleles: &[usize]) -> Vec<String> {
    alleles
        .iter()
        .enumerate()
        .flat_map(|(l, &m)| (0..m).map(move |i| format!("{prefix}_{}_{}", l + 1, i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, |w| writeln!(w, "a,b")).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n");
        // A failing body leaves the previous content untouched.
        let r = write_atomic(&p, |w| {
            writeln!(w, "partial")?;
            Err(io::Error::other("boom"))
        });
        assert!(r.is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n");
    }

    #[test]
    fn labels() {
        assert_eq!(flat_labels("x", &[2, 1]), ["x_1_1", "x_1_2", "x_2_1"]);
    }
}
