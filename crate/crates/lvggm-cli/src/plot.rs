//! Plot-data emission: CSV panels a plotting tool can render directly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lvggm::{Decomposition, Result};

/// Write `support_pattern.csv` (0/1 indicator of S's nonzeros) and
/// `eigvals_L.csv` (eigenvalues of L, descending, one per line) under `dir`.
pub fn write_plotdata(dir: &Path, dec: &Decomposition) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let pattern_path = dir.join("support_pattern.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&pattern_path)?);
        let m = dec.m;
        for i in 0..m {
            for j in 0..m {
                if j > 0 {
                    write!(w, ",")?;
                }
                let bit = if dec.s.entry(i, j) != 0.0 { 1 } else { 0 };
                write!(w, "{bit}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
    }
    let eig_path = dir.join("eigvals_L.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&eig_path)?);
        let eig = dec.l.eig();
        for v in eig.values.iter().rev() {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
    }
    Ok(vec![pattern_path, eig_path])
}
