//! `c,n,value` CSV with a `.meta.toml` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{MatrixMeta, TransferMatrix, Variant};
use crate::dists::parse_field;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    variant: Variant,
    c_max: usize,
    n_max: usize,
    max_column_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    precision_digits: Option<u32>,
    #[serde(default)]
    skipped_mass_bound: f64,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

/// `foo.csv` -> `foo.meta.toml`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

pub fn write_matrix(m: &TransferMatrix, csv_path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(csv_path)?);
    write_matrix_csv(m, &mut w)?;
    w.flush()?;
    let meta = m.meta();
    let side = Sidecar {
        variant: meta.variant,
        c_max: m.c_max(),
        n_max: m.n_max(),
        max_column_defect: meta.max_column_defect,
        precision_digits: meta.precision_digits,
        skipped_mass_bound: meta.skipped_mass_bound,
        parameters: meta.parameters.clone(),
    };
    let text = toml::to_string(&side).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(sidecar_path(csv_path), text)?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(m: &TransferMatrix, mut w: W) -> Result<()> {
    writeln!(w, "c,n,value")?;
    for n in 0..=m.n_max() {
        for c in 0..=m.c_max() {
            let v = m.get(c, n);
            if v != 0.0 {
                writeln!(w, "{c},{n},{v:e}")?;
            }
        }
    }
    Ok(())
}

fn read_entries<R: BufRead>(r: R) -> Result<Vec<(usize, usize, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["c", "n", "value"] {
        return Err(Error::Parse("expected header `c,n,value`".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        out.push((parse_field(&rec, 0)?, parse_field(&rec, 1)?, parse_field(&rec, 2)?));
    }
    Ok(out)
}

/// Read a matrix; without a sidecar the dimensions come from the largest
/// indices present and the variant is recorded as `composed`.
pub fn read_matrix(csv_path: &Path) -> Result<TransferMatrix> {
    let entries = read_entries(BufReader::new(fs::File::open(csv_path)?))?;
    let side_path = sidecar_path(csv_path);
    let side: Option<Sidecar> = if side_path.exists() {
        let text = fs::read_to_string(&side_path)?;
        Some(toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", side_path.display())))?)
    } else {
        None
    };
    let c_max = side.as_ref().map(|s| s.c_max).unwrap_or_else(|| entries.iter().map(|e| e.0).max().unwrap_or(0));
    let n_max = side.as_ref().map(|s| s.n_max).unwrap_or_else(|| entries.iter().map(|e| e.1).max().unwrap_or(0));
    let mut values = Array2::zeros((c_max + 1, n_max + 1));
    for (c, n, v) in entries {
        if c > c_max || n > n_max {
            return Err(Error::Dimension(format!("entry ({c}, {n}) outside declared {c_max}x{n_max}")));
        }
        values[[c, n]] = v;
    }
    match side {
        Some(s) => {
            let mut m = TransferMatrix::from_values(values, s.variant, s.parameters)?
                .with_precision(s.precision_digits, s.skipped_mass_bound);
            // keep the defect measured at construction time
            m.set_meta_defect(s.max_column_defect);
            Ok(m)
        }
        None => TransferMatrix::from_values(values, Variant::Composed, BTreeMap::new()),
    }
}

impl TransferMatrix {
    fn set_meta_defect(&mut self, defect: f64) {
        let MatrixMeta { max_column_defect, .. } = self.meta_mut();
        *max_column_defect = defect;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detmodel::{finite_pixel_matrix, Precision};

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let m = finite_pixel_matrix(16, 0.2, 0.09 / 16.0, 12, Precision::Auto).unwrap();
        write_matrix(&m, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.meta(), m.meta());
        let first = fs::read(&path).unwrap();
        write_matrix(&back, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        assert!(matches!(read_entries("a,b,c\n1,2,3\n".as_bytes()), Err(Error::Parse(_))));
    }
}
