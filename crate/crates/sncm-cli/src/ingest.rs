//! CSV ingestion: a rectangular file with a header row, PMVs encoded as
//! empty cells or a configurable sentinel token.

use anyhow::{bail, Context, Result};
use std::path::Path;

use crate::config::DataConfig;
use sncm::model::CensoredDataset;

/// A parsed table: header plus column-major numeric-or-missing cells.
#[derive(Debug)]
pub struct Table {
    pub header: Vec<String>,
    /// column-major; `None` marks a missing cell
    pub columns: Vec<Vec<Option<f64>>>,
    pub rows: usize,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column \"{name}\" not found in the data file"))?;
        Ok(&self.columns[idx])
    }
}

pub fn read_table(path: &Path, sentinel: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = rdr
        .headers()
        .context("missing header row")?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let width = header.len();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); width];
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("row {}: malformed CSV", row_idx + 2))?;
        if record.len() != width {
            bail!(
                "row {}: expected {} cells, found {} (ragged row)",
                row_idx + 2,
                width,
                record.len()
            );
        }
        for (col_idx, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value = if cell.is_empty() || cell == sentinel {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| {
                    anyhow::anyhow!(
                        "row {}, column \"{}\": non-numeric cell \"{}\"",
                        row_idx + 2,
                        header[col_idx],
                        cell
                    )
                })?)
            };
            columns[col_idx].push(value);
        }
    }
    let rows = columns.first().map(|c| c.len()).unwrap_or(0);
    Ok(Table {
        header,
        columns,
        rows,
    })
}

fn dense_column(table: &Table, name: &str, role: &str) -> Result<Vec<f64>> {
    let col = table.column(name)?;
    col.iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                anyhow::anyhow!(
                    "row {}, column \"{name}\": missing value in a {role} column",
                    i + 2
                )
            })
        })
        .collect()
}

/// Build the dataset for one response column from a parsed table.
pub fn build_dataset(table: &Table, cfg: &DataConfig, response: &str) -> Result<CensoredDataset> {
    if cfg.predictors.is_empty() {
        bail!("no predictor columns declared in the config");
    }
    let y = table.column(response)?.to_vec();
    if y.iter().all(|v| v.is_none()) {
        bail!("response \"{response}\": every value is missing");
    }
    let mut x = Vec::with_capacity(table.rows * cfg.predictors.len());
    for name in &cfg.predictors {
        x.extend(dense_column(table, name, "predictor")?);
    }
    let mut c = Vec::with_capacity(table.rows * cfg.confounders.len());
    for name in &cfg.confounders {
        c.extend(dense_column(table, name, "confounder")?);
    }
    let psi = match cfg.psi {
        Some(v) => v,
        None => y
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    };
    let mut data = CensoredDataset::new(y, x, cfg.predictors.len(), c, cfg.confounders.len(), psi)?;
    data.predictor_names = cfg.predictors.clone();
    data.confounder_names = cfg.confounders.clone();
    data.response_name = response.to_string();
    Ok(data)
}

/// Render a dataset as CSV with 17-significant-digit decimals so a read-back
/// reproduces every value bit-exactly. PMVs become empty cells.
pub fn dataset_csv_bytes(data: &CensoredDataset) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec![data.response_name.clone()];
    header.extend(data.predictor_names.iter().cloned());
    header.extend(data.confounder_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = Vec::with_capacity(header.len());
        row.push(match data.y[i] {
            Some(v) => format!("{v:.17e}"),
            None => String::new(),
        });
        for j in 0..data.p() {
            row.push(format!("{:.17e}", data.x(i, j)));
        }
        for t in 0..data.s() {
            row.push(format!("{:.17e}", data.c(i, t)));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(wtr.into_inner()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(contents: &str) -> tempfile_path::TempCsv {
        tempfile_path::TempCsv::new(contents)
    }

    /// Minimal self-cleaning temp file helper.
    mod tempfile_path {
        use std::path::PathBuf;

        pub struct TempCsv(pub PathBuf);

        impl TempCsv {
            pub fn new(contents: &str) -> Self {
                use std::sync::atomic::{AtomicUsize, Ordering};
                static COUNTER: AtomicUsize = AtomicUsize::new(0);
                let path = std::env::temp_dir().join(format!(
                    "sncm_ingest_{}_{}.csv",
                    std::process::id(),
                    COUNTER.fetch_add(1, Ordering::Relaxed)
                ));
                std::fs::write(&path, contents).unwrap();
                Self(path)
            }
        }

        impl Drop for TempCsv {
            fn drop(&mut self) {
                let _ = std::fs::remove_file(&self.0);
            }
        }
    }

    fn data_cfg(predictors: &[&str]) -> DataConfig {
        DataConfig {
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn no_missing_cells_gives_all_observed_and_min_psi() {
        let f = write_temp("y,x1\n3.5,0.1\n1.25,0.2\n7.0,0.3\n");
        let table = read_table(&f.0, "NA").unwrap();
        let data = build_dataset(&table, &data_cfg(&["x1"]), "y").unwrap();
        assert!((0..data.n()).all(|i| data.observed(i)));
        assert_eq!(data.psi, 1.25);
    }

    #[test]
    fn sentinel_and_empty_cells_become_pmvs() {
        let f = write_temp("y,x1\nNA,0.1\n,0.2\n7.0,0.3\n");
        let table = read_table(&f.0, "NA").unwrap();
        let data = build_dataset(&table, &data_cfg(&["x1"]), "y").unwrap();
        assert_eq!(
            data.y,
            vec![None, None, Some(7.0)],
        );
    }

    #[test]
    fn round_trip_preserves_every_value_bit_exactly() {
        // awkward values: subnormal-ish, negative, high-precision irrational
        let f = write_temp(
            "y,x1,c1\n0.1234567890123456789,-1e-300,2.718281828459045\nNA,0.30000000000000004,-0.0\n9.75,1.7976931348623157e308,5e-324\n",
        );
        let mut cfg = data_cfg(&["x1"]);
        cfg.confounders = vec!["c1".to_string()];
        let table = read_table(&f.0, "NA").unwrap();
        let data = build_dataset(&table, &cfg, "y").unwrap();
        let bytes = dataset_csv_bytes(&data).unwrap();
        let f2 = write_temp(std::str::from_utf8(&bytes).unwrap());
        let table2 = read_table(&f2.0, "NA").unwrap();
        let data2 = build_dataset(&table2, &cfg, "y").unwrap();
        assert_eq!(data.y, data2.y);
        for j in 0..data.p() {
            for i in 0..data.n() {
                assert_eq!(data.x(i, j).to_bits(), data2.x(i, j).to_bits());
            }
        }
        for t in 0..data.s() {
            for i in 0..data.n() {
                assert_eq!(data.c(i, t).to_bits(), data2.c(i, t).to_bits());
            }
        }
    }

    #[test]
    fn ragged_row_error_names_the_row() {
        let f = write_temp("y,x1\n1.0,2.0\n3.0\n");
        let err = read_table(&f.0, "NA").unwrap_err().to_string();
        assert!(err.contains("row 3"), "unexpected message: {err}");
    }

    #[test]
    fn non_numeric_cell_error_names_row_and_column() {
        let f = write_temp("y,x1\n1.0,2.0\n3.0,oops\n");
        let err = read_table(&f.0, "NA").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("x1"), "unexpected message: {err}");
    }

    #[test]
    fn all_missing_response_is_rejected() {
        let f = write_temp("y,x1\nNA,0.1\nNA,0.2\n");
        let table = read_table(&f.0, "NA").unwrap();
        let err = build_dataset(&table, &data_cfg(&["x1"]), "y")
            .unwrap_err()
            .to_string();
        assert!(err.contains("every value is missing"), "unexpected message: {err}");
    }

    #[test]
    fn missing_predictor_cell_is_rejected() {
        let f = write_temp("y,x1\n1.0,NA\n");
        let table = read_table(&f.0, "NA").unwrap();
        assert!(build_dataset(&table, &data_cfg(&["x1"]), "y").is_err());
    }
}
