//! Dataset, vector and matrix file formats.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ctdc_core::inference::SnapshotDataset;
use ctdc_core::sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SnapshotRow {
    market_id: usize,
    obs_index: usize,
    state_index: usize,
}

/// Reads a snapshot panel with header `market_id,obs_index,state_index`.
/// Rows must be sorted by market and observation index, observation indices
/// must run `0, 1, 2, …` within each market.
pub fn read_dataset<R: Read>(reader: R, delta: f64) -> Result<SnapshotDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(Error::data)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["market_id", "obs_index", "state_index"] {
        return Err(Error::Data(format!(
            "expected header market_id,obs_index,state_index, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut markets: Vec<Vec<usize>> = Vec::new();
    let mut current: Option<usize> = None;
    for (line, row) in rdr.deserialize::<SnapshotRow>().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
        if current != Some(row.market_id) {
            if let Some(prev) = current {
                if row.market_id < prev {
                    return Err(Error::Data(format!(
                        "row {}: market {} follows market {prev}; rows must be sorted",
                        line + 1,
                        row.market_id
                    )));
                }
            }
            current = Some(row.market_id);
            markets.push(Vec::new());
        }
        let m = markets.last_mut().expect("a market was pushed");
        if row.obs_index != m.len() {
            return Err(Error::Data(format!(
                "row {}: market {} has obs_index {}, expected {}",
                line + 1,
                row.market_id,
                row.obs_index,
                m.len()
            )));
        }
        m.push(row.state_index);
    }
    if markets.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }
    SnapshotDataset::new(delta, markets).map_err(Error::data)
}

pub fn read_dataset_file(path: &Path, delta: f64) -> Result<SnapshotDataset> {
    let f = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_dataset(BufReader::new(f), delta)
}

/// Writes a panel with markets numbered from 0.
pub fn write_dataset<W: Write>(writer: W, ds: &SnapshotDataset) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (market_id, m) in ds.markets.iter().enumerate() {
        for (obs_index, &state_index) in m.iter().enumerate() {
            w.serialize(SnapshotRow {
                market_id,
                obs_index,
                state_index,
            })?;
        }
    }
    w.flush()
}

/// Parses `e:<index>` into a basis vector of length `n`, or reads the
/// `value` column of a CSV file.
pub fn parse_vector_spec(spec: &str, n: usize) -> Result<Vec<f64>> {
    if let Some(idx) = spec.strip_prefix("e:") {
        let i: usize = idx
            .parse()
            .map_err(|_| Error::Config(format!("bad basis index in `{spec}`")))?;
        if i >= n {
            return Err(Error::Config(format!("basis index {i} out of range for {n} states")));
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        return Ok(v);
    }
    let f = File::open(spec).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
    let v = read_vector(BufReader::new(f))?;
    if v.len() != n {
        return Err(Error::Data(format!("{spec} has {} values, expected {n}", v.len())));
    }
    Ok(v)
}

/// Reads the column headed `value`.
pub fn read_vector<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let col = rdr
        .headers()
        .map_err(Error::data)?
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Data("vector CSV needs a `value` column".into()))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(Error::data)?;
            rec.get(col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Data(format!("row {}: bad value", i + 1)))
        })
        .collect()
}

/// Writes `state` followed by one column per `(name, values)` pair.
pub fn write_columns<W: Write>(writer: W, columns: &[(String, Vec<f64>)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["state".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let n = columns.first().map_or(0, |c| c.1.len());
    for k in 0..n {
        let mut rec = vec![k.to_string()];
        rec.extend(columns.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Matrix Market coordinate format, real general, 1-based indices.
pub fn write_matrix_market<W: Write>(mut w: W, a: &CsrMatrix) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (r, c, v) in a.iter() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: Read>(reader: R) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(reader).lines();
    let banner = lines
        .next()
        .ok_or_else(|| Error::Data("empty Matrix Market file".into()))?
        .map_err(Error::data)?;
    let b = banner.to_ascii_lowercase();
    if !(b.starts_with("%%matrixmarket matrix coordinate real") && b.ends_with("general")) {
        return Err(Error::Data(format!("unsupported Matrix Market banner `{banner}`")));
    }
    let mut body = lines
        .map(|l| l.map_err(Error::data))
        .filter(|l| l.as_ref().map_or(true, |s| !(s.trim().is_empty() || s.starts_with('%'))));
    let size = body
        .next()
        .ok_or_else(|| Error::Data("missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Data(format!("bad size line `{size}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(Error::Data(format!("bad size line `{size}`")));
    };
    let mut coo = CooMatrix::new(rows, cols);
    for line in body.by_ref().take(nnz) {
        let line = line?;
        let t: Vec<&str> = line.split_whitespace().collect();
        let parsed = match t[..] {
            [r, c, v] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let ((r, c), v) = parsed.ok_or_else(|| Error::Data(format!("bad entry `{line}`")))?;
        if r == 0 || c == 0 {
            return Err(Error::Data(format!("indices are 1-based, got `{line}`")));
        }
        coo.push(r - 1, c - 1, v).map_err(Error::data)?;
    }
    if coo.nnz() != nnz {
        return Err(Error::Data(format!("expected {nnz} entries, found {}", coo.nnz())));
    }
    coo.to_csr().map_err(Error::data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let ds = SnapshotDataset::new(0.5, vec![vec![0, 1, 1], vec![2, 0]]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert!(buf.starts_with(b"market_id,obs_index,state_index\n"));
        assert_eq!(read_dataset(&buf[..], 0.5).unwrap(), ds);
    }

    #[test]
    fn dataset_errors() {
        let cases = [
            "market,obs,state\n0,0,0\n0,1,1\n",
            "market_id,obs_index,state_index\n0,0,0\n0,2,1\n",
            "market_id,obs_index,state_index\n1,0,0\n1,1,1\n0,0,1\n0,1,1\n",
            "market_id,obs_index,state_index\n0,0,x\n",
            "market_id,obs_index,state_index\n0,0,1\n",
            "market_id,obs_index,state_index\n",
        ];
        for c in cases {
            assert!(matches!(read_dataset(c.as_bytes(), 1.0), Err(Error::Data(_))), "{c}");
        }
    }

    #[test]
    fn vector_specs() {
        assert_eq!(parse_vector_spec("e:1", 3).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(parse_vector_spec("e:3", 3), Err(Error::Config(_))));
        assert_eq!(read_vector("state,value\n0,0.25\n1,0.75\n".as_bytes()).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = CsrMatrix::from_dense(2, 3, &[1.5, 0.0, -2.0, 0.0, 1e-17, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a).unwrap();
        let b = read_matrix_market(&buf[..]).unwrap();
        assert_eq!(a.row_ptr(), b.row_ptr());
        assert_eq!(a.col_idx(), b.col_idx());
        assert_eq!(a.values(), b.values());
    }
}
