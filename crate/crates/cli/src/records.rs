//! Record files: fixed-column CSV with 17 significant digits.

use std::io::{Read, Write};

use serde::Deserialize;

use eit_size::forward::ModelKind;
use eit_size::SolveRecord;

use crate::CliError;

pub const COLUMNS: [&str; 14] = [
    "test_id",
    "model",
    "dim",
    "n_e",
    "k",
    "d0_elems",
    "d03_elems",
    "n_elements",
    "volume_fraction",
    "W0",
    "W",
    "gap",
    "seed",
    "status",
];

/// `{:.16e}`: 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(out: W, records: &[SolveRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            r.test_id.clone(),
            r.model.as_str().to_string(),
            r.dim.to_string(),
            r.n_e.to_string(),
            fmt_f64(r.k),
            r.d0_elems.to_string(),
            r.d03_elems.to_string(),
            r.n_elements.to_string(),
            fmt_f64(r.volume_fraction),
            fmt_f64(r.w0),
            fmt_f64(r.w),
            fmt_f64(r.gap),
            r.seed.to_string(),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Deserialize)]
struct Row {
    test_id: String,
    model: ModelKind,
    dim: usize,
    n_e: usize,
    k: f64,
    d0_elems: usize,
    d03_elems: usize,
    n_elements: usize,
    volume_fraction: f64,
    #[serde(rename = "W0")]
    w0: f64,
    #[serde(rename = "W")]
    w: f64,
    gap: f64,
    seed: u64,
    status: String,
}

/// Reads every row; the shape hash is not stored and comes back as 0.
pub fn read_csv<R: Read>(input: R, origin: &str) -> Result<Vec<SolveRecord>, CliError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd
        .headers()
        .map_err(|e| CliError::Config(format!("{origin}: {e}")))?
        .clone();
    if headers.iter().ne(COLUMNS) {
        return Err(CliError::Config(format!("{origin}: unexpected columns {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rd.deserialize::<Row>() {
        let r = row.map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        out.push(SolveRecord {
            test_id: r.test_id,
            model: r.model,
            dim: r.dim,
            n_e: r.n_e,
            k: r.k,
            d0_elems: r.d0_elems,
            d03_elems: r.d03_elems,
            n_elements: r.n_elements,
            shape_hash: 0,
            volume_fraction: r.volume_fraction,
            w0: r.w0,
            w: r.w,
            gap: r.gap,
            seed: r.seed,
            status: r.status,
        });
    }
    Ok(out)
}
