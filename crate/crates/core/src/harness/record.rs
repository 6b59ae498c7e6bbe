use std::io::{Read, Write};

use crate::{Error, Result};

/// Column order of the trial CSV.
pub const CSV_HEADER: [&str; 20] = [
    "trial_id",
    "seed",
    "m",
    "n",
    "k",
    "d",
    "w",
    "nonlinearity",
    "tau",
    "strategy",
    "mu_used",
    "psi_used",
    "err_scaled",
    "err_cos",
    "err_cov",
    "residual",
    "restart_best",
    "runtime_ms",
    "status",
    "membership",
];

/// One trial of a sweep. Failed trials keep their identifying columns and
/// leave the measured ones empty; `status` then holds the error.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub w: usize,
    pub nonlinearity: String,
    pub tau: f64,
    pub strategy: String,
    pub mu_used: Option<f64>,
    pub psi_used: Option<f64>,
    pub err_scaled: Option<f64>,
    pub err_cos: Option<f64>,
    pub err_cov: Option<f64>,
    pub residual: Option<f64>,
    pub restart_best: Option<usize>,
    pub runtime_ms: u64,
    pub status: String,
    /// `verified` when `mu x*` provably lies in the range, else `unverified`.
    pub membership: String,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        vec![
            self.trial_id.to_string(),
            self.seed.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.d.to_string(),
            self.w.to_string(),
            self.nonlinearity.clone(),
            fmt_float(self.tau),
            self.strategy.clone(),
            opt(self.mu_used),
            opt(self.psi_used),
            opt(self.err_scaled),
            opt(self.err_cos),
            opt(self.err_cov),
            opt(self.residual),
            self.restart_best.map(|r| r.to_string()).unwrap_or_default(),
            self.runtime_ms.to_string(),
            self.status.clone(),
            self.membership.clone(),
        ]
    }

    fn from_fields(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Parse(format!(
                "expected {} columns, found {}",
                CSV_HEADER.len(),
                row.len()
            )));
        }
        let get = |i: usize| &row[i];
        Ok(Self {
            trial_id: parse(get(0), "trial_id")?,
            seed: parse(get(1), "seed")?,
            m: parse(get(2), "m")?,
            n: parse(get(3), "n")?,
            k: parse(get(4), "k")?,
            d: parse(get(5), "d")?,
            w: parse(get(6), "w")?,
            nonlinearity: get(7).to_string(),
            tau: parse(get(8), "tau")?,
            strategy: get(9).to_string(),
            mu_used: parse_opt(get(10), "mu_used")?,
            psi_used: parse_opt(get(11), "psi_used")?,
            err_scaled: parse_opt(get(12), "err_scaled")?,
            err_cos: parse_opt(get(13), "err_cos")?,
            err_cov: parse_opt(get(14), "err_cov")?,
            residual: parse_opt(get(15), "residual")?,
            restart_best: parse_opt(get(16), "restart_best")?,
            runtime_ms: parse(get(17), "runtime_ms")?,
            status: get(18).to_string(),
            membership: get(19).to_string(),
        })
    }
}

/// 17 significant digits in scientific notation; parses back exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse<T: std::str::FromStr>(s: &str, column: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad value `{s}` in column {column}")))
}

fn parse_opt<T: std::str::FromStr>(s: &str, column: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, column).map(Some)
    }
}

pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER).map_err(csv_error)?;
    for record in records {
        writer.write_record(record.fields()).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn csv_string(records: &[TrialRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    reader
        .records()
        .map(|row| TrialRecord::from_fields(&row.map_err(csv_error)?))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    } else {
        Error::Parse(e.to_string())
    }
}
