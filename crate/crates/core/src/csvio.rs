//! Readers and writers for the protocol table (t, delta, lambda) and the
//! mapped-trajectory table, which carries the hash of the trap it was
//! mapped for on a leading comment line.

use std::io::Write;

use crate::error::{Error, Result};
use crate::mapping::MappedTrajectory;
use crate::protocols::{ControlProtocol, ProtocolKind};

pub const PROTOCOL_HEADER: [&str; 3] = ["t", "delta", "lambda"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "V0_joule", "omega_rad_s", "residual"];
/// Prefix of the line recording the trap hash.
pub const HASH_PREFIX: &str = "# trap-sha256: ";

/// Fixed 12-significant-digit formatting used by every table.
/// Negative zero is written as zero.
pub fn fmt12(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.11e}")
}

/// `n` uniform samples of the protocol, in rad/s.
pub fn write_protocol_csv<W: Write>(protocol: &ControlProtocol, n: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROTOCOL_HEADER)?;
    for (t, d, l) in protocol.samples(n)? {
        w.write_record([fmt12(t), fmt12(d), fmt12(l)])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_table(text: &str, header: &[&str], first_line: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (k, record) in reader.records().enumerate() {
        let line = first_line + k;
        let record = record.map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        if !seen_header {
            let got: Vec<&str> = record.iter().map(str::trim).collect();
            if got != header {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected header {}, found {}", header.join(","), got.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .zip(header)
            .map(|(field, name)| match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    reason: format!("column {name}: not a finite number: {field:?}"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if !seen_header {
        return Err(Error::Parse {
            line: first_line,
            reason: format!("missing header {}", header.join(",")),
        });
    }
    Ok(rows)
}

fn check_times(rows: &[Vec<f64>], first_line: usize) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::Parse {
            line: first_line,
            reason: "need at least two data rows".into(),
        });
    }
    for (k, pair) in rows.windows(2).enumerate() {
        if !(pair[1][0] > pair[0][0]) {
            return Err(Error::Parse {
                line: first_line + k + 2,
                reason: "times must be strictly ascending".into(),
            });
        }
    }
    Ok(())
}

/// Read a protocol table back as a tabulated protocol.
pub fn read_protocol_csv(text: &str) -> Result<ControlProtocol> {
    let rows = parse_table(text, &PROTOCOL_HEADER, 1)?;
    check_times(&rows, 1)?;
    if rows[0][0] != 0.0 {
        return Err(Error::Parse {
            line: 2,
            reason: "first time must be 0".into(),
        });
    }
    let mut t = Vec::with_capacity(rows.len());
    let mut delta = Vec::with_capacity(rows.len());
    let mut lambda = Vec::with_capacity(rows.len());
    for r in rows {
        t.push(r[0]);
        delta.push(r[1]);
        lambda.push(r[2]);
    }
    ControlProtocol::from_samples(ProtocolKind::Tabulated, t, delta, lambda)
}

/// Trajectory table preceded by the hash line.
pub fn write_trajectory_csv<W: Write>(trajectory: &MappedTrajectory, trap_hash: &str, mut out: W) -> Result<()> {
    writeln!(out, "{HASH_PREFIX}{trap_hash}")?;
    trajectory.write_csv(out)
}

/// Trajectory and the trap hash recorded with it.
pub fn read_trajectory_csv(text: &str) -> Result<(String, MappedTrajectory)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let hash = first
        .trim_end_matches('\r')
        .strip_prefix(HASH_PREFIX)
        .map(str::trim)
        .filter(|h| h.len() == 64 && h.bytes().all(|b| b.is_ascii_hexdigit()))
        .ok_or_else(|| Error::Parse {
            line: 1,
            reason: format!("expected `{HASH_PREFIX}<64 hex digits>`"),
        })?
        .to_ascii_lowercase();
    let rows = parse_table(rest, &TRAJECTORY_HEADER, 2)?;
    check_times(&rows, 2)?;
    let mut cols = [(); 4].map(|_| Vec::with_capacity(rows.len()));
    for r in rows {
        for (c, v) in cols.iter_mut().zip(r) {
            c.push(v);
        }
    }
    let [t, v0, omega, residual] = cols;
    Ok((hash, MappedTrajectory::new(t, v0, omega, residual)?))
}
