//! CSV/JSON rendering with exact round trips, and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::asymptotics::AsymRecord;
use crate::error::{GwError, Result};
use crate::iteration::IterationTrace;

/// 17 significant digits, enough to round-trip any binary64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| GwError::Parse(format!("bad number {s:?}: {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| GwError::Parse(format!("bad integer {s:?}: {e}")))
}

fn csv_err(e: csv::Error) -> GwError {
    GwError::Parse(e.to_string())
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| GwError::Io(e.to_string()))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| GwError::Parse(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub const ASYM_HEADER: [&str; 6] = ["n", "lhs", "rhs_main", "rhs_correction", "residual", "normalized"];

pub fn asym_csv(records: &[AsymRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ASYM_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            fmt17(r.lhs),
            fmt17(r.rhs_main),
            fmt17(r.rhs_correction),
            fmt17(r.residual),
            fmt17(r.normalized),
        ])
        .map_err(csv_err)?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| GwError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| GwError::Parse(e.to_string()))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<usize> {
    let hdr = rdr.headers().map_err(csv_err)?;
    let got: Vec<&str> = hdr.iter().collect();
    if got.len() < want.len() || got[..want.len()] != *want {
        return Err(GwError::Parse(format!("unexpected header {got:?}")));
    }
    Ok(got.len())
}

pub fn parse_asym_csv(text: &str) -> Result<Vec<AsymRecord>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &ASYM_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        out.push(AsymRecord {
            n: parse_usize(&rec[0])?,
            lhs: parse_f64(&rec[1])?,
            rhs_main: parse_f64(&rec[2])?,
            rhs_correction: parse_f64(&rec[3])?,
            residual: parse_f64(&rec[4])?,
            normalized: parse_f64(&rec[5])?,
        });
    }
    Ok(out)
}

pub fn trace_csv(rows: &[IterationTrace]) -> Result<String> {
    let tracked = rows.first().is_some_and(|r| r.fn_s.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n", "fn0", "Qn", "p1n"];
    if tracked {
        header.extend(["fn_s", "dfn_s"]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.n.to_string(), fmt17(r.fn0), fmt17(r.qn), fmt17(r.p1n)];
        if tracked {
            rec.push(fmt17(r.fn_s.unwrap_or(f64::NAN)));
            rec.push(fmt17(r.dfn_s.unwrap_or(f64::NAN)));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    into_string(w)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<IterationTrace>> {
    let mut rdr = reader(text);
    let width = check_header(&mut rdr, &["n", "fn0", "Qn", "p1n"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let opt = |i: usize| -> Result<Option<f64>> { if width > i { Ok(Some(parse_f64(&rec[i])?)) } else { Ok(None) } };
        out.push(IterationTrace {
            n: parse_usize(&rec[0])?,
            fn0: parse_f64(&rec[1])?,
            qn: parse_f64(&rec[2])?,
            p1n: parse_f64(&rec[3])?,
            fn_s: opt(4)?,
            dfn_s: opt(5)?,
        });
    }
    Ok(out)
}

/// `j,p_j` table.
pub fn coeff_csv(coeffs: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "p_j"]).map_err(csv_err)?;
    for (j, c) in coeffs.iter().enumerate() {
        w.write_record([j.to_string(), fmt17(*c)]).map_err(csv_err)?;
    }
    into_string(w)
}

pub fn parse_coeff_csv(text: &str) -> Result<Vec<f64>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &["j", "p_j"])?;
    rdr.records()
        .map(|r| {
            let r = r.map_err(csv_err)?;
            parse_f64(&r[1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, f64::MIN_POSITIVE, 0.3232233047033631] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn asym_round_trip() {
        let recs = vec![
            AsymRecord::new(1, 0.8284271247461903, 0.5, 0.4054651081081644, f64::NAN),
            AsymRecord::new(10, 1.0 / 7.0, -3.0, 1e-20, 2.0 / 3.0),
        ];
        let text = asym_csv(&recs).unwrap();
        assert!(text.starts_with("n,lhs,rhs_main,rhs_correction,residual,normalized\n"));
        let back = parse_asym_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].normalized.is_nan());
        assert_eq!(back[1], recs[1]);
        assert!(back.iter().all(AsymRecord::consistent));
    }

    #[test]
    fn trace_round_trip() {
        let rows = vec![IterationTrace {
            n: 2,
            fn0: 0.6767766952966369,
            qn: 0.3232233047033631,
            p1n: 0.11741747852752232,
            fn_s: Some(0.8),
            dfn_s: Some(0.3),
        }];
        let back = parse_trace_csv(&trace_csv(&rows).unwrap()).unwrap();
        assert_eq!(back, rows);
        assert!(parse_trace_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
    }
}
