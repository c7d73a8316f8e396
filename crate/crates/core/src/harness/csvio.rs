use std::path::Path;

use super::trajectory::{Record, Trajectory};
use crate::error::{Error, Result};

/// Bumped whenever the column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 9] = [
    "step",
    "epoch",
    "loss",
    "norm_l2",
    "norm_linf",
    "cos_l2",
    "cos_linf",
    "cos_fp",
    "normalized_linf_margin",
];

/// 17 significant digits, enough to round-trip any f64.
fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn write_csv<W: std::io::Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &traj.records {
        w.write_record([
            r.step.to_string(),
            r.epoch.to_string(),
            fmt_f(r.loss),
            fmt_f(r.norm_l2),
            fmt_f(r.norm_linf),
            fmt_opt(r.cos_l2),
            fmt_opt(r.cos_linf),
            fmt_opt(r.cos_fp),
            fmt_opt(r.normalized_linf_margin),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn emit_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(traj, std::io::BufWriter::new(f))
}

fn parse_f(s: &str, col: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Config(format!("bad value {s:?} in column {col}")))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f(s, col).map(Some)
    }
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Trajectory> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!("unexpected trajectory header {header:?}")));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let step = row[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad step {:?}", &row[0])))?;
        let epoch = row[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad epoch {:?}", &row[1])))?;
        records.push(Record {
            step,
            epoch,
            loss: parse_f(&row[2], CSV_HEADER[2])?,
            norm_l2: parse_f(&row[3], CSV_HEADER[3])?,
            norm_linf: parse_f(&row[4], CSV_HEADER[4])?,
            cos_l2: parse_opt(&row[5], CSV_HEADER[5])?,
            cos_linf: parse_opt(&row[6], CSV_HEADER[6])?,
            cos_fp: parse_opt(&row[7], CSV_HEADER[7])?,
            normalized_linf_margin: parse_opt(&row[8], CSV_HEADER[8])?,
        });
    }
    Ok(Trajectory { records })
}

pub fn parse_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_trajectory_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&Trajectory::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,epoch,loss,norm_l2,norm_linf,cos_l2,cos_linf,cos_fp,normalized_linf_margin\n"
        );
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1.0f64..1.0]
    }

    proptest! {
        #[test]
        fn roundtrip(rows in proptest::collection::vec(
            (any::<u64>(), any::<u64>(), finite(), finite(), finite(),
             proptest::option::of(finite()), proptest::option::of(finite()),
             proptest::option::of(finite()), proptest::option::of(finite())),
            0..20,
        )) {
            let traj = Trajectory {
                records: rows
                    .into_iter()
                    .map(|(step, epoch, loss, n2, ninf, a, b, c, m)| Record {
                        step, epoch, loss, norm_l2: n2, norm_linf: ninf,
                        cos_l2: a, cos_linf: b, cos_fp: c, normalized_linf_margin: m,
                    })
                    .collect(),
            };
            let mut buf = Vec::new();
            write_csv(&traj, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, traj);
        }
    }
}
