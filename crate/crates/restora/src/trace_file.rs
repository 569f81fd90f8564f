//! Convergence traces as CSV: `iter, phase, t_tilde, r_p, r_d, objective`
//! followed by one `restored_load_cluster_<id>` column per cluster.

use std::io::{Read, Write};
use std::path::Path;

use restora_core::ncadmm::TraceRecord;
use restora_core::{ClusterId, ConvergenceTrace, Phase};

use crate::error::InputError;

const FIXED: [&str; 6] = ["iter", "phase", "t_tilde", "r_p", "r_d", "objective"];
const CLUSTER_PREFIX: &str = "restored_load_cluster_";

/// Shortest round-tripping form; negative zero prints as `0`.
fn cell(v: f64) -> String {
    (v + 0.0).to_string()
}

pub fn write_trace<W: Write>(trace: &ConvergenceTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(trace.clusters.iter().map(|c| format!("{CLUSTER_PREFIX}{}", c.0)));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![
            r.iter.to_string(),
            r.phase.as_str().to_string(),
            cell(r.t_tilde),
            cell(r.r_p),
            cell(r.r_d),
            cell(r.objective),
        ];
        row.extend(r.restored_load.iter().map(|&v| cell(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &ConvergenceTrace, path: &Path) -> Result<(), InputError> {
    let file = std::fs::File::create(path).map_err(|e| InputError::io(path, e))?;
    write_trace(trace, std::io::BufWriter::new(file)).map_err(|e| InputError::Invalid(format!("writing trace: {e}")))
}

pub fn read_trace<R: Read>(input: R) -> Result<ConvergenceTrace, InputError> {
    let parse_err = |m: String| InputError::Parse(format!("trace: {m}"));
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if header.len() < FIXED.len() || header.iter().zip(FIXED).any(|(a, b)| a != b) {
        return Err(parse_err(format!("expected columns {} first", FIXED.join(","))));
    }
    let mut clusters = Vec::new();
    for name in header.iter().skip(FIXED.len()) {
        let id = name
            .strip_prefix(CLUSTER_PREFIX)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(format!("unexpected column `{name}`")))?;
        clusters.push(ClusterId(id));
    }
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, InputError> {
            row[i].parse().map_err(|_| parse_err(format!("line {line}: column `{}` is not a number", &header[i])))
        };
        let iter = row[0].parse().map_err(|_| parse_err(format!("line {line}: bad `iter`")))?;
        let phase = Phase::parse(&row[1]).ok_or_else(|| parse_err(format!("line {line}: unknown phase `{}`", &row[1])))?;
        records.push(TraceRecord {
            iter,
            phase,
            t_tilde: num(2)?,
            r_p: num(3)?,
            r_d: num(4)?,
            objective: num(5)?,
            restored_load: (FIXED.len()..row.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(ConvergenceTrace { clusters, records })
}

pub fn read_trace_file(path: &Path) -> Result<ConvergenceTrace, InputError> {
    let file = std::fs::File::open(path).map_err(|e| InputError::io(path, e))?;
    read_trace(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvergenceTrace {
        let rec = |iter, phase, t_tilde| TraceRecord {
            iter,
            phase,
            t_tilde,
            r_p: 0.5 / iter as f64,
            r_d: 1e-9,
            objective: -3.25,
            restored_load: vec![1.0, 0.1 * iter as f64],
        };
        ConvergenceTrace {
            clusters: vec![ClusterId(0), ClusterId(3)],
            records: vec![rec(1, Phase::Relax, 0.0), rec(2, Phase::Drive, 0.2), rec(3, Phase::Project, f64::INFINITY)],
        }
    }

    #[test]
    fn header_and_round_trip() {
        let mut buf = Vec::new();
        write_trace(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "iter,phase,t_tilde,r_p,r_d,objective,restored_load_cluster_0,restored_load_cluster_3\n"
        ));
        assert_eq!(read_trace(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn negative_zero_is_written_as_zero() {
        let mut t = sample();
        t.records[0].restored_load[1] = -0.0;
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("-0,") && !text.contains("-0\n"), "{text}");
    }

    #[test]
    fn bad_rows_name_the_line() {
        let text = "iter,phase,t_tilde,r_p,r_d,objective\n1,relax,0,1,1,1\n2,relax,x,1,1,1\n";
        let msg = read_trace(text.as_bytes()).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("t_tilde"), "{msg}");
        assert!(read_trace("iter,phase\n".as_bytes()).is_err());
    }
}
