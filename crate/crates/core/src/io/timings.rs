use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::IoError;
use crate::driver::{TimingPhase, TimingRecord};

/// CSV `phase,step,seconds`, followed by one `phase,all,total` row per phase
/// that occurs.
pub fn write_timings(records: &[TimingRecord], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("phase,step,seconds\n");
    let mut totals: BTreeMap<TimingPhase, f64> = BTreeMap::new();
    for r in records {
        let _ = writeln!(out, "{},{},{:.9}", r.phase.label(), r.step, r.seconds);
        *totals.entry(r.phase).or_default() += r.seconds;
    }
    for (phase, total) in totals {
        let _ = writeln!(out, "{},all,{:.9}", phase.label(), total);
    }
    std::fs::write(path, out).map_err(|e| IoError::io(path, e))
}

/// Reads the per-step rows back, skipping the summary.
pub fn read_timings(path: &Path) -> Result<Vec<TimingRecord>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let [phase, step, seconds] = fields[..] else {
            return Err(IoError::parse(path, n + 1, "expected phase,step,seconds"));
        };
        if step == "all" {
            continue;
        }
        let phase =
            TimingPhase::parse(phase).ok_or_else(|| IoError::parse(path, n + 1, format!("unknown phase '{phase}'")))?;
        records.push(TimingRecord {
            phase,
            step: step
                .parse()
                .map_err(|e| IoError::parse(path, n + 1, format!("step: {e}")))?,
            seconds: seconds
                .parse()
                .map_err(|e| IoError::parse(path, n + 1, format!("seconds: {e}")))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_records_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_timings(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "phase,step,seconds\n");
    }

    #[test]
    fn summary_has_one_row_per_phase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rec = |phase, step, seconds| TimingRecord { phase, step, seconds };
        let records = vec![
            rec(TimingPhase::SaturationIntegration, 0, 0.5),
            rec(TimingPhase::Projection, 0, 0.25),
            rec(TimingPhase::SaturationIntegration, 1, 0.5),
        ];
        write_timings(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let summary: Vec<&str> = text.lines().filter(|l| l.contains(",all,")).collect();
        assert_eq!(summary.len(), 2);
        assert!(summary.contains(&"saturation_integration,all,1.000000000"));
        assert_eq!(read_timings(&path).unwrap(), records);
    }
}
