//! Result files: `rounds.csv`, `summary.csv`, `summary.json`, `report.md`,
//! the effective `config.toml`, and optional per-round traces.

use super::{confidence_interval, CheckReport, ExperimentError, MatrixResult, RoundResult, Summary};
use crate::config::ScenarioConfig;
use crate::rpl::Mode;
use crate::world::DropReason;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.md";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_DIR: &str = "traces";

const FIXED_COLUMNS: [&str; 8] = [
    "scenario",
    "mode",
    "round",
    "seed",
    "pdr",
    "energy_per_delivered",
    "sends",
    "delivered",
];

fn rounds_header() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(DropReason::ALL.iter().map(|r| format!("drop_{r}")))
        .collect()
}

pub fn write_rounds<W: std::io::Write>(out: W, rounds: &[RoundResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(rounds_header())?;
    for r in rounds {
        let mut rec = vec![
            r.scenario.clone(),
            r.mode.to_string(),
            r.round.to_string(),
            r.seed.to_string(),
            r.pdr.to_string(),
            r.energy_per_delivered.to_string(),
            r.sends.to_string(),
            r.delivered.to_string(),
        ];
        rec.extend(DropReason::ALL.iter().map(|d| r.drops.get(d).copied().unwrap_or(0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T, ExperimentError> {
    let raw = rec
        .get(i)
        .ok_or_else(|| ExperimentError::Format(format!("line {line}: missing column {i}")))?;
    raw.parse()
        .map_err(|_| ExperimentError::Format(format!("line {line}: cannot parse `{raw}`")))
}

pub fn read_rounds(path: &Path) -> Result<Vec<RoundResult>, ExperimentError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != rounds_header() {
        return Err(ExperimentError::Format(format!(
            "{} has an unexpected header",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mode: Mode = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e| ExperimentError::Format(format!("line {line}: {e}")))?;
        let mut drops = BTreeMap::new();
        for (k, d) in DropReason::ALL.iter().enumerate() {
            drops.insert(*d, field(&rec, FIXED_COLUMNS.len() + k, line)?);
        }
        out.push(RoundResult {
            scenario: field(&rec, 0, line)?,
            mode,
            round: field(&rec, 2, line)?,
            seed: field(&rec, 3, line)?,
            pdr: field(&rec, 4, line)?,
            energy_per_delivered: field(&rec, 5, line)?,
            sends: field(&rec, 6, line)?,
            delivered: field(&rec, 7, line)?,
            drops,
        });
    }
    Ok(out)
}

/// Groups rounds by (scenario, mode) in order of first appearance.
pub fn summarize(rounds: &[RoundResult]) -> Vec<Summary> {
    let mut groups: Vec<((String, Mode), Vec<&RoundResult>)> = Vec::new();
    for r in rounds {
        let key = (r.scenario.clone(), r.mode);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((scenario, mode), rs)| Summary {
            scenario,
            mode,
            pdr: confidence_interval(&rs.iter().map(|r| r.pdr).collect::<Vec<_>>()),
            energy_per_delivered: confidence_interval(
                &rs.iter().map(|r| r.energy_per_delivered).collect::<Vec<_>>(),
            ),
        })
        .collect()
}

pub fn write_summary<W: std::io::Write>(out: W, summaries: &[Summary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "mode", "metric", "mean", "ci95_halfwidth"])?;
    for s in summaries {
        for (metric, e) in [("pdr", s.pdr), ("energy_per_delivered", s.energy_per_delivered)] {
            w.write_record([
                s.scenario.as_str(),
                s.mode.as_str(),
                metric,
                &e.mean.to_string(),
                &e.half_width.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cell(e: Option<&super::Estimate>, digits: usize) -> String {
    match e {
        None => "-".to_string(),
        Some(e) if e.is_defined() => format!("{:.*} ± {:.*}", digits, e.mean, digits, e.half_width),
        Some(e) => format!("{:.*}", digits, e.mean),
    }
}

/// Markdown tables of PDR and sender energy per scenario, one column per mode.
pub fn render_report(summaries: &[Summary]) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    for s in summaries {
        if !scenarios.contains(&s.scenario.as_str()) {
            scenarios.push(&s.scenario);
        }
    }
    let get = |scenario: &str, mode| summaries.iter().find(|s| s.scenario == scenario && s.mode == mode);
    let mut out = String::new();
    for (title, digits, pick) in [
        ("Packet delivery ratio", 3, (|s: &Summary| s.pdr) as fn(&Summary) -> super::Estimate),
        ("Sender energy per delivered packet (mJ)", 3, |s: &Summary| s.energy_per_delivered),
    ] {
        let _ = writeln!(out, "## {title}\n");
        let _ = writeln!(out, "| scenario | vanilla | csm |");
        let _ = writeln!(out, "|---|---|---|");
        for sc in &scenarios {
            let v = get(sc, Mode::Vanilla).map(pick);
            let c = get(sc, Mode::Csm).map(pick);
            let _ = writeln!(out, "| {sc} | {} | {} |", cell(v.as_ref(), digits), cell(c.as_ref(), digits));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    config: &'a ScenarioConfig,
    summaries: &'a [Summary],
    round_violations: &'a [String],
    check_failures: &'a [String],
    check_warnings: &'a [String],
}

pub struct ResultFiles {
    pub rounds: PathBuf,
    pub summary: PathBuf,
    pub summary_json: PathBuf,
    pub report: PathBuf,
}

fn trace_name(scenario: &str, mode: Mode, round: u32) -> String {
    format!("{}_{mode}_r{round}.csv", scenario.replace('/', "_"))
}

/// Writes every result file for a run into `dir`.
pub fn write_results(
    dir: &Path,
    base: &ScenarioConfig,
    result: &MatrixResult,
    checks: &CheckReport,
) -> Result<ResultFiles, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let files = ResultFiles {
        rounds: dir.join(ROUNDS_FILE),
        summary: dir.join(SUMMARY_FILE),
        summary_json: dir.join(SUMMARY_JSON_FILE),
        report: dir.join(REPORT_FILE),
    };
    write_rounds(std::fs::File::create(&files.rounds)?, &result.rounds)?;
    write_summary(std::fs::File::create(&files.summary)?, &result.summaries)?;
    std::fs::write(&files.report, render_report(&result.summaries))?;
    std::fs::write(dir.join(CONFIG_FILE), base.to_toml())?;
    let doc = SummaryDocument {
        config: base,
        summaries: &result.summaries,
        round_violations: &result.violations,
        check_failures: &checks.failures,
        check_warnings: &checks.warnings,
    };
    std::fs::write(&files.summary_json, serde_json::to_string_pretty(&doc)?)?;
    if !result.traces.is_empty() {
        let tdir = dir.join(TRACE_DIR);
        std::fs::create_dir_all(&tdir)?;
        for t in &result.traces {
            t.trace.save(&tdir.join(trace_name(&t.scenario, t.mode, t.round)))?;
        }
    }
    Ok(files)
}

/// Recomputes `summary.csv` and `report.md` in `dir` from its `rounds.csv`.
pub fn regenerate(dir: &Path) -> Result<Vec<Summary>, ExperimentError> {
    let rounds = read_rounds(&dir.join(ROUNDS_FILE))?;
    let summaries = summarize(&rounds);
    write_summary(std::fs::File::create(dir.join(SUMMARY_FILE))?, &summaries)?;
    std::fs::write(dir.join(REPORT_FILE), render_report(&summaries))?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RoundResult> {
        let drops: BTreeMap<DropReason, u32> = DropReason::ALL.iter().map(|&d| (d, 0)).collect();
        let mut busy = drops.clone();
        busy.insert(DropReason::BufferBusy, 19);
        vec![
            RoundResult {
                scenario: "frag1-only/before".into(),
                mode: Mode::Vanilla,
                round: 0,
                seed: 1,
                pdr: 0.0,
                energy_per_delivered: f64::INFINITY,
                sends: 19,
                delivered: 0,
                drops: busy,
            },
            RoundResult {
                scenario: "frag1-only/before".into(),
                mode: Mode::Vanilla,
                round: 1,
                seed: 2,
                pdr: 1.0 / 3.0,
                energy_per_delivered: 2.5,
                sends: 3,
                delivered: 1,
                drops,
            },
        ]
    }

    #[test]
    fn rounds_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ROUNDS_FILE);
        write_rounds(std::fs::File::create(&path).unwrap(), &sample()).unwrap();
        assert_eq!(read_rounds(&path).unwrap(), sample());
    }

    #[test]
    fn summary_marks_undefined_intervals() {
        let s = summarize(&sample());
        assert_eq!(s.len(), 1);
        assert!(s[0].energy_per_delivered.mean.is_infinite());
        assert!(s[0].energy_per_delivered.half_width.is_nan());
        let mut buf = Vec::new();
        write_summary(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("energy_per_delivered,inf,NaN"), "{text}");
    }

    #[test]
    fn rejects_foreign_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ROUNDS_FILE);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_rounds(&path), Err(ExperimentError::Format(_))));
    }
}
