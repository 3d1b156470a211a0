//! CSV rows and a plain-text summary for a set of experiment reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::experiment::{ExperimentReport, Impl};
use crate::HarnessError;

pub const CSV_HEADER: [&str; 7] = ["impl", "initiators", "iterations", "repeat", "wall_ms", "blocks", "failed_txs"];

/// One row per repeat, after a header row. An empty input gives the header alone.
pub fn write_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rep in reports {
        let c = &rep.config;
        for r in &rep.runs {
            w.write_record([
                c.implementation.name().to_string(),
                c.initiators.to_string(),
                c.iterations.to_string(),
                r.repeat.to_string(),
                r.wall_ms.to_string(),
                r.blocks.to_string(),
                r.failed_txs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSummary {
    pub implementation: Impl,
    pub initiators: usize,
    pub iterations: u64,
    pub repeats: usize,
    pub min_ms: u64,
    pub max_ms: u64,
    pub mean_ms: f64,
}

/// Mean EXCALL time over mean standard time for one load.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub initiators: usize,
    pub iterations: u64,
    pub excall_mean_ms: f64,
    pub standard_mean_ms: f64,
    pub ratio: f64,
}

pub fn summarize(reports: &[ExperimentReport]) -> (Vec<ConfigSummary>, Vec<RatioRow>) {
    let mut walls: BTreeMap<(usize, u64, Impl), Vec<u64>> = BTreeMap::new();
    for rep in reports {
        let c = &rep.config;
        walls.entry((c.initiators, c.iterations, c.implementation)).or_default().extend(rep.runs.iter().map(|r| r.wall_ms));
    }
    let mut configs = Vec::new();
    let mut means = BTreeMap::new();
    for (&(initiators, iterations, implementation), w) in walls.iter().filter(|(_, w)| !w.is_empty()) {
        let mean_ms = w.iter().map(|&x| x as f64).sum::<f64>() / w.len() as f64;
        means.insert((initiators, iterations, implementation), mean_ms);
        configs.push(ConfigSummary {
            implementation,
            initiators,
            iterations,
            repeats: w.len(),
            min_ms: *w.iter().min().expect("non-empty"),
            max_ms: *w.iter().max().expect("non-empty"),
            mean_ms,
        });
    }
    let mut ratios = Vec::new();
    for (&(initiators, iterations, implementation), &excall_mean_ms) in &means {
        if implementation != Impl::Excall {
            continue;
        }
        if let Some(&standard_mean_ms) = means.get(&(initiators, iterations, Impl::Standard)) {
            let ratio = excall_mean_ms / standard_mean_ms;
            ratios.push(RatioRow { initiators, iterations, excall_mean_ms, standard_mean_ms, ratio });
        }
    }
    (configs, ratios)
}

pub fn summary_text(reports: &[ExperimentReport]) -> String {
    let (configs, ratios) = summarize(reports);
    let mut s = String::new();
    for c in &configs {
        let _ = writeln!(
            s,
            "{} initiators={} iterations={} repeats={} min_ms={} max_ms={} mean_ms={:.1}",
            c.implementation.name(),
            c.initiators,
            c.iterations,
            c.repeats,
            c.min_ms,
            c.max_ms,
            c.mean_ms
        );
    }
    for r in &ratios {
        let _ = writeln!(
            s,
            "ratio initiators={} iterations={} excall/standard={:.3}",
            r.initiators, r.iterations, r.ratio
        );
    }
    s
}

/// Writes the CSV to `out` and returns the summary text.
pub fn emit_report(reports: &[ExperimentReport], out: &Path) -> Result<String, HarnessError> {
    write_csv(reports, std::fs::File::create(out)?)?;
    Ok(summary_text(reports))
}
