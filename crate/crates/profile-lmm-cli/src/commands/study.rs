//! `study`: replication study with benchmark baselines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use profile_lmm::simulation::{run_replication_study, StudyConfig};
use profile_lmm::Error;

use crate::commands::{ensure_dir, write_json};

pub fn run(cfg: &StudyConfig, out: &Path) -> Result<(), Error> {
    ensure_dir(out)?;
    write_json(&out.join("study_config.json"), cfg)?;
    let report = run_replication_study(cfg)?;
    let mut w = BufWriter::new(File::create(out.join("study.csv"))?);
    writeln!(w, "rep,method,metric,value")?;
    for row in &report.rows {
        writeln!(w, "{},{},{},{}", row.rep + 1, row.method, row.metric, row.value)?;
    }
    w.flush()?;
    write_json(&out.join("study_summary.json"), &report.summaries)?;
    for s in &report.summaries {
        println!(
            "{:>16} {:>28}: median {:>8.4} (min {:>8.4}, max {:>8.4})",
            s.method, s.metric, s.median, s.min, s.max
        );
    }
    Ok(())
}
