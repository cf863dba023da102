//! `simulate`: write one generated dataset with its ground truth.

use std::path::Path;

use profile_lmm::simulation::{generate_scenario, ScenarioConfig};
use profile_lmm::Error;

use crate::commands::{ensure_dir, write_json};
use crate::ingest::{write_dataset_csv, write_truth_labels_csv};

pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<(), Error> {
    ensure_dir(out)?;
    let (data, truth) = generate_scenario(cfg)?;
    write_dataset_csv(&data, &out.join("data.csv"))?;
    write_truth_labels_csv(&truth, &out.join("truth_labels.csv"))?;
    write_json(&out.join("truth_params.json"), &truth)?;
    write_json(&out.join("scenario.json"), cfg)?;
    println!(
        "wrote {} observations from {} individuals to {}",
        data.n(),
        data.m(),
        out.display()
    );
    Ok(())
}
