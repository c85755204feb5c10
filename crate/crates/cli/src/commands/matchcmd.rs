//! `match`: select candidate items whose observed-frequency histogram
//! matches the v1 dataset's, and record their ids for later stages.

use std::path::Path;

use matchbias::matching::{histogram_match, BinExhaustionPolicy, HistogramSpec};
use matchbias::rng::derive_seed;
use matchbias::synthpop::DatasetTag;

use crate::commands::{records_of, TAG_MATCH};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::schema;

pub fn cmd_match(cfg: &RunConfig, out: &Path) -> Result<()> {
    let rows = schema::read_annotations(&cfg.annotations_path(out))?;
    let target = records_of(&rows, DatasetTag::V1);
    let source = records_of(&rows, DatasetTag::Candidate);
    if target.is_empty() {
        return Err(CliError::Data("no v1 annotations to match against".into()));
    }
    if source.is_empty() {
        return Err(CliError::Data("no candidate annotations to select from".into()));
    }

    let spec = HistogramSpec::new(cfg.bin_edges.clone())?;
    let matched = histogram_match(
        &target,
        &source,
        &spec,
        cfg.sample_size,
        BinExhaustionPolicy::Redistribute,
        derive_seed(cfg.seed, TAG_MATCH),
    )?;

    let mut ids = matched.selected;
    ids.sort_unstable();
    schema::write_matched(&cfg.matched_path(out), &ids)?;
    println!("match: selected {} of {} candidates -> {}", ids.len(), source.len(), cfg.matched_file);
    Ok(())
}
