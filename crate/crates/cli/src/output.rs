//! CSV tables. Every table has a header row and rows in a fixed order.

use boltzmann_core::norms::NormReport;
use boltzmann_core::verify::{CycleTable, EstimateReport};
use serde::Serialize;

use crate::error::CliError;

fn to_csv<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn time_series_csv(reports: &[NormReport]) -> Result<Vec<u8>, CliError> {
    let header = ["t", "mass", "entropy", "lp_v_linf_x", "l2_xv", "l2_gamma_plus", "q_small", "q_large"];
    to_csv(&header, reports)
}

pub fn report_csv(reports: &[EstimateReport]) -> Result<Vec<u8>, CliError> {
    let header = ["name", "ratio_sup", "ratio_samples", "refinement_trend", "pass", "max_change", "seed", "note"];
    to_csv(
        &header,
        reports.iter().map(|r| (&r.name, r.ratio_sup, r.ratio_samples, r.refinement_trend, r.pass, r.max_change(), r.seed, &r.note)),
    )
}

pub fn levels_csv(reports: &[EstimateReport]) -> Result<Vec<u8>, CliError> {
    let header = ["name", "level", "label", "baseline", "grid_n", "n_polar", "samples", "sup", "grid_hash"];
    let rows = reports.iter().flat_map(|r| {
        r.levels
            .iter()
            .enumerate()
            .map(move |(i, l)| (&r.name, i, &l.label, l.baseline, l.grid_n, l.n_polar, l.samples, l.sup, &l.grid_hash))
    });
    to_csv(&header, rows)
}

pub fn profile_csv(reports: &[EstimateReport]) -> Result<Vec<u8>, CliError> {
    let rows = reports.iter().flat_map(|r| r.profile.iter().map(move |(x, y)| (&r.name, x, y)));
    to_csv(&["name", "x", "value"], rows)
}

pub fn cycle_csv(table: &CycleTable) -> Result<Vec<u8>, CliError> {
    to_csv(&["t", "k", "p_hat", "stderr"], table.rows.iter().map(|r| (r.t, r.k, r.p_hat, r.stderr)))
}
