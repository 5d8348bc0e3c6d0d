//! Gap statistics, placebo tests, leave-one-out refits, jackknife+ bands and
//! cross-specification summaries.

mod gap;
mod grid;
mod jackknife;
mod placebo;
mod summary;

pub use gap::{gap_analysis, GapAnalysis};
pub use grid::{run_spec_grid, SpecGridReport, SpecGridRow};
pub use jackknife::{
    jackknife_band_from, jackknife_plus_band, leave_one_out_donors, refit_without_each,
    DonorRefit, IntervalBand, LooEntry, LooReport, JACKKNIFE_METHOD, ZERO_WEIGHT,
};
pub use placebo::{in_space_placebo, in_space_placebo_with, in_time_placebo, InTimePlacebo, PlaceboRow, PlaceboTable};
pub use summary::{spec_summary, summarize_series, SpecSummary, MAD_MULTIPLIER};
