//! The DSO mechanism: augmented-Lagrangian dual decomposition over the
//! linear grid model, DLMP decomposition, and a full-information oracle.

mod alm;
mod kkt;
mod reference;

pub use alm::{
    augmented_lagrangian, dual_update, price_update, run_market, DlmpBreakdown, DualValues,
    MarketResult, RowScales, RowScaling, SolverConfig, SolverState, TraceRecord,
    DEFAULT_TOL_P_PER_AGGREGATOR,
};
pub use kkt::{kkt_report, KktReport, Multipliers};
pub use reference::{solve_reference, ReferenceOptions, ReferenceSolution};
