//! Batch experiments: random scenarios, every algorithm on the same
//! scenario list, and averaged offer/benefit curves.

pub mod batch;
pub mod certify;
pub mod emit;
pub mod error;
pub mod scenario;

pub use batch::{run_batch, run_scenario, BatchConfig, BatchResult, CurvePoint, CurveSeries, Run};
pub use certify::{certify_run, read_run, trailing_refinement_rejections, write_runs, CertifyReport, EpsSource, RunRecord};
pub use emit::{emit_results, emit_series, read_csv, read_json, CsvRow, Format, Report};
pub use error::{BenchError, Result};
pub use scenario::{generate_scenario, scenario_rng, Mode, Scenario, ScenarioConfig};
