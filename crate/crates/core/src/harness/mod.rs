//! Monte-Carlo experiments: configuration, parallel runs, aggregation into
//! figure series, comparison with the error models, and output files.

mod config;
mod experiment;
mod output;
mod verdict;

pub use config::{
    AnalysisConfig, DataConfig, ExperimentConfig, GramMethod, Mode, ModelConfig, NetworkConfig, OutputConfig,
    RunConfig, SyntheticConfig, TopologyKind, OUTPUT_DIR_ENV,
};
pub use experiment::{
    check_assumptions, prepare, run_experiment, run_prepared, AggregateResult, AssumptionReport, ExperimentOutcome,
    Prepared, RunFailure, Source, TailStats,
};
pub use output::{
    read_series, write_figures, write_json, write_outputs, write_series, Manifest, OutputContext, CONFIG_FILE,
    FIG1_FILE, FIG2_FILE, LTI_FILE, MANIFEST_FILE, SPECTRAL_FILE, VERDICT_FILE,
};
pub use verdict::{
    compare_to_theory, fit_slope, FirstMomentVerdict, SecondMomentVerdict, ShapeSummary, Verdict,
    FIRST_MOMENT_SIGMAS, SECOND_MOMENT_SIGMAS,
};

impl<T: crate::Scalar + serde::Serialize> Prepared<T> {
    pub fn output_context(&self) -> OutputContext<'_> {
        OutputContext {
            config: &self.config,
            reference: self.reference.kind,
            reference_theta: self.reference.theta.iter().map(|v| v.as_f64()).collect(),
            pool_rows: self.pool_rows,
            lti_unavailable: self.lti_unavailable.as_deref(),
        }
    }
}
