//! Library half of the `tuberack` binary: scenario files, command
//! implementations, SVG rendering, and the lift-height benchmark. Split out
//! so integration tests can drive commands without spawning processes.

pub mod bench;
pub mod commands;
pub mod render;
pub mod scenario;

pub use bench::{run_bench, BenchReport, BenchRow};
pub use commands::{
    cmd_bench, cmd_execute, cmd_plan, cmd_register, cmd_render, register_model, CmdError,
    ExecuteSummary, PlanSummary,
};
pub use render::render_svg;
pub use scenario::{RackSpec, Scenario, ScenarioDoc, ScenarioError, TubeTypeSpec};

/// Crude verbosity switch: `TUBERACK_LOG=debug` (or `trace`) turns on
/// progress lines to stderr; anything else keeps the tool quiet.
pub fn log_enabled() -> bool {
    matches!(
        std::env::var("TUBERACK_LOG").as_deref(),
        Ok("debug") | Ok("trace") | Ok("info")
    )
}

#[macro_export]
macro_rules! logln {
    ($($arg:tt)*) => {
        if $crate::log_enabled() {
            eprintln!($($arg)*);
        }
    };
}
