pub mod bench;
pub mod generate;
pub mod pretrain;
pub mod probe;

pub use bench::{cmd_bench, BenchPlan};
pub use generate::cmd_generate;
pub use pretrain::cmd_pretrain;
pub use probe::{cmd_probe, ModelSource, ProbeMode};
