//! Metrics, synthetic data generation, flow visualization, and ablation
//! sweeps.

mod ablate;
mod metrics;
mod synth;
mod viz;

pub use ablate::{run_ablation, AblationCell, AblationReport, SweepAxis};
pub use metrics::{bd_rate, psnr, psnr_from_mse, RdCurve, RdPoint};
pub use synth::{gen_synthetic, MotionProgram, SyntheticSpec};
pub use viz::{dump_flow_visualization, flow_to_ppm};
