//! Check bodies shared by the test targets and the acceptance run.

pub mod gradients;
pub mod losses;
pub mod metrics_fixture;
pub mod oracles;
