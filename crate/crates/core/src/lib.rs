//! Lower-body pose estimation from three IMUs (pelvis and both shanks) with a
//! constrained extended Kalman filter on the group `SE(3)³ × ℝ⁹`.
//!
//! * [`lie`]: SO(3), SE(3) and ℝⁿ operators.
//! * [`state`]: the product-group state, its error coordinates and the belief.
//! * [`biomech`]: motion, measurement and constraint models with Jacobians.
//! * [`filter`]: predict / update / project and the sequence driver.
//! * [`sim`]: synthetic gait ground truth and sensor corruption.
//! * [`oracle`]: finite-difference Jacobians for testing.

pub mod biomech;
pub mod error;
pub mod filter;
pub mod lie;
pub mod oracle;
pub mod sim;
pub mod state;

pub use biomech::{BodyParams, ImuFrame, NoiseParams, Side};
pub use error::{Error, Result};
pub use filter::{run_filter, FilterConfig, FilterTrace};
pub use lie::{Pose3, Rotation3};
pub use sim::{GaitParams, GroundTruth, PathKind, SensorNoise};
pub use state::{Belief, PoseState, Segment};
