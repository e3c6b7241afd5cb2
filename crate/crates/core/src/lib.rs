//! Resilient tube-based model predictive control under probabilistic
//! false-data-injection attacks.
//!
//! The crate is layered bottom-up:
//!
//! * [`geometry`]: H-polytopes, Minkowski and Pontryagin operations,
//!   invariant set approximations.
//! * [`solvers`]: LP, dense QP, and the Riccati and Stein equations.
//! * [`attacks`]: the Bernoulli-Gaussian attack model and buffer sizing.
//! * [`tube`]: terminal ingredient synthesis and the condensed OCP.
//! * [`resilience`]: the prediction-based detector and buffered controller.
//! * [`sim`]: plants, closed-loop runs and Monte Carlo campaigns.
//!
//! ```
//! use rtmpc::attacks::{buffer_length, over_threshold_prob};
//!
//! let zeta = over_threshold_prob(0.0, 20.0, 4.0).unwrap();
//! assert_eq!(buffer_length(0.2 * zeta, 100, 0.01).unwrap(), 6);
//! ```

pub mod attacks;
pub mod geometry;
pub mod resilience;
pub mod sim;
pub mod solvers;
pub mod tube;
