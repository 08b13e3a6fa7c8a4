//! Guaranteed error bounds by ellipsoidal set membership.

mod chi2;
mod confidence;
mod ellipsoid;
mod gp_bound;
mod linearization;

pub use chi2::{chi_square_cdf, chi_square_scale, ln_gamma, regularized_gamma_p};
pub use confidence::{confidence_step, BoundConfig, BoundSample, BoundTracker, ConfidenceSet};
pub use ellipsoid::Ellipsoid;
pub use gp_bound::{box_enclosure, gp_error_ellipsoid, interval_ellipsoid, GpErrorBound};
pub use linearization::{linearization_error_ellipsoid, map_jacobian, outer_samples};
