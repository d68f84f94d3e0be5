//! Numerical checks run on computed minimizers.

pub mod caccioppoli;
pub mod equivalence;
pub mod regularity;
pub mod rescale;
pub mod shape;

pub use caccioppoli::{caccioppoli_scan, CaccioppoliSample, CaccioppoliScan};
pub use equivalence::{equivalence_check, EquivalenceCheck};
pub use regularity::{
    boundary_growth_fit, exponent_stats, extract_free_boundary, holder_fit, holder_scan,
    interior_sample_points, ExponentStats, FreeBoundary, RegularityFit,
};
pub use rescale::{
    caccioppoli_ratio, localized_functional, rescale_coeff, rescale_field, rescaled_functional,
    verify_rescaling_identity, RescaleParams, RescaledTerms, RescalingCheck,
};
pub use shape::{boundary_layer_volume, support_shape, SupportShape};
