//! Privacy and compression primitives.

pub mod accountant;
pub mod mechanisms;
pub mod params;
pub mod quantize;

pub use accountant::{
    advanced_composition, amplify_by_subsampling, charter_privacy_ledger, Composed, LedgerEntry,
    Mechanism, Partition, PrivacyLedger,
};
pub use mechanisms::{add_gaussian_noise, clip, gaussian_mechanism, gaussian_variance};
pub use params::{
    derive_params, derive_params_with, iteration_count, min_samples, n_floor, DerivedParams,
    ParamInputs, PrivacyParams,
};
pub use quantize::{stochastic_quantize, Quantizer};
