//! Shared fixtures for the criterion benches.

use mixclust_core::synth::{generate, GeneratorSpec, Synthetic};

/// The 162-object, 33-feature preset used throughout the benches.
pub fn reference_corpus(seed: u64) -> Synthetic {
    generate(&GeneratorSpec::reference(seed)).expect("preset is valid")
}
