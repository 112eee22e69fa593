//! The book chapters under `book/src`, compiled as doc-tests so every
//! snippet stays in sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/policies.md")]
pub mod policies {}
#[doc = include_str!("../../../book/src/contexts.md")]
pub mod contexts {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/hard_instances.md")]
pub mod hard_instances {}
#[doc = include_str!("../../../book/src/classification.md")]
pub mod classification {}
