//! Runs the code in the `book/` guide as doc-tests, one module per chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/testing.md")]
pub mod testing {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/shrinkage.md")]
pub mod shrinkage {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/composite.md")]
pub mod composite {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
