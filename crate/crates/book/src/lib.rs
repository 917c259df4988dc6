//! The guide under `book/` compiled as doc tests. mdbook cannot resolve
//! workspace crates when testing snippets, so each chapter is attached to a
//! module here instead and `cargo test` runs its code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/grammars.md")]
pub mod grammars {}

#[doc = include_str!("../../../book/src/charts.md")]
pub mod charts {}

#[doc = include_str!("../../../book/src/gradients.md")]
pub mod gradients {}

#[doc = include_str!("../../../book/src/compound.md")]
pub mod compound {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
