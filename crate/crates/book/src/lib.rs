//! Compiles every Rust listing of the guide in `book/src` as a doc-test, one
//! module per chapter so a failure names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/attacks.md")]
pub mod attacks {}
#[doc = include_str!("../../../book/src/sets.md")]
pub mod sets {}
#[doc = include_str!("../../../book/src/tube.md")]
pub mod tube {}
#[doc = include_str!("../../../book/src/resilience.md")]
pub mod resilience {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/limitations.md")]
pub mod limitations {}
