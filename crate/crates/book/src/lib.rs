//! The guide in `book/` as doc comments, so `cargo test` runs its listings.
//! One module per chapter keeps failures traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/likelihood.md")]
pub mod likelihood {}
#[doc = include_str!("../../../book/src/splines.md")]
pub mod splines {}
#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("../../../book/src/estimates.md")]
pub mod estimates {}
#[doc = include_str!("../../../book/src/additive.md")]
pub mod additive {}
#[doc = include_str!("../../../book/src/noncrossing.md")]
pub mod noncrossing {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
