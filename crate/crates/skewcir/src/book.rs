//! The guide chapters under `book/src` are compiled in as doc tests:
//! every fenced Rust snippet in the book runs under `cargo test --doc`,
//! which keeps the prose and the library in lockstep. (mdBook itself
//! cannot execute examples against the crate, so the chapters are
//! attached to hidden modules here instead.)

#[doc = include_str!("../../../book/src/introduction.md")]
mod _introduction {}

#[doc = include_str!("../../../book/src/curves.md")]
mod _curves {}

#[doc = include_str!("../../../book/src/special-functions.md")]
mod _special_functions {}

#[doc = include_str!("../../../book/src/uniqueness-criteria.md")]
mod _uniqueness_criteria {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod _simulation {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod _experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
mod _cli {}
