//! Shared test support: a generator of random valid feed messages and a
//! deliberately naive reference book/extractor implemented straight from the
//! message-format documentation, independent of the library's book.

// Each test target compiles this module on its own and uses a different
// subset of it.
#![allow(dead_code)]

pub mod feedgen;
pub mod naive;
