//! Geodesics of positive Lagrangians in flat complex space and their
//! transforms to families of imaginary special Lagrangian cylinders.
//!
//! The [`guide`] module carries the chapters of the book in `book/`; their
//! snippets run as doc-tests.

pub mod ambient;
pub mod elliptic;
pub mod error;
pub mod geom;
pub mod grid;
pub mod lagrangian;
pub mod slc;
pub mod sparse;
pub mod spline;
pub mod tolerances;
pub mod transform;

/// The book chapters.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/ambient.md")]
    pub mod ambient {}
    #[doc = include_str!("../../../book/src/geodesics.md")]
    pub mod geodesics {}
    #[doc = include_str!("../../../book/src/forward.md")]
    pub mod forward {}
    #[doc = include_str!("../../../book/src/inverse.md")]
    pub mod inverse {}
    #[doc = include_str!("../../../book/src/solver.md")]
    pub mod solver {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    pub mod acceptance {}
}
