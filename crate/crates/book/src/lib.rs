//! The guide's chapters, included as documentation so that `cargo test`
//! compiles and runs every Rust listing in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grids.md")]
pub mod grids {}
#[doc = include_str!("../../../book/src/free-energy.md")]
pub mod free_energy {}
#[doc = include_str!("../../../book/src/transport.md")]
pub mod transport {}
#[doc = include_str!("../../../book/src/fokker-planck.md")]
pub mod fokker_planck {}
#[doc = include_str!("../../../book/src/product-flow.md")]
pub mod product_flow {}
#[doc = include_str!("../../../book/src/bridges.md")]
pub mod bridges {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
#[doc = include_str!("../../../book/src/accuracy.md")]
pub mod accuracy {}
