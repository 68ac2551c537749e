//! Solvers for budgeted social choice with ordinal preferences.
//!
//! The crate builds lotteries over bounded-cost outcomes whose support lies
//! in an approximate core: no coalition of voters can fund a cheaper outcome
//! that all of them strictly prefer, up to a multiplicative slack that the
//! solver certifies. The pipeline is
//!
//! 1. solve a linear relaxation of a market equilibrium over the outcome
//!    space ([`lp`]),
//! 2. round the fractional allocation to a single outcome with dependent
//!    rounding ([`rounding`], [`oracle`]),
//! 3. optionally iterate the rounding over shrinking budgets to obtain a
//!    deterministic outcome ([`iterative`]),
//! 4. check every claim after the fact ([`verify`]).

pub mod apps;
pub mod cli;
pub mod iterative;
pub mod leo;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod rounding;
pub mod verify;

pub use model::{load_instance, Instance, Outcome, SubInstance};

/// Guide chapters compiled as doctests, one module per chapter so a failing
/// example names its source file.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod overview {}
    #[doc = include_str!("../../../book/src/instances.md")]
    pub mod instances {}
    #[doc = include_str!("../../../book/src/market.md")]
    pub mod market {}
    #[doc = include_str!("../../../book/src/lotteries.md")]
    pub mod lotteries {}
    #[doc = include_str!("../../../book/src/deterministic.md")]
    pub mod deterministic {}
    #[doc = include_str!("../../../book/src/verification.md")]
    pub mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
