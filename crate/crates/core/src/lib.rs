pub mod adversarial;
pub mod analysis;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod flare;
pub mod graph;
pub mod harness;
pub mod policies;
pub mod schema;

pub use error::{HorizonError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/counterexamples.md")]
    mod counterexamples {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/flare.md")]
    mod flare {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
