pub mod audio;
pub mod error;
pub mod numerics;
pub mod objective;
pub mod pooling;
pub mod refinement;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    struct Preprocessing;
    #[doc = include_str!("../../../book/src/refinement.md")]
    struct Refinement;
    #[doc = include_str!("../../../book/src/pooling.md")]
    struct Pooling;
    #[doc = include_str!("../../../book/src/objective.md")]
    struct Objective;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    struct Retrieval;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
