pub mod baselines;
pub mod error;
pub mod msm;
pub mod nn;
pub mod pipeline;
pub mod potentials;
pub mod preprocess;
pub mod saliency;
pub mod simulate;
pub mod trajectory;
pub mod vde;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/vde.md")]
    mod vde {}
    #[doc = include_str!("../../../book/src/msm.md")]
    mod msm {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/saliency.md")]
    mod saliency {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
