//! Constructions of stationary renewal processes and finite ergodic
//! Markov chains as finitary factors of i.i.d. uniforms.
//!
//! A process is a *finitary factor* of an i.i.d. source when each output
//! coordinate is determined by finitely many input coordinates, with an
//! almost-surely finite stopping-time radius (the *coding window*). This
//! crate builds such factor maps explicitly and verifies two things about
//! them: the output has exactly the requested law, and the coding windows
//! have exponential tails.
//!
//! The pieces, bottom up:
//!
//! * [`stream`] — deterministic indexed uniforms with random access over ℤ.
//! * [`dist`] — jump distributions with structural exponential tails,
//!   hazards, size-biasing, and an exact stationary sampler used as the
//!   law oracle.
//! * [`gf`] — generating-function analysis of the diluted law `T*_μ`:
//!   the dominant rate `ν`, residue constant `c`, and pmf table.
//! * [`dilution`] — geometric thinning and its exact inverse, refilling
//!   each block from the conditional composition law.
//! * [`renewal`] — the regeneration coder (age chain plus forcing events
//!   with exponentially rare lookback) and a CFTP coder for bounded jumps.
//! * [`markov`] — return-time extraction, excursion sampling, and the
//!   full chain-coding pipeline.
//! * [`verify`] — chi-square, window-tail, and independence checks.
//!
//! The `finitary` binary (see [`cli`]) wires these into reproducible
//! batch runs emitting CSV artifacts.
//!
//! ```
//! use finitary::{JumpDistribution, UniformStream};
//! use finitary::renewal::{code_range, CoderParams};
//!
//! let d = JumpDistribution::geometric(0.25);
//! let params = CoderParams::new(&d)?;
//! let y = UniformStream::new(7, finitary::stream::tags::CHAIN);
//! let sample = code_range(&y, -50..50, &params, &d)?;
//! assert_eq!(sample.bits.len(), 100);
//! # Ok::<(), finitary::renewal::CoderError>(())
//! ```

pub mod cli;
pub mod dilution;
pub mod dist;
pub mod gf;
pub mod markov;
pub mod renewal;
pub mod stream;
pub mod verify;

pub use dilution::BlockFillPlan;
pub use dist::{CodabilityReport, DistributionSpec, GeometricTail, JumpDistribution};
pub use gf::{GfReport, KappaEstimate};
pub use markov::{ExcursionTable, KernelSpec, MarkovSample, TransitionKernel};
pub use renewal::{CodedSample, CoderParams};
pub use stream::{UniformSource, UniformStream};
pub use verify::{ChiSquare, LagReport, TailFit};

// The guide chapters double as doctests so the book can never drift from
// the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(
        jump_distributions,
        "../../../book/src/jump-distributions.md"
    );
    chapter!(indexed_uniforms, "../../../book/src/indexed-uniforms.md");
    chapter!(
        generating_functions,
        "../../../book/src/generating-functions.md"
    );
    chapter!(dilution, "../../../book/src/dilution.md");
    chapter!(
        regeneration_coder,
        "../../../book/src/regeneration-coder.md"
    );
    chapter!(cftp, "../../../book/src/cftp.md");
    chapter!(markov_chains, "../../../book/src/markov-chains.md");
    chapter!(verification, "../../../book/src/verification.md");
    chapter!(command_line, "../../../book/src/command-line.md");
}
