//! Numerical core for disordered statistical mechanics driven by heavy-tailed
//! disorder with tail index gamma in (1,2).
//!
//! The library builds up in layers:
//!
//! * [`tail`]: centered heavy-tailed disorder laws with exact CDF/quantile
//!   oracles, and the noise scales (cell volume, quantile scale, correlation
//!   normalizer) that couple a lattice model to its continuum limit.
//! * [`noise`]: truncated gamma-stable Levy white noise on a box, realized as
//!   a marked Poisson cloud with compensator, with refinement coupling across
//!   truncation levels and the limiting characteristic functional.
//! * [`chaos`]: discrete and continuum polynomial chaos expansions for
//!   symmetric diagonal-vanishing kernels, with a fast Markov-product path,
//!   symmetric L^q norms, and moment-bound diagnostics.
//! * [`pinning`], [`polymer`]: the two concrete models. Renewal pinning with
//!   Mittag-Leffler continuum limits, and the long-range directed polymer over
//!   alpha-stable walks with local limit theorem checks.
//! * [`stats`]: Kolmogorov-Smirnov distances, bootstrap moment estimates, and
//!   empirical characteristic functions used by the verification suite.
//!
//! Everything is deterministic given a master seed: all sampling goes through
//! [`rng::Stream`] keys so replicas are bit-reproducible regardless of thread
//! scheduling.

pub mod chaos;
pub mod error;
pub mod fftconv;
pub mod noise;
pub mod pinning;
pub mod polymer;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;
pub mod tail;

pub use chaos::{ChaosResult, Lattice, ProductKernel, SymmetricKernelSpec};
pub use error::{Error, Result};
pub use noise::{DomainBox, PointCloud};
pub use pinning::{PinningModel, PinningParams, RenewalKernel};
pub use polymer::{PolymerParams, StableDensity, StableWalk};
pub use stats::SampleSet;
pub use tail::{NoiseScales, SupportMode, TailLaw};
