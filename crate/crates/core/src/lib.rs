//! Synthesis of physically plausible low-light RGB-D pairs from daylight
//! inputs, plus the numeric kernels and evaluation metrics that go with them.
//!
//! The crate is organized around the stages of the synthesis pipeline:
//!
//! - [`assets`]: loading and augmenting the light-source pattern catalog.
//! - [`flare`]: 3D light placement, intensity sampling, and gamma-domain
//!   flare compositing.
//! - [`noise`]: physically decoupled sensor noise (shot, read, row,
//!   quantization).
//! - [`pipeline`]: the batch driver that turns daylight RGB-D into paired
//!   low-light datasets with reproducible manifests.
//! - [`fusion`]: illumination guidance and multiscale feature fusion as
//!   gradient-checked forward/backward kernels.
//! - [`depth`]: standard monocular depth error and accuracy metrics.
//!
//! Everything downstream of a seed is deterministic: the same inputs and the
//! same 64-bit seed reproduce every output bit for bit.

pub mod assets;
pub mod depth;
pub mod flare;
pub mod fusion;
pub mod io;
pub mod noise;
pub mod pipeline;
pub mod plane;
pub mod seed;

pub use assets::{AssetCatalog, AugmentOptions, LightAsset};
pub use depth::{EvalConfig, MetricsReport};
pub use flare::{CameraIntrinsics, FlareConfig, FlareDraw, LightPlacement};
pub use fusion::{FusionParams, FusionTape};
pub use noise::{NoiseModel, NoiseModelRanges};
pub use pipeline::{Manifest, NightPair, PipelineConfig};
pub use plane::{DepthMap, ImagePlane};
