//! MFRNet: a multi-level feature review residual dense network for removing
//! compression artifacts from decoded video, with everything needed to train
//! and deploy it on a CPU.
//!
//! - [`tensor`], [`ops`], [`autograd`], [`optim`]: a small dense-tensor engine
//!   with reverse-mode gradients and Adam.
//! - [`network`], [`weights`]: the network graph and its weight file format.
//! - [`frame`], [`pipeline`], [`video`]: YCbCr frames, chroma conversion,
//!   overlapped tiling, QP-based model selection and raw/Y4M video I/O.
//! - [`degrade`], [`training`]: a DCT-quantization stand-in for codec
//!   compression, paired-block datasets and the training loop.
//! - [`metrics`]: luma PSNR and Bjøntegaard-delta rate/quality.

pub mod autograd;
pub mod degrade;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod optim;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod video;
pub mod weights;

pub use autograd::{Eager, Exec, Gradients, LayerId, Tape, Var};
pub use error::{Error, Result};
pub use frame::{ChromaFormat, Frame, Plane};
pub use metrics::{bd_quality, bd_rate, psnr_luma, RdCurve, RdPoint};
pub use network::{MfrNet, NetworkConfig};
pub use optim::AdamState;
pub use pipeline::{filter_frame, select_model, ModelBank, ModelId, TilePlan};
pub use tensor::{ConvParams, Scalar, Tensor};
pub use training::{PairSet, TrainingConfig};

