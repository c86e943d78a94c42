//! Seeded toy-width network blocks: convolutions, squeeze-excitation, the
//! convolutional GRU, the encoder–decoder and the perceptual stand-in.
//!
//! Nothing here trains; every network is a pure function of its seed.

pub mod conv;
pub mod encdec;
pub mod gru;
pub mod init;
pub mod params;
pub mod perceptual;
pub mod se;

pub use conv::{conv_forward, Conv2D, Linear};
pub use encdec::{encdec_forward, EncDecOutput, EncoderDecoder, EncoderDecoderConfig};
pub use gru::{gru_step, Activation, ConvGRUCell, GateConv, GatingLimit};
pub use params::{dump_weights, load_weights, read_weights, write_weights, Parameters};
pub use perceptual::{toy_perceptual_features, PerceptualExtractor};
pub use se::{se_forward, SEBlock};
