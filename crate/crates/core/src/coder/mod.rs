//! Range coding of the latents and the bitstream container.

mod bitstream;
mod cdf;
mod codec;
pub mod range;

pub use bitstream::{Bitstream, Header, BITSTREAM_MAGIC, BITSTREAM_VERSION, HEADER_LEN};
pub use cdf::CdfTable;
pub use codec::{
    crop, decode_image, decode_latents, encode_image, reconstruct, reflect_pad, schedule_steps, side_grid,
    CodecStats, Decoded, Encoded, Latents,
};
pub use range::{RangeDecoder, RangeEncoder};
