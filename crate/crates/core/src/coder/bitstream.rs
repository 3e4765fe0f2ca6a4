//! Container: `"ARCH"`, u8 version, u16 H, u16 W, u8 variant, u8 lambda
//! index, u8 slice count, u64 model digest, then `slices + 1` segments
//! (side latent first) each as u32 length + payload. Little-endian.

use crate::error::{Error, Result};
use crate::model::ContextVariant;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"ARCH";
pub const BITSTREAM_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    /// Original (unpadded) image extents.
    pub height: u16,
    pub width: u16,
    pub variant: ContextVariant,
    pub lambda_index: u8,
    pub slices: u8,
    pub digest: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    /// Side-latent segment followed by one segment per slice.
    pub segments: Vec<Vec<u8>>,
}

impl Bitstream {
    pub fn payload_bytes(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.segments.iter().map(|s| 4 + s.len()).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.push(h.variant.tag());
        out.push(h.lambda_index);
        out.push(h.slices);
        out.extend_from_slice(&h.digest.to_le_bytes());
        for s in &self.segments {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("bitstream", format!("header needs {HEADER_LEN} bytes, got {}", bytes.len())));
        }
        if &bytes[..4] != BITSTREAM_MAGIC {
            return Err(Error::format("bitstream", "bad magic"));
        }
        if bytes[4] != BITSTREAM_VERSION {
            return Err(Error::format("bitstream", format!("unsupported version {}", bytes[4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let (height, width) = (u16_at(5), u16_at(7));
        if height == 0 || width == 0 {
            return Err(Error::format("bitstream", "zero image extent"));
        }
        let variant = ContextVariant::from_tag(bytes[9])
            .ok_or_else(|| Error::format("bitstream", format!("unknown context variant {}", bytes[9])))?;
        let slices = bytes[11];
        if slices == 0 {
            return Err(Error::format("bitstream", "zero slices"));
        }
        let digest = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let header = Header { height, width, variant, lambda_index: bytes[10], slices, digest };

        let mut pos = HEADER_LEN;
        let mut segments = Vec::with_capacity(slices as usize + 1);
        for segment in 0..=slices as usize {
            let len_bytes = bytes.get(pos..pos + 4).ok_or(Error::Truncated { segment })?;
            let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
            pos += 4;
            let payload = bytes.get(pos..pos.saturating_add(len)).ok_or(Error::Truncated { segment })?;
            segments.push(payload.to_vec());
            pos += len;
        }
        if pos != bytes.len() {
            return Err(Error::format("bitstream", format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self { header, segments })
    }
}
