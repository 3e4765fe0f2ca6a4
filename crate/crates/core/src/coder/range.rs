//! 32-bit range coder over 16-bit cumulative frequency tables.
//!
//! The encoder keeps `low` in a u64 so that a carry out of bit 31 can be
//! propagated into bytes already written. The decoder reads zeros past the end
//! of its input.

use crate::coder::CdfTable;

pub const PROB_BITS: u32 = 16;
pub const PROB_SCALE: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, out: Vec::new() }
    }

    /// Codes the interval `[cum, cum + freq)` out of [`PROB_SCALE`]. The
    /// truncated remainder of the range is left unused, so no symbol is ever
    /// coded with more than its table probability.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= PROB_SCALE);
        let r = self.range >> PROB_BITS;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        if self.low >> 32 != 0 {
            self.carry();
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
    }

    pub fn encode_symbol(&mut self, table: &CdfTable, symbol: i32) {
        let (cum, freq) = table.interval(symbol);
        self.encode(cum, freq);
    }

    fn carry(&mut self) {
        self.low &= 0xFFFF_FFFF;
        for b in self.out.iter_mut().rev() {
            let (v, overflow) = b.overflowing_add(1);
            *b = v;
            if !overflow {
                return;
            }
        }
        unreachable!("carry out of the initial interval");
    }

    /// Terminates the stream with the shortest aligned block `[v, v + 2^-k)`
    /// lying inside the final interval, so the code is prefix-free and never
    /// shorter than the information content of the coded symbols.
    pub fn finish(mut self) -> Vec<u8> {
        if self.out.is_empty() && self.low == 0 && self.range == u32::MAX {
            return self.out;
        }
        let top = self.low + u64::from(self.range);
        for k in 0..=32u32 {
            let unit = 1u64 << (32 - k);
            let v = self.low.div_ceil(unit) * unit;
            if v + unit <= top {
                if v >> 32 != 0 {
                    self.low = v;
                    self.carry();
                }
                let v = v & 0xFFFF_FFFF;
                for i in 0..k.div_ceil(8) {
                    self.out.push((v >> (24 - 8 * i)) as u8);
                }
                return self.out;
            }
        }
        unreachable!("a normalised interval holds an aligned block")
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = Self { input, pos: 0, code: 0, range: u32::MAX };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Bytes consumed beyond the end of the input (zero padding).
    pub fn overrun(&self) -> usize {
        self.pos.saturating_sub(self.input.len())
    }

    /// Scaled target in `[0, PROB_SCALE)`; follow with [`Self::consume`].
    pub fn target(&self) -> u32 {
        let r = self.range >> PROB_BITS;
        (self.code / r).min(PROB_SCALE - 1)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) {
        let r = self.range >> PROB_BITS;
        self.code = self.code.wrapping_sub(r * cum);
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte());
            self.range <<= 8;
        }
    }

    pub fn decode_symbol(&mut self, table: &CdfTable) -> i32 {
        let t = self.target();
        let s = table.lookup(t);
        let (cum, freq) = table.interval(s);
        self.consume(cum, freq);
        s
    }
}
