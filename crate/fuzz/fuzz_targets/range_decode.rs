#![no_main]

use arche_core::coder::{CdfTable, RangeDecoder, RangeEncoder};
use libfuzzer_sys::fuzz_target;

// First byte picks the alphabet size, the next ones its counts, the rest is
// the coded stream. Decoding arbitrary bytes must not panic, and re-encoding
// what came out must decode to the same symbols.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let n = (n as usize % 16) + 1;
    if rest.len() < n {
        return;
    }
    let counts: Vec<u32> = rest[..n].iter().map(|&b| u32::from(b) + 1).collect();
    let Ok(table) = CdfTable::from_counts(-(n as i32) / 2, &counts) else { return };
    let stream = &rest[n..];
    let mut dec = RangeDecoder::new(stream);
    let symbols: Vec<i32> = (0..stream.len() * 2).map(|_| dec.decode_symbol(&table)).collect();
    let mut enc = RangeEncoder::new();
    for &s in &symbols {
        enc.encode_symbol(&table, s);
    }
    let bytes = enc.finish();
    let mut dec = RangeDecoder::new(&bytes);
    assert!(symbols.iter().all(|&s| dec.decode_symbol(&table) == s));
});
