#![no_main]

use arche_core::coder::Bitstream;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(bs) = Bitstream::from_bytes(data) {
        assert_eq!(bs.to_bytes(), data);
    }
});
