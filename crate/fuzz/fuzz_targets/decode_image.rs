#![no_main]

use std::sync::OnceLock;

use arche_core::coder::{decode_image, Bitstream, HEADER_LEN};
use arche_core::model::{init_weights, ModelConfig, ModelWeights};
use libfuzzer_sys::fuzz_target;

fn weights() -> &'static ModelWeights {
    static W: OnceLock<ModelWeights> = OnceLock::new();
    W.get_or_init(|| init_weights(&ModelConfig::desk(), 0).expect("desk model"))
}

// The digest is patched to the fuzzing model so inputs reach the entropy
// decoder; large extents are skipped to keep each run short.
fuzz_target!(|data: &[u8]| {
    if data.len() < HEADER_LEN {
        return;
    }
    let w = weights();
    let mut bytes = data.to_vec();
    bytes[12..20].copy_from_slice(&w.digest().to_le_bytes());
    let Ok(bs) = Bitstream::from_bytes(&bytes) else { return };
    if usize::from(bs.header.height) * usize::from(bs.header.width) > 128 * 128 {
        return;
    }
    if let Ok(dec) = decode_image(w, &bs) {
        assert_eq!(dec.image.shape(), [bs.header.height as usize, bs.header.width as usize, 3]);
    }
});
