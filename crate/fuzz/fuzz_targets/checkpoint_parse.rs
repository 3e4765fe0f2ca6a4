#![no_main]

use arche_core::model::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&ckpt.to_bytes()).expect("re-serialized checkpoint parses");
        assert_eq!(again.weights.digest(), ckpt.weights.digest());
    }
});
