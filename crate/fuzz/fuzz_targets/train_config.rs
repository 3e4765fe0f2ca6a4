#![no_main]

use arche_core::training::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = TrainConfig::from_toml(text) {
            let _ = cfg.model_config();
        }
    }
});
