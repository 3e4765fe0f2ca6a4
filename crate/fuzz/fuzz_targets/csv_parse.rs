#![no_main]

use arche_core::eval::{read_eval_csv, read_rd_csv, RdCurve};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_rd_csv(data) {
        let _ = RdCurve::new("fuzz", points);
    }
    let _ = read_eval_csv(data);
});
