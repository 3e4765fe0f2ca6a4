//! Replays the checked-in fuzz seed corpora through the same entry points and
//! properties as the fuzz targets, so they run on stable with `cargo test`.

use std::path::PathBuf;

use arche_core::coder::{decode_image, Bitstream, CdfTable, RangeDecoder, RangeEncoder, HEADER_LEN};
use arche_core::eval::{read_eval_csv, read_ppm, read_rd_csv, write_ppm, RdCurve};
use arche_core::model::{init_weights, Checkpoint, ModelConfig};
use arche_core::training::TrainConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn bitstream_seeds() {
    let mut valid = 0;
    for (name, data) in seeds("bitstream_parse") {
        if let Ok(bs) = Bitstream::from_bytes(&data) {
            assert_eq!(bs.to_bytes(), data, "{name}");
            valid += 1;
        }
    }
    assert!(valid >= 3);
}

#[test]
fn checkpoint_seeds() {
    let mut valid = 0;
    for (name, data) in seeds("checkpoint_parse") {
        if let Ok(ckpt) = Checkpoint::from_bytes(&data) {
            assert_eq!(ckpt.to_bytes(), data, "{name}");
            valid += 1;
        }
    }
    assert_eq!(valid, 2);
}

#[test]
fn ppm_seeds() {
    for (name, data) in seeds("ppm_parse") {
        if let Ok(img) = read_ppm(&data) {
            assert_eq!(read_ppm(&write_ppm(&img)).unwrap(), img, "{name}");
        }
    }
}

#[test]
fn range_decode_seeds() {
    for (name, data) in seeds("range_decode") {
        let Some((&n, rest)) = data.split_first() else { continue };
        let n = (n as usize % 16) + 1;
        if rest.len() < n {
            continue;
        }
        let counts: Vec<u32> = rest[..n].iter().map(|&b| u32::from(b) + 1).collect();
        let Ok(table) = CdfTable::from_counts(-(n as i32) / 2, &counts) else { continue };
        let stream = &rest[n..];
        let mut dec = RangeDecoder::new(stream);
        let symbols: Vec<i32> = (0..stream.len() * 2).map(|_| dec.decode_symbol(&table)).collect();
        let mut enc = RangeEncoder::new();
        for &s in &symbols {
            enc.encode_symbol(&table, s);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        assert!(symbols.iter().all(|&s| dec.decode_symbol(&table) == s), "{name}");
    }
}

#[test]
fn csv_seeds() {
    for (_, data) in seeds("csv_parse") {
        if let Ok(points) = read_rd_csv(&data) {
            let _ = RdCurve::new("seed", points);
        }
        let _ = read_eval_csv(&data);
    }
}

#[test]
fn decode_image_seeds() {
    let w = init_weights(&ModelConfig::desk(), 0).unwrap();
    let mut decoded = 0;
    for (name, data) in seeds("decode_image") {
        if data.len() < HEADER_LEN {
            continue;
        }
        let mut bytes = data.clone();
        bytes[12..20].copy_from_slice(&w.digest().to_le_bytes());
        let Ok(bs) = Bitstream::from_bytes(&bytes) else { continue };
        if let Ok(dec) = decode_image(&w, &bs) {
            assert_eq!(dec.image.shape(), [bs.header.height as usize, bs.header.width as usize, 3], "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 3);
}

#[test]
fn train_config_seeds() {
    for (name, data) in seeds("train_config") {
        let cfg = TrainConfig::from_toml(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.model_config().unwrap();
    }
}
