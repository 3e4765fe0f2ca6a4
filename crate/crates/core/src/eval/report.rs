use std::path::{Path, PathBuf};

use crate::coder::{decode_image, encode_image, Bitstream};
use crate::error::{Error, Result};
use crate::eval::{ms_ssim, mse_u8, psnr, Image, RdPoint};
use crate::model::{ContextVariant, ModelWeights};

/// One evaluated image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub file: String,
    pub bpp: f64,
    /// `inf` when lossless.
    pub psnr_db: f64,
    pub msssim: f64,
    /// MSE on the `[0, 1]` scale.
    pub mse: f64,
    pub single_scale: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean: EvalRow,
}

/// Encodes, serializes, parses and decodes `img`, then scores the
/// reconstruction against it.
pub fn evaluate_image(
    weights: &ModelWeights,
    img: &Image,
    variant: Option<ContextVariant>,
    name: &str,
) -> Result<EvalRow> {
    let enc = encode_image(weights, &img.to_tensor(), variant)?;
    let bytes = enc.bitstream.to_bytes();
    let dec = decode_image(weights, &Bitstream::from_bytes(&bytes)?)?;
    let rec = Image::from_tensor(&dec.image)?;
    let ms = ms_ssim(img, &rec)?;
    Ok(EvalRow {
        file: name.to_string(),
        bpp: bytes.len() as f64 * 8.0 / (img.width * img.height) as f64,
        psnr_db: psnr(img, &rec)?.db(),
        msssim: ms.score,
        mse: mse_u8(img, &rec)? / (255.0 * 255.0),
        single_scale: ms.single_scale,
    })
}

/// `.ppm` files in `dir`, sorted by name.
pub fn list_ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Evaluates every PPM image in `dir`; rows are in filename order whatever
/// the thread count.
pub fn evaluate_corpus(
    weights: &ModelWeights,
    dir: &Path,
    variant: Option<ContextVariant>,
    threads: usize,
) -> Result<EvalSummary> {
    let mut images = Vec::new();
    for path in list_ppm_files(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        images.push((name, crate::eval::read_ppm_file(&path)?));
    }
    if images.is_empty() {
        return Err(Error::Invalid(format!("no .ppm images in {}", dir.display())));
    }
    evaluate_images(weights, &images, variant, threads)
}

/// Evaluates named images on up to `threads` workers; output order follows
/// the input order.
pub fn evaluate_images(
    weights: &ModelWeights,
    images: &[(String, Image)],
    variant: Option<ContextVariant>,
    threads: usize,
) -> Result<EvalSummary> {
    if images.is_empty() {
        return Err(Error::Invalid("nothing to evaluate".into()));
    }
    let threads = threads.clamp(1, images.len());
    let run = |k: usize| -> Vec<(usize, Result<EvalRow>)> {
        (k..images.len())
            .step_by(threads)
            .map(|i| (i, evaluate_image(weights, &images[i].1, variant, &images[i].0)))
            .collect()
    };
    let mut results: Vec<(usize, Result<EvalRow>)> = if threads == 1 {
        run(0)
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads).map(|k| s.spawn(move || run(k))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("eval worker panicked")).collect()
        })
    };
    results.sort_by_key(|(i, _)| *i);
    let rows = results.into_iter().map(|(_, r)| r).collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let avg = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = EvalRow {
        file: "mean".into(),
        bpp: avg(|r| r.bpp),
        psnr_db: avg(|r| r.psnr_db),
        msssim: avg(|r| r.msssim),
        mse: avg(|r| r.mse),
        single_scale: rows.iter().any(|r| r.single_scale),
    };
    Ok(EvalSummary { rows, mean })
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// `file,bpp,psnr_db,msssim`, one row per image then the mean row.
pub fn write_eval_csv(summary: &EvalSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(["file", "bpp", "psnr_db", "msssim"]).map_err(io)?;
    for r in summary.rows.iter().chain(std::iter::once(&summary.mean)) {
        w.write_record([r.file.clone(), fmt(r.bpp), fmt(r.psnr_db), fmt(r.msssim)]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))
}

/// `lambda,bpp,psnr_db,msssim`.
pub fn write_rd_csv(points: &[(f64, EvalRow)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(["lambda", "bpp", "psnr_db", "msssim"]).map_err(io)?;
    for (lambda, r) in points {
        w.write_record([lambda.to_string(), fmt(r.bpp), fmt(r.psnr_db), fmt(r.msssim)]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))
}

fn parse_num(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .ok_or_else(|| Error::format("csv", format!("line {line}: bad {what} {field:?}")))
}

/// Reads RD points from either an rdcurve table (`lambda,...`) or an eval
/// table (`file,...`, whose mean row is skipped).
pub fn read_rd_csv(bytes: &[u8]) -> Result<Vec<RdPoint>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = r.headers().map_err(|e| Error::format("csv", e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let tag_col = col("lambda").or_else(|| col("file")).ok_or_else(|| Error::format("csv", "needs a lambda or file column"))?;
    let (bpp, ps, ms) = match (col("bpp"), col("psnr_db"), col("msssim")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::format("csv", "needs bpp, psnr_db and msssim columns")),
    };
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format("csv", format!("line {line}: {e}")))?;
        let get = |c: usize| rec.get(c).ok_or_else(|| Error::format("csv", format!("line {line}: missing column")));
        let tag = get(tag_col)?.trim().to_string();
        if tag == "mean" {
            continue;
        }
        points.push(RdPoint {
            bpp: parse_num(get(bpp)?, "bpp", line)?,
            psnr_db: parse_num(get(ps)?, "psnr_db", line)?,
            msssim: parse_num(get(ms)?, "msssim", line)?,
            tag,
        });
    }
    Ok(points)
}

/// Rows of an eval table (mean row excluded).
pub fn read_eval_csv(bytes: &[u8]) -> Result<Vec<RdPoint>> {
    read_rd_csv(bytes)
}
