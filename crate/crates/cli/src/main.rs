//! `arche`: train, encode, decode and evaluate the learned image codec.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use arche_core::coder::{decode_image, encode_image, Bitstream};
use arche_core::eval::{
    bd_rate, evaluate_corpus, read_ppm_file, read_rd_csv, write_eval_csv, write_ppm_file, write_rd_csv, Image,
    QualityAxis, RdCurve,
};
use arche_core::model::{Checkpoint, ContextVariant, ModelWeights};
use arche_core::training::TrainConfig;
use clap::{Parser, Subcommand};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "arche", version, about = "Learned image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a PPM image.
    Encode {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// raster, checkerboard or none; defaults to the model's own context.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Reconstruct a PPM image from a bitstream.
    Decode {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-image bpp, PSNR and MS-SSIM over a directory of PPM images.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// BD-rate of a test curve against an anchor curve, in percent.
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "psnr")]
        axis: String,
    },
    /// One RD point per checkpoint, tagged with its lambda.
    Rdcurve {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        weights: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<arche_core::Error> for Failure {
    fn from(e: arche_core::Error) -> Self {
        match e {
            arche_core::Error::Numerical(_) => Failure::Internal(e.into()),
            e => Failure::Data(e.into()),
        }
    }
}

fn data<E: Into<arche_core::Error>>(context: impl FnOnce() -> String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::from(e.into()).with_context(context)
}

impl Failure {
    fn with_context(self, context: impl FnOnce() -> String) -> Self {
        match self {
            Failure::Usage(e) => Failure::Usage(e.context(context())),
            Failure::Data(e) => Failure::Data(e.context(context())),
            Failure::Internal(e) => Failure::Internal(e.context(context())),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_weights(path: &Path) -> Outcome<ModelWeights> {
    let ckpt = Checkpoint::load(path).map_err(data(|| format!("loading checkpoint {}", path.display())))?;
    Ok(ckpt.weights)
}

fn parse_variant(s: &str) -> Outcome<ContextVariant> {
    ContextVariant::parse(s)
        .ok_or_else(|| Failure::Usage(anyhow!("unknown variant {s:?}; expected raster, checkerboard or none")))
}

fn parse_axis(s: &str) -> Outcome<QualityAxis> {
    QualityAxis::parse(s).ok_or_else(|| Failure::Usage(anyhow!("unknown axis {s:?}; expected psnr or msssim")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome<()> {
    std::fs::write(path, bytes).map_err(data(|| format!("writing {}", path.display())))
}

fn read_curve(path: &Path) -> Outcome<RdCurve> {
    let bytes = std::fs::read(path).map_err(data(|| format!("reading {}", path.display())))?;
    let points = read_rd_csv(&bytes).map_err(data(|| format!("parsing {}", path.display())))?;
    RdCurve::new(path.display().to_string(), points).map_err(data(|| format!("curve {}", path.display())))
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Train { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(data(|| format!("reading {}", config.display())))?;
            let cfg = TrainConfig::from_toml(&text).map_err(data(|| format!("config {}", config.display())))?;
            let report = cfg.run(&out)?;
            if let Some(last) = report.trace.last() {
                println!(
                    "step {} total {:.6} rate_bpp {:.6} mse {:.6}",
                    last.step, last.loss.total, last.loss.rate_bpp, last.loss.distortion_mse
                );
            }
            println!("{}", report.final_checkpoint.display());
        }
        Command::Encode { weights, input, out, variant } => {
            let variant = variant.as_deref().map(parse_variant).transpose()?;
            let w = load_weights(&weights)?;
            let img = read_ppm_file(&input).map_err(data(|| format!("reading {}", input.display())))?;
            let enc = encode_image(&w, &img.to_tensor(), variant)?;
            let bytes = enc.bitstream.to_bytes();
            write_file(&out, &bytes)?;
            println!("{:.6}", bytes.len() as f64 * 8.0 / (img.width * img.height) as f64);
        }
        Command::Decode { weights, input, out } => {
            let w = load_weights(&weights)?;
            let bytes = std::fs::read(&input).map_err(data(|| format!("reading {}", input.display())))?;
            let bs = Bitstream::from_bytes(&bytes).map_err(data(|| format!("parsing {}", input.display())))?;
            let dec = decode_image(&w, &bs)?;
            let img = Image::from_tensor(&dec.image)?;
            write_ppm_file(&out, &img).map_err(data(|| format!("writing {}", out.display())))?;
        }
        Command::Eval { weights, corpus, out, threads } => {
            let w = load_weights(&weights)?;
            let summary = evaluate_corpus(&w, &corpus, None, threads)?;
            write_file(&out, &write_eval_csv(&summary)?)?;
            let m = &summary.mean;
            println!("{} images, mean bpp {:.6} psnr {:.4} msssim {:.6}", summary.rows.len(), m.bpp, m.psnr_db, m.msssim);
        }
        Command::Bdrate { anchor, test, axis } => {
            let axis = parse_axis(&axis)?;
            let r = bd_rate(&read_curve(&anchor)?, &read_curve(&test)?, axis)?;
            println!("{r:.2}%");
        }
        Command::Rdcurve { weights, corpus, out, threads } => {
            let mut points = Vec::new();
            for path in &weights {
                let w = load_weights(path)?;
                let summary = evaluate_corpus(&w, &corpus, None, threads)?;
                points.push((w.config.lambda, summary.mean));
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            write_file(&out, &write_rd_csv(&points)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(Failure::Internal(anyhow!("internal invariant violated"))));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_are_internal() {
        assert_eq!(Failure::from(arche_core::Error::Numerical("nan".into())).code(), EXIT_INTERNAL);
        assert_eq!(Failure::from(arche_core::Error::Invalid("x".into())).code(), EXIT_DATA);
    }

    #[test]
    fn variant_names() {
        assert!(parse_variant("raster").is_ok());
        assert_eq!(parse_variant("zigzag").unwrap_err().code(), EXIT_USAGE);
    }
}
