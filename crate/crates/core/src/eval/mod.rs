//! Evaluation: image I/O, quality metrics, BD-rate and RD tables.

mod bdrate;
mod metrics;
mod ppm;
mod report;

pub use bdrate::{bd_rate, fit_log_rate, Polynomial, QualityAxis, RdCurve, RdPoint};
pub use metrics::{mse_u8, ms_ssim, psnr, MsSsim, Psnr, MS_SSIM_WEIGHTS};
pub use ppm::{read_ppm, read_ppm_file, write_ppm, write_ppm_file, Image};
pub use report::{
    evaluate_corpus, evaluate_image, evaluate_images, list_ppm_files, read_eval_csv, read_rd_csv, write_eval_csv, write_rd_csv,
    EvalRow, EvalSummary,
};
