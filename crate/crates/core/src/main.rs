use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use weldmap::cli::{error_line, run_pipeline, BeltramiSource, PartitionSource, PipelineConfig};

/// Conformal and quasi-conformal parameterization of multiply-connected meshes onto circular domains.
#[derive(Debug, Parser)]
#[command(name = "weldmap", version)]
struct Args {
    /// Input mesh (OBJ or OFF).
    #[arg(long)]
    input: PathBuf,
    /// Face labels file, or auto:N for a built-in partition into N submeshes.
    #[arg(long, default_value = "auto:4")]
    partition: PartitionSource,
    /// Beltrami coefficient CSV (face_index,re,im), or zero for a conformal map.
    #[arg(long, default_value = "zero")]
    mu: BeltramiSource,
    /// Extra Koebe refinement cycles after outer circularization.
    #[arg(long, default_value_t = 0)]
    koebe_passes: usize,
    /// Skip the final quasi-conformal correction of each submesh.
    #[arg(long)]
    no_qc_correction: bool,
    /// Apply the area-balancing disk automorphism to the final map.
    #[arg(long)]
    area_correct: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Reproducible output: no timings in the metrics.
    #[arg(long)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, default_value = "weldmap_out")]
    out: PathBuf,
    /// Write SVG and CSV boundary snapshots of every stage.
    #[arg(long)]
    snapshots: bool,
    /// Write per-face error and area distortion as CSV.
    #[arg(long)]
    face_metrics: bool,
}

impl From<Args> for PipelineConfig {
    fn from(a: Args) -> Self {
        PipelineConfig {
            input: a.input,
            partition: a.partition,
            beltrami: a.mu,
            koebe_passes: a.koebe_passes,
            qc_correction: !a.no_qc_correction,
            area_correct: a.area_correct,
            threads: a.threads,
            deterministic: a.deterministic,
            out_dir: a.out,
            snapshots: a.snapshots,
            face_metrics: a.face_metrics,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WELDMAP_LOG", "warn")).init();
    let config = PipelineConfig::from(Args::parse());
    match run_pipeline(&config) {
        Ok((output, artifacts)) => {
            let r = &output.report;
            println!(
                "{} vertices, {} submeshes: e = {:.4e}, flipped = {}, seam = {:.2e}",
                r.vertex_count, r.submesh_count, r.global_error, r.flipped_faces, r.seam_mismatch
            );
            println!("wrote {} and {}", artifacts.obj.display(), artifacts.metrics.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(2)
        }
    }
}
