//! Configuration, input loading and artifact writing around [`parameterize`].

use crate::assemble::beltrami_error;
use crate::flatten::BeltramiField;
use crate::mesh::{default_partition, load_beltrami_csv, load_labels, load_mesh, write_obj_with_uv, MeshError, PartitionLabeling, TriangleMesh};
use crate::pipeline::{parameterize, PipelineError, PipelineOptions, PipelineOutput};
use crate::snapshot::{chains_csv, render_svg};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartitionSource {
    File(PathBuf),
    Auto(usize),
}

impl FromStr for PartitionSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("auto:") {
            Some(n) => match n.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(PartitionSource::Auto(n)),
                _ => Err(format!("expected auto:N with N >= 1, got '{s}'")),
            },
            None => Ok(PartitionSource::File(PathBuf::from(s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BeltramiSource {
    Zero,
    File(PathBuf),
}

impl FromStr for BeltramiSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "zero" { BeltramiSource::Zero } else { BeltramiSource::File(PathBuf::from(s)) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub partition: PartitionSource,
    pub beltrami: BeltramiSource,
    pub koebe_passes: usize,
    pub qc_correction: bool,
    pub area_correct: bool,
    pub threads: usize,
    pub deterministic: bool,
    pub out_dir: PathBuf,
    pub snapshots: bool,
    pub face_metrics: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            partition: PartitionSource::Auto(DEFAULT_PARTS),
            beltrami: BeltramiSource::Zero,
            koebe_passes: 0,
            qc_correction: true,
            area_correct: false,
            threads: 1,
            deterministic: false,
            out_dir: out_dir.into(),
            snapshots: false,
            face_metrics: false,
        }
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            koebe_passes: self.koebe_passes,
            qc_correction: self.qc_correction,
            area_correct: self.area_correct,
            deterministic: self.deterministic,
            snapshots: self.snapshots,
            ..PipelineOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !self.input.is_file() {
            return Err(RunError::MeshNotFound(self.input.clone()));
        }
        if let BeltramiSource::File(p) = &self.beltrami {
            if !p.is_file() {
                return Err(RunError::BeltramiNotFound(p.clone()));
            }
        }
        if let PartitionSource::File(p) = &self.partition {
            if !p.is_file() {
                return Err(RunError::PartitionNotFound(p.clone()));
            }
        }
        if self.threads == 0 {
            return Err(RunError::Invalid("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Submesh count used by `auto` partitioning when none is given.
pub const DEFAULT_PARTS: usize = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("mesh file not found: {}", .0.display())]
    MeshNotFound(PathBuf),
    #[error("Beltrami file not found: {}", .0.display())]
    BeltramiNotFound(PathBuf),
    #[error("partition file not found: {}", .0.display())]
    PartitionNotFound(PathBuf),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading mesh: {0}")]
    Mesh(MeshError),
    #[error("reading Beltrami field: {0}")]
    Beltrami(MeshError),
    #[error("reading partition: {0}")]
    Partition(MeshError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("writing {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::MeshNotFound(_) => "CONFIG_MESH_NOT_FOUND",
            RunError::BeltramiNotFound(_) => "CONFIG_BELTRAMI_NOT_FOUND",
            RunError::PartitionNotFound(_) => "CONFIG_PARTITION_NOT_FOUND",
            RunError::Invalid(_) => "CONFIG_INVALID",
            RunError::Mesh(_) => "MESH_INVALID",
            RunError::Beltrami(_) => "BELTRAMI_INVALID",
            RunError::Partition(_) => "PARTITION_INVALID",
            RunError::Pipeline(e) => e.code(),
            RunError::Write { .. } => "OUTPUT_WRITE_FAILED",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self {
            RunError::MeshNotFound(_) => "check the --input path",
            RunError::BeltramiNotFound(_) => "pass --mu zero or an existing CSV file",
            RunError::PartitionNotFound(_) => "pass --partition auto:N or an existing label file",
            RunError::Invalid(_) => "see --help",
            RunError::Mesh(_) => "the input must be an OBJ or OFF oriented manifold triangle mesh with boundary",
            RunError::Beltrami(_) => "the Beltrami CSV needs rows `face_index,re,im`",
            RunError::Partition(_) => "the label file needs one integer per face",
            RunError::Pipeline(e) => e.hint(),
            RunError::Write { .. } => "check that the output directory is writable",
        }
    }
}

/// Loaded inputs of a run.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub mesh: TriangleMesh,
    pub labels: PartitionLabeling,
    pub target: BeltramiField,
}

pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs, RunError> {
    config.validate()?;
    let mesh = load_mesh(&config.input, None).map_err(RunError::Mesh)?;
    let target = match &config.beltrami {
        BeltramiSource::Zero => BeltramiField::zero(mesh.face_count()),
        BeltramiSource::File(p) => BeltramiField::new(load_beltrami_csv(p, mesh.face_count()).map_err(RunError::Beltrami)?),
    };
    let labels = match &config.partition {
        PartitionSource::Auto(n) => default_partition(&mesh, *n),
        PartitionSource::File(p) => PartitionLabeling::new(load_labels(p).map_err(RunError::Partition)?),
    };
    Ok(Inputs { mesh, labels, target })
}

/// Paths of the files written by a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub obj: PathBuf,
    pub metrics: PathBuf,
    pub face_metrics: Option<PathBuf>,
    pub snapshots: Vec<PathBuf>,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, RunError> {
    std::fs::write(&path, contents).map_err(|source| RunError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Loads the inputs, runs every stage on a pool of `threads` workers and writes the artifacts.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(PipelineOutput, Artifacts), RunError> {
    let inputs = load_inputs(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| RunError::Invalid(format!("thread pool: {e}")))?;
    let options = config.options();
    let output = pool.install(|| parameterize(&inputs.mesh, &inputs.labels, &inputs.target, &options))?;
    let artifacts = write_artifacts(config, &inputs, &output)?;
    Ok((output, artifacts))
}

pub fn write_artifacts(config: &PipelineConfig, inputs: &Inputs, output: &PipelineOutput) -> Result<Artifacts, RunError> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Write { path: dir.clone(), source })?;
    let stem = config.input.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let obj = write(dir.join(format!("{stem}_param.obj")), &write_obj_with_uv(&inputs.mesh, &output.param.uv))?;
    let mut json = serde_json::to_string_pretty(&output.report).map_err(|e| RunError::Invalid(e.to_string()))?;
    json.push('\n');
    let metrics = write(dir.join(format!("{stem}_metrics.json")), &json)?;
    let face_metrics = if config.face_metrics {
        Some(write(dir.join(format!("{stem}_faces.csv")), &face_metrics_csv(inputs, output)?)?)
    } else {
        None
    };
    let mut snapshots = Vec::new();
    if config.snapshots {
        let snap_dir = dir.join("snapshots");
        std::fs::create_dir_all(&snap_dir).map_err(|source| RunError::Write { path: snap_dir.clone(), source })?;
        for (i, snap) in output.snapshots.iter().enumerate() {
            let base = format!("{i:02}_{}", snap.stage);
            snapshots.push(write(snap_dir.join(format!("{base}.svg")), &render_svg(snap))?);
            snapshots.push(write(snap_dir.join(format!("{base}.csv")), &chains_csv(snap))?);
        }
    }
    Ok(Artifacts { obj, metrics, face_metrics, snapshots })
}

/// Per-face CSV: `face,error_re,error_im,error_abs,d_area`.
pub fn face_metrics_csv(inputs: &Inputs, output: &PipelineOutput) -> Result<String, RunError> {
    let err = beltrami_error(&inputs.mesh, &inputs.target, &output.param.uv)
        .map_err(|e| RunError::Pipeline(PipelineError { stage: crate::pipeline::Stage::Metrics, submesh: None, failure: e.into() }))?;
    let mut out = String::from("face,error_re,error_im,error_abs,d_area\n");
    for (f, (e, d)) in err.per_face.iter().zip(&output.report.d_area).enumerate() {
        let _ = writeln!(out, "{f},{:e},{:e},{:e},{:e}", e.re, e.im, e.norm(), d);
    }
    Ok(out)
}

/// Single-line machine-readable error report.
pub fn error_line(err: &RunError) -> String {
    let (stage, submesh) = match err {
        RunError::Pipeline(e) => (e.stage.name(), e.submesh.map(|s| s.to_string())),
        _ => ("config", None),
    };
    let submesh = submesh.map(|s| format!(" submesh={s}")).unwrap_or_default();
    format!("error[{}] stage={stage}{submesh}: {err}\nhint: {}", err.code(), err.hint())
}
