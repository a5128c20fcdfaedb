//! End-to-end parameterization: flatten, weld, circularize, stitch, measure.

use crate::assemble::{
    area_distortion, assemble_global, beltrami_error, harmonic_residual, laplace_dirichlet, loop_circularities,
    disk_automorphism, mobius_area_correct, qc_correction, search_disk_automorphism, AssembleError, GlobalParameterization, Histogram,
};
use crate::flatten::{
    beltrami_per_face, compose_beltrami, composed_coefficient, dncp_flatten, embedding_charts, face_affine,
    isometric_charts, lsqc_flatten, BeltramiField, FlattenError, PlanarEmbedding,
};
use crate::geometry::{boundary_distance, circularity};
use crate::koebe::{circularize_hole, circularize_outer, koebe_refine, CircularityReport, DomainPoints, KoebeError};
use crate::mesh::{build_weld_specs, extract_submeshes, ArcKind, MeshError, PartitionLabeling, Submesh, TriangleMesh, WeldSpec};
use crate::welding::{
    chain_scale, multiconnected_weld, partial_weld, ExtendedComplex, MapChain, MobiusMap, Primitive, MultiWeldInput, MultiWeldSide, WeldError,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::Instant;
use thiserror::Error;

/// Version of the metrics JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    /// Extra full Koebe cycles after outer circularization.
    pub koebe_passes: usize,
    /// Refinement stops early once every hole is at most this circular.
    pub koebe_target: f64,
    pub qc_correction: bool,
    pub area_correct: bool,
    /// Omit wall-clock timings so that reports are reproducible byte for byte.
    pub deterministic: bool,
    pub snapshots: bool,
    /// Apply the conformal stage maps to every vertex and measure the change of μ (expensive).
    pub measure_stage_distortion: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            koebe_passes: 0,
            koebe_target: KOEBE_TARGET,
            qc_correction: true,
            area_correct: false,
            deterministic: false,
            snapshots: false,
            measure_stage_distortion: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Partition,
    Flatten,
    EnclosingWelds,
    HoleCircularization,
    JoiningWelds,
    OuterCircularization,
    KoebeRefinement,
    Stitching,
    Assembly,
    Metrics,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Partition => "partition",
            Stage::Flatten => "flatten",
            Stage::EnclosingWelds => "enclosing_welds",
            Stage::HoleCircularization => "hole_circularization",
            Stage::JoiningWelds => "joining_welds",
            Stage::OuterCircularization => "outer_circularization",
            Stage::KoebeRefinement => "koebe_refinement",
            Stage::Stitching => "stitching",
            Stage::Assembly => "assembly",
            Stage::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageFailure {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Flatten(#[from] FlattenError),
    #[error(transparent)]
    Weld(#[from] WeldError),
    #[error(transparent)]
    Koebe(#[from] KoebeError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

/// A failure with the stage and submesh it happened in.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub submesh: Option<usize>,
    pub failure: StageFailure,
}

impl PipelineError {
    fn new(stage: Stage, submesh: Option<usize>, failure: impl Into<StageFailure>) -> Self {
        PipelineError { stage, submesh, failure: failure.into() }
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match &self.failure {
            StageFailure::Mesh(
                MeshError::NoValidPlan(_)
                | MeshError::DisconnectedSubmesh(_)
                | MeshError::SubmeshWithTwoHoles(_)
                | MeshError::LabelCount { .. },
            ) => "PARTITION_INVALID",
            StageFailure::Mesh(_) => "MESH_INVALID",
            StageFailure::Flatten(FlattenError::MuOutOfRange { .. } | FlattenError::LengthMismatch { .. })
                if self.stage == Stage::Partition =>
            {
                "BELTRAMI_INVALID"
            }
            StageFailure::Flatten(_) => "FLATTEN_FAILED",
            StageFailure::Weld(_) => "WELD_FAILED",
            StageFailure::Koebe(_) => "KOEBE_FAILED",
            StageFailure::Assemble(AssembleError::SeamMismatch { .. }) => "SEAM_MISMATCH",
            StageFailure::Assemble(_) => "STITCH_FAILED",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self.code() {
            "PARTITION_INVALID" => "use --partition auto:N, or labels whose parts are connected with at most one hole each",
            "MESH_INVALID" => "the input must be an oriented manifold triangle mesh with one outer boundary",
            "BELTRAMI_INVALID" => "the Beltrami CSV needs one `re,im` row per face with |mu| < 0.999",
            "FLATTEN_FAILED" => "remove degenerate faces or partition into smaller pieces",
            "WELD_FAILED" => "try another partition; shared arcs need several evenly spaced vertices",
            "KOEBE_FAILED" => "holes need at least three boundary vertices; try fewer refinement passes",
            "SEAM_MISMATCH" => "welded copies of a cut vertex disagree; report this input",
            _ => "check the inputs of this stage",
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.stage)?;
        if let Some(s) = self.submesh {
            write!(f, " (submesh {s})")?;
        }
        write!(f, ": {}", self.failure)
    }
}

impl std::error::Error for PipelineError {}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AreaSummary {
    pub mean_abs: f64,
    pub histogram: Histogram,
}

/// Metrics written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamReport {
    pub schema_version: u32,
    pub vertex_count: usize,
    pub face_count: usize,
    pub submesh_count: usize,
    pub weld_count: usize,
    /// Mean |μ_Φ − μ| per submesh.
    pub submesh_errors: Vec<f64>,
    pub global_error: f64,
    pub flipped_faces: usize,
    pub seam_mismatch: f64,
    pub circularity: CircularityReport,
    /// Worst hole circularity before refinement and after each Koebe cycle.
    pub koebe_history: Vec<f64>,
    pub area_distortion: AreaSummary,
    pub d_area: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mobius_alpha: Option<[f64; 2]>,
    /// Seconds per stage; absent in deterministic mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

/// Change of per-face μ caused by the conformal stages.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StageDistortion {
    /// Piecewise linear maps through the transformed vertices.
    pub vertex_max: f64,
    pub vertex_mean: f64,
    /// Composition formula with `μ_g` from central differences of the stage maps at face centroids.
    pub pointwise_max: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Diagnostics {
    /// Largest gap between welded partners, relative to the chain diameter, per weld.
    pub weld_gaps: Vec<f64>,
    /// The same gap with the original chain points pushed through each side's map chain.
    pub weld_replayed_gaps: Vec<f64>,
    /// Mean |μ − target| of every flattened submesh.
    pub flatten_errors: Vec<f64>,
    pub harmonic_residuals: Vec<f64>,
    /// `(before, after, accepted)` for each QC correction.
    pub qc_corrections: Vec<(f64, f64, bool)>,
    pub koebe_history: Vec<CircularityReport>,
    pub stage_distortion: Option<StageDistortion>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotLoop {
    pub submesh: usize,
    pub parents: Vec<usize>,
    pub points: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSnapshot {
    pub stage: Stage,
    pub loops: Vec<SnapshotLoop>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub param: GlobalParameterization,
    pub report: ParamReport,
    pub diagnostics: Diagnostics,
    pub snapshots: Vec<StageSnapshot>,
    pub submeshes: Vec<Submesh>,
    pub flattened: Vec<PlanarEmbedding>,
}

/// Boundary images of one submesh as it travels through welding and circularization.
#[derive(Clone, Debug)]
struct Tracked {
    /// Local boundary vertices, loop after loop.
    local: Vec<usize>,
    parent: Vec<usize>,
    loop_lengths: Vec<usize>,
    /// Images of `local`, then the interior probe.
    points: Vec<ExtendedComplex>,
    conformal: MapChain,
}

impl Tracked {
    fn new(sub: &Submesh, flat: &PlanarEmbedding) -> Self {
        let local: Vec<usize> = sub.mesh.boundary_loops().iter().flatten().copied().collect();
        let parent = local.iter().map(|&v| sub.to_parent[v]).collect();
        let loop_lengths = sub.mesh.boundary_loops().iter().map(Vec::len).collect();
        let mut points: Vec<ExtendedComplex> = local.iter().map(|&v| ExtendedComplex::Finite(flat.uv[v])).collect();
        points.push(ExtendedComplex::Finite(interior_probe(&sub.mesh, &flat.uv)));
        Tracked { local, parent, loop_lengths, points, conformal: MapChain::new() }
    }

    fn probe(&self) -> ExtendedComplex {
        self.points[self.points.len() - 1]
    }

    fn apply(&mut self, map: &MapChain) {
        map.apply_all(&mut self.points);
        self.conformal.extend(map);
    }

    fn loops(&self, id: usize) -> Vec<SnapshotLoop> {
        let mut out = Vec::new();
        let mut start = 0;
        for &len in &self.loop_lengths {
            let range = start..start + len;
            out.push(SnapshotLoop {
                submesh: id,
                parents: self.parent[range.clone()].to_vec(),
                points: self.points[range].iter().filter_map(|p| p.finite()).collect(),
            });
            start += len;
        }
        out
    }
}

/// Centroid of a face far from the boundary, among at most a few thousand sampled faces.
fn interior_probe(mesh: &TriangleMesh, uv: &[Complex64]) -> Complex64 {
    let loops: Vec<Vec<Complex64>> =
        mesh.boundary_loops().iter().map(|lp| lp.iter().map(|&v| uv[v]).collect()).collect();
    let step = (mesh.face_count() / 4096).max(1);
    let mut best = (f64::NEG_INFINITY, Complex64::default());
    for f in mesh.faces().iter().step_by(step) {
        let c = (uv[f[0]] + uv[f[1]] + uv[f[2]]) / 3.0;
        let d = loops.iter().map(|lp| boundary_distance(c, lp)).fold(f64::INFINITY, f64::min);
        if d > best.0 {
            best = (d, c);
        }
    }
    best.1
}

fn lookup(states: &[Tracked], members: &[usize]) -> HashMap<usize, ExtendedComplex> {
    let mut map = HashMap::new();
    for &s in members {
        for (i, &p) in states[s].parent.iter().enumerate() {
            map.entry(p).or_insert(states[s].points[i]);
        }
    }
    map
}

fn gather(table: &HashMap<usize, ExtendedComplex>, ids: &[usize]) -> Result<Vec<ExtendedComplex>, WeldError> {
    ids.iter()
        .map(|p| table.get(p).copied().ok_or_else(|| WeldError::NumericalBreakdown(format!("vertex {p} is not tracked"))))
        .collect()
}

fn finite_points(points: &[ExtendedComplex]) -> Result<Vec<Complex64>, WeldError> {
    points
        .iter()
        .map(|p| p.finite().ok_or_else(|| WeldError::NumericalBreakdown("tracked point at infinity".into())))
        .collect()
}

struct WeldOutcome {
    /// New tracked points and the map applied, per member submesh.
    updates: Vec<(usize, Vec<ExtendedComplex>, MapChain)>,
    gap: f64,
    replayed_gap: f64,
}

fn run_weld(spec: &WeldSpec, states: &[Tracked]) -> Result<WeldOutcome, WeldError> {
    let table_a = lookup(states, &spec.a);
    let table_b = lookup(states, &spec.b);
    let a = gather(&table_a, &spec.a_chain)?;
    let b = gather(&table_b, &spec.b_chain)?;
    let anchor_a = states[spec.a[0]].probe().finite().ok_or(WeldError::ZeroXi)?;
    let anchor_b = states[spec.b[0]].probe().finite().ok_or(WeldError::ZeroXi)?;
    let (a_images, b_images, maps_a, maps_b) = match spec.kind {
        ArcKind::Continuous => {
            let w = partial_weld(&a, &b, spec.first_end, anchor_a, anchor_b)?;
            (w.a_images, w.b_images, w.maps_a, w.maps_b)
        }
        ArcKind::TwoArc => {
            let (a2, b2) = spec.a_second.zip(spec.b_second).ok_or_else(|| WeldError::MisorderedArc("missing second arc".into()))?;
            let side = |chain, second: (usize, usize), anchor| MultiWeldSide {
                chain,
                first_end: spec.first_end,
                second_start: second.0,
                second_end: second.1,
                anchor,
            };
            let input = MultiWeldInput { a: side(&a, a2, anchor_a), b: side(&b, b2, anchor_b) };
            let w = multiconnected_weld(&input)?;
            (w.a_images, w.b_images, w.maps_a, w.maps_b)
        }
    };

    let mut shared: Vec<(usize, usize)> = (0..=spec.first_end).map(|j| (j, j)).collect();
    if let (Some((s_a, e_a)), Some((s_b, _))) = (spec.a_second, spec.b_second) {
        shared.extend((0..=e_a - s_a).map(|t| (s_a + t, s_b + t)));
    }
    let mut all = a_images.clone();
    all.extend_from_slice(&b_images);
    let scale = chain_scale(&all);
    let gap = shared.iter().map(|&(i, j)| a_images[i].distance(&b_images[j])).fold(0.0, f64::max) / scale;
    let replayed_gap =
        shared.iter().map(|&(i, j)| maps_a.apply(a[i]).distance(&maps_b.apply(b[j]))).fold(0.0, f64::max) / scale;

    let mut updates = Vec::new();
    for (members, chain, images, maps) in [(&spec.a, &spec.a_chain, &a_images, &maps_a), (&spec.b, &spec.b_chain, &b_images, &maps_b)] {
        let index: HashMap<usize, usize> = chain.iter().enumerate().map(|(j, &p)| (p, j)).collect();
        for &s in members {
            let st = &states[s];
            let mut points: Vec<ExtendedComplex> = st
                .parent
                .iter()
                .zip(&st.points)
                .map(|(p, z)| match index.get(p) {
                    Some(&j) => images[j],
                    None => maps.apply(*z),
                })
                .collect();
            points.push(maps.apply(st.probe()));
            updates.push((s, points, maps.clone()));
        }
    }
    Ok(WeldOutcome { updates, gap, replayed_gap })
}

fn weld_round(round: &[WeldSpec], states: &mut [Tracked], diagnostics: &mut Diagnostics, stage: Stage) -> Result<(), PipelineError> {
    let outcomes: Vec<Result<WeldOutcome, PipelineError>> = round
        .par_iter()
        .map(|spec| run_weld(spec, states).map_err(|e| PipelineError::new(stage, Some(spec.a[0]), e)))
        .collect();
    for outcome in outcomes {
        let outcome = outcome?;
        diagnostics.weld_gaps.push(outcome.gap);
        diagnostics.weld_replayed_gaps.push(outcome.replayed_gap);
        for (s, points, map) in outcome.updates {
            states[s].points = points;
            states[s].conformal.extend(&map);
        }
    }
    Ok(())
}

fn loop_points(states: &[Tracked], members: &[usize], ids: &[usize], stage: Stage) -> Result<Vec<Complex64>, PipelineError> {
    let table = lookup(states, members);
    gather(&table, ids)
        .and_then(|p| finite_points(&p))
        .map_err(|e| PipelineError::new(stage, members.first().copied(), e))
}

fn snapshot(stage: Stage, states: &[Tracked]) -> StageSnapshot {
    StageSnapshot { stage, loops: states.iter().enumerate().flat_map(|(i, s)| s.loops(i)).collect() }
}

/// Flattens a submesh so that the composite map from its surface has coefficient `target`
/// in per-face isometric frames.
pub fn flatten_submesh(sub: &Submesh, target: &BeltramiField) -> Result<PlanarEmbedding, FlattenError> {
    let conformal = dncp_flatten(&sub.mesh)?;
    let charts = isometric_charts(&sub.mesh);
    let nu = compose_beltrami(&sub.mesh, &charts, &conformal.uv, target)?;
    lsqc_flatten(&sub.mesh, &conformal.uv, &nu)
}

fn restrict(field: &BeltramiField, faces: &[usize]) -> BeltramiField {
    BeltramiField::new(faces.iter().map(|&f| field.values()[f]).collect())
}

struct Clock {
    enabled: bool,
    start: Instant,
    times: BTreeMap<String, f64>,
}

impl Clock {
    fn lap(&mut self, stage: Stage) {
        if self.enabled {
            let now = Instant::now();
            self.times.insert(stage.name().to_string(), (now - self.start).as_secs_f64());
            self.start = now;
        }
    }
}

/// Runs every stage on `mesh` with the given partition and target coefficient.
pub fn parameterize(
    mesh: &TriangleMesh,
    labels: &PartitionLabeling,
    target: &BeltramiField,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let mut clock = Clock { enabled: !options.deterministic, start: Instant::now(), times: BTreeMap::new() };
    target.validate(mesh.face_count()).map_err(|e| PipelineError::new(Stage::Partition, None, e))?;
    let subs = extract_submeshes(mesh, labels).map_err(|e| PipelineError::new(Stage::Partition, None, e))?;
    let plan = build_weld_specs(mesh, labels, &subs).map_err(|e| PipelineError::new(Stage::Partition, None, e))?;
    let targets: Vec<BeltramiField> = subs.iter().map(|s| restrict(target, &s.parent_faces)).collect();
    clock.lap(Stage::Partition);

    let flattened: Vec<PlanarEmbedding> = subs
        .par_iter()
        .zip(&targets)
        .map(|(s, t)| flatten_submesh(s, t).map_err(|e| PipelineError::new(Stage::Flatten, Some(s.id), e)))
        .collect::<Result<_, _>>()?;
    let mut diagnostics = Diagnostics::default();
    for ((s, flat), t) in subs.iter().zip(&flattened).zip(&targets) {
        let d = beltrami_per_face(&s.mesh, &isometric_charts(&s.mesh), &flat.uv)
            .map_err(|e| PipelineError::new(Stage::Flatten, Some(s.id), e))?;
        let err = d.mu.iter().zip(t.values()).map(|(a, b)| (a - b).norm()).sum::<f64>() / d.mu.len().max(1) as f64;
        diagnostics.flatten_errors.push(err);
    }
    let mut states: Vec<Tracked> = subs.iter().zip(&flattened).map(|(s, f)| Tracked::new(s, f)).collect();
    let mut snapshots = Vec::new();
    if options.snapshots {
        snapshots.push(snapshot(Stage::Flatten, &states));
    }
    clock.lap(Stage::Flatten);

    for round in &plan.enclosing_rounds {
        weld_round(round, &mut states, &mut diagnostics, Stage::EnclosingWelds)?;
    }
    if options.snapshots {
        snapshots.push(snapshot(Stage::EnclosingWelds, &states));
    }
    clock.lap(Stage::EnclosingWelds);

    let hole_maps: Vec<(Vec<usize>, MapChain)> = plan
        .hole_components
        .par_iter()
        .map(|(h, members)| {
            let stage = Stage::HoleCircularization;
            let hole = loop_points(&states, members, &mesh.inner_loops()[*h], stage)?;
            let map = circularize_hole(&hole, &mut []).map_err(|e| PipelineError::new(stage, members.first().copied(), e))?;
            Ok((members.clone(), map))
        })
        .collect::<Result<_, PipelineError>>()?;
    for (members, map) in hole_maps {
        for s in members {
            states[s].apply(&map);
        }
    }
    if options.snapshots {
        snapshots.push(snapshot(Stage::HoleCircularization, &states));
    }
    clock.lap(Stage::HoleCircularization);

    for round in &plan.joining_rounds {
        weld_round(round, &mut states, &mut diagnostics, Stage::JoiningWelds)?;
    }
    if options.snapshots {
        snapshots.push(snapshot(Stage::JoiningWelds, &states));
    }
    clock.lap(Stage::JoiningWelds);

    let everyone: Vec<usize> = (0..subs.len()).collect();
    let outer = loop_points(&states, &everyone, mesh.outer_loop(), Stage::OuterCircularization)?;
    let reference = states[0].probe().finite().unwrap_or_default();
    let map = circularize_outer(&outer, reference, &mut [])
        .map_err(|e| PipelineError::new(Stage::OuterCircularization, None, e))?;
    states.par_iter_mut().for_each(|s| s.apply(&map));
    if options.snapshots {
        snapshots.push(snapshot(Stage::OuterCircularization, &states));
    }
    clock.lap(Stage::OuterCircularization);

    diagnostics.koebe_history = refine(mesh, &mut states, options)?;
    let map = balance(mesh, &states).map_err(|e| PipelineError::new(Stage::KoebeRefinement, None, e))?;
    states.par_iter_mut().for_each(|s| s.apply(&map));
    if options.snapshots && options.koebe_passes > 0 {
        snapshots.push(snapshot(Stage::KoebeRefinement, &states));
    }
    clock.lap(Stage::KoebeRefinement);

    let stitched: Vec<Stitched> = subs
        .par_iter()
        .zip(&flattened)
        .zip(&states)
        .zip(&targets)
        .map(|(((s, flat), st), t)| stitch(s, flat, st, t, options.qc_correction).map_err(|e| PipelineError::new(Stage::Stitching, Some(s.id), e)))
        .collect::<Result<_, _>>()?;
    let mut maps = Vec::with_capacity(stitched.len());
    for (map, residual, qc) in stitched {
        maps.push(map);
        diagnostics.harmonic_residuals.push(residual);
        diagnostics.qc_corrections.extend(qc);
    }
    clock.lap(Stage::Stitching);

    let mut param = assemble_global(mesh.vertex_count(), &subs, maps).map_err(|e| PipelineError::new(Stage::Assembly, None, e))?;
    param.stages = ["flatten", "weld", "circularize", "stitch"].iter().map(|s| s.to_string()).collect();
    normalize(&mut param, mesh.outer_loop());
    let mut mobius_alpha = None;
    if options.area_correct {
        let corr = mobius_area_correct(mesh, &param.uv).map_err(|e| PipelineError::new(Stage::Assembly, None, e))?;
        let alpha = corr.alpha;
        param.uv = corr.uv;
        for m in &mut param.submesh_maps {
            for z in &mut m.uv {
                *z = disk_automorphism(alpha, *z);
            }
        }
        param.stages.push("area_correct".into());
        mobius_alpha = Some([alpha.re, alpha.im]);
    }
    if options.snapshots {
        let loops = (0..subs.len())
            .flat_map(|i| {
                let mut st = states[i].clone();
                for (k, &v) in st.local.iter().enumerate() {
                    st.points[k] = ExtendedComplex::Finite(param.submesh_maps[i].uv[v]);
                }
                st.loops(i)
            })
            .collect();
        snapshots.push(StageSnapshot { stage: Stage::Assembly, loops });
    }
    clock.lap(Stage::Assembly);

    if options.measure_stage_distortion {
        diagnostics.stage_distortion = Some(stage_distortion(&subs, &flattened, &states, mobius_alpha));
    }
    let report = metrics(mesh, &subs, target, &param, &diagnostics, &plan, mobius_alpha)
        .map_err(|e| PipelineError::new(Stage::Metrics, None, e))?;
    clock.lap(Stage::Metrics);
    let report = ParamReport { timings: clock.enabled.then_some(clock.times), ..report };
    Ok(PipelineOutput { param, report, diagnostics, snapshots, submeshes: subs, flattened })
}

/// Koebe cycles over the whole domain; returns the report before refinement and after each cycle.
fn refine(mesh: &TriangleMesh, states: &mut [Tracked], options: &PipelineOptions) -> Result<Vec<CircularityReport>, PipelineError> {
    let stage = Stage::KoebeRefinement;
    let mut points = Vec::new();
    let mut first_copy: HashMap<usize, usize> = HashMap::new();
    for st in states.iter() {
        for (i, z) in st.points.iter().enumerate() {
            if let Some(&p) = st.parent.get(i) {
                first_copy.entry(p).or_insert(points.len());
            }
            points.push(z.finite().ok_or_else(|| PipelineError::new(stage, None, WeldError::NumericalBreakdown("point at infinity".into())))?);
        }
    }
    let index = |lp: &[usize]| -> Vec<usize> { lp.iter().map(|p| first_copy[p]).collect() };
    let mut domain = DomainPoints {
        outer: index(mesh.outer_loop()),
        holes: mesh.inner_loops().iter().map(|lp| index(lp)).collect(),
        reference: states[0].points.len() - 1,
        points,
    };
    let run = koebe_refine(&mut domain, options.koebe_passes, options.koebe_target).map_err(|e| PipelineError::new(stage, None, e))?;
    if !run.map.is_empty() {
        let mut offset = 0;
        for st in states.iter_mut() {
            let n = st.points.len();
            st.points = domain.points[offset..offset + n].iter().map(|&z| ExtendedComplex::Finite(z)).collect();
            st.conformal.extend(&run.map);
            offset += n;
        }
    }
    Ok(run.history)
}

/// Disk automorphism that makes the boundary scale factor `|image edge| / |surface edge|` as
/// uniform as possible over all boundary loops.
fn balance(mesh: &TriangleMesh, states: &[Tracked]) -> Result<MapChain, WeldError> {
    let everyone: Vec<usize> = (0..states.len()).collect();
    let table = lookup(states, &everyone);
    let pos = mesh.positions();
    let mut edges = Vec::new();
    for lp in mesh.boundary_loops() {
        let images = finite_points(&gather(&table, lp)?)?;
        for i in 0..lp.len() {
            let j = (i + 1) % lp.len();
            let (p, q) = (pos[lp[i]], pos[lp[j]]);
            let length = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            edges.push((images[i], images[j], length));
        }
    }
    let total: f64 = edges.iter().map(|e| e.2).sum();
    let objective = |alpha: Complex64| {
        let logs: Vec<f64> = edges
            .iter()
            .map(|&(z, w, l)| ((disk_automorphism(alpha, w) - disk_automorphism(alpha, z)).norm() / l).ln())
            .collect();
        let mean = logs.iter().zip(&edges).map(|(g, e)| g * e.2).sum::<f64>() / total;
        logs.iter().zip(&edges).map(|(g, e)| e.2 * (g - mean).powi(2)).sum::<f64>() / total
    };
    let (alpha, _) = search_disk_automorphism(objective);
    let one = Complex64::new(1.0, 0.0);
    let mut chain = MapChain::new();
    chain.push(Primitive::Mobius(MobiusMap::new(one, -alpha, -alpha.conj(), one)));
    Ok(chain)
}

/// Stitched map, harmonic residual and the QC correction outcome if one ran.
type Stitched = (PlanarEmbedding, f64, Option<(f64, f64, bool)>);

fn stitch(
    sub: &Submesh,
    flat: &PlanarEmbedding,
    state: &Tracked,
    target: &BeltramiField,
    correct: bool,
) -> Result<Stitched, AssembleError> {
    let mut boundary = Vec::with_capacity(state.local.len());
    for (k, &v) in state.local.iter().enumerate() {
        let z = state.points[k].finite().ok_or(AssembleError::MissingBoundaryValue(v))?;
        boundary.push((v, z));
    }
    let map = laplace_dirichlet(&sub.mesh, &flat.uv, &boundary)?;
    let residual = harmonic_residual(&sub.mesh, &flat.uv, &map.uv)?;
    if !correct {
        return Ok((map, residual, None));
    }
    let out = qc_correction(&sub.mesh, &isometric_charts(&sub.mesh), &map, target)?;
    Ok((out.embedding, residual, Some((out.error_before, out.error_after, out.accepted))))
}

fn normalize(param: &mut GlobalParameterization, outer: &[usize]) {
    let pts: Vec<Complex64> = outer.iter().map(|&v| param.uv[v]).collect();
    let (c, r, _, _) = circularity(&pts);
    if r > 0.0 {
        for z in param.uv.iter_mut().chain(param.submesh_maps.iter_mut().flat_map(|m| m.uv.iter_mut())) {
            *z = (*z - c) / r;
        }
    }
}

fn metrics(
    mesh: &TriangleMesh,
    subs: &[Submesh],
    target: &BeltramiField,
    param: &GlobalParameterization,
    diagnostics: &Diagnostics,
    plan: &crate::mesh::WeldPlan,
    mobius_alpha: Option<[f64; 2]>,
) -> Result<ParamReport, AssembleError> {
    let err = beltrami_error(mesh, target, &param.uv)?;
    let area = area_distortion(mesh, &param.uv)?;
    let (outer, holes) = loop_circularities(mesh, &param.uv);
    Ok(ParamReport {
        schema_version: SCHEMA_VERSION,
        vertex_count: mesh.vertex_count(),
        face_count: mesh.face_count(),
        submesh_count: subs.len(),
        weld_count: plan.weld_count(),
        submesh_errors: subs.iter().map(|s| err.mean_over(&s.parent_faces)).collect(),
        global_error: err.mean,
        flipped_faces: err.flipped_count,
        seam_mismatch: param.seam_mismatch,
        circularity: CircularityReport { outer, holes },
        koebe_history: diagnostics.koebe_history.iter().map(CircularityReport::worst_hole).collect(),
        area_distortion: AreaSummary { mean_abs: area.mean_abs, histogram: area.histogram },
        d_area: area.d_area,
        mobius_alpha,
        timings: None,
    })
}

const FD_STEP: f64 = 1e-4;
/// Default circularity at which Koebe refinement stops early.
pub const KOEBE_TARGET: f64 = 1e-3;

/// Applies each submesh's conformal stage maps (and the area-correcting automorphism) to all of
/// its flattened vertices and compares per-face μ before and after.
fn stage_distortion(
    subs: &[Submesh],
    flattened: &[PlanarEmbedding],
    states: &[Tracked],
    mobius_alpha: Option<[f64; 2]>,
) -> StageDistortion {
    let alpha = mobius_alpha.map(|a| Complex64::new(a[0], a[1]));
    let per_sub: Vec<(f64, f64, usize, f64)> = subs
        .par_iter()
        .zip(flattened)
        .zip(states)
        .map(|((sub, flat), st)| {
            let g = |z: Complex64| -> Option<Complex64> {
                let w = st.conformal.apply(ExtendedComplex::Finite(z)).finite()?;
                Some(match alpha {
                    Some(a) => disk_automorphism(a, w),
                    None => w,
                })
            };
            let moved: Option<Vec<Complex64>> = flat.uv.iter().map(|&z| g(z)).collect();
            let charts = isometric_charts(&sub.mesh);
            let before = beltrami_per_face(&sub.mesh, &charts, &flat.uv);
            let (mut vmax, mut vsum) = (f64::INFINITY, 0.0);
            if let (Some(moved), Ok(before)) = (moved, &before) {
                if let Ok(after) = beltrami_per_face(&sub.mesh, &charts, &moved) {
                    let d: Vec<f64> = before.mu.iter().zip(&after.mu).map(|(a, b)| (a - b).norm()).collect();
                    vmax = d.iter().copied().fold(0.0, f64::max);
                    vsum = d.iter().sum();
                }
            }
            let mut pmax = 0.0f64;
            if let Ok(before) = &before {
                let flat_charts = embedding_charts(&sub.mesh, &flat.uv);
                for (fi, f) in sub.mesh.faces().iter().enumerate() {
                    let c = (flat.uv[f[0]] + flat.uv[f[1]] + flat.uv[f[2]]) / 3.0;
                    let h = FD_STEP * (flat.uv[f[1]] - flat.uv[f[0]]).norm();
                    let i = Complex64::new(0.0, 1.0);
                    let diffs = (g(c + h), g(c - h), g(c + i * h), g(c - i * h));
                    let (Some(xp), Some(xm), Some(yp), Some(ym)) = diffs else {
                        pmax = f64::INFINITY;
                        continue;
                    };
                    let gx = (xp - xm) / (2.0 * h);
                    let gy = (yp - ym) / (2.0 * h);
                    let g_z = 0.5 * (gx - i * gy);
                    let g_zbar = 0.5 * (gx + i * gy);
                    // f: isometric chart -> flat chart of this face.
                    let Some((f_z, _)) = face_affine(&charts[fi], &flat_charts[fi]) else { continue };
                    let mu_f = before.mu[fi];
                    let composed = composed_coefficient(mu_f, f_z, g_zbar / g_z);
                    pmax = pmax.max((composed - mu_f).norm());
                }
            }
            (vmax, vsum, sub.mesh.face_count(), pmax)
        })
        .collect();
    let faces: usize = per_sub.iter().map(|p| p.2).sum();
    StageDistortion {
        vertex_max: per_sub.iter().map(|p| p.0).fold(0.0, f64::max),
        vertex_mean: per_sub.iter().map(|p| p.1).sum::<f64>() / faces.max(1) as f64,
        pointwise_max: per_sub.iter().map(|p| p.3).fold(0.0, f64::max),
    }
}
