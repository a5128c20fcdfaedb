use weldmap::fixtures;
use weldmap::flatten::BeltramiField;
use weldmap::mesh::{default_partition, repair_labels, PartitionLabeling};
use weldmap::pipeline::{parameterize, PipelineOptions, Stage};

#[test]
fn disk_halves_meet_on_the_seam() {
    let mesh = fixtures::disk(1.0, 0.08);
    let mut labels: Vec<usize> = (0..mesh.face_count())
        .map(|f| usize::from(fixtures::face_centroid(&mesh, f)[0] > 0.0))
        .collect();
    repair_labels(&mesh, &mut labels);
    let zero = BeltramiField::zero(mesh.face_count());
    let out = parameterize(&mesh, &PartitionLabeling::new(labels), &zero, &PipelineOptions::default()).unwrap();
    assert_eq!(out.report.submesh_count, 2);
    assert!(out.report.seam_mismatch <= 1e-8, "{}", out.report.seam_mismatch);
    assert!(out.diagnostics.weld_replayed_gaps.iter().all(|&g| g <= 1e-8));
    assert!(out.report.global_error < 1e-3, "{}", out.report.global_error);
    assert!(out.diagnostics.harmonic_residuals.iter().all(|&r| r <= 1e-8));
}

#[test]
fn two_hole_quadrants_run_end_to_end() {
    let mesh = fixtures::two_hole_disk(0.06);
    let labels = PartitionLabeling::new(fixtures::quadrant_labels(&mesh));
    let mu = BeltramiField::new(fixtures::smooth_beltrami(&mesh, 0.5, 3));
    let options = PipelineOptions { koebe_passes: 3, koebe_target: 0.0, ..PipelineOptions::default() };
    let out = parameterize(&mesh, &labels, &mu, &options).unwrap();
    assert_eq!(out.report.submesh_count, 4);
    assert_eq!(out.report.flipped_faces, 0);
    assert_eq!(out.report.koebe_history.len(), 4);
    assert!(out.report.koebe_history[0] <= 0.05);
    assert!(out.report.koebe_history[3] <= 0.01);
    assert!(out.report.submesh_errors.iter().all(|&e| e < 0.05), "{:?}", out.report.submesh_errors);
}

#[test]
fn refinement_stops_once_holes_are_round() {
    let mesh = fixtures::two_hole_disk(0.06);
    let labels = PartitionLabeling::new(fixtures::quadrant_labels(&mesh));
    let zero = BeltramiField::zero(mesh.face_count());
    let options = PipelineOptions { koebe_passes: 10, ..PipelineOptions::default() };
    let out = parameterize(&mesh, &labels, &zero, &options).unwrap();
    let history = &out.report.koebe_history;
    assert!(history.len() < 11);
    assert!(*history.last().unwrap() <= options.koebe_target);
}

#[test]
fn default_partition_of_a_fine_annulus_welds() {
    let mesh = fixtures::flat_annulus(100, 50, 0.5, 1.0);
    let zero = BeltramiField::zero(mesh.face_count());
    let out = parameterize(&mesh, &default_partition(&mesh, 4), &zero, &PipelineOptions::default()).unwrap();
    assert_eq!(out.report.submesh_count, 4);
    assert!(out.report.global_error <= 1e-3, "{}", out.report.global_error);
    let hole = &out.report.circularity.holes[0];
    assert!((hole.mean_radius - 0.5).abs() < 1e-3, "{}", hole.mean_radius);
}

#[test]
fn area_correction_keeps_the_domain_circular() {
    let mesh = fixtures::two_hole_disk(0.08);
    let labels = PartitionLabeling::new(fixtures::quadrant_labels(&mesh));
    let zero = BeltramiField::zero(mesh.face_count());
    let plain = parameterize(&mesh, &labels, &zero, &PipelineOptions::default()).unwrap();
    let options = PipelineOptions { area_correct: true, ..PipelineOptions::default() };
    let corrected = parameterize(&mesh, &labels, &zero, &options).unwrap();
    assert!(corrected.report.mobius_alpha.is_some());
    let sum_sq = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>();
    assert!(sum_sq(&corrected.report.d_area) <= sum_sq(&plain.report.d_area) + 1e-12);
    assert!(corrected.report.circularity.holes.iter().all(|h| h.circularity <= 0.05));
}

#[test]
fn snapshots_follow_the_stage_order() {
    let mesh = fixtures::two_hole_disk(0.1);
    let labels = PartitionLabeling::new(fixtures::quadrant_labels(&mesh));
    let zero = BeltramiField::zero(mesh.face_count());
    let options = PipelineOptions { snapshots: true, koebe_passes: 1, ..PipelineOptions::default() };
    let out = parameterize(&mesh, &labels, &zero, &options).unwrap();
    let stages: Vec<Stage> = out.snapshots.iter().map(|s| s.stage).collect();
    let mut sorted = stages.clone();
    sorted.sort_by_key(|s| *s as usize);
    assert_eq!(stages, sorted);
    assert_eq!(stages.first(), Some(&Stage::Flatten));
    assert_eq!(stages.last(), Some(&Stage::Assembly));
}
