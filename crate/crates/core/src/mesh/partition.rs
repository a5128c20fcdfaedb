use super::{MeshError, TriangleMesh};
use rayon::prelude::*;
use std::collections::{BTreeMap, VecDeque};

/// One submesh id per face.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionLabeling {
    pub face_label: Vec<usize>,
}

impl PartitionLabeling {
    /// Labels are renumbered to `0..n` in increasing order of the given values.
    pub fn new(labels: Vec<usize>) -> Self {
        let mut distinct: Vec<usize> = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let remap: BTreeMap<usize, usize> = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        PartitionLabeling { face_label: labels.iter().map(|l| remap[l]).collect() }
    }

    pub fn trivial(face_count: usize) -> Self {
        PartitionLabeling { face_label: vec![0; face_count] }
    }

    pub fn part_count(&self) -> usize {
        self.face_label.iter().max().map_or(0, |m| m + 1)
    }

    /// Interior edges whose two faces carry different labels, as sorted vertex pairs.
    pub fn cut_edges(&self, mesh: &TriangleMesh) -> Vec<(usize, usize)> {
        let adj = FaceAdjacency::new(mesh);
        let mut cuts = Vec::new();
        for (f, nbrs) in adj.neighbors.iter().enumerate() {
            for (k, nb) in nbrs.iter().enumerate() {
                if let Some(g) = *nb {
                    if f < g && self.face_label[f] != self.face_label[g] {
                        let face = mesh.faces()[f];
                        let (a, b) = (face[k], face[(k + 1) % 3]);
                        cuts.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
        cuts.sort_unstable();
        cuts
    }
}

/// A submesh with back-references into its parent.
#[derive(Clone, Debug)]
pub struct Submesh {
    pub id: usize,
    pub mesh: TriangleMesh,
    /// Parent vertex index of each local vertex.
    pub to_parent: Vec<usize>,
    /// Parent face index of each local face.
    pub parent_faces: Vec<usize>,
}

/// Edge-adjacent faces: `neighbors[f][k]` lies across the edge from corner `k` to `k + 1`.
pub(crate) struct FaceAdjacency {
    pub neighbors: Vec<[Option<usize>; 3]>,
}

impl FaceAdjacency {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * mesh.face_count());
        for (f, face) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                half.push((face[k], face[(k + 1) % 3], f, k));
            }
        }
        half.sort_unstable();
        let mut neighbors = vec![[None; 3]; mesh.face_count()];
        for &(a, b, f, k) in &half {
            if let Ok(pos) = half.binary_search_by(|h| (h.0, h.1).cmp(&(b, a))) {
                neighbors[f][k] = Some(half[pos].2);
            }
        }
        FaceAdjacency { neighbors }
    }
}

/// Splits a mesh into one submesh per label.
pub fn extract_submeshes(mesh: &TriangleMesh, labels: &PartitionLabeling) -> Result<Vec<Submesh>, MeshError> {
    if labels.face_label.len() != mesh.face_count() {
        return Err(MeshError::LabelCount { labels: labels.face_label.len(), faces: mesh.face_count() });
    }
    let parts = labels.part_count();
    let mut faces_of: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for (f, &l) in labels.face_label.iter().enumerate() {
        faces_of[l].push(f);
    }
    let adj = FaceAdjacency::new(mesh);
    faces_of
        .into_par_iter()
        .enumerate()
        .map(|(id, faces)| build_submesh(mesh, &adj, labels, id, faces))
        .collect()
}

fn build_submesh(
    mesh: &TriangleMesh,
    adj: &FaceAdjacency,
    labels: &PartitionLabeling,
    id: usize,
    faces: Vec<usize>,
) -> Result<Submesh, MeshError> {
    if faces.is_empty() || !faces_connected(adj, labels, &faces) {
        return Err(MeshError::DisconnectedSubmesh(id));
    }
    let mut to_parent: Vec<usize> = faces.iter().flat_map(|&f| mesh.faces()[f]).collect();
    to_parent.sort_unstable();
    to_parent.dedup();
    let local = |v: usize| to_parent.binary_search(&v).expect("vertex of own face");
    let local_faces: Vec<[usize; 3]> =
        faces.iter().map(|&f| mesh.faces()[f].map(local)).collect();
    let positions = to_parent.iter().map(|&v| mesh.positions()[v]).collect();
    let sub = TriangleMesh::new(positions, local_faces)?;
    if sub.hole_count() > 1 {
        return Err(MeshError::SubmeshWithTwoHoles(id));
    }
    Ok(Submesh { id, mesh: sub, to_parent, parent_faces: faces })
}

fn faces_connected(adj: &FaceAdjacency, labels: &PartitionLabeling, faces: &[usize]) -> bool {
    let label = labels.face_label[faces[0]];
    let mut seen = std::collections::HashSet::with_capacity(faces.len());
    let mut queue = VecDeque::from([faces[0]]);
    seen.insert(faces[0]);
    while let Some(f) = queue.pop_front() {
        for g in adj.neighbors[f].iter().flatten() {
            if labels.face_label[*g] == label && seen.insert(*g) {
                queue.push_back(*g);
            }
        }
    }
    seen.len() == faces.len()
}

#[derive(Clone, Copy, PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn face_centroids(mesh: &TriangleMesh) -> Vec<[f64; 3]> {
    let p = mesh.positions();
    mesh.faces()
        .iter()
        .map(|f| {
            let mut c = [0.0; 3];
            for &v in f {
                for k in 0..3 {
                    c[k] += p[v][k] / 3.0;
                }
            }
            c
        })
        .collect()
}

/// Distances between face centroids along the dual graph from a set of sources, and the
/// index of the nearest source of every face.
fn face_dijkstra(adj: &FaceAdjacency, centroids: &[[f64; 3]], sources: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n = adj.neighbors.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut owner = vec![usize::MAX; n];
    let mut heap = std::collections::BinaryHeap::new();
    for (i, &s) in sources.iter().enumerate() {
        if dist[s] > 0.0 {
            dist[s] = 0.0;
            owner[s] = i;
            heap.push(Queued(0.0, s));
        }
    }
    while let Some(Queued(d, f)) = heap.pop() {
        if d > dist[f] {
            continue;
        }
        for &g in adj.neighbors[f].iter().flatten() {
            let (a, b) = (centroids[f], centroids[g]);
            let step = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            if d + step < dist[g] {
                dist[g] = d + step;
                owner[g] = owner[f];
                heap.push(Queued(d + step, g));
            }
        }
    }
    (dist, owner)
}

/// Reassigns stray islands and fan pinches until every label is an edge-connected manifold patch.
pub fn repair_labels(mesh: &TriangleMesh, labels: &mut [usize]) {
    let adj = FaceAdjacency::new(mesh);
    for _ in 0..16 {
        if !smooth_cuts(&adj, labels) {
            break;
        }
    }
    for _ in 0..32 {
        let changed_islands = merge_islands(&adj, labels);
        let changed_pinches = split_pinches(mesh, &adj, labels);
        if !changed_islands && !changed_pinches {
            break;
        }
    }
}

/// Majority filter: a face with at least two edge neighbours of one other label, outnumbering
/// its own, takes that label. Removes ears and teeth that make sharp corners on cuts.
fn smooth_cuts(adj: &FaceAdjacency, labels: &mut [usize]) -> bool {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels.iter() {
        *sizes.entry(l).or_default() += 1;
    }
    let mut changed = false;
    for f in 0..labels.len() {
        let own = labels[f];
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for g in adj.neighbors[f].iter().flatten() {
            *votes.entry(labels[*g]).or_default() += 1;
        }
        let same = votes.get(&own).copied().unwrap_or(0);
        let best = votes.iter().filter(|(&l, _)| l != own).max_by_key(|(l, c)| (**c, std::cmp::Reverse(**l)));
        if let Some((&other, &count)) = best {
            if count >= 2 && count > same && sizes[&own] > 1 {
                labels[f] = other;
                *sizes.get_mut(&own).expect("own label counted") -= 1;
                *sizes.entry(other).or_default() += 1;
                changed = true;
            }
        }
    }
    changed
}

fn merge_islands(adj: &FaceAdjacency, labels: &mut [usize]) -> bool {
    let n = labels.len();
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut i = 0;
        while i < members.len() {
            let f = members[i];
            for g in adj.neighbors[f].iter().flatten() {
                if comp[*g] == usize::MAX && labels[*g] == labels[f] {
                    comp[*g] = id;
                    members.push(*g);
                }
            }
            i += 1;
        }
        comps.push(members);
    }
    let mut largest: BTreeMap<usize, usize> = BTreeMap::new();
    for (id, members) in comps.iter().enumerate() {
        let l = labels[members[0]];
        let e = largest.entry(l).or_insert(id);
        if comps[*e].len() < members.len() {
            *e = id;
        }
    }
    let mut changed = false;
    for (id, members) in comps.iter().enumerate() {
        let l = labels[members[0]];
        if largest[&l] == id {
            continue;
        }
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &f in members {
            for g in adj.neighbors[f].iter().flatten() {
                if labels[*g] != l {
                    *votes.entry(labels[*g]).or_default() += 1;
                }
            }
        }
        if let Some((&target, _)) = votes.iter().max_by_key(|(lbl, c)| (**c, std::cmp::Reverse(**lbl))) {
            for &f in members {
                labels[f] = target;
            }
            changed = true;
        }
    }
    changed
}

fn split_pinches(mesh: &TriangleMesh, adj: &FaceAdjacency, labels: &mut [usize]) -> bool {
    let mut ring: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        for &v in face {
            ring[v].push(f);
        }
    }
    let mut changed = false;
    for v in 0..mesh.vertex_count() {
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &f in &ring[v] {
            by_label.entry(labels[f]).or_default().push(f);
        }
        for (label, faces) in by_label {
            // fans: groups of this label's faces around v connected through edges at v
            let mut fan = vec![usize::MAX; faces.len()];
            let mut fans = 0;
            for i in 0..faces.len() {
                if fan[i] != usize::MAX {
                    continue;
                }
                fan[i] = fans;
                let mut stack = vec![i];
                while let Some(a) = stack.pop() {
                    for (j, &g) in faces.iter().enumerate() {
                        if fan[j] == usize::MAX && shares_edge_at(mesh, adj, faces[a], g, v) {
                            fan[j] = fans;
                            stack.push(j);
                        }
                    }
                }
                fans += 1;
            }
            if fans < 2 {
                continue;
            }
            let mut sizes = vec![0usize; fans];
            for &k in &fan {
                sizes[k] += 1;
            }
            let keep = (0..fans).max_by_key(|&k| (sizes[k], std::cmp::Reverse(k))).unwrap_or(0);
            for (j, &f) in faces.iter().enumerate() {
                if fan[j] == keep || labels[f] != label {
                    continue;
                }
                if let Some(other) = adj.neighbors[f].iter().flatten().map(|g| labels[*g]).find(|&l| l != label) {
                    labels[f] = other;
                    changed = true;
                }
            }
        }
    }
    changed
}

fn shares_edge_at(mesh: &TriangleMesh, adj: &FaceAdjacency, f: usize, g: usize, v: usize) -> bool {
    let face = mesh.faces()[f];
    (0..3).any(|k| adj.neighbors[f][k] == Some(g) && (face[k] == v || face[(k + 1) % 3] == v))
}

/// Geodesic Voronoi partition into at most `target_parts` valid submeshes.
///
/// Seeds are spread by farthest-point sampling over centroid distances in the dual graph.
/// If the result violates the submesh rules the target is lowered until it does not.
pub fn default_partition(mesh: &TriangleMesh, target_parts: usize) -> PartitionLabeling {
    let adj = FaceAdjacency::new(mesh);
    let centroids = face_centroids(mesh);
    let mut target = target_parts.min(mesh.face_count());
    while target > 1 {
        let mut seeds = vec![0usize];
        let (d0, _) = face_dijkstra(&adj, &centroids, &seeds);
        seeds[0] = argmax(&d0);
        while seeds.len() < target {
            let (d, _) = face_dijkstra(&adj, &centroids, &seeds);
            seeds.push(argmax(&d));
        }
        let (_, mut labels) = face_dijkstra(&adj, &centroids, &seeds);
        repair_labels(mesh, &mut labels);
        let labeling = PartitionLabeling::new(labels);
        if labeling.part_count() > 1 {
            if let Ok(subs) = extract_submeshes(mesh, &labeling) {
                if super::plan::build_weld_specs(mesh, &labeling, &subs).is_ok() {
                    return labeling;
                }
            }
        }
        target -= 1;
    }
    PartitionLabeling::trivial(mesh.face_count())
}

fn argmax(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in d.iter().enumerate() {
        if v.is_finite() && (!d[best].is_finite() || v > d[best]) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn trivial_labeling_keeps_mesh() {
        let m = fixtures::flat_annulus(12, 4, 0.5, 1.0);
        let subs = extract_submeshes(&m, &PartitionLabeling::trivial(m.face_count())).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].mesh.vertex_count(), m.vertex_count());
        assert_eq!(subs[0].mesh.face_count(), m.face_count());
    }

    #[test]
    fn annulus_radial_cuts_give_two_disks_sharing_two_arcs() {
        let m = fixtures::flat_annulus(24, 6, 0.5, 1.0);
        let labels: Vec<usize> = (0..m.face_count())
            .map(|f| {
                let c = fixtures::face_centroid(&m, f);
                usize::from(c[0] > 0.0)
            })
            .collect();
        let labeling = PartitionLabeling::new(labels);
        let subs = extract_submeshes(&m, &labeling).unwrap();
        assert_eq!(subs.len(), 2);
        for s in &subs {
            assert_eq!(s.mesh.hole_count(), 0);
            assert_eq!(s.mesh.euler_characteristic(), 1);
        }
        let cuts = labeling.cut_edges(&m);
        assert_eq!(cuts.len(), 2 * 6);
    }

    #[test]
    fn default_partition_of_annulus_gives_disks() {
        let m = fixtures::flat_annulus(40, 8, 0.5, 1.0);
        let labeling = default_partition(&m, 2);
        assert_eq!(labeling.part_count(), 2);
        for s in extract_submeshes(&m, &labeling).unwrap() {
            assert_eq!(s.mesh.euler_characteristic(), 1);
        }
    }

    #[test]
    fn default_partition_target_one_is_trivial() {
        let m = fixtures::flat_annulus(12, 4, 0.5, 1.0);
        assert_eq!(default_partition(&m, 1), PartitionLabeling::trivial(m.face_count()));
    }

    fn ears(adj: &FaceAdjacency, labels: &[usize]) -> usize {
        (0..labels.len())
            .filter(|&f| {
                let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
                for g in adj.neighbors[f].iter().flatten() {
                    *votes.entry(labels[*g]).or_default() += 1;
                }
                let same = votes.get(&labels[f]).copied().unwrap_or(0);
                votes.iter().any(|(&l, &c)| l != labels[f] && c >= 2 && c > same)
            })
            .count()
    }

    #[test]
    fn repair_removes_ears_from_a_zigzag_cut() {
        let m = fixtures::square_grid(16);
        let mut labels: Vec<usize> = (0..m.face_count())
            .map(|f| {
                let c = fixtures::face_centroid(&m, f);
                let tooth = c[0] > 0.5 - 1.0 / 16.0 && ((c[1] * 16.0) as usize).is_multiple_of(2) && f.is_multiple_of(2);
                usize::from(c[0] > 0.5 || tooth)
            })
            .collect();
        let adj = FaceAdjacency::new(&m);
        assert!(ears(&adj, &labels) > 0);
        repair_labels(&m, &mut labels);
        assert_eq!(ears(&adj, &labels), 0);
        assert_eq!(extract_submeshes(&m, &PartitionLabeling::new(labels)).unwrap().len(), 2);
    }

    #[test]
    fn default_partition_cells_are_connected_and_cover_every_face() {
        let m = fixtures::two_hole_disk(0.08);
        let labeling = default_partition(&m, 4);
        assert_eq!(labeling.part_count(), 4);
        let subs = extract_submeshes(&m, &labeling).unwrap();
        assert_eq!(subs.iter().map(|s| s.mesh.face_count()).sum::<usize>(), m.face_count());
        assert_eq!(ears(&FaceAdjacency::new(&m), &labeling.face_label), 0);
    }
}
