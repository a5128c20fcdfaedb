//! Topological weld planning.
//!
//! Components are sets of submeshes. Welds first enclose every hole of the parent in a
//! component of its own, then join the components along single shared arcs.

use super::{MeshError, PartitionLabeling, Submesh, TriangleMesh};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArcKind {
    /// One contiguous shared arc.
    Continuous,
    /// Two shared arcs separated by a hole of the parent.
    TwoArc,
}

/// A weld between two components, expressed with parent vertex ids.
///
/// `a_chain` is the outer loop of component `a` with `a` on its left, starting at the first
/// shared vertex. `b_chain` is the outer loop of `b` reversed and rotated so that shared
/// vertices sit at equal positions on both chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeldSpec {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub kind: ArcKind,
    pub a_chain: Vec<usize>,
    pub b_chain: Vec<usize>,
    /// Index of the last vertex of the (first) shared arc.
    pub first_end: usize,
    /// For two-arc welds: start and end of the second shared arc on each chain.
    pub a_second: Option<(usize, usize)>,
    pub b_second: Option<(usize, usize)>,
    /// Parent inner loop index enclosed by a two-arc weld.
    pub hole: Option<usize>,
}

/// Ordered welds: rounds of independent welds that enclose the holes, then rounds that join
/// everything into one component.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeldPlan {
    pub enclosing_rounds: Vec<Vec<WeldSpec>>,
    /// Parent inner loop index and the submeshes of the component that holds it after enclosing.
    pub hole_components: Vec<(usize, Vec<usize>)>,
    pub joining_rounds: Vec<Vec<WeldSpec>>,
}

impl WeldPlan {
    pub fn weld_count(&self) -> usize {
        self.enclosing_rounds.iter().chain(&self.joining_rounds).map(Vec::len).sum()
    }

    pub fn all_welds(&self) -> impl Iterator<Item = &WeldSpec> {
        self.enclosing_rounds.iter().chain(&self.joining_rounds).flatten()
    }
}

#[derive(Clone, Debug)]
struct Component {
    members: BTreeSet<usize>,
    /// Boundary half-edges with the component on the left.
    boundary: BTreeSet<(usize, usize)>,
    holes: BTreeSet<usize>,
    outer: Vec<usize>,
}

struct Context {
    /// Parent inner loop index of every parent boundary half-edge on an inner loop.
    hole_edge: BTreeMap<(usize, usize), usize>,
    hole_len: Vec<usize>,
}

impl Context {
    fn classify(&self, boundary: &BTreeSet<(usize, usize)>) -> Option<(Vec<usize>, BTreeSet<usize>)> {
        let loops = loops_of(boundary)?;
        let mut outer = None;
        let mut holes = BTreeSet::new();
        for lp in loops {
            let first = self.hole_edge.get(&(lp[0], lp[1 % lp.len()])).copied();
            let is_hole = first.is_some_and(|h| {
                lp.len() == self.hole_len[h]
                    && (0..lp.len()).all(|i| self.hole_edge.get(&(lp[i], lp[(i + 1) % lp.len()])) == Some(&h))
            });
            if is_hole {
                holes.insert(first.unwrap_or_default());
            } else if outer.replace(lp).is_some() {
                return None;
            }
        }
        Some((outer?, holes))
    }

    fn component(&self, members: BTreeSet<usize>, boundary: BTreeSet<(usize, usize)>) -> Option<Component> {
        let (outer, holes) = self.classify(&boundary)?;
        Some(Component { members, boundary, holes, outer })
    }
}

fn loops_of(boundary: &BTreeSet<(usize, usize)>) -> Option<Vec<Vec<usize>>> {
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for &(u, v) in boundary {
        if next.insert(u, v).is_some() {
            return None;
        }
    }
    let mut seen = BTreeSet::new();
    let mut loops = Vec::new();
    for &start in next.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut lp = Vec::new();
        let mut v = start;
        while seen.insert(v) {
            lp.push(v);
            v = *next.get(&v)?;
        }
        if v != start {
            return None;
        }
        loops.push(lp);
    }
    Some(loops)
}

/// Maximal runs of consecutive edges of `a.outer` whose reverse lies on `b`'s boundary,
/// as (start index, edge count).
fn shared_runs(a: &Component, b: &Component) -> Vec<(usize, usize)> {
    let n = a.outer.len();
    let shared: Vec<bool> =
        (0..n).map(|i| b.boundary.contains(&(a.outer[(i + 1) % n], a.outer[i]))).collect();
    if shared.iter().all(|&s| s) {
        return vec![(0, n)];
    }
    let Some(start) = (0..n).find(|&i| !shared[i]) else {
        return Vec::new();
    };
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        let idx = (start + i) % n;
        if shared[idx] {
            let mut len = 0;
            while i < n && shared[(start + i) % n] {
                len += 1;
                i += 1;
            }
            runs.push((idx, len));
        } else {
            i += 1;
        }
    }
    runs
}

fn union(ctx: &Context, a: &Component, b: &Component) -> Option<Component> {
    let mut boundary = a.boundary.clone();
    for &(u, v) in &b.boundary {
        if !boundary.remove(&(v, u)) {
            boundary.insert((u, v));
        }
    }
    let members = a.members.union(&b.members).copied().collect();
    ctx.component(members, boundary)
}

fn rotate(lp: &[usize], start: usize) -> Vec<usize> {
    lp[start..].iter().chain(&lp[..start]).copied().collect()
}

fn reversed_from(lp: &[usize], vertex: usize) -> Option<Vec<usize>> {
    let mut rev: Vec<usize> = lp.iter().rev().copied().collect();
    let pos = rev.iter().position(|&v| v == vertex)?;
    rev.rotate_left(pos);
    Some(rev)
}

fn spec(ctx: &Context, a: &Component, b: &Component) -> Option<(WeldSpec, Component)> {
    let runs = shared_runs(a, b);
    let merged = union(ctx, a, b)?;
    let new_holes: Vec<usize> = merged.holes.difference(&a.holes).filter(|h| !b.holes.contains(h)).copied().collect();
    match (runs.len(), new_holes.len()) {
        (1, 0) => {
            let (start, len) = runs[0];
            if len >= a.outer.len() {
                return None;
            }
            let a_chain = rotate(&a.outer, start);
            let b_chain = reversed_from(&b.outer, a_chain[0])?;
            if b_chain[..=len] != a_chain[..=len] {
                return None;
            }
            let s = WeldSpec {
                a: a.members.iter().copied().collect(),
                b: b.members.iter().copied().collect(),
                kind: ArcKind::Continuous,
                a_chain,
                b_chain,
                first_end: len,
                a_second: None,
                b_second: None,
                hole: None,
            };
            Some((s, merged))
        }
        (2, 1) => {
            let hole = new_holes[0];
            let n = a.outer.len();
            // Pick the run followed by the gap that runs along the new hole.
            for (ri, &(start, len)) in runs.iter().enumerate() {
                let gap_start = (start + len) % n;
                let edge = (a.outer[gap_start], a.outer[(gap_start + 1) % n]);
                if ctx.hole_edge.get(&edge) != Some(&hole) {
                    continue;
                }
                let (start2, len2) = runs[1 - ri];
                let a_chain = rotate(&a.outer, start);
                let second_start = (start2 + n - start) % n;
                let second_end = second_start + len2;
                if second_end >= n {
                    return None;
                }
                let b_chain = reversed_from(&b.outer, a_chain[0])?;
                if b_chain[..=len] != a_chain[..=len] {
                    return None;
                }
                let bs = b_chain.iter().position(|&v| v == a_chain[second_start])?;
                let be = bs + len2;
                if be >= b_chain.len() || b_chain[bs..=be] != a_chain[second_start..=second_end] {
                    return None;
                }
                let s = WeldSpec {
                    a: a.members.iter().copied().collect(),
                    b: b.members.iter().copied().collect(),
                    kind: ArcKind::TwoArc,
                    a_chain,
                    b_chain,
                    first_end: len,
                    a_second: Some((second_start, second_end)),
                    b_second: Some((bs, be)),
                    hole: Some(hole),
                };
                return Some((s, merged));
            }
            None
        }
        _ => None,
    }
}

/// Plans the welds for a validated partition.
pub fn build_weld_specs(
    mesh: &TriangleMesh,
    _labels: &PartitionLabeling,
    submeshes: &[Submesh],
) -> Result<WeldPlan, MeshError> {
    let mut hole_edge = BTreeMap::new();
    let mut hole_len = Vec::new();
    for (h, lp) in mesh.inner_loops().iter().enumerate() {
        for i in 0..lp.len() {
            hole_edge.insert((lp[i], lp[(i + 1) % lp.len()]), h);
        }
        hole_len.push(lp.len());
    }
    let ctx = Context { hole_edge, hole_len };

    let mut comps: Vec<Component> = Vec::new();
    for s in submeshes {
        let mut boundary = BTreeSet::new();
        for lp in s.mesh.boundary_loops() {
            for i in 0..lp.len() {
                boundary.insert((s.to_parent[lp[i]], s.to_parent[lp[(i + 1) % lp.len()]]));
            }
        }
        let comp = ctx
            .component(BTreeSet::from([s.id]), boundary)
            .ok_or_else(|| MeshError::NoValidPlan(format!("submesh {} has an inner loop that is not a hole", s.id)))?;
        comps.push(comp);
    }

    let hole_count = mesh.hole_count();
    let mut plan = WeldPlan::default();

    // Enclose holes.
    loop {
        let enclosed: BTreeSet<usize> = comps.iter().flat_map(|c| c.holes.iter().copied()).collect();
        let open: Vec<usize> = (0..hole_count).filter(|h| !enclosed.contains(h)).collect();
        if open.is_empty() {
            break;
        }
        let mut used = vec![false; comps.len()];
        let mut round: Vec<(usize, usize, WeldSpec, Component)> = Vec::new();
        for &h in &open {
            let touching: Vec<usize> = (0..comps.len())
                .filter(|&i| !used[i] && comps[i].holes.is_empty() && touches_hole(&ctx, &comps[i], h))
                .collect();
            let mut best: Option<(usize, usize, WeldSpec, Component)> = None;
            for (x, &i) in touching.iter().enumerate() {
                for &j in &touching[x + 1..] {
                    let (lo, hi) = order_pair(&comps, i, j);
                    if let Some((s, merged)) = spec(&ctx, &comps[lo], &comps[hi]) {
                        let closes = s.hole == Some(h);
                        let better = match &best {
                            None => true,
                            Some((_, _, bs, _)) => closes && bs.hole != Some(h),
                        };
                        if better && merged.holes.len() <= 1 {
                            best = Some((lo, hi, s, merged));
                        }
                    }
                }
            }
            if let Some((lo, hi, s, merged)) = best {
                used[lo] = true;
                used[hi] = true;
                round.push((lo, hi, s, merged));
            }
        }
        if round.is_empty() {
            return Err(MeshError::NoValidPlan(format!("holes {open:?} cannot be enclosed by pairwise welds")));
        }
        plan.enclosing_rounds.push(round.iter().map(|r| r.2.clone()).collect());
        comps = apply_round(comps, round);
    }
    for c in &comps {
        for &h in &c.holes {
            plan.hole_components.push((h, c.members.iter().copied().collect()));
        }
    }
    plan.hole_components.sort();

    // Join components along single arcs.
    while comps.len() > 1 {
        let mut used = vec![false; comps.len()];
        let mut round = Vec::new();
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                if used[i] || used[j] {
                    continue;
                }
                let (lo, hi) = order_pair(&comps, i, j);
                if let Some((s, merged)) = spec(&ctx, &comps[lo], &comps[hi]) {
                    if s.kind == ArcKind::Continuous {
                        used[i] = true;
                        used[j] = true;
                        round.push((lo, hi, s, merged));
                    }
                }
            }
        }
        if round.is_empty() {
            return Err(MeshError::NoValidPlan(format!("{} components share no single arc", comps.len())));
        }
        plan.joining_rounds.push(round.iter().map(|r| r.2.clone()).collect());
        comps = apply_round(comps, round);
    }
    Ok(plan)
}

fn order_pair(comps: &[Component], i: usize, j: usize) -> (usize, usize) {
    let key = |k: usize| comps[k].members.iter().next().copied().unwrap_or(usize::MAX);
    if key(i) <= key(j) {
        (i, j)
    } else {
        (j, i)
    }
}

fn touches_hole(ctx: &Context, c: &Component, hole: usize) -> bool {
    c.boundary.iter().any(|e| ctx.hole_edge.get(e) == Some(&hole))
}

fn apply_round(comps: Vec<Component>, round: Vec<(usize, usize, WeldSpec, Component)>) -> Vec<Component> {
    let consumed: BTreeSet<usize> = round.iter().flat_map(|r| [r.0, r.1]).collect();
    let mut next: Vec<Component> =
        comps.into_iter().enumerate().filter(|(i, _)| !consumed.contains(i)).map(|(_, c)| c).collect();
    next.extend(round.into_iter().map(|r| r.3));
    next.sort_by_key(|c| c.members.iter().next().copied());
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::extract_submeshes;

    fn plan_for(mesh: &TriangleMesh, labels: Vec<usize>) -> Result<WeldPlan, MeshError> {
        let labeling = PartitionLabeling::new(labels);
        let subs = extract_submeshes(mesh, &labeling)?;
        build_weld_specs(mesh, &labeling, &subs)
    }

    #[test]
    fn single_submesh_needs_no_welds() {
        let m = fixtures::flat_annulus(16, 4, 0.5, 1.0);
        let plan = plan_for(&m, vec![0; m.face_count()]).unwrap();
        assert_eq!(plan.weld_count(), 0);
        assert_eq!(plan.hole_components, vec![(0, vec![0])]);
    }

    #[test]
    fn disk_halves_share_one_arc() {
        let m = fixtures::disk(1.0, 0.1);
        let labels = (0..m.face_count()).map(|f| usize::from(fixtures::face_centroid(&m, f)[1] > 0.0)).collect();
        let plan = plan_for(&m, labels).unwrap();
        assert_eq!(plan.weld_count(), 1);
        let w = &plan.joining_rounds[0][0];
        assert_eq!(w.kind, ArcKind::Continuous);
        assert_eq!(w.a_chain[..=w.first_end], w.b_chain[..=w.first_end]);
    }

    #[test]
    fn quadrants_of_two_hole_disk_plan_three_welds() {
        let m = fixtures::two_hole_disk(0.06);
        let labels = fixtures::quadrant_labels(&m);
        let plan = plan_for(&m, labels).unwrap();
        assert_eq!(plan.weld_count(), 3);
        assert_eq!(plan.enclosing_rounds.len(), 1);
        assert!(plan.enclosing_rounds[0].iter().all(|w| w.kind == ArcKind::TwoArc));
        assert_eq!(plan.joining_rounds.len(), 1);
        assert_eq!(plan.joining_rounds[0][0].kind, ArcKind::Continuous);
    }

    #[test]
    fn five_piece_partition_welds_three_then_two_then_joins() {
        let m = fixtures::two_hole_disk(0.06);
        let labels = fixtures::five_piece_labels(&m);
        let plan = plan_for(&m, labels).unwrap();
        // three pieces around the left hole need two welds, two around the right need one
        assert_eq!(plan.enclosing_rounds.iter().map(Vec::len).sum::<usize>(), 3);
        assert_eq!(plan.joining_rounds.iter().map(Vec::len).sum::<usize>(), 1);
        let left = plan.hole_components.iter().find(|(h, _)| {
            let lp = &m.inner_loops()[*h];
            m.positions()[lp[0]][0] < 0.0
        });
        assert_eq!(left.map(|(_, c)| c.len()), Some(3));
    }

    #[test]
    fn ring_around_a_filled_disk_has_no_plan() {
        let m = fixtures::disk(1.0, 0.1);
        let labels = (0..m.face_count())
            .map(|f| {
                let c = fixtures::face_centroid(&m, f);
                usize::from(c[0].hypot(c[1]) < 0.5)
            })
            .collect();
        assert!(matches!(plan_for(&m, labels), Err(MeshError::NoValidPlan(_))));
    }
}
