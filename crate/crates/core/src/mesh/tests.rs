use proptest::prelude::*;

use super::*;

/// Brute-force: every pair of active elements touching along a segment of
/// positive length has side lengths within a factor two.
fn brute_force_one_irregular(mesh: &Mesh) -> bool {
    let act: Vec<&Element> = mesh.active_elements().collect();
    for a in &act {
        for b in &act {
            if a.id >= b.id {
                continue;
            }
            // vertical contact (shared x line)
            if a.ix[1] == b.ix[0] || b.ix[1] == a.ix[0] {
                let overlap = a.iz[1].min(b.iz[1]) - a.iz[0].max(b.iz[0]);
                if overlap > 0 {
                    let (la, lb) = (a.iz[1] - a.iz[0], b.iz[1] - b.iz[0]);
                    if la > 2 * lb || lb > 2 * la {
                        return false;
                    }
                }
            }
            if a.iz[1] == b.iz[0] || b.iz[1] == a.iz[0] {
                let overlap = a.ix[1].min(b.ix[1]) - a.ix[0].max(b.ix[0]);
                if overlap > 0 {
                    let (la, lb) = (a.ix[1] - a.ix[0], b.ix[1] - b.ix[0]);
                    if la > 2 * lb || lb > 2 * la {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn active_boxes(mesh: &Mesh) -> Vec<([i64; 2], [i64; 2])> {
    let mut v: Vec<_> = mesh.active_elements().map(|e| (e.ix, e.iz)).collect();
    v.sort_unstable();
    v
}

#[test]
fn one_dimensional_mesh_counts() {
    let m = build_waveguide_mesh(4, 4, 0, 3, None).unwrap();
    assert_eq!(m.dim, 1);
    assert_eq!(m.n_active(), 16);
    assert_eq!(m.facets.len(), 17);
    m.check_invariants().unwrap();
}

#[test]
fn two_dimensional_mesh_counts() {
    let m = build_waveguide_mesh(2, 4, 2, 2, None).unwrap();
    assert_eq!(m.dim, 2);
    assert_eq!(m.n_active(), 16);
    let columns: std::collections::BTreeSet<_> = m.active_elements().map(|e| e.iz).collect();
    let rows: std::collections::BTreeSet<_> = m.active_elements().map(|e| e.ix).collect();
    assert_eq!((columns.len(), rows.len()), (8, 2));
    m.check_invariants().unwrap();
}

#[test]
fn layered_labels_two_per_domain() {
    let m = build_waveguide_mesh(1, 2, 4, 2, Some(vec![0.25, 0.5, 0.75])).unwrap();
    assert_eq!(m.n_active(), 8);
    for label in DomainLabel::FIBER {
        assert_eq!(m.active_elements().filter(|e| e.label == label).count(), 2, "{label:?}");
    }
}

#[test]
fn build_errors() {
    assert!(build_waveguide_mesh(0, 4, 2, 2, None).is_err());
    assert!(build_waveguide_mesh(1, 4, 2, 2, Some(vec![1.5])).is_err());
    assert!(build_waveguide_mesh(1, 4, 3, 2, Some(vec![0.6, 0.4])).is_err());
}

#[test]
fn boundary_tags() {
    let m = build_waveguide_mesh(1, 2, 2, 1, None).unwrap();
    let count = |t| m.facets.iter().filter(|f| f.boundary == Some(t)).count();
    assert_eq!(count(BoundaryTag::Input), 2);
    assert_eq!(count(BoundaryTag::Output), 2);
    assert_eq!(count(BoundaryTag::Wall), 4);
    // interior: 1 horizontal line with 2 facets + 1 vertical line with 2 facets
    assert_eq!(m.facets.iter().filter(|f| f.is_interior()).count(), 4);
}

#[test]
fn iso_and_aniso_split_counts() {
    let m = build_waveguide_mesh(1, 1, 1, 2, None).unwrap();
    let iso = m.refined(&MarkSet::uniform([0], RefineMode::Iso)).unwrap();
    assert_eq!(iso.n_active(), 4);
    let az = m.refined(&MarkSet::uniform([0], RefineMode::AnisoZ)).unwrap();
    assert_eq!(az.n_active(), 2);
    let zs: Vec<_> = az.active_elements().map(|e| e.iz).collect();
    assert_ne!(zs[0], zs[1], "aniso_z children are stacked along z");
    assert!(az.active_elements().all(|e| e.ix == [0, SUBDIV]));
}

#[test]
fn one_dimensional_refine_splits_in_two() {
    let m = build_waveguide_mesh(1, 2, 0, 2, None).unwrap();
    let r = m.refined(&MarkSet::uniform([1], RefineMode::Iso)).unwrap();
    assert_eq!(r.n_active(), 3);
    r.check_invariants().unwrap();
}

#[test]
fn refining_inactive_element_fails() {
    let m = build_waveguide_mesh(1, 1, 1, 2, None).unwrap();
    let r = m.refined(&MarkSet::uniform([0], RefineMode::Iso)).unwrap();
    assert!(matches!(
        r.refined(&MarkSet::uniform([0], RefineMode::Iso)),
        Err(Error::InactiveElement(0))
    ));
}

#[test]
fn closure_force_refines_neighbor_once() {
    // two elements side by side across the guide
    let m = build_waveguide_mesh(1, 1, 2, 2, None).unwrap();
    let left = m.active_elements().find(|e| e.ix[0] == 0).unwrap().id;
    let right = m.active_elements().find(|e| e.ix[0] != 0).unwrap().id;
    let m1 = m.refined(&MarkSet::uniform([left], RefineMode::Iso)).unwrap();
    assert_eq!(m1.closure_refinements, 0);
    // the child of `left` touching `right`
    let child = m1
        .active_elements()
        .find(|e| e.parent == Some(left) && e.ix[1] == m1.elements[right].ix[0] && e.iz[0] == 0)
        .unwrap()
        .id;
    let m2 = m1.refined(&MarkSet::uniform([child], RefineMode::Iso)).unwrap();
    assert_eq!(m2.closure_refinements, 1);
    assert!(!m2.elements[right].active);
    assert_eq!(m2.elements[right].children.len(), 2);
    assert!(brute_force_one_irregular(&m2));
    assert!(m2.is_one_irregular());
    m2.check_invariants().unwrap();
}

#[test]
fn close_is_identity_on_regular_meshes() {
    let m = build_waveguide_mesh(2, 2, 3, 2, None).unwrap();
    let c = m.closed().unwrap();
    assert_eq!(active_boxes(&m), active_boxes(&c));
    assert_eq!(c.closure_refinements, 0);
}

#[test]
fn json_snapshot_lists_active_elements() {
    let m = build_waveguide_mesh(1, 2, 2, 3, None).unwrap();
    let snap: MeshSnapshot = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    assert_eq!(snap.elements.len(), 4);
    assert_eq!(snap.facets.len(), m.facets.len());
    assert!(snap.elements.iter().all(|e| e.p == 3));
}

fn arb_mode() -> impl Strategy<Value = RefineMode> {
    prop_oneof![Just(RefineMode::Iso), Just(RefineMode::AnisoX), Just(RefineMode::AnisoZ)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_refinements_keep_invariants(
        steps in prop::collection::vec((prop::collection::vec(0usize..1000, 1..4), arb_mode()), 1..5)
    ) {
        let mut m = build_waveguide_mesh(2, 2, 2, 2, None).unwrap();
        for (picks, mode) in steps {
            let act = m.active_ids();
            let ids: std::collections::BTreeSet<usize> = picks.iter().map(|k| act[k % act.len()]).collect();
            m.refine(&MarkSet::uniform(ids, mode)).unwrap();
            m.check_invariants().unwrap();
            prop_assert!(brute_force_one_irregular(&m));
            prop_assert!(m.is_one_irregular());
            let again = m.closed().unwrap();
            prop_assert_eq!(active_boxes(&again), active_boxes(&m));
            // every interior facet is covered by exactly two sides
            for f in &m.facets {
                prop_assert!(f.elements().count() <= 2);
            }
        }
    }
}
