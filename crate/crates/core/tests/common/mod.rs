//! Random feature-model generator shared by the property suites.
//!
//! Models stay small (at most 12 features) and mix relation kinds, always
//! with at least one numeric feature and one cross-branch dependency. Two
//! structural rules keep the generated shapes inside the encoding's domain:
//! every non-root feature gets a mandatory or grouped first child (so a
//! deselectable branch's on-state is always witnessed by some gene), and
//! dependency main endpoints are features whose state maps onto a single
//! gene (leaves, numeric features, XOR members or OR-group roots).

use fmoea_core::feature_model::{
    Comparator, DependencyKind, FeatureId, FeatureKind, FeatureModel, Relation, ValueRange,
};
use fmoea_core::reference::builders::{ModelBuilder, RelationSpec};
use fmoea_core::scenario::Transposition;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct GeneratedModel {
    pub model: FeatureModel,
    pub transposition: Transposition,
    pub assignment_space: usize,
}

/// All chromosome assignments of a transposition, in lexicographic order.
pub fn all_assignments(tr: &Transposition) -> Vec<Vec<usize>> {
    let counts: Vec<usize> = tr.spec.genes.iter().map(|g| g.options.len()).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut a = Vec::with_capacity(counts.len());
        for &c in &counts {
            a.push(idx % c);
            idx /= c;
        }
        out.push(a);
    }
    out
}

pub fn random_model(seed: u64) -> GeneratedModel {
    for attempt in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(attempt));
        if let Some(found) = try_random_model(&mut rng) {
            return found;
        }
    }
    panic!("no viable random model for seed {seed}");
}

fn try_random_model(rng: &mut ChaCha8Rng) -> Option<GeneratedModel> {
    let mut b = ModelBuilder::new("r");
    let budget = 11usize; // features beyond the root
    let mut used = 0usize;
    let mut counter = 0usize;
    let mut fresh = |prefix: &str| {
        counter += 1;
        format!("{prefix}{counter}")
    };

    // parents that may still receive children: (id, childless, can_be_off)
    let mut parents: Vec<(String, bool, bool)> = vec![("r".into(), false, false)];
    let mut has_numeric = false;

    while used < budget.saturating_sub(1) {
        let pi = rng.random_range(0..parents.len());
        let (parent, childless, parent_off) = parents[pi].clone();
        let is_root = parent == "r";
        // a childless non-root parent first gets a mandatory or grouped
        // child so its on-state stays expressible
        let choice = if childless && !is_root {
            rng.random_range(0..4)
        } else {
            4 + rng.random_range(0..3)
        };
        match choice {
            0 | 4 => {
                // mandatory leaf
                let id = fresh("m");
                b.feature(&id, &parent, RelationSpec::Mandatory);
                parents.push((id, true, parent_off));
                used += 1;
            }
            1 | 6 => {
                // numeric feature; a zero value only where it can be off
                let id = fresh("n");
                let relation = if choice == 6 && rng.random_bool(0.5) {
                    RelationSpec::Optional
                } else {
                    RelationSpec::Mandatory
                };
                let can_be_off = relation == RelationSpec::Optional || parent_off;
                let count = rng.random_range(2..=3usize);
                if used + 1 + count > budget {
                    break;
                }
                let mut values: Vec<f64> = Vec::new();
                if can_be_off && rng.random_bool(0.5) {
                    values.push(0.0);
                }
                let mut v = rng.random_range(1..=3) as f64;
                while values.len() < count {
                    values.push(v);
                    v += rng.random_range(1..=3) as f64;
                }
                b.numeric(&id, &parent, relation, &values);
                used += 1 + count;
                has_numeric = true;
            }
            2 | 5 => {
                // XOR group of two or three leaves
                let k = rng.random_range(2..=3usize);
                if used + k > budget {
                    break;
                }
                let names: Vec<String> = (0..k).map(|_| fresh("x")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                b.xor_group(&parent, &fresh("gx"), &refs);
                used += k;
            }
            _ => {
                // OR group of two or three leaves
                let k = rng.random_range(2..=3usize);
                if used + k > budget {
                    break;
                }
                let names: Vec<String> = (0..k).map(|_| fresh("o")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                b.or_group(&parent, &fresh("go"), &refs);
                for n in &names {
                    parents.push((n.clone(), true, true));
                }
                used += k;
            }
        }
        if let Some(p) = parents.iter_mut().find(|(id, ..)| *id == parent) {
            p.1 = false;
        }
        // an optional root-level leaf now and then
        if used < budget && rng.random_bool(0.35) {
            let id = fresh("p");
            b.feature(&id, "r", RelationSpec::Optional);
            parents.push((id, true, true));
            used += 1;
        }
    }
    if !has_numeric {
        if used + 3 > budget + 1 {
            return None;
        }
        b.numeric(&fresh("n"), "r", RelationSpec::Mandatory, &[1.0, 2.0]);
    }

    let model = b.build();
    if fmoea_core::feature_model::validate_model(&model).iter().count() > 0 {
        return None;
    }
    if model.feature_count() > 12 {
        return None;
    }

    // dependency placement over the finished structure
    let mut b = rebuild(&model);
    let dependents = dependent_pool(&model);
    let mains = main_pool(&model);
    if dependents.is_empty() || mains.is_empty() {
        return None;
    }
    let deps = rng.random_range(1..=3usize);
    let mut placed = 0;
    for _ in 0..20 {
        if placed >= deps {
            break;
        }
        let d = &dependents[rng.random_range(0..dependents.len())];
        let m = &mains[rng.random_range(0..mains.len())];
        if d.feature == m.feature
            || related(&model, d.feature, m.feature)
            || d.numeric != m.numeric && rng.random_bool(0.1)
        {
            continue;
        }
        let d_id = model.feature(d.feature).id.clone();
        let m_id = model.feature(m.feature).id.clone();
        match (d.numeric, m.numeric) {
            (true, true) => {
                let cmp = [Comparator::Le, Comparator::Lt, Comparator::Ge][rng.random_range(0..3)];
                b.range_to_range(&d_id, &m_id, cmp);
            }
            (false, true) => {
                b.to_range(&d_id, &m_id, half_range(&model, m.feature, rng));
            }
            (true, false) => {
                b.range_to(&d_id, &m_id, half_range(&model, d.feature, rng));
            }
            (false, false) => {
                if rng.random_bool(0.6) {
                    b.dep(
                        DependencyKind::Require,
                        (&d_id, None),
                        (&m_id, None),
                        None,
                    );
                } else {
                    b.dep(
                        DependencyKind::Exclude,
                        (&d_id, None),
                        (&m_id, None),
                        None,
                    );
                }
            }
        }
        placed += 1;
    }
    if placed == 0 {
        return None;
    }

    let model = b.build();
    let transposition = Transposition::of(&model).ok()?;
    let assignment_space: usize = transposition
        .spec
        .genes
        .iter()
        .map(|g| g.options.len())
        .product();
    if transposition.spec.gene_count() == 0 || assignment_space > 40_000 {
        return None;
    }
    let (configs, truncated) = model.enumerate_valid_configurations(60_000);
    if truncated || configs.is_empty() {
        return None;
    }
    Some(GeneratedModel {
        model,
        transposition,
        assignment_space,
    })
}

struct EndpointInfo {
    feature: FeatureId,
    numeric: bool,
}

fn in_or_member_subtree(m: &FeatureModel, f: FeatureId) -> bool {
    let mut cur = Some(f);
    while let Some(x) = cur {
        if matches!(m.feature(x).relation, Relation::InOrGroup(_)) {
            return true;
        }
        cur = m.feature(x).parent;
    }
    false
}

/// Features that can be off may depend on something. Inside OR-member
/// subtrees only XOR-member leaves qualify: their dependencies rewrite to
/// qualified forms that never force the whole gene off, which keeps the
/// group's at-least-one constraint enforceable.
fn dependent_pool(m: &FeatureModel) -> Vec<EndpointInfo> {
    m.features()
        .filter(|(id, f)| {
            if matches!(f.kind, FeatureKind::NumericValue(_)) || *id == m.root {
                return false;
            }
            if !(m.is_deselectable(*id) || m.is_conditionally_deselectable(*id)) {
                return false;
            }
            if in_or_member_subtree(m, *id) {
                return matches!(f.relation, Relation::InXorGroup(_))
                    && f.kind == FeatureKind::Categorical
                    && f.children.is_empty();
            }
            true
        })
        .map(|(id, f)| EndpointInfo {
            feature: id,
            numeric: f.kind == FeatureKind::NumericParent,
        })
        .collect()
}

/// Main endpoints must map onto a single gene: deselectable leaves, numeric
/// features, or XOR members.
fn main_pool(m: &FeatureModel) -> Vec<EndpointInfo> {
    m.features()
        .filter(|(id, f)| {
            if matches!(f.kind, FeatureKind::NumericValue(_)) || *id == m.root {
                return false;
            }
            if !(m.is_deselectable(*id) || m.is_conditionally_deselectable(*id)) {
                return false;
            }
            f.kind == FeatureKind::NumericParent
                || f.children.is_empty()
                || matches!(f.relation, Relation::InXorGroup(_))
        })
        .map(|(id, f)| EndpointInfo {
            feature: id,
            numeric: f.kind == FeatureKind::NumericParent,
        })
        .collect()
}

fn related(m: &FeatureModel, a: FeatureId, b: FeatureId) -> bool {
    let ancestor_of = |x: FeatureId, y: FeatureId| {
        let mut cur = Some(y);
        while let Some(f) = cur {
            if f == x {
                return true;
            }
            cur = m.feature(f).parent;
        }
        false
    };
    ancestor_of(a, b) || ancestor_of(b, a)
}

/// A range covering roughly the upper half of a numeric feature's values.
fn half_range(m: &FeatureModel, numeric: FeatureId, rng: &mut ChaCha8Rng) -> ValueRange {
    let mut values: Vec<f64> = m
        .feature(numeric)
        .children
        .iter()
        .filter_map(|&c| m.feature(c).numeric_value())
        .filter(|v| *v > 0.0)
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = values[rng.random_range(0..values.len())];
    ValueRange {
        min: Some(cut),
        max: None,
        exclusions: vec![],
    }
}

/// Rebuilds a builder holding an existing model so dependencies can be
/// appended. The builder API only adds, so replay the structure.
fn rebuild(m: &FeatureModel) -> ModelBuilder {
    let root_id = &m.feature(m.root).id;
    let mut b = ModelBuilder::new(root_id);
    for f in m.preorder() {
        if f == m.root {
            continue;
        }
        let feat = m.feature(f);
        let parent = m.feature(feat.parent.unwrap()).id.clone();
        match (&feat.kind, &feat.relation) {
            (FeatureKind::NumericParent, rel) => {
                let values: Vec<f64> = feat
                    .children
                    .iter()
                    .filter_map(|&c| m.feature(c).numeric_value())
                    .collect();
                match rel {
                    Relation::Mandatory => {
                        b.numeric(&feat.id, &parent, RelationSpec::Mandatory, &values)
                    }
                    Relation::Optional => {
                        b.numeric(&feat.id, &parent, RelationSpec::Optional, &values)
                    }
                    Relation::InXorGroup(g) | Relation::InOrGroup(g) => {
                        let group = m.group(*g);
                        let kind = match feat.relation {
                            Relation::InXorGroup(_) => fmoea_core::feature_model::GroupKind::Xor,
                            _ => fmoea_core::feature_model::GroupKind::Or,
                        };
                        b.numeric_in_group(&feat.id, &parent, &group.id, kind, &values)
                    }
                };
            }
            (FeatureKind::NumericValue(_), _) => {} // children of numerics, already added
            (FeatureKind::Categorical, Relation::Mandatory) => {
                b.feature(&feat.id, &parent, RelationSpec::Mandatory);
            }
            (FeatureKind::Categorical, Relation::Optional) => {
                b.feature(&feat.id, &parent, RelationSpec::Optional);
            }
            (FeatureKind::Categorical, Relation::InXorGroup(g)) => {
                let group = m.group(*g);
                // first member creates the group
                if group.members.first() == Some(&f) {
                    let names: Vec<String> = group
                        .members
                        .iter()
                        .map(|&x| m.feature(x).id.clone())
                        .collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    b.xor_group(&parent, &group.id, &refs);
                }
            }
            (FeatureKind::Categorical, Relation::InOrGroup(g)) => {
                let group = m.group(*g);
                if group.members.first() == Some(&f) {
                    let names: Vec<String> = group
                        .members
                        .iter()
                        .map(|&x| m.feature(x).id.clone())
                        .collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    b.or_group(&parent, &group.id, &refs);
                }
            }
        }
    }
    b
}
