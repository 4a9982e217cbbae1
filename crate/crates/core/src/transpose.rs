//! Transposition of a feature model into a chromosome.
//!
//! Growing first makes the hidden on/off states explicit: leaves in OR groups
//! gain `On`/`Off` children (G-1), other leaves gain `On` (G-2, which also
//! turns them into branches for the next rule), and deselectable branches
//! plus their branch descendants gain `Off` (G-3). A grown feature becomes a
//! gene exactly when it parents an XOR group with more than one member;
//! singleton groups are pruned because their variability is their parent's.
//! Every numeric feature ends up a gene, and for a numeric gene the value `0`
//! plays the `Off` role.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::feature_model::{
    Feature, FeatureId, FeatureKind, FeatureModel, GroupId, GroupKind, Group, Configuration,
    ModelError, Relation,
};

/// Which growing rule created a synthetic child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowRule {
    G1,
    G2,
    G3,
}

/// A feature model extended with synthetic `On`/`Off` children.
///
/// The base model is untouched; synthetic features live past
/// `base_feature_count` and never appear in decoded configurations.
#[derive(Debug, Clone)]
pub struct GrownModel {
    pub model: FeatureModel,
    pub base_feature_count: usize,
    /// Synthetic children and the rule that created each.
    pub added: Vec<(FeatureId, GrowRule)>,
}

impl GrownModel {
    pub fn is_synthetic(&self, f: FeatureId) -> bool {
        f.0 >= self.base_feature_count
    }
}

/// What selecting one option of a gene means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptionKind {
    /// Deselect the gene's feature and its subtree (synthetic `Off` or the
    /// numeric value 0).
    Off,
    /// Keep the feature selected with no member of this group selected
    /// (synthetic `On`).
    On,
    /// Select this numeric value child.
    Value(f64),
    /// Select this original member feature (and its subtree).
    Member,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneOption {
    /// Backing feature in the grown model. Synthetic for `On`/`Off` markers.
    pub feature: usize,
    pub label: String,
    pub kind: OptionKind,
}

impl GeneOption {
    pub fn is_off(&self) -> bool {
        matches!(self.kind, OptionKind::Off)
    }

    pub fn numeric_value(&self) -> Option<f64> {
        match self.kind {
            OptionKind::Value(v) => Some(v),
            OptionKind::Off => Some(0.0),
            _ => None,
        }
    }
}

/// A gene: an XOR-group parent in the grown model with its option list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpec {
    /// Index in the chromosome.
    pub gene_id: usize,
    /// The XOR-group parent feature (index into the grown model).
    pub source_feature: usize,
    pub source_id: String,
    /// Option order: Off/0 first, then members in document order.
    pub options: Vec<GeneOption>,
    pub is_numeric: bool,
    /// Deselectable or conditionally deselectable source feature.
    pub deselectable: bool,
}

impl GeneSpec {
    /// Index of the Off/0 option, when the gene has one.
    pub fn off_option(&self) -> Option<usize> {
        self.options.iter().position(|o| o.is_off())
    }

    pub fn option_by_label(&self, label: &str) -> Option<usize> {
        self.options.iter().position(|o| o.label == label)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChromosomeSpec {
    pub genes: Vec<GeneSpec>,
    /// Product of the per-gene option counts.
    pub search_space_size: BigUint,
}

impl ChromosomeSpec {
    pub fn gene_count(&self) -> usize {
        self.genes.len()
    }

    pub fn gene_by_source(&self, source_id: &str) -> Option<usize> {
        self.genes.iter().position(|g| g.source_id == source_id)
    }
}

fn off_label() -> String {
    "Off".to_owned()
}

/// Applies the growing rules G-1, G-2, G-3 in order.
///
/// Idempotent: a feature that already exposes an `Off` state (synthetic or a
/// zero-valued numeric child) is skipped by G-3, and features with synthetic
/// children are not leaves for G-1/G-2.
pub fn grow_model(model: &FeatureModel) -> GrownModel {
    let base_feature_count = model.feature_count();
    let mut features: Vec<Feature> = model.features().map(|(_, f)| f.clone()).collect();
    let mut groups: Vec<Group> = model.groups().map(|(_, g)| g.clone()).collect();
    let mut added: Vec<(FeatureId, GrowRule)> = Vec::new();

    // Off is represented by a synthetic "Off" child or a zero-valued numeric
    // child. Detection is by name so that growing an already-grown model is
    // a no-op.
    let has_off_child = |features: &[Feature], f: usize| -> bool {
        features[f].children.iter().any(|c| {
            let child = &features[c.0];
            child.numeric_value() == Some(0.0) || child.name == "Off"
        })
    };

    // Synthetic children join the feature's existing XOR child group when it
    // has exactly one, otherwise they get a fresh XOR group. Growing a fresh
    // group for a multi-XOR owner keeps the original groups untouched.
    let target_group = |features: &mut Vec<Feature>, groups: &mut Vec<Group>, f: usize| -> GroupId {
        let xor_groups: Vec<GroupId> = features[f]
            .groups
            .iter()
            .copied()
            .filter(|g| groups[g.0].kind == GroupKind::Xor)
            .collect();
        if xor_groups.len() == 1 {
            xor_groups[0]
        } else {
            let gid = GroupId(groups.len());
            groups.push(Group {
                id: format!("{}_state", features[f].id),
                owner: FeatureId(f),
                kind: GroupKind::Xor,
                members: Vec::new(),
            });
            features[f].groups.push(gid);
            gid
        }
    };

    let add_child = |features: &mut Vec<Feature>,
                         groups: &mut Vec<Group>,
                         added: &mut Vec<(FeatureId, GrowRule)>,
                         f: usize,
                         name: &str,
                         rule: GrowRule| {
        let gid = target_group(features, groups, f);
        let cid = FeatureId(features.len());
        features.push(Feature {
            id: format!("{}__{}", features[f].id, name.to_lowercase()),
            name: name.to_owned(),
            kind: FeatureKind::Categorical,
            parent: Some(FeatureId(f)),
            relation: Relation::InXorGroup(gid),
            children: Vec::new(),
            groups: Vec::new(),
        });
        features[f].children.push(cid);
        groups[gid.0].members.push(cid);
        added.push((cid, rule));
    };

    let order = model.preorder();

    // G-1: leaves in an OR group get {On, Off}.
    for &f in &order {
        let feat = &features[f.0];
        if feat.children.is_empty() && matches!(feat.relation, Relation::InOrGroup(_)) {
            add_child(&mut features, &mut groups, &mut added, f.0, "On", GrowRule::G1);
            add_child(&mut features, &mut groups, &mut added, f.0, "Off", GrowRule::G1);
        }
    }
    // G-2: other leaves get {On}; this turns them into branches for G-3.
    for &f in &order {
        let feat = &features[f.0];
        if feat.children.is_empty()
            && !matches!(feat.relation, Relation::InOrGroup(_) | Relation::InXorGroup(_))
        {
            add_child(&mut features, &mut groups, &mut added, f.0, "On", GrowRule::G2);
        }
    }
    // G-3: deselectable branches propagate Off to themselves and to their
    // branch descendants that do not already expose an Off state.
    for &f in &order {
        if f == model.root {
            continue;
        }
        let feat = &features[f.0];
        if feat.children.is_empty() || !feat.relation.deselectable() {
            continue;
        }
        // f plus its branch descendants, in pre-order.
        let mut stack = vec![f];
        while let Some(cur) = stack.pop() {
            let is_branch = !features[cur.0].children.is_empty();
            if is_branch && !has_off_child(&features, cur.0) {
                add_child(&mut features, &mut groups, &mut added, cur.0, "Off", GrowRule::G3);
            }
            for &c in features[cur.0].children.iter().rev() {
                if !features[c.0].children.is_empty() {
                    stack.push(c);
                }
            }
        }
    }

    let deps = model.cross_deps.clone();
    let grown = FeatureModel::from_parts(model.root, features, groups, deps);
    GrownModel {
        model: grown,
        base_feature_count,
        added,
    }
}

/// Identifies the genes of a grown model: XOR-group parents with more than
/// one member, singleton groups pruned. Gene order is pre-order over the
/// grown tree; options put Off/0 first, then document order.
pub fn identify_genes(grown: &GrownModel) -> ChromosomeSpec {
    let m = &grown.model;
    let mut genes = Vec::new();
    for f in m.preorder() {
        let feat = m.feature(f);
        for &gid in &feat.groups {
            let group = m.group(gid);
            if group.kind != GroupKind::Xor || group.members.len() < 2 {
                continue;
            }
            let mut off: Option<GeneOption> = None;
            let mut rest: Vec<GeneOption> = Vec::new();
            for &mem in &group.members {
                let mf = m.feature(mem);
                let opt = if grown.is_synthetic(mem) && mf.name == "Off" {
                    GeneOption {
                        feature: mem.0,
                        label: off_label(),
                        kind: OptionKind::Off,
                    }
                } else if grown.is_synthetic(mem) && mf.name == "On" {
                    GeneOption {
                        feature: mem.0,
                        label: "On".to_owned(),
                        kind: OptionKind::On,
                    }
                } else if let Some(v) = mf.numeric_value() {
                    if v == 0.0 {
                        GeneOption {
                            feature: mem.0,
                            label: "0".to_owned(),
                            kind: OptionKind::Off,
                        }
                    } else {
                        GeneOption {
                            feature: mem.0,
                            label: format_value(v),
                            kind: OptionKind::Value(v),
                        }
                    }
                } else {
                    GeneOption {
                        feature: mem.0,
                        label: mf.name.clone(),
                        kind: OptionKind::Member,
                    }
                };
                if opt.is_off() && off.is_none() {
                    off = Some(opt);
                } else {
                    rest.push(opt);
                }
            }
            let mut options = Vec::with_capacity(rest.len() + 1);
            if let Some(o) = off {
                options.push(o);
            }
            options.extend(rest);
            let is_numeric = feat.kind == FeatureKind::NumericParent;
            let deselectable =
                m.is_deselectable(f) || m.is_conditionally_deselectable(f);
            genes.push(GeneSpec {
                gene_id: genes.len(),
                source_feature: f.0,
                source_id: feat.id.clone(),
                options,
                is_numeric,
                deselectable,
            });
        }
    }
    let mut size = BigUint::from(1u32);
    for g in &genes {
        size *= BigUint::from(g.options.len());
    }
    ChromosomeSpec {
        genes,
        search_space_size: size,
    }
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Grows and identifies in one step.
pub fn transpose(model: &FeatureModel) -> (GrownModel, ChromosomeSpec) {
    let grown = grow_model(model);
    let spec = identify_genes(&grown);
    (grown, spec)
}

/// Maps a chromosome assignment back to a configuration over the base model.
///
/// Non-off gene choices and their ancestor chains anchor the configuration;
/// everything else follows forced state: mandatory children of selected
/// parents are selected, pruned singleton group members follow their owner,
/// and features whose gene chose Off stay out along with their subtrees.
pub fn decode_solution(
    spec: &ChromosomeSpec,
    grown: &GrownModel,
    assignment: &[usize],
) -> Result<Configuration, ModelError> {
    if assignment.len() != spec.genes.len() {
        return Err(ModelError::ModelFault(format!(
            "assignment length {} does not match gene count {}",
            assignment.len(),
            spec.genes.len()
        )));
    }
    let m = &grown.model;
    let mut forced_off = vec![false; m.feature_count()];
    let mut anchors: Vec<FeatureId> = Vec::new();
    let mut members: Vec<FeatureId> = Vec::new();

    for (g, &opt_idx) in spec.genes.iter().zip(assignment.iter()) {
        let opt = g
            .options
            .get(opt_idx)
            .ok_or_else(|| ModelError::ModelFault(format!(
                "option index {opt_idx} out of range for gene {}",
                g.source_id
            )))?;
        match opt.kind {
            OptionKind::Off => forced_off[g.source_feature] = true,
            OptionKind::On => anchors.push(FeatureId(g.source_feature)),
            OptionKind::Value(_) | OptionKind::Member => {
                anchors.push(FeatureId(g.source_feature));
                members.push(FeatureId(opt.feature));
            }
        }
    }

    let mut selected = vec![false; grown.base_feature_count];
    // Anchor ancestor chains.
    let mark_up = |mut f: FeatureId, selected: &mut Vec<bool>| {
        loop {
            if f.0 < grown.base_feature_count {
                selected[f.0] = true;
            }
            match m.feature(f).parent {
                Some(p) => f = p,
                None => break,
            }
        }
    };
    selected[grown.model.root.0] = true;
    for &a in &anchors {
        mark_up(a, &mut selected);
    }
    for &mem in &members {
        if mem.0 < grown.base_feature_count {
            selected[mem.0] = true;
        }
    }

    // Forced closure, top-down: mandatory children and pruned singleton
    // members of selected parents come in unless their gene said Off.
    let order = m.preorder();
    let mut changed = true;
    while changed {
        changed = false;
        for &f in &order {
            if f.0 >= grown.base_feature_count || !selected[f.0] {
                continue;
            }
            for &c in &m.feature(f).children {
                if c.0 >= grown.base_feature_count || selected[c.0] || forced_off[c.0] {
                    continue;
                }
                let child = m.feature(c);
                let force = match child.relation {
                    Relation::Mandatory => true,
                    // A member alone in its group follows its owner.
                    Relation::InXorGroup(gid) => m.group(gid).members.len() == 1,
                    _ => false,
                };
                if force {
                    selected[c.0] = true;
                    changed = true;
                }
            }
        }
    }

    Ok(Configuration::from_ids(
        selected
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| FeatureId(i)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_model::validate_model;
    use crate::reference::builders::*;
    use crate::reference::reference_stack_model;

    fn gene<'a>(spec: &'a ChromosomeSpec, id: &str) -> &'a GeneSpec {
        &spec.genes[spec.gene_by_source(id).unwrap()]
    }

    #[test]
    fn or_leaf_gains_on_off_xor_pair() {
        let mut b = ModelBuilder::new("r");
        b.feature("p", "r", RelationSpec::Mandatory);
        b.or_group("p", "g", &["a", "b"]);
        let m = b.build();
        let grown = grow_model(&m);
        let a = grown.model.by_id("a").unwrap();
        let children = &grown.model.feature(a).children;
        assert_eq!(children.len(), 2);
        let names: Vec<&str> = children
            .iter()
            .map(|c| grown.model.feature(*c).name.as_str())
            .collect();
        assert_eq!(names, ["On", "Off"]);
        assert!(grown
            .added
            .iter()
            .filter(|(_, r)| *r == GrowRule::G1)
            .count() >= 4);
    }

    #[test]
    fn mandatory_leaf_gains_on_only() {
        let mut b = ModelBuilder::new("r");
        b.feature("leaf", "r", RelationSpec::Mandatory);
        let m = b.build();
        let grown = grow_model(&m);
        let leaf = grown.model.by_id("leaf").unwrap();
        let children = &grown.model.feature(leaf).children;
        assert_eq!(children.len(), 1);
        assert_eq!(grown.model.feature(children[0]).name, "On");
    }

    #[test]
    fn mandatory_leaf_under_optional_branch_becomes_deselectable_gene() {
        // G-2 turns the leaf into a branch, so G-3 reaches it through the
        // optional ancestor; the leaf ends up a two-option gene and the
        // model's two configurations stay reachable.
        let mut b = ModelBuilder::new("r");
        b.feature("branch", "r", RelationSpec::Optional);
        b.feature("leaf", "branch", RelationSpec::Mandatory);
        let m = b.build();
        let (grown, spec) = transpose(&m);
        let leaf = grown.model.by_id("leaf").unwrap();
        let names: Vec<&str> = grown
            .model
            .feature(leaf)
            .children
            .iter()
            .map(|c| grown.model.feature(*c).name.as_str())
            .collect();
        assert_eq!(names, ["On", "Off"]);
        // branch's own Off is a singleton group, pruned
        assert_eq!(spec.gene_count(), 1);
        assert_eq!(spec.genes[0].source_id, "leaf");
        assert_eq!(spec.genes[0].options.len(), 2);
        assert!(spec.genes[0].options[0].is_off());
    }

    #[test]
    fn grow_is_idempotent() {
        let m = reference_stack_model();
        let grown1 = grow_model(&m);
        let grown2 = grow_model(&grown1.model);
        assert_eq!(
            grown1.model.feature_count(),
            grown2.model.feature_count(),
            "second grow must add nothing"
        );
        assert!(grown2.added.is_empty());
    }

    #[test]
    fn reference_stack_yields_ten_genes() {
        let m = reference_stack_model();
        let (_, spec) = transpose(&m);
        assert_eq!(spec.gene_count(), 10);
        let ids: Vec<&str> = spec.genes.iter().map(|g| g.source_id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "transmission_compression",
                "cache_mode",
                "heap_size",
                "disk_size",
                "max_threads",
                "min_spare_threads",
                "cpu_cap",
                "memory",
                "query_cache",
                "table_cache"
            ]
        );
        // numeric features are always genes
        assert!(spec.genes.iter().filter(|g| g.is_numeric).count() == 8);
    }

    #[test]
    fn mini_cache_transposes_to_single_three_option_gene() {
        let m = mini_cache_model();
        let (_, spec) = transpose(&m);
        assert_eq!(spec.gene_count(), 1);
        let g = &spec.genes[0];
        assert_eq!(g.source_id, "cache_mode");
        let labels: Vec<&str> = g.options.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, ["Off", "zipped", "unzipped"]);
        assert_eq!(spec.search_space_size, 3u32.into());
    }

    #[test]
    fn singleton_xor_group_produces_no_gene() {
        let mut b = ModelBuilder::new("r");
        b.feature("p", "r", RelationSpec::Mandatory);
        b.xor_group("p", "g", &["only"]);
        let m = b.build();
        let (_, spec) = transpose(&m);
        assert_eq!(spec.gene_count(), 0);
    }

    #[test]
    fn decode_mini_cache() {
        let m = mini_cache_model();
        let (grown, spec) = transpose(&m);
        let g = gene(&spec, "cache_mode");
        let zipped = g.option_by_label("zipped").unwrap();
        let c = decode_solution(&spec, &grown, &[zipped]).unwrap();
        let ids: Vec<&str> = c.iter().map(|f| m.feature(f).id.as_str()).collect();
        assert_eq!(ids, ["root", "cache", "cache_mode", "zipped"]);
        assert!(m.is_valid_configuration(&c).unwrap());

        let off = g.off_option().unwrap();
        let c = decode_solution(&spec, &grown, &[off]).unwrap();
        assert_eq!(c.len(), 1, "all deselectable subtrees off");
    }

    #[test]
    fn decode_selects_cpu_value_and_unselects_siblings() {
        let m = reference_stack_model();
        let (grown, spec) = transpose(&m);
        let cpu = spec.gene_by_source("cpu_cap").unwrap();
        let mut assignment: Vec<usize> = Vec::new();
        for g in &spec.genes {
            assignment.push(g.off_option().unwrap_or(0));
        }
        let v150 = spec.genes[cpu].option_by_label("150").unwrap();
        assignment[cpu] = v150;
        let c = decode_solution(&spec, &grown, &assignment).unwrap();
        let cpu_feat = m.by_id("cpu_cap").unwrap();
        assert!(c.contains(cpu_feat));
        let chosen = m.by_id("cpu_cap_2").unwrap(); // 150
        assert!(c.contains(chosen));
        for sibling in ["cpu_cap_0", "cpu_cap_1", "cpu_cap_3"] {
            assert!(!c.contains(m.by_id(sibling).unwrap()));
        }
    }

    #[test]
    fn decode_rejects_out_of_range_index() {
        let m = mini_cache_model();
        let (grown, spec) = transpose(&m);
        assert!(decode_solution(&spec, &grown, &[17]).is_err());
    }

    #[test]
    fn gene_count_never_exceeds_feature_count_and_numerics_are_genes() {
        let m = reference_stack_model();
        let (_, spec) = transpose(&m);
        assert!(spec.gene_count() <= m.feature_count());
        let numeric_sources: Vec<&str> = spec
            .genes
            .iter()
            .filter(|g| g.is_numeric)
            .map(|g| g.source_id.as_str())
            .collect();
        for id in [
            "heap_size", "disk_size", "max_threads", "min_spare_threads", "cpu_cap", "memory",
            "query_cache", "table_cache",
        ] {
            assert!(numeric_sources.contains(&id));
        }
    }

    #[test]
    fn grown_reference_model_is_structurally_reasonable() {
        let m = reference_stack_model();
        let grown = grow_model(&m);
        // growth only adds: synthetic count matches the bookkeeping
        assert_eq!(
            grown.model.feature_count(),
            grown.base_feature_count + grown.added.len()
        );
        // base model portion still validates
        assert!(validate_model(&m).is_empty());
    }
}
