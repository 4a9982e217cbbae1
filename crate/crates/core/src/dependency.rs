//! Gene-level dependency extraction and merging.
//!
//! Three passes translate model constraints into dependencies between genes:
//! vertical analysis walks parent/child chains (VA-1..VA-3), horizontal
//! refactoring recovers constraints implied by non-gene deselectable
//! ancestors (HR-1..HR-4), and cross-branch refactoring rewrites the model's
//! explicit dependencies onto genes (CR-1/CR-2). Each dependent gene's
//! dependencies are then merged into one value tree: a decision table from
//! main-gene conditions to the set of allowed option values.
//!
//! Merging combines leaf-sets with set operations. At-least-one dependencies
//! sharing one OR-group root merge by union and are merged ahead of
//! everything else; all remaining combinations intersect. A combination that
//! empties a leaf-set is fixed to the dependent's Off/0 option.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::feature_model::{
    Comparator, DependencyKind, Endpoint, FeatureId, GroupKind, ModelError, Relation, ValueRange,
};
use crate::transpose::{ChromosomeSpec, GrownModel, OptionKind};

/// Dependency between two genes, optionally qualified by option values.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct GeneDependency {
    pub kind: GeneDepKind,
    pub dependent: usize,
    pub dependent_value: Option<usize>,
    pub main: usize,
    pub main_value: Option<usize>,
    /// For the at-least-one kinds: the OR-group root feature this constraint
    /// belongs to. Union merging applies only within one root.
    pub or_group_root: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum GeneDepKind {
    Require,
    Exclude,
    AtLeastOneRequire,
    AtLeastOneExist,
    RangeToRange(Comparator),
    ToRange(ValueRange),
    RangeTo(ValueRange),
}

impl GeneDepKind {
    fn label(&self) -> &'static str {
        match self {
            GeneDepKind::Require => "require",
            GeneDepKind::Exclude => "exclude",
            GeneDepKind::AtLeastOneRequire => "at-least-one-require",
            GeneDepKind::AtLeastOneExist => "at-least-one-exist",
            GeneDepKind::RangeToRange(_) => "range-to-range",
            GeneDepKind::ToRange(_) => "to-range",
            GeneDepKind::RangeTo(_) => "range-to",
        }
    }
}

/// Directed dependency graph over genes, mirroring a dependency list.
#[derive(Debug, Clone, Default)]
pub struct DependencyChains {
    /// Per gene: the main genes it is constrained by.
    pub mains: Vec<Vec<usize>>,
    /// Per gene: the genes constrained by it.
    pub dependents: Vec<Vec<usize>>,
}

impl DependencyChains {
    pub fn build(gene_count: usize, deps: &[GeneDependency]) -> Self {
        let mut mains = vec![Vec::new(); gene_count];
        let mut dependents = vec![Vec::new(); gene_count];
        for d in deps {
            if d.dependent == d.main {
                // static self-restrictions need no propagation
                continue;
            }
            mains[d.dependent].push(d.main);
            dependents[d.main].push(d.dependent);
        }
        for v in mains.iter_mut().chain(dependents.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        DependencyChains { mains, dependents }
    }

    pub fn mains_of(&self, gene: usize) -> &[usize] {
        &self.mains[gene]
    }

    pub fn dependents_of(&self, gene: usize) -> &[usize] {
        &self.dependents[gene]
    }
}

/// Condition on one main gene inside a value-tree branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cond {
    /// The main gene holds exactly this option.
    Value(usize),
    /// Any option not listed explicitly at this level.
    Otherwise,
}

/// Combined value tree of one dependent gene, stored as a decision table.
///
/// `levels` lists the main genes in ascending id order. For each level the
/// explicit option values partition the branch space together with one
/// wildcard; `rows` holds the full cartesian product of those partitions in
/// lexicographic order, so a context resolves to exactly one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTree {
    pub dependent: usize,
    pub levels: Vec<usize>,
    /// Sorted explicit option values per level.
    pub explicit: Vec<Vec<usize>>,
    pub rows: Vec<(Vec<Cond>, BTreeSet<usize>)>,
    /// Leaf-sets flattened to sorted slices, for constant-time draws.
    flat: Vec<Vec<usize>>,
    /// Leaf-sets as bitmasks when the gene has at most 64 options.
    masks: Option<Vec<u64>>,
    /// Per level: option value -> partition position (out-of-range values
    /// and non-explicit options map to the wildcard), and the row stride.
    lookup: Vec<(Vec<u32>, usize)>,
}

impl ValueTree {
    fn assemble(
        dependent: usize,
        option_count: usize,
        levels: Vec<usize>,
        explicit: Vec<Vec<usize>>,
        rows: Vec<(Vec<Cond>, BTreeSet<usize>)>,
    ) -> Self {
        let flat: Vec<Vec<usize>> = rows
            .iter()
            .map(|(_, leaf)| leaf.iter().copied().collect::<Vec<usize>>())
            .collect();
        let masks = if option_count <= 64 {
            Some(
                rows.iter()
                    .map(|(_, leaf)| leaf.iter().fold(0u64, |m, &o| m | (1 << o)))
                    .collect(),
            )
        } else {
            None
        };
        let mut lookup = Vec::with_capacity(levels.len());
        let mut stride = rows.len();
        for exp in &explicit {
            let width = exp.len() + 1;
            stride /= width;
            let wildcard = exp.len() as u32;
            let table_len = exp.iter().max().map(|m| m + 1).unwrap_or(0);
            let mut table = vec![wildcard; table_len];
            for (i, &v) in exp.iter().enumerate() {
                table[v] = i as u32;
            }
            lookup.push((table, stride));
        }
        ValueTree {
            dependent,
            levels,
            explicit,
            rows,
            flat,
            masks,
            lookup,
        }
    }

    /// One-row tree allowing the full option list.
    pub fn branchless(dependent: usize, options: usize) -> Self {
        Self::assemble(
            dependent,
            options,
            Vec::new(),
            Vec::new(),
            vec![(Vec::new(), (0..options).collect())],
        )
    }

    pub fn is_branchless(&self) -> bool {
        self.levels.is_empty()
    }

    fn row_index(&self, context: &[usize]) -> usize {
        let mut idx = 0;
        for (l, &main) in self.levels.iter().enumerate() {
            let (table, stride) = &self.lookup[l];
            let v = context[main];
            let pos = if v < table.len() {
                table[v] as usize
            } else {
                self.explicit[l].len() // wildcard
            };
            idx += pos * stride;
        }
        idx
    }

    /// The allowed option set under the given per-gene context. The context
    /// must assign a value to every gene in `levels`.
    pub fn allowed_values(&self, context: &[usize]) -> &BTreeSet<usize> {
        &self.rows[self.row_index(context)].1
    }

    /// The allowed options as a sorted slice, for indexed draws.
    pub fn allowed_options(&self, context: &[usize]) -> &[usize] {
        &self.flat[self.row_index(context)]
    }

    /// True when the gene's current value is allowed under the context.
    pub fn permits(&self, context: &[usize]) -> bool {
        let row = self.row_index(context);
        let v = context[self.dependent];
        match &self.masks {
            Some(masks) => masks[row] & (1u64 << v) != 0,
            None => self.flat[row].binary_search(&v).is_ok(),
        }
    }
}

// ---------------------------------------------------------------------------
// Queries over the grown tree with respect to the genes
// ---------------------------------------------------------------------------

/// Index structures tying the grown model to its chromosome.
pub struct GeneMap<'a> {
    pub grown: &'a GrownModel,
    pub spec: &'a ChromosomeSpec,
    by_source: HashMap<usize, Vec<usize>>,
    /// member feature -> (gene, option index)
    option_of: HashMap<usize, (usize, usize)>,
}

/// A closest descendant gene found by walking one path down from a feature.
#[derive(Debug, Clone, Copy)]
struct DescGene {
    gene: usize,
    /// A deselectable feature sits strictly between the start and the gene.
    between_deselectable: bool,
}

impl<'a> GeneMap<'a> {
    pub fn new(grown: &'a GrownModel, spec: &'a ChromosomeSpec) -> Self {
        let mut by_source: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut option_of = HashMap::new();
        for g in &spec.genes {
            by_source.entry(g.source_feature).or_default().push(g.gene_id);
            for (i, o) in g.options.iter().enumerate() {
                option_of.insert(o.feature, (g.gene_id, i));
            }
        }
        GeneMap {
            grown,
            spec,
            by_source,
            option_of,
        }
    }

    pub fn is_gene(&self, f: FeatureId) -> bool {
        self.by_source.contains_key(&f.0)
    }

    pub fn genes_of(&self, f: FeatureId) -> &[usize] {
        self.by_source.get(&f.0).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The (gene, option) pair selecting member feature `f`, when `f` sits in
    /// a multi-member XOR group of the grown tree.
    pub fn option_of(&self, f: FeatureId) -> Option<(usize, usize)> {
        self.option_of.get(&f.0).copied()
    }

    /// Closest descendant genes of `f`, one entry per first gene met on each
    /// downward path.
    fn descendant_genes(&self, f: FeatureId) -> Vec<DescGene> {
        self.descendant_genes_avoiding(f, &[])
    }

    /// As `descendant_genes`, but refusing to walk into `blocked` features.
    fn descendant_genes_avoiding(&self, f: FeatureId, blocked: &[FeatureId]) -> Vec<DescGene> {
        let m = &self.grown.model;
        let mut out = Vec::new();
        let mut stack: Vec<(FeatureId, bool)> = m
            .feature(f)
            .children
            .iter()
            .rev()
            .filter(|c| !blocked.contains(c))
            .map(|&c| (c, false))
            .collect();
        while let Some((cur, between)) = stack.pop() {
            if self.is_gene(cur) {
                for &g in self.genes_of(cur) {
                    out.push(DescGene {
                        gene: g,
                        between_deselectable: between,
                    });
                }
                continue;
            }
            let here_deselectable = m.feature(cur).relation.deselectable();
            for &c in m.feature(cur).children.iter().rev() {
                if !blocked.contains(&c) {
                    stack.push((c, between || here_deselectable));
                }
            }
        }
        out
    }

    /// No gene sits strictly between ancestor `a` and `f`.
    fn no_gene_strictly_between(&self, a: FeatureId, f: FeatureId) -> bool {
        let m = &self.grown.model;
        let mut cur = m.feature(f).parent;
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            if self.is_gene(p) {
                return false;
            }
            cur = m.feature(p).parent;
        }
        true
    }
}

fn base_features(grown: &GrownModel) -> impl Iterator<Item = FeatureId> + '_ {
    grown
        .model
        .preorder()
        .into_iter()
        .filter(move |f| f.0 < grown.base_feature_count)
}

fn dedup(mut deps: Vec<GeneDependency>) -> Vec<GeneDependency> {
    deps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    deps.dedup();
    deps
}

/// The model's explicit at-least-one-exist roots; VA-3 and HR-3 defer to
/// these instead of re-deriving the group constraint.
fn explicit_ale_roots(grown: &GrownModel) -> BTreeSet<usize> {
    grown
        .model
        .cross_deps
        .iter()
        .filter(|d| d.kind == DependencyKind::AtLeastOneExist)
        .filter_map(|d| d.or_group_root.map(|r| r.0))
        .collect()
}

// ---------------------------------------------------------------------------
// Vertical analysis
// ---------------------------------------------------------------------------

/// VA-1..VA-3 over every base feature of the grown model.
pub fn extract_vertical(grown: &GrownModel, spec: &ChromosomeSpec) -> Vec<GeneDependency> {
    let map = GeneMap::new(grown, spec);
    let m = &grown.model;
    let ale_roots = explicit_ale_roots(grown);
    let mut out = Vec::new();

    for f in base_features(grown) {
        let feat = m.feature(f);
        let deselectable = m.is_deselectable(f);
        let cond_deselectable = m.is_conditionally_deselectable(f);

        // VA-1: descendant genes require their deselectable gene ancestor;
        // the requirement flips to bidirectional when the descendant is
        // mandatory over an all-mandatory path.
        if map.is_gene(f) && (deselectable || cond_deselectable) {
            for dg in map.descendant_genes(f) {
                let d_src = FeatureId(spec.genes[dg.gene].source_feature);
                for &fg in map.genes_of(f) {
                    if fg == dg.gene {
                        continue;
                    }
                    out.push(GeneDependency {
                        kind: GeneDepKind::Require,
                        dependent: dg.gene,
                        dependent_value: None,
                        main: fg,
                        main_value: None,
                        or_group_root: None,
                    });
                    if m.feature(d_src).relation == Relation::Mandatory && !dg.between_deselectable
                    {
                        out.push(GeneDependency {
                            kind: GeneDepKind::Require,
                            dependent: fg,
                            dependent_value: None,
                            main: dg.gene,
                            main_value: None,
                            or_group_root: None,
                        });
                    }
                }
            }
        }

        // VA-2: XOR members pin their parent gene to the member's option.
        if matches!(feat.relation, Relation::InXorGroup(_)) {
            if let Some((pg, alpha)) = map.option_of(f) {
                if map.is_gene(f) {
                    for &fg in map.genes_of(f) {
                        out.push(GeneDependency {
                            kind: GeneDepKind::Require,
                            dependent: fg,
                            dependent_value: None,
                            main: pg,
                            main_value: Some(alpha),
                            or_group_root: None,
                        });
                        out.push(GeneDependency {
                            kind: GeneDepKind::Require,
                            dependent: pg,
                            dependent_value: Some(alpha),
                            main: fg,
                            main_value: None,
                            or_group_root: None,
                        });
                    }
                } else {
                    for dg in map.descendant_genes(f) {
                        out.push(GeneDependency {
                            kind: GeneDepKind::Require,
                            dependent: dg.gene,
                            dependent_value: None,
                            main: pg,
                            main_value: Some(alpha),
                            or_group_root: None,
                        });
                        let d_src = FeatureId(spec.genes[dg.gene].source_feature);
                        if m.feature(d_src).relation == Relation::Mandatory
                            && !dg.between_deselectable
                        {
                            out.push(GeneDependency {
                                kind: GeneDepKind::Require,
                                dependent: pg,
                                dependent_value: Some(alpha),
                                main: dg.gene,
                                main_value: None,
                                or_group_root: None,
                            });
                        }
                    }
                }
            }
        }

        // VA-3: OR-group members must leave at least one sibling selected
        // whenever the group can be forced active. The group's activation is
        // controlled by the members' closest deselectable ancestor: absent
        // (always active), itself a gene (released through its require
        // edges), or anchored by a mandatory-chained gene that expresses its
        // state. An unanchored non-gene controller means the group's own
        // members are its only witness, and the constraint must not fire.
        if let Relation::InOrGroup(gid) = feat.relation {
            let group = m.group(gid);
            let owner = group.owner;
            if ale_roots.contains(&owner.0) {
                continue;
            }
            let fire = match m.closest_deselectable_ancestor(f) {
                None => true,
                Some(a) if map.is_gene(a) => true,
                Some(a) => map.descendant_genes(a).iter().any(|dg| {
                    let src = FeatureId(spec.genes[dg.gene].source_feature);
                    m.feature(src).relation == Relation::Mandatory && !dg.between_deselectable
                }),
            };
            if !fire {
                continue;
            }

            let sources: Vec<usize> = if map.is_gene(f) {
                map.genes_of(f).to_vec()
            } else {
                map.descendant_genes(f).iter().map(|d| d.gene).collect()
            };
            let mut targets: Vec<usize> = Vec::new();
            if !map.is_gene(f) {
                targets.extend(map.descendant_genes(f).iter().map(|d| d.gene));
            }
            for &sib in &group.members {
                if sib == f {
                    continue;
                }
                if map.is_gene(sib) {
                    targets.extend(map.genes_of(sib));
                } else {
                    targets.extend(map.descendant_genes(sib).iter().map(|d| d.gene));
                }
            }
            for &s in &sources {
                for &t in &targets {
                    if s == t {
                        continue;
                    }
                    out.push(GeneDependency {
                        kind: GeneDepKind::AtLeastOneExist,
                        dependent: s,
                        dependent_value: None,
                        main: t,
                        main_value: None,
                        or_group_root: Some(owner.0),
                    });
                }
            }
        }
    }
    dedup(out)
}

// ---------------------------------------------------------------------------
// Horizontal refactoring
// ---------------------------------------------------------------------------

/// HR-1..HR-4: constraints running through a non-gene deselectable ancestor.
pub fn extract_horizontal(grown: &GrownModel, spec: &ChromosomeSpec) -> Vec<GeneDependency> {
    let map = GeneMap::new(grown, spec);
    let m = &grown.model;
    let ale_roots = explicit_ale_roots(grown);
    let mut out = Vec::new();

    for f in base_features(grown) {
        let a = match m.closest_deselectable_ancestor(f) {
            Some(a) => a,
            None => continue,
        };
        if map.is_gene(a) || !map.no_gene_strictly_between(a, f) {
            continue;
        }
        let feat = m.feature(f);
        match feat.relation {
            // HR-1 and HR-4: nothing to do.
            Relation::Optional | Relation::InXorGroup(_) => {}
            Relation::Mandatory => {
                // HR-2: sibling-path genes of A can only be selected when
                // the conditionally deselectable gene F is.
                if map.is_gene(f) && m.is_conditionally_deselectable(f) {
                    for dg in map.descendant_genes(a) {
                        if map.genes_of(f).contains(&dg.gene) {
                            continue;
                        }
                        for &fg in map.genes_of(f) {
                            out.push(GeneDependency {
                                kind: GeneDepKind::Require,
                                dependent: dg.gene,
                                dependent_value: None,
                                main: fg,
                                main_value: None,
                                or_group_root: None,
                            });
                        }
                    }
                }
            }
            Relation::InOrGroup(gid) => {
                // HR-3: sibling-path genes of A need at least one member of
                // F's OR group.
                let group = m.group(gid);
                let owner = group.owner;
                if ale_roots.contains(&owner.0) {
                    continue;
                }
                let targets: Vec<usize> = if map.is_gene(f) {
                    map.genes_of(f).to_vec()
                } else {
                    map.descendant_genes(f).iter().map(|d| d.gene).collect()
                };
                let blocked: Vec<FeatureId> = group.members.clone();
                for dg in map.descendant_genes_avoiding(a, &blocked) {
                    for &t in &targets {
                        if dg.gene == t {
                            continue;
                        }
                        out.push(GeneDependency {
                            kind: GeneDepKind::AtLeastOneRequire,
                            dependent: dg.gene,
                            dependent_value: None,
                            main: t,
                            main_value: None,
                            or_group_root: Some(owner.0),
                        });
                    }
                }
            }
        }
    }
    dedup(out)
}

// ---------------------------------------------------------------------------
// Cross-branch refactoring
// ---------------------------------------------------------------------------

/// One endpoint after normalization to gene space.
enum NormalEndpoint {
    /// A gene, optionally narrowed to one option.
    Gene(usize, Option<usize>),
    /// A non-gene branch: stands for its closest descendant genes (CR-1).
    /// `or_root` carries the OR-group member genes for the require-main
    /// rewrite.
    Branch {
        genes: Vec<usize>,
        or_root: Option<(usize, Vec<usize>)>,
    },
    /// Feature is always selected; the dependency degenerates.
    AlwaysOn,
}

fn normalize_endpoint(map: &GeneMap<'_>, e: &Endpoint) -> Result<NormalEndpoint, ModelError> {
    let m = &map.grown.model;
    let mut feature = e.feature;

    // A value qualifier narrows the endpoint to a member child.
    if let Some(v) = e.value {
        if let Some((g, idx)) = map.option_of(v) {
            return Ok(NormalEndpoint::Gene(g, Some(idx)));
        }
        // A qualifier naming a pruned singleton member is the same state as
        // the parent itself; fall through with the bare feature.
        if m.feature(v).relation == Relation::Mandatory {
            return Err(ModelError::ModelFault(format!(
                "dependency qualifier `{}` is mandatory under `{}`",
                m.feature(v).id,
                m.feature(feature).id
            )));
        }
    }

    loop {
        if feature == m.root {
            return Ok(NormalEndpoint::AlwaysOn);
        }
        if map.is_gene(feature) {
            return Ok(NormalEndpoint::Gene(map.genes_of(feature)[0], None));
        }
        let feat = m.feature(feature);
        if feat.children.is_empty() {
            // CR-2: a grown-model leaf is an XOR member; a mandatory leaf in
            // a dependency contradicts the model.
            if feat.relation == Relation::Mandatory {
                return Err(ModelError::ModelFault(format!(
                    "cross dependency on mandatory leaf `{}` contradicts the model",
                    feat.id
                )));
            }
            if let Some((g, idx)) = map.option_of(feature) {
                return Ok(NormalEndpoint::Gene(g, Some(idx)));
            }
            // Pruned singleton member: equivalent to its parent.
            match feat.parent {
                Some(p) => {
                    feature = p;
                    continue;
                }
                None => return Ok(NormalEndpoint::AlwaysOn),
            }
        }
        // CR-1: a non-gene branch stands for its closest descendant genes.
        let genes: Vec<usize> = map
            .descendant_genes(feature)
            .iter()
            .map(|d| d.gene)
            .collect();
        if genes.is_empty() {
            // No variability at or below: the feature follows its mandatory
            // chain. Walk up; reaching the root means always-on.
            match feat.parent {
                Some(p) if !m.is_deselectable(feature) => {
                    feature = p;
                    continue;
                }
                Some(_) => {
                    return Err(ModelError::ModelFault(format!(
                        "deselectable feature `{}` has no gene expressing its state",
                        feat.id
                    )))
                }
                None => return Ok(NormalEndpoint::AlwaysOn),
            }
        }
        let or_root = feat
            .groups
            .iter()
            .map(|&g| m.group(g))
            .find(|g| g.kind == GroupKind::Or)
            .map(|g| {
                let mut member_genes = Vec::new();
                for &mem in &g.members {
                    if map.is_gene(mem) {
                        member_genes.extend(map.genes_of(mem));
                    } else {
                        member_genes.extend(map.descendant_genes(mem).iter().map(|d| d.gene));
                    }
                }
                (feature.0, member_genes)
            });
        return Ok(NormalEndpoint::Branch { genes, or_root });
    }
}

/// CR-1/CR-2: rewrites the model's cross-branch dependencies onto genes.
pub fn refactor_cross_branch(
    grown: &GrownModel,
    spec: &ChromosomeSpec,
) -> Result<Vec<GeneDependency>, ModelError> {
    let map = GeneMap::new(grown, spec);
    let mut out = Vec::new();

    for dep in &grown.model.cross_deps {
        let dependent = normalize_endpoint(&map, &dep.dependent)?;
        let main = normalize_endpoint(&map, &dep.main)?;

        let kind = match &dep.kind {
            DependencyKind::Require => GeneDepKind::Require,
            DependencyKind::Exclude => GeneDepKind::Exclude,
            DependencyKind::AtLeastOneExist => GeneDepKind::AtLeastOneExist,
            DependencyKind::AtLeastOneRequire => GeneDepKind::AtLeastOneRequire,
            DependencyKind::RangeToRange(c) => GeneDepKind::RangeToRange(*c),
            DependencyKind::ToRange(r) => GeneDepKind::ToRange(r.clone()),
            DependencyKind::RangeTo(r) => GeneDepKind::RangeTo(r.clone()),
        };
        let or_root = dep.or_group_root.map(|r| r.0);

        let dependents: Vec<(usize, Option<usize>)> = match &dependent {
            NormalEndpoint::Gene(g, q) => vec![(*g, *q)],
            NormalEndpoint::Branch { genes, .. } => genes.iter().map(|&g| (g, None)).collect(),
            NormalEndpoint::AlwaysOn => {
                return Err(ModelError::ModelFault(
                    "dependency has an always-selected dependent".into(),
                ))
            }
        };

        match &main {
            NormalEndpoint::Gene(g, q) => {
                for &(d, dq) in &dependents {
                    out.push(GeneDependency {
                        kind: kind.clone(),
                        dependent: d,
                        dependent_value: dq,
                        main: *g,
                        main_value: *q,
                        or_group_root: or_root,
                    });
                }
            }
            NormalEndpoint::Branch {
                genes,
                or_root: branch_or,
            } => {
                // Require on an OR-group root becomes at-least-one-require
                // on the member genes.
                if kind == GeneDepKind::Require {
                    if let Some((root_feature, member_genes)) = branch_or {
                        for &(d, dq) in &dependents {
                            for &mg in member_genes {
                                out.push(GeneDependency {
                                    kind: GeneDepKind::AtLeastOneRequire,
                                    dependent: d,
                                    dependent_value: dq,
                                    main: mg,
                                    main_value: None,
                                    or_group_root: Some(*root_feature),
                                });
                            }
                        }
                        continue;
                    }
                }
                for &(d, dq) in &dependents {
                    for &mg in genes {
                        out.push(GeneDependency {
                            kind: kind.clone(),
                            dependent: d,
                            dependent_value: dq,
                            main: mg,
                            main_value: None,
                            or_group_root: or_root,
                        });
                    }
                }
            }
            NormalEndpoint::AlwaysOn => match kind {
                // Requiring something always present is vacuous.
                GeneDepKind::Require | GeneDepKind::AtLeastOneRequire => {}
                _ => {
                    return Err(ModelError::ModelFault(
                        "dependency with an always-selected main contradicts the model".into(),
                    ))
                }
            },
        }
    }
    Ok(dedup(out))
}

/// All three extraction passes combined and deduplicated.
pub fn extract_all(
    grown: &GrownModel,
    spec: &ChromosomeSpec,
) -> Result<Vec<GeneDependency>, ModelError> {
    let mut deps = extract_vertical(grown, spec);
    deps.extend(extract_horizontal(grown, spec));
    deps.extend(refactor_cross_branch(grown, spec)?);
    Ok(dedup(deps))
}

// ---------------------------------------------------------------------------
// Merging into value trees
// ---------------------------------------------------------------------------

/// Sparse decision table used during merging. Rows are the cartesian product
/// of per-level partitions (explicit values plus one wildcard each) in
/// lexicographic order.
#[derive(Debug, Clone)]
struct Table {
    levels: Vec<usize>,
    explicit: Vec<Vec<usize>>,
    rows: Vec<BTreeSet<usize>>,
}

impl Table {
    fn single(main: usize, explicit: Vec<usize>, rows: Vec<BTreeSet<usize>>) -> Self {
        debug_assert_eq!(explicit.len() + 1, rows.len());
        debug_assert!(explicit.windows(2).all(|w| w[0] < w[1]));
        Table {
            levels: vec![main],
            explicit: vec![explicit],
            rows,
        }
    }

    fn constant(leaf: BTreeSet<usize>) -> Self {
        Table {
            levels: Vec::new(),
            explicit: Vec::new(),
            rows: vec![leaf],
        }
    }

    /// Leaf under a condition given as `cond_of(main) -> Some(option)` for an
    /// explicit value or `None` for "anything not explicit".
    fn lookup(&self, cond_of: &dyn Fn(usize) -> Option<usize>) -> &BTreeSet<usize> {
        let mut idx = 0;
        for (l, &main) in self.levels.iter().enumerate() {
            let width = self.explicit[l].len() + 1;
            let pos = match cond_of(main) {
                Some(v) => match self.explicit[l].binary_search(&v) {
                    Ok(p) => p,
                    Err(_) => self.explicit[l].len(),
                },
                None => self.explicit[l].len(),
            };
            idx = idx * width + pos;
        }
        &self.rows[idx]
    }
}

fn set_op(a: &BTreeSet<usize>, b: &BTreeSet<usize>, union: bool) -> BTreeSet<usize> {
    if union {
        a.union(b).copied().collect()
    } else {
        a.intersection(b).copied().collect()
    }
}

/// Joins two tables: shared levels align on the union of their explicit
/// values, disjoint levels graft (cartesian extension), leaves combine with
/// the given set operation. This is step 1 when the mains coincide and
/// step 2 (grafting) when they differ.
fn merge_tables(a: &Table, b: &Table, union: bool) -> Table {
    let mut levels: Vec<usize> = a.levels.iter().chain(b.levels.iter()).copied().collect();
    levels.sort_unstable();
    levels.dedup();

    let mut explicit: Vec<Vec<usize>> = Vec::with_capacity(levels.len());
    for &m in &levels {
        let mut vals: Vec<usize> = Vec::new();
        for t in [a, b] {
            if let Some(l) = t.levels.iter().position(|&x| x == m) {
                vals.extend(t.explicit[l].iter().copied());
            }
        }
        vals.sort_unstable();
        vals.dedup();
        explicit.push(vals);
    }

    let widths: Vec<usize> = explicit.iter().map(|e| e.len() + 1).collect();
    let total: usize = widths.iter().product();
    let mut rows = Vec::with_capacity(total);
    let mut positions = vec![0usize; levels.len()];
    for _ in 0..total {
        let cond_of = |main: usize| -> Option<usize> {
            let l = levels.iter().position(|&x| x == main)?;
            let p = positions[l];
            if p < explicit[l].len() {
                Some(explicit[l][p])
            } else {
                None
            }
        };
        let la = a.lookup(&cond_of);
        let lb = b.lookup(&cond_of);
        rows.push(set_op(la, lb, union));
        for l in (0..positions.len()).rev() {
            positions[l] += 1;
            if positions[l] < widths[l] {
                break;
            }
            positions[l] = 0;
        }
    }
    Table {
        levels,
        explicit,
        rows,
    }
}

/// Builds the single-dependency table for one gene dependency, following the
/// per-kind constraint rows.
fn dep_table(spec: &ChromosomeSpec, dep: &GeneDependency) -> Result<Table, ModelError> {
    let dep_gene = &spec.genes[dep.dependent];
    let main_gene = &spec.genes[dep.main];
    let full: BTreeSet<usize> = (0..dep_gene.options.len()).collect();
    let off_d: Option<usize> = dep_gene.off_option();
    let off_m: Option<usize> = main_gene.off_option();

    let minus = |v: usize| -> BTreeSet<usize> {
        let mut s = full.clone();
        s.remove(&v);
        s
    };
    let only_off = || -> BTreeSet<usize> { off_d.into_iter().collect() };

    let table = match (&dep.kind, dep.dependent_value, dep.main_value) {
        (GeneDepKind::Require, None, None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![only_off(), full.clone()]),
            None => Table::constant(full.clone()),
        },
        (GeneDepKind::Require, Some(a), None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![minus(a), full.clone()]),
            None => Table::constant(full.clone()),
        },
        (GeneDepKind::Require, None, Some(b)) => {
            Table::single(dep.main, vec![b], vec![full.clone(), only_off()])
        }
        (GeneDepKind::Require, Some(a), Some(b)) => {
            Table::single(dep.main, vec![b], vec![full.clone(), minus(a)])
        }
        // Exclude is symmetric; the table constrains the dependent side.
        (GeneDepKind::Exclude, None, None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![full.clone(), only_off()]),
            None => Table::constant(only_off()),
        },
        (GeneDepKind::Exclude, Some(a), None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![full.clone(), minus(a)]),
            None => Table::constant(minus(a)),
        },
        (GeneDepKind::Exclude, Some(a), Some(b)) => {
            Table::single(dep.main, vec![b], vec![minus(a), full.clone()])
        }
        (GeneDepKind::Exclude, None, Some(b)) => {
            Table::single(dep.main, vec![b], vec![only_off(), full.clone()])
        }
        (GeneDepKind::AtLeastOneRequire, None, None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![only_off(), full.clone()]),
            None => Table::constant(full.clone()),
        },
        (GeneDepKind::AtLeastOneRequire, Some(a), None) => match off_m {
            Some(o) => Table::single(dep.main, vec![o], vec![minus(a), full.clone()]),
            None => Table::constant(full.clone()),
        },
        (GeneDepKind::AtLeastOneExist, None, None) => match off_m {
            Some(o) => {
                let leaf = match off_d {
                    Some(od) => minus(od),
                    None => full.clone(),
                };
                Table::single(dep.main, vec![o], vec![leaf, full.clone()])
            }
            None => Table::constant(full.clone()),
        },
        (GeneDepKind::RangeToRange(cmp), None, None) => {
            let mut explicit = Vec::new();
            let mut rows = Vec::new();
            for (bi, bo) in main_gene.options.iter().enumerate() {
                let bv = match bo.kind {
                    OptionKind::Value(v) => v,
                    _ => continue, // Off/0 does not participate in comparisons
                };
                let mut leaf: BTreeSet<usize> = off_d.into_iter().collect();
                for (ai, ao) in dep_gene.options.iter().enumerate() {
                    if let OptionKind::Value(av) = ao.kind {
                        if cmp.eval(av, bv) {
                            leaf.insert(ai);
                        }
                    }
                }
                explicit.push(bi);
                rows.push(leaf);
            }
            rows.push(full.clone());
            Table::single(dep.main, explicit, rows)
        }
        (GeneDepKind::ToRange(range), dq, None) => {
            let out_leaf = match dq {
                Some(a) => minus(a),
                None => only_off(),
            };
            let mut explicit = Vec::new();
            let mut rows = Vec::new();
            for (bi, bo) in main_gene.options.iter().enumerate() {
                let bv = bo.numeric_value().unwrap_or(0.0);
                explicit.push(bi);
                rows.push(if range.contains(bv) {
                    full.clone()
                } else {
                    out_leaf.clone()
                });
            }
            rows.push(full.clone());
            Table::single(dep.main, explicit, rows)
        }
        (GeneDepKind::RangeTo(range), None, mq) => {
            let restricted: BTreeSet<usize> = full
                .iter()
                .copied()
                .filter(|&i| {
                    let v = dep_gene.options[i].numeric_value().unwrap_or(0.0);
                    !(range.contains(v) && v != 0.0)
                })
                .collect();
            match mq {
                Some(b) => Table::single(dep.main, vec![b], vec![full.clone(), restricted]),
                None => match off_m {
                    Some(o) => Table::single(dep.main, vec![o], vec![restricted, full.clone()]),
                    None => Table::constant(full.clone()),
                },
            }
        }
        (k, dq, mq) => {
            return Err(ModelError::ModelFault(format!(
                "no constraint row for {} with qualifiers {:?}/{:?}",
                k.label(),
                dq,
                mq
            )))
        }
    };
    // A dependency that collapsed onto a single gene becomes a static
    // restriction: the values consistent with their own row condition.
    if dep.main == dep.dependent {
        let consistent: BTreeSet<usize> = full
            .iter()
            .copied()
            .filter(|&v| {
                let cond = |main: usize| -> Option<usize> {
                    debug_assert_eq!(main, dep.main);
                    Some(v)
                };
                table.lookup(&cond).contains(&v)
            })
            .collect();
        return Ok(Table::constant(consistent));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum KindClass {
    Alr,
    Ale,
}

/// Merges the dependency list into one value tree per gene.
pub fn merge_dependencies(
    spec: &ChromosomeSpec,
    deps: &[GeneDependency],
) -> Result<Vec<ValueTree>, ModelError> {
    let mut trees = Vec::with_capacity(spec.genes.len());
    for gene in &spec.genes {
        let mine: Vec<&GeneDependency> =
            deps.iter().filter(|d| d.dependent == gene.gene_id).collect();
        if mine.is_empty() {
            trees.push(ValueTree::branchless(gene.gene_id, gene.options.len()));
            continue;
        }

        let mut clusters: BTreeMap<(KindClass, usize), Vec<&GeneDependency>> = BTreeMap::new();
        let mut singles: Vec<&GeneDependency> = Vec::new();
        for d in mine {
            match (&d.kind, d.or_group_root) {
                (GeneDepKind::AtLeastOneRequire, Some(root)) => {
                    clusters.entry((KindClass::Alr, root)).or_default().push(d)
                }
                (GeneDepKind::AtLeastOneExist, Some(root)) => {
                    clusters.entry((KindClass::Ale, root)).or_default().push(d)
                }
                _ => singles.push(d),
            }
        }

        // Union clusters first, then fold everything by intersection.
        let mut partials: Vec<Table> = Vec::new();
        for cluster in clusters.into_values() {
            let mut acc: Option<Table> = None;
            for d in cluster {
                let t = dep_table(spec, d)?;
                acc = Some(match acc {
                    None => t,
                    Some(prev) => merge_tables(&prev, &t, true),
                });
            }
            partials.push(acc.unwrap());
        }
        for d in singles {
            partials.push(dep_table(spec, d)?);
        }
        let mut acc = partials.remove(0);
        for t in partials {
            acc = merge_tables(&acc, &t, false);
        }

        // Fix empty leaf-sets to Off/0.
        let off = gene.off_option();
        for row in acc.rows.iter_mut() {
            if row.is_empty() {
                match off {
                    Some(o) => {
                        row.insert(o);
                    }
                    None => {
                        return Err(ModelError::ModelFault(format!(
                            "gene `{}` has an unsatisfiable condition and no Off/0 option",
                            gene.source_id
                        )))
                    }
                }
            }
        }

        // Expand into the public row representation.
        let widths: Vec<usize> = acc.explicit.iter().map(|e| e.len() + 1).collect();
        let mut rows = Vec::with_capacity(acc.rows.len());
        for (i, leaf) in acc.rows.iter().enumerate() {
            let mut conds = Vec::with_capacity(acc.levels.len());
            let mut rem = i;
            for l in (0..acc.levels.len()).rev() {
                let pos = rem % widths[l];
                rem /= widths[l];
                conds.push(if pos < acc.explicit[l].len() {
                    Cond::Value(acc.explicit[l][pos])
                } else {
                    Cond::Otherwise
                });
            }
            conds.reverse();
            rows.push((conds, leaf.clone()));
        }
        trees.push(ValueTree::assemble(
            gene.gene_id,
            gene.options.len(),
            acc.levels,
            acc.explicit,
            rows,
        ));
    }
    Ok(trees)
}

/// Extracts, merges and indexes in one call.
pub fn analyze(
    grown: &GrownModel,
    spec: &ChromosomeSpec,
) -> Result<(Vec<GeneDependency>, Vec<ValueTree>, DependencyChains), ModelError> {
    let deps = extract_all(grown, spec)?;
    let trees = merge_dependencies(spec, &deps)?;
    let chains = DependencyChains::build(spec.gene_count(), &deps);
    Ok((deps, trees, chains))
}

// ---------------------------------------------------------------------------
// Document form
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DepDoc<'a> {
    kind: &'static str,
    dependent: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    dependent_value: Option<&'a str>,
    main: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    main_value: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparator: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<&'a ValueRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    or_group_root: Option<&'a str>,
}

#[derive(Serialize)]
struct BranchDoc<'a> {
    conditions: Vec<serde_json::Value>,
    allowed: Vec<&'a str>,
}

#[derive(Serialize)]
struct TreeDoc<'a> {
    gene: &'a str,
    mains: Vec<&'a str>,
    branches: Vec<BranchDoc<'a>>,
}

/// Serializes the dependency list and per-gene decision tables,
/// deterministically ordered (gene id, then condition path).
pub fn serialize_dependencies(
    grown: &GrownModel,
    spec: &ChromosomeSpec,
    deps: &[GeneDependency],
    trees: &[ValueTree],
) -> String {
    let gene_label = |g: usize| spec.genes[g].source_id.as_str();
    let opt_label = |g: usize, o: usize| spec.genes[g].options[o].label.as_str();
    let dep_docs: Vec<DepDoc> = deps
        .iter()
        .map(|d| DepDoc {
            kind: d.kind.label(),
            dependent: gene_label(d.dependent),
            dependent_value: d.dependent_value.map(|v| opt_label(d.dependent, v)),
            main: gene_label(d.main),
            main_value: d.main_value.map(|v| opt_label(d.main, v)),
            comparator: match &d.kind {
                GeneDepKind::RangeToRange(c) => Some(c.symbol()),
                _ => None,
            },
            range: match &d.kind {
                GeneDepKind::ToRange(r) | GeneDepKind::RangeTo(r) => Some(r),
                _ => None,
            },
            or_group_root: d
                .or_group_root
                .map(|r| grown.model.feature(FeatureId(r)).id.as_str()),
        })
        .collect();
    let tree_docs: Vec<TreeDoc> = trees
        .iter()
        .map(|t| TreeDoc {
            gene: gene_label(t.dependent),
            mains: t.levels.iter().map(|&m| gene_label(m)).collect(),
            branches: t
                .rows
                .iter()
                .map(|(conds, leaf)| BranchDoc {
                    conditions: conds
                        .iter()
                        .zip(t.levels.iter())
                        .map(|(c, &m)| match c {
                            Cond::Value(v) => serde_json::json!({"value": opt_label(m, *v)}),
                            Cond::Otherwise => serde_json::json!("otherwise"),
                        })
                        .collect(),
                    allowed: leaf.iter().map(|&o| opt_label(t.dependent, o)).collect(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "dependencies": dep_docs,
        "value_trees": tree_docs,
    }))
    .expect("dependency serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::builders::*;
    use crate::reference::reference_stack_model;
    use crate::transpose::transpose;

    struct Fixture {
        grown: GrownModel,
        spec: ChromosomeSpec,
    }

    impl Fixture {
        fn new(m: &crate::feature_model::FeatureModel) -> Self {
            let (grown, spec) = transpose(m);
            Fixture { grown, spec }
        }

        fn gene(&self, id: &str) -> usize {
            self.spec.gene_by_source(id).unwrap()
        }

        fn opt(&self, gene: &str, label: &str) -> usize {
            self.spec.genes[self.gene(gene)]
                .option_by_label(label)
                .unwrap()
        }
    }

    fn has_require(deps: &[GeneDependency], dependent: usize, main: usize) -> bool {
        deps.iter().any(|d| {
            d.kind == GeneDepKind::Require
                && d.dependent == dependent
                && d.main == main
                && d.dependent_value.is_none()
                && d.main_value.is_none()
        })
    }

    #[test]
    fn reference_model_extracts_expected_in_branch_edges() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let vertical = extract_vertical(&fx.grown, &fx.spec);
        let horizontal = extract_horizontal(&fx.grown, &fx.spec);

        let heap = fx.gene("heap_size");
        let disk = fx.gene("disk_size");
        let cache_mode = fx.gene("cache_mode");

        // HR-2: the cache's sibling-path genes require cache_mode
        assert!(has_require(&horizontal, heap, cache_mode));
        assert!(has_require(&horizontal, disk, cache_mode));
        // VA-3: OR siblings under cache_size
        assert!(vertical.iter().any(|d| d.kind == GeneDepKind::AtLeastOneExist
            && d.dependent == disk
            && d.main == heap));
        assert!(vertical.iter().any(|d| d.kind == GeneDepKind::AtLeastOneExist
            && d.dependent == heap
            && d.main == disk));
        // HR-3: cache_mode needs at least one cache_size member
        assert!(horizontal.iter().any(|d| d.kind == GeneDepKind::AtLeastOneRequire
            && d.dependent == cache_mode
            && (d.main == heap || d.main == disk)));
    }

    #[test]
    fn all_mandatory_genes_extract_nothing() {
        let mut b = ModelBuilder::new("r");
        b.numeric("a", "r", RelationSpec::Mandatory, &[1.0, 2.0]);
        b.numeric("c", "r", RelationSpec::Mandatory, &[1.0, 2.0]);
        let m = b.build();
        let fx = Fixture::new(&m);
        assert!(extract_vertical(&fx.grown, &fx.spec).is_empty());
        assert!(extract_horizontal(&fx.grown, &fx.spec).is_empty());
    }

    #[test]
    fn hr2_emits_require_from_sibling_gene() {
        // A optional non-gene branch, F mandatory gene below it, D optional
        // gene on a sibling path: D require F, not the other way around.
        let mut b = ModelBuilder::new("r");
        b.feature("a", "r", RelationSpec::Optional);
        b.feature("f", "a", RelationSpec::Mandatory);
        b.feature("d", "a", RelationSpec::Optional);
        let m = b.build();
        let fx = Fixture::new(&m);
        let horizontal = extract_horizontal(&fx.grown, &fx.spec);
        let f = fx.gene("f");
        let d = fx.gene("d");
        assert!(has_require(&horizontal, d, f));
        assert!(!has_require(&horizontal, f, d));
    }

    #[test]
    fn hr1_and_hr4_do_nothing() {
        let mut b = ModelBuilder::new("r");
        b.feature("a", "r", RelationSpec::Optional);
        b.feature("f_opt", "a", RelationSpec::Optional);
        b.xor_group("a", "g", &["x", "y"]);
        let m = b.build();
        let fx = Fixture::new(&m);
        let horizontal = extract_horizontal(&fx.grown, &fx.spec);
        assert!(horizontal.is_empty());
    }

    #[test]
    fn cross_branch_passes_gene_to_gene_through() {
        let mut b = ModelBuilder::new("r");
        b.numeric("a", "r", RelationSpec::Mandatory, &[1.0, 2.0]);
        b.numeric("c", "r", RelationSpec::Mandatory, &[1.0, 2.0]);
        b.range_to_range("a", "c", Comparator::Le);
        let m = b.build();
        let fx = Fixture::new(&m);
        let deps = refactor_cross_branch(&fx.grown, &fx.spec).unwrap();
        assert_eq!(deps.len(), 1);
        assert_eq!(deps[0].dependent, fx.gene("a"));
        assert_eq!(deps[0].main, fx.gene("c"));
        assert!(matches!(
            deps[0].kind,
            GeneDepKind::RangeToRange(Comparator::Le)
        ));
    }

    #[test]
    fn cr2_rewrites_leaf_endpoint_to_qualifier() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let deps = refactor_cross_branch(&fx.grown, &fx.spec).unwrap();
        let cm = fx.gene("cache_mode");
        let tc = fx.gene("transmission_compression");
        let zipped = fx.opt("cache_mode", "zipped");
        assert!(deps.iter().any(|d| d.kind == GeneDepKind::Exclude
            && d.dependent == cm
            && d.dependent_value == Some(zipped)
            && d.main == tc));
    }

    #[test]
    fn cr1_migrates_branch_dependent_to_descendant_genes() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let deps = refactor_cross_branch(&fx.grown, &fx.spec).unwrap();
        let memory = fx.gene("memory");
        let targets: Vec<usize> = deps
            .iter()
            .filter(|d| matches!(d.kind, GeneDepKind::ToRange(_)) && d.main == memory)
            .map(|d| d.dependent)
            .collect();
        for e in [
            fx.gene("cache_mode"),
            fx.gene("heap_size"),
            fx.gene("disk_size"),
        ] {
            assert!(targets.contains(&e));
        }
    }

    #[test]
    fn cr1_require_on_or_root_becomes_at_least_one_require() {
        let mut b = ModelBuilder::new("r");
        b.feature("x", "r", RelationSpec::Optional);
        b.feature("s", "r", RelationSpec::Optional);
        b.or_group("s", "sg", &["m1", "m2"]);
        b.require("x", "s");
        let m = b.build();
        let fx = Fixture::new(&m);
        let deps = refactor_cross_branch(&fx.grown, &fx.spec).unwrap();
        let x = fx.gene("x");
        let m1 = fx.gene("m1");
        let m2 = fx.gene("m2");
        let alr: Vec<&GeneDependency> = deps
            .iter()
            .filter(|d| d.kind == GeneDepKind::AtLeastOneRequire && d.dependent == x)
            .collect();
        assert_eq!(alr.len(), 2);
        assert!(alr.iter().any(|d| d.main == m1));
        assert!(alr.iter().any(|d| d.main == m2));
        let root = fx.grown.model.by_id("s").unwrap().0;
        assert!(alr.iter().all(|d| d.or_group_root == Some(root)));
    }

    #[test]
    fn dependency_on_always_selected_feature_is_a_model_fault() {
        // Excluding a mandatory always-on leaf contradicts the model.
        let mut b = ModelBuilder::new("r");
        b.feature("x", "r", RelationSpec::Optional);
        b.feature("l", "r", RelationSpec::Mandatory);
        b.exclude("x", "l");
        let m = b.build();
        let fx = Fixture::new(&m);
        assert!(refactor_cross_branch(&fx.grown, &fx.spec).is_err());
    }

    #[test]
    fn require_row_forces_off_when_main_off() {
        // Constraint row: Gi require Gj, Gj = Off -> {Off}
        let mut b = ModelBuilder::new("r");
        b.feature("gi", "r", RelationSpec::Optional);
        b.feature("gj", "r", RelationSpec::Optional);
        b.require("gi", "gj");
        let m = b.build();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        let gi = fx.gene("gi");
        let gj = fx.gene("gj");
        let off_j = fx.spec.genes[gj].off_option().unwrap();
        let on_j = fx.opt("gj", "On");
        let off_i = fx.spec.genes[gi].off_option().unwrap();

        let mut ctx = vec![0usize; 2];
        ctx[gj] = off_j;
        assert_eq!(trees[gi].allowed_values(&ctx), &BTreeSet::from([off_i]));
        ctx[gj] = on_j;
        assert_eq!(trees[gi].allowed_values(&ctx).len(), 2);
    }

    #[test]
    fn zero_dependency_gene_gets_branchless_full_tree() {
        let mut b = ModelBuilder::new("r");
        b.numeric("n", "r", RelationSpec::Mandatory, &[1.0, 2.0, 3.0]);
        let m = b.build();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        let n = fx.gene("n");
        assert!(trees[n].is_branchless());
        assert_eq!(trees[n].allowed_values(&vec![0; 1]).len(), 3);
    }

    #[test]
    fn empty_intersection_is_fixed_to_off() {
        // disk requires cache_mode and at-least-one-exists with heap; under
        // cache_mode=Off and heap=0 the intersection empties and the leaf is
        // fixed to {0}.
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        let disk = fx.gene("disk_size");
        let heap = fx.gene("heap_size");
        let cm = fx.gene("cache_mode");
        let memory = fx.gene("memory");

        let mut ctx = vec![0usize; fx.spec.gene_count()];
        ctx[cm] = fx.spec.genes[cm].off_option().unwrap();
        ctx[heap] = fx.spec.genes[heap].off_option().unwrap();
        ctx[memory] = fx.opt("memory", "1024");
        let allowed = trees[disk].allowed_values(&ctx);
        let off_disk = fx.spec.genes[disk].off_option().unwrap();
        assert_eq!(allowed, &BTreeSet::from([off_disk]));
    }

    #[test]
    fn combined_tree_matches_pairwise_semantics() {
        // cache_mode with transmission compression on: zipped is forbidden,
        // Off and unzipped stay allowed.
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        let cm = fx.gene("cache_mode");
        let tc = fx.gene("transmission_compression");
        let heap = fx.gene("heap_size");
        let disk = fx.gene("disk_size");
        let memory = fx.gene("memory");

        let mut ctx = vec![0usize; fx.spec.gene_count()];
        ctx[tc] = fx.opt("transmission_compression", "On");
        ctx[heap] = fx.opt("heap_size", "4");
        ctx[disk] = fx.spec.genes[disk].off_option().unwrap();
        ctx[memory] = fx.opt("memory", "1024");
        let allowed = trees[cm].allowed_values(&ctx);
        let labels: Vec<&str> = allowed
            .iter()
            .map(|&o| fx.spec.genes[cm].options[o].label.as_str())
            .collect();
        assert_eq!(labels, ["Off", "unzipped"]);

        // with compression off the full set returns
        ctx[tc] = fx.spec.genes[tc].off_option().unwrap();
        assert_eq!(trees[cm].allowed_values(&ctx).len(), 3);
    }

    #[test]
    fn range_to_range_tree_restricts_by_comparator() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        let maxt = fx.gene("max_threads");
        let minspare = fx.gene("min_spare_threads");
        let mut ctx = vec![0usize; fx.spec.gene_count()];
        ctx[minspare] = fx.opt("min_spare_threads", "100");
        let allowed = trees[maxt].allowed_values(&ctx);
        for &o in allowed {
            let v = fx.spec.genes[maxt].options[o].numeric_value().unwrap();
            assert!(v >= 100.0, "allowed {v} violates >= 100");
        }
        // 50..98 excluded, 100..448 allowed: 175 of 200 values
        assert_eq!(allowed.len(), 175);
    }

    #[test]
    fn merge_is_order_insensitive() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let deps = extract_all(&fx.grown, &fx.spec).unwrap();
        let trees_a = merge_dependencies(&fx.spec, &deps).unwrap();
        let mut reversed = deps.clone();
        reversed.reverse();
        let trees_b = merge_dependencies(&fx.spec, &reversed).unwrap();
        let mut ctx = vec![0usize; fx.spec.gene_count()];
        for seed in 0..50usize {
            for (g, c) in ctx.iter_mut().enumerate() {
                *c = (seed * 7 + g * 13) % fx.spec.genes[g].options.len();
            }
            for g in 0..fx.spec.gene_count() {
                assert_eq!(
                    trees_a[g].allowed_values(&ctx),
                    trees_b[g].allowed_values(&ctx)
                );
            }
        }
    }

    #[test]
    fn leaf_sets_stay_within_options_and_nonempty() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let (_, trees, _) = analyze(&fx.grown, &fx.spec).unwrap();
        for t in &trees {
            let n = fx.spec.genes[t.dependent].options.len();
            for (_, leaf) in &t.rows {
                assert!(!leaf.is_empty());
                assert!(leaf.iter().all(|&o| o < n));
            }
        }
    }

    #[test]
    fn chains_mirror_the_dependency_list() {
        let m = reference_stack_model();
        let fx = Fixture::new(&m);
        let (deps, _, chains) = analyze(&fx.grown, &fx.spec).unwrap();
        for d in &deps {
            assert!(chains.mains_of(d.dependent).contains(&d.main));
            assert!(chains.dependents_of(d.main).contains(&d.dependent));
        }
        let edge_count: usize = chains.mains.iter().map(Vec::len).sum();
        let mut uniq: Vec<(usize, usize)> = deps.iter().map(|d| (d.dependent, d.main)).collect();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(edge_count, uniq.len());
    }
}
