//! Feature models with categorical and numeric features.
//!
//! A model is a tree of features. Each non-root feature relates to its parent
//! as `Mandatory`, `Optional`, or through an `XOR`/`OR` group owned by the
//! parent. A feature is *numeric* when it owns a single XOR group whose
//! members are all real-valued leaves; every other feature is categorical.
//! Cross-branch dependencies (`require`, `exclude`, the at-least-one pair and
//! the three numeric forms) constrain features across subtrees.
//!
//! The distinguished deselection state of a numeric feature is the value `0`:
//! a document may list a zero-valued child, but a valid configuration never
//! selects it — "value 0" and "feature deselected" are one concept, and the
//! deselected form is canonical.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a feature inside its model. Stable for the model's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId(pub usize);

/// Index of a group inside its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    Categorical,
    /// Owns one XOR group of real-valued children.
    NumericParent,
    /// Leaf carrying a real value; child of a numeric parent.
    NumericValue(f64),
}

/// How a feature relates to its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Mandatory,
    Optional,
    InXorGroup(GroupId),
    InOrGroup(GroupId),
}

impl Relation {
    /// Deselectable means the feature itself may be absent while its parent
    /// is present: optional features and group members.
    pub fn deselectable(&self) -> bool {
        !matches!(self, Relation::Mandatory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Xor,
    Or,
}

#[derive(Debug, Clone)]
pub struct Group {
    pub id: String,
    pub owner: FeatureId,
    pub kind: GroupKind,
    pub members: Vec<FeatureId>,
}

#[derive(Debug, Clone)]
pub struct Feature {
    pub id: String,
    pub name: String,
    pub kind: FeatureKind,
    pub parent: Option<FeatureId>,
    pub relation: Relation,
    /// Ordered children, document order.
    pub children: Vec<FeatureId>,
    /// Groups owned by this feature.
    pub groups: Vec<GroupId>,
}

impl Feature {
    pub fn numeric_value(&self) -> Option<f64> {
        match self.kind {
            FeatureKind::NumericValue(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Comparator {
    pub fn eval(&self, a: f64, b: f64) -> bool {
        match self {
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
            Comparator::Eq => a == b,
            Comparator::Ne => a != b,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
        }
    }

    fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            "=" | "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            _ => return None,
        })
    }
}

/// Range predicate over the discrete values of a numeric feature:
/// `min <= v <= max` with listed exclusions.
#[derive(Debug, Clone, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct ValueRange {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<f64>,
}

impl ValueRange {
    pub fn contains(&self, v: f64) -> bool {
        if let Some(min) = self.min {
            if v < min {
                return false;
            }
        }
        if let Some(max) = self.max {
            if v > max {
                return false;
            }
        }
        !self.exclusions.contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DependencyKind {
    Require,
    Exclude,
    AtLeastOneExist,
    AtLeastOneRequire,
    /// Two numeric features, compared on their selected values.
    RangeToRange(Comparator),
    /// Categorical dependent constrained by a numeric main.
    ToRange(ValueRange),
    /// Numeric dependent constrained by a categorical main.
    RangeTo(ValueRange),
}

impl DependencyKind {
    pub fn label(&self) -> &'static str {
        match self {
            DependencyKind::Require => "require",
            DependencyKind::Exclude => "exclude",
            DependencyKind::AtLeastOneExist => "at-least-one-exist",
            DependencyKind::AtLeastOneRequire => "at-least-one-require",
            DependencyKind::RangeToRange(_) => "range-to-range",
            DependencyKind::ToRange(_) => "to-range",
            DependencyKind::RangeTo(_) => "range-to",
        }
    }
}

/// One side of a cross-branch dependency: a feature, optionally narrowed to
/// one of its children ("F = value").
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub feature: FeatureId,
    pub value: Option<FeatureId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossDependency {
    pub kind: DependencyKind,
    pub dependent: Endpoint,
    pub main: Endpoint,
    /// For the at-least-one kinds: the feature owning the OR group involved.
    pub or_group_root: Option<FeatureId>,
}

/// A configuration is the set of selected features.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Configuration {
    selected: BTreeSet<FeatureId>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I: IntoIterator<Item = FeatureId>>(ids: I) -> Self {
        Configuration {
            selected: ids.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, id: FeatureId) {
        self.selected.insert(id);
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        self.selected.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.selected.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at `{id}`: {message}")]
    Schema { id: String, message: String },
    #[error("dangling reference to `{id}` in {context}")]
    DanglingReference { id: String, context: String },
    #[error("unknown feature id {0}")]
    UnknownFeature(usize),
    #[error("model fault: {0}")]
    ModelFault(String),
}

/// A structural problem found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub feature: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.feature {
            Some(id) => write!(f, "{}: {}", id, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureModel {
    pub root: FeatureId,
    features: Vec<Feature>,
    groups: Vec<Group>,
    pub cross_deps: Vec<CrossDependency>,
    index: HashMap<String, FeatureId>,
}

impl FeatureModel {
    /// Builds a model from raw parts without validating invariants.
    /// `validate_model` reports whatever is wrong with the result.
    pub fn from_parts(
        root: FeatureId,
        features: Vec<Feature>,
        groups: Vec<Group>,
        cross_deps: Vec<CrossDependency>,
    ) -> Self {
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), FeatureId(i)))
            .collect();
        FeatureModel {
            root,
            features,
            groups,
            cross_deps,
            index,
        }
    }

    pub fn feature(&self, id: FeatureId) -> &Feature {
        &self.features[id.0]
    }

    pub fn group(&self, id: GroupId) -> &Group {
        &self.groups[id.0]
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn features(&self) -> impl Iterator<Item = (FeatureId, &Feature)> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| (FeatureId(i), f))
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &Group)> {
        self.groups
            .iter()
            .enumerate()
            .map(|(i, g)| (GroupId(i), g))
    }

    pub fn by_id(&self, id: &str) -> Option<FeatureId> {
        self.index.get(id).copied()
    }

    /// Features in pre-order from the root, children in document order.
    pub fn preorder(&self) -> Vec<FeatureId> {
        let mut out = Vec::with_capacity(self.features.len());
        let mut stack = vec![self.root];
        while let Some(f) = stack.pop() {
            out.push(f);
            for &c in self.feature(f).children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// True when `f` is optional or a group member.
    pub fn is_deselectable(&self, f: FeatureId) -> bool {
        f != self.root && self.feature(f).relation.deselectable()
    }

    /// Mandatory feature that has a deselectable strict ancestor.
    pub fn is_conditionally_deselectable(&self, f: FeatureId) -> bool {
        if f == self.root || self.feature(f).relation != Relation::Mandatory {
            return false;
        }
        let mut cur = self.feature(f).parent;
        while let Some(p) = cur {
            if self.is_deselectable(p) {
                return true;
            }
            cur = self.feature(p).parent;
        }
        false
    }

    /// Nearest strict ancestor that is deselectable, if any.
    pub fn closest_deselectable_ancestor(&self, f: FeatureId) -> Option<FeatureId> {
        let mut cur = self.feature(f).parent;
        while let Some(p) = cur {
            if self.is_deselectable(p) {
                return Some(p);
            }
            cur = self.feature(p).parent;
        }
        None
    }

    /// Value of the selected numeric child of `f`, or 0 when none is
    /// selected. Used by the numeric dependency forms.
    fn selected_value(&self, f: FeatureId, c: &Configuration) -> f64 {
        for &child in &self.feature(f).children {
            if c.contains(child) {
                if let FeatureKind::NumericValue(v) = self.feature(child).kind {
                    return v;
                }
            }
        }
        0.0
    }

    fn endpoint_holds(&self, e: &Endpoint, c: &Configuration) -> bool {
        if !c.contains(e.feature) {
            return false;
        }
        match e.value {
            Some(v) => c.contains(v),
            None => true,
        }
    }

    fn or_members(&self, root_feature: FeatureId) -> Option<&[FeatureId]> {
        self.feature(root_feature)
            .groups
            .iter()
            .map(|&g| self.group(g))
            .find(|g| g.kind == GroupKind::Or)
            .map(|g| g.members.as_slice())
    }

    /// Checks a configuration against the in-branch relations and the
    /// cross-branch dependencies. Pure and deterministic.
    pub fn is_valid_configuration(&self, c: &Configuration) -> Result<bool, ModelError> {
        for f in c.iter() {
            if f.0 >= self.features.len() {
                return Err(ModelError::UnknownFeature(f.0));
            }
        }
        if !c.contains(self.root) {
            return Ok(false);
        }
        // Parent closure, mandatory children, the zero-value rule.
        for (id, feat) in self.features() {
            if c.contains(id) {
                if let Some(p) = feat.parent {
                    if !c.contains(p) {
                        return Ok(false);
                    }
                }
                if let FeatureKind::NumericValue(v) = feat.kind {
                    if v == 0.0 {
                        return Ok(false);
                    }
                }
            } else if feat.relation == Relation::Mandatory && id != self.root {
                if let Some(p) = feat.parent {
                    if c.contains(p) {
                        return Ok(false);
                    }
                }
            }
        }
        // Group semantics, scoped to selected owners.
        for (_, group) in self.groups() {
            let selected = group.members.iter().filter(|m| c.contains(**m)).count();
            if c.contains(group.owner) {
                match group.kind {
                    GroupKind::Xor => {
                        if selected != 1 {
                            return Ok(false);
                        }
                    }
                    GroupKind::Or => {
                        if selected == 0 {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        // Cross-branch dependencies.
        for dep in &self.cross_deps {
            let ok = match &dep.kind {
                DependencyKind::Require => {
                    !self.endpoint_holds(&dep.dependent, c) || self.endpoint_holds(&dep.main, c)
                }
                DependencyKind::Exclude => {
                    !(self.endpoint_holds(&dep.dependent, c) && self.endpoint_holds(&dep.main, c))
                }
                DependencyKind::AtLeastOneExist => match dep.or_group_root {
                    Some(root) if c.contains(root) => match self.or_members(root) {
                        Some(members) => members.iter().any(|m| c.contains(*m)),
                        None => true,
                    },
                    _ => true,
                },
                DependencyKind::AtLeastOneRequire => {
                    if self.endpoint_holds(&dep.dependent, c) {
                        match dep.or_group_root.and_then(|r| self.or_members(r)) {
                            Some(members) => members.iter().any(|m| c.contains(*m)),
                            None => false,
                        }
                    } else {
                        true
                    }
                }
                DependencyKind::RangeToRange(cmp) => {
                    let vd = self.selected_value(dep.dependent.feature, c);
                    let vm = self.selected_value(dep.main.feature, c);
                    // Deselected sides (value 0) do not participate.
                    if vd == 0.0 || vm == 0.0 {
                        true
                    } else {
                        cmp.eval(vd, vm)
                    }
                }
                DependencyKind::ToRange(range) => {
                    if self.endpoint_holds(&dep.dependent, c) {
                        range.contains(self.selected_value(dep.main.feature, c))
                    } else {
                        true
                    }
                }
                DependencyKind::RangeTo(range) => {
                    let vd = self.selected_value(dep.dependent.feature, c);
                    if range.contains(vd) && vd != 0.0 {
                        self.endpoint_holds(&dep.main, c)
                    } else {
                        true
                    }
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Exhaustively lists the valid configurations, up to `cap`.
    ///
    /// This walks the tree choosing per-relation states (mandatory forced,
    /// optional on/off, exactly one per XOR group, non-empty subsets per OR
    /// group) and keeps the candidates that pass `is_valid_configuration`.
    /// It is the independent ground truth the transposition is tested
    /// against. Returns the configurations plus a truncation flag.
    pub fn enumerate_valid_configurations(&self, cap: usize) -> (Vec<Configuration>, bool) {
        let mut out = Vec::new();
        let mut truncated = false;
        let mut current = Configuration::new();
        current.insert(self.root);
        self.enumerate_rec(&[self.root], 0, &mut current, cap, &mut out, &mut truncated);
        (out, truncated)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_rec(
        &self,
        frontier: &[FeatureId],
        idx: usize,
        current: &mut Configuration,
        cap: usize,
        out: &mut Vec<Configuration>,
        truncated: &mut bool,
    ) {
        if *truncated {
            return;
        }
        if idx == frontier.len() {
            if self.is_valid_configuration(current).unwrap_or(false) {
                if out.len() >= cap {
                    *truncated = true;
                    return;
                }
                out.push(current.clone());
            }
            return;
        }
        let f = frontier[idx];
        // Children of a selected feature: mandatory ones are forced, optional
        // ones branch, group members are chosen per group.
        let feat = self.feature(f);
        let optionals: Vec<FeatureId> = feat
            .children
            .iter()
            .copied()
            .filter(|&c| self.feature(c).relation == Relation::Optional)
            .collect();
        let groups: Vec<GroupId> = feat.groups.clone();
        self.enumerate_choices(
            f, &optionals, &groups, 0, 0, frontier, idx, current, cap, out, truncated,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_choices(
        &self,
        f: FeatureId,
        optionals: &[FeatureId],
        groups: &[GroupId],
        opt_idx: usize,
        group_idx: usize,
        frontier: &[FeatureId],
        idx: usize,
        current: &mut Configuration,
        cap: usize,
        out: &mut Vec<Configuration>,
        truncated: &mut bool,
    ) {
        if *truncated {
            return;
        }
        if opt_idx < optionals.len() {
            let o = optionals[opt_idx];
            // off
            self.enumerate_choices(
                f, optionals, groups, opt_idx + 1, group_idx, frontier, idx, current, cap, out,
                truncated,
            );
            // on
            current.insert(o);
            self.enumerate_choices(
                f, optionals, groups, opt_idx + 1, group_idx, frontier, idx, current, cap, out,
                truncated,
            );
            current.selected.remove(&o);
            return;
        }
        if group_idx < groups.len() {
            let group = self.group(groups[group_idx]);
            match group.kind {
                GroupKind::Xor => {
                    for &m in &group.members {
                        // Zero-valued numeric children are never selectable.
                        if self.feature(m).numeric_value() == Some(0.0) {
                            continue;
                        }
                        current.insert(m);
                        self.enumerate_choices(
                            f, optionals, groups, opt_idx, group_idx + 1, frontier, idx, current,
                            cap, out, truncated,
                        );
                        current.selected.remove(&m);
                    }
                }
                GroupKind::Or => {
                    let members: Vec<FeatureId> = group
                        .members
                        .iter()
                        .copied()
                        .filter(|m| self.feature(*m).numeric_value() != Some(0.0))
                        .collect();
                    let n = members.len().min(20);
                    for mask in 1u32..(1 << n) {
                        let chosen: Vec<FeatureId> = (0..n)
                            .filter(|b| mask & (1 << b) != 0)
                            .map(|b| members[b])
                            .collect();
                        for &m in &chosen {
                            current.insert(m);
                        }
                        self.enumerate_choices(
                            f, optionals, groups, opt_idx, group_idx + 1, frontier, idx, current,
                            cap, out, truncated,
                        );
                        for &m in &chosen {
                            current.selected.remove(&m);
                        }
                    }
                }
            }
            return;
        }
        // All local choices taken: recurse into the selected children.
        let mut next = frontier[..idx + 1].to_vec();
        next.extend(frontier[idx + 1..].iter().copied());
        let selected_children: Vec<FeatureId> = self
            .feature(f)
            .children
            .iter()
            .copied()
            .filter(|c| current.contains(*c) || self.feature(*c).relation == Relation::Mandatory)
            .collect();
        for &c in &selected_children {
            current.insert(c);
        }
        next.extend(selected_children.iter().copied());
        self.enumerate_rec(&next, idx + 1, current, cap, out, truncated);
        for &c in &selected_children {
            if self.feature(c).relation == Relation::Mandatory {
                current.selected.remove(&c);
            }
        }
    }
}

/// Reports every violated structural invariant, one diagnostic each.
pub fn validate_model(m: &FeatureModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let diag = |out: &mut Vec<Diagnostic>, f: Option<&str>, msg: String| {
        out.push(Diagnostic {
            feature: f.map(str::to_owned),
            message: msg,
        });
    };

    if m.root.0 >= m.feature_count() {
        diag(&mut out, None, "root references a missing feature".into());
        return out;
    }
    if m.feature(m.root).parent.is_some() {
        diag(
            &mut out,
            Some(&m.feature(m.root).id),
            "root must not have a parent".into(),
        );
    }

    // Tree shape: every non-root feature has a parent that lists it.
    let mut reachable = vec![false; m.feature_count()];
    for f in m.preorder() {
        if reachable[f.0] {
            diag(
                &mut out,
                Some(&m.feature(f).id),
                "feature is reachable twice; the tree has a cycle or a shared child".into(),
            );
            return out;
        }
        reachable[f.0] = true;
    }
    for (id, feat) in m.features() {
        if !reachable[id.0] {
            diag(
                &mut out,
                Some(&feat.id),
                "feature is not reachable from the root".into(),
            );
        }
        if id != m.root && feat.parent.is_none() {
            diag(
                &mut out,
                Some(&feat.id),
                "non-root feature has no parent".into(),
            );
        }
        if let Some(p) = feat.parent {
            if !m.feature(p).children.contains(&id) {
                diag(
                    &mut out,
                    Some(&feat.id),
                    "parent does not list this feature as a child".into(),
                );
            }
        }
        // Group membership must point at a group of the parent.
        match feat.relation {
            Relation::InXorGroup(g) | Relation::InOrGroup(g) => {
                if g.0 >= m.group_count() {
                    diag(
                        &mut out,
                        Some(&feat.id),
                        "feature references a missing group".into(),
                    );
                } else {
                    let group = m.group(g);
                    if Some(group.owner) != feat.parent {
                        diag(
                            &mut out,
                            Some(&feat.id),
                            "feature's group is not owned by its parent".into(),
                        );
                    }
                    if !group.members.contains(&id) {
                        diag(
                            &mut out,
                            Some(&feat.id),
                            "group does not list this feature as a member".into(),
                        );
                    }
                    let expect = match feat.relation {
                        Relation::InXorGroup(_) => GroupKind::Xor,
                        _ => GroupKind::Or,
                    };
                    if group.kind != expect {
                        diag(
                            &mut out,
                            Some(&feat.id),
                            "feature's relation disagrees with the group kind".into(),
                        );
                    }
                }
            }
            _ => {}
        }
        match feat.kind {
            FeatureKind::NumericValue(v) => {
                if !feat.children.is_empty() {
                    diag(
                        &mut out,
                        Some(&feat.id),
                        "numeric value features must be leaves".into(),
                    );
                }
                if !v.is_finite() {
                    diag(
                        &mut out,
                        Some(&feat.id),
                        "numeric value must be finite".into(),
                    );
                }
                // 0 is the deselection state; it only makes sense where the
                // parent can actually be off.
                if v == 0.0 {
                    if let Some(p) = feat.parent {
                        if !m.is_deselectable(p) && !m.is_conditionally_deselectable(p) {
                            diag(
                                &mut out,
                                Some(&feat.id),
                                "zero value under a feature that can never be deselected".into(),
                            );
                        }
                    }
                }
            }
            FeatureKind::NumericParent => {
                let owned: Vec<&Group> = feat.groups.iter().map(|&g| m.group(g)).collect();
                if owned.len() != 1 {
                    diag(
                        &mut out,
                        Some(&feat.id),
                        format!("numeric feature must own exactly one group, found {}", owned.len()),
                    );
                } else {
                    let g = owned[0];
                    if g.kind != GroupKind::Xor {
                        diag(
                            &mut out,
                            Some(&feat.id),
                            "numeric feature's group must be XOR".into(),
                        );
                    }
                    if g.members.len() < 2 {
                        diag(
                            &mut out,
                            Some(&feat.id),
                            "numeric feature must have at least two values".into(),
                        );
                    }
                    for &mem in &g.members {
                        if !matches!(m.feature(mem).kind, FeatureKind::NumericValue(_)) {
                            diag(
                                &mut out,
                                Some(&m.feature(mem).id),
                                "children of a numeric feature must be numeric values".into(),
                            );
                        }
                    }
                }
            }
            FeatureKind::Categorical => {}
        }
    }

    for (_, group) in m.groups() {
        if group.members.is_empty() {
            diag(
                &mut out,
                Some(&m.feature(group.owner).id),
                format!("group `{}` has no members", group.id),
            );
        }
        if group.owner.0 >= m.feature_count() {
            diag(&mut out, None, format!("group `{}` has a missing owner", group.id));
        } else if !m.feature(group.owner).groups.iter().any(|&g| {
            std::ptr::eq(m.group(g) as *const _, group as *const _)
        }) {
            // owner bookkeeping mismatch is caught through members above
        }
        for &mem in &group.members {
            if mem.0 >= m.feature_count() {
                diag(
                    &mut out,
                    None,
                    format!("group `{}` lists a missing member", group.id),
                );
            }
        }
    }

    for (i, dep) in m.cross_deps.iter().enumerate() {
        let ctx = format!("dependency #{i}");
        for e in [&dep.dependent, &dep.main] {
            if e.feature.0 >= m.feature_count() {
                diag(&mut out, None, format!("{ctx} references a missing feature"));
                continue;
            }
            if let Some(v) = e.value {
                if v.0 >= m.feature_count() {
                    diag(&mut out, None, format!("{ctx} references a missing value feature"));
                } else if m.feature(v).parent != Some(e.feature) {
                    diag(
                        &mut out,
                        Some(&m.feature(e.feature).id),
                        format!("{ctx}: value qualifier is not a child of the endpoint"),
                    );
                }
            }
        }
        match &dep.kind {
            DependencyKind::RangeToRange(_) => {
                for e in [&dep.dependent, &dep.main] {
                    if e.feature.0 < m.feature_count()
                        && m.feature(e.feature).kind != FeatureKind::NumericParent
                    {
                        diag(
                            &mut out,
                            Some(&m.feature(e.feature).id),
                            "range-to-range endpoints must be numeric features".into(),
                        );
                    }
                }
            }
            DependencyKind::ToRange(_) => {
                if dep.main.feature.0 < m.feature_count()
                    && m.feature(dep.main.feature).kind != FeatureKind::NumericParent
                {
                    diag(
                        &mut out,
                        Some(&m.feature(dep.main.feature).id),
                        "to-range main must be a numeric feature".into(),
                    );
                }
            }
            DependencyKind::RangeTo(_) => {
                if dep.dependent.feature.0 < m.feature_count()
                    && m.feature(dep.dependent.feature).kind != FeatureKind::NumericParent
                {
                    diag(
                        &mut out,
                        Some(&m.feature(dep.dependent.feature).id),
                        "range-to dependent must be a numeric feature".into(),
                    );
                }
            }
            DependencyKind::AtLeastOneExist | DependencyKind::AtLeastOneRequire => {
                match dep.or_group_root {
                    Some(root) if root.0 < m.feature_count() => {
                        if m.or_members(root).is_none() {
                            diag(
                                &mut out,
                                Some(&m.feature(root).id),
                                format!("{ctx}: or_group_root does not own an OR group"),
                            );
                        }
                    }
                    _ => diag(
                        &mut out,
                        None,
                        format!("{ctx}: at-least-one dependency needs an or_group_root"),
                    ),
                }
            }
            _ => {}
        }
    }

    out
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawModel {
    root: String,
    features: Vec<RawFeature>,
    #[serde(default)]
    groups: Vec<RawGroup>,
    #[serde(default)]
    dependencies: Vec<RawDependency>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFeature {
    id: String,
    #[serde(default)]
    name: Option<String>,
    kind: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    relation: Option<String>,
    #[serde(default)]
    group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    numeric_value: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawGroup {
    id: String,
    owner: String,
    kind: String,
    members: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEndpoint {
    feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDependency {
    kind: String,
    dependent: RawEndpoint,
    main: RawEndpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<ValueRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    or_group_root: Option<String>,
}

/// Parses a model document. The returned model satisfies every structural
/// invariant; violations surface as `ModelError::Schema` naming the feature.
pub fn parse_model(document: &str) -> Result<FeatureModel, ModelError> {
    let raw: RawModel = serde_json::from_str(document).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut index: HashMap<String, FeatureId> = HashMap::new();
    for (i, f) in raw.features.iter().enumerate() {
        if index.insert(f.id.clone(), FeatureId(i)).is_some() {
            return Err(ModelError::Schema {
                id: f.id.clone(),
                message: "duplicate feature id".into(),
            });
        }
    }
    let mut group_index: HashMap<String, GroupId> = HashMap::new();
    for (i, g) in raw.groups.iter().enumerate() {
        if group_index.insert(g.id.clone(), GroupId(i)).is_some() {
            return Err(ModelError::Schema {
                id: g.id.clone(),
                message: "duplicate group id".into(),
            });
        }
    }
    let lookup = |id: &str, ctx: &str| -> Result<FeatureId, ModelError> {
        index.get(id).copied().ok_or_else(|| ModelError::DanglingReference {
            id: id.to_owned(),
            context: ctx.to_owned(),
        })
    };

    let root = lookup(&raw.root, "root")?;

    let mut features: Vec<Feature> = Vec::with_capacity(raw.features.len());
    for rf in &raw.features {
        let kind = match rf.kind.as_str() {
            "categorical" => FeatureKind::Categorical,
            "numeric" => FeatureKind::NumericParent,
            "value" => {
                let v = rf.numeric_value.ok_or_else(|| ModelError::Schema {
                    id: rf.id.clone(),
                    message: "value feature needs `numeric_value`".into(),
                })?;
                if !v.is_finite() {
                    return Err(ModelError::Schema {
                        id: rf.id.clone(),
                        message: "numeric value must be finite".into(),
                    });
                }
                FeatureKind::NumericValue(v)
            }
            other => {
                return Err(ModelError::Schema {
                    id: rf.id.clone(),
                    message: format!("unknown feature kind `{other}`"),
                })
            }
        };
        let parent = match &rf.parent {
            Some(p) => Some(lookup(p, &format!("parent of `{}`", rf.id))?),
            None => None,
        };
        let relation = match rf.relation.as_deref() {
            None | Some("mandatory") => Relation::Mandatory,
            Some("optional") => Relation::Optional,
            Some("xor") | Some("or") => {
                let gid = rf.group.as_deref().ok_or_else(|| ModelError::Schema {
                    id: rf.id.clone(),
                    message: "group member needs a `group` reference".into(),
                })?;
                let g = group_index
                    .get(gid)
                    .copied()
                    .ok_or_else(|| ModelError::DanglingReference {
                        id: gid.to_owned(),
                        context: format!("group of `{}`", rf.id),
                    })?;
                if rf.relation.as_deref() == Some("xor") {
                    Relation::InXorGroup(g)
                } else {
                    Relation::InOrGroup(g)
                }
            }
            Some(other) => {
                return Err(ModelError::Schema {
                    id: rf.id.clone(),
                    message: format!("unknown relation `{other}`"),
                })
            }
        };
        features.push(Feature {
            id: rf.id.clone(),
            name: rf.name.clone().unwrap_or_else(|| rf.id.clone()),
            kind,
            parent,
            relation,
            children: Vec::new(),
            groups: Vec::new(),
        });
    }
    // Children in document order.
    for i in 0..features.len() {
        if let Some(p) = features[i].parent {
            features[p.0].children.push(FeatureId(i));
        }
    }

    let mut groups: Vec<Group> = Vec::with_capacity(raw.groups.len());
    for rg in &raw.groups {
        let owner = lookup(&rg.owner, &format!("owner of group `{}`", rg.id))?;
        let kind = match rg.kind.as_str() {
            "xor" => GroupKind::Xor,
            "or" => GroupKind::Or,
            other => {
                return Err(ModelError::Schema {
                    id: rg.id.clone(),
                    message: format!("unknown group kind `{other}`"),
                })
            }
        };
        let mut members = Vec::new();
        for mem in &rg.members {
            members.push(lookup(mem, &format!("member of group `{}`", rg.id))?);
        }
        features[owner.0].groups.push(GroupId(groups.len()));
        groups.push(Group {
            id: rg.id.clone(),
            owner,
            kind,
            members,
        });
    }

    let mut cross_deps = Vec::with_capacity(raw.dependencies.len());
    for (i, rd) in raw.dependencies.iter().enumerate() {
        let ctx = format!("dependency #{i}");
        let endpoint = |e: &RawEndpoint| -> Result<Endpoint, ModelError> {
            Ok(Endpoint {
                feature: lookup(&e.feature, &ctx)?,
                value: match &e.value {
                    Some(v) => Some(lookup(v, &ctx)?),
                    None => None,
                },
            })
        };
        let kind = match rd.kind.as_str() {
            "require" => DependencyKind::Require,
            "exclude" => DependencyKind::Exclude,
            "at-least-one-exist" => DependencyKind::AtLeastOneExist,
            "at-least-one-require" => DependencyKind::AtLeastOneRequire,
            "range-to-range" => {
                let sym = rd.comparator.as_deref().ok_or_else(|| ModelError::Schema {
                    id: ctx.clone(),
                    message: "range-to-range needs a comparator".into(),
                })?;
                let cmp = Comparator::from_symbol(sym).ok_or_else(|| ModelError::Schema {
                    id: ctx.clone(),
                    message: format!("unknown comparator `{sym}`"),
                })?;
                DependencyKind::RangeToRange(cmp)
            }
            "to-range" => DependencyKind::ToRange(rd.range.clone().ok_or_else(|| {
                ModelError::Schema {
                    id: ctx.clone(),
                    message: "to-range needs a range".into(),
                }
            })?),
            "range-to" => DependencyKind::RangeTo(rd.range.clone().ok_or_else(|| {
                ModelError::Schema {
                    id: ctx.clone(),
                    message: "range-to needs a range".into(),
                }
            })?),
            other => {
                return Err(ModelError::Schema {
                    id: ctx,
                    message: format!("unknown dependency kind `{other}`"),
                })
            }
        };
        cross_deps.push(CrossDependency {
            kind,
            dependent: endpoint(&rd.dependent)?,
            main: endpoint(&rd.main)?,
            or_group_root: match &rd.or_group_root {
                Some(r) => Some(lookup(r, &ctx)?),
                None => None,
            },
        });
    }

    let model = FeatureModel {
        root,
        features,
        groups,
        cross_deps,
        index,
    };
    let diags = validate_model(&model);
    if let Some(d) = diags.first() {
        return Err(ModelError::Schema {
            id: d.feature.clone().unwrap_or_default(),
            message: d.message.clone(),
        });
    }
    Ok(model)
}

/// Serializes a model back into the document format. Parsing the result
/// reproduces a semantically identical model (key order is not guaranteed).
pub fn serialize_model(m: &FeatureModel) -> String {
    let features = m
        .features()
        .map(|(id, f)| RawFeature {
            id: f.id.clone(),
            name: Some(f.name.clone()),
            kind: match f.kind {
                FeatureKind::Categorical => "categorical".into(),
                FeatureKind::NumericParent => "numeric".into(),
                FeatureKind::NumericValue(_) => "value".into(),
            },
            parent: f.parent.map(|p| m.feature(p).id.clone()),
            relation: if id == m.root {
                None
            } else {
                Some(
                    match f.relation {
                        Relation::Mandatory => "mandatory",
                        Relation::Optional => "optional",
                        Relation::InXorGroup(_) => "xor",
                        Relation::InOrGroup(_) => "or",
                    }
                    .into(),
                )
            },
            group: match f.relation {
                Relation::InXorGroup(g) | Relation::InOrGroup(g) => Some(m.group(g).id.clone()),
                _ => None,
            },
            numeric_value: f.numeric_value(),
        })
        .collect();
    let groups = m
        .groups()
        .map(|(_, g)| RawGroup {
            id: g.id.clone(),
            owner: m.feature(g.owner).id.clone(),
            kind: match g.kind {
                GroupKind::Xor => "xor".into(),
                GroupKind::Or => "or".into(),
            },
            members: g.members.iter().map(|&x| m.feature(x).id.clone()).collect(),
        })
        .collect();
    let dependencies = m
        .cross_deps
        .iter()
        .map(|d| RawDependency {
            kind: d.kind.label().into(),
            dependent: RawEndpoint {
                feature: m.feature(d.dependent.feature).id.clone(),
                value: d.dependent.value.map(|v| m.feature(v).id.clone()),
            },
            main: RawEndpoint {
                feature: m.feature(d.main.feature).id.clone(),
                value: d.main.value.map(|v| m.feature(v).id.clone()),
            },
            comparator: match &d.kind {
                DependencyKind::RangeToRange(c) => Some(c.symbol().into()),
                _ => None,
            },
            range: match &d.kind {
                DependencyKind::ToRange(r) | DependencyKind::RangeTo(r) => Some(r.clone()),
                _ => None,
            },
            or_group_root: d.or_group_root.map(|r| m.feature(r).id.clone()),
        })
        .collect();
    let raw = RawModel {
        root: m.feature(m.root).id.clone(),
        features,
        groups,
        dependencies,
    };
    serde_json::to_string_pretty(&raw).expect("model serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::builders::*;

    #[test]
    fn single_root_parses() {
        let doc = r#"{"root":"r","features":[{"id":"r","kind":"categorical"}]}"#;
        let m = parse_model(doc).unwrap();
        assert_eq!(m.feature_count(), 1);
        assert!(m.cross_deps.is_empty());
    }

    #[test]
    fn dangling_reference_is_an_error() {
        let doc = r#"{
            "root": "r",
            "features": [{"id":"r","kind":"categorical"}],
            "dependencies": [{"kind":"require","dependent":{"feature":"r"},"main":{"feature":"ghost"}}]
        }"#;
        match parse_model(doc) {
            Err(ModelError::DanglingReference { id, .. }) => assert_eq!(id, "ghost"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_model("{ not json") {
            Err(ModelError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn numeric_parent_with_one_child_is_rejected() {
        let mut b = ModelBuilder::new("r");
        let n = b.numeric("n", "r", RelationSpec::Mandatory, &[3.0]);
        let err = parse_model(&b.document()).unwrap_err();
        match err {
            ModelError::Schema { id, .. } => assert_eq!(id, "n"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let _ = n;
    }

    #[test]
    fn validate_reports_numeric_parent_with_categorical_child() {
        let mut b = ModelBuilder::new("r");
        b.numeric("n", "r", RelationSpec::Mandatory, &[1.0, 2.0]);
        let m = b.build();
        // Corrupt: retag a value child as categorical.
        let victim = m.by_id("n_1").unwrap();
        let mut features: Vec<Feature> = m.features().map(|(_, f)| f.clone()).collect();
        features[victim.0].kind = FeatureKind::Categorical;
        let corrupted = FeatureModel::from_parts(
            m.root,
            features,
            m.groups().map(|(_, g)| g.clone()).collect(),
            m.cross_deps.clone(),
        );
        let diags = validate_model(&corrupted);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].feature.as_deref(), Some("n_1"));
    }

    #[test]
    fn validate_reports_empty_group() {
        let mut b = ModelBuilder::new("r");
        b.feature("a", "r", RelationSpec::Mandatory);
        let m = b.build();
        let owner = m.by_id("a").unwrap();
        let mut features: Vec<Feature> = m.features().map(|(_, f)| f.clone()).collect();
        features[owner.0].groups.push(GroupId(0));
        let corrupted = FeatureModel::from_parts(
            m.root,
            features,
            vec![Group {
                id: "g0".into(),
                owner,
                kind: GroupKind::Xor,
                members: vec![],
            }],
            vec![],
        );
        let diags = validate_model(&corrupted);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("no members"));
    }

    #[test]
    fn optional_leaf_enumerates_two_configurations() {
        let mut b = ModelBuilder::new("r");
        b.feature("a", "r", RelationSpec::Optional);
        let m = b.build();
        let (configs, truncated) = m.enumerate_valid_configurations(100);
        assert!(!truncated);
        assert_eq!(configs.len(), 2);
    }

    #[test]
    fn xor_three_members_enumerates_three() {
        let mut b = ModelBuilder::new("r");
        b.feature("p", "r", RelationSpec::Mandatory);
        b.xor_group("p", "g", &["x", "y", "z"]);
        let m = b.build();
        let (configs, _) = m.enumerate_valid_configurations(100);
        assert_eq!(configs.len(), 3);
    }

    #[test]
    fn mini_cache_model_enumerates_three() {
        let m = mini_cache_model();
        let (configs, _) = m.enumerate_valid_configurations(100);
        assert_eq!(configs.len(), 3);
        // {root}, {root,cache,cache_mode,zipped}, {root,cache,cache_mode,unzipped}
        let sizes: Vec<usize> = configs.iter().map(|c| c.len()).collect();
        assert!(sizes.contains(&1));
        assert_eq!(sizes.iter().filter(|&&s| s == 4).count(), 2);
    }

    #[test]
    fn parent_closure_is_enforced() {
        let m = mini_cache_model();
        let root = m.root;
        let cache_mode = m.by_id("cache_mode").unwrap();
        let zipped = m.by_id("zipped").unwrap();
        // cache off but cache_mode selected
        let c = Configuration::from_ids([root, cache_mode, zipped]);
        assert!(!m.is_valid_configuration(&c).unwrap());
    }

    #[test]
    fn root_only_configuration_with_optional_children_is_valid() {
        let mut b = ModelBuilder::new("r");
        b.feature("a", "r", RelationSpec::Optional);
        b.feature("b", "r", RelationSpec::Optional);
        let m = b.build();
        let c = Configuration::from_ids([m.root]);
        assert!(m.is_valid_configuration(&c).unwrap());
    }

    #[test]
    fn range_to_range_rejects_smaller_dependent() {
        // max >= min, violated when max picks a smaller value.
        let mut b = ModelBuilder::new("r");
        b.numeric("max", "r", RelationSpec::Mandatory, &[2.0, 6.0]);
        b.numeric("min", "r", RelationSpec::Mandatory, &[4.0, 5.0]);
        b.range_to_range("max", "min", Comparator::Ge);
        let m = b.build();
        let pick = |max_v: &str, min_v: &str| {
            Configuration::from_ids([
                m.root,
                m.by_id("max").unwrap(),
                m.by_id("min").unwrap(),
                m.by_id(max_v).unwrap(),
                m.by_id(min_v).unwrap(),
            ])
        };
        assert!(!m.is_valid_configuration(&pick("max_0", "min_0")).unwrap()); // 2 >= 4 fails
        assert!(m.is_valid_configuration(&pick("max_1", "min_0")).unwrap()); // 6 >= 4
        assert!(m.is_valid_configuration(&pick("max_1", "min_1")).unwrap()); // 6 >= 5
    }

    #[test]
    fn range_to_range_matches_pairwise_exclude_translation() {
        // Same model twice: once with a range-to-range dependency, once with
        // the equivalent pairwise excludes between value children. Both must
        // accept exactly the same configurations.
        let build = |translated: bool| {
            let mut b = ModelBuilder::new("r");
            b.numeric("a", "r", RelationSpec::Optional, &[0.0, 1.0, 2.0, 3.0]);
            b.numeric("b", "r", RelationSpec::Optional, &[0.0, 1.0, 2.0, 3.0]);
            if !translated {
                b.range_to_range("a", "b", Comparator::Lt);
            } else {
                // a < b: child va excludes every child vb with vb <= va.
                for (va, ai) in [(1.0, "a_1"), (2.0, "a_2"), (3.0, "a_3")] {
                    for (vb, bi) in [(1.0, "b_1"), (2.0, "b_2"), (3.0, "b_3")] {
                        if vb <= va {
                            b.exclude(ai, bi);
                        }
                    }
                }
            }
            b.build()
        };
        let direct = build(false);
        let translated = build(true);
        let (c1, _) = direct.enumerate_valid_configurations(10_000);
        let (c2, _) = translated.enumerate_valid_configurations(10_000);
        assert_eq!(c1, c2);
        // and every enumerated configuration passes the validity check
        for c in &c1 {
            assert!(direct.is_valid_configuration(c).unwrap());
        }
    }

    #[test]
    fn enumeration_has_no_duplicates_and_is_self_consistent() {
        let m = mini_cache_model();
        let (configs, _) = m.enumerate_valid_configurations(1000);
        let set: BTreeSet<&Configuration> = configs.iter().collect();
        assert_eq!(set.len(), configs.len());
        for c in &configs {
            assert!(m.is_valid_configuration(c).unwrap());
        }
    }

    #[test]
    fn round_trip_preserves_semantics() {
        let m = mini_cache_model();
        let doc = serialize_model(&m);
        let m2 = parse_model(&doc).unwrap();
        assert_eq!(m.feature_count(), m2.feature_count());
        let (c1, _) = m.enumerate_valid_configurations(1000);
        let (c2, _) = m2.enumerate_valid_configurations(1000);
        assert_eq!(c1.len(), c2.len());
    }

    #[test]
    fn truncation_flag_fires_at_cap() {
        let mut b = ModelBuilder::new("r");
        for i in 0..6 {
            b.feature(&format!("o{i}"), "r", RelationSpec::Optional);
        }
        let m = b.build();
        let (configs, truncated) = m.enumerate_valid_configurations(10);
        assert!(truncated);
        assert_eq!(configs.len(), 10);
    }
}
