//! Bundled reference models.
//!
//! `reference_stack_model` is a web-serving software stack (cache subsystem,
//! thread pool, CPU/memory caps, database caches) with 1151 features that
//! transposes to a 10-gene chromosome. It exercises every relation kind,
//! numeric features and all three numeric dependency forms, and is used by
//! documentation, the CLI examples and the test suites.

use crate::feature_model::{Comparator, FeatureModel, ValueRange};

pub mod builders {
    //! Programmatic model construction, shared by the reference models and
    //! the test generators.

    use crate::feature_model::{
        Comparator, CrossDependency, DependencyKind, Endpoint, Feature, FeatureId, FeatureKind,
        FeatureModel, Group, GroupId, GroupKind, Relation, ValueRange,
    };
    use std::collections::HashMap;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum RelationSpec {
        Mandatory,
        Optional,
    }

    /// Accumulates features, groups and dependencies by string id and
    /// resolves them into a [`FeatureModel`]. `build` does not validate;
    /// feed the result to `validate_model` or go through `document` +
    /// `parse_model` when rejection behaviour matters.
    pub struct ModelBuilder {
        features: Vec<Feature>,
        groups: Vec<Group>,
        deps: Vec<CrossDependency>,
        index: HashMap<String, FeatureId>,
    }

    impl ModelBuilder {
        pub fn new(root_id: &str) -> Self {
            let mut b = ModelBuilder {
                features: Vec::new(),
                groups: Vec::new(),
                deps: Vec::new(),
                index: HashMap::new(),
            };
            b.push_feature(root_id, FeatureKind::Categorical, None, Relation::Mandatory);
            b
        }

        fn push_feature(
            &mut self,
            id: &str,
            kind: FeatureKind,
            parent: Option<FeatureId>,
            relation: Relation,
        ) -> FeatureId {
            let fid = FeatureId(self.features.len());
            assert!(
                self.index.insert(id.to_owned(), fid).is_none(),
                "duplicate feature id `{id}`"
            );
            self.features.push(Feature {
                id: id.to_owned(),
                name: id.to_owned(),
                kind,
                parent,
                relation,
                children: Vec::new(),
                groups: Vec::new(),
            });
            if let Some(p) = parent {
                self.features[p.0].children.push(fid);
            }
            fid
        }

        pub fn id(&self, id: &str) -> FeatureId {
            self.index[id]
        }

        /// Adds a categorical feature under `parent`.
        pub fn feature(&mut self, id: &str, parent: &str, rel: RelationSpec) -> FeatureId {
            let p = self.id(parent);
            let relation = match rel {
                RelationSpec::Mandatory => Relation::Mandatory,
                RelationSpec::Optional => Relation::Optional,
            };
            self.push_feature(id, FeatureKind::Categorical, Some(p), relation)
        }

        fn group(&mut self, owner: &str, group_id: &str, kind: GroupKind, members: &[&str]) {
            let owner_id = self.id(owner);
            let gid = GroupId(self.groups.len());
            let relation = match kind {
                GroupKind::Xor => Relation::InXorGroup(gid),
                GroupKind::Or => Relation::InOrGroup(gid),
            };
            let member_ids: Vec<FeatureId> = members
                .iter()
                .map(|m| self.push_feature(m, FeatureKind::Categorical, Some(owner_id), relation))
                .collect();
            self.features[owner_id.0].groups.push(gid);
            self.groups.push(Group {
                id: group_id.to_owned(),
                owner: owner_id,
                kind,
                members: member_ids,
            });
        }

        /// Adds an XOR group of fresh categorical leaves under `owner`.
        pub fn xor_group(&mut self, owner: &str, group_id: &str, members: &[&str]) {
            self.group(owner, group_id, GroupKind::Xor, members);
        }

        /// Adds an OR group of fresh categorical leaves under `owner`.
        pub fn or_group(&mut self, owner: &str, group_id: &str, members: &[&str]) {
            self.group(owner, group_id, GroupKind::Or, members);
        }

        /// Adds a numeric feature: a parent owning one XOR group of the
        /// given real values.
        pub fn numeric(
            &mut self,
            id: &str,
            parent: &str,
            rel: RelationSpec,
            values: &[f64],
        ) -> FeatureId {
            let p = self.id(parent);
            let relation = match rel {
                RelationSpec::Mandatory => Relation::Mandatory,
                RelationSpec::Optional => Relation::Optional,
            };
            let fid = self.push_feature(id, FeatureKind::NumericParent, Some(p), relation);
            self.attach_values(fid, id, values);
            fid
        }

        /// Adds a numeric feature as a member of a new or existing group on
        /// `owner`. Creates the group on first use.
        pub fn numeric_in_group(
            &mut self,
            id: &str,
            owner: &str,
            group_id: &str,
            kind: GroupKind,
            values: &[f64],
        ) -> FeatureId {
            let owner_id = self.id(owner);
            let gid = match self
                .groups
                .iter()
                .position(|g| g.id == group_id && g.owner == owner_id)
            {
                Some(i) => GroupId(i),
                None => {
                    let gid = GroupId(self.groups.len());
                    self.features[owner_id.0].groups.push(gid);
                    self.groups.push(Group {
                        id: group_id.to_owned(),
                        owner: owner_id,
                        kind,
                        members: Vec::new(),
                    });
                    gid
                }
            };
            let relation = match kind {
                GroupKind::Xor => Relation::InXorGroup(gid),
                GroupKind::Or => Relation::InOrGroup(gid),
            };
            let fid = self.push_feature(id, FeatureKind::NumericParent, Some(owner_id), relation);
            self.groups[gid.0].members.push(fid);
            self.attach_values(fid, id, values);
            fid
        }

        fn attach_values(&mut self, fid: FeatureId, id: &str, values: &[f64]) {
            let gid = GroupId(self.groups.len());
            self.features[fid.0].groups.push(gid);
            let mut members = Vec::with_capacity(values.len());
            for (i, &v) in values.iter().enumerate() {
                let child = self.push_feature(
                    &format!("{id}_{i}"),
                    FeatureKind::NumericValue(v),
                    Some(fid),
                    Relation::InXorGroup(gid),
                );
                members.push(child);
            }
            self.groups.push(Group {
                id: format!("{id}_values"),
                owner: fid,
                kind: GroupKind::Xor,
                members,
            });
        }

        fn endpoint(&self, spec: (&str, Option<&str>)) -> Endpoint {
            Endpoint {
                feature: self.id(spec.0),
                value: spec.1.map(|v| self.id(v)),
            }
        }

        pub fn dep(
            &mut self,
            kind: DependencyKind,
            dependent: (&str, Option<&str>),
            main: (&str, Option<&str>),
            or_group_root: Option<&str>,
        ) {
            let dep = CrossDependency {
                kind,
                dependent: self.endpoint(dependent),
                main: self.endpoint(main),
                or_group_root: or_group_root.map(|r| self.id(r)),
            };
            self.deps.push(dep);
        }

        pub fn require(&mut self, dependent: &str, main: &str) {
            self.dep(DependencyKind::Require, (dependent, None), (main, None), None);
        }

        pub fn exclude(&mut self, dependent: &str, main: &str) {
            self.dep(DependencyKind::Exclude, (dependent, None), (main, None), None);
        }

        pub fn range_to_range(&mut self, dependent: &str, main: &str, cmp: Comparator) {
            self.dep(
                DependencyKind::RangeToRange(cmp),
                (dependent, None),
                (main, None),
                None,
            );
        }

        pub fn to_range(&mut self, dependent: &str, main: &str, range: ValueRange) {
            self.dep(DependencyKind::ToRange(range), (dependent, None), (main, None), None);
        }

        pub fn range_to(&mut self, dependent: &str, main: &str, range: ValueRange) {
            self.dep(DependencyKind::RangeTo(range), (dependent, None), (main, None), None);
        }

        pub fn build(&self) -> FeatureModel {
            FeatureModel::from_parts(
                FeatureId(0),
                self.features.clone(),
                self.groups.clone(),
                self.deps.clone(),
            )
        }

        /// The model in document form, unvalidated.
        pub fn document(&self) -> String {
            crate::feature_model::serialize_model(&self.build())
        }
    }

    /// Three-configuration toy: an optional cache whose mode is one of two
    /// compression states.
    pub fn mini_cache_model() -> FeatureModel {
        let mut b = ModelBuilder::new("root");
        b.feature("cache", "root", RelationSpec::Optional);
        b.feature("cache_mode", "cache", RelationSpec::Mandatory);
        b.xor_group("cache_mode", "cache_mode_g", &["zipped", "unzipped"]);
        b.build()
    }
}

fn steps(from: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| from + step * i as f64).collect()
}

/// The reconstructed adaptable-stack model: 1151 features, 10 genes after
/// transposition. Numeric ranges are discretized as the deployment knobs
/// they model (thread counts, cache sizes in MB, CPU percentage).
pub fn reference_stack_model() -> FeatureModel {
    use builders::{ModelBuilder, RelationSpec};
    use crate::feature_model::GroupKind;

    let mut b = ModelBuilder::new("server");

    b.feature("transmission_compression", "server", RelationSpec::Optional);

    b.feature("cache", "server", RelationSpec::Optional);
    b.feature("cache_mode", "cache", RelationSpec::Mandatory);
    b.xor_group("cache_mode", "cache_mode_g", &["zipped", "unzipped"]);
    b.feature("cache_size", "cache", RelationSpec::Mandatory);
    // 0, 4, ..., 512 MB and 0, 5, ..., 1000 MB
    b.numeric_in_group("heap_size", "cache_size", "cache_size_g", GroupKind::Or, &steps(0.0, 4.0, 129));
    b.numeric_in_group("disk_size", "cache_size", "cache_size_g", GroupKind::Or, &steps(0.0, 5.0, 201));

    b.feature("thread_pool", "server", RelationSpec::Mandatory);
    b.numeric("max_threads", "thread_pool", RelationSpec::Mandatory, &steps(50.0, 2.0, 200));
    b.numeric("min_spare_threads", "thread_pool", RelationSpec::Mandatory, &steps(10.0, 2.0, 100));

    b.numeric("cpu_cap", "server", RelationSpec::Mandatory, &[50.0, 100.0, 150.0, 200.0]);
    b.numeric("memory", "server", RelationSpec::Mandatory, &steps(256.0, 4.0, 193));

    b.feature("database", "server", RelationSpec::Mandatory);
    b.numeric("query_cache", "database", RelationSpec::Mandatory, &steps(64.0, 4.0, 150));
    b.numeric("table_cache", "database", RelationSpec::Mandatory, &steps(16.0, 4.0, 157));

    // Zipped cache pages cannot ride along with transmission compression.
    b.dep(
        crate::feature_model::DependencyKind::Exclude,
        ("zipped", None),
        ("transmission_compression", None),
        None,
    );
    // The pool may not shrink below its spare-thread floor.
    b.range_to_range("max_threads", "min_spare_threads", Comparator::Ge);
    // Caching at all needs at least 512 MB of memory.
    b.to_range(
        "cache",
        "memory",
        ValueRange {
            min: Some(512.0),
            max: None,
            exclusions: vec![],
        },
    );

    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_model::validate_model;

    #[test]
    fn reference_stack_has_1151_features_and_validates() {
        let m = reference_stack_model();
        assert_eq!(m.feature_count(), 1151);
        assert!(validate_model(&m).is_empty());
    }
}
