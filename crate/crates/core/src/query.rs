//! Join queries, their attribute universes and hypergraphs.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest attribute universe a query may have (attribute sets are bitmasks).
pub const MAX_ATTRIBUTES: usize = 64;

/// A set of attributes of one query, as a bitmask over universe positions.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrSet(pub u64);

impl AttrSet {
    pub const EMPTY: AttrSet = AttrSet(0);

    pub fn full(n: usize) -> Self {
        if n >= 64 {
            AttrSet(u64::MAX)
        } else {
            AttrSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(index: usize) -> Self {
        AttrSet(1 << index)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        indices
            .into_iter()
            .fold(AttrSet::EMPTY, |acc, i| acc.union(AttrSet::singleton(i)))
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1 << index;
    }

    pub fn union(self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 | other.0)
    }

    pub fn intersect(self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 & other.0)
    }

    pub fn minus(self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: AttrSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Debug for AttrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// One relation of a schema. Attributes are positions in the query universe,
/// in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<usize>,
}

impl RelationSchema {
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn attr_set(&self) -> AttrSet {
        AttrSet::from_indices(self.attributes.iter().copied())
    }
}

/// A natural join `R_1 ⋈ ... ⋈ R_m` over named attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinQuery {
    attributes: Vec<String>,
    relations: Vec<RelationSchema>,
}

/// Vertex set plus edge multiset of a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    pub vertices: Vec<String>,
    pub edges: Vec<AttrSet>,
}

pub(crate) fn is_token(text: &str) -> bool {
    !text.is_empty() && text.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl JoinQuery {
    /// Builds a query from `(relation, attributes)` pairs. The attribute
    /// universe is ordered by first appearance.
    pub fn new<S: AsRef<str>>(relations: &[(S, Vec<S>)]) -> Result<Self> {
        let mut builder = Builder::default();
        for (name, attrs) in relations {
            let attrs: Vec<&str> = attrs.iter().map(AsRef::as_ref).collect();
            builder
                .add(name.as_ref(), &attrs)
                .map_err(Error::domain)?;
        }
        Ok(builder.finish())
    }

    pub fn n(&self) -> usize {
        self.attributes.len()
    }

    pub fn m(&self) -> usize {
        self.relations.len()
    }

    /// `|Q| = Σ_R |A_R|`.
    pub fn size(&self) -> usize {
        self.relations.iter().map(RelationSchema::arity).sum()
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn relation(&self, index: usize) -> &RelationSchema {
        &self.relations[index]
    }

    pub fn universe(&self) -> AttrSet {
        AttrSet::full(self.n())
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn relation_attr_names(&self, index: usize) -> Vec<String> {
        self.relations[index]
            .attributes
            .iter()
            .map(|&a| self.attributes[a].clone())
            .collect()
    }

    pub fn attr_names(&self, set: AttrSet) -> Vec<String> {
        set.iter().map(|a| self.attributes[a].clone()).collect()
    }

    /// Resolves attribute names to a set; unknown names are a domain error.
    pub fn attr_set<S: AsRef<str>>(&self, names: &[S]) -> Result<AttrSet> {
        let mut set = AttrSet::EMPTY;
        for name in names {
            let name = name.as_ref();
            let index = self
                .attr_index(name)
                .ok_or_else(|| Error::domain(format!("unknown attribute `{name}`")))?;
            set.insert(index);
        }
        Ok(set)
    }

    /// Attributes not covered by any relation (only possible for induced
    /// subqueries).
    pub fn isolated_attributes(&self) -> AttrSet {
        let covered = self
            .relations
            .iter()
            .fold(AttrSet::EMPTY, |acc, r| acc.union(r.attr_set()));
        self.universe().minus(covered)
    }

    /// `Q[B]`: the relations whose attributes all lie in `B`, over universe `B`.
    pub fn induced_subquery(&self, b: AttrSet) -> Result<JoinQuery> {
        if !b.is_subset(self.universe()) {
            return Err(Error::domain("attribute set is not a subset of the query universe"));
        }
        let kept: Vec<usize> = b.iter().collect();
        let remap: HashMap<usize, usize> =
            kept.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let relations = self
            .relations
            .iter()
            .filter(|r| r.attr_set().is_subset(b))
            .map(|r| RelationSchema {
                name: r.name.clone(),
                attributes: r.attributes.iter().map(|a| remap[a]).collect(),
            })
            .collect();
        Ok(JoinQuery {
            attributes: kept.iter().map(|&a| self.attributes[a].clone()).collect(),
            relations,
        })
    }

    pub fn hypergraph(&self) -> Hypergraph {
        Hypergraph {
            vertices: self.attributes.clone(),
            edges: self.relations.iter().map(RelationSchema::attr_set).collect(),
        }
    }

    /// Edges of the primal graph: attribute pairs sharing a relation.
    pub fn primal_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for u in 0..self.n() {
            for v in u + 1..self.n() {
                if self
                    .relations
                    .iter()
                    .any(|r| r.attr_set().contains(u) && r.attr_set().contains(v))
                {
                    edges.push((u, v));
                }
            }
        }
        edges
    }

    /// Serializes in the `.jq` format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.relations.iter().enumerate() {
            out.push_str("rel ");
            out.push_str(&r.name);
            for a in self.relation_attr_names(i) {
                out.push(' ');
                out.push_str(&a);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Default)]
struct Builder {
    attributes: Vec<String>,
    relations: Vec<RelationSchema>,
}

impl Builder {
    fn add(&mut self, name: &str, attrs: &[&str]) -> std::result::Result<(), String> {
        if !is_token(name) {
            return Err(format!("invalid relation name `{name}`"));
        }
        if self.relations.iter().any(|r| r.name == name) {
            return Err(format!("duplicate relation name `{name}`"));
        }
        if attrs.is_empty() {
            return Err(format!("relation `{name}` has an empty attribute list"));
        }
        let mut indices = Vec::with_capacity(attrs.len());
        for &attr in attrs {
            if !is_token(attr) {
                return Err(format!("invalid attribute name `{attr}`"));
            }
            let index = match self.attributes.iter().position(|a| a == attr) {
                Some(i) => i,
                None => {
                    if self.attributes.len() == MAX_ATTRIBUTES {
                        return Err(format!("more than {MAX_ATTRIBUTES} attributes"));
                    }
                    self.attributes.push(attr.to_string());
                    self.attributes.len() - 1
                }
            };
            if indices.contains(&index) {
                return Err(format!("duplicate attribute `{attr}` in relation `{name}`"));
            }
            indices.push(index);
        }
        self.relations.push(RelationSchema {
            name: name.to_string(),
            attributes: indices,
        });
        Ok(())
    }

    fn finish(self) -> JoinQuery {
        JoinQuery {
            attributes: self.attributes,
            relations: self.relations,
        }
    }
}

/// Parses the `.jq` format: `rel <name> <attr> ...` per line, `#` comments.
pub fn parse_query(text: &str) -> Result<JoinQuery> {
    parse_query_named("<query>", text)
}

pub fn parse_query_named(source_name: &str, text: &str) -> Result<JoinQuery> {
    let mut builder = Builder::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        let mut words = line.split_whitespace();
        let Some(keyword) = words.next() else {
            continue;
        };
        if keyword != "rel" {
            return Err(Error::parse(
                source_name,
                lineno + 1,
                format!("expected `rel`, found `{keyword}`"),
            ));
        }
        let Some(name) = words.next() else {
            return Err(Error::parse(source_name, lineno + 1, "missing relation name"));
        };
        let attrs: Vec<&str> = words.collect();
        builder
            .add(name, &attrs)
            .map_err(|msg| Error::parse(source_name, lineno + 1, msg))?;
    }
    if builder.relations.is_empty() {
        return Err(Error::parse(source_name, 1, "query has no relations"));
    }
    Ok(builder.finish())
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}
