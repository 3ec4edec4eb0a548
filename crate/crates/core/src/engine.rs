//! Materialized relations, hash join, projection and plan evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::plan::Plan;
use crate::query::{strip_comment, JoinQuery};

/// Default cap on materialized tuples per operator.
pub const DEFAULT_TUPLE_BUDGET: u128 = 10_000_000;
/// Default cap on candidate tuples scanned by [`oracle_answer`].
pub const DEFAULT_ORACLE_BUDGET: u128 = 100_000_000;

pub type Tuple = Vec<u64>;

/// A set of tuples over an ordered attribute list.
#[derive(Clone, Debug, Default)]
pub struct Relation {
    attributes: Vec<String>,
    tuples: HashSet<Tuple>,
}

impl Relation {
    pub fn new(attributes: Vec<String>) -> Self {
        Relation {
            attributes,
            tuples: HashSet::new(),
        }
    }

    /// Builds a relation, silently dropping duplicates. Panics on arity
    /// mismatch.
    pub fn from_tuples(attributes: Vec<String>, tuples: impl IntoIterator<Item = Tuple>) -> Self {
        let mut rel = Relation::new(attributes);
        for t in tuples {
            rel.insert(t);
        }
        rel
    }

    /// The 0-ary relation holding the empty tuple.
    pub fn unit() -> Self {
        Relation::from_tuples(Vec::new(), [Vec::new()])
    }

    /// Inserts a tuple; returns false if it was already present.
    pub fn insert(&mut self, tuple: Tuple) -> bool {
        assert_eq!(tuple.len(), self.arity(), "tuple arity mismatch");
        self.tuples.insert(tuple)
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// `||R|| = |R| · arity`.
    pub fn size(&self) -> usize {
        self.len() * self.arity()
    }

    pub fn contains(&self, tuple: &[u64]) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    /// Tuples in lexicographic order.
    pub fn sorted_tuples(&self) -> Vec<&Tuple> {
        let mut v: Vec<&Tuple> = self.tuples.iter().collect();
        v.sort();
        v
    }

    fn column(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attr)
    }

    /// The same relation with columns permuted into `order`.
    pub fn reordered(&self, order: &[String]) -> Result<Relation> {
        let mut attrs_sorted: Vec<&String> = order.iter().collect();
        attrs_sorted.sort();
        let mut mine: Vec<&String> = self.attributes.iter().collect();
        mine.sort();
        if attrs_sorted != mine {
            return Err(Error::domain("attribute sets differ; cannot align relations"));
        }
        let cols: Vec<usize> = order.iter().map(|a| self.column(a).unwrap()).collect();
        Ok(Relation::from_tuples(
            order.to_vec(),
            self.tuples
                .iter()
                .map(|t| cols.iter().map(|&c| t[c]).collect()),
        ))
    }

    /// Set equality up to column order.
    pub fn same_set(&self, other: &Relation) -> bool {
        match other.reordered(&self.attributes) {
            Ok(aligned) => aligned.tuples == self.tuples,
            Err(_) => false,
        }
    }

    /// Distinct values occurring in the column of `attr`.
    pub fn column_values(&self, attr: &str) -> BTreeSet<u64> {
        match self.column(attr) {
            Some(c) => self.tuples.iter().map(|t| t[c]).collect(),
            None => BTreeSet::new(),
        }
    }
}

impl PartialEq for Relation {
    fn eq(&self, other: &Self) -> bool {
        self.attributes == other.attributes && self.tuples == other.tuples
    }
}

/// A database: relation name to relation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Instance {
    pub relations: BTreeMap<String, Relation>,
    /// Duplicate tuples dropped while loading.
    pub duplicates_dropped: usize,
}

impl Instance {
    pub fn new() -> Self {
        Instance::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, relation: Relation) {
        self.relations.insert(name.into(), relation);
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    /// `|D| = Σ_R |R(D)|`.
    pub fn size(&self) -> usize {
        self.relations.values().map(Relation::len).sum()
    }

    /// Checks that every schema relation is present with the schema's
    /// attribute list.
    pub fn check_schema(&self, query: &JoinQuery) -> Result<()> {
        for (i, r) in query.relations().iter().enumerate() {
            let rel = self
                .get(&r.name)
                .ok_or_else(|| Error::domain(format!("instance lacks relation `{}`", r.name)))?;
            if rel.attributes() != query.relation_attr_names(i).as_slice() {
                return Err(Error::domain(format!(
                    "relation `{}` has attributes {:?}, schema says {:?}",
                    r.name,
                    rel.attributes(),
                    query.relation_attr_names(i)
                )));
            }
        }
        Ok(())
    }

    /// Values of `attr` across all relations.
    pub fn active_domain(&self, attr: &str) -> BTreeSet<u64> {
        self.relations
            .values()
            .flat_map(|r| r.column_values(attr))
            .collect()
    }

    /// Serializes in the `.jdb` format, relations in schema order and tuples
    /// sorted.
    pub fn to_text(&self, query: &JoinQuery) -> String {
        let mut out = String::new();
        for r in query.relations() {
            out.push('@');
            out.push_str(&r.name);
            out.push('\n');
            if let Some(rel) = self.get(&r.name) {
                for t in rel.sorted_tuples() {
                    let line: Vec<String> = t.iter().map(u64::to_string).collect();
                    out.push_str(&line.join(" "));
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Parses the `.jdb` format against a schema. Relations without a section
/// are empty.
pub fn parse_database(source_name: &str, text: &str, query: &JoinQuery) -> Result<Instance> {
    let mut instance = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        instance.insert(r.name.clone(), Relation::new(query.relation_attr_names(i)));
    }
    let mut seen = HashSet::new();
    let mut current: Option<(String, usize)> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, lineno + 1, msg);
        if let Some(name) = line.strip_prefix('@') {
            let name = name.trim();
            let index = query
                .relation_index(name)
                .ok_or_else(|| err(format!("relation `{name}` is not in the schema")))?;
            if !seen.insert(name.to_string()) {
                return Err(err(format!("duplicate section for `{name}`")));
            }
            current = Some((name.to_string(), query.relation(index).arity()));
            continue;
        }
        let Some((name, arity)) = &current else {
            return Err(err("tuple outside of a `@relation` section".into()));
        };
        let values = line
            .split_whitespace()
            .map(|w| w.parse::<u64>())
            .collect::<std::result::Result<Vec<u64>, _>>()
            .map_err(|e| err(format!("bad value: {e}")))?;
        if values.len() != *arity {
            return Err(err(format!(
                "relation `{name}` has arity {arity}, tuple has {} values",
                values.len()
            )));
        }
        let rel = instance.relations.get_mut(name).unwrap();
        if !rel.insert(values) {
            instance.duplicates_dropped += 1;
        }
    }
    Ok(instance)
}

fn over_budget(what: &str, count: u128, budget: u128) -> Result<()> {
    if count > budget {
        Err(Error::capacity(what, count, budget))
    } else {
        Ok(())
    }
}

/// Natural join. Output columns are `r`'s followed by `s`'s new ones; the
/// smaller input is hashed on the shared attributes.
pub fn join(r: &Relation, s: &Relation, budget: u128) -> Result<Relation> {
    let shared: Vec<(usize, usize)> = r
        .attributes
        .iter()
        .enumerate()
        .filter_map(|(i, a)| s.column(a).map(|j| (i, j)))
        .collect();
    let s_extra: Vec<usize> = (0..s.arity())
        .filter(|j| !shared.iter().any(|&(_, sj)| sj == *j))
        .collect();
    let mut attributes = r.attributes.clone();
    attributes.extend(s_extra.iter().map(|&j| s.attributes[j].clone()));
    let mut out = Relation::new(attributes);

    let combine = |rt: &Tuple, st: &Tuple| -> Tuple {
        let mut t = Vec::with_capacity(rt.len() + s_extra.len());
        t.extend_from_slice(rt);
        t.extend(s_extra.iter().map(|&j| st[j]));
        t
    };

    let r_key = |t: &Tuple| -> Vec<u64> { shared.iter().map(|&(i, _)| t[i]).collect() };
    let s_key = |t: &Tuple| -> Vec<u64> { shared.iter().map(|&(_, j)| t[j]).collect() };

    let mut count: u128 = 0;
    if r.len() <= s.len() {
        let mut table: HashMap<Vec<u64>, Vec<&Tuple>> = HashMap::with_capacity(r.len());
        for t in &r.tuples {
            table.entry(r_key(t)).or_default().push(t);
        }
        for st in &s.tuples {
            if let Some(matches) = table.get(&s_key(st)) {
                count += matches.len() as u128;
                over_budget("join output", count, budget)?;
                for rt in matches {
                    out.tuples.insert(combine(rt, st));
                }
            }
        }
    } else {
        let mut table: HashMap<Vec<u64>, Vec<&Tuple>> = HashMap::with_capacity(s.len());
        for t in &s.tuples {
            table.entry(s_key(t)).or_default().push(t);
        }
        for rt in &r.tuples {
            if let Some(matches) = table.get(&r_key(rt)) {
                count += matches.len() as u128;
                over_budget("join output", count, budget)?;
                for st in matches {
                    out.tuples.insert(combine(rt, st));
                }
            }
        }
    }
    Ok(out)
}

/// Duplicate-eliminating projection onto `keep`; column order follows `r`.
pub fn project<S: AsRef<str>>(r: &Relation, keep: &[S]) -> Result<Relation> {
    if let Some(missing) = keep.iter().find(|a| r.column(a.as_ref()).is_none()) {
        return Err(Error::domain(format!(
            "cannot project onto `{}`: not an attribute of the relation",
            missing.as_ref()
        )));
    }
    let cols: Vec<usize> = (0..r.arity())
        .filter(|&i| keep.iter().any(|k| k.as_ref() == r.attributes[i]))
        .collect();
    Ok(Relation::from_tuples(
        cols.iter().map(|&i| r.attributes[i].clone()).collect(),
        r.tuples.iter().map(|t| cols.iter().map(|&i| t[i]).collect()),
    ))
}

/// One evaluated subplan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    /// Post-order position, matching [`Plan::subplans`].
    pub node: usize,
    pub cardinality: usize,
    pub arity: usize,
}

impl TraceEntry {
    /// `||ψ(D)||`.
    pub fn size(&self) -> usize {
        self.cardinality * self.arity
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalTrace {
    pub entries: Vec<TraceEntry>,
}

impl EvalTrace {
    pub fn peak_cardinality(&self) -> usize {
        self.entries.iter().map(|e| e.cardinality).max().unwrap_or(0)
    }
}

/// Evaluation settings.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub budget: u128,
    /// Domain `{0, …, N-1}` for dummy relations; when `None` a dummy holds
    /// the active domain of its attribute.
    pub dummy_domain: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            budget: DEFAULT_TUPLE_BUDGET,
            dummy_domain: None,
        }
    }
}

/// Evaluates a plan bottom-up, recording every subplan's cardinality.
pub fn evaluate(plan: &Plan, db: &Instance) -> Result<(Relation, EvalTrace)> {
    evaluate_with(plan, db, &EvalOptions::default())
}

pub fn evaluate_with(plan: &Plan, db: &Instance, options: &EvalOptions) -> Result<(Relation, EvalTrace)> {
    let mut trace = EvalTrace::default();
    let rel = eval_node(plan, db, options, &mut trace)?;
    Ok((rel, trace))
}

fn eval_node(plan: &Plan, db: &Instance, options: &EvalOptions, trace: &mut EvalTrace) -> Result<Relation> {
    let rel = match plan {
        Plan::Leaf(name) => db
            .get(name)
            .cloned()
            .ok_or_else(|| Error::domain(format!("instance lacks relation `{name}`")))?,
        Plan::Unit => Relation::unit(),
        Plan::Dummy(attr) => {
            let values: Vec<u64> = match options.dummy_domain {
                Some(n) => {
                    over_budget("dummy relation", n as u128, options.budget)?;
                    (0..n).collect()
                }
                None => db.active_domain(attr).into_iter().collect(),
            };
            Relation::from_tuples(vec![attr.clone()], values.into_iter().map(|v| vec![v]))
        }
        Plan::Join(l, r) => {
            let left = eval_node(l, db, options, trace)?;
            let right = eval_node(r, db, options, trace)?;
            join(&left, &right, options.budget)?
        }
        Plan::Project(keep, child) => {
            let inner = eval_node(child, db, options, trace)?;
            project(&inner, keep)?
        }
    };
    trace.entries.push(TraceEntry {
        node: trace.entries.len(),
        cardinality: rel.len(),
        arity: rel.arity(),
    });
    Ok(rel)
}

/// Reference semantics of `Q(D)`: every assignment over the per-attribute
/// active domains whose projections lie in all relations. Independent of the
/// join operator. Columns follow the query's attribute order.
pub fn oracle_answer(query: &JoinQuery, db: &Instance) -> Result<Relation> {
    oracle_answer_with_budget(query, db, DEFAULT_ORACLE_BUDGET)
}

pub fn oracle_answer_with_budget(query: &JoinQuery, db: &Instance, budget: u128) -> Result<Relation> {
    db.check_schema(query)?;
    let n = query.n();
    let domains: Vec<Vec<u64>> = query
        .attributes()
        .iter()
        .map(|a| {
            let mut values = BTreeSet::new();
            for (i, r) in query.relations().iter().enumerate() {
                if query.relation_attr_names(i).contains(a) {
                    values.extend(db.get(&r.name).unwrap().column_values(a));
                }
            }
            values.into_iter().collect()
        })
        .collect();
    let candidates = domains
        .iter()
        .try_fold(1u128, |acc, d| acc.checked_mul(d.len() as u128))
        .unwrap_or(u128::MAX);
    over_budget("oracle enumeration", candidates, budget)?;

    // Check each relation once its last attribute is assigned.
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in query.relations().iter().enumerate() {
        let last = *r.attributes.iter().max().unwrap();
        checks[last].push(i);
    }
    let relations: Vec<&Relation> = query
        .relations()
        .iter()
        .map(|r| db.get(&r.name).unwrap())
        .collect();

    let mut out = Relation::new(query.attributes().to_vec());
    let mut assignment = vec![0u64; n];
    let mut scratch = Vec::new();
    fn search(
        depth: usize,
        query: &JoinQuery,
        domains: &[Vec<u64>],
        checks: &[Vec<usize>],
        relations: &[&Relation],
        assignment: &mut Vec<u64>,
        scratch: &mut Vec<u64>,
        out: &mut Relation,
    ) {
        if depth == domains.len() {
            out.insert(assignment.clone());
            return;
        }
        for &v in &domains[depth] {
            assignment[depth] = v;
            let ok = checks[depth].iter().all(|&ri| {
                scratch.clear();
                scratch.extend(query.relation(ri).attributes.iter().map(|&a| assignment[a]));
                relations[ri].contains(scratch)
            });
            if ok {
                search(depth + 1, query, domains, checks, relations, assignment, scratch, out);
            }
        }
    }
    search(
        0,
        query,
        &domains,
        &checks,
        &relations,
        &mut assignment,
        &mut scratch,
        &mut out,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;
    use crate::query::parse_query;

    fn rel(attrs: &[&str], tuples: &[&[u64]]) -> Relation {
        Relation::from_tuples(
            attrs.iter().map(|a| a.to_string()).collect(),
            tuples.iter().map(|t| t.to_vec()),
        )
    }

    /// Nested-loop natural join used as an oracle for the hash join.
    fn nested_loop_join(r: &Relation, s: &Relation) -> Relation {
        let mut attrs = r.attributes().to_vec();
        for a in s.attributes() {
            if !attrs.contains(a) {
                attrs.push(a.clone());
            }
        }
        let mut out = Relation::new(attrs.clone());
        for rt in r.tuples() {
            'pairs: for st in s.tuples() {
                let mut t = Vec::new();
                for a in &attrs {
                    let rv = r.column(a).map(|c| rt[c]);
                    let sv = s.column(a).map(|c| st[c]);
                    match (rv, sv) {
                        (Some(x), Some(y)) if x != y => continue 'pairs,
                        (Some(x), _) | (None, Some(x)) => t.push(x),
                        (None, None) => unreachable!(),
                    }
                }
                out.insert(t);
            }
        }
        out
    }

    #[test]
    fn join_examples() {
        let r = rel(&["a", "b"], &[&[1, 2]]);
        let s = rel(&["b", "c"], &[&[2, 3]]);
        let j = join(&r, &s, DEFAULT_TUPLE_BUDGET).unwrap();
        assert_eq!(j, rel(&["a", "b", "c"], &[&[1, 2, 3]]));

        let empty = rel(&["b", "c"], &[]);
        assert!(join(&r, &empty, DEFAULT_TUPLE_BUDGET).unwrap().is_empty());

        let r = rel(&["a", "b"], &[&[1, 1], &[2, 1]]);
        let s = rel(&["b", "c"], &[&[1, 5]]);
        let j = join(&r, &s, DEFAULT_TUPLE_BUDGET).unwrap();
        assert_eq!(j, rel(&["a", "b", "c"], &[&[1, 1, 5], &[2, 1, 5]]));
        assert_eq!(j, nested_loop_join(&r, &s));
        assert_eq!(j.size(), 6);
    }

    #[test]
    fn join_respects_budget() {
        let r = rel(&["a"], &[&[1], &[2], &[3]]);
        let s = rel(&["b"], &[&[1], &[2], &[3]]);
        assert_eq!(join(&r, &s, 9).unwrap().len(), 9);
        assert!(matches!(join(&r, &s, 8), Err(Error::Capacity { .. })));
    }

    #[test]
    fn projection_examples() {
        let r = rel(&["a", "b"], &[&[1, 2], &[1, 3]]);
        assert_eq!(project(&r, &["a"]).unwrap(), rel(&["a"], &[&[1]]));
        assert_eq!(project(&r, &["b", "a"]).unwrap(), r);
        assert!(project(&rel(&["a", "b"], &[]), &["b"]).unwrap().is_empty());
        assert!(matches!(project(&r, &["z"]), Err(Error::Domain(_))));
        // Projection onto nothing: one empty tuple iff non-empty.
        assert_eq!(project(&r, &[] as &[&str]).unwrap().len(), 1);
    }

    #[test]
    fn evaluation_trace() {
        let q = parse_query("rel R a b\nrel S b c").unwrap();
        let mut db = Instance::new();
        db.insert("R", rel(&["a", "b"], &[&[1, 2]]));
        db.insert("S", rel(&["b", "c"], &[&[2, 3]]));
        let (out, trace) = evaluate(&parse_plan("R").unwrap(), &db).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(trace.entries.len(), 1);

        let plan = parse_plan("(project (a) (join R S))").unwrap();
        let (out, trace) = evaluate(&plan, &db).unwrap();
        assert_eq!(out, rel(&["a"], &[&[1]]));
        assert_eq!(trace.entries.len(), 4);
        assert_eq!(trace.entries[2].cardinality, 1);
        assert_eq!(trace.entries[2].arity, 3);

        assert!(evaluate(&parse_plan("(join R X)").unwrap(), &db).is_err());
        assert!(oracle_answer(&q, &db).unwrap().same_set(&nested_loop_join(
            db.get("R").unwrap(),
            db.get("S").unwrap()
        )));
    }

    #[test]
    fn dummy_and_unit() {
        let mut db = Instance::new();
        db.insert("R", rel(&["a", "b"], &[&[1, 2], &[4, 2]]));
        let with_domain = EvalOptions {
            dummy_domain: Some(3),
            ..EvalOptions::default()
        };
        let (d, _) = evaluate_with(&Plan::Dummy("c".into()), &db, &with_domain).unwrap();
        assert_eq!(d.len(), 3);
        let (d, _) = evaluate(&Plan::Dummy("a".into()), &db).unwrap();
        assert_eq!(d, rel(&["a"], &[&[1], &[4]]));
        let plan = Plan::join(Plan::Unit, Plan::leaf("R"));
        let (out, _) = evaluate(&plan, &db).unwrap();
        assert!(out.same_set(db.get("R").unwrap()));
    }

    #[test]
    fn oracle_examples() {
        let q = parse_query("rel R a b\nrel S b c\nrel T c a").unwrap();
        let mut db = Instance::new();
        for (name, attrs) in [("R", ["a", "b"]), ("S", ["b", "c"]), ("T", ["c", "a"])] {
            db.insert(name, rel(&attrs, &[&[0, 0]]));
        }
        assert_eq!(oracle_answer(&q, &db).unwrap(), rel(&["a", "b", "c"], &[&[0, 0, 0]]));
        db.insert("T", rel(&["c", "a"], &[]));
        assert!(oracle_answer(&q, &db).unwrap().is_empty());
        assert!(matches!(
            oracle_answer_with_budget(&q, &db, 0),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn jdb_round_trip_and_errors() {
        let q = parse_query("rel R a b\nrel S b").unwrap();
        let db = parse_database("t.jdb", "@R\n1 2\n1 2 # dup\n3 4\n@S\n2\n", &q).unwrap();
        assert_eq!(db.duplicates_dropped, 1);
        assert_eq!(db.size(), 3);
        let again = parse_database("t.jdb", &db.to_text(&q), &q).unwrap();
        assert_eq!(again.relations, db.relations);

        let err = parse_database("t.jdb", "@R\n1 2 3\n", &q).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_database("t.jdb", "@X\n", &q).is_err());
        assert!(parse_database("t.jdb", "1 2\n", &q).is_err());
        assert!(parse_database("t.jdb", "@R\n1 x\n", &q).is_err());
    }
}
