//! Cover-based size bounds and the instances that make them tight.

use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;

use crate::engine::{oracle_answer, Instance, Relation, DEFAULT_TUPLE_BUDGET};
use crate::error::{Error, Result};
use crate::lp::{is_fractional_cover, solve_cover_lp, CoverLp, CoverSolution};
use crate::query::{is_token, strip_comment, AttrSet, JoinQuery};
use crate::rational::{common_denominator, exact_log2, floor_pow2, from_f64_exact, int, to_f64, Rational};

/// `Π_R |R|^{x_R}` with its exponent form.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundValue {
    /// `Σ x_R log₂|R|`, exact when every size with `x_R > 0` is a power of two.
    pub log2_exact: Option<Rational>,
    /// Float exponent; `-inf` when the bound is zero.
    pub log2: f64,
    pub value: f64,
    /// `(relation, size, exponent)` per relation.
    pub factors: Vec<(String, u64, Rational)>,
}

/// `Π_R |R|^{x_R}` for a fractional edge cover `x`.
pub fn agm_bound(query: &JoinQuery, x: &[Rational], sizes: &[u64]) -> Result<BoundValue> {
    if sizes.len() != query.m() {
        return Err(Error::domain(format!(
            "expected {} sizes, got {}",
            query.m(),
            sizes.len()
        )));
    }
    if !is_fractional_cover(query, x) {
        return Err(Error::domain("weights are not a fractional edge cover"));
    }
    let factors: Vec<(String, u64, Rational)> = query
        .relations()
        .iter()
        .zip(sizes)
        .zip(x)
        .map(|((r, &s), e)| (r.name.clone(), s, e.clone()))
        .collect();
    let active: Vec<&(String, u64, Rational)> =
        factors.iter().filter(|f| f.2.is_positive()).collect();
    if active.iter().any(|f| f.1 == 0) {
        return Ok(BoundValue {
            log2_exact: None,
            log2: f64::NEG_INFINITY,
            value: 0.0,
            factors,
        });
    }
    let log2_exact = active
        .iter()
        .map(|f| exact_log2(f.1).map(|k| &f.2 * int(k as i64)))
        .sum::<Option<Rational>>();
    let log2 = match &log2_exact {
        Some(v) => to_f64(v),
        None => active
            .iter()
            .map(|f| to_f64(&f.2) * (f.1 as f64).log2())
            .sum(),
    };
    Ok(BoundValue {
        log2_exact,
        log2,
        value: log2.exp2(),
        factors,
    })
}

/// A materialized instance plus the cover data that produced it.
#[derive(Clone, Debug)]
pub struct WorstCaseInstance {
    pub instance: Instance,
    pub cover: CoverSolution,
    /// Common denominator `q` of the dual packing.
    pub denominator: u64,
    /// Values per attribute: `{0, …, g_a - 1}`.
    pub grid: Vec<u64>,
}

fn grid_instance(query: &JoinQuery, grid: &[u64], budget: u128, what: &str) -> Result<Instance> {
    let required = query
        .relations()
        .iter()
        .map(|r| {
            r.attributes
                .iter()
                .try_fold(1u128, |acc, &a| acc.checked_mul(grid[a] as u128))
        })
        .try_fold(0u128, |acc, n| n.and_then(|n| acc.checked_add(n)))
        .unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::capacity(what, required, budget));
    }
    let mut instance = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        let dims: Vec<u64> = r.attributes.iter().map(|&a| grid[a]).collect();
        instance.insert(
            r.name.clone(),
            Relation::from_tuples(query.relation_attr_names(i), grid_tuples(&dims)),
        );
    }
    Ok(instance)
}

/// All tuples of `{0..d_1} × … × {0..d_k}` in lexicographic order.
fn grid_tuples(dims: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

/// The instance where `R(D)` is the grid `Π_{a ∈ A_R} [N0^{p_a}]` for the
/// optimal packing `y_a = p_a / q`; it satisfies `|Q(D)| ≥ Π |R(D)|^{x_R}`.
pub fn worst_case_instance(query: &JoinQuery, n0: u64) -> Result<WorstCaseInstance> {
    worst_case_instance_with_budget(query, n0, DEFAULT_TUPLE_BUDGET)
}

pub fn worst_case_instance_with_budget(query: &JoinQuery, n0: u64, budget: u128) -> Result<WorstCaseInstance> {
    if n0 < 2 {
        return Err(Error::domain("N0 must be at least 2"));
    }
    let cover = solve_cover_lp(&CoverLp::unit(query))?;
    let q = common_denominator(&cover.y);
    let denominator = q
        .to_u64()
        .ok_or_else(|| Error::capacity("dual denominator", u128::MAX, budget))?;
    let mut grid = Vec::with_capacity(query.n());
    for y in &cover.y {
        let p = (y * Rational::from_integer(q.clone())).to_integer();
        let size = p
            .to_u32()
            .and_then(|p| n0.checked_pow(p))
            .filter(|&s| (s as u128) <= budget)
            .ok_or_else(|| Error::capacity("worst-case grid", u128::MAX, budget))?;
        grid.push(size);
    }
    let instance = grid_instance(query, &grid, budget, "worst-case instance")?;
    Ok(WorstCaseInstance {
        instance,
        cover,
        denominator,
        grid,
    })
}

/// Solution of the size-constrained LP `min Σ x_R log₂ N_R` and its bound.
#[derive(Clone, Debug)]
pub struct ConstrainedBound {
    pub solution: CoverSolution,
    pub bound: BoundValue,
    /// False when some `log₂ N_R` was replaced by the exact value of its
    /// nearest float.
    pub exact_costs: bool,
    /// Upper estimate of `|cost used - log₂ N_R|` over all relations.
    pub cost_perturbation: f64,
}

pub fn constrained_costs(sizes: &[u64]) -> Result<(Vec<Rational>, bool, f64)> {
    let mut exact = true;
    let mut perturbation: f64 = 0.0;
    let mut costs = Vec::with_capacity(sizes.len());
    for &s in sizes {
        if s == 0 {
            return Err(Error::domain("relation sizes must be at least 1"));
        }
        match exact_log2(s) {
            Some(k) => costs.push(int(k as i64)),
            None => {
                exact = false;
                let approx = (s as f64).log2();
                // log2 is correctly rounded to within one ulp on supported targets.
                perturbation = perturbation.max(approx.abs() * f64::EPSILON);
                costs.push(from_f64_exact(approx).expect("finite logarithm"));
            }
        }
    }
    Ok((costs, exact, perturbation))
}

/// Upper bound `Π N_R^{x_R}` over instances with `|R(D)| = N_R`.
pub fn constrained_bound(query: &JoinQuery, sizes: &[u64]) -> Result<ConstrainedBound> {
    if sizes.len() != query.m() {
        return Err(Error::domain(format!(
            "expected {} sizes, got {}",
            query.m(),
            sizes.len()
        )));
    }
    let (costs, exact_costs, cost_perturbation) = constrained_costs(sizes)?;
    let solution = solve_cover_lp(&CoverLp::with_costs(query, costs)?)?;
    let bound = agm_bound(query, &solution.x, sizes)?;
    Ok(ConstrainedBound {
        solution,
        bound,
        exact_costs,
        cost_perturbation,
    })
}

#[derive(Clone, Debug)]
pub struct ConstrainedWorstInstance {
    pub instance: Instance,
    pub bound: ConstrainedBound,
    /// `⌊2^{y_a}⌋` per attribute.
    pub grid: Vec<u64>,
}

impl ConstrainedWorstInstance {
    /// `2^{-n} Π N_R^{x_R}` as a float.
    pub fn guaranteed_answer(&self, n: usize) -> f64 {
        (self.bound.bound.log2 - n as f64).exp2()
    }
}

/// An instance with `|R(D)| = N_R` exactly and `|Q(D)| ≥ 2^{-n} Π N_R^{x_R}`:
/// the grid `Π_{a ∈ A_R} [⌊2^{y_a}⌋]` for the optimal dual `y`, padded with
/// the tuples `(0, …, 0, v)`, `v = 0, 1, …` not already present.
pub fn constrained_worst_instance(query: &JoinQuery, sizes: &[u64]) -> Result<ConstrainedWorstInstance> {
    constrained_worst_instance_with_budget(query, sizes, DEFAULT_TUPLE_BUDGET)
}

pub fn constrained_worst_instance_with_budget(
    query: &JoinQuery,
    sizes: &[u64],
    budget: u128,
) -> Result<ConstrainedWorstInstance> {
    let bound = constrained_bound(query, sizes)?;
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    if total > budget {
        return Err(Error::capacity("size-constrained instance", total, budget));
    }
    let grid: Vec<u64> = bound
        .solution
        .y
        .iter()
        .map(|y| floor_pow2(y).to_u64().unwrap_or(u64::MAX))
        .collect();
    let mut instance = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        let dims: Vec<u64> = r.attributes.iter().map(|&a| grid[a]).collect();
        let grid_size = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .unwrap_or(u64::MAX);
        if grid_size > sizes[i] {
            return Err(Error::Internal(format!(
                "grid for `{}` has {grid_size} tuples, more than N = {}",
                r.name, sizes[i]
            )));
        }
        let mut rel = Relation::from_tuples(query.relation_attr_names(i), grid_tuples(&dims));
        let mut v = 0u64;
        while (rel.len() as u64) < sizes[i] {
            let mut t = vec![0u64; r.arity()];
            *t.last_mut().unwrap() = v;
            rel.insert(t);
            v += 1;
        }
        instance.insert(r.name.clone(), rel);
    }
    Ok(ConstrainedWorstInstance {
        instance,
        bound,
        grid,
    })
}

/// An undirected simple graph read from `edge <u> <v>` lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphInput {
    pub vertices: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphInput {
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        let mut g = GraphInput {
            vertices: Vec::new(),
            edges: Vec::new(),
        };
        for (u, v) in edges {
            g.add_edge(u.as_ref(), v.as_ref()).map_err(Error::domain)?;
        }
        Ok(g)
    }

    fn vertex(&mut self, name: &str) -> usize {
        match self.vertices.iter().position(|v| v == name) {
            Some(i) => i,
            None => {
                self.vertices.push(name.to_string());
                self.vertices.len() - 1
            }
        }
    }

    fn add_edge(&mut self, u: &str, v: &str) -> std::result::Result<(), String> {
        if !is_token(u) || !is_token(v) {
            return Err(format!("invalid vertex name in edge `{u} {v}`"));
        }
        if u == v {
            return Err(format!("self-loop on `{u}`"));
        }
        let (a, b) = (self.vertex(u), self.vertex(v));
        if self.vertices.len() > crate::query::MAX_ATTRIBUTES {
            return Err(format!(
                "more than {} vertices",
                crate::query::MAX_ATTRIBUTES
            ));
        }
        if self.edges.iter().any(|&e| e == (a, b) || e == (b, a)) {
            return Err(format!("duplicate edge `{u} {v}`"));
        }
        self.edges.push((a, b));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    fn neighbours(&self) -> Vec<u64> {
        let mut adj = vec![0u64; self.n()];
        for &(u, v) in &self.edges {
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        adj
    }

    pub fn vertex_set<S: AsRef<str>>(&self, names: &[S]) -> Result<AttrSet> {
        let mut set = AttrSet::EMPTY;
        for name in names {
            let i = self
                .vertices
                .iter()
                .position(|v| v == name.as_ref())
                .ok_or_else(|| Error::domain(format!("unknown vertex `{}`", name.as_ref())))?;
            set.insert(i);
        }
        Ok(set)
    }

    pub fn is_independent(&self, set: AttrSet) -> bool {
        self.edges
            .iter()
            .all(|&(u, v)| !(set.contains(u) && set.contains(v)))
    }

    /// A maximum independent set by exhaustive branching; the first found
    /// when including lower-numbered vertices first.
    pub fn maximum_independent_set(&self) -> AttrSet {
        let adj = self.neighbours();
        fn branch(candidates: u64, chosen: u64, adj: &[u64], best: &mut u64) {
            if chosen.count_ones() + candidates.count_ones() <= best.count_ones() {
                return;
            }
            if candidates == 0 {
                *best = chosen;
                return;
            }
            let v = candidates.trailing_zeros() as usize;
            let bit = 1u64 << v;
            branch(candidates & !bit & !adj[v], chosen | bit, adj, best);
            branch(candidates & !bit, chosen, adj, best);
        }
        let mut best = 0u64;
        // Seed with an empty set so the first full branch always records.
        branch(AttrSet::full(self.n()).0, 0, &adj, &mut best);
        AttrSet(best)
    }

    /// `α(G)`.
    pub fn independence_number(&self) -> usize {
        self.maximum_independent_set().len()
    }
}

pub fn parse_graph(source_name: &str, text: &str) -> Result<GraphInput> {
    let mut g = GraphInput {
        vertices: Vec::new(),
        edges: Vec::new(),
    };
    for (lineno, line) in text.lines().enumerate() {
        let words: Vec<&str> = strip_comment(line).split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["edge", u, v] => g
                .add_edge(u, v)
                .map_err(|msg| Error::parse(source_name, lineno + 1, msg))?,
            _ => {
                return Err(Error::parse(
                    source_name,
                    lineno + 1,
                    "expected `edge <u> <v>`",
                ))
            }
        }
    }
    Ok(g)
}

/// One binary relation per edge over one attribute per vertex, all sizes 2.
pub fn graph_to_query(graph: &GraphInput) -> Result<(JoinQuery, Vec<u64>)> {
    if graph.edges.is_empty() {
        return Err(Error::domain("graph has no edges"));
    }
    let mut names: Vec<String> = Vec::with_capacity(graph.edges.len());
    let schema: Vec<(String, Vec<String>)> = graph
        .edges
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| {
            let (u, v) = (&graph.vertices[u], &graph.vertices[v]);
            let mut name = format!("R_{u}_{v}");
            if names.contains(&name) {
                name = format!("{name}_{i}");
            }
            names.push(name.clone());
            (name, vec![u.clone(), v.clone()])
        })
        .collect();
    let query = JoinQuery::new(&schema)?;
    let sizes = vec![2; query.m()];
    Ok((query, sizes))
}

/// Every relation holds the all-0 tuple, plus the tuple with 1 on its
/// attribute in `independent` (if any), else the all-2 tuple.
pub fn independent_set_instance(graph: &GraphInput, independent: AttrSet) -> Result<Instance> {
    if !independent.is_subset(AttrSet::full(graph.n())) {
        return Err(Error::domain("independent set names unknown vertices"));
    }
    if !graph.is_independent(independent) {
        return Err(Error::domain("vertex set is not independent"));
    }
    let (query, _) = graph_to_query(graph)?;
    let mut instance = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        let mut rel = Relation::new(query.relation_attr_names(i));
        rel.insert(vec![0; r.arity()]);
        for (pos, &a) in r.attributes.iter().enumerate() {
            if independent.contains(a) {
                let mut t = vec![0; r.arity()];
                t[pos] = 1;
                rel.insert(t);
            }
        }
        if rel.len() < 2 {
            rel.insert(vec![2; r.arity()]);
        }
        instance.insert(r.name.clone(), rel);
    }
    Ok(instance)
}

/// Largest `|Q(D)|` over all instances with exactly two tuples per relation
/// drawn from `{0,1}^{A_R}`, by exhaustive enumeration.
pub fn max_answer_two_tuples_binary(query: &JoinQuery) -> Result<usize> {
    const LIMIT: u128 = 10_000_000;
    let options: Vec<Vec<[Vec<u64>; 2]>> = query
        .relations()
        .iter()
        .map(|r| {
            let cube = grid_tuples(&vec![2; r.arity()]);
            let mut pairs = Vec::new();
            for i in 0..cube.len() {
                for j in i + 1..cube.len() {
                    pairs.push([cube[i].clone(), cube[j].clone()]);
                }
            }
            pairs
        })
        .collect();
    let total = options
        .iter()
        .try_fold(1u128, |acc, o| acc.checked_mul(o.len() as u128))
        .unwrap_or(u128::MAX);
    if total > LIMIT {
        return Err(Error::Capability(format!(
            "{total} databases exceed the enumeration limit {LIMIT}"
        )));
    }
    let names: Vec<Vec<String>> = (0..query.m()).map(|i| query.relation_attr_names(i)).collect();
    (0..total as u64)
        .into_par_iter()
        .map(|mut code| {
            let mut db = Instance::new();
            for (i, r) in query.relations().iter().enumerate() {
                let k = options[i].len() as u64;
                let choice = &options[i][(code % k) as usize];
                code /= k;
                db.insert(
                    r.name.clone(),
                    Relation::from_tuples(names[i].clone(), choice.iter().cloned()),
                );
            }
            oracle_answer(query, &db).map(|a| a.len())
        })
        .try_reduce(|| 0, |a, b| Ok(a.max(b)))
}
