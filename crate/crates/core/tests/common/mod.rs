//! Generators and reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use joinbound::bounds::GraphInput;
use joinbound::engine::{evaluate, Relation};
use joinbound::rational::{int, rat};
use joinbound::{Instance, JoinQuery, Plan, Rational};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn triangle() -> JoinQuery {
    joinbound::parse_query("rel R a b\nrel S b c\nrel T c a").unwrap()
}

/// A query with `1..=max_m` relations of arity `1..=max_arity` over at most
/// `max_n` attributes, every attribute covered.
pub fn random_query(rng: &mut impl Rng, max_m: usize, max_n: usize, max_arity: usize) -> JoinQuery {
    let m = rng.gen_range(1..=max_m);
    let n = rng.gen_range(1..=max_n);
    let mut rels: Vec<BTreeSet<usize>> = (0..m)
        .map(|_| {
            let k = rng.gen_range(1..=max_arity.min(n));
            let mut attrs: Vec<usize> = (0..n).collect();
            attrs.shuffle(rng);
            attrs.into_iter().take(k).collect()
        })
        .collect();
    let used: BTreeSet<usize> = rels.iter().flatten().copied().collect();
    // Renumber so the universe is exactly the used attributes.
    let rename: Vec<usize> = (0..n).map(|a| used.iter().filter(|&&u| u < a).count()).collect();
    for r in &mut rels {
        *r = r.iter().map(|&a| rename[a]).collect();
    }
    let schema: Vec<(String, Vec<String>)> = rels
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut attrs: Vec<String> = r.iter().map(|a| format!("x{a}")).collect();
            attrs.shuffle(rng);
            (format!("R{i}"), attrs)
        })
        .collect();
    JoinQuery::new(&schema).unwrap()
}

/// An instance with up to `max_size` tuples per relation over `{0..domain}`.
pub fn random_instance(rng: &mut impl Rng, query: &JoinQuery, max_size: usize, domain: u64) -> Instance {
    let mut db = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        let size = rng.gen_range(0..=max_size);
        let tuples = (0..size).map(|_| (0..r.arity()).map(|_| rng.gen_range(0..domain)).collect());
        db.insert(r.name.clone(), Relation::from_tuples(query.relation_attr_names(i), tuples));
    }
    db
}

/// Weights `k / 2^j` with `j ≤ 3`, `k ≤ 16`.
pub fn dyadic_weights(rng: &mut impl Rng, m: usize) -> Vec<Rational> {
    (0..m)
        .map(|_| rat(rng.gen_range(0..=16), 1 << rng.gen_range(0..=3)))
        .collect()
}

pub fn path(k: usize) -> GraphInput {
    let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
    let edges: Vec<(&str, &str)> = names.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    GraphInput::from_edges(&edges).unwrap()
}

pub fn cycle(k: usize) -> GraphInput {
    let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
    let edges: Vec<(&str, &str)> = (0..k).map(|i| (names[i].as_str(), names[(i + 1) % k].as_str())).collect();
    GraphInput::from_edges(&edges).unwrap()
}

pub fn complete(k: usize) -> GraphInput {
    let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            edges.push((names[i].as_str(), names[j].as_str()));
        }
    }
    GraphInput::from_edges(&edges).unwrap()
}

/// A random graph on `k` vertices with edge probability 1/2 and at least
/// one edge; vertices without edges are dropped.
pub fn random_graph(rng: &mut impl Rng, k: usize) -> GraphInput {
    loop {
        let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if rng.gen_bool(0.5) {
                    edges.push((names[i].as_str(), names[j].as_str()));
                }
            }
        }
        if !edges.is_empty() {
            return GraphInput::from_edges(&edges).unwrap();
        }
    }
}

/// All tuples of `{0..n}^k` in lexicographic order.
pub fn cube(n: u64, k: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |v| {
                    let mut t = p.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

/// Exact `E|ψ(D)|` for every subplan `ψ` (post-order) of a plan whose
/// projections all sit directly on leaves, when `D` is drawn with tuple
/// probabilities `p[R]` over `{0..n}`.
///
/// Such a `ψ` is a join of atoms `π_C(R)`, so `t ∈ ψ(D)` iff every atom has a
/// tuple of `R` agreeing with `t` on `C`. Atoms of different relations are
/// independent; the atoms of one relation are handled jointly by
/// enumerating all subsets of the tuples of `R` that agree with `t` on some
/// `C`.
pub fn flat_subplan_expectations(plan: &Plan, query: &JoinQuery, p: &[Rational], n: u64) -> Vec<Rational> {
    plan.subplans()
        .into_iter()
        .map(|psi| {
            let attrs = psi.output_attributes(query).unwrap();
            let mut atoms: Vec<(usize, Vec<String>)> = Vec::new();
            flat_atoms(psi, query, &mut atoms);
            cube(n, attrs.len())
                .iter()
                .map(|t| {
                    (0..query.m())
                        .map(|rel| relation_probability(query, rel, &atoms, &attrs, t, &p[rel], n))
                        .fold(int(1), |acc, x| acc * x)
                })
                .sum()
        })
        .collect()
}

fn flat_atoms(node: &Plan, query: &JoinQuery, out: &mut Vec<(usize, Vec<String>)>) {
    match node {
        Plan::Leaf(name) => {
            let i = query.relation_index(name).unwrap();
            out.push((i, query.relation_attr_names(i)));
        }
        Plan::Project(keep, child) => match &**child {
            Plan::Leaf(name) => out.push((query.relation_index(name).unwrap(), keep.clone())),
            _ => panic!("projection over a non-leaf"),
        },
        Plan::Join(l, r) => {
            flat_atoms(l, query, out);
            flat_atoms(r, query, out);
        }
        Plan::Unit => {}
        Plan::Dummy(_) => panic!("dummy atom"),
    }
}

fn relation_probability(
    query: &JoinQuery,
    rel: usize,
    atoms: &[(usize, Vec<String>)],
    names: &[String],
    t: &[u64],
    p: &Rational,
    n: u64,
) -> Rational {
    let rattrs = query.relation_attr_names(rel);
    let conditions: Vec<Vec<(usize, u64)>> = atoms
        .iter()
        .filter(|(r, _)| *r == rel)
        .map(|(_, keep)| {
            keep.iter()
                .map(|a| {
                    let pos = rattrs.iter().position(|x| x == a).unwrap();
                    let val = t[names.iter().position(|x| x == a).unwrap()];
                    (pos, val)
                })
                .collect()
        })
        .collect();
    if conditions.is_empty() {
        return int(1);
    }
    let candidates: Vec<Vec<u64>> = cube(n, rattrs.len())
        .into_iter()
        .filter(|u| conditions.iter().any(|c| c.iter().all(|&(pos, v)| u[pos] == v)))
        .collect();
    let k = candidates.len();
    assert!(k <= 24, "{k} candidate tuples");
    let masks: Vec<u64> = conditions
        .iter()
        .map(|c| {
            candidates
                .iter()
                .enumerate()
                .filter(|(_, u)| c.iter().all(|&(pos, v)| u[pos] == v))
                .fold(0u64, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let mut by_count = vec![0u64; k + 1];
    for pattern in 0u64..(1 << k) {
        if masks.iter().all(|&m| pattern & m != 0) {
            by_count[pattern.count_ones() as usize] += 1;
        }
    }
    let q = int(1) - p;
    by_count
        .iter()
        .enumerate()
        .map(|(c, &count)| int(count as i64) * pow(p, c) * pow(&q, k - c))
        .sum()
}

fn pow(base: &Rational, e: usize) -> Rational {
    (0..e).fold(int(1), |acc, _| acc * base)
}

/// Exact `E|ψ(D)|` for every subplan of an arbitrary join-project plan by
/// evaluating `ψ` on every pattern of the base tuples that can influence
/// each candidate output tuple. For a candidate `t`, these are the tuples
/// agreeing with `t` on the attributes selected along the path down to each
/// leaf (a selection on output attributes passes through joins and through
/// projections that keep them). Only feasible for tiny `n`.
pub fn exact_subplan_expectations(plan: &Plan, query: &JoinQuery, p: &[Rational], n: u64) -> Vec<Rational> {
    plan.subplans()
        .into_iter()
        .map(|psi| exact_expectation(psi, query, p, n))
        .collect()
}

fn exact_expectation(psi: &Plan, query: &JoinQuery, p: &[Rational], n: u64) -> Rational {
    let attrs = psi.output_attributes(query).unwrap();
    let mut total = int(0);
    for t in cube(n, attrs.len()) {
        let mut relevant: Vec<(usize, Vec<u64>)> = Vec::new();
        collect_relevant(psi, query, &attrs, &t, n, &mut relevant);
        relevant.sort();
        relevant.dedup();
        assert!(relevant.len() <= 16, "{} relevant tuples", relevant.len());
        for mask in 0u64..(1 << relevant.len()) {
            let mut weight = int(1);
            let mut db = Instance::new();
            for (i, r) in query.relations().iter().enumerate() {
                db.insert(r.name.clone(), Relation::new(query.relation_attr_names(i)));
            }
            for (bit, (rel, tuple)) in relevant.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    weight *= &p[*rel];
                    let name = &query.relation(*rel).name;
                    let mut r = db.get(name).unwrap().clone();
                    r.insert(tuple.clone());
                    db.insert(name.clone(), r);
                } else {
                    weight *= int(1) - &p[*rel];
                }
            }
            let (out, _) = evaluate(psi, &db).unwrap();
            let out = out.reordered(&attrs).unwrap();
            if out.contains(&t) {
                total += weight;
            }
        }
    }
    total
}

fn collect_relevant(
    node: &Plan,
    query: &JoinQuery,
    names: &[String],
    t: &[u64],
    n: u64,
    out: &mut Vec<(usize, Vec<u64>)>,
) {
    let selected = |attrs: &[String]| -> (Vec<String>, Vec<u64>) {
        names
            .iter()
            .zip(t)
            .filter(|(a, _)| attrs.contains(a))
            .map(|(a, &v)| (a.clone(), v))
            .unzip()
    };
    match node {
        Plan::Leaf(name) => {
            let i = query.relation_index(name).unwrap();
            let rattrs = query.relation_attr_names(i);
            let (sel, vals) = selected(&rattrs);
            for tuple in cube(n, rattrs.len()) {
                let agrees = sel
                    .iter()
                    .zip(&vals)
                    .all(|(a, &v)| tuple[rattrs.iter().position(|x| x == a).unwrap()] == v);
                if agrees {
                    out.push((i, tuple));
                }
            }
        }
        Plan::Join(l, r) => {
            for child in [l, r] {
                let cattrs = child.output_attributes(query).unwrap();
                let (sel, vals) = selected(&cattrs);
                collect_relevant(child, query, &sel, &vals, n, out);
            }
        }
        Plan::Project(_, child) => collect_relevant(child, query, names, t, n, out),
        Plan::Unit | Plan::Dummy(_) => {}
    }
}

pub fn max_rational(values: &[Rational]) -> Rational {
    values.iter().cloned().max().unwrap()
}
