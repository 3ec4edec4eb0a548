//! Plan constructions: the attribute-prefix join-project plan, the
//! cover-first join plan, the family that separates join plans from
//! join-project plans, and exhaustive join-plan enumeration.

use std::collections::HashMap;

use crate::engine::{Instance, Relation, DEFAULT_TUPLE_BUDGET};
use crate::error::{Error, Result};
use crate::lp::{greedy_edge_cover, next_combination};
use crate::plan::Plan;
use crate::query::JoinQuery;

/// Largest schema accepted by [`enumerate_join_plans`].
pub const MAX_ENUMERATED_RELATIONS: usize = 5;

fn check_order(query: &JoinQuery, order: &[String]) -> Result<Vec<usize>> {
    let mut seen = vec![false; query.n()];
    let mut indices = Vec::with_capacity(order.len());
    for a in order {
        let i = query
            .attr_index(a)
            .ok_or_else(|| Error::domain(format!("order names unknown attribute `{a}`")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::domain(format!("attribute `{a}` repeated in order")));
        }
        indices.push(i);
    }
    if indices.len() != query.n() {
        return Err(Error::domain("order is not a permutation of the attributes"));
    }
    Ok(indices)
}

/// The stages `φ_1, …, φ_n` of the prefix plan for the given attribute order.
///
/// With `B_i` the first `i` attributes, `φ_1` joins `π_{B_1}(R_j)` for every
/// relation left-deep, and `φ_{i+1}` extends `φ_i` by joining in every
/// `π_{B_{i+1}}(R_j)`. Each `φ_i` is bounded by `|D|^{ρ*(Q)}`.
pub fn gm_stages(query: &JoinQuery, order: &[String]) -> Result<Vec<Plan>> {
    let order = check_order(query, order)?;
    let mut stages: Vec<Plan> = Vec::with_capacity(order.len());
    let mut prefix = Vec::new();
    for &a in &order {
        prefix.push(a);
        let projections = query.relations().iter().map(|r| {
            let keep: Vec<String> = r
                .attributes
                .iter()
                .filter(|x| prefix.contains(x))
                .map(|&x| query.attributes()[x].clone())
                .collect();
            Plan::project(keep, Plan::leaf(r.name.clone()))
        });
        let parts = stages.last().cloned().into_iter().chain(projections);
        stages.push(Plan::left_deep(parts).expect("query has relations"));
    }
    Ok(stages)
}

/// The final prefix stage `φ_n`, a join-project plan for `Q`.
pub fn gm_plan(query: &JoinQuery, order: &[String]) -> Result<Plan> {
    Ok(gm_stages(query, order)?.pop().expect("query has attributes"))
}

/// [`gm_plan`] with the schema's attribute order.
pub fn gm_plan_default(query: &JoinQuery) -> Plan {
    gm_plan(query, query.attributes()).expect("schema order is a permutation")
}

/// Left-deep join plan: the greedy edge cover first, then every other
/// relation, each group in schema order.
pub fn cover_join_plan(query: &JoinQuery) -> Result<Plan> {
    let cover = greedy_edge_cover(query)?;
    let rest = (0..query.m()).filter(|r| !cover.relations.contains(r));
    let order = cover.relations.iter().copied().chain(rest);
    Ok(Plan::left_deep(order.map(|r| Plan::leaf(query.relation(r).name.clone())))
        .expect("query has relations"))
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

/// The query on `2m` relations over attributes `a_s` for the `m`-subsets `s`
/// of `{1..2m}` (relation `R_i` holds the `a_s` with `i ∈ s`), and the
/// instance where every tuple has one coordinate in `{1..N}` and all others 1.
pub fn adversarial_instance(m: usize, big_n: u64) -> Result<(JoinQuery, Instance)> {
    adversarial_instance_with_budget(m, big_n, DEFAULT_TUPLE_BUDGET)
}

pub fn adversarial_instance_with_budget(m: usize, big_n: u64, budget: u128) -> Result<(JoinQuery, Instance)> {
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    if big_n < 2 {
        return Err(Error::domain("N must be at least 2"));
    }
    if m > 16 {
        return Err(Error::Capability("m too large for the attribute universe".into()));
    }
    let n = binomial(2 * m as u64, m as u64);
    let per_relation = (big_n as u128 - 1) * (n as u128 / 2) + 1;
    let total = per_relation * 2 * m as u128;
    if total > budget {
        return Err(Error::capacity("adversarial instance", total, budget));
    }
    if n as usize > crate::query::MAX_ATTRIBUTES {
        return Err(Error::Capability(format!(
            "m = {m} needs {n} attributes; at most {} are supported",
            crate::query::MAX_ATTRIBUTES
        )));
    }

    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut combo: Vec<usize> = (0..m).collect();
    loop {
        subsets.push(combo.iter().map(|i| i + 1).collect());
        if !next_combination(&mut combo, 2 * m) {
            break;
        }
    }
    let attr_name = |s: &[usize]| {
        let parts: Vec<String> = s.iter().map(usize::to_string).collect();
        format!("a_{}", parts.join("_"))
    };
    let schema: Vec<(String, Vec<String>)> = (1..=2 * m)
        .map(|i| {
            let attrs = subsets
                .iter()
                .filter(|s| s.contains(&i))
                .map(|s| attr_name(s))
                .collect();
            (format!("R{i}"), attrs)
        })
        .collect();
    let query = JoinQuery::new(&schema)?;

    let mut db = Instance::new();
    for (name, attrs) in &schema {
        let arity = attrs.len();
        let mut rel = Relation::new(attrs.clone());
        for pos in 0..arity {
            for v in 1..=big_n {
                let mut t = vec![1u64; arity];
                t[pos] = v;
                rel.insert(t);
            }
        }
        db.insert(name.clone(), rel);
    }
    Ok((query, db))
}

/// Every projection-free binary plan using each relation exactly once,
/// `Catalan(m-1) · m!` of them.
pub fn enumerate_join_plans(query: &JoinQuery) -> Result<Vec<Plan>> {
    let m = query.m();
    if m > MAX_ENUMERATED_RELATIONS {
        return Err(Error::Capability(format!(
            "join plan enumeration supports at most {MAX_ENUMERATED_RELATIONS} relations (got {m})"
        )));
    }
    let mut memo: HashMap<u32, Vec<Plan>> = HashMap::new();
    Ok(plans_over(query, (1u32 << m) - 1, &mut memo))
}

fn plans_over(query: &JoinQuery, set: u32, memo: &mut HashMap<u32, Vec<Plan>>) -> Vec<Plan> {
    if let Some(found) = memo.get(&set) {
        return found.clone();
    }
    let result = if set.count_ones() == 1 {
        vec![Plan::leaf(query.relation(set.trailing_zeros() as usize).name.clone())]
    } else {
        let mut out = Vec::new();
        // Proper non-empty subsets of `set`, ascending.
        let mut left = (set - 1) & set;
        let mut lefts = Vec::new();
        while left != 0 {
            lefts.push(left);
            left = (left - 1) & set;
        }
        lefts.sort_unstable();
        for left in lefts {
            let ls = plans_over(query, left, memo);
            let rs = plans_over(query, set & !left, memo);
            for l in &ls {
                for r in &rs {
                    out.push(Plan::join(l.clone(), r.clone()));
                }
            }
        }
        out
    };
    memo.insert(set, result.clone());
    result
}

/// `Catalan(m-1) · m!`.
pub fn join_plan_count(m: usize) -> u64 {
    if m == 0 {
        return 0;
    }
    let k = (m - 1) as u64;
    let catalan = binomial(2 * k, k) / (k + 1);
    catalan * (1..=m as u64).product::<u64>()
}

struct NodeInfo {
    colors: u64,
    height: usize,
}

/// In a plan whose leaves carry `2m` distinct colours, finds a subplan whose
/// leaves span between `⌈(m+2)/2⌉` and `m+1` colours.
///
/// Takes a lowest node spanning at least `m+2` colours and returns its child
/// with the most colours (the left one on ties); when no node spans `m+2`
/// colours (`m = 1`), the root is returned.
pub fn balanced_split<'p>(plan: &'p Plan, colors: &HashMap<String, usize>) -> Result<&'p Plan> {
    let mut infos: HashMap<*const Plan, NodeInfo> = HashMap::new();
    fn annotate(
        p: &Plan,
        colors: &HashMap<String, usize>,
        infos: &mut HashMap<*const Plan, NodeInfo>,
    ) -> Result<(u64, usize)> {
        let (set, height) = match p {
            Plan::Leaf(name) => {
                let c = *colors
                    .get(name)
                    .ok_or_else(|| Error::domain(format!("leaf `{name}` has no colour")))?;
                if c >= 64 {
                    return Err(Error::domain("colours must be below 64"));
                }
                (1u64 << c, 0)
            }
            Plan::Unit | Plan::Dummy(_) => (0, 0),
            _ => {
                let mut set = 0;
                let mut height = 0;
                for c in p.children() {
                    let (s, h) = annotate(c, colors, infos)?;
                    set |= s;
                    height = height.max(h + 1);
                }
                (set, height)
            }
        };
        infos.insert(p as *const Plan, NodeInfo { colors: set, height });
        Ok((set, height))
    }
    let (total, _) = annotate(plan, colors, &mut infos)?;
    let k = total.count_ones() as usize;
    if k < 2 {
        return Err(Error::domain("balanced split needs at least two colours"));
    }
    if k % 2 != 0 {
        return Err(Error::domain("balanced split needs an even number of colours"));
    }
    let m = k / 2;
    let span = |p: &Plan| infos[&(p as *const Plan)].colors.count_ones() as usize;

    let heavy = plan
        .subplans()
        .into_iter()
        .filter(|p| span(p) >= m + 2)
        .min_by_key(|p| infos[&(*p as *const Plan)].height);
    let Some(t) = heavy else {
        return Ok(plan);
    };
    let lower = (m + 2).div_ceil(2);
    let child = t
        .children()
        .into_iter()
        .rev()
        .max_by_key(|c| span(c))
        .expect("a node spanning several colours has children");
    let c = span(child);
    if c < lower || c > m + 1 {
        return Err(Error::Internal(format!(
            "split child spans {c} colours, outside [{lower}, {}]",
            m + 1
        )));
    }
    Ok(child)
}
