//! Rewriting join-project plans into join plans with comparable expected
//! intermediate sizes on random databases.
//!
//! A projection `π_A(φ₀)` over a projection-free `φ₀` is widened to the
//! closure `A* = C_S(A)` of `A` under the potential
//! `f_S(A) = |A|(log₂N − n − 1) − Σ_{R ∈ S[A]} w_R`, after dropping from
//! `φ₀` the relations not inside `A*`. The widened projection keeps every
//! attribute of its child and disappears.

use num_traits::Zero;
use rayon::prelude::*;

use crate::engine::{evaluate_with, EvalOptions, Instance, Relation};
use crate::error::{Error, Result};
use crate::plan::Plan;
use crate::query::{AttrSet, JoinQuery};
use crate::rational::{int, Rational};
use crate::stochastic::{sample_instance, ProbabilityModel, MAX_SCAN_ATTRIBUTES};

/// The relation multiset `S` with weights, plus `n` and `log₂N`.
#[derive(Clone, Debug)]
pub struct ClosureContext {
    pub atoms: Vec<(AttrSet, Rational)>,
    pub n: usize,
    pub log2_n: u32,
}

impl ClosureContext {
    pub fn new(n: usize, big_n: u64, atoms: Vec<(AttrSet, Rational)>) -> Result<Self> {
        let log2_n = match crate::rational::exact_log2(big_n) {
            Some(k) if k >= 1 => k,
            _ => return Err(Error::domain(format!("N = {big_n} is not a power of two ≥ 2"))),
        };
        if atoms.iter().any(|(a, _)| !a.is_subset(AttrSet::full(n))) {
            return Err(Error::domain("relation attributes outside the universe"));
        }
        Ok(ClosureContext { atoms, n, log2_n })
    }

    /// Context for the relations `s` (schema indices) of `query`.
    pub fn for_relations(query: &JoinQuery, model: &ProbabilityModel, s: &[usize]) -> Result<Self> {
        let atoms = s
            .iter()
            .map(|&i| (query.relation(i).attr_set(), model.weights[i].clone()))
            .collect();
        Self::new(query.n(), model.big_n, atoms)
    }

    /// `f_S(A)`.
    pub fn f_value(&self, a: AttrSet) -> Rational {
        let coefficient = self.log2_n as i64 - self.n as i64 - 1;
        let inside: Rational = self
            .atoms
            .iter()
            .filter(|(attrs, _)| attrs.is_subset(a))
            .map(|(_, w)| w.clone())
            .sum();
        int(a.len() as i64 * coefficient) - inside
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureResult {
    pub a_star: AttrSet,
    pub f_value: Rational,
    /// The largest minimizer was the only minimizer of its size.
    pub unique: bool,
}

/// `C_S(A)`: the largest superset of `A` minimizing `f_S`, found by scanning
/// every superset.
pub fn closure(ctx: &ClosureContext, a: AttrSet) -> Result<ClosureResult> {
    if ctx.n > MAX_SCAN_ATTRIBUTES {
        return Err(Error::Capability(format!(
            "closure scan over {} attributes exceeds the limit {MAX_SCAN_ATTRIBUTES}",
            ctx.n
        )));
    }
    let universe = AttrSet::full(ctx.n);
    if !a.is_subset(universe) {
        return Err(Error::domain("attribute set outside the universe"));
    }
    let free = universe.minus(a).0;
    let mut best = a;
    let mut best_f = ctx.f_value(a);
    let mut ties = 1usize;
    let mut sub = free;
    loop {
        let b = a.union(AttrSet(sub));
        if b != a {
            let f = ctx.f_value(b);
            if f < best_f || (f == best_f && b.len() > best.len()) {
                best = b;
                best_f = f;
                ties = 1;
            } else if f == best_f && b.len() == best.len() {
                ties += 1;
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
    if ties != 1 {
        return Err(Error::Internal(format!(
            "{ties} largest minimizers of f_S above {a:?}; f_S is not submodular"
        )));
    }
    Ok(ClosureResult {
        a_star: best,
        f_value: best_f,
        unique: true,
    })
}

/// `(((φ ⋈ R_1) ⋈ R_2) ⋈ … ⋈ R_m)` in schema order.
pub fn normalize_plan(plan: &Plan, query: &JoinQuery) -> Plan {
    query
        .relations()
        .iter()
        .fold(plan.clone(), |acc, r| Plan::join(acc, Plan::leaf(r.name.clone())))
}

/// Child-index paths of all projection nodes, in post-order.
pub fn projection_paths(plan: &Plan) -> Vec<Vec<usize>> {
    fn walk(plan: &Plan, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for (i, child) in plan.children().into_iter().enumerate() {
            path.push(i);
            walk(child, path, out);
            path.pop();
        }
        if matches!(plan, Plan::Project(..)) {
            out.push(path.clone());
        }
    }
    let mut out = Vec::new();
    walk(plan, &mut Vec::new(), &mut out);
    out
}

pub fn node_at<'p>(plan: &'p Plan, path: &[usize]) -> Option<&'p Plan> {
    match path.split_first() {
        None => Some(plan),
        Some((&i, rest)) => plan.children().get(i).and_then(|c| node_at(c, rest)),
    }
}

fn replace_at(plan: &Plan, path: &[usize], node: Plan) -> Plan {
    let Some((&i, rest)) = path.split_first() else {
        return node;
    };
    match plan {
        Plan::Join(l, r) if i == 0 => Plan::join(replace_at(l, rest, node), (**r).clone()),
        Plan::Join(l, r) => Plan::join((**l).clone(), replace_at(r, rest, node)),
        Plan::Project(keep, child) => Plan::Project(keep.clone(), Box::new(replace_at(child, rest, node))),
        _ => unreachable!("path descends into a leaf"),
    }
}

/// Atoms of a projection-free plan as `(attributes, weight)`; dummies weigh 0.
fn atoms_of(plan: &Plan, query: &JoinQuery, model: &ProbabilityModel) -> Result<Vec<(AttrSet, Rational)>> {
    let mut out = Vec::new();
    fn walk(plan: &Plan, query: &JoinQuery, model: &ProbabilityModel, out: &mut Vec<(AttrSet, Rational)>) -> Result<()> {
        match plan {
            Plan::Leaf(name) => {
                let i = query
                    .relation_index(name)
                    .ok_or_else(|| Error::domain(format!("unknown relation `{name}`")))?;
                out.push((query.relation(i).attr_set(), model.weights[i].clone()));
            }
            Plan::Dummy(a) => out.push((query.attr_set(&[a])?, Rational::zero())),
            Plan::Unit => {}
            Plan::Join(l, r) => {
                walk(l, query, model, out)?;
                walk(r, query, model, out)?;
            }
            Plan::Project(..) => return Err(Error::Internal("projection below the selected projection".into())),
        }
        Ok(())
    }
    walk(plan, query, model, &mut out)?;
    Ok(out)
}

fn atom_attrs(plan: &Plan, query: &JoinQuery) -> Option<AttrSet> {
    match plan {
        Plan::Leaf(name) => query.relation_index(name).map(|i| query.relation(i).attr_set()),
        Plan::Dummy(a) => query.attr_index(a).map(AttrSet::singleton),
        _ => None,
    }
}

/// Replaces atoms not inside `a_star` with the unit relation.
fn drop_outside(plan: &Plan, query: &JoinQuery, a_star: AttrSet, removed: &mut Vec<String>) -> Plan {
    match plan {
        Plan::Join(l, r) => Plan::join(
            drop_outside(l, query, a_star, removed),
            drop_outside(r, query, a_star, removed),
        ),
        Plan::Unit => Plan::Unit,
        atom => match atom_attrs(atom, query) {
            Some(attrs) if attrs.is_subset(a_star) => atom.clone(),
            _ => {
                removed.push(atom.to_string());
                Plan::Unit
            }
        },
    }
}

/// Rewrites the projection at `path` into `π_{A*}(φ₀')`, where `φ₀'` is its
/// child with every atom outside `A*` replaced by the unit relation and a
/// dummy joined in for every attribute of `A*`. Returns the new plan and
/// the removed atoms.
pub fn widen_projection(plan: &Plan, query: &JoinQuery, path: &[usize], a_star: AttrSet) -> Result<(Plan, Vec<String>)> {
    let Some(Plan::Project(keep, child)) = node_at(plan, path) else {
        return Err(Error::domain("path does not address a projection"));
    };
    if child.projection_count() > 0 {
        return Err(Error::domain("projection child is not projection-free"));
    }
    if !query.attr_set(keep)?.is_subset(a_star) {
        return Err(Error::domain("widened target must contain the projection target"));
    }
    let mut removed = Vec::new();
    let reduced = drop_outside(child, query, a_star, &mut removed);
    let widened = query
        .attr_names(a_star)
        .into_iter()
        .fold(reduced, |acc, a| Plan::join(acc, Plan::Dummy(a)));
    let node = Plan::project(query.attr_names(a_star), widened);
    Ok((replace_at(plan, path, node), removed))
}

/// One elimination step.
#[derive(Clone, Debug)]
pub struct EliminationStep {
    pub target: Vec<String>,
    pub a_star: Vec<String>,
    pub removed: Vec<String>,
    pub plan: Plan,
}

/// Eliminates the first projection in post-order (the lowest-leftmost one
/// over a projection-free child).
pub fn eliminate_once(plan: &Plan, query: &JoinQuery, model: &ProbabilityModel) -> Result<EliminationStep> {
    let path = projection_paths(plan)
        .into_iter()
        .next()
        .ok_or_else(|| Error::domain("plan has no projection"))?;
    let Some(Plan::Project(keep, child)) = node_at(plan, &path) else {
        unreachable!("projection path");
    };
    let ctx = ClosureContext::new(query.n(), model.big_n, atoms_of(child, query, model)?)?;
    let target = query.attr_set(keep)?;
    let a_star = closure(&ctx, target)?.a_star;
    let (widened, removed) = widen_projection(plan, query, &path, a_star)?;
    let Some(Plan::Project(_, inner)) = node_at(&widened, &path) else {
        unreachable!("widened projection");
    };
    if query.attr_set(&inner.output_attributes(query)?)? != a_star {
        return Err(Error::Internal("widened projection is not the identity".into()));
    }
    let plan = replace_at(&widened, &path, (**inner).clone());
    Ok(EliminationStep {
        target: keep.clone(),
        a_star: query.attr_names(a_star),
        removed,
        plan,
    })
}

/// Removes unit and dummy atoms; `None` when nothing else remains.
pub fn strip_auxiliary(plan: &Plan) -> Option<Plan> {
    match plan {
        Plan::Unit | Plan::Dummy(_) => None,
        Plan::Leaf(_) => Some(plan.clone()),
        Plan::Join(l, r) => match (strip_auxiliary(l), strip_auxiliary(r)) {
            (Some(a), Some(b)) => Some(Plan::join(a, b)),
            (a, b) => a.or(b),
        },
        Plan::Project(keep, child) => strip_auxiliary(child).map(|c| Plan::Project(keep.clone(), Box::new(c))),
    }
}

/// Undoes the normalization wrapper of a projection-free plan, keeping a
/// wrapper join only when the core no longer mentions its relation.
fn strip_wrapper(plan: Plan, query: &JoinQuery) -> Result<Plan> {
    let mut current = plan;
    let mut peeled = 0;
    for r in query.relations().iter().rev() {
        match current {
            Plan::Join(l, right) if matches!(&*right, Plan::Leaf(name) if *name == r.name) => {
                current = *l;
                peeled += 1;
            }
            Plan::Leaf(ref name) if *name == r.name && peeled == query.m() - 1 => {
                // The core vanished entirely.
                return Ok(Plan::left_deep(query.relations().iter().map(|r| Plan::leaf(r.name.clone()))).unwrap());
            }
            _ => return Err(Error::Internal("normalization wrapper was not preserved".into())),
        }
    }
    let core = current;
    Ok(query
        .relations()
        .iter()
        .filter(|r| !core.contains_leaf(&r.name))
        .fold(core.clone(), |acc, r| Plan::join(acc, Plan::leaf(r.name.clone()))))
}

#[derive(Clone, Debug)]
pub struct Deprojection {
    pub plan: Plan,
    pub steps: Vec<EliminationStep>,
    pub initial_projections: usize,
}

impl Deprojection {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

/// Turns a join-project plan for `query` into a join plan tailored to the
/// model's `N`.
pub fn deproject(plan: &Plan, query: &JoinQuery, model: &ProbabilityModel) -> Result<Deprojection> {
    plan.validate(query)?;
    if model.log2_n().map_or(true, |k| k == 0) {
        return Err(Error::domain(format!("N = {} is not a power of two ≥ 2", model.big_n)));
    }
    let initial_projections = plan.projection_count();
    let mut current = normalize_plan(plan, query);
    let mut steps = Vec::new();
    while current.projection_count() > 0 {
        if steps.len() >= initial_projections {
            return Err(Error::Internal("elimination did not reduce the projection count".into()));
        }
        let step = eliminate_once(&current, query, model)?;
        current = step.plan.clone();
        steps.push(step);
    }
    let stripped = strip_auxiliary(&current).ok_or_else(|| Error::Internal("plan reduced to the unit relation".into()))?;
    let plan = strip_wrapper(stripped, query)?;
    if !plan.is_join_plan() {
        return Err(Error::Internal("result still contains projections".into()));
    }
    Ok(Deprojection {
        plan,
        steps,
        initial_projections,
    })
}

/// Monte-Carlo comparison of the largest expected subplan cardinality.
#[derive(Clone, Debug)]
pub struct InflationReport {
    pub trials: usize,
    pub max_mean_original: f64,
    pub max_mean_rewritten: f64,
    /// Post-order index of the subplan attaining each maximum.
    pub argmax_original: usize,
    pub argmax_rewritten: usize,
    pub ratio: f64,
    /// Approximate 95% interval for the ratio.
    pub ci_low: f64,
    pub ci_high: f64,
}

struct NodeStats {
    mean: Vec<f64>,
    std_err: Vec<f64>,
}

fn node_stats(samples: &[Vec<usize>]) -> NodeStats {
    let trials = samples.len() as f64;
    let nodes = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; nodes];
    let mut std_err = vec![0.0; nodes];
    for j in 0..nodes {
        let m = samples.iter().map(|s| s[j] as f64).sum::<f64>() / trials;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s[j] as f64 - m).powi(2)).sum::<f64>() / (trials - 1.0)
        } else {
            0.0
        };
        mean[j] = m;
        std_err[j] = (var / trials).sqrt();
    }
    NodeStats { mean, std_err }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Samples `trials` databases (trial `t` uses seed `seed + t`) and compares
/// `max_ψ mean|ψ(D)|` between two plans. The ratio is 1 when both maxima
/// are below one tuple.
pub fn inflation_report(
    original: &Plan,
    rewritten: &Plan,
    query: &JoinQuery,
    model: &ProbabilityModel,
    trials: usize,
    seed: u64,
) -> Result<InflationReport> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let options = EvalOptions {
        dummy_domain: Some(model.big_n),
        ..EvalOptions::default()
    };
    let cardinalities = |plan: &Plan, db: &Instance| -> Result<Vec<usize>> {
        let (_, trace) = evaluate_with(plan, db, &options)?;
        Ok(trace.entries.iter().map(|e| e.cardinality).collect())
    };
    let samples: Vec<(Vec<usize>, Vec<usize>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let db = sample_instance(query, model, seed.wrapping_add(t))?;
            Ok((cardinalities(original, &db)?, cardinalities(rewritten, &db)?))
        })
        .collect::<Result<_>>()?;
    let (a, b): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    let (sa, sb) = (node_stats(&a), node_stats(&b));
    let (ia, ib) = (argmax(&sa.mean), argmax(&sb.mean));
    let (ma, mb) = (sa.mean[ia], sb.mean[ib]);
    let (ratio, ci_low, ci_high) = if ma < 1.0 && mb < 1.0 {
        (1.0, 1.0, 1.0)
    } else if ma == 0.0 {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        let ratio = mb / ma;
        let rel = ((sa.std_err[ia] / ma).powi(2) + (sb.std_err[ib] / mb).powi(2)).sqrt();
        let half = 1.96 * ratio * rel;
        (ratio, (ratio - half).max(0.0), ratio + half)
    };
    Ok(InflationReport {
        trials,
        max_mean_original: ma,
        max_mean_rewritten: mb,
        argmax_original: ia,
        argmax_rewritten: ib,
        ratio,
        ci_low,
        ci_high,
    })
}

/// Counts, over sampled databases, the `A*`-tuples of `⋈_{R ∈ S[A*]} R(D)`
/// (padded with `{0..N-1}` on attributes no such relation covers) and how
/// many of them lie in `π_{A*}(⋈_{R ∈ S} R(D))`. Returns
/// `(extending, total)`.
pub fn extension_counts(
    query: &JoinQuery,
    model: &ProbabilityModel,
    s: &[usize],
    a_star: AttrSet,
    trials: usize,
    seed: u64,
) -> Result<(u64, u64)> {
    let dummies = || query.attr_names(a_star).into_iter().map(Plan::Dummy);
    let inside: Vec<Plan> = s
        .iter()
        .filter(|&&i| query.relation(i).attr_set().is_subset(a_star))
        .map(|&i| Plan::leaf(query.relation(i).name.clone()))
        .chain(dummies())
        .collect();
    let all: Vec<Plan> = s
        .iter()
        .map(|&i| Plan::leaf(query.relation(i).name.clone()))
        .chain(dummies())
        .collect();
    let names = query.attr_names(a_star);
    let restricted = Plan::left_deep(inside).unwrap_or(Plan::Unit);
    let extended = Plan::project(names.clone(), Plan::left_deep(all).unwrap_or(Plan::Unit));
    let options = EvalOptions {
        dummy_domain: Some(model.big_n),
        ..EvalOptions::default()
    };
    let counts: Vec<(u64, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let db = sample_instance(query, model, seed.wrapping_add(t))?;
            let base: Relation = evaluate_with(&restricted, &db, &options)?.0.reordered(&names)?;
            let ext: Relation = evaluate_with(&extended, &db, &options)?.0.reordered(&names)?;
            let hits = base.tuples().filter(|t| ext.contains(t)).count() as u64;
            Ok((hits, base.len() as u64))
        })
        .collect::<Result<_>>()?;
    Ok(counts.into_iter().fold((0, 0), |(h, n), (a, b)| (h + a, n + b)))
}
