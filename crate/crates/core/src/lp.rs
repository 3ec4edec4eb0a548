//! Exact fractional edge covers.
//!
//! The covering LP `min Σ c_R x_R  s.t.  Σ_{R ∋ a} x_R ≥ 1, x ≥ 0` is solved
//! through its dual packing LP `max Σ y_a  s.t.  Σ_{a ∈ R} y_a ≤ c_R, y ≥ 0`,
//! whose slack basis is feasible from the start (costs are non-negative).
//! The primal cover is read off the final tableau as the reduced costs of the
//! slack columns, so complementary slackness holds exactly.

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::query::{AttrSet, JoinQuery};
use crate::rational::{int, Rational};

/// Largest schema accepted by [`min_edge_cover`].
pub const MAX_EXHAUSTIVE_RELATIONS: usize = 20;

/// The covering LP for a query with per-relation costs.
#[derive(Clone, Debug)]
pub struct CoverLp<'q> {
    pub query: &'q JoinQuery,
    pub costs: Vec<Rational>,
}

impl<'q> CoverLp<'q> {
    /// Unit costs: the LP whose optimum is `ρ*(Q)`.
    pub fn unit(query: &'q JoinQuery) -> Self {
        CoverLp {
            query,
            costs: vec![Rational::one(); query.m()],
        }
    }

    pub fn with_costs(query: &'q JoinQuery, costs: Vec<Rational>) -> Result<Self> {
        if costs.len() != query.m() {
            return Err(Error::domain(format!(
                "expected {} costs, got {}",
                query.m(),
                costs.len()
            )));
        }
        if costs.iter().any(Signed::is_negative) {
            return Err(Error::domain("cover costs must be non-negative"));
        }
        Ok(CoverLp { query, costs })
    }

    fn has_unit_costs(&self) -> bool {
        self.costs.iter().all(One::is_one)
    }
}

/// Optimal primal cover `x` (by relation index) and dual packing `y`
/// (by attribute index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverSolution {
    pub x: Vec<Rational>,
    pub y: Vec<Rational>,
    pub objective: Rational,
    /// Set when the LP had unit costs.
    pub rho_star: Option<Rational>,
    pub pivots: usize,
}

impl CoverSolution {
    pub fn x_of(&self, query: &JoinQuery, relation: &str) -> Option<&Rational> {
        query.relation_index(relation).map(|i| &self.x[i])
    }

    pub fn y_of(&self, query: &JoinQuery, attribute: &str) -> Option<&Rational> {
        query.attr_index(attribute).map(|i| &self.y[i])
    }
}

/// A set of relations whose attributes jointly cover the universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeCover {
    /// Relation indices, ascending.
    pub relations: Vec<usize>,
}

impl EdgeCover {
    pub fn size(&self) -> usize {
        self.relations.len()
    }

    pub fn names<'a>(&self, query: &'a JoinQuery) -> Vec<&'a str> {
        self.relations
            .iter()
            .map(|&r| query.relation(r).name.as_str())
            .collect()
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    reduced: Vec<Rational>,
    value: Rational,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            *v /= &p;
        }
        self.rhs[row] /= &p;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row].clone();
        for r in 0..self.rows.len() {
            if r == row || self.rows[r][col].is_zero() {
                continue;
            }
            let factor = self.rows[r][col].clone();
            for (v, pv) in self.rows[r].iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &factor * pv;
                }
            }
            self.rhs[r] -= &factor * &pivot_rhs;
        }
        if !self.reduced[col].is_zero() {
            let factor = self.reduced[col].clone();
            for (v, pv) in self.reduced.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &factor * pv;
                }
            }
            self.value -= &factor * &pivot_rhs;
        }
        self.basis[row] = col;
    }
}

/// Solves the covering LP and its dual exactly with Bland's rule.
pub fn solve_cover_lp(lp: &CoverLp<'_>) -> Result<CoverSolution> {
    let query = lp.query;
    let (n, m) = (query.n(), query.m());
    if !query.isolated_attributes().is_empty() {
        return Err(Error::domain(
            "every attribute must occur in some relation for a cover to exist",
        ));
    }

    let width = n + m;
    let mut rows = vec![vec![Rational::zero(); width]; m];
    for (r, rel) in query.relations().iter().enumerate() {
        for &a in &rel.attributes {
            rows[r][a] = Rational::one();
        }
        rows[r][n + r] = Rational::one();
    }
    let mut reduced = vec![Rational::zero(); width];
    for v in reduced.iter_mut().take(n) {
        *v = -Rational::one();
    }
    let mut tableau = Tableau {
        rows,
        rhs: lp.costs.clone(),
        basis: (n..n + m).collect(),
        reduced,
        value: Rational::zero(),
    };

    let mut pivots = 0;
    // Bland's rule: lowest-index improving column, lowest-index basic variable
    // among tied ratios.
    while let Some(col) = tableau.reduced.iter().position(Signed::is_negative) {
        let mut best: Option<(usize, Rational)> = None;
        for r in 0..m {
            let coeff = &tableau.rows[r][col];
            if !coeff.is_positive() {
                continue;
            }
            let ratio = &tableau.rhs[r] / coeff;
            let better = match &best {
                None => true,
                Some((br, bratio)) => {
                    ratio < *bratio || (ratio == *bratio && tableau.basis[r] < tableau.basis[*br])
                }
            };
            if better {
                best = Some((r, ratio));
            }
        }
        let Some((row, _)) = best else {
            return Err(Error::Internal("packing LP reported unbounded".into()));
        };
        tableau.pivot(row, col);
        pivots += 1;
    }

    let mut y = vec![Rational::zero(); n];
    for (r, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            y[b] = tableau.rhs[r].clone();
        }
    }
    let x: Vec<Rational> = tableau.reduced[n..].to_vec();
    let objective = tableau.value.clone();
    let rho_star = lp.has_unit_costs().then(|| objective.clone());
    Ok(CoverSolution {
        x,
        y,
        objective,
        rho_star,
        pivots,
    })
}

/// `ρ*(Q)`.
pub fn rho_star(query: &JoinQuery) -> Result<Rational> {
    Ok(solve_cover_lp(&CoverLp::unit(query))?.objective)
}

/// Whether `x` (by relation index) is a fractional edge cover of `query`.
pub fn is_fractional_cover(query: &JoinQuery, x: &[Rational]) -> bool {
    if x.len() != query.m() || x.iter().any(Signed::is_negative) {
        return false;
    }
    (0..query.n()).all(|a| {
        let load: Rational = query
            .relations()
            .iter()
            .zip(x)
            .filter(|(r, _)| r.attr_set().contains(a))
            .map(|(_, v)| v.clone())
            .sum();
        load >= Rational::one()
    })
}

/// True iff every relation with `x_R > 0` has a tight dual constraint.
/// Infeasible input is a domain error.
pub fn check_complementary_slackness(lp: &CoverLp<'_>, sol: &CoverSolution) -> Result<bool> {
    let query = lp.query;
    if !is_fractional_cover(query, &sol.x) {
        return Err(Error::domain("x is not a feasible fractional edge cover"));
    }
    if sol.y.len() != query.n() || sol.y.iter().any(Signed::is_negative) {
        return Err(Error::domain("y is not a feasible packing"));
    }
    let mut tight = true;
    for (r, rel) in query.relations().iter().enumerate() {
        let load: Rational = rel.attributes.iter().map(|&a| sol.y[a].clone()).sum();
        if load > lp.costs[r] {
            return Err(Error::domain(format!(
                "y violates the packing constraint of `{}`",
                rel.name
            )));
        }
        if sol.x[r].is_positive() && load != lp.costs[r] {
            tight = false;
        }
    }
    Ok(tight)
}

fn covers(query: &JoinQuery, relations: &[usize]) -> bool {
    relations
        .iter()
        .fold(AttrSet::EMPTY, |acc, &r| acc.union(query.relation(r).attr_set()))
        == query.universe()
}

/// Minimum-cardinality edge cover by exhaustive search; among minimum covers
/// the lexicographically first (in relation order) is returned.
pub fn min_edge_cover(query: &JoinQuery) -> Result<EdgeCover> {
    let m = query.m();
    if m > MAX_EXHAUSTIVE_RELATIONS {
        return Err(Error::Capability(format!(
            "exhaustive edge cover supports at most {MAX_EXHAUSTIVE_RELATIONS} relations (got {m}); use greedy_edge_cover"
        )));
    }
    if !query.isolated_attributes().is_empty() {
        return Err(Error::domain("query has attributes outside every relation"));
    }
    for k in 1..=m {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            if covers(query, &combo) {
                return Ok(EdgeCover { relations: combo });
            }
            if !next_combination(&mut combo, m) {
                break;
            }
        }
    }
    Err(Error::Internal("no edge cover found".into()))
}

/// Advances `combo` to the next k-subset of `0..m` in lexicographic order.
pub(crate) fn next_combination(combo: &mut [usize], m: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < m - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Greedy set cover: repeatedly take the relation covering the most
/// uncovered attributes (earliest relation on ties).
pub fn greedy_edge_cover(query: &JoinQuery) -> Result<EdgeCover> {
    if !query.isolated_attributes().is_empty() {
        return Err(Error::domain("query has attributes outside every relation"));
    }
    let mut uncovered = query.universe();
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let (best, gain) = query
            .relations()
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.attr_set().intersect(uncovered).len()))
            .fold((0, 0), |acc, cand| if cand.1 > acc.1 { cand } else { acc });
        debug_assert!(gain > 0);
        chosen.push(best);
        uncovered = uncovered.minus(query.relation(best).attr_set());
    }
    chosen.sort_unstable();
    Ok(EdgeCover { relations: chosen })
}

/// `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: usize) -> Rational {
    (1..=k as i64).map(|i| Rational::new(1.into(), i.into())).sum()
}

/// Cost vector `log₂ N_R` when every size is a power of two.
pub fn exact_log_costs(sizes: &[u64]) -> Option<Vec<Rational>> {
    sizes
        .iter()
        .map(|&s| crate::rational::exact_log2(s).map(|k| int(k as i64)))
        .collect()
}
