//! Random databases `D(N, p)` with `p_R = 2^{-w_R}`, maximum density and
//! concentration of `|Q(D)|`.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{evaluate_with, EvalOptions, Instance, Relation, DEFAULT_TUPLE_BUDGET};
use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::plan::Plan;
use crate::query::{strip_comment, AttrSet, JoinQuery};
use crate::rational::{common_denominator, exact_log2, fmt_rational, int, parse_rational, to_f64, Rational};

/// Largest attribute count for subset scans.
pub const MAX_SCAN_ATTRIBUTES: usize = 22;

/// Weights `w_R ≥ 0` per relation (schema order) and the domain size `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityModel {
    pub weights: Vec<Rational>,
    pub big_n: u64,
}

impl ProbabilityModel {
    pub fn new(query: &JoinQuery, weights: Vec<Rational>, big_n: u64) -> Result<Self> {
        if weights.len() != query.m() {
            return Err(Error::domain(format!(
                "expected {} weights, got {}",
                query.m(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::domain("weights must be non-negative"));
        }
        if big_n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        Ok(ProbabilityModel { weights, big_n })
    }

    pub fn uniform(query: &JoinQuery, weight: Rational, big_n: u64) -> Result<Self> {
        Self::new(query, vec![weight; query.m()], big_n)
    }

    /// `p_R = 2^{-w_R}` as a float.
    pub fn probability(&self, relation: usize) -> f64 {
        (-to_f64(&self.weights[relation])).exp2()
    }

    pub fn log2_n(&self) -> Option<u32> {
        exact_log2(self.big_n)
    }

    pub fn log2_n_f64(&self) -> f64 {
        (self.big_n as f64).log2()
    }

    pub fn to_text(&self, query: &JoinQuery) -> String {
        let mut out = format!("N {}\n", self.big_n);
        for (r, w) in query.relations().iter().zip(&self.weights) {
            out.push_str(&format!("weight {} {}\n", r.name, fmt_rational(w)));
        }
        out
    }
}

/// Reads `weight <rel> <p>/<q>` lines and one `N <int>` line; unlisted
/// relations get weight 1.
pub fn parse_model(source_name: &str, text: &str, query: &JoinQuery) -> Result<ProbabilityModel> {
    let mut weights: Vec<Option<Rational>> = vec![None; query.m()];
    let mut big_n = None;
    for (lineno, line) in text.lines().enumerate() {
        let err = |msg: String| Error::parse(source_name, lineno + 1, msg);
        let words: Vec<&str> = strip_comment(line).split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["N", value] => {
                if big_n.is_some() {
                    return Err(err("duplicate `N` line".into()));
                }
                let v: u64 = value
                    .parse()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| err(format!("invalid domain size `{value}`")))?;
                big_n = Some(v);
            }
            ["weight", rel, value] => {
                let i = query
                    .relation_index(rel)
                    .ok_or_else(|| err(format!("unknown relation `{rel}`")))?;
                let w = parse_rational(value)
                    .filter(|w| !w.is_negative())
                    .ok_or_else(|| err(format!("invalid weight `{value}`")))?;
                if weights[i].replace(w).is_some() {
                    return Err(err(format!("duplicate weight for `{rel}`")));
                }
            }
            _ => return Err(err("expected `N <int>` or `weight <rel> <p/q>`".into())),
        }
    }
    let big_n = big_n.ok_or_else(|| Error::parse(source_name, text.lines().count().max(1), "missing `N` line"))?;
    let weights = weights.into_iter().map(|w| w.unwrap_or_else(|| int(1))).collect();
    ProbabilityModel::new(query, weights, big_n)
}

/// `2^e` where `e` may be exact.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerOfTwo {
    pub log2_exact: Option<Rational>,
    pub log2: f64,
    pub value: f64,
}

impl PowerOfTwo {
    fn from_log2(log2_exact: Option<Rational>, log2: f64) -> Self {
        PowerOfTwo {
            log2_exact,
            log2,
            value: log2.exp2(),
        }
    }
}

/// `E|Q(D)| = N^n Π p_R = 2^{n log₂N − Σ w_R}`.
pub fn expected_answer_size(query: &JoinQuery, model: &ProbabilityModel) -> PowerOfTwo {
    let total: Rational = model.weights.iter().sum();
    let n = query.n() as i64;
    match model.log2_n() {
        Some(k) => {
            let e = int(n * k as i64) - total;
            let f = to_f64(&e);
            PowerOfTwo::from_log2(Some(e), f)
        }
        None => PowerOfTwo::from_log2(None, n as f64 * model.log2_n_f64() - to_f64(&total)),
    }
}

/// `δ(Q[B], w)`: total weight of relations inside `B`, divided by `|B|`.
pub fn density(query: &JoinQuery, weights: &[Rational], b: AttrSet) -> Rational {
    if b.is_empty() {
        return Rational::zero();
    }
    let inside: Rational = query
        .relations()
        .iter()
        .zip(weights)
        .filter(|(r, _)| r.attr_set().is_subset(b))
        .map(|(_, w)| w.clone())
        .sum();
    inside / int(b.len() as i64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub best: AttrSet,
    pub max_density: Rational,
    /// Every non-empty subset with its density, for small `n`.
    pub densities: Option<Vec<(AttrSet, Rational)>>,
}

/// `true` when `a` should replace `b` as witness at equal density.
fn preferred(a: AttrSet, b: AttrSet) -> bool {
    if a.len() != b.len() {
        return a.len() > b.len();
    }
    a.iter().lt(b.iter())
}

/// `Δ(Q, w)` by scanning all `2^n − 1` non-empty subsets.
pub fn max_density_bruteforce(query: &JoinQuery, weights: &[Rational]) -> Result<DensityReport> {
    let n = query.n();
    if n > MAX_SCAN_ATTRIBUTES {
        return Err(Error::Capability(format!(
            "{n} attributes exceed the subset-scan limit {MAX_SCAN_ATTRIBUTES}; use the flow method"
        )));
    }
    let keep_all = n <= 10;
    let mut densities = Vec::new();
    let mut best = AttrSet::full(n);
    let mut max_density = density(query, weights, best);
    for mask in 1..(1u64 << n) {
        let b = AttrSet(mask);
        let d = density(query, weights, b);
        if d > max_density || (d == max_density && preferred(b, best)) {
            best = b;
            max_density = d.clone();
        }
        if keep_all {
            densities.push((b, d));
        }
    }
    Ok(DensityReport {
        best,
        max_density,
        densities: keep_all.then_some(densities),
    })
}

fn density_network(query: &JoinQuery, weights: &[Rational], delta: &Rational) -> FlowNetwork {
    let (n, m) = (query.n(), query.m());
    let total: Rational = weights.iter().sum();
    let infinite = &total + delta * int(n as i64) + int(1);
    let sink = n + m + 1;
    let mut g = FlowNetwork::new(n + m + 2);
    for a in 0..n {
        g.add_arc(0, 1 + a, delta.clone());
    }
    for (i, r) in query.relations().iter().enumerate() {
        for &a in &r.attributes {
            g.add_arc(1 + a, 1 + n + i, infinite.clone());
        }
        g.add_arc(1 + n + i, sink, weights[i].clone());
    }
    g
}

/// Minimum cut `γ(Q, w, δ)` and the attributes whose source arc it cuts
/// (the largest such set among minimum cuts).
pub fn min_cut(query: &JoinQuery, weights: &[Rational], delta: &Rational) -> (Rational, AttrSet) {
    assert!(!delta.is_negative(), "negative δ");
    let n = query.n();
    let flow = density_network(query, weights, delta).max_flow(0, n + query.m() + 1);
    let cut = AttrSet::from_indices((0..n).filter(|&a| !flow.source_side[1 + a]));
    (flow.value, cut)
}

pub fn min_cut_capacity(query: &JoinQuery, weights: &[Rational], delta: &Rational) -> Rational {
    min_cut(query, weights, delta).0
}

/// `Δ(Q, w)` by binary search on `δ` with the cut test `γ < Σ w_R ⇔ Δ > δ`,
/// then snapping to the unique fraction `k / (b d)` (`b ≤ n`) in the
/// final interval.
pub fn max_density_flow(query: &JoinQuery, weights: &[Rational]) -> Result<DensityReport> {
    let n = query.n();
    if weights.len() != query.m() || weights.iter().any(|w| w.is_negative()) {
        return Err(Error::domain("weights must be one non-negative value per relation"));
    }
    let total: Rational = weights.iter().sum();
    if total.is_zero() {
        return Ok(DensityReport {
            best: AttrSet::full(n),
            max_density: Rational::zero(),
            densities: None,
        });
    }
    let d = Rational::from_integer(common_denominator(weights));
    let nd = int(n as i64) * &d;
    let width = (&nd * &nd).recip();
    // Invariant: lo < Δ ≤ hi.
    let mut lo = Rational::zero();
    let mut hi = total.clone();
    while &hi - &lo >= width {
        let mid = (&lo + &hi) / int(2);
        if min_cut_capacity(query, weights, &mid) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut snapped: Option<Rational> = None;
    for b in 1..=n {
        let scale = int(b as i64) * &d;
        let candidate = (&hi * &scale).floor() / &scale;
        if candidate > lo && candidate <= hi {
            match &snapped {
                Some(s) if *s != candidate => {
                    return Err(Error::Internal(format!(
                        "two densities {} and {} in the final search interval",
                        fmt_rational(s),
                        fmt_rational(&candidate)
                    )))
                }
                _ => snapped = Some(candidate),
            }
        }
    }
    let max_density = snapped.ok_or_else(|| Error::Internal("no density in the final search interval".into()))?;
    let probe = (&lo + &max_density) / int(2);
    let (_, best) = min_cut(query, weights, &probe);
    if best.is_empty() || density(query, weights, best) != max_density {
        return Err(Error::Internal("min cut does not witness the maximum density".into()));
    }
    Ok(DensityReport {
        best,
        max_density,
        densities: None,
    })
}

/// `E[X]² (2^n − 1) 2^{Δ − log₂N}`, or `None` when `Δ > log₂N`.
pub fn variance_upper_bound(query: &JoinQuery, model: &ProbabilityModel, max_density: &Rational) -> Option<PowerOfTwo> {
    let applicable = match model.log2_n() {
        Some(k) => *max_density <= int(k as i64),
        None => to_f64(max_density) <= model.log2_n_f64(),
    };
    if !applicable {
        return None;
    }
    let e = expected_answer_size(query, model);
    let n = query.n() as u32;
    let factor = ((1u128 << n) - 1) as f64;
    let log2 = 2.0 * e.log2 + factor.log2() + to_f64(max_density) - model.log2_n_f64();
    Some(PowerOfTwo::from_log2(None, log2))
}

/// Number of candidate tuples `N^k` for arity `k`.
fn grid_count(big_n: u64, arity: usize) -> u128 {
    (0..arity).try_fold(1u128, |acc, _| acc.checked_mul(big_n as u128)).unwrap_or(u128::MAX)
}

/// Draws `D` from `D(N, p)`: each tuple of `{0..N-1}^{A_R}` enters `R(D)`
/// independently with probability `p_R`. Relation `i` draws from stream `i`
/// of a ChaCha8 generator seeded with `seed`.
pub fn sample_instance(query: &JoinQuery, model: &ProbabilityModel, seed: u64) -> Result<Instance> {
    sample_instance_with_budget(query, model, seed, DEFAULT_TUPLE_BUDGET)
}

pub fn sample_instance_with_budget(query: &JoinQuery, model: &ProbabilityModel, seed: u64, budget: u128) -> Result<Instance> {
    let max_arity = query.relations().iter().map(|r| r.arity()).max().unwrap_or(0);
    let scan = grid_count(model.big_n, max_arity);
    if scan > budget {
        return Err(Error::capacity("tuple scan", scan, budget));
    }
    let mut db = Instance::new();
    for (i, r) in query.relations().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let p = model.probability(i);
        let mut rel = Relation::new(query.relation_attr_names(i));
        let mut tuple = vec![0u64; r.arity()];
        for _ in 0..grid_count(model.big_n, r.arity()) {
            if rng.gen::<f64>() < p {
                rel.insert(tuple.clone());
            }
            for pos in (0..tuple.len()).rev() {
                tuple[pos] += 1;
                if tuple[pos] < model.big_n {
                    break;
                }
                tuple[pos] = 0;
            }
        }
        db.insert(r.name.clone(), rel);
    }
    Ok(db)
}

/// Left-deep join of all relations, each next relation sharing an attribute
/// with those before it whenever possible.
pub fn connected_join_plan(query: &JoinQuery) -> Plan {
    let mut remaining: Vec<usize> = (0..query.m()).collect();
    let mut covered = AttrSet::EMPTY;
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let pos = remaining
            .iter()
            .position(|&i| !query.relation(i).attr_set().intersect(covered).is_empty())
            .unwrap_or(0);
        let i = remaining.remove(pos);
        covered = covered.union(query.relation(i).attr_set());
        order.push(Plan::leaf(query.relation(i).name.clone()));
    }
    Plan::left_deep(order).expect("query has relations")
}

pub fn answer_size(query: &JoinQuery, db: &Instance) -> Result<usize> {
    let plan = connected_join_plan(query);
    Ok(evaluate_with(&plan, db, &EvalOptions::default())?.0.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `Δ < log₂N`: every induced subquery expects at least one answer.
    Subcritical,
    Critical,
    /// `Δ > log₂N`: some induced subquery expects fewer than one answer.
    Supercritical,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConcentrationReport {
    pub trials: usize,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub expected: PowerOfTwo,
    pub variance_bound: Option<PowerOfTwo>,
    pub empty_fraction: f64,
    pub max_density: Rational,
    pub log2_n: f64,
    /// `log₂N − Δ`.
    pub gap: f64,
    pub regime: Regime,
}

/// Samples `trials` instances (trial `t` uses seed `seed + t`) and compares
/// `|Q(D)|` with its expectation and variance bound.
pub fn concentration_experiment(
    query: &JoinQuery,
    model: &ProbabilityModel,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let sizes: Vec<usize> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let db = sample_instance(query, model, seed.wrapping_add(t))?;
            answer_size(query, &db)
        })
        .collect::<Result<_>>()?;
    let mean = sizes.iter().map(|&s| s as f64).sum::<f64>() / trials as f64;
    let variance = if trials > 1 {
        sizes.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let max_density = max_density_flow(query, &model.weights)?.max_density;
    let log2_n = model.log2_n_f64();
    let regime = match model.log2_n() {
        Some(k) => match max_density.cmp(&int(k as i64)) {
            std::cmp::Ordering::Less => Regime::Subcritical,
            std::cmp::Ordering::Equal => Regime::Critical,
            std::cmp::Ordering::Greater => Regime::Supercritical,
        },
        None if to_f64(&max_density) < log2_n => Regime::Subcritical,
        None => Regime::Supercritical,
    };
    Ok(ConcentrationReport {
        trials,
        seed,
        empty_fraction: sizes.iter().filter(|&&s| s == 0).count() as f64 / trials as f64,
        sizes,
        mean,
        variance,
        expected: expected_answer_size(query, model),
        variance_bound: variance_upper_bound(query, model, &max_density),
        gap: log2_n - to_f64(&max_density),
        max_density,
        log2_n,
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::oracle_answer;
    use crate::query::parse_query;
    use crate::rational::rat;

    fn triangle() -> JoinQuery {
        parse_query("rel R a b\nrel S b c\nrel T c a").unwrap()
    }

    #[test]
    fn model_parsing() {
        let q = triangle();
        let m = parse_model("m", "N 16\nweight R 3/2\n# c\nweight T 0\n", &q).unwrap();
        assert_eq!(m.big_n, 16);
        assert_eq!(m.weights, vec![rat(3, 2), int(1), int(0)]);
        assert_eq!(parse_model("m", &m.to_text(&q), &q).unwrap(), m);
        for bad in ["weight R 1", "N 4\nN 4", "N 4\nweight X 1", "N 4\nweight R -1", "N 0", "N 4\nw R 1"] {
            assert!(matches!(parse_model("m", bad, &q), Err(Error::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn expectation_examples() {
        let q = triangle();
        let e = expected_answer_size(&q, &ProbabilityModel::uniform(&q, int(1), 64).unwrap());
        assert_eq!(e.log2_exact, Some(int(15)));
        assert_eq!(e.value, 32768.0);
        let e = expected_answer_size(&q, &ProbabilityModel::uniform(&q, int(0), 1).unwrap());
        assert_eq!(e.value, 1.0);
        let e = expected_answer_size(&q, &ProbabilityModel::uniform(&q, int(6), 64).unwrap());
        assert_eq!(e.log2_exact, Some(int(0)));
        let e = expected_answer_size(&q, &ProbabilityModel::uniform(&q, int(1), 10).unwrap());
        assert!(e.log2_exact.is_none());
        assert!((e.value - 125.0).abs() < 1e-9);
    }

    #[test]
    fn brute_force_density() {
        let q = triangle();
        let r = max_density_bruteforce(&q, &[int(1), int(1), int(1)]).unwrap();
        assert_eq!(r.max_density, int(1));
        assert_eq!(r.best, AttrSet::full(3));
        let all = r.densities.unwrap();
        assert_eq!(all.len(), 7);
        assert!(all.iter().filter(|(b, _)| b.len() == 2).all(|(_, d)| *d == rat(1, 2)));

        let single = parse_query("rel R a b").unwrap();
        let r = max_density_bruteforce(&single, &[int(3)]).unwrap();
        assert_eq!(r.max_density, rat(3, 2));
        assert_eq!(r.best, AttrSet::full(2));

        let isolated = parse_query("rel R a b\nrel S b c").unwrap();
        assert_eq!(density(&isolated, &[int(1), int(1)], AttrSet::singleton(0)), int(0));
    }

    #[test]
    fn brute_force_ties() {
        let q = parse_query("rel R a\nrel S b").unwrap();
        let r = max_density_bruteforce(&q, &[int(1), int(1)]).unwrap();
        assert_eq!(r.best, AttrSet::full(2));
        let r = max_density_bruteforce(&q, &[int(0), int(0)]).unwrap();
        assert_eq!(r.best, AttrSet::full(2));
        let q = parse_query("rel R a\nrel S b\nrel T a b c").unwrap();
        let r = max_density_bruteforce(&q, &[int(2), int(2), int(0)]).unwrap();
        assert_eq!(r.max_density, int(2));
        assert_eq!(r.best, AttrSet::from_indices([0, 1]));
    }

    #[test]
    fn cut_examples() {
        let q = triangle();
        let w = [int(1), int(1), int(1)];
        assert_eq!(min_cut_capacity(&q, &w, &rat(1, 2)), rat(3, 2));
        assert_eq!(min_cut_capacity(&q, &w, &int(2)), int(3));
        assert_eq!(min_cut_capacity(&q, &w, &int(100)), int(3));
        let (_, cut) = min_cut(&q, &w, &rat(1, 2));
        assert_eq!(cut, AttrSet::full(3));
    }

    #[test]
    fn flow_density() {
        let q = triangle();
        let r = max_density_flow(&q, &[int(1), int(1), int(1)]).unwrap();
        assert_eq!(r.max_density, int(1));
        assert_eq!(r.best, AttrSet::full(3));
        let single = parse_query("rel R a b").unwrap();
        assert_eq!(max_density_flow(&single, &[int(0)]).unwrap().max_density, int(0));
        assert_eq!(max_density_flow(&single, &[rat(7, 3)]).unwrap().max_density, rat(7, 6));
        let q = parse_query("rel R a\nrel S a b c d\nrel T d").unwrap();
        let w = [rat(5, 4), rat(1, 8), rat(3, 2)];
        assert_eq!(
            max_density_flow(&q, &w).unwrap().max_density,
            max_density_bruteforce(&q, &w).unwrap().max_density
        );
    }

    #[test]
    fn variance_examples() {
        let q = triangle();
        let m = ProbabilityModel::uniform(&q, int(1), 64).unwrap();
        let e = expected_answer_size(&q, &m).value;
        let v = variance_upper_bound(&q, &m, &int(1)).unwrap();
        assert!((v.value / (e * e) - 7.0 / 32.0).abs() < 1e-12);
        let v = variance_upper_bound(&q, &m, &int(6)).unwrap();
        assert!((v.value / (e * e) - 7.0).abs() < 1e-12);
        assert!(variance_upper_bound(&q, &m, &int(7)).is_none());
    }

    #[test]
    fn sampling() {
        let q = triangle();
        let full = ProbabilityModel::uniform(&q, int(0), 5).unwrap();
        let db = sample_instance(&q, &full, 3).unwrap();
        assert!(db.relations.values().all(|r| r.len() == 25));

        let half = ProbabilityModel::uniform(&q, int(1), 8).unwrap();
        let a = sample_instance(&q, &half, 11).unwrap();
        assert_eq!(a, sample_instance(&q, &half, 11).unwrap());
        assert_ne!(a, sample_instance(&q, &half, 12).unwrap());

        let huge = ProbabilityModel::uniform(&q, int(1), 10_000).unwrap();
        assert!(matches!(
            sample_instance_with_budget(&q, &huge, 0, 1_000_000),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn answer_size_matches_oracle() {
        let q = triangle();
        let m = ProbabilityModel::uniform(&q, int(1), 6).unwrap();
        for seed in 0..10 {
            let db = sample_instance(&q, &m, seed).unwrap();
            assert_eq!(answer_size(&q, &db).unwrap(), oracle_answer(&q, &db).unwrap().len());
        }
    }

    #[test]
    fn full_model_concentrates_exactly() {
        let q = triangle();
        let m = ProbabilityModel::uniform(&q, int(0), 4).unwrap();
        let r = concentration_experiment(&q, &m, 5, 0).unwrap();
        assert!(r.sizes.iter().all(|&s| s == 64));
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.regime, Regime::Subcritical);
    }
}
