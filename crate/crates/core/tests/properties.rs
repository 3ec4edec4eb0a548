mod common;

use joinbound::bounds::{
    agm_bound, constrained_worst_instance, graph_to_query, independent_set_instance, worst_case_instance,
};
use joinbound::deproject::{closure, deproject, ClosureContext};
use joinbound::engine::{evaluate, oracle_answer, parse_database};
use joinbound::lp::{check_complementary_slackness, greedy_edge_cover, is_fractional_cover, solve_cover_lp, CoverLp};
use joinbound::plans::{cover_join_plan, enumerate_join_plans, gm_plan};
use joinbound::query::{parse_query, AttrSet};
use joinbound::rational::{int, rat};
use joinbound::stochastic::{density, max_density_bruteforce, max_density_flow, sample_instance, ProbabilityModel};
use joinbound::Rational;
use num_traits::Zero;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_rational(rng: &mut impl Rng) -> Rational {
    rat(rng.gen_range(0..=12), rng.gen_range(1..=6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agm_bound_holds(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 4, 5, 3);
        let db = common::random_instance(&mut rng, &q, 50, 4);
        let sizes: Vec<u64> = q.relations().iter().map(|r| db.get(&r.name).unwrap().len() as u64).collect();
        let answer = oracle_answer(&q, &db).unwrap().len() as f64;
        let optimal = solve_cover_lp(&CoverLp::unit(&q)).unwrap().x;
        let greedy = greedy_edge_cover(&q).unwrap();
        let integral: Vec<Rational> = (0..q.m())
            .map(|i| if greedy.relations.contains(&i) { int(1) } else { int(0) })
            .collect();
        for x in [optimal, integral] {
            let bound = agm_bound(&q, &x, &sizes).unwrap().value;
            prop_assert!(answer <= bound * (1.0 + 1e-6), "{} > {}", answer, bound);
        }
    }

    #[test]
    fn cover_lp_duality(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 6, 7, 4);
        let costs: Vec<Rational> = (0..q.m()).map(|_| random_rational(&mut rng)).collect();
        let lp = CoverLp::with_costs(&q, costs.clone()).unwrap();
        let sol = solve_cover_lp(&lp).unwrap();
        prop_assert!(is_fractional_cover(&q, &sol.x));
        prop_assert!(check_complementary_slackness(&lp, &sol).unwrap());
        let primal: Rational = sol.x.iter().zip(&costs).map(|(x, c)| x * c).sum();
        let dual: Rational = sol.y.iter().sum();
        prop_assert_eq!(&primal, &sol.objective);
        prop_assert_eq!(&dual, &sol.objective);
        for (i, r) in q.relations().iter().enumerate() {
            let load: Rational = r.attributes.iter().map(|&a| sol.y[a].clone()).sum();
            prop_assert!(load <= costs[i]);
        }
    }

    #[test]
    fn worst_case_instances_meet_the_bound(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3, 4, 3);
        let wc = worst_case_instance(&q, 2).unwrap();
        let sizes: Vec<u64> = q.relations().iter().map(|r| wc.instance.get(&r.name).unwrap().len() as u64).collect();
        let bound = agm_bound(&q, &wc.cover.x, &sizes).unwrap().value;
        let answer = oracle_answer(&q, &wc.instance).unwrap().len() as f64;
        prop_assert!((answer - bound).abs() <= 1e-9 * bound, "{} vs {}", answer, bound);
    }

    #[test]
    fn constrained_instances_have_exact_sizes(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3, 4, 3);
        let sizes: Vec<u64> = (0..q.m()).map(|_| rng.gen_range(1..=64)).collect();
        let ci = constrained_worst_instance(&q, &sizes).unwrap();
        for (r, &s) in q.relations().iter().zip(&sizes) {
            prop_assert_eq!(ci.instance.get(&r.name).unwrap().len() as u64, s);
        }
        let answer = oracle_answer(&q, &ci.instance).unwrap().len() as f64;
        prop_assert!(answer >= ci.guaranteed_answer(q.n()) * (1.0 - 1e-9));
        prop_assert!(answer <= ci.bound.bound.value * (1.0 + 1e-9));
    }

    #[test]
    fn text_formats_round_trip(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 5, 6, 4);
        let back = parse_query(&q.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), q.to_text());
        let db = common::random_instance(&mut rng, &q, 10, 6);
        let back = parse_database("db", &db.to_text(&q), &q).unwrap();
        prop_assert_eq!(back, db);
    }

    #[test]
    fn max_density_methods_agree(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 6, 8, 3);
        let w: Vec<Rational> = (0..q.m()).map(|_| random_rational(&mut rng)).collect();
        let brute = max_density_bruteforce(&q, &w).unwrap();
        let flow = max_density_flow(&q, &w).unwrap();
        prop_assert_eq!(&brute.max_density, &flow.max_density);
        prop_assert_eq!(density(&q, &w, brute.best), brute.max_density.clone());
        prop_assert_eq!(density(&q, &w, flow.best), flow.max_density.clone());
        for mask in 1..(1u64 << q.n()) {
            prop_assert!(density(&q, &w, AttrSet(mask)) <= brute.max_density);
        }
    }

    #[test]
    fn f_is_submodular_and_closure_is_extremal(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(0..=5);
        let atoms: Vec<(AttrSet, Rational)> = (0..m)
            .map(|_| (AttrSet(rng.gen_range(1..(1u64 << n))), random_rational(&mut rng)))
            .collect();
        let big_n = 1u64 << rng.gen_range(1..=6);
        let ctx = ClosureContext::new(n, big_n, atoms).unwrap();
        let f: Vec<Rational> = (0..1u64 << n).map(|a| ctx.f_value(AttrSet(a))).collect();
        for a in 0..1usize << n {
            for b in 0..1usize << n {
                prop_assert!(&f[a] + &f[b] >= &f[a | b] + &f[a & b]);
            }
            let c = closure(&ctx, AttrSet(a as u64)).unwrap();
            prop_assert!(AttrSet(a as u64).is_subset(c.a_star));
            for b in (0..1usize << n).filter(|b| b & a == a) {
                prop_assert!(f[b] >= c.f_value);
                if f[b] == c.f_value {
                    prop_assert!(AttrSet(b as u64).is_subset(c.a_star));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn plans_evaluate_to_the_oracle_answer(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 4, 5, 3);
        let db = common::random_instance(&mut rng, &q, 15, 3);
        let expected = oracle_answer(&q, &db).unwrap();
        let mut order = q.attributes().to_vec();
        order.shuffle(&mut rng);
        let join_plans = enumerate_join_plans(&q).unwrap();
        let plans = [
            gm_plan(&q, &order).unwrap(),
            cover_join_plan(&q).unwrap(),
            join_plans.choose(&mut rng).unwrap().clone(),
        ];
        for plan in &plans {
            let (got, trace) = evaluate(plan, &db).unwrap();
            prop_assert!(got.same_set(&expected), "{}", plan);
            prop_assert_eq!(trace.entries.len(), plan.subplans().len());
            prop_assert_eq!(trace.entries.last().unwrap().cardinality, expected.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn deprojection_preserves_answers(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 4, 4, 3);
        let mut order = q.attributes().to_vec();
        order.shuffle(&mut rng);
        let plan = gm_plan(&q, &order).unwrap();
        let grid = [int(0), rat(1, 2), int(1), int(2)];
        let weights = (0..q.m()).map(|_| grid.choose(&mut rng).unwrap().clone()).collect();
        let model = ProbabilityModel::new(&q, weights, [4, 8][rng.gen_range(0..2)]).unwrap();
        let d = deproject(&plan, &q, &model).unwrap();
        prop_assert!(d.plan.is_join_plan());
        prop_assert!(d.iterations() <= plan.projection_count());
        for s in 0..5 {
            let db = sample_instance(&q, &model, seed.wrapping_add(s)).unwrap();
            let (a, _) = evaluate(&plan, &db).unwrap();
            let (b, _) = evaluate(&d.plan, &db).unwrap();
            prop_assert!(a.same_set(&b));
        }
    }

    #[test]
    fn independent_set_witnesses_reach_two_to_the_size(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let k = rng.gen_range(2..=7);
        let g = common::random_graph(&mut rng, k);
        let (q, _) = graph_to_query(&g).unwrap();
        let best = g.maximum_independent_set();
        let db = independent_set_instance(&g, best).unwrap();
        prop_assert!(db.relations.values().all(|r| r.len() == 2));
        prop_assert_eq!(oracle_answer(&q, &db).unwrap().len(), 1usize << best.len());
        for v in 0..g.n() {
            prop_assert!(!g.is_independent(best.union(AttrSet::singleton(v))) || best.contains(v));
        }
    }
}

#[test]
fn closure_context_of_empty_set_is_zero() {
    let ctx = ClosureContext::new(3, 8, vec![]).unwrap();
    assert!(ctx.f_value(AttrSet::EMPTY).is_zero());
}
