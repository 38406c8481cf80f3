use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schemalyze_core::depgraph::transitive_closure;
use schemalyze_core::oracle::{evaluate, random_instance, random_program, soundness_sweep, SweepConfig};
use schemalyze_core::*;

/// Unrestricted rules: several atoms, constants, repeated variables,
/// negation, comparisons, head constants and multi-rule predicates.
fn general_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Program::default();
    let mut preds: Vec<(String, usize)> = Vec::new();
    for i in 1..=rng.gen_range(1..=3) {
        let arity = rng.gen_range(1..=3);
        let name = format!("b{i}");
        p.base_decls.push(BaseDecl {
            name: name.clone(),
            attributes: (1..=arity).map(|a| format!("c{a}")).collect(),
            span: None,
        });
        if arity > 1 && rng.gen_bool(0.5) {
            p.fd_decls.push(FdDecl {
                predicate: name.clone(),
                lhs: BTreeSet::from([1]),
                rhs: arity,
                span: None,
            });
        }
        preds.push((name, arity));
    }
    let pool = ["A", "B", "C", "D"];
    for i in 1..=rng.gen_range(1..=3) {
        let name = format!("d{i}");
        let arity = rng.gen_range(1..=3);
        for _ in 0..rng.gen_range(1..=3) {
            let mut body = Vec::new();
            let mut bound: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let (q, qa) = preds.choose(&mut rng).unwrap().clone();
                let args = (0..qa)
                    .map(|_| {
                        if rng.gen_bool(0.15) {
                            Term::Const(Constant::Int(rng.gen_range(1..=3)))
                        } else {
                            let v = pool.choose(&mut rng).unwrap();
                            if !bound.iter().any(|b| b == v) {
                                bound.push((*v).to_string());
                            }
                            Term::var(v)
                        }
                    })
                    .collect();
                body.push(Atom::new(&q, args));
            }
            if bound.is_empty() {
                continue;
            }
            let mut conds = Vec::new();
            if rng.gen_bool(0.3) {
                let a = bound.choose(&mut rng).unwrap().clone();
                conds.push(Condition::ConstEq(a, Constant::Int(rng.gen_range(1..=3))));
            }
            if rng.gen_bool(0.3) && bound.len() > 1 {
                let mut two = bound.clone();
                two.shuffle(&mut rng);
                conds.push(Condition::VarEq(two[0].clone(), two[1].clone()));
            }
            if rng.gen_bool(0.2) {
                conds.push(Condition::Opaque {
                    left: bound.choose(&mut rng).unwrap().clone(),
                    op: CmpOp::Le,
                    right: Term::Const(Constant::Int(2)),
                });
            }
            let mut head_args = Vec::new();
            for k in 0..arity {
                match rng.gen_range(0..10) {
                    0 => head_args.push(Term::Const(Constant::Int(rng.gen_range(1..=3)))),
                    1 => {
                        let h = format!("H{k}");
                        if rng.gen_bool(0.5) {
                            conds.push(Condition::VarEq(h.clone(), bound.choose(&mut rng).unwrap().clone()));
                        } else {
                            conds.push(Condition::ConstEq(h.clone(), Constant::Int(1)));
                        }
                        head_args.push(Term::Var(h));
                    }
                    _ => head_args.push(Term::var(bound.choose(&mut rng).unwrap())),
                }
            }
            // negation only of lower predicates keeps the program stratified
            if rng.gen_bool(0.3) {
                let (q, qa) = preds.choose(&mut rng).unwrap().clone();
                let args = (0..qa)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            Term::Const(Constant::Int(1))
                        } else {
                            Term::var(bound.choose(&mut rng).unwrap())
                        }
                    })
                    .collect();
                body.push(Atom::new(&q, args).negate());
            }
            // occasional linear recursion
            if rng.gen_bool(0.1) && arity <= bound.len() {
                let vars: Vec<Term> = bound.iter().take(arity).map(|v| Term::var(v)).collect();
                body.push(Atom::new(&name, vars));
            }
            p.rules.push(Rule::new(Atom::new(&name, head_args), body, conds));
        }
        if p.rules.iter().any(|r| r.head.predicate == name) {
            preds.push((name, arity));
        }
    }
    p
}

/// Constants and repeated variables in atoms, each an equality in disguise.
fn implicit_conditions(rule: &Rule) -> usize {
    std::iter::once(&rule.head)
        .chain(&rule.body)
        .map(|a| {
            let mut seen = BTreeSet::new();
            a.args.iter().filter(|t| t.as_var().is_none_or(|v| !seen.insert(v))).count()
        })
        .sum()
}

fn source_derived(vp: &ValidatedProgram) -> Vec<String> {
    vp.derived_predicates().into_iter().map(String::from).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let p = if seed % 2 == 0 { general_program(seed) } else { random_program(seed) };
        let text = render_program(&p);
        let back = parse_program(&text).unwrap();
        prop_assert_eq!(back.without_spans(), p.without_spans());
        prop_assert_eq!(render_program(&back), text);
    }

    #[test]
    fn normalization_preserves_meaning(seed in any::<u64>()) {
        let Ok(vp) = validate(general_program(seed)) else { return Ok(()) };
        let np = normalize(&vp);
        let nvp = np.validated();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &np.rules {
            *counts.entry(r.head.predicate.as_str()).or_default() += 1;
        }
        for r in &np.rules {
            prop_assert_eq!(classify(&r.to_rule(), counts[r.head.predicate.as_str()]), Ok(r.kind), "{}", r);
        }
        let budget: usize = vp.program().rules.iter().map(|r| r.body.len() + r.conditions.len() + implicit_conditions(r)).sum();
        prop_assert!(np.generated.len() <= 2 * budget, "{} generated for budget {}", np.generated.len(), budget);
        for k in 0..3 {
            let edb = random_instance(vp.program(), 6, seed ^ k);
            let a = evaluate(&vp, &edb);
            let b = evaluate(&nvp, &edb);
            for p in source_derived(&vp) {
                prop_assert_eq!(&a[&p], &b[&p], "predicate {}", p);
            }
        }
    }

    #[test]
    fn normal_form_is_stable(seed in any::<u64>()) {
        let Ok(vp) = validate(general_program(seed)) else { return Ok(()) };
        let np = normalize(&vp);
        let again = normalize(&np.validated());
        let edb = random_instance(vp.program(), 6, seed);
        let a = evaluate(&np.validated(), &edb);
        let b = evaluate(&again.validated(), &edb);
        for p in source_derived(&vp) {
            prop_assert_eq!(&a[&p], &b[&p]);
        }
    }

    #[test]
    fn validation_is_idempotent(seed in any::<u64>()) {
        let Ok(vp) = validate(general_program(seed)) else { return Ok(()) };
        let again = validate(vp.program().clone()).unwrap();
        prop_assert_eq!(again.strata(), vp.strata());
        prop_assert_eq!(again.program(), vp.program());
    }

    #[test]
    fn closure_matches_matrix_closure(edges in proptest::collection::btree_set((0u8..20, 0u8..20), 0..50)) {
        let dag: BTreeSet<(String, String)> = edges
            .iter()
            .filter(|(a, b)| a > b)
            .map(|(a, b)| (format!("n{a}"), format!("n{b}")))
            .collect();
        let fast = transitive_closure(&dag);
        let mut reach = [[false; 20]; 20];
        for (a, b) in &edges {
            if a > b {
                reach[*a as usize][*b as usize] = true;
            }
        }
        for k in 0..20 {
            for i in 0..20 {
                for j in 0..20 {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let slow: BTreeSet<(String, String)> = (0..20)
            .flat_map(|i| (0..20).map(move |j| (i, j)))
            .filter(|(i, j)| reach[*i][*j])
            .map(|(i, j)| (format!("n{i}"), format!("n{j}")))
            .collect();
        prop_assert_eq!(&fast, &slow);
        prop_assert_eq!(transitive_closure(&fast), fast.clone());
        let mut more = dag.clone();
        more.insert(("n19".into(), "n18".into()));
        prop_assert!(transitive_closure(&more).is_superset(&fast));
    }

    #[test]
    fn propagation_is_sound(seed in any::<u64>()) {
        let vp = validate(random_program(seed)).unwrap();
        let np = normalize(&vp);
        let mf = extract(&np).unwrap();
        let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
        let config = SweepConfig { trials: 10, size: 6, seed, report_missed: false };
        if let Err(v) = soundness_sweep(&np.validated(), &out, &config) {
            prop_assert!(false, "{}\n{}", v, render_program(&np.to_program()));
        }
    }

    #[test]
    fn general_propagation_is_sound(seed in any::<u64>()) {
        let Ok(vp) = validate(general_program(seed)) else { return Ok(()) };
        let np = normalize(&vp);
        let Ok(mf) = extract(&np) else { return Ok(()) };
        let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
        let config = SweepConfig { trials: 10, size: 6, seed, report_missed: false };
        if let Err(v) = soundness_sweep(&np.validated(), &out, &config) {
            prop_assert!(false, "{}\n{}", v, render_program(&np.to_program()));
        }
    }

    #[test]
    fn more_seeds_never_lose_dependencies(seed in any::<u64>(), drop in any::<u64>()) {
        let vp = validate(random_program(seed)).unwrap();
        let np = normalize(&vp);
        let mf = extract(&np).unwrap();
        let all = fd_seeds(&np);
        let some: BTreeSet<Fd> = all.iter().enumerate().filter(|(i, _)| drop >> (i % 64) & 1 == 0).map(|(_, f)| f.clone()).collect();
        let config = EngineConfig::default();
        let small = saturate(&mf, &some, &config).triples();
        let big = saturate(&mf, &all, &config).triples();
        prop_assert!(small.is_subset(&big));
    }

    #[test]
    fn saturation_is_deterministic(seed in any::<u64>()) {
        let vp = validate(random_program(seed)).unwrap();
        let np = normalize(&vp);
        let mf = extract(&np).unwrap();
        let config = EngineConfig::default();
        let seeds = fd_seeds(&np);
        let mut order = fd::Step::ALL;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = saturate(&mf, &seeds, &config);
        prop_assert_eq!(&a, &fd::saturate_in_order(&mf, &seeds, &config, &order));
        for f in &a.facts {
            prop_assert!(!f.lhs.contains(&f.rhs));
        }
    }

    #[test]
    fn holds_fd_is_antitone(rows in proptest::collection::vec((0i64..3, 0i64..3), 0..8), extra in (0i64..3, 0i64..3)) {
        let rel: oracle::Relation = rows.iter().map(|(a, b)| vec![Constant::Int(*a), Constant::Int(*b)]).collect();
        let mut bigger = rel.clone();
        bigger.insert(vec![Constant::Int(extra.0), Constant::Int(extra.1)]);
        let lhs = BTreeSet::from([1]);
        if oracle::holds_fd(&bigger, &lhs, 2) {
            prop_assert!(oracle::holds_fd(&rel, &lhs, 2));
        }
    }
}

#[test]
fn ids_keep_their_arity() {
    for seed in 0..100 {
        let vp = validate(random_program(seed)).unwrap();
        let np = normalize(&vp);
        let mf = extract(&np).unwrap();
        let seeds = fd_seeds(&np);
        let arity: BTreeMap<Origin, usize> = seeds
            .iter()
            .filter_map(|f| match &f.id {
                IdTerm::Node { origin, children } => Some((origin.clone(), children.len())),
                _ => None,
            })
            .collect();
        fn check(id: &IdTerm, arity: &BTreeMap<Origin, usize>) -> bool {
            match id {
                IdTerm::Node { origin, children } => {
                    arity.get(origin) == Some(&children.len()) && children.iter().all(|c| check(c, arity))
                }
                _ => true,
            }
        }
        let out = saturate(&mf, &seeds, &EngineConfig::default());
        assert!(out.facts.iter().all(|f| check(&f.id, &arity)), "seed {seed}");
    }
}
