mod common;

use common::*;
use entitykb::eql::oracle::brute_force_oracle;
use entitykb::eql::{evaluate, from_ucq, normalize_to_ucq, parse_condition, parse_query, print_query, Condition, EqlError, Query, ResultSet};
use entitykb::kb::Value;
use proptest::prelude::*;

fn sorted(mut rs: ResultSet) -> Vec<Vec<Value>> {
    rs.rows.sort();
    rs.rows
}

fn run(q: &Query, kb: &entitykb::kb::KnowledgeBase) -> Result<Vec<Vec<Value>>, EqlError> {
    evaluate(q, &**kb).map(sorted)
}

fn with_conditions(q: &Query, conds: Vec<Condition>) -> Query {
    Query { conditions: conds, ..q.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_matches_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 14);
        let text = random_query(&mut r);
        let q = parse_query(&text).unwrap();
        let fast = run(&q, &kb);
        let slow = brute_force_oracle(&q, &*kb).map(sorted);
        match (fast, slow) {
            (_, Err(EqlError::OracleTooLarge(_))) => {}
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b, "{}", text),
            (Err(a), Err(b)) => prop_assert_eq!(a, b, "{}", text),
            (a, b) => prop_assert!(false, "{text}: engine {a:?} oracle {b:?}"),
        }
    }

    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let q = parse_query(&random_query(&mut r)).unwrap();
        let printed = print_query(&q);
        prop_assert_eq!(parse_query(&printed).unwrap(), q, "{}", printed);
    }

    #[test]
    fn de_morgan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 25);
        let a = random_condition(&mut r, &["p"], 1);
        let b = random_condition(&mut r, &["p"], 1);
        let left = parse_query(&format!("an(entity(p:Person).where(not(and({a}, {b}))))")).unwrap();
        let right = parse_query(&format!("an(entity(p:Person).where(or(not({a}), not({b}))))")).unwrap();
        prop_assert_eq!(run(&left, &kb), run(&right, &kb));
        let left = parse_query(&format!("an(entity(p:Person).where(not(or({a}, {b}))))")).unwrap();
        let right = parse_query(&format!("an(entity(p:Person).where(and(not({a}), not({b}))))")).unwrap();
        prop_assert_eq!(run(&left, &kb), run(&right, &kb));
    }

    #[test]
    fn quantifier_duality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 25);
        let body = random_condition(&mut r, &["p", "f"], 1);
        let left = parse_query(&format!("an(entity(p:Person).where(not(exists(f in p.friend, {body}))))")).unwrap();
        let right = parse_query(&format!("an(entity(p:Person).where(for_all(f in p.friend, not({body}))))")).unwrap();
        prop_assert_eq!(run(&left, &kb), run(&right, &kb), "{}", body);
    }

    #[test]
    fn ucq_normal_form_preserves_answers(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 25);
        let q = parse_query(&random_query(&mut r)).unwrap();
        let ucq = from_ucq(&q, normalize_to_ucq(&q));
        prop_assert_eq!(run(&q, &kb), run(&ucq, &kb));
    }

    #[test]
    fn conjunction_of_where_clauses_equals_and(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 25);
        let a = parse_condition(&random_condition(&mut r, &["p"], 1), None).unwrap();
        let b = parse_condition(&random_condition(&mut r, &["p"], 1), None).unwrap();
        let base = parse_query("an(entity(p:Person))").unwrap();
        let split = with_conditions(&base, vec![a.clone(), b.clone()]);
        let joined = with_conditions(&base, vec![Condition::And(vec![a, b])]);
        prop_assert_eq!(run(&split, &kb), run(&joined, &kb));
    }
}

#[test]
fn generated_queries_hit_every_outcome() {
    // guards the generator against degenerating into trivially empty or full answers
    let mut r = rng(7);
    let (mut empty, mut partial, mut full) = (0, 0, 0);
    for _ in 0..300 {
        let kb = eql_kb(&mut r, 20);
        let q = parse_query(&random_query(&mut r)).unwrap();
        if !matches!(q.processor, entitykb::eql::Processor::An) || q.descriptor.vars().len() != 1 {
            continue;
        }
        let Ok(rows) = run(&q, &kb) else { continue };
        let all = run(&with_conditions(&q, Vec::new()), &kb).unwrap();
        match rows.len() {
            0 => empty += 1,
            n if n == all.len() => full += 1,
            _ => partial += 1,
        }
    }
    assert!(empty > 5 && partial > 5 && full > 5, "{empty} {partial} {full}");
}

#[test]
fn oracle_comparisons_are_decided() {
    let mut r = rng(11);
    let (mut ok, mut err, mut skipped) = (0, 0, 0);
    for _ in 0..300 {
        let kb = eql_kb(&mut r, 14);
        let q = parse_query(&random_query(&mut r)).unwrap();
        match brute_force_oracle(&q, &*kb) {
            Ok(_) => ok += 1,
            Err(EqlError::OracleTooLarge(_)) => skipped += 1,
            Err(_) => err += 1,
        }
    }
    assert!(ok >= 240, "ok {ok} err {err} skipped {skipped}");
}
