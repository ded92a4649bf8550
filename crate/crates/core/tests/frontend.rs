mod common;

use common::*;
use proptest::prelude::*;
use provdb::frontend::{
    demo, load_csv_from, parse, print, write_csv, Catalog, FrontendError, QueryOptions,
};
use provdb::query::ColumnDecl;
use provdb::{GateKind, Relation, RelationSchema, Tag, Tuple, Value};

proptest! {
    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let q = gen_case_query(&mut rng, true);
        let text = print(&q);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, q, "{}", text);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((any::<i64>(), "[a-z ,'\"]{1,8}", -1e6f64..1e6), 0..20)) {
        let schema = RelationSchema::new(vec![
            ColumnDecl::new("n", Tag::Int),
            ColumnDecl::new("s", Tag::Text),
            ColumnDecl::new("x", Tag::Real),
        ]);
        let mut rel = Relation::new(3);
        for (n, s, x) in &rows {
            rel.insert(Tuple::new(vec![Value::Int(*n), Value::text(s), Value::real(*x)]), 1).unwrap();
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &rel, &schema).unwrap();
        let back = load_csv_from(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back, rel);
    }
}

#[test]
fn provenance_tokens_are_distinct_inputs() {
    let cat = demo::personnel_catalog(3).unwrap();
    let t = cat.table("Personnel").unwrap();
    assert_eq!(t.tokens.len(), 7);
    let distinct: std::collections::BTreeSet<_> = t.tokens.iter().collect();
    assert_eq!(distinct.len(), 7);
    for g in &t.tokens {
        assert_eq!(cat.store().get(*g).unwrap().kind, GateKind::Input);
    }
}

#[test]
fn catalog_rejects_bad_requests() {
    let mut cat = demo::personnel_catalog(4).unwrap();
    let g = cat.table("Personnel").unwrap().tokens[0];
    assert!(matches!(
        cat.set_prob("Personnel", g, 1.5),
        Err(FrontendError::BadProbability(_))
    ));
    assert!(matches!(
        cat.add_provenance("Personnel", None),
        Err(FrontendError::AlreadyProvenanced(_))
    ));
    assert!(matches!(
        cat.table("Nobody"),
        Err(FrontendError::UnknownTable(_))
    ));
    let opts = QueryOptions {
        semiring: Some("tropical".into()),
        ..Default::default()
    };
    assert!(matches!(
        cat.run_query(demo::Q_CITY, &opts),
        Err(FrontendError::UnknownSemiring(_))
    ));
    let opts = QueryOptions {
        probability: Some(provdb::Method::Auto),
        ..Default::default()
    };
    let agg = "agg[group #4; count(#1) as n](Personnel)";
    assert!(cat.run_query(agg, &opts).is_err());
}

#[test]
fn unprovenanced_tables_only_answer_plain_queries() {
    let mut cat = Catalog::in_memory(5);
    let schema = RelationSchema::parse_decl(demo::PERSONNEL_SCHEMA).unwrap();
    cat.load_table_from("Personnel", demo::PERSONNEL_CSV.as_bytes(), schema)
        .unwrap();
    let plain = cat
        .run_query(demo::Q_CITY, &QueryOptions::default())
        .unwrap();
    assert_eq!(plain.rows.len(), 3);
    let why = QueryOptions {
        semiring: Some("why".into()),
        ..Default::default()
    };
    assert!(matches!(
        cat.run_query(demo::Q_CITY, &why),
        Err(FrontendError::NotProvenanced(_))
    ));
}

#[test]
fn catalog_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db");
    {
        let mut cat = Catalog::init(&path).unwrap();
        demo::load_personnel(&mut cat).unwrap();
        cat.save().unwrap();
    }
    let mut cat = Catalog::open(&path).unwrap();
    let opts = QueryOptions {
        probability: Some(provdb::Method::Auto),
        ..Default::default()
    };
    let out = cat.run_query(demo::Q_CITY, &opts).unwrap();
    let mut probs: Vec<(String, String)> = out
        .rows
        .iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect();
    probs.sort();
    assert_eq!(
        probs,
        [("Berlin", "0.04"), ("New York", "0.35"), ("Paris", "0.86")]
            .map(|(a, b)| (a.to_string(), b.to_string()))
    );
    assert!(matches!(
        Catalog::init(&path),
        Err(FrontendError::CatalogExists(_))
    ));
}
