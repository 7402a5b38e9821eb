use kbr_cli::csvio::{read_csv, write_csv, Column, Row, Value};
use proptest::prelude::*;

const SCHEMA: &[Column] = &[Column::float("a"), Column::int("b"), Column::text("c"), Column::float("d")];

fn finite_or_inf() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => any::<f64>().prop_filter("no NaN", |v| !v.is_nan()),
        1 => Just(-0.0),
        1 => Just(f64::MIN_POSITIVE / 3.0),
    ]
}

fn row() -> impl Strategy<Value = Row> {
    (
        finite_or_inf(),
        any::<i64>(),
        "[a-z ,\"\n]{1,8}",
        proptest::option::weighted(0.8, finite_or_inf()),
    )
        .prop_map(|(a, b, c, d)| vec![Value::Float(a), Value::Int(b), Value::Text(c), d.into()])
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]
    #[test]
    fn ten_thousand_rows_round_trip_bit_exact(rows in proptest::collection::vec(row(), 10_000)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, SCHEMA, &rows).unwrap();
        let back = read_csv(&p, SCHEMA).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (r, s) in rows.iter().zip(&back) {
            prop_assert!(r.iter().zip(s).all(|(a, b)| same(a, b)), "{:?} vs {:?}", r, s);
        }
    }
}
