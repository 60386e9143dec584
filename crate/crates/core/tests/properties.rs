//! Property tests for the table invariants that hold over arbitrary inputs.

use proptest::prelude::*;

use urbanlens_core::table::{
    apply_filter, join_in_memory, parse_csv, Cell, FilterOp, FilterSpec, JoinKind, Literal,
};
use urbanlens_core::util::{extract_numbers, fmt_num};

fn key_table(keys: &[u8]) -> urbanlens_core::table::Table {
    let mut csv = String::from("k\n");
    for k in keys {
        csv.push_str(&format!("{k}\n"));
    }
    parse_csv(&csv).unwrap()
}

proptest! {
    /// Inner join row count equals the sum over shared keys of
    /// |L_k| * |R_k|.
    #[test]
    fn join_count_matches_group_product(
        left in prop::collection::vec(0u8..8, 0..60),
        right in prop::collection::vec(0u8..8, 0..60),
    ) {
        let lt = key_table(&left);
        let rt = key_table(&right);
        let joined = join_in_memory(&lt, &rt, "k", JoinKind::Inner).unwrap();
        let mut expected = 0usize;
        for k in 0..8u8 {
            let l = left.iter().filter(|&&x| x == k).count();
            let r = right.iter().filter(|&&x| x == k).count();
            expected += l * r;
        }
        prop_assert_eq!(joined.rows.len(), expected);
    }

    /// Filtering by A then by B yields the same rows as filtering once by
    /// the conjunction A AND B.
    #[test]
    fn filter_composition_equals_conjunction(
        rows in prop::collection::vec((0i32..5, 0i32..5), 0..80),
        a in 0i32..5,
        b in 0i32..5,
    ) {
        let mut csv = String::from("x,y\n");
        for (x, y) in &rows {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let t = parse_csv(&csv).unwrap();
        let fa = FilterSpec::single("x", FilterOp::Eq, Literal::Number(a as f64));
        let fb = FilterSpec::single("y", FilterOp::Ge, Literal::Number(b as f64));
        let chained = apply_filter(&apply_filter(&t, &fa).unwrap(), &fb).unwrap();
        let both = apply_filter(
            &t,
            &FilterSpec::single("x", FilterOp::Eq, Literal::Number(a as f64)).and(
                "y",
                FilterOp::Ge,
                Literal::Number(b as f64),
            ),
        )
        .unwrap();
        prop_assert_eq!(chained.rows, both.rows);
    }

    /// Join never invents or loses left rows under Left semantics when the
    /// right side has unique keys.
    #[test]
    fn left_join_preserves_left_rows_on_unique_right(
        left in prop::collection::vec(0u8..12, 0..50),
    ) {
        let lt = key_table(&left);
        let rt = key_table(&[0, 1, 2, 3]);
        let joined = join_in_memory(&lt, &rt, "k", JoinKind::Left).unwrap();
        prop_assert_eq!(joined.rows.len(), left.len());
        for (row, k) in joined.rows.iter().zip(&left) {
            prop_assert_eq!(&row[0], &Cell::Number(*k as f64));
        }
    }

    /// A formatted number re-extracts to (approximately) itself.
    #[test]
    fn formatted_numbers_reextract(value in -1.0e6f64..1.0e6) {
        let text = format!("the value is {}", fmt_num(value));
        let toks = extract_numbers(&text);
        prop_assert_eq!(toks.len(), 1);
        prop_assert!((toks[0].value - value).abs() <= 5e-7_f64.max(value.abs() * 1e-9));
    }
}
