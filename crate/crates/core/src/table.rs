//! Plain delimited numeric tables, one row per grid node.
//!
//! Fields may be separated by commas, semicolons, tabs or spaces. Blank
//! lines and lines starting with `#` are skipped.

use crate::error::{Error, Result};

/// Parses `text` into rows of exactly `columns` finite values.
pub fn parse_table(text: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    if columns == 0 {
        return Err(Error::Table {
            line: 0,
            reason: "column count must be positive".into(),
        });
    }
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::with_capacity(columns);
        for tok in line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok.parse().map_err(|_| Error::Table {
                line: line_no,
                reason: format!("`{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Table {
                    line: line_no,
                    reason: format!("`{tok}` is not finite"),
                });
            }
            row.push(v);
        }
        if row.len() != columns {
            return Err(Error::Table {
                line: line_no,
                reason: format!("expected {columns} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Like [`parse_table`] but also requires exactly `expected_rows` rows.
pub fn parse_table_rows(text: &str, columns: usize, expected_rows: usize) -> Result<Vec<Vec<f64>>> {
    let rows = parse_table(text, columns)?;
    if rows.len() != expected_rows {
        return Err(Error::Table {
            line: 0,
            reason: format!("expected {expected_rows} rows, found {}", rows.len()),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mixed_delimiters_and_comments() {
        let t = "# header\n1, 2\n\n3;4\n5\t6\n 7   8 \n";
        let rows = parse_table(t, 2).unwrap();
        assert_eq!(rows, vec![vec![1., 2.], vec![3., 4.], vec![5., 6.], vec![7., 8.]]);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let err = parse_table("1,2\n3\n", 2).unwrap_err();
        assert_eq!(
            err,
            Error::Table {
                line: 2,
                reason: "expected 2 columns, found 1".into()
            }
        );
    }

    #[test]
    fn rejects_non_finite_and_garbage() {
        assert!(parse_table("inf\n", 1).is_err());
        assert!(parse_table("NaN\n", 1).is_err());
        assert!(parse_table("abc\n", 1).is_err());
        assert!(parse_table("1\n", 0).is_err());
    }

    #[test]
    fn row_count_checked() {
        assert!(parse_table_rows("1\n2\n", 1, 3).is_err());
        assert_eq!(parse_table_rows("1\n2\n3\n", 1, 3).unwrap().len(), 3);
    }

    proptest! {
        #[test]
        fn written_tables_parse_back(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..20)) {
            let text: String = rows
                .iter()
                .map(|r| format!("{:e},{:e} {:e}\n", r[0], r[1], r[2]))
                .collect();
            let parsed = parse_table(&text, 3).unwrap();
            prop_assert_eq!(parsed, rows);
        }

        #[test]
        fn never_panics(text in ".{0,200}", cols in 0usize..5) {
            let _ = parse_table(&text, cols);
        }
    }
}
