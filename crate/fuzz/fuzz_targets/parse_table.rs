#![no_main]

use libfuzzer_sys::fuzz_target;
use nonlocal_r0::table::{parse_table, parse_table_rows};

fuzz_target!(|data: &[u8]| {
    let Some((&cols, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let columns = (cols % 8) as usize + 1;
    if let Ok(rows) = parse_table(text, columns) {
        assert!(rows.iter().all(|r| r.len() == columns && r.iter().all(|v| v.is_finite())));
        let again = parse_table_rows(text, columns, rows.len()).unwrap();
        assert_eq!(again, rows);
    }
});
