#![no_main]

use libfuzzer_sys::fuzz_target;
use nonlocal_r0::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        // Building must not panic either; large grids are skipped to keep
        // iterations fast.
        if cfg.grid.n <= 32 && cfg.referenced_files().is_empty() {
            let _ = cfg.build();
        }
    }
});
