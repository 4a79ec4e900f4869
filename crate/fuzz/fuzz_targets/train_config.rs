#![no_main]

use libfuzzer_sys::fuzz_target;
use spf_trainer::config::{parse_train_config, Overrides};

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        let _ = parse_train_config(src, Overrides::default());
    }
});
