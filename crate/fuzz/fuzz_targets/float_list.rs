#![no_main]

use hgpr::io::parse_float_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_float_list(text) {
        assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
    }
});
