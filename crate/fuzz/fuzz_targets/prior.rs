#![no_main]

use hgpr::PriorSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = text.parse::<PriorSpec>() {
        assert!(p.validate().is_ok());
        assert!(p.log_density(p.center()).is_finite());
    }
});
