#![no_main]

use hgpr::io::SynthSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<SynthSpec>() {
        assert!(spec.validate().is_ok());
    }
});
