#![no_main]

use hgpr::io::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = text.parse::<RunConfig>() {
        assert_eq!(cfg.render().parse::<RunConfig>().unwrap(), cfg);
    }
});
