#![no_main]

use hgpr::io::artifact::{parse_artifact, render_artifact};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = parse_artifact(text) {
        let again = render_artifact(&a).unwrap();
        assert!(parse_artifact(&again).is_ok());
    }
});
