#![no_main]

use hgpr::io::records::read_observations;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(obs) = read_observations(data) {
        assert!(obs.iter().all(|o| (0.0..=1.0).contains(&o.uk37)));
    }
});
