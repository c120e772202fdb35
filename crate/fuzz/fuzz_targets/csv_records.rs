#![no_main]

use hgpr::io::records::{read_records, write_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(recs) = read_records(data) {
        assert!(recs.iter().all(|r| (0.0..=1.0).contains(&r.uk37) && r.sst.is_finite()));
        let mut buf = Vec::new();
        write_records(&mut buf, &recs, None).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
    }
});
