#![no_main]

use emr_core::store::parse_snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_snapshot(data);
});
