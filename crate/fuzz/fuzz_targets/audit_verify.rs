#![no_main]

use emr_core::store::{verify_audit_bytes, AuditStatus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let AuditStatus::Corrupt { first_bad_seq } = verify_audit_bytes(data) {
        assert!(first_bad_seq >= 1);
    }
});
