#![no_main]

use emr_core::model::{Demographics, FieldValue, NewEntry, NewLabResult, NewTransactionItem};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = serde_json::from_slice::<FieldValue>(data) {
        let text = serde_json::to_vec(&v).unwrap();
        let _ = serde_json::from_slice::<FieldValue>(&text).unwrap();
    }
    let _ = serde_json::from_slice::<NewEntry>(data);
    let _ = serde_json::from_slice::<NewLabResult>(data);
    let _ = serde_json::from_slice::<NewTransactionItem>(data);
    let _ = serde_json::from_slice::<Demographics>(data);
});
