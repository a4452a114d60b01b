#![no_main]

use emr_core::access::Role;
use emr_core::archetype::ArchetypeId;
use emr_core::clock::parse_timestamp;
use emr_core::model::{CardEvent, Mrn, ReferenceCategory};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(mrn) = Mrn::parse(data) {
        assert_eq!(mrn.as_str(), data);
        assert_eq!(Mrn::from_counter(mrn.counter()).unwrap(), mrn);
    }
    let _ = ArchetypeId::parse(data);
    let _ = parse_timestamp(data);
    let _ = data.parse::<Role>();
    let _ = data.parse::<CardEvent>();
    let _ = data.parse::<ReferenceCategory>();
});
