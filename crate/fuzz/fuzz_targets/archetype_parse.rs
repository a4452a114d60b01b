#![no_main]

use emr_core::archetype::{parse_archetype, serialize_archetype};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(def) = parse_archetype(data) {
        let text = serialize_archetype(&def);
        let back = parse_archetype(&text).expect("canonical text re-parses");
        assert_eq!(back, def);
        assert_eq!(serialize_archetype(&back), text);
    }
});
