use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use emr_core::archetype::{
    parse_archetype, serialize_archetype, validate_fields, ArchetypeDefinition, FieldConstraint,
    ParseErrorKind, Range, ValueType, ViolationClass,
};
use emr_core::clinic::SEED_ARCHETYPES;
use emr_core::model::{EntryKind, FieldValue};
use proptest::prelude::*;

fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = SEED_ARCHETYPES
        .iter()
        .map(|(n, s)| (n.to_string(), s.to_string()))
        .collect();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/archetypes");
    let mut extra: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    extra.sort();
    for p in extra {
        out.push((
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read_to_string(&p).unwrap(),
        ));
    }
    out
}

#[test]
fn corpus_round_trips() {
    let corpus = corpus();
    assert!(corpus.len() >= 10);
    let mut kinds = BTreeSet::new();
    let mut types = BTreeSet::new();
    for (name, src) in &corpus {
        let def = parse_archetype(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let text = serialize_archetype(&def);
        let again = parse_archetype(&text).unwrap_or_else(|e| panic!("{name} canonical: {e}"));
        assert_eq!(again, def, "{name}");
        assert_eq!(serialize_archetype(&again), text, "{name}");
        kinds.insert(def.kind);
        for f in &def.fields {
            types.insert(f.value_type.keyword());
        }
    }
    assert_eq!(kinds.len(), EntryKind::ALL.len());
    assert_eq!(types.len(), 3);
}

#[test]
fn crlf_comments_and_clause_order_normalize() {
    let def = parse_archetype(
        "archetype openEHR-EHR-OBSERVATION.w.v1\r\n# note\r\nkind OBSERVATION\r\n\
         field w quantity required unit kg range 1..2 # trailing\r\n",
    )
    .unwrap();
    assert_eq!(
        serialize_archetype(&def),
        "archetype openEHR-EHR-OBSERVATION.w.v1\nkind OBSERVATION\nfield w quantity required range 1..2 unit kg\n"
    );
}

#[test]
fn malformed_documents_report_kind_and_line() {
    let cases: &[(&str, fn(&ParseErrorKind) -> bool, usize)] = &[
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x text optional\nfield x text optional\n",
            |k| matches!(k, ParseErrorKind::DuplicateField(_)),
            4,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATON\n",
            |k| matches!(k, ParseErrorKind::UnknownKind(_)),
            2,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a\n",
            |k| matches!(k, ParseErrorKind::MalformedId(_)),
            1,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x quantity optional range 5..1\n",
            |k| matches!(k, ParseErrorKind::MalformedRange(_)),
            3,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x quantity optional range 1-5\n",
            |k| matches!(k, ParseErrorKind::MalformedRange(_)),
            3,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind EVALUATION\n",
            |k| matches!(k, ParseErrorKind::KindMismatch { .. }),
            2,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x text optional unit kg\n",
            |k| matches!(k, ParseErrorKind::InvalidConstraint(_)),
            3,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x coded optional values {a, a}\n",
            |k| matches!(k, ParseErrorKind::InvalidConstraint(_)),
            3,
        ),
        (
            "archetype openEHR-EHR-OBSERVATION.a.v1\nkind OBSERVATION\nfield x number optional\n",
            |k| matches!(k, ParseErrorKind::Syntax(_)),
            3,
        ),
    ];
    for (src, pred, line) in cases {
        let err = parse_archetype(src).unwrap_err();
        assert!(pred(&err.kind), "{src:?} gave {err}");
        assert_eq!(err.line, *line, "{src:?}");
        assert!(err.column >= 1);
    }
}

// ---- brute-force oracle ------------------------------------------------

const ORACLE_DEF: &str = "\
archetype openEHR-EHR-OBSERVATION.oracle.v1
kind OBSERVATION
field a quantity required range 0..10 unit mg
field b coded optional values {x, y}
field c text required
";

fn domain() -> Vec<Option<FieldValue>> {
    vec![
        None,
        Some(FieldValue::quantity(5.0, "mg")),
        Some(FieldValue::quantity(-1.0, "mg")),
        Some(FieldValue::quantity(11.0, "g")),
        Some(FieldValue::text("t")),
        Some(FieldValue::coded("x")),
        Some(FieldValue::coded("z")),
    ]
}

/// Expected violations written directly from the field rules of `ORACLE_DEF`.
fn oracle(fields: &BTreeMap<String, FieldValue>) -> Vec<(String, ViolationClass)> {
    use ViolationClass::*;
    let mut out = Vec::new();
    match fields.get("a") {
        None => out.push(("a".into(), MissingField)),
        Some(FieldValue::Quantity { magnitude, unit }) => {
            if unit != "mg" {
                out.push(("a".into(), UnitMismatch));
            }
            if !(0.0..=10.0).contains(magnitude) {
                out.push(("a".into(), RangeExceeded));
            }
        }
        Some(_) => out.push(("a".into(), TypeMismatch)),
    }
    match fields.get("b") {
        None => {}
        Some(FieldValue::Coded { code }) => {
            if code != "x" && code != "y" {
                out.push(("b".into(), ValueNotAllowed));
            }
        }
        Some(_) => out.push(("b".into(), TypeMismatch)),
    }
    match fields.get("c") {
        None => out.push(("c".into(), MissingField)),
        Some(FieldValue::Text { .. }) => {}
        Some(_) => out.push(("c".into(), TypeMismatch)),
    }
    for k in fields.keys() {
        if !["a", "b", "c"].contains(&k.as_str()) {
            out.push((k.clone(), UnknownField));
        }
    }
    out.sort();
    out
}

#[test]
fn validation_matches_brute_force_oracle() {
    let def = parse_archetype(ORACLE_DEF).unwrap();
    let dom = domain();
    let mut checked = 0;
    let mut seen = BTreeSet::new();
    for a in &dom {
        for b in &dom {
            for c in &dom {
                for extra in [None, Some(FieldValue::text("?"))] {
                    let mut fields = BTreeMap::new();
                    for (name, v) in [("a", a), ("b", b), ("c", c), ("d", &extra)] {
                        if let Some(v) = v {
                            fields.insert(name.to_string(), v.clone());
                        }
                    }
                    let mut got: Vec<_> = validate_fields(&fields, &def)
                        .into_iter()
                        .map(|v| (v.field, v.class))
                        .collect();
                    got.sort();
                    let want = oracle(&fields);
                    assert_eq!(got, want, "{fields:?}");
                    seen.extend(want.into_iter().map(|(_, c)| c));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked <= 1000);
    assert_eq!(seen.len(), ViolationClass::ALL.len());
}

#[test]
fn every_violation_class_is_reported_alone() {
    use ViolationClass::*;
    let def = parse_archetype(ORACLE_DEF).unwrap();
    let base = || {
        BTreeMap::from([
            ("a".to_string(), FieldValue::quantity(1.0, "mg")),
            ("c".to_string(), FieldValue::text("ok")),
        ])
    };
    assert!(validate_fields(&base(), &def).is_empty());
    let cases: [(ViolationClass, fn(&mut BTreeMap<String, FieldValue>)); 6] = [
        (MissingField, |f| {
            f.remove("c");
        }),
        (UnknownField, |f| {
            f.insert("zz".into(), FieldValue::text("?"));
        }),
        (TypeMismatch, |f| {
            f.insert("c".into(), FieldValue::coded("x"));
        }),
        (RangeExceeded, |f| {
            f.insert("a".into(), FieldValue::quantity(10.5, "mg"));
        }),
        (UnitMismatch, |f| {
            f.insert("a".into(), FieldValue::quantity(1.0, "g"));
        }),
        (ValueNotAllowed, |f| {
            f.insert("b".into(), FieldValue::coded("w"));
        }),
    ];
    for (class, mutate) in cases {
        let mut f = base();
        mutate(&mut f);
        let got = validate_fields(&f, &def);
        assert_eq!(got.len(), 1, "{class:?}: {got:?}");
        assert_eq!(got[0].class, class);
    }
}

// ---- generated definitions ----------------------------------------------

fn decimal() -> impl Strategy<Value = f64> {
    (-100_000i64..100_000).prop_map(|n| n as f64 / 100.0)
}

fn constraint() -> impl Strategy<Value = (ValueType, bool, Option<Range>, Option<String>, Option<Vec<String>>)> {
    let quantity = (
        any::<bool>(),
        proptest::option::of((decimal(), decimal())),
        proptest::option::of("[a-zA-Z%/^0-9]{1,6}"),
    )
        .prop_map(|(req, r, u)| {
            let range = r.map(|(a, b)| Range {
                lo: a.min(b),
                hi: a.max(b),
            });
            (ValueType::Quantity, req, range, u, None)
        });
    let text = any::<bool>().prop_map(|req| (ValueType::Text, req, None, None, None));
    let coded = (
        any::<bool>(),
        proptest::option::of(proptest::collection::btree_set("[a-z0-9_.-]{1,5}", 1..5)),
    )
        .prop_map(|(req, vs)| {
            (
                ValueType::Coded,
                req,
                None,
                None,
                vs.map(|s| s.into_iter().collect()),
            )
        });
    prop_oneof![quantity, text, coded]
}

fn definition() -> impl Strategy<Value = ArchetypeDefinition> {
    (
        proptest::sample::select(EntryKind::ALL.to_vec()),
        "[a-z][a-z0-9_]{0,8}",
        1u32..50,
        proptest::collection::btree_map("[a-z_][a-z0-9_]{0,8}", constraint(), 0..6),
    )
        .prop_map(|(kind, name, version, fields)| ArchetypeDefinition {
            archetype_id: format!("openEHR-EHR-{}.{name}.v{version}", kind.token()),
            kind,
            fields: fields
                .into_iter()
                .map(|(n, (t, req, range, unit, values))| FieldConstraint {
                    range,
                    unit,
                    allowed_values: values,
                    ..FieldConstraint::new(n, t, req)
                })
                .collect(),
        })
}

const TOKENS: &[&str] = &[
    "archetype", "kind", "field", "quantity", "text", "coded", "required", "optional", "range",
    "unit", "values", "{", "}", ",", "..", "1..2", "-3.5..x", "openEHR-EHR-OBSERVATION.a.v1",
    "OBSERVATION", "HISTORY", "#", "\n", "\r\n", " ", "\t", "a", "é", "v1", "-EHR-",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialize_then_parse_is_identity(def in definition()) {
        let text = serialize_archetype(&def);
        let back = parse_archetype(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &def);
        prop_assert_eq!(serialize_archetype(&back), text);
    }

    #[test]
    fn parser_never_panics_on_token_soup(parts in proptest::collection::vec(proptest::sample::select(TOKENS), 0..40)) {
        let src = parts.concat();
        if let Ok(def) = parse_archetype(&src) {
            prop_assert_eq!(parse_archetype(&serialize_archetype(&def)).unwrap(), def);
        }
    }

    #[test]
    fn parser_never_panics_on_arbitrary_text(src in "\\PC{0,200}") {
        let _ = parse_archetype(&src);
    }
}
