use std::path::Path;

use reserve_match::choice::{check_monotonic, CapacityTransferScheme};
use reserve_match::error::Error;
use reserve_match::fixtures::{ex1, ex1_low_demand};
use reserve_match::harness::generate::{generate_batch, generate_slot_specific, GeneratorParams, SchemeFamily};
use reserve_match::harness::io::{
    instance_to_json, load_instance, parse_dynamic, parse_instance, save_instance, slot_specific_to_json,
    LoadedInstance,
};
use reserve_match::validate_instance;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn bundled_fixtures_load_to_the_built_in_instances() {
    let inst = load_instance(fixture("ex1.instance")).unwrap();
    assert_eq!(inst, ex1());
    assert_eq!(inst.market.num_contracts(), 6);
    assert_eq!(inst.schools.len(), 1);
    assert_eq!(
        inst.schools[0].scheme,
        CapacityTransferScheme::ForwardSum { donors: vec![vec![], vec![], vec![0, 1]] }
    );
    assert_eq!(load_instance(fixture("ex1-low-demand.instance")).unwrap(), ex1_low_demand());
}

#[test]
fn generated_instances_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for family in [SchemeFamily::Rigid, SchemeFamily::ForwardSum, SchemeFamily::Table, SchemeFamily::Mixed] {
        let params = GeneratorParams { scheme: family, ..GeneratorParams::default().with_seed(21) };
        for (n, inst) in generate_batch(&params, 50).into_iter().enumerate() {
            let path = dir.path().join(format!("{n}.instance"));
            save_instance(&inst, &path).unwrap();
            let back = load_instance(&path).unwrap();
            assert_eq!(back, inst);
            assert_eq!(instance_to_json(&back), instance_to_json(&inst));
        }
    }
}

#[test]
fn slot_specific_instances_round_trip() {
    for seed in 0..30 {
        let inst = generate_slot_specific(&GeneratorParams::default().with_seed(seed));
        match parse_instance(&slot_specific_to_json(&inst)).unwrap() {
            LoadedInstance::SlotSpecific(back) => assert_eq!(back, inst),
            LoadedInstance::Dynamic(_) => panic!("kind changed"),
        }
    }
}

#[test]
fn thousand_generated_instances_are_valid_and_monotone() {
    for inst in generate_batch(&GeneratorParams::default().with_seed(1000), 1000) {
        assert!(validate_instance(&inst).is_empty());
        for s in &inst.schools {
            assert_eq!(check_monotonic(&s.scheme, &s.targets, s.capacity, u128::MAX).unwrap(), None);
        }
    }
}

#[test]
fn validation_errors_carry_locations() {
    let text = instance_to_json(&ex1()).replace("\"precedence\": [\n        \"t1\",", "\"precedence\": [");
    match parse_dynamic(&text) {
        Err(Error::Validation(v)) => {
            assert!(v.iter().any(|v| v.location.starts_with("schools[0]")), "{v:?}");
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}
