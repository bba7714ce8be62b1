use std::path::PathBuf;

use acs::weights::{decode, encode, load, save, FormatError, WeightsError};
use acs_core::{AnyTensor, Tensor, WeightStore};
use proptest::prelude::*;

fn fixture(name: &str) -> Vec<u8> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn mixed() -> WeightStore {
    let mut s = WeightStore::new();
    s.insert(
        "conv.weight",
        AnyTensor::F32(Tensor::new([2, 3], vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5]).unwrap()),
    )
    .unwrap();
    s.insert(
        "bn.running_mean",
        AnyTensor::F64(Tensor::new([3], vec![1.0, -2.5, 1e-300]).unwrap()),
    )
    .unwrap();
    s.insert("step", AnyTensor::F64(Tensor::scalar(42.0)))
        .unwrap();
    s
}

#[test]
fn encoder_matches_fixtures() {
    assert_eq!(encode(&WeightStore::new()).unwrap(), fixture("empty.acsw"));
    let mut w = WeightStore::new();
    w.insert("w", AnyTensor::F32(Tensor::scalar(1.5))).unwrap();
    assert_eq!(encode(&w).unwrap(), fixture("scalar.acsw"));
    assert_eq!(encode(&mixed()).unwrap(), fixture("mixed.acsw"));
}

#[test]
fn decoder_reads_fixtures() {
    assert!(decode(&fixture("empty.acsw")).unwrap().is_empty());
    let s = decode(&fixture("scalar.acsw")).unwrap();
    assert_eq!(s.get("w").unwrap().to_real::<f32>().data(), [1.5]);
    assert!(decode(&fixture("mixed.acsw")).unwrap().bit_eq(&mixed()));
}

#[test]
fn unpacked_layouts_are_accepted_and_repacked() {
    let buf = fixture("gapped.acsw");
    let s = decode(&buf).unwrap();
    assert!(s.bit_eq(&mixed()));
    assert_eq!(encode(&s).unwrap(), fixture("mixed.acsw"));
}

#[test]
fn malformed_fixtures_are_rejected() {
    let err = |name: &str| decode(&fixture(name)).unwrap_err();
    assert_eq!(
        err("bad_magic.acsw"),
        FormatError::BadMagic(b"ACSX".to_vec())
    );
    assert_eq!(err("bad_version.acsw"), FormatError::UnsupportedVersion(2));
    match err("truncated.acsw") {
        FormatError::Truncated(m) => assert!(m.contains("step"), "{m}"),
        e => panic!("{e}"),
    }
    assert_eq!(err("trailing.acsw"), FormatError::TrailingBytes(8));
    assert!(matches!(err("overlap.acsw"), FormatError::Overlap { .. }));
    assert!(
        matches!(err("out_of_bounds.acsw"), FormatError::OutOfBounds { ref entry, .. } if entry == "w")
    );
    assert!(
        matches!(err("misaligned.acsw"), FormatError::Misaligned { ref entry, .. } if entry == "w")
    );
    assert_eq!(
        err("duplicate.acsw"),
        FormatError::DuplicateName("a".into())
    );
}

#[test]
fn every_truncation_is_an_error() {
    let buf = fixture("mixed.acsw");
    for n in 0..buf.len() {
        assert!(decode(&buf[..n]).is_err(), "prefix of {n} bytes decoded");
    }
}

#[test]
fn files_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.acsw"), dir.path().join("b.acsw"));
    save(&mixed(), &a).unwrap();
    let s = load(&a).unwrap();
    save(&s, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(s.bit_eq(&mixed()));
}

#[test]
fn load_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.acsw");
    assert!(matches!(load(&missing), Err(WeightsError::Io { .. })));
    let bad = dir.path().join("bad.acsw");
    std::fs::write(&bad, fixture("bad_magic.acsw")).unwrap();
    let e = load(&bad).unwrap_err();
    assert!(matches!(e, WeightsError::Format { .. }));
    assert!(e.to_string().contains("bad.acsw"), "{e}");
}

fn any_tensor() -> impl Strategy<Value = AnyTensor> {
    prop::collection::vec(0usize..4, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        prop_oneof![
            prop::collection::vec(any::<u32>().prop_map(f32::from_bits), n).prop_map({
                let shape = shape.clone();
                move |d| AnyTensor::F32(Tensor::new(shape.clone(), d).unwrap())
            }),
            prop::collection::vec(any::<u64>().prop_map(f64::from_bits), n)
                .prop_map(move |d| AnyTensor::F64(Tensor::new(shape.clone(), d).unwrap())),
        ]
    })
}

fn any_store() -> impl Strategy<Value = WeightStore> {
    prop::collection::btree_map("[a-z./0-9é]{1,20}", any_tensor(), 0..6).prop_map(|m| {
        let mut s = WeightStore::new();
        for (k, v) in m {
            s.insert(k, v).unwrap();
        }
        s
    })
}

proptest! {
    #[test]
    fn decode_inverts_encode(s in any_store()) {
        let buf = encode(&s).unwrap();
        let back = decode(&buf).unwrap();
        prop_assert!(back.bit_eq(&s));
        prop_assert_eq!(back.names().collect::<Vec<_>>(), s.names().collect::<Vec<_>>());
        prop_assert_eq!(encode(&back).unwrap(), buf);
    }

    #[test]
    fn single_byte_corruption_never_panics(s in any_store(), at in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut buf = encode(&s).unwrap();
        let i = at.index(buf.len());
        buf[i] = byte;
        if let Ok(back) = decode(&buf) {
            prop_assert!(encode(&back).is_ok());
        }
    }
}
