use std::collections::HashSet;

use fvret_core::pooling::{
    build_entry, decode_index, encode_index, read_index_file, write_index_file, Index, PoolingStrategy, TransformGrid,
};
use fvret_core::store::{
    decode_descriptor_set, encode_descriptor_set, encoded_len, read_descriptor_file, write_descriptor_file,
    DescriptorSet,
};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
    ]
}

fn descriptor_set() -> impl Strategy<Value = DescriptorSet> {
    (1usize..6).prop_flat_map(|dim| {
        (
            prop::collection::vec(("[a-zA-Z0-9_äö/.-]{1,12}", prop::collection::vec(finite_f32(), dim)), 0..8),
            prop::collection::btree_map("[a-z_]{1,6}", "[ -~]{0,10}", 0..4),
        )
            .prop_map(move |(records, meta)| {
                let mut set = DescriptorSet::new(dim).unwrap();
                for (k, v) in meta {
                    set.set_metadata(k, v);
                }
                let mut seen = HashSet::new();
                for (id, v) in records {
                    if seen.insert(id.clone()) {
                        set.push(id, v).unwrap();
                    }
                }
                set
            })
    })
}

fn bits(set: &DescriptorSet) -> Vec<(String, Vec<u32>)> {
    set.iter()
        .map(|(id, v)| (id.to_string(), v.iter().map(|x| x.to_bits()).collect()))
        .collect()
}

proptest! {
    #[test]
    fn gdsc_round_trip_is_bit_exact(set in descriptor_set()) {
        let bytes = encode_descriptor_set(&set).unwrap();
        prop_assert_eq!(bytes.len(), encoded_len(&set).unwrap());
        let back = decode_descriptor_set(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&set));
        prop_assert_eq!(back.metadata(), set.metadata());
        prop_assert_eq!(encode_descriptor_set(&back).unwrap(), bytes);
    }

    #[test]
    fn gidx_round_trip_is_bit_exact(
        p in prop::sample::select(vec![0u32, 10, 30, 90, 180]),
        strategy in prop::sample::select(vec![PoolingStrategy::Max, PoolingStrategy::Avg, PoolingStrategy::MinDist, PoolingStrategy::Pwl]),
        seed_vals in prop::collection::vec(-1000.0f32..1000.0, 3 * 37 * 3),
    ) {
        let grid = TransformGrid::rotation(p, 10).unwrap();
        let n = grid.size();
        let entries = (0..3)
            .map(|e| {
                let vs: Vec<&[f32]> = (0..n).map(|t| &seed_vals[(e * 37 + t) * 3..(e * 37 + t) * 3 + 3]).collect();
                build_entry(&format!("e{e}"), &vs, strategy, &grid).unwrap()
            })
            .collect();
        let index = Index::new(grid, strategy, entries).unwrap();
        let bytes = encode_index(&index).unwrap();
        let back = decode_index(&bytes).unwrap();
        prop_assert_eq!(&back, &index);
        prop_assert_eq!(encode_index(&back).unwrap(), bytes);
    }
}

#[test]
fn file_size_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut set = DescriptorSet::new(128).unwrap().with_metadata("kind", "global");
    for i in 0..10 {
        set.push(format!("img{i:02}"), vec![i as f32; 128]).unwrap();
    }
    let path = dir.path().join("g.gdsc");
    write_descriptor_file(&set, &path).unwrap();
    let header = 4 + 4 + 1 + 4 + 8 + 4 + "kind=global\n".len();
    let records = 10 * (4 + 5 + 4 * 128);
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, header + records);
    assert_eq!(read_descriptor_file(&path).unwrap(), set);
}

#[test]
fn repeated_writes_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let build = || {
        let mut set = DescriptorSet::new(3).unwrap();
        set.set_metadata("z", "last");
        set.set_metadata("a", "first");
        for i in 0..5 {
            set.push(format!("id{i}"), vec![i as f32 * 0.1, -1.0, 2.5]).unwrap();
        }
        set
    };
    let (a, b) = (dir.path().join("a.gdsc"), dir.path().join("b.gdsc"));
    write_descriptor_file(&build(), &a).unwrap();
    write_descriptor_file(&build(), &b).unwrap();
    let digest = |p: &std::path::Path| Sha256::digest(std::fs::read(p).unwrap());
    assert_eq!(digest(&a), digest(&b));

    let grid = TransformGrid::scale(2).unwrap();
    let vs: [&[f32]; 3] = [&[1.0, 2.0], &[3.0, -4.0], &[0.5, 0.5]];
    let idx = || Index::new(grid, PoolingStrategy::MinDist, vec![build_entry("x", &vs, PoolingStrategy::MinDist, &grid).unwrap()]).unwrap();
    let (c, d) = (dir.path().join("c.gidx"), dir.path().join("d.gidx"));
    write_index_file(&idx(), &c).unwrap();
    write_index_file(&idx(), &d).unwrap();
    assert_eq!(digest(&c), digest(&d));
    assert_eq!(read_index_file(&c).unwrap(), idx());
}
