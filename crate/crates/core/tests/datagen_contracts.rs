use std::collections::HashMap;

use compgen_core::datagen::{
    build_test_sets, combo_counts, enumerate_training_combos, generate_dataset, Combo, Condition, Dataset,
    DatasetError, Split, CONSTANT_COMBOS, LEAVE_OUT_COMBOS,
};
use compgen_core::language::NA;
use proptest::prelude::*;

fn all_cells() -> Vec<Condition> {
    let mut out = Vec::new();
    for joints in [true, false] {
        for visible in [1, 2] {
            for colors in [1, 6] {
                for shapes in [4, 9] {
                    for exclusive in [true, false] {
                        for actions in [2, 4] {
                            let c = Condition { actions, visible, shapes, colors, exclusive, joints };
                            if c.validate().is_ok() {
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn spread(counts: &[(Combo, usize)]) -> usize {
    let max = counts.iter().map(|c| c.1).max().unwrap();
    let min = counts.iter().map(|c| c.1).min().unwrap();
    max - min
}

#[test]
fn every_valid_cell_is_balanced_and_leaves_out_the_test_combos() {
    let cells = all_cells();
    assert!(cells.len() >= 20, "{} cells", cells.len());
    for cell in cells {
        let combos = enumerate_training_combos(&cell).unwrap();
        for lo in LEAVE_OUT_COMBOS {
            assert!(!combos.contains(&lo), "{} enumerates {lo}", cell.name());
        }
        let n = combos.len() + 7;
        for split in [Split::Train, Split::Validation] {
            let d = generate_dataset(&cell, n, split, 5, 0.5).unwrap();
            assert_eq!(d.episodes.len(), n);
            let counts = combo_counts(&d);
            assert_eq!(counts.len(), combos.len(), "{}", cell.name());
            assert!(spread(&counts) <= 1, "{} {counts:?}", cell.name());
            for ep in &d.episodes {
                assert!(!LEAVE_OUT_COMBOS.contains(&ep.combo), "{} generated {}", cell.name(), ep.combo);
                assert_eq!(ep.frames[0].joints.len(), cell.joint_width());
            }
        }
    }
}

#[test]
fn large_all_color_set_splits_evenly() {
    let cell: Condition = "V1-C6-O4-A2-notX".parse().unwrap();
    let combos = enumerate_training_combos(&cell).unwrap();
    assert_eq!(combos.len(), 44);
    let d = generate_dataset(&cell, 5000, Split::Train, 1, 0.5).unwrap();
    for (combo, n) in combo_counts(&d) {
        assert!(n == 113 || n == 114, "{combo}: {n}");
    }
}

#[test]
fn test_sets_hold_only_their_interactions() {
    let (constant, compgen) = build_test_sets(1, true, 3, 9).unwrap();
    assert_eq!(constant.episodes.len(), 12);
    assert_eq!(compgen.episodes.len(), 12);
    let mut seen: HashMap<Combo, usize> = HashMap::new();
    for ep in &constant.episodes {
        assert!(CONSTANT_COMBOS.contains(&ep.combo));
        *seen.entry(ep.combo).or_default() += 1;
    }
    assert!(seen.values().all(|&n| n == 3));
    for ep in &compgen.episodes {
        assert!(LEAVE_OUT_COMBOS.contains(&ep.combo));
        assert!(ep.scrubbed);
        assert!(ep.frames.iter().all(|f| f.lang_input == NA));
        assert_eq!(ep.target_track(), ep.word_track());
    }
}

#[test]
fn write_read_round_trip_is_byte_exact() {
    let cell: Condition = "V2-C6-O4-A4-notX".parse().unwrap();
    let n = enumerate_training_combos(&cell).unwrap().len() + 5;
    let d = generate_dataset(&cell, n, Split::Validation, 11, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ds");
    d.write(&path).unwrap();
    let back = Dataset::read(&path).unwrap();
    assert_eq!(back, d);
    assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
}

#[test]
fn identical_seeds_give_identical_files() {
    let cell = Condition::default();
    let a = generate_dataset(&cell, 25, Split::Train, 3, 0.5).unwrap().to_bytes();
    let b = generate_dataset(&cell, 25, Split::Train, 3, 0.5).unwrap().to_bytes();
    let c = generate_dataset(&cell, 25, Split::Train, 4, 0.5).unwrap().to_bytes();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn corrupted_payload_fails_the_checksum() {
    let d = generate_dataset(&Condition::default(), 8, Split::Train, 2, 0.5).unwrap();
    let mut bytes = d.to_bytes();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(matches!(Dataset::read_from(&bytes[..]), Err(DatasetError::Checksum { .. })));
    let short = &d.to_bytes()[..mid];
    assert!(Dataset::read_from(short).is_err());
}

#[test]
fn joint_free_files_declare_zero_width() {
    let cell: Condition = "V1-C1-O4-A2-X-NJ".parse().unwrap();
    let d = generate_dataset(&cell, 4, Split::Train, 0, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nj.ds");
    d.write(&path).unwrap();
    let header = Dataset::read_header(&path).unwrap();
    assert!(header.iter().any(|(k, v)| k == "joint_width" && v == "0"));
    assert!(header.iter().any(|(k, v)| k == "joints" && v == "false"));
    assert!(Dataset::read(&path).unwrap().episodes.iter().all(|e| e.frames.iter().all(|f| f.joints.is_empty())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn condition_labels_round_trip(idx in 0usize..64) {
        let cells = all_cells();
        let c = cells[idx % cells.len()];
        let parsed: Condition = c.name().parse().unwrap();
        prop_assert_eq!(parsed, c);
    }

    #[test]
    fn balance_holds_for_any_size(n in 32usize..100, seed in any::<u64>()) {
        let cell: Condition = "V1-C1-O9-A4-X".parse().unwrap();
        let d = generate_dataset(&cell, n, Split::Train, seed, 0.5).unwrap();
        let counts = combo_counts(&d);
        let combos = enumerate_training_combos(&cell).unwrap().len();
        let lo = n / combos;
        for (_, k) in counts {
            prop_assert!(k == lo || k == lo + 1);
        }
    }

    #[test]
    fn masked_targets_follow_the_mask(seed in any::<u64>()) {
        let d = generate_dataset(&Condition::default(), 8, Split::Train, seed, 0.5).unwrap();
        for ep in &d.episodes {
            let full = ep.word_track();
            let target = ep.target_track();
            for (t, w) in target.0.iter().zip(&full.0) {
                prop_assert!(*t == *w || *t == NA);
            }
            if ep.scrubbed {
                prop_assert!(ep.input_track().0.iter().all(|&t| t == NA));
            } else {
                prop_assert_eq!(ep.input_track(), target);
            }
        }
    }
}
