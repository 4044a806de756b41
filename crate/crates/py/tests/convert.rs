use cmdiad::convert::{flatten_patches, mask_from_rows, mask_to_rows, score_map_from_rows, score_map_to_rows};

#[test]
fn nested_rows_round_trip_row_major() {
    let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
    let map = score_map_from_rows(rows.clone()).unwrap();
    assert_eq!(map.shape(), (2, 3));
    assert_eq!(map.get(1, 0), 4.0);
    assert_eq!(score_map_to_rows(&map), rows);

    let mask = vec![vec![true, false], vec![false, false], vec![true, true]];
    let m = mask_from_rows(mask.clone()).unwrap();
    assert_eq!(m.count(), 3);
    assert_eq!(mask_to_rows(&m), mask);
}

#[test]
fn ragged_or_empty_grids_are_rejected() {
    assert!(score_map_from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(score_map_from_rows(vec![]).is_err());
    assert!(mask_from_rows(vec![vec![]]).is_err());
    assert!(flatten_patches(vec![vec![0.0; 4], vec![0.0; 3]]).is_err());
    assert_eq!(flatten_patches(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), (2, vec![1.0, 2.0, 3.0, 4.0]));
}
