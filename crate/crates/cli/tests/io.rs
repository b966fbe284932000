use metamorph_cli::io::{decode_fld, decode_pgm, encode_fld, encode_pgm};
use metamorph_core::{GridGeometry, ScalarField};
use proptest::prelude::*;

fn unit_field() -> impl Strategy<Value = ScalarField> {
    (2usize..12, 2usize..12).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0..=1.0f64, h * w)
            .prop_map(move |v| ScalarField::new(GridGeometry::new(h, w).unwrap(), v).unwrap())
    })
}

proptest! {
    #[test]
    fn pgm_round_trip_is_within_one_level(f in unit_field(), sixteen in any::<bool>()) {
        let maxval = if sixteen { 65535 } else { 255 };
        let back = decode_pgm(&encode_pgm(&f, maxval)).unwrap();
        prop_assert_eq!(back.geometry(), f.geometry());
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn fld_round_trip_is_exact(f in unit_field(), scale in -1e6..1e6f64) {
        let f = f.scaled(scale).unwrap();
        prop_assert_eq!(decode_fld(&encode_fld(&f)).unwrap(), f);
    }
}
