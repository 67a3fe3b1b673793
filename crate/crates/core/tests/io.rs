use irisadv::codec::FilterBank;
use irisadv::image::{BinaryImage, GrayImage};
use irisadv::io::bankfile::{read_bank, write_bank};
use irisadv::io::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError};
use irisadv::io::manifest::{load_corpus, write_corpus};
use irisadv::io::netpbm::{decode_pbm, decode_pgm, encode_pbm, encode_pgm, read_pgm, write_pgm, NetpbmError};
use irisadv::surrogate::{build_surrogate, SurrogateConfig};
use irisadv::synth::{generate_corpus, SynthConfig};
use proptest::prelude::*;

fn gray(h: usize, w: usize, values: &[f64]) -> GrayImage {
    GrayImage::from_fn(h, w, |r, c| values[(r * w + c) % values.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgm_round_trip_within_one_level(h in 1usize..12, w in 1usize..40, values in prop::collection::vec(0.0f64..=1.0, 1..64)) {
        let img = gray(h, w, &values);
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        prop_assert_eq!(back.dims(), img.dims());
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1.0 / 65535.0);
        }
        // a second trip is lossless
        prop_assert_eq!(decode_pgm(&encode_pgm(&back)).unwrap(), back);
    }

    #[test]
    fn pbm_round_trip_is_exact(h in 1usize..12, w in 1usize..40, bits in prop::collection::vec(any::<bool>(), 1..64)) {
        let img = BinaryImage::from_fn(h, w, |r, c| bits[(r * w + c) % bits.len()]);
        prop_assert_eq!(decode_pbm(&encode_pbm(&img)).unwrap(), img);
    }
}

#[test]
fn truncated_images_report_payload_offset() {
    let bytes = encode_pgm(&GrayImage::filled(4, 5, 0.5));
    let cut = &bytes[..bytes.len() - 3];
    match decode_pgm(cut) {
        Err(NetpbmError::Truncated { offset, expected, actual }) => {
            assert_eq!(expected, 4 * 5 * 2);
            assert_eq!(actual, expected - 3);
            assert_eq!(offset, bytes.len() - expected);
        }
        other => panic!("{other:?}"),
    }
    let bytes = encode_pbm(&BinaryImage::filled(3, 9, true));
    assert!(matches!(decode_pbm(&bytes[..bytes.len() - 1]), Err(NetpbmError::Truncated { .. })));
    assert!(matches!(decode_pgm(b"P2 1 1 255\n0"), Err(NetpbmError::BadMagic { offset: 0, .. })));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for (cfg, seed) in [(SurrogateConfig::desk_scale(), 1), (SurrogateConfig::scaled(8, 32, 2, 3, 32), 9)] {
        let w = build_surrogate(&cfg, seed).unwrap();
        let bytes = encode_checkpoint(&w);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(encode_checkpoint(&back), bytes);
    }
}

#[test]
fn checkpoint_errors_carry_offsets() {
    let w = build_surrogate(&SurrogateConfig::scaled(8, 32, 2, 3, 32), 5).unwrap();
    let bytes = encode_checkpoint(&w);
    assert!(matches!(decode_checkpoint(b"NOPE...."), Err(CheckpointError::BadMagic)));
    for cut in [6, bytes.len() / 2, bytes.len() - 1] {
        match decode_checkpoint(&bytes[..cut]) {
            Err(CheckpointError::Truncated { offset, available, .. }) => {
                assert!(offset <= cut);
                assert_eq!(available, cut - offset);
            }
            Err(CheckpointError::Malformed { offset, .. }) => assert!(offset <= cut),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let img = gray(3, 7, &[0.0, 0.1, 0.25, 1.0, 0.333]);
    let p = dir.path().join("a.pgm");
    write_pgm(&p, &img).unwrap();
    assert_eq!(read_pgm(&p).unwrap(), decode_pgm(&encode_pgm(&img)).unwrap());

    let w = build_surrogate(&SurrogateConfig::desk_scale(), 2).unwrap();
    let p = dir.path().join("w.irsg");
    save_checkpoint(&p, &w).unwrap();
    assert_eq!(load_checkpoint(&p).unwrap(), w);

    let bank = FilterBank::full_scale();
    let p = dir.path().join("bank.txt");
    write_bank(&p, &bank).unwrap();
    assert_eq!(read_bank(&p).unwrap(), bank);
}

#[test]
fn corpus_round_trips_through_manifest() {
    let bank = FilterBank::desk_scale();
    let cfg = SynthConfig { identities: 3, samples_per_eye: 2, ..SynthConfig::desk() };
    let corpus = generate_corpus(&cfg, &bank).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &corpus).unwrap();
    assert_eq!(load_corpus(&manifest, &bank).unwrap(), corpus);
}
