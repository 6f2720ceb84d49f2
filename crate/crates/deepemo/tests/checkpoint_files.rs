use deepemo::checkpoint_file::{decode, encode, load, save, CheckpointFileError};
use deepemo_core::features::FeatureSettings;
use deepemo_core::nn::{Arch, Checkpoint, CheckpointMeta, ResNet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn checkpoint(classes: usize, seed: u64, epoch: u32) -> Checkpoint {
    let config = Arch::ResNetTiny.config(classes);
    let model = ResNet::<f32>::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let features = Some(FeatureSettings::for_model(&config));
    Checkpoint::from_model(
        &model,
        CheckpointMeta {
            epoch,
            seed,
            features,
        },
    )
}

#[test]
fn file_round_trip_restores_an_identical_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.demo");
    let cp = checkpoint(8, 3, 12);
    save(&cp, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, cp);
    assert_eq!(
        back.to_model().unwrap().state_dict(),
        cp.to_model().unwrap().state_dict()
    );
}

#[test]
fn missing_file_reports_its_path() {
    let err = load(std::path::Path::new("/nonexistent/x.demo")).unwrap_err();
    assert!(matches!(err, CheckpointFileError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/x.demo"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoding_is_stable(classes in 2usize..12, seed in any::<u64>(), epoch in any::<u32>()) {
        let cp = checkpoint(classes, seed, epoch);
        let bytes = encode(&cp);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(encode(&back), bytes);
        prop_assert_eq!(back, cp);
    }

    #[test]
    fn any_flipped_byte_is_rejected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = encode(&checkpoint(4, 1, 1));
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(decode(&bytes).is_err(), "flip at byte {}", i);
    }

    #[test]
    fn any_truncation_is_rejected(cut in any::<prop::sample::Index>()) {
        let bytes = encode(&checkpoint(4, 1, 1));
        let n = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..n]).is_err());
    }
}
