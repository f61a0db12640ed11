use proptest::prelude::*;

use heartsplit_core::link::{
    read_frame, MsgType, Payload, ProtocolError, WireMessage, FEATURE_VALUES, FRAME_MAGIC,
    MAX_FRAME_LEN,
};
use heartsplit_core::AamiClass;

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1e6f32..1e6f32,
        Just(0.0f32),
        Just(f32::MAX),
        Just(f32::MIN_POSITIVE),
    ]
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (any::<[u8; 32]>(), any::<u16>())
            .prop_map(|(weights_hash, fs)| Payload::Hello { weights_hash, fs }),
        finite_f32().prop_map(|bpm| Payload::HeartRate { bpm }),
        proptest::collection::vec(finite_f32(), FEATURE_VALUES)
            .prop_map(|values| Payload::FeatureMap { values }),
        (0usize..4, proptest::array::uniform4(0.0f32..1.0)).prop_map(|(k, probs)| {
            Payload::Classification {
                class: AamiClass::CLASSIFIED[k],
                probs,
            }
        }),
        (any::<u16>(), any::<u8>()).prop_map(|(fs, reason)| Payload::RateChange { fs, reason }),
        (any::<u32>(), any::<u8>()).prop_map(|(window_start, reason)| Payload::NoiseReport {
            window_start,
            reason
        }),
    ]
}

fn message() -> impl Strategy<Value = WireMessage> {
    (any::<u32>(), any::<u32>(), payload()).prop_map(|(s, b, p)| WireMessage::new(s, b, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encode_decode_round_trip(msg in message()) {
        let bytes = msg.encode();
        prop_assert_eq!(bytes.len(), msg.msg_type().frame_len());
        let (back, used) = WireMessage::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn decoding_ignores_trailing_bytes(msg in message(), tail in proptest::collection::vec(any::<u8>(), 0..16)) {
        let mut bytes = msg.encode();
        let n = bytes.len();
        bytes.extend(tail);
        let (back, used) = WireMessage::decode(&bytes).unwrap();
        prop_assert_eq!(used, n);
        prop_assert_eq!(back, msg);
    }
}

/// Mutations that keep most of a frame intact so the fuzzer reaches deep
/// decoder paths, not only the magic check.
#[derive(Debug, Clone)]
enum Mutation {
    Flip(usize, u8),
    Truncate(usize),
    Extend(Vec<u8>),
    Length(u32),
    Type(u8),
    Random(Vec<u8>),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), 1u8..=255).prop_map(|(i, m)| Mutation::Flip(i, m)),
        any::<usize>().prop_map(Mutation::Truncate),
        proptest::collection::vec(any::<u8>(), 1..64).prop_map(Mutation::Extend),
        any::<u32>().prop_map(Mutation::Length),
        any::<u8>().prop_map(Mutation::Type),
        proptest::collection::vec(any::<u8>(), 0..700).prop_map(Mutation::Random),
    ]
}

fn apply(mut bytes: Vec<u8>, m: &Mutation) -> Vec<u8> {
    match m {
        Mutation::Flip(i, x) => {
            let i = i % bytes.len();
            bytes[i] ^= x;
        }
        Mutation::Truncate(n) => bytes.truncate(n % bytes.len()),
        Mutation::Extend(tail) => bytes.extend(tail),
        Mutation::Length(l) => bytes[4..8].copy_from_slice(&l.to_le_bytes()),
        Mutation::Type(t) => bytes[8] = *t,
        Mutation::Random(r) => {
            let mut out = FRAME_MAGIC.to_vec();
            out.extend(r);
            return out;
        }
    }
    bytes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn decoder_survives_fuzzed_frames(msg in message(), m in mutation()) {
        let bytes = apply(msg.encode(), &m);
        match WireMessage::decode(&bytes) {
            Ok((decoded, used)) => {
                prop_assert!(used <= bytes.len());
                prop_assert_eq!(decoded.encode(), bytes[..used].to_vec());
            }
            Err(e) => {
                // Every rejection is a protocol error naming what failed.
                prop_assert!(!e.to_string().is_empty());
            }
        }
        let mut cursor = std::io::Cursor::new(&bytes);
        let _ = read_frame(&mut cursor);
    }
}

#[test]
fn feature_map_payload_is_540_bytes() {
    assert_eq!(MsgType::FeatureMap.payload_len(), 540);
    assert_eq!(MsgType::FeatureMap.frame_len(), 557);
    assert_eq!(MsgType::HeartRate.frame_len(), 21);
}

#[test]
fn huge_declared_length_is_refused_without_allocation() {
    let mut frame = FRAME_MAGIC.to_vec();
    frame.extend(1_000_000_000u32.to_le_bytes());
    frame.push(2);
    assert!(matches!(
        WireMessage::decode(&frame),
        Err(ProtocolError::Length(_))
    ));
    let mut cursor = std::io::Cursor::new(frame);
    assert!(read_frame(&mut cursor).is_err());
    assert_eq!(MAX_FRAME_LEN, 1 << 20);
}
