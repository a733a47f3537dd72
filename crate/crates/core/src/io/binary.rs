//! Raw little-endian binary formats for bulk data.

use std::path::Path;

use super::write_atomic;
use crate::correspondence::FeatureMap;
use crate::error::{invalid, Error, Result};
use crate::geom::{GroundMask, PointCloud};
use crate::simulator::SemanticClass;

/// x, y, z, intensity as f32.
pub const CLOUD_RECORD_BYTES: usize = 16;
pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u32 = 1;
/// Magic plus five u32 fields.
pub const FMAP_HEADER_BYTES: usize = 24;

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Coordinates and intensities are narrowed to f32.
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * CLOUD_RECORD_BYTES);
    for (p, &i) in cloud.points().iter().zip(cloud.intensities()) {
        for v in [p[0], p[1], p[2], i] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(CLOUD_RECORD_BYTES) {
        return Err(Error::TruncatedRecord {
            len: bytes.len() as u64,
            record: CLOUD_RECORD_BYTES,
        });
    }
    let n = bytes.len() / CLOUD_RECORD_BYTES;
    let mut points = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CLOUD_RECORD_BYTES) {
        points.push([f32_at(rec, 0) as f64, f32_at(rec, 4) as f64, f32_at(rec, 8) as f64]);
        intensities.push(f32_at(rec, 12) as f64);
    }
    PointCloud::new(points, intensities)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_cloud(&super::read_bytes(path)?)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_cloud(cloud))
}

pub fn encode_featmap(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FMAP_HEADER_BYTES + map.data().len() * 4);
    out.extend_from_slice(FMAP_MAGIC);
    for v in [FMAP_VERSION, map.height() as u32, map.width() as u32, map.channels() as u32, map.scale()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_featmap(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < 4 || &bytes[..4] != FMAP_MAGIC {
        return Err(Error::BadMagic { expected: "FMAP" });
    }
    if bytes.len() < FMAP_HEADER_BYTES {
        return Err(Error::TruncatedRecord {
            len: bytes.len() as u64,
            record: FMAP_HEADER_BYTES,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FMAP_VERSION {
        return Err(Error::Version(version));
    }
    let (h, w, c, scale) = (u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16), u32_at(bytes, 20));
    let payload = &bytes[FMAP_HEADER_BYTES..];
    let expected = (h as usize)
        .checked_mul(w as usize)
        .and_then(|x| x.checked_mul(c as usize))
        .ok_or_else(|| invalid("feature map header overflows"))?;
    if !payload.len().is_multiple_of(4) || payload.len() / 4 != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len() / 4,
        });
    }
    let data = payload.chunks_exact(4).map(|b| f32_at(b, 0)).collect();
    FeatureMap::new(h as usize, w as usize, c as usize, scale, data)
}

pub fn read_featmap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    decode_featmap(&super::read_bytes(path)?)
}

pub fn write_featmap(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_featmap(map))
}

/// One byte per point, 1 for ground.
pub fn encode_mask(mask: &GroundMask) -> Vec<u8> {
    mask.is_ground.iter().map(|&g| u8::from(g)).collect()
}

pub fn decode_mask(bytes: &[u8]) -> Result<GroundMask> {
    let is_ground = bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(invalid(format!("mask byte {i} is {other}, expected 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    Ok(GroundMask { is_ground })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<GroundMask> {
    decode_mask(&super::read_bytes(path)?)
}

pub fn write_mask(mask: &GroundMask, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_mask(mask))
}

/// One class id byte per point.
pub fn encode_labels(labels: &[SemanticClass]) -> Vec<u8> {
    labels.iter().map(|&c| c as u8).collect()
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<SemanticClass>> {
    bytes.iter().map(|&b| SemanticClass::from_u8(b)).collect()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<SemanticClass>> {
    decode_labels(&super::read_bytes(path)?)
}

pub fn write_labels(labels: &[SemanticClass], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_truncated_clouds() {
        assert!(decode_cloud(&[]).unwrap().is_empty());
        assert!(matches!(decode_cloud(&[0u8; 17]), Err(Error::TruncatedRecord { len: 17, record: 16 })));
    }

    #[test]
    fn non_finite_cloud_rejected() {
        let mut bytes = encode_cloud(&PointCloud::new(vec![[1.0, 2.0, 3.0]], vec![0.5]).unwrap());
        bytes[0..4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_cloud(&bytes), Err(Error::Invalid(_))));
    }

    #[test]
    fn one_cell_featmap_layout() {
        let map = FeatureMap::new(1, 1, 1, 1, vec![2.5]).unwrap();
        let bytes = encode_featmap(&map);
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"FMAP");
        assert_eq!(&bytes[24..], &2.5f32.to_le_bytes());
        assert_eq!(decode_featmap(&bytes).unwrap().data(), &[2.5]);
    }

    #[test]
    fn featmap_header_errors() {
        let mut bytes = encode_featmap(&FeatureMap::new(1, 1, 1, 1, vec![2.5]).unwrap());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_featmap(&wrong), Err(Error::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_featmap(&v2), Err(Error::Version(2))));

        // header claims 4x4x8 = 128 floats, 100 follow
        bytes.truncate(FMAP_HEADER_BYTES);
        for (k, v) in [4u32, 4, 8].into_iter().enumerate() {
            bytes[8 + 4 * k..12 + 4 * k].copy_from_slice(&v.to_le_bytes());
        }
        bytes.extend(std::iter::repeat_n(0u8, 400));
        let err = decode_featmap(&bytes).unwrap_err();
        assert!(matches!(err, Error::PayloadSize { expected: 128, found: 100 }));
        assert!(err.to_string().contains("payload size mismatch"));
    }

    #[test]
    fn mask_and_label_bytes() {
        let mask = GroundMask {
            is_ground: vec![true, false, true],
        };
        assert_eq!(encode_mask(&mask), vec![1, 0, 1]);
        assert_eq!(decode_mask(&[1, 0, 1]).unwrap(), mask);
        assert!(decode_mask(&[2]).is_err());
        assert_eq!(decode_labels(&[0, 3]).unwrap(), vec![SemanticClass::Ground, SemanticClass::Wall]);
        assert!(decode_labels(&[4]).is_err());
    }

    fn cloud_bytes() -> impl Strategy<Value = Vec<u8>> {
        let coord = -1.0e4f32..1.0e4f32;
        prop::collection::vec((coord.clone(), coord.clone(), coord, 0.0f32..=1.0f32), 0..64).prop_map(|recs| {
            recs.into_iter()
                .flat_map(|(x, y, z, i)| [x, y, z, i])
                .flat_map(f32::to_le_bytes)
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn cloud_bytes_round_trip(bytes in cloud_bytes()) {
            prop_assert_eq!(encode_cloud(&decode_cloud(&bytes).unwrap()), bytes);
        }

        #[test]
        fn featmap_round_trip(h in 1usize..6, w in 1usize..6, c in 1usize..5, scale in 1u32..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data = (0..h * w * c).map(|_| f32::from_bits(rng.random::<u32>() & !(1 << 30))).collect();
            let map = FeatureMap::new(h, w, c, scale, data).unwrap();
            let bytes = encode_featmap(&map);
            let back = decode_featmap(&bytes).unwrap();
            prop_assert_eq!(encode_featmap(&back), bytes);
            prop_assert_eq!(back, map);
        }

        #[test]
        fn mask_and_labels_round_trip(flags in prop::collection::vec(any::<bool>(), 0..200), ids in prop::collection::vec(0u8..4, 0..200)) {
            let mask = GroundMask { is_ground: flags };
            prop_assert_eq!(decode_mask(&encode_mask(&mask)).unwrap(), mask);
            prop_assert_eq!(encode_labels(&decode_labels(&ids).unwrap()), ids);
        }
    }
}
