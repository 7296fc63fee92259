//! Binary policy checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field         | bytes                                        |
//! |---------------|----------------------------------------------|
//! | magic         | `DCNFCKPT`                                   |
//! | version       | u32                                          |
//! | fleet         | u8 (`0` = A, `1` = B)                        |
//! | seed          | u64                                          |
//! | episodes      | u64                                          |
//! | tensor count  | u32                                          |
//! | per tensor    | u16 name length, name (UTF-8), u8 rank, u32 × rank dims |
//! | payload count | u64 number of f32 values                     |
//! | payload       | f32 × count, tensors in declared order       |

use std::path::Path;

use deconflict_core::nn::{tensor_layout, NetDims, PolicyNetwork, TENSOR_COUNT};
use deconflict_core::scenario::FleetId;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"DCNFCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u32),
    #[error("truncated checkpoint: header ends early at byte {at}")]
    TruncatedHeader { at: usize },
    #[error("truncated payload: expected {expected} values, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("payload length {found} does not match declared shapes ({expected} values)")]
    PayloadMismatch { expected: usize, found: usize },
    #[error("shape table mismatch: {0}")]
    Shape(String),
    #[error("checkpoint is for fleet {found}, expected fleet {expected}")]
    WrongFleet { expected: FleetId, found: FleetId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fleet: FleetId,
    pub seed: u64,
    pub episodes: u64,
    pub tensors: Vec<(String, Vec<usize>)>,
    pub values: Vec<f32>,
}

impl Checkpoint {
    pub fn from_network(
        net: &PolicyNetwork<f32>,
        fleet: FleetId,
        seed: u64,
        episodes: u64,
    ) -> Self {
        Self {
            fleet,
            seed,
            episodes,
            tensors: net
                .params
                .iter()
                .map(|p| (p.name.to_string(), p.shape.clone()))
                .collect(),
            values: net.flat_values(),
        }
    }

    /// Rebuild the network, checking the shape table against the layout its
    /// dimensions imply.
    pub fn to_network(&self) -> Result<PolicyNetwork<f32>, CheckpointError> {
        if self.tensors.len() != TENSOR_COUNT {
            return Err(CheckpointError::Shape(format!(
                "{} tensors, expected {TENSOR_COUNT}",
                self.tensors.len()
            )));
        }
        let shape = |i: usize, d: usize| self.tensors[i].1.get(d).copied().unwrap_or(0);
        // ownship encoder [embed, obs]; trunk layer 1 [hidden, 2·embed]; actor [actions, hidden]
        let dims = NetDims {
            obs: shape(0, 1),
            embed: shape(0, 0),
            hidden: shape(5, 0),
            actions: shape(9, 0),
        };
        for ((name, shp), (want_name, want_shape)) in self.tensors.iter().zip(tensor_layout(dims)) {
            if name != want_name || *shp != want_shape {
                return Err(CheckpointError::Shape(format!(
                    "tensor `{name}` {shp:?}, expected `{want_name}` {want_shape:?}"
                )));
            }
        }
        let mut net = PolicyNetwork::<f32>::zeros(dims);
        net.load_flat(&self.values)
            .map_err(|_| CheckpointError::PayloadMismatch {
                expected: net.param_count(),
                found: self.values.len(),
            })?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.fleet.index() as u8);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.episodes.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, shape) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for d in shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let fleet = match r.take(1)?[0] {
            0 => FleetId::A,
            1 => FleetId::B,
            other => return Err(CheckpointError::Shape(format!("fleet byte {other}"))),
        };
        let seed = r.u64()?;
        let episodes = r.u64()?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| CheckpointError::Shape("tensor name is not UTF-8".into()))?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            tensors.push((name, shape));
        }
        let declared: usize = tensors
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        let count = r.u64()? as usize;
        if count != declared {
            return Err(CheckpointError::PayloadMismatch {
                expected: declared,
                found: count,
            });
        }
        let rest = &bytes[r.pos..];
        if rest.len() != count * 4 {
            return Err(CheckpointError::TruncatedPayload {
                expected: count,
                found: rest.len() / 4,
            });
        }
        let values = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            fleet,
            seed,
            episodes,
            tensors,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CheckpointError::TruncatedHeader {
                at: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let net = PolicyNetwork::<f32>::init(NetDims::DEFAULT, 9);
        Checkpoint::from_network(&net, FleetId::B, 9, 12)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let net = back.to_network().unwrap();
        assert_eq!(
            Checkpoint::from_network(&net, FleetId::B, 9, 12).to_bytes(),
            bytes
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn any_small_network_round_trips(
            embed in 1usize..6,
            hidden in 1usize..6,
            seed in proptest::prelude::any::<u64>(),
            prefix in 0usize..64,
        ) {
            let dims = NetDims { obs: 4, embed, hidden, actions: 3 };
            let net = PolicyNetwork::<f32>::init(dims, seed);
            let ck = Checkpoint::from_network(&net, FleetId::A, seed, 1);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap().to_network().unwrap();
            proptest::prop_assert_eq!(back.flat_values(), net.flat_values());
            // Any strict prefix is rejected rather than misread.
            let cut = prefix.min(bytes.len() - 1);
            proptest::prop_assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 10);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        let expected = PolicyNetwork::<f32>::zeros(NetDims::DEFAULT).param_count();
        match err {
            CheckpointError::TruncatedPayload { expected: e, found } => {
                assert_eq!(e, expected);
                assert_eq!(found, expected - 3);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::BadMagic)
        ));
        let mut bytes = sample().to_bytes();
        bytes[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version(9))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..5]),
            Err(CheckpointError::TruncatedHeader { .. })
        ));
    }

    #[test]
    fn shape_mismatch_detected() {
        let mut ck = sample();
        ck.tensors[4].1 = vec![64, 63];
        ck.values.truncate(ck.values.len() - 64);
        let err = ck.to_network().unwrap_err();
        assert!(matches!(err, CheckpointError::Shape(_)), "{err}");
    }
}
