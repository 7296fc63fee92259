//! Seed splitting. One global seed fans out into independent component
//! streams so each component can be reproduced on its own.

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const SPAWN: u64 = 1;
    pub const INIT: u64 = 2;
    pub const ACTION: u64 = 3;
    pub const SHUFFLE: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)`.
///
/// `index` is a fleet index or an episode index depending on the stream.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}
