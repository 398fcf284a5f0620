use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Master seed for every generator in the crate.
///
/// Streams are ChaCha8 seeded through `seed_from_u64`; child seeds come from
/// a counter-based SplitMix64 mix of `(seed, stream, index)`, so adding a
/// new child never shifts the streams of existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn derive(self, stream: u64, index: u64) -> RngSeed {
        let a = splitmix64(self.0 ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngSeed(splitmix64(a ^ splitmix64(index)))
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
