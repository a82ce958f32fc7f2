use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The single generator every stochastic step of a run draws from.
pub type MasterRng = ChaCha8Rng;

pub fn master_rng(seed: u64) -> MasterRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complete position of a [`MasterRng`]: key, stream and word offset.
///
/// Text form: `<64 hex digits seed>:<stream>:<word position>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &MasterRng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> MasterRng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

impl fmt::Display for RngState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.seed {
            write!(f, "{b:02x}")?;
        }
        write!(f, ":{}:{}", self.stream, self.word_pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rng state `{0}`")]
pub struct RngStateError(String);

impl FromStr for RngState {
    type Err = RngStateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RngStateError(s.to_string());
        let mut parts = s.split(':');
        let (hex, stream, pos) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(st), Some(p), None) => (h, st, p),
            _ => return Err(err()),
        };
        if hex.len() != 64 || !hex.is_ascii() {
            return Err(err());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| err())?;
        }
        Ok(Self {
            seed,
            stream: stream.parse().map_err(|_| err())?,
            word_pos: pos.parse().map_err(|_| err())?,
        })
    }
}
