//! Seeded ChaCha streams. One run seed fans out into independent streams so
//! that, e.g., adding a dropout draw never shifts parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_DROPOUT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_DATA: u64 = 4;
pub const STREAM_GRADCHECK: u64 = 5;

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
