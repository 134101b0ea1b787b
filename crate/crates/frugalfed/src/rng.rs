//! Deterministic randomness.
//!
//! Every random draw in the simulator flows from a [`SeedTree`]: a splittable
//! seed derivation scheme built on the splitmix64 finalizer. Branching by a
//! string label or an integer index yields an independent subtree, so adding a
//! consumer of randomness in one place never perturbs the stream seen by
//! another. There is no global RNG anywhere in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche behaviour for cheap key derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in a deterministic seed-derivation tree.
///
/// ```
/// use frugalfed::rng::SeedTree;
///
/// let root = SeedTree::new(42);
/// let a = root.branch("partition").rng();
/// let b = root.branch("partition").rng();
/// assert_eq!(a, b); // same path, same stream
/// assert_ne!(root.branch("partition").state(), root.branch("select").state());
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    state: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree {
            state: mix(seed ^ 0x5157_8FFD_66A4_E4E5),
        }
    }

    /// Derive a child node named by a string label.
    pub fn branch(&self, label: &str) -> SeedTree {
        let bytes = label.as_bytes();
        let mut state = mix(self.state ^ bytes.len() as u64);
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            state = mix(state ^ u64::from_le_bytes(word));
        }
        SeedTree { state }
    }

    /// Derive a child node by integer index (round number, client id, ...).
    pub fn index(&self, i: u64) -> SeedTree {
        SeedTree {
            state: mix(self.state ^ mix(i)),
        }
    }

    /// Raw derived state, usable as a seed value.
    pub fn state(&self) -> u64 {
        self.state
    }

    /// Instantiate a generator at this node.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}
