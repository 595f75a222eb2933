//! Deterministic sub-seed derivation so independent random streams never
//! alias across pipeline stages.

/// Mix a base seed with a stage tag (splitmix64 over the tag bytes).
pub(crate) fn derive(seed: u64, tag: &str) -> u64 {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &b in tag.as_bytes() {
        state = splitmix64(state.wrapping_add(u64::from(b)));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
