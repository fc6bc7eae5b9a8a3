//! Deterministic derivation of independent RNG seeds from a base seed and a
//! salt (member index, episode number, ...), so parallel work items get
//! decorrelated but reproducible streams.

/// splitmix64 finalizer over the combined inputs.
pub fn derive(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
