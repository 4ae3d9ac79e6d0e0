use rand::Rng;

/// Drops each interaction of `items` independently with probability `p_mask`.
///
/// `items` is the sorted index list of a binary item vector; the result is a
/// new sorted subset of it.
pub fn mask_condition<R: Rng + ?Sized>(items: &[u32], p_mask: f64, rng: &mut R) -> Vec<u32> {
    debug_assert!((0.0..=1.0).contains(&p_mask));
    if p_mask <= 0.0 {
        return items.to_vec();
    }
    if p_mask >= 1.0 {
        return Vec::new();
    }
    items
        .iter()
        .copied()
        .filter(|_| !rng.random_bool(p_mask))
        .collect()
}
