use crate::numeric::SeededRng;

/// Index batches over `n` samples: a seeded shuffle when `shuffle` is set,
/// chunks of `batch_size`, and a final short batch as-is.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut SeededRng, shuffle: bool) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Borrowing batches of `samples` in [`batch_indices`] order.
pub fn batch_iter<'a, T>(
    samples: &'a [T],
    batch_size: usize,
    rng: &mut SeededRng,
    shuffle: bool,
) -> impl Iterator<Item = Vec<&'a T>> + 'a {
    batch_indices(samples.len(), batch_size, rng, shuffle)
        .into_iter()
        .map(move |idx| idx.into_iter().map(|i| &samples[i]).collect())
}
