//! First dimension of the base-2 Sobol sequence (Gray-code construction).

/// The first `n` points, skipping the leading zero: `0.5, 0.75, 0.25, 0.375, ...`.
pub fn sobol_points(n: usize) -> Vec<f64> {
    const BITS: u32 = 52;
    let mut out = Vec::with_capacity(n);
    let mut acc: u64 = 0;
    for i in 0..n as u64 {
        // direction number v_c = 2^(BITS - c), c = index of the lowest zero bit of i
        let c = (!i).trailing_zeros() + 1;
        acc ^= 1u64 << (BITS - c);
        out.push(acc as f64 / (1u64 << BITS) as f64);
    }
    out
}
