//! Deterministic low-discrepancy point sets.

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

pub fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Halton point `i` in `[0,1)^dim`, skipping coordinate bases by `offset`.
pub fn halton(i: u64, dim: usize, offset: usize) -> Vec<f64> {
    (0..dim).map(|k| radical_inverse(i + 1, PRIMES[(k + offset) % PRIMES.len()])).collect()
}

pub fn halton4(i: u64) -> [f64; 4] {
    let h = halton(i, 4, 0);
    [h[0], h[1], h[2], h[3]]
}

/// Map a point of the unit cube to the unit sphere (gaussian-free, via spherical-ish normalization
/// of a centered cube point); degenerate center falls back to the first axis.
pub fn cube_to_sphere(u: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        let mut e = vec![0.0; u.len()];
        e[0] = 1.0;
        return e;
    }
    v.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_values() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn halton_mean_is_near_half() {
        let n = 4096;
        let mut s = [0.0; 4];
        for i in 0..n {
            let h = halton4(i);
            for k in 0..4 {
                assert!((0.0..1.0).contains(&h[k]));
                s[k] += h[k];
            }
        }
        for v in s {
            assert!((v / n as f64 - 0.5).abs() < 2e-3);
        }
    }
}
