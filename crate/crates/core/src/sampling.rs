use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};

/// Removes `size` items drawn uniformly without replacement from the
/// population described by `counts` (items per label) and adds the drawn
/// per-label counts to `out`.
///
/// Equivalent in law to taking the first `size` items of a uniformly random
/// permutation of the population.
pub(crate) fn draw_without_replacement<R: Rng + ?Sized>(counts: &mut [u64], size: u64, out: &mut [u64], rng: &mut R) {
    let mut population: u64 = counts.iter().sum();
    debug_assert!(size <= population);
    let mut remaining = size;
    for (label, count) in counts.iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        if *count == 0 {
            continue;
        }
        let taken = if *count == population {
            remaining
        } else {
            Hypergeometric::new(population, *count, remaining)
                .expect("valid hypergeometric parameters")
                .sample(rng)
        };
        population -= *count;
        *count -= taken;
        out[label] += taken;
        remaining -= taken;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn draws_conserve_items() {
        let mut r = rng::seeded(1);
        for _ in 0..1000 {
            let mut counts = [7u64, 0, 5, 12];
            let mut out = [0u64; 4];
            draw_without_replacement(&mut counts, 9, &mut out, &mut r);
            assert_eq!(out.iter().sum::<u64>(), 9);
            assert_eq!(counts.iter().sum::<u64>(), 15);
            assert_eq!(out[1], 0);
            for i in 0..4 {
                assert_eq!(counts[i] + out[i], [7u64, 0, 5, 12][i]);
            }
        }
    }

    #[test]
    fn hypergeometric_moments() {
        // Mean K*s/N and variance s*(K/N)*(1-K/N)*(N-s)/(N-1).
        let mut r = rng::seeded(2);
        for &(n, k, s) in &[(10u64, 3u64, 4u64), (6150, 2050, 410), (12300, 1, 410), (40, 39, 20)] {
            let trials = 40_000;
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..trials {
                let mut counts = [k, n - k];
                let mut out = [0u64; 2];
                draw_without_replacement(&mut counts, s, &mut out, &mut r);
                let x = out[0] as f64;
                sum += x;
                sq += x * x;
            }
            let mean = sum / trials as f64;
            let var = sq / trials as f64 - mean * mean;
            let (nf, kf, sf) = (n as f64, k as f64, s as f64);
            let m = sf * kf / nf;
            let v = sf * (kf / nf) * (1.0 - kf / nf) * (nf - sf) / (nf - 1.0);
            let se = (v / trials as f64).sqrt();
            assert!((mean - m).abs() < 5.0 * se + 1e-12, "mean {mean} vs {m} for {n} {k} {s}");
            assert!((var - v).abs() < 0.05 * v + 1e-9, "var {var} vs {v} for {n} {k} {s}");
        }
    }
}
