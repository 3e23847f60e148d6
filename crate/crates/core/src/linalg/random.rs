//! Seeded, splittable randomness and random matrix ensembles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::matrix::{inner, vec_norm, ComplexMatrix};

/// Root of a reproducible random stream tree.
///
/// Every consumer derives its own substream from the seed plus a tag path, so
/// results do not depend on evaluation order or thread count: the same
/// `(seed, tags)` always yields the same stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child generator for the given tag path.
    pub fn stream(&self, tags: &[u64]) -> ChaCha12Rng {
        let mut s = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        for &t in tags {
            s = splitmix64(s ^ t);
        }
        ChaCha12Rng::seed_from_u64(s)
    }

    /// Child factory rather than generator; for nested derivations.
    pub fn child(&self, tag: u64) -> SeededRng {
        SeededRng {
            seed: splitmix64(self.seed ^ tag),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Standard complex Gaussian entry: re and im each N(0, 1/2) so E|z|^2 = 1.
pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    // Box-Muller; two uniforms give one complex sample.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-u1.ln()).sqrt();
    Complex64::new(r * u2.cos(), r * u2.sin())
}

/// Matrix with i.i.d. standard complex Gaussian entries (Ginibre ensemble).
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-distributed n x n unitary.
///
/// Ginibre sample, Gram-Schmidt with one re-orthogonalization pass, then a
/// phase fix that makes the distribution Haar rather than QR-biased.
pub fn haar_unitary(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    assert!(n >= 1, "haar_unitary needs n >= 1");
    let g = ginibre(n, n, rng);
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| g.column(j)).collect();
    let mut diag_phase = vec![Complex64::new(1.0, 0.0); n];
    for j in 0..n {
        // Two orthogonalization passes keep the result unitary to ~1e-15.
        for _pass in 0..2 {
            for i in 0..j {
                let proj = {
                    let (head, tail) = cols.split_at_mut(j);
                    inner(&head[i], &tail[0])
                };
                let qi = cols[i].clone();
                for (c, q) in cols[j].iter_mut().zip(&qi) {
                    *c -= proj * q;
                }
            }
        }
        let norm = vec_norm(&cols[j]);
        // The diagonal of R carries the leftover phase; divide it out so the
        // column distribution is exactly Haar (Mezzadri correction).
        let pivot = cols[j][j] / norm;
        let phase = if pivot.norm() > 1e-300 {
            pivot / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        diag_phase[j] = phase.conj();
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }
    let mut u = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let scaled: Vec<Complex64> = cols[j].iter().map(|z| z * diag_phase[j]).collect();
        u.set_column(j, &scaled);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_tag_separated() {
        let root = SeededRng::new(42);
        let a: Vec<u64> = (0..4).map(|_| root.stream(&[1, 2]).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| root.stream(&[1, 2]).gen()).collect();
        assert_eq!(a, b);
        let c: u64 = root.stream(&[1, 3]).gen();
        assert_ne!(a[0], c);
    }

    #[test]
    fn haar_unitary_n1_is_unimodular() {
        let mut rng = SeededRng::new(5).stream(&[0]);
        let u = haar_unitary(1, &mut rng);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = SeededRng::new(7).stream(&[0]);
        let u = haar_unitary(4, &mut rng);
        assert!(u.unitarity_error() < 1e-12);
    }

    #[test]
    fn haar_unitary_columns_are_normalized() {
        let mut rng = SeededRng::new(11).stream(&[0]);
        let u = haar_unitary(8, &mut rng);
        for j in 0..8 {
            assert!((vec_norm(&u.column(j)) - 1.0).abs() < 1e-12);
        }
    }
}
