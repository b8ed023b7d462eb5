//! Ground-truth-assisted parity bisection.
//!
//! Each pass splits a permutation of the positions into blocks, reveals
//! one parity per block, and binary-searches every odd-parity block down to
//! a single error. Passes continue with doubled block size until the two
//! strings agree. Every revealed parity counts toward the leak.

use rand::seq::SliceRandom;

use crate::crypto::SeedStream;

const MAX_PASSES: usize = 32;

fn parity(bits: &[bool], idx: &[usize]) -> bool {
    idx.iter().fold(false, |p, &i| p ^ bits[i])
}

/// Corrects `bob` toward `alice`. Returns the number of disclosed parity
/// bits, or `None` if the strings still differ after the pass budget.
pub(super) fn parity_bisection(alice: &[bool], bob: &mut [bool], qber: f64, rng: &mut SeedStream) -> Option<usize> {
    let n = alice.len();
    let mut leak = 0;
    let cap = (n / 2).max(1);
    let mut block = if qber > 0.0 { ((0.73 / qber) as usize).max(4) } else { n / 4 }.clamp(1, cap);
    let mut order: Vec<usize> = (0..n).collect();
    for pass in 0..MAX_PASSES {
        if alice == bob {
            return Some(leak);
        }
        if pass > 0 {
            order.shuffle(rng);
        }
        for chunk in order.chunks(block) {
            leak += 1;
            if parity(alice, chunk) == parity(bob, chunk) {
                continue;
            }
            let mut span = chunk;
            while span.len() > 1 {
                let (left, right) = span.split_at(span.len() / 2);
                leak += 1;
                span = if parity(alice, left) != parity(bob, left) { left } else { right };
            }
            bob[span[0]] = !bob[span[0]];
        }
        block = (block * 2).min(cap);
    }
    (alice == bob).then_some(leak)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixes_scattered_errors() {
        let mut rng = SeedStream::new("rec", &[]);
        let alice: Vec<bool> = (0..2000).map(|_| rng.bit()).collect();
        let mut bob = alice.clone();
        for i in (0..2000).step_by(37) {
            bob[i] = !bob[i];
        }
        let leak = parity_bisection(&alice, &mut bob, 0.03, &mut rng).unwrap();
        assert_eq!(alice, bob);
        assert!(leak > 54);
    }

    #[test]
    fn equal_strings_leak_nothing() {
        let mut rng = SeedStream::new("rec", &[]);
        let a = vec![true, false, true];
        let mut b = a.clone();
        assert_eq!(parity_bisection(&a, &mut b, 0.0, &mut rng), Some(0));
    }

    #[test]
    fn even_errors_in_one_block_caught_on_later_pass() {
        let mut rng = SeedStream::new("rec2", &[]);
        let a = vec![false; 64];
        let mut b = a.clone();
        b[3] = true;
        b[5] = true;
        assert!(parity_bisection(&a, &mut b, 0.0, &mut rng).is_some());
        assert_eq!(a, b);
    }
}
