use cohortgate::interpret::{rank_windows, top_window, RankedWindow};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_top(s: &[f64], w: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=s.len() - w {
        let m = s[start..start + w].iter().sum::<f64>() / w as f64;
        if m > best.1 {
            best = (start, m);
        }
    }
    best
}

/// Enumerates all windows of the original series that avoid taken slots.
fn brute_rank(s: &[f64], w: usize, n: usize) -> Vec<(usize, f64)> {
    let mut taken = vec![false; s.len()];
    let mut out = Vec::new();
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for start in 0..=s.len() - w {
            if taken[start..start + w].iter().any(|&t| t) {
                continue;
            }
            let m = s[start..start + w].iter().sum::<f64>() / w as f64;
            if best.map_or(true, |b| m > b.1) {
                best = Some((start, m));
            }
        }
        match best {
            Some(b) => {
                taken[b.0..b.0 + w].iter_mut().for_each(|t| *t = true);
                out.push(b);
            }
            None => break,
        }
    }
    out
}

fn instance(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, usize, usize) {
    let t = rng.gen_range(1..=2000);
    // Even instances use eighths so window sums are exact and ties common.
    let s: Vec<f64> = if k % 2 == 0 {
        (0..t).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect()
    } else {
        (0..t).map(|_| rng.gen::<f64>()).collect()
    };
    let w = if rng.gen_bool(0.5) { rng.gen_range(1..=t.min(20)) } else { rng.gen_range(1..=t) };
    let n = rng.gen_range(1..=5usize);
    (s, w, n)
}

#[test]
fn thousand_instances_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for k in 0..1000 {
        let (s, w, n) = instance(&mut rng, k);
        let (start, mean) = top_window(&s, w).unwrap();
        let (bs, bm) = brute_top(&s, w);
        if start != bs || (mean - bm).abs() > 1e-12 {
            mismatches += 1;
        }
        let fast = rank_windows(&s, w, n).unwrap();
        let slow = brute_rank(&s, w, n);
        if fast.len() != slow.len()
            || fast.iter().zip(&slow).any(|(f, b)| f.start != b.0 || (f.mean - b.1).abs() > 1e-12)
        {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn single_window_ranking_equals_top_window() {
    let s = [0.3, 0.9, 0.1, 0.8, 0.8, 0.2];
    let (start, mean) = top_window(&s, 2).unwrap();
    assert_eq!(rank_windows(&s, 2, 1).unwrap(), vec![RankedWindow { start, mean }]);
}

proptest! {
    #[test]
    fn rankings_are_disjoint_and_descending(
        s in prop::collection::vec(0.0f64..1.0, 1..300),
        w in 1usize..40,
        n in 1usize..6,
    ) {
        prop_assume!(w <= s.len());
        let r = rank_windows(&s, w, n).unwrap();
        for (i, a) in r.iter().enumerate() {
            prop_assert!(a.start + w <= s.len());
            for b in &r[i + 1..] {
                prop_assert!(a.start + w <= b.start || b.start + w <= a.start);
                prop_assert!(a.mean >= b.mean);
            }
        }
    }
}
