//! Independent reference computations for values the library derives.

use std::collections::HashMap;

use plurality_core::balance::balance_memory_bits;
use plurality_core::graph::{build_graph, GraphKind};
use plurality_core::oracle::{association_counts, counter_thresholds, TrackedSetup};
use plurality_core::pattern::{empirical_pmin, PatternSpec};
use plurality_core::rng::seeded;
use plurality_core::shuffle::shuffle_memory_bits;
use plurality_core::smoothing::{exact_window_product, ExactWindowProduct};
use rand::Rng;

/// `max over x ∈ {0,1}^n of disc(x·Π)`, as a numerator over `Π`'s denominator.
fn brute_force_discrepancy(w: &ExactWindowProduct) -> u128 {
    let n = w.n();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let y: Vec<u128> = (0..n).map(|j| (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| w.numerator(i, j)).sum()).collect();
        best = best.max(y.iter().max().unwrap() - y.iter().min().unwrap());
    }
    best
}

#[test]
fn window_discrepancy_matches_binary_vector_search() {
    let mut rng = seeded(77);
    for case in 0..30 {
        let kind = [GraphKind::Complete, GraphKind::Cycle][case % 2];
        let n = rng.random_range(3..=6);
        let g = build_graph(kind, n, 0, case as u64).unwrap();
        let spec = match case % 3 {
            0 => PatternSpec::diffusion(g, case as u64),
            1 => PatternSpec::sequential(g, case as u64).unwrap(),
            _ => PatternSpec::random_matching(g, 0.7, case as u64).unwrap(),
        };
        let t1 = rng.random_range(1..20);
        let w = exact_window_product(&spec, t1, t1 + rng.random_range(0..4)).unwrap();
        let d = w.discrepancy();
        assert_eq!(d.numer * w.denominator(), brute_force_discrepancy(&w) * d.denom, "case {case}");
    }
}

/// Exact activation probability of every edge under the greedy matching
/// construction, by enumerating edge orders and coin outcomes.
fn greedy_matching_law(edges: &[(usize, usize)], n: usize, p: f64) -> Vec<f64> {
    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let m = edges.len();
    let mut orders = Vec::new();
    permutations(&mut (0..m).collect(), 0, &mut orders);
    let mut law = vec![0.0; m];
    let order_weight = 1.0 / orders.len() as f64;
    for order in &orders {
        for coins in 0u32..(1 << m) {
            // Coin `i` is the draw made when edge `order[i]` is examined;
            // coins of skipped edges are never drawn, so each outcome is
            // weighted by the draws actually made.
            let mut matched = vec![false; n];
            let mut weight = order_weight;
            let mut chosen = Vec::new();
            let mut consistent = true;
            for (i, &e) in order.iter().enumerate() {
                let (u, v) = edges[e];
                let heads = coins >> i & 1 == 1;
                if matched[u] || matched[v] {
                    if heads {
                        consistent = false;
                    }
                    continue;
                }
                weight *= if heads { p } else { 1.0 - p };
                if heads {
                    matched[u] = true;
                    matched[v] = true;
                    chosen.push(e);
                }
            }
            if consistent {
                for e in chosen {
                    law[e] += weight;
                }
            }
        }
    }
    law
}

#[test]
fn cycle4_greedy_matching_frequencies() {
    let g = build_graph(GraphKind::Cycle, 4, 0, 0).unwrap();
    for p in [1.0, 0.5] {
        let law = greedy_matching_law(g.edges(), 4, p);
        let spec = PatternSpec::random_matching(g.clone(), p, 123).unwrap();
        let samples = 20_000;
        let est = empirical_pmin(&spec, samples).unwrap();
        for (f, q) in est.frequencies.iter().zip(&law) {
            let sigma = (q * (1.0 - q) / samples as f64).sqrt();
            assert!((f - q).abs() <= 4.0 * sigma, "p={p}: {f} vs {q}");
            assert!(*q >= 0.25 - 1e-12);
        }
    }
    let law = greedy_matching_law(g.edges(), 4, 1.0);
    for q in law {
        assert!((q - 0.5).abs() < 1e-12);
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Law of the tracked-token count vector after the given rounds of a
/// shuffle, by enumerating every multivariate hypergeometric split.
fn tracked_law(setup_rows: &[Vec<Vec<(usize, u64)>>], denom: u64, gamma: u64, start: Vec<u64>) -> HashMap<Vec<u64>, f64> {
    let n = start.len();
    let mut law: HashMap<Vec<u64>, f64> = HashMap::from([(start, 1.0)]);
    for rows in setup_rows {
        let mut next: HashMap<Vec<u64>, f64> = HashMap::new();
        for (state, pr) in &law {
            // Per node, every way to split its tracked tokens over its slots.
            let mut partial: Vec<(Vec<u64>, f64)> = vec![(vec![0; n], *pr)];
            for u in 0..n {
                let slots: Vec<(usize, u64)> = rows[u].iter().map(|&(v, w)| (v, gamma * w / denom)).collect();
                let c = state[u];
                let mut splits: Vec<(Vec<u64>, f64)> = vec![(vec![], 1.0)];
                for &(_, size) in &slots {
                    let mut grown = Vec::new();
                    for (s, q) in &splits {
                        let used: u64 = s.iter().sum();
                        for x in 0..=size.min(c - used) {
                            let mut s2 = s.clone();
                            s2.push(x);
                            grown.push((s2, q * binomial(size, x)));
                        }
                    }
                    splits = grown;
                }
                let total = binomial(gamma, c);
                let mut grown = Vec::new();
                for (acc, q) in &partial {
                    for (s, w) in &splits {
                        if s.iter().sum::<u64>() != c {
                            continue;
                        }
                        let mut a = acc.clone();
                        for (&(v, _), &x) in slots.iter().zip(s) {
                            a[v] += x;
                        }
                        grown.push((a, q * w / total));
                    }
                }
                partial = grown;
            }
            for (s, q) in partial {
                *next.entry(s).or_default() += q;
            }
        }
        law = next;
    }
    law
}

#[test]
fn shuffle_joint_law_matches_enumeration_on_k3() {
    let spec = PatternSpec::diffusion(build_graph(GraphKind::Complete, 3, 0, 0).unwrap(), 0);
    let gamma = 4;
    let rounds = 2;
    let placements = vec![0, 0, 1];
    let setup = TrackedSetup::new(&spec, rounds, gamma, placements, 5).unwrap();
    let rows: Vec<Vec<Vec<(usize, u64)>>> = (1..=rounds)
        .map(|t| {
            let p = plurality_core::smoothing::transition_at(&spec, t);
            (0..3).map(|u| p.row(u).to_vec()).collect()
        })
        .collect();
    let law = tracked_law(&rows, 4, gamma, vec![2, 1, 0]);
    assert!((law.values().sum::<f64>() - 1.0).abs() < 1e-12);
    let targets = vec![vec![0], vec![1], vec![0, 1], vec![1, 2]];
    let samples = 40_000;
    let counts = association_counts(&setup, &targets, rounds, 0..samples).unwrap();
    for (d, &hits) in targets.iter().zip(&counts.joint) {
        let exact: f64 = law.iter().filter(|(s, _)| d.iter().map(|&v| s[v]).sum::<u64>() == 3).map(|(_, q)| q).sum();
        let f = hits as f64 / samples as f64;
        let sigma = (exact * (1.0 - exact) / samples as f64).sqrt().max(1e-9);
        assert!((f - exact).abs() <= 4.0 * sigma, "D={d:?}: {f} vs {exact}");
    }
}

/// The counter thresholds written out term by term with natural logs.
fn thresholds_by_hand(n: usize, counts: &[usize], t: u64, gamma: u64, c: f64) -> (f64, f64) {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    sorted.reverse();
    let (n1, n2) = (sorted[0] as f64, sorted.get(1).copied().unwrap_or(0) as f64);
    let nf = n as f64;
    let log_n = nf.ln() / std::f64::consts::LN_2;
    let base = c * t as f64 * gamma as f64 * (nf.powi(4) + 1.0) / nf.powi(5);
    let lower = base * n2 + (c * c * log_n * t as f64 * gamma as f64 * n2 / nf).sqrt();
    let u = (c * t as f64).ceil();
    let upper = u * gamma as f64 - base * (nf - n1) - c * (log_n * t as f64 * gamma as f64 * (nf - n1) / nf).sqrt();
    (lower, upper)
}

#[test]
fn thresholds_match_second_implementation() {
    let th = counter_thresholds(100, &[60, 40], 10, 100, 12.0).unwrap();
    let (lo, hi) = thresholds_by_hand(100, &[60, 40], 10, 100, 12.0);
    assert!((th.lower - lo).abs() <= 1e-9 * lo.abs());
    assert!((th.upper - hi).abs() <= 1e-9 * hi.abs());
    assert_eq!(th.updates, 120);

    let mut rng = seeded(8);
    for _ in 0..200 {
        let n = rng.random_range(4..200);
        let n1 = rng.random_range(n / 2 + 1..=n);
        let counts = [n1, n - n1];
        let t = rng.random_range(1..5);
        let gamma = rng.random_range(1000..100_000);
        let c = rng.random_range(12.0..20.0);
        let (lo, hi) = thresholds_by_hand(n, &counts, t, gamma, c);
        match counter_thresholds(n, &counts, t, gamma, c) {
            Ok(th) => {
                assert!((th.lower - lo).abs() <= 1e-9 * lo.abs().max(1.0));
                assert!((th.upper - hi).abs() <= 1e-9 * hi.abs().max(1.0));
            }
            Err(_) => assert!(hi <= lo),
        }
    }
}

#[test]
fn threshold_gap_shrinks_as_runner_up_grows() {
    let n = 100;
    let mut last = f64::INFINITY;
    for n2 in 1..=40 {
        let mut counts = vec![60, n2];
        counts.extend(std::iter::repeat_n(1, n - 60 - n2));
        let th = counter_thresholds(n, &counts, 10, 2000, 12.0).unwrap();
        let gap = th.upper - th.lower;
        assert!(gap < last);
        last = gap;
    }
}

fn shuffle_bits_by_hand(n: usize, k: usize, alpha: f64, t: u64, t_mix: u64) -> u64 {
    let lg = |x: f64| x.ln() / std::f64::consts::LN_2;
    let log_n = lg(n as f64);
    let x = lg(k as f64) * (12.0 * log_n / (alpha * alpha * t as f64) + 4.0) + 4.0 * (lg(12.0) + lg(log_n) - 2.0 * lg(alpha)) + lg(t as f64) + lg(t_mix as f64);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) { r as u64 } else { x.ceil() as u64 }
}

fn balance_bits_by_hand(k: usize, gamma: u64) -> u64 {
    let mut bits = 0;
    while (1u128 << bits) <= gamma as u128 {
        bits += 1;
    }
    k as u64 * bits
}

#[test]
fn memory_formulas_match_second_implementation() {
    let mut rng = seeded(11);
    for _ in 0..100 {
        let n = rng.random_range(2..100_000);
        let k = rng.random_range(2..64);
        let gap = rng.random_range(1..=n);
        let alpha = gap as f64 / n as f64;
        let t = rng.random_range(1..50);
        let t_mix = rng.random_range(1..1000);
        assert_eq!(shuffle_memory_bits(n, k, alpha, t, t_mix), shuffle_bits_by_hand(n, k, alpha, t, t_mix));
        let gamma = rng.random_range(1..u64::MAX / 2);
        assert_eq!(balance_memory_bits(k, gamma), balance_bits_by_hand(k, gamma));
    }
}
