//! Metric implementations checked against direct transcriptions of the
//! formulas, written here without sharing any code with the library.

use kgchain_core::metrics::{
    dcg_at, evaluate, hit_at, mpr, mrr, ndcg_at, parse_ranked_lists, precision_recall_at, Metric, RankedList,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod oracle {
    pub fn dcg(s: &[u8], n: usize) -> f64 {
        let mut total = 0.0;
        let mut i = 1;
        while i <= n && i <= s.len() {
            total += s[i - 1] as f64 / (i as f64 + 1.0).ln() * 2f64.ln();
            i += 1;
        }
        total
    }

    pub fn ndcg(s: &[u8], relevant: usize, n: usize) -> f64 {
        if relevant == 0 {
            return 0.0;
        }
        let mut ideal = 0.0;
        for i in 1..=relevant.min(n) {
            ideal += 1.0 / (i as f64 + 1.0).ln() * 2f64.ln();
        }
        dcg(s, n) / ideal
    }

    pub fn hits(s: &[u8], n: usize) -> usize {
        s.iter().take(n).map(|&x| x as usize).sum()
    }

    pub fn mrr(ranks: &[u64]) -> f64 {
        let mut acc = 0.0;
        for r in ranks {
            acc += 1.0 / *r as f64;
        }
        acc / ranks.len() as f64
    }

    pub fn mpr(ranks: &[(u64, u64)]) -> f64 {
        let mut acc = 0.0;
        for (r, u) in ranks {
            acc += 100.0 * (1.0 - (*r as f64 - 1.0) / *u as f64);
        }
        acc / ranks.len() as f64
    }

    pub fn hit(ranks: &[u64], k: u64) -> f64 {
        let mut c = 0.0;
        for r in ranks {
            if *r <= k {
                c += 1.0;
            }
        }
        c / ranks.len() as f64
    }
}

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * b.abs().max(1.0)
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<u8>, usize, usize) {
    let len = rng.gen_range(0..=200);
    let s: Vec<u8> = (0..len).map(|_| u8::from(rng.gen_bool(0.2))).collect();
    let ranked_relevant = s.iter().filter(|&&x| x == 1).count();
    let relevant = ranked_relevant + rng.gen_range(0..5);
    let n = rng.gen_range(1..=250);
    (s, relevant, n)
}

#[test]
fn thousand_random_lists_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for case in 0..1000 {
        let (s, relevant, n) = random_case(&mut rng);
        let b: Vec<bool> = s.iter().map(|&x| x == 1).collect();
        assert!(close(dcg_at(&b, n).unwrap(), oracle::dcg(&s, n)), "dcg case {case}");
        assert!(
            close(ndcg_at(&b, relevant, n).unwrap(), oracle::ndcg(&s, relevant, n)),
            "ndcg case {case}"
        );
        let pr = precision_recall_at(&b, relevant, n).unwrap();
        let h = oracle::hits(&s, n) as f64;
        assert!(close(pr.precision, h / n as f64), "precision case {case}");
        let recall = if relevant == 0 { 0.0 } else { h / relevant as f64 };
        assert!(close(pr.recall, recall), "recall case {case}");

        let k = rng.gen_range(1..=300u64);
        let ranks: Vec<u64> = (0..rng.gen_range(1..=50)).map(|_| rng.gen_range(1..=1000)).collect();
        assert!(close(mrr(&ranks).unwrap(), oracle::mrr(&ranks)), "mrr case {case}");
        assert!(
            close(hit_at(&ranks, k).unwrap(), oracle::hit(&ranks, k)),
            "hit case {case}"
        );
        let pairs: Vec<(u64, u64)> = ranks.iter().map(|&r| (r, r + rng.gen_range(0..500))).collect();
        assert!(close(mpr(&pairs).unwrap(), oracle::mpr(&pairs)), "mpr case {case}");
    }
}

#[test]
fn hand_evaluated_cases() {
    let s = [true, false, true];
    assert!((dcg_at(&[true; 3], 3).unwrap() - 2.130_929_753_571_457).abs() < 1e-12);
    assert_eq!(dcg_at(&s, 3).unwrap(), 1.5);
    assert_eq!(dcg_at(&[false; 5], 4).unwrap(), 0.0);
    assert!((ndcg_at(&s, 2, 3).unwrap() - 1.5 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
    // the commonly quoted ≈0.9198 is agreed to four decimals; exact value 0.919720…
    assert!((ndcg_at(&s, 2, 3).unwrap() - 0.9198).abs() < 1e-4);
    assert_eq!(ndcg_at(&[true, true, false], 2, 3).unwrap(), 1.0);
    assert!((mrr(&[1, 2, 4]).unwrap() - 0.5833).abs() < 5e-5);
    assert_eq!(mrr(&[1, 2, 4]).unwrap(), 1.75 / 3.0);
    assert_eq!(mrr(&[1]).unwrap(), 1.0);
    assert_eq!(mrr(&[1_000_000]).unwrap(), 1e-6);
    assert_eq!(hit_at(&[3, 60, 10], 50).unwrap(), 2.0 / 3.0);
    assert_eq!(hit_at(&[1, 2], 5).unwrap(), 1.0);
    assert!(hit_at(&[1], 0).is_err());
    assert!(mrr(&[]).is_err());
    assert_eq!(mpr(&[(1, 100)]).unwrap(), 100.0);
    assert_eq!(mpr(&[(100, 100)]).unwrap(), 1.0);
    assert_eq!(mpr(&[(1, 10), (6, 10)]).unwrap(), 75.0);
    assert!(mpr(&[]).is_err());
    let mut top50 = vec![false; 60];
    top50[2] = true;
    top50[7] = true;
    top50[41] = true;
    top50[55] = true;
    let pr = precision_recall_at(&top50, 4, 50).unwrap();
    assert_eq!((pr.precision, pr.recall), (0.06, 0.75));
}

#[test]
fn report_is_macro_average() {
    let text = concat!(
        r#"{"query_id":"g1","candidates":["a","b","c"],"relevant":["a","c"]}"#,
        "\n",
        r#"{"query_id":"g2","candidates":["x","y"],"relevant":["y"],"universe_size":10}"#,
        "\n"
    );
    let lists = parse_ranked_lists(text).unwrap();
    let r = evaluate(&lists, &Metric::ALL, 3).unwrap();
    let ndcg1 = oracle::ndcg(&[1, 0, 1], 2, 3);
    let ndcg2 = oracle::ndcg(&[0, 1], 1, 3);
    assert!(close(r.value("ndcg@3").unwrap(), (ndcg1 + ndcg2) / 2.0));
    assert!(close(r.value("precision@3").unwrap(), (2.0 / 3.0 + 1.0 / 3.0) / 2.0));
    assert!(close(r.value("recall@3").unwrap(), 1.0));
    assert!(close(r.value("mrr").unwrap(), 0.75));
    assert!(close(r.value("mpr").unwrap(), (100.0 + 90.0) / 2.0));
    assert!(close(r.value("hit@3").unwrap(), 1.0));
    let tsv = r.to_tsv();
    assert!(tsv.starts_with("metric\tvalue\nndcg@3\t"));
    assert_eq!(tsv.lines().count(), 7);
}

#[test]
fn query_without_relevant_items_is_flagged() {
    let lists = vec![RankedList {
        query_id: "q".into(),
        candidates: vec!["a".into()],
        relevant: vec![],
        universe_size: None,
    }];
    let r = evaluate(&lists, &Metric::ALL, 5).unwrap();
    assert!(r.macro_avg.iter().all(|(_, v)| *v == 0.0));
    assert_eq!(r.per_query[0].flags.len(), 5);
}

fn relevance_strategy() -> impl Strategy<Value = (Vec<bool>, usize, usize)> {
    (proptest::collection::vec(any::<bool>(), 0..120), 0usize..5, 1usize..150).prop_map(|(s, extra, n)| {
        let rel = s.iter().filter(|&&x| x).count() + extra;
        (s, rel, n)
    })
}

proptest! {
    #[test]
    fn ndcg_is_bounded_and_one_iff_ideal((s, rel, n) in relevance_strategy()) {
        let v = ndcg_at(&s, rel, n).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let top = rel.min(n);
        let ideal = s.len() >= top && s[..top].iter().all(|&x| x);
        if rel > 0 {
            prop_assert_eq!((v - 1.0).abs() < 1e-12, ideal);
        }
    }

    #[test]
    fn precision_and_recall_count_the_same_hits((s, rel, n) in relevance_strategy()) {
        let pr = precision_recall_at(&s, rel, n).unwrap();
        if rel > 0 {
            prop_assert!((pr.precision * n as f64 - pr.recall * rel as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn promoting_a_relevant_item_never_hurts((s, rel, n) in relevance_strategy(), pick in any::<prop::sample::Index>()) {
        // swap a relevant item with the irrelevant item directly above it
        let candidates: Vec<usize> = (1..s.len()).filter(|&i| s[i] && !s[i - 1]).collect();
        prop_assume!(!candidates.is_empty());
        let i = candidates[pick.index(candidates.len())];
        let mut t = s.clone();
        t.swap(i, i - 1);
        prop_assert!(ndcg_at(&t, rel, n).unwrap() >= ndcg_at(&s, rel, n).unwrap() - 1e-15);
        let first = |v: &[bool]| v.iter().position(|&x| x).map(|p| p as u64 + 1);
        if let (Some(a), Some(b)) = (first(&s), first(&t)) {
            prop_assert!(mrr(&[b]).unwrap() >= mrr(&[a]).unwrap());
            prop_assert!(hit_at(&[b], n as u64).unwrap() >= hit_at(&[a], n as u64).unwrap());
        }
    }
}
