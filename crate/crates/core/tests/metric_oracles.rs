mod support;

use edutree_core::metrics::{
    chrf_pp, evaluate_generation, fleiss_kappa, majority_vote, rouge, rouge_corpus, sacre_bleu,
    tokenize_13a, Choice, MetricError, RougeMode, RougeVariant,
};
use support::oracle::{self, GOLDEN};

const TOL: f64 = 1e-6;

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= TOL, "{what}: {a} vs {b}");
}

#[test]
fn golden_corpora_count() {
    assert!(GOLDEN.len() >= 10);
    assert!(GOLDEN.iter().all(|g| g.hyps.len() <= 5 && g.hyps.len() == g.refs.len()));
}

#[test]
fn tokenizer_matches_reference() {
    for g in GOLDEN {
        for (raw, tok) in g.hyps.iter().chain(g.refs).zip(g.hyps_13a.iter().chain(g.refs_13a)) {
            assert_eq!(tokenize_13a(raw), *tok);
        }
    }
}

#[test]
fn chrf_matches_oracle_and_reference() {
    for g in GOLDEN {
        let got: f64 = chrf_pp(g.hyps, g.refs).unwrap();
        close(got, oracle::chrf(g.hyps, g.refs), "chrF++ vs oracle");
        close(got, g.chrf, "chrF++ vs reference");
    }
}

#[test]
fn bleu_matches_oracle_and_reference() {
    for g in GOLDEN {
        let got = sacre_bleu::<f64>(g.hyps, g.refs).unwrap().score;
        close(got, oracle::bleu_pretokenized(g.hyps_13a, g.refs_13a), "BLEU vs oracle");
        close(got, g.bleu, "BLEU vs reference");
    }
}

#[test]
fn rouge_matches_oracle_and_reference() {
    for g in GOLDEN {
        for (variant, n, reference) in [
            (RougeVariant::R1, 1, g.rouge1),
            (RougeVariant::R2, 2, g.rouge2),
            (RougeVariant::RL, 0, g.rouge_l),
        ] {
            let got: f64 = rouge_corpus(g.hyps, g.refs, variant, RougeMode::F1).unwrap();
            close(got, oracle::rouge_f1_corpus(g.hyps, g.refs, n), "ROUGE vs oracle");
            close(got, reference, "ROUGE vs reference");
            for (h, r) in g.hyps.iter().zip(g.refs) {
                let s = rouge::<f64>(h, r, variant);
                let (p, rc, f) = oracle::rouge_prf(h, r, n);
                close(s.precision, p, "P");
                close(s.recall, rc, "R");
                close(s.f1, f, "F1");
            }
        }
        let recall: f64 = rouge_corpus(g.hyps, g.refs, RougeVariant::R1, RougeMode::Recall).unwrap();
        close(recall, g.rouge1_recall, "ROUGE-1 recall");
    }
}

#[test]
fn hand_bleu_two_sentences() {
    // hyp "the cat is on the mat" / "a dog" against "the cat sat on the mat" / "a dog":
    // 1-grams 7/8, 2-grams 4/6, 3-grams 1/4, 4-grams 0/3 -> smoothed to 100/(2*3).
    let got = sacre_bleu::<f64>(&["the cat is on the mat", "a dog"], &["the cat sat on the mat", "a dog"])
        .unwrap();
    let expected = ((87.5f64).ln() + (400.0f64 / 6.0).ln() + 25.0f64.ln() + (100.0f64 / 6.0).ln()) / 4.0;
    close(got.score, expected.exp(), "hand BLEU");
    assert_eq!(got.brevity_penalty, 1.0);
}

#[test]
fn bounds_are_exact() {
    let s = ["Is that 14?", "Great work, let's move on to the next one."];
    let g = evaluate_generation::<f64>(&s, &s, RougeMode::F1).unwrap();
    assert_eq!((g.chrf_pp, g.sacre_bleu, g.rouge1, g.rouge2, g.rouge_l), (100.0, 100.0, 100.0, 100.0, 100.0));
    for v in [RougeVariant::R1, RougeVariant::R2, RougeVariant::RL] {
        assert_eq!(rouge::<f64>("the same words here", "the same words here", v).f1, 1.0);
    }
    let d = evaluate_generation::<f64>(&["xyz qq"], &["abc mm"], RougeMode::F1).unwrap();
    assert_eq!((d.chrf_pp, d.sacre_bleu, d.rouge1, d.rouge2, d.rouge_l), (0.0, 0.0, 0.0, 0.0, 0.0));
}

#[test]
fn f32_agrees_with_f64() {
    for g in GOLDEN {
        let a: f32 = chrf_pp(g.hyps, g.refs).unwrap();
        let b: f64 = chrf_pp(g.hyps, g.refs).unwrap();
        assert!((a as f64 - b).abs() < 1e-3);
    }
}

#[test]
fn kappa_hand_matrices() {
    let cases: &[(&[&[usize]], f64)] = &[
        (&[&[3, 0], &[2, 1], &[1, 2]], 0.0),
        (&[&[2, 0], &[0, 2]], 1.0),
        (&[&[2, 0], &[1, 1]], -1.0 / 3.0),
        (&[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4], &[2, 2, 0]], 47.0 / 63.0),
        (&[&[1, 1], &[1, 1]], -1.0),
        (&[&[3, 1, 0], &[0, 2, 2], &[1, 1, 2], &[4, 0, 0], &[0, 0, 4]], 3.0 / 8.0),
    ];
    for (m, expected) in cases {
        let m: Vec<Vec<usize>> = m.iter().map(|r| r.to_vec()).collect();
        let r = fleiss_kappa::<f64>(&m).unwrap();
        assert!((r.kappa - expected).abs() < 1e-9, "{m:?}: {} vs {expected}", r.kappa);
        assert!((r.kappa - oracle::fleiss(&m)).abs() < 1e-9);
        assert!((r.per_category_marginals.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn kappa_full_agreement() {
    let r = fleiss_kappa::<f64>(&[vec![0, 3, 0], vec![3, 0, 0], vec![0, 0, 3]]).unwrap();
    assert_eq!(r.kappa, 1.0);
    assert!(!r.degenerate);
}

#[test]
fn preference_rate_example() {
    let mut votes = vec![vec![Choice::A, Choice::A, Choice::A, Choice::B]; 17];
    votes.extend(vec![vec![Choice::B, Choice::B, Choice::BothGood, Choice::A]; 13]);
    let s = majority_vote::<f64>(&votes).unwrap();
    assert_eq!((s.wins_a, s.wins_b, s.ties), (17, 13, 0));
    let rate = s.preference_rate.unwrap();
    assert!((rate - 17.0 / 30.0).abs() < 1e-12);
    assert_eq!((rate * 1000.0).round() / 10.0, 56.7);
}

#[test]
fn length_mismatch() {
    assert!(matches!(
        chrf_pp::<f64>(&["a", "b"], &["a"]),
        Err(MetricError::LengthMismatch { hypotheses: 2, references: 1 })
    ));
}
