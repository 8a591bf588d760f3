//! Brute-force reference implementations of the generation metrics.
//!
//! Multisets are plain vectors and matches are found by linear search and
//! removal, so no code is shared with the library.
#![allow(dead_code)]

fn clipped_matches(hyp: &[String], reference: &[String]) -> usize {
    let mut pool: Vec<&String> = reference.iter().collect();
    let mut hits = 0;
    for g in hyp {
        if let Some(i) = pool.iter().position(|r| *r == g) {
            pool.swap_remove(i);
            hits += 1;
        }
    }
    hits
}

fn char_grams(s: &str, n: usize) -> Vec<String> {
    let cs: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    if cs.len() < n {
        return vec![];
    }
    (0..=cs.len() - n).map(|i| cs[i..i + n].iter().collect()).collect()
}

fn chrf_words(s: &str) -> Vec<String> {
    let punct = |c: char| c.is_ascii_punctuation();
    let mut out = vec![];
    for w in s.split_whitespace() {
        let cs: Vec<char> = w.chars().collect();
        let last = *cs.last().unwrap();
        if cs.len() > 1 && punct(last) {
            out.push(cs[..cs.len() - 1].iter().collect());
            out.push(last.to_string());
        } else if cs.len() > 1 && punct(cs[0]) {
            out.push(cs[0].to_string());
            out.push(cs[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

fn word_grams(ws: &[String], n: usize) -> Vec<String> {
    if ws.len() < n {
        return vec![];
    }
    (0..=ws.len() - n).map(|i| ws[i..i + n].join(" ")).collect()
}

pub fn chrf(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut stats = [[0usize; 3]; 8];
    for (h, r) in hyps.iter().zip(refs) {
        for n in 1..=6 {
            let (hg, rg) = (char_grams(h, n), char_grams(r, n));
            stats[n - 1][0] += if rg.is_empty() { 0 } else { hg.len() };
            stats[n - 1][1] += rg.len();
            stats[n - 1][2] += clipped_matches(&hg, &rg);
        }
        let (hw, rw) = (chrf_words(h), chrf_words(r));
        for n in 1..=2 {
            let (hg, rg) = (word_grams(&hw, n), word_grams(&rw, n));
            stats[5 + n][0] += if rg.is_empty() { 0 } else { hg.len() };
            stats[5 + n][1] += rg.len();
            stats[5 + n][2] += clipped_matches(&hg, &rg);
        }
    }
    let eff: Vec<_> = stats.iter().filter(|s| s[0] > 0 && s[1] > 0).collect();
    if eff.is_empty() {
        return 0.0;
    }
    let p = eff.iter().map(|s| s[2] as f64 / s[0] as f64).sum::<f64>() / eff.len() as f64;
    let r = eff.iter().map(|s| s[2] as f64 / s[1] as f64).sum::<f64>() / eff.len() as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

/// BLEU-4 with exponential smoothing over already tokenized text.
pub fn bleu_pretokenized(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut correct = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut sys, mut rl) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let hw: Vec<String> = h.split_whitespace().map(String::from).collect();
        let rw: Vec<String> = r.split_whitespace().map(String::from).collect();
        sys += hw.len();
        rl += rw.len();
        for n in 1..=4 {
            let (hg, rg) = (word_grams(&hw, n), word_grams(&rw, n));
            total[n - 1] += hg.len();
            correct[n - 1] += clipped_matches(&hg, &rg);
        }
    }
    if correct.iter().sum::<usize>() == 0 {
        return 0.0;
    }
    let bp = if sys >= rl { 1.0 } else { (1.0 - rl as f64 / sys as f64).exp() };
    let mut logs = 0.0;
    let mut k = 1.0;
    for n in 0..4 {
        let p = if total[n] == 0 {
            0.0
        } else if correct[n] == 0 {
            k *= 2.0;
            100.0 / (k * total[n] as f64)
        } else {
            100.0 * correct[n] as f64 / total[n] as f64
        };
        logs += if p == 0.0 { -9_999_999_999.0 } else { p.ln() };
        if total[n] == 0 {
            logs += -9_999_999_999.0 * (3 - n) as f64;
            break;
        }
    }
    bp * (logs / 4.0).exp()
}

fn rouge_tokens(s: &str) -> Vec<String> {
    let lowered = s.to_lowercase();
    let mut out = vec![];
    let mut cur = String::new();
    for c in lowered.chars() {
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        if let Some(v) = memo.get(&(a.len(), b.len())) {
            return *v;
        }
        let v = if a[0] == b[0] {
            1 + go(&a[1..], &b[1..], memo)
        } else {
            go(&a[1..], b, memo).max(go(a, &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut Default::default())
}

/// `(precision, recall, f1)` for n in {1, 2}, or LCS when `n == 0`.
pub fn rouge_prf(h: &str, r: &str, n: usize) -> (f64, f64, f64) {
    let (ht, rt) = (rouge_tokens(h), rouge_tokens(r));
    let (hits, hl, rl) = if n == 0 {
        (lcs(&ht, &rt), ht.len(), rt.len())
    } else {
        let (hg, rg) = (word_grams(&ht, n), word_grams(&rt, n));
        (clipped_matches(&hg, &rg), hg.len(), rg.len())
    };
    let p = if hl == 0 { 0.0 } else { hits as f64 / hl as f64 };
    let rc = if rl == 0 { 0.0 } else { hits as f64 / rl as f64 };
    let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
    (p, rc, f)
}

pub fn rouge_f1_corpus(hyps: &[&str], refs: &[&str], n: usize) -> f64 {
    100.0 * hyps.iter().zip(refs).map(|(h, r)| rouge_prf(h, r, n).2).sum::<f64>() / hyps.len() as f64
}

/// Fleiss' kappa evaluated term by term from its textbook definition.
pub fn fleiss(m: &[Vec<usize>]) -> f64 {
    let big_n = m.len() as f64;
    let n = m[0].iter().sum::<usize>() as f64;
    let mut p_bar = 0.0;
    for row in m {
        let agree: f64 = row.iter().map(|&c| (c as f64) * (c as f64 - 1.0)).sum();
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= big_n;
    let mut p_e = 0.0;
    for j in 0..m[0].len() {
        let pj = m.iter().map(|r| r[j] as f64).sum::<f64>() / (big_n * n);
        p_e += pj * pj;
    }
    (p_bar - p_e) / (1.0 - p_e)
}

/// A toy corpus with reference values produced by sacrebleu 2.6.0 (chrF++,
/// BLEU, 13a tokenization) and rouge-score (F1, no stemming).
pub struct Golden {
    pub hyps: &'static [&'static str],
    pub refs: &'static [&'static str],
    pub hyps_13a: &'static [&'static str],
    pub refs_13a: &'static [&'static str],
    pub chrf: f64,
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub rouge1_recall: f64,
}

pub const GOLDEN: &[Golden] = &[
    Golden {
        hyps: &["the cat sat"],
        refs: &["the cat sat down"],
        hyps_13a: &["the cat sat"],
        refs_13a: &["the cat sat down"],
        chrf: 68.3557292119746,
        bleu: 0.0,
        rouge1: 85.71428571428571,
        rouge2: 80.0,
        rouge_l: 85.71428571428571,
        rouge1_recall: 75.0,
    },
    Golden {
        hyps: &["the cat sat on the mat"],
        refs: &["the cat sat on the mat"],
        hyps_13a: &["the cat sat on the mat"],
        refs_13a: &["the cat sat on the mat"],
        chrf: 100.0,
        bleu: 100.00000000000004,
        rouge1: 100.0,
        rouge2: 100.0,
        rouge_l: 100.0,
        rouge1_recall: 100.0,
    },
    Golden {
        hyps: &["xyz"],
        refs: &["abc"],
        hyps_13a: &["xyz"],
        refs_13a: &["abc"],
        chrf: 0.0,
        bleu: 0.0,
        rouge1: 0.0,
        rouge2: 0.0,
        rouge_l: 0.0,
        rouge1_recall: 0.0,
    },
    Golden {
        hyps: &["Good job! What is 3 times 4?", "You need 12 more pies."],
        refs: &["Great. What is 3 x 4?", "So you need 12 pies more."],
        hyps_13a: &["Good job ! What is 3 times 4 ?", "You need 12 more pies ."],
        refs_13a: &["Great . What is 3 x 4 ?", "So you need 12 pies more ."],
        chrf: 44.78606553155656,
        bleu: 17.940727402296478,
        rouge1: 76.22377622377621,
        rouge2: 40.4040404040404,
        rouge_l: 67.13286713286712,
        rouge1_recall: 75.0,
    },
    Golden {
        hyps: &["Can you explain how you got 24?"],
        refs: &["How did you get 24? Explain your steps."],
        hyps_13a: &["Can you explain how you got 24 ?"],
        refs_13a: &["How did you get 24 ? Explain your steps ."],
        chrf: 28.38140213734672,
        bleu: 9.51934081834847,
        rouge1: 53.333333333333336,
        rouge2: 0.0,
        rouge_l: 40.0,
        rouge1_recall: 50.0,
    },
    Golden {
        hyps: &["Let's look at the second step again.", "Is that 14?", "Hi there"],
        refs: &["Look at the second step.", "Is it 14?", "Hello there!"],
        hyps_13a: &["Let's look at the second step again .", "Is that 14 ?", "Hi there"],
        refs_13a: &["Look at the second step .", "Is it 14 ?", "Hello there !"],
        chrf: 60.683031361279085,
        bleu: 31.415402948866546,
        rouge1: 64.52991452991454,
        rouge2: 24.242424242424246,
        rouge_l: 64.52991452991454,
        rouge1_recall: 72.22222222222221,
    },
    Golden {
        hyps: &["It costs $3.50, doesn't it?"],
        refs: &["It costs $3.50; does it not?"],
        hyps_13a: &["It costs $ 3.50 , doesn't it ?"],
        refs_13a: &["It costs $ 3.50 ; does it not ?"],
        chrf: 55.739015902195476,
        bleu: 33.764591090632756,
        rouge1: 71.42857142857143,
        rouge2: 50.0,
        rouge_l: 71.42857142857143,
        rouge1_recall: 71.42857142857143,
    },
    Golden {
        hyps: &["a b c d e f g"],
        refs: &["a b c d e f g h i j"],
        hyps_13a: &["a b c d e f g"],
        refs_13a: &["a b c d e f g h i j"],
        chrf: 65.56873646442772,
        bleu: 65.14390575310559,
        rouge1: 82.35294117647058,
        rouge2: 80.0,
        rouge_l: 82.35294117647058,
        rouge1_recall: 70.0,
    },
    Golden {
        hyps: &["No. That's wrong.", "Try 5-6 apples."],
        refs: &["That is not right.", "Try 5 - 6 apples, please."],
        hyps_13a: &["No . That's wrong .", "Try 5 - 6 apples ."],
        refs_13a: &["That is not right .", "Try 5 - 6 apples , please ."],
        chrf: 35.41412170885222,
        bleu: 39.12360608928473,
        rouge1: 56.94444444444444,
        rouge2: 42.857142857142854,
        rouge_l: 56.94444444444444,
        rouge1_recall: 52.5,
    },
    Golden {
        hyps: &["what do you think happens if we double it", "okay"],
        refs: &["What happens if we double the number?", "ok"],
        hyps_13a: &["what do you think happens if we double it", "okay"],
        refs_13a: &["What happens if we double the number ?", "ok"],
        chrf: 52.70284679728846,
        bleu: 29.071536848410968,
        rouge1: 31.250000000000007,
        rouge2: 21.428571428571427,
        rouge_l: 31.250000000000007,
        rouge1_recall: 35.714285714285715,
    },
    Golden {
        hyps: &[
            "The answer is 42.",
            "You divided instead of multiplying.",
            "Well done!",
            "Think about the pies.",
            "Bye!",
        ],
        refs: &[
            "The answer is 24.",
            "You multiplied instead of dividing.",
            "Well done.",
            "Think about the individual pies.",
            "Goodbye!",
        ],
        hyps_13a: &[
            "The answer is 42 .",
            "You divided instead of multiplying .",
            "Well done !",
            "Think about the pies .",
            "Bye !",
        ],
        refs_13a: &[
            "The answer is 24 .",
            "You multiplied instead of dividing .",
            "Well done .",
            "Think about the individual pies .",
            "Goodbye !",
        ],
        chrf: 59.98759058590084,
        bleu: 24.45773952298797,
        rouge1: 64.77777777777779,
        rouge2: 49.761904761904766,
        rouge_l: 64.77777777777779,
        rouge1_recall: 63.000000000000014,
    },
    Golden {
        hyps: &["(hi) there, friend", "'tis fine"],
        refs: &["hi there friend", "it is fine"],
        hyps_13a: &["( hi ) there , friend", "'tis fine"],
        refs_13a: &["hi there friend", "it is fine"],
        chrf: 52.141115169798624,
        bleu: 10.206207261596576,
        rouge1: 70.0,
        rouge2: 50.0,
        rouge_l: 70.0,
        rouge1_recall: 66.66666666666666,
    },
    Golden {
        hyps: &["aaaa aaaa", "b"],
        refs: &["aaaa", "b b b"],
        hyps_13a: &["aaaa aaaa", "b"],
        refs_13a: &["aaaa", "b b b"],
        chrf: 62.229316307528606,
        bleu: 0.0,
        rouge1: 58.33333333333333,
        rouge2: 0.0,
        rouge_l: 58.33333333333333,
        rouge1_recall: 66.66666666666666,
    },
];
