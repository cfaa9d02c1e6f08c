//! Independent reference implementations used by the integration tests.
//! Each one is a direct transcription of the definition, written without
//! reusing library code paths.
#![allow(dead_code)]

use std::collections::HashSet;

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercase, count hashed char trigrams into `dim` buckets, L2-normalize.
pub fn trigram_embedding(text: &str, dim: usize) -> Vec<f32> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut counts = vec![0f64; dim];
    let grams: Vec<String> = if chars.len() < 3 {
        vec![chars.iter().collect()]
    } else {
        (0..chars.len() - 2).map(|i| chars[i..i + 3].iter().collect()).collect()
    };
    for g in grams {
        counts[(fnv1a64(g.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    counts.iter().map(|c| (c / norm) as f32).collect()
}

/// Scores every vector and sorts by (score desc, id asc).
pub fn brute_force_search(ids: &[String], vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(String, f32)> {
    let mut all: Vec<(String, f32)> = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| {
            let mut s = 0f64;
            for i in 0..v.len() {
                s += v[i] as f64 * query[i] as f64;
            }
            (id.clone(), s as f32)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn mrr(results: &[(Vec<String>, HashSet<String>)]) -> f64 {
    let mut total = 0.0;
    for (ranked, relevant) in results {
        for (rank, id) in ranked.iter().enumerate() {
            if relevant.contains(id) {
                total += 1.0 / (rank as f64 + 1.0);
                break;
            }
        }
    }
    total / results.len() as f64
}

pub fn recall_at_k(results: &[(Vec<String>, HashSet<String>)], k: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for (ranked, relevant) in results {
        if relevant.is_empty() {
            continue;
        }
        let mut hit = 0;
        for r in relevant {
            if ranked.iter().take(k).any(|x| x == r) {
                hit += 1;
            }
        }
        sum += hit as f64 / relevant.len() as f64;
        n += 1;
    }
    if n == 0 { None } else { Some(sum / n as f64) }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut word = String::new();
    for c in lower.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(word.clone());
                word.clear();
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn count(gram: &[String], tokens: &[String]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| &tokens[i..i + gram.len()] == gram)
        .count()
}

/// BLEU-4: p1 unsmoothed, p2..p4 as (m+1)/(t+1), geometric mean with equal
/// weights, BP = exp(1 - r/c) for c <= r with r the closest reference length.
pub fn bleu(candidate: &str, references: &[&str]) -> f64 {
    let c = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if c.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut logs = 0.0;
    for n in 1..=4 {
        let mut seen: Vec<&[String]> = Vec::new();
        let mut matched = 0;
        if c.len() >= n {
            for i in 0..=c.len() - n {
                let g = &c[i..i + n];
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                let mut best = 0;
                for r in &refs {
                    best = best.max(count(g, r));
                }
                matched += count(g, &c).min(best);
            }
        }
        let total = if c.len() >= n { c.len() - n + 1 } else { 0 };
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        logs += 0.25 * p.ln();
    }
    let mut r = refs[0].len();
    for rf in &refs {
        let d = (rf.len() as i64 - c.len() as i64).abs();
        let best = (r as i64 - c.len() as i64).abs();
        if d < best || (d == best && rf.len() < r) {
            r = rf.len();
        }
    }
    let bp = if c.len() > r { 1.0 } else { (1.0 - r as f64 / c.len() as f64).exp() };
    bp * logs.exp()
}
