//! Bundled CEFR word lists and term spotting.

use std::sync::OnceLock;

use crate::dialogue::Cefr;

const TIER_A: &str = include_str!("../../data/cefr_a.txt");
const TIER_B: &str = include_str!("../../data/cefr_b.txt");
const TIER_C: &str = include_str!("../../data/cefr_c.txt");

fn parse(list: &str) -> Vec<&str> {
    list.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

pub fn tier_terms(level: Cefr) -> Vec<&'static str> {
    match level {
        Cefr::A => parse(TIER_A),
        Cefr::B => parse(TIER_B),
        Cefr::C => parse(TIER_C),
    }
}

/// All terms as word lists, longest first.
fn lexicon() -> &'static [(Vec<&'static str>, Cefr)] {
    static CELL: OnceLock<Vec<(Vec<&'static str>, Cefr)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut all: Vec<_> = Cefr::ALL
            .into_iter()
            .flat_map(|lvl| tier_terms(lvl).into_iter().map(move |t| (t.split(' ').collect::<Vec<_>>(), lvl)))
            .collect();
        all.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        all
    })
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Vocabulary terms in `text` with their tier. Multi-word terms win over
/// the single words they contain, and a trailing plural `s` is ignored.
pub fn find_terms(text: &str) -> Vec<(String, Cefr)> {
    let w = words(text);
    let mut used = vec![false; w.len()];
    let mut found = Vec::new();
    let same = |word: &str, term: &str| word == term || word.strip_suffix('s') == Some(term);
    for (term, level) in lexicon() {
        let n = term.len();
        if n > w.len() {
            continue;
        }
        for start in 0..=w.len() - n {
            if used[start..start + n].iter().any(|&u| u) {
                continue;
            }
            if term.iter().zip(&w[start..start + n]).all(|(t, x)| same(x, t)) {
                used[start..start + n].iter_mut().for_each(|u| *u = true);
                found.push((term.join(" "), *level));
            }
        }
    }
    found
}
