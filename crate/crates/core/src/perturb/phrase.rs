//! Case-insensitive whole-phrase replacement.

fn same(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Char ranges of whole-word, case-insensitive occurrences of `phrase`.
fn occurrences(text: &[char], phrase: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if phrase.is_empty() || phrase.len() > text.len() {
        return out;
    }
    for start in 0..=text.len() - phrase.len() {
        let end = start + phrase.len();
        if !text[start..end].iter().zip(phrase).all(|(&a, &b)| same(a, b)) {
            continue;
        }
        let left_ok = start == 0 || !is_word(text[start - 1]) || !is_word(phrase[0]);
        let right_ok = end == text.len() || !is_word(text[end]) || !is_word(phrase[phrase.len() - 1]);
        if left_ok && right_ok {
            out.push((start, end));
        }
    }
    out
}

/// Replace every occurrence of each phrase with its replacement. Longer
/// phrases claim text first; later matches overlapping a claimed span are
/// skipped. Returns the new text and the number of replacements per phrase,
/// in input order.
pub fn replace_phrases(text: &str, phrases: &[(&str, &str)]) -> (String, Vec<usize>) {
    let chars: Vec<char> = text.chars().collect();
    let mut order: Vec<usize> = (0..phrases.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (phrases[a].0.chars().count(), phrases[b].0.chars().count());
        lb.cmp(&la).then(phrases[a].0.cmp(phrases[b].0)).then(a.cmp(&b))
    });
    let mut claimed = vec![false; chars.len()];
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    let mut counts = vec![0usize; phrases.len()];
    for i in order {
        let phrase: Vec<char> = phrases[i].0.trim().chars().collect();
        for (s, e) in occurrences(&chars, &phrase) {
            if claimed[s..e].iter().any(|&c| c) {
                continue;
            }
            claimed[s..e].iter_mut().for_each(|c| *c = true);
            spans.push((s, e, i));
            counts[i] += 1;
        }
    }
    spans.sort_unstable();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (s, e, i) in spans {
        out.extend(&chars[pos..s]);
        out.push_str(phrases[i].1);
        pos = e;
    }
    out.extend(&chars[pos..]);
    (out, counts)
}

/// Whether `phrase` occurs in `text` as a whole phrase, ignoring case.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let p: Vec<char> = phrase.trim().chars().collect();
    !occurrences(&chars, &p).is_empty()
}
