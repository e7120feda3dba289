use std::collections::BTreeMap;

/// The label a response commits to: the first `(X)` with `X` a known label,
/// else the first standalone capital letter that is a known label.
pub fn extract_answer(response: &str, labels: &[String]) -> Option<String> {
    let is_label = |c: char| labels.iter().any(|l| l.len() == c.len_utf8() && l.starts_with(c));
    let chars: Vec<char> = response.chars().collect();
    for w in chars.windows(3) {
        if w[0] == '(' && w[2] == ')' && is_label(w[1]) {
            return Some(w[1].to_string());
        }
    }
    for (i, &c) in chars.iter().enumerate() {
        if !is_label(c) {
            continue;
        }
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        let boundary = |x: Option<char>| x.is_none_or(|x| !x.is_alphanumeric());
        if boundary(before) && boundary(after) {
            return Some(c.to_string());
        }
    }
    None
}

/// Outcome of a majority vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub label: Option<String>,
    /// Several labels shared the top count; the alphabetically first won.
    pub tie: bool,
}

/// Most frequent present label; ties go to the alphabetically first label.
pub fn majority_vote(predictions: &[Option<String>]) -> Vote {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in predictions.iter().flatten() {
        *counts.entry(label.as_str()).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else {
        return Vote {
            label: None,
            tie: false,
        };
    };
    let mut leaders = counts.iter().filter(|(_, &n)| n == best).map(|(l, _)| *l);
    let label = leaders.next().map(str::to_string);
    let tie = leaders.next().is_some();
    if tie {
        log::debug!("vote tie at {best} votes; picked {label:?}");
    }
    Vote { label, tie }
}
