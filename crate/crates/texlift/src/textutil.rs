//! Character-offset text helpers.
//!
//! Every offset, length, and budget in this crate counts Unicode scalar
//! values ("characters"), never bytes. `CharText` holds a decoded character
//! vector so scanners can index and slice without worrying about UTF-8
//! boundaries.

/// A string decoded into characters for offset-based scanning.
#[derive(Debug, Clone)]
pub struct CharText {
    chars: Vec<char>,
}

impl CharText {
    pub fn new(s: &str) -> Self {
        Self {
            chars: s.chars().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.chars.get(idx).copied()
    }

    pub fn as_slice(&self) -> &[char] {
        &self.chars
    }

    /// Materialize `[start, end)` as an owned string. Bounds are clamped.
    pub fn slice(&self, start: usize, end: usize) -> String {
        let end = end.min(self.chars.len());
        let start = start.min(end);
        self.chars[start..end].iter().collect()
    }

    /// Find the first occurrence of `pat` at or after `from`, returning its
    /// character offset.
    pub fn find(&self, pat: &str, from: usize) -> Option<usize> {
        let pat: Vec<char> = pat.chars().collect();
        if pat.is_empty() {
            return Some(from.min(self.chars.len()));
        }
        if self.chars.len() < pat.len() {
            return None;
        }
        (from..=self.chars.len().saturating_sub(pat.len()))
            .find(|&i| self.chars[i..i + pat.len()] == pat[..])
    }

    pub fn starts_with_at(&self, pat: &str, idx: usize) -> bool {
        let mut i = idx;
        for pc in pat.chars() {
            match self.chars.get(i) {
                Some(&c) if c == pc => i += 1,
                _ => return false,
            }
        }
        true
    }

    /// Number of consecutive backslashes ending at `idx` inclusive.
    ///
    /// Used to decide whether a `\[`-style token at `idx` is a real control
    /// sequence (odd run) or the tail of an escaped `\\` (even run).
    pub fn backslash_run_ending_at(&self, idx: usize) -> usize {
        let mut n = 0;
        let mut i = idx as isize;
        while i >= 0 && self.chars[i as usize] == '\\' {
            n += 1;
            i -= 1;
        }
        n
    }
}

/// Character count of a string.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// The first `n` characters of `s`, as a borrowed slice.
pub fn char_prefix(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((byte_idx, _)) => &s[..byte_idx],
        None => s,
    }
}

/// The last `n` characters of `s`, as a borrowed slice.
pub fn char_suffix(s: &str, n: usize) -> &str {
    let len = char_len(s);
    if n >= len {
        return s;
    }
    let skip = len - n;
    match s.char_indices().nth(skip) {
        Some((byte_idx, _)) => &s[byte_idx..],
        None => "",
    }
}

/// Round a length to the nearest multiple of ten, halves away from zero.
pub fn round_to_nearest_ten(n: usize) -> usize {
    (n + 5) / 10 * 10
}
