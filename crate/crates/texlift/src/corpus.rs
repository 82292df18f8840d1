//! TeX source ingestion: archive decoding, main-document resolution, and
//! include inlining.
//!
//! Each paper becomes a single flattened character stream with stable
//! character offsets. Downstream stages slice this stream by offset, so the
//! text produced here is never re-normalized later: comments stay verbatim,
//! no macros are expanded, and the only cleanup applied is newline
//! normalization (CRLF/CR to LF) at decode time.

use crate::textutil::char_len;
use flate2::read::GzDecoder;
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("paper {paper_id}: archive not decodable: {reason}")]
    CorruptArchive { paper_id: String, reason: String },
    #[error("paper {paper_id}: archive has no .tex member")]
    NoTexFound { paper_id: String },
    #[error("paper {paper_id}: no member contains a document-begin marker")]
    NoRootCandidate { paper_id: String },
}

/// A flattened TeX document with provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperSource {
    pub paper_id: String,
    pub text: String,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_tags: Vec<String>,
}

impl PaperSource {
    /// Length of `text` in characters; every downstream offset lies in
    /// `0..=char_count()`.
    pub fn char_count(&self) -> usize {
        char_len(&self.text)
    }
}

const DOCUMENT_BEGIN: &str = "\\begin{document}";
const MAX_INCLUDE_DEPTH: usize = 8;

/// Decode an archive (gzipped tar, gzipped single file, or bare TeX file)
/// into a flattened `PaperSource`.
///
/// The main document is chosen by [`resolve_main_document`] and its
/// `\input`/`\include` targets are inlined recursively up to a nesting depth
/// of 8; deeper nesting (including include cycles) aborts with
/// `CorruptArchive`. Unresolvable targets are replaced by an empty string and
/// logged, which keeps offsets well-defined without inventing content.
pub fn load_archive(
    bytes: &[u8],
    paper_id: &str,
    origin: &str,
    category_tags: Vec<String>,
) -> Result<PaperSource, CorpusError> {
    let members = decode_members(bytes, paper_id)?;
    let root = resolve_main_document(paper_id, &members)?;
    let member_map: BTreeMap<&str, &str> = members
        .iter()
        .map(|(n, t)| (n.as_str(), t.as_str()))
        .collect();
    let root_text = member_map[root.as_str()];
    let text = inline_includes(root_text, &member_map, 0, paper_id)?;
    Ok(PaperSource {
        paper_id: paper_id.to_string(),
        text,
        origin: origin.to_string(),
        category_tags,
    })
}

/// Pick the root member: the unique one containing `\begin{document}`; if
/// several qualify, the one with the most characters; ties break by
/// lexicographically smallest name. A lone .tex member is accepted as the
/// root even without the marker (single-file sources often omit it only in
/// fixtures, but nothing downstream needs the preamble).
pub fn resolve_main_document(
    paper_id: &str,
    members: &[(String, String)],
) -> Result<String, CorpusError> {
    let tex_members: Vec<&(String, String)> = members
        .iter()
        .filter(|(name, _)| name.to_ascii_lowercase().ends_with(".tex"))
        .collect();
    if tex_members.is_empty() {
        return Err(CorpusError::NoTexFound {
            paper_id: paper_id.to_string(),
        });
    }
    if tex_members.len() == 1 {
        return Ok(tex_members[0].0.clone());
    }
    let mut candidates: Vec<&(String, String)> = tex_members
        .iter()
        .copied()
        .filter(|(_, text)| text.contains(DOCUMENT_BEGIN))
        .collect();
    if candidates.is_empty() {
        return Err(CorpusError::NoRootCandidate {
            paper_id: paper_id.to_string(),
        });
    }
    // Largest first, then smallest name: after the sort the winner is first.
    candidates.sort_by(|a, b| {
        char_len(&b.1)
            .cmp(&char_len(&a.1))
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(candidates[0].0.clone())
}

/// Decode the raw archive bytes into named UTF-8 members.
///
/// Layouts handled: gzip + tar (the common arXiv form), gzip over a single
/// file, bare tar, and a bare TeX file. Members that are not valid UTF-8 are
/// skipped with a warning; if nothing decodable remains the archive counts
/// as corrupt.
fn decode_members(bytes: &[u8], paper_id: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let corrupt = |reason: &str| CorpusError::CorruptArchive {
        paper_id: paper_id.to_string(),
        reason: reason.to_string(),
    };
    let inner: Vec<u8> = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| corrupt(&format!("gzip: {e}")))?;
        out
    } else {
        bytes.to_vec()
    };

    if looks_like_tar(&inner) {
        let mut members = Vec::new();
        let mut archive = tar::Archive::new(inner.as_slice());
        let entries = archive.entries().map_err(|e| corrupt(&format!("tar: {e}")))?;
        for entry in entries {
            let mut entry = entry.map_err(|e| corrupt(&format!("tar entry: {e}")))?;
            if !entry.header().entry_type().is_file() {
                continue;
            }
            let name = match entry.path() {
                Ok(p) => p.to_string_lossy().into_owned(),
                Err(_) => continue,
            };
            let mut raw = Vec::new();
            entry
                .read_to_end(&mut raw)
                .map_err(|e| corrupt(&format!("tar read: {e}")))?;
            match String::from_utf8(raw) {
                Ok(text) => members.push((name, normalize_newlines(&text))),
                Err(_) => warn!("paper {paper_id}: skipping non-UTF-8 member {name}"),
            }
        }
        if members.is_empty() {
            return Err(corrupt("tar archive has no decodable file members"));
        }
        Ok(members)
    } else {
        let text = String::from_utf8(inner).map_err(|_| corrupt("not valid UTF-8"))?;
        Ok(vec![("main.tex".to_string(), normalize_newlines(&text))])
    }
}

fn looks_like_tar(bytes: &[u8]) -> bool {
    bytes.len() > 262 && &bytes[257..262] == b"ustar"
}

fn normalize_newlines(s: &str) -> String {
    if !s.contains('\r') {
        return s.to_string();
    }
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Inline `\input{...}` / `\include{...}` recursively, depth-limited.
fn inline_includes(
    text: &str,
    members: &BTreeMap<&str, &str>,
    depth: usize,
    paper_id: &str,
) -> Result<String, CorpusError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(CorpusError::CorruptArchive {
            paper_id: paper_id.to_string(),
            reason: format!("include nesting exceeds depth {MAX_INCLUDE_DEPTH}"),
        });
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let Some((before, command, after)) = next_include(rest) else {
            out.push_str(rest);
            return Ok(out);
        };
        out.push_str(before);
        let Some((target, after_brace)) = parse_braced_argument(after) else {
            // `\input` not followed by a braced argument: copy it verbatim.
            out.push_str(command);
            rest = after;
            continue;
        };
        if is_commented(&out) {
            out.push_str(command);
            rest = after;
            continue;
        }
        match lookup_member(members, target.trim()) {
            Some(included) => {
                let flattened = inline_includes(included, members, depth + 1, paper_id)?;
                out.push_str(&flattened);
            }
            None => {
                warn!("paper {paper_id}: unresolvable include `{}`", target.trim());
            }
        }
        rest = after_brace;
    }
}

/// Find the next include command. Returns (text before it, the command
/// itself, text after the command name).
fn next_include(text: &str) -> Option<(&str, &str, &str)> {
    let mut search_from = 0;
    loop {
        let idx = text[search_from..].find("\\in")? + search_from;
        for cmd in ["\\input", "\\include"] {
            if text[idx..].starts_with(cmd) {
                // Reject longer control words (\includegraphics, \inputenc).
                let after = &text[idx + cmd.len()..];
                if !after.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                    return Some((&text[..idx], cmd, after));
                }
            }
        }
        search_from = idx + 3;
    }
}

/// Parse `{arg}` at the start of `text`.
fn parse_braced_argument(text: &str) -> Option<(&str, &str)> {
    let rest = text.strip_prefix('{')?;
    let close = rest.find('}')?;
    Some((&rest[..close], &rest[close + 1..]))
}

/// Whether the current output position sits inside a TeX comment: an
/// unescaped `%` appears earlier on the same line.
fn is_commented(emitted: &str) -> bool {
    let line_start = emitted.rfind('\n').map_or(0, |i| i + 1);
    let line = &emitted[line_start..];
    let mut backslashes = 0usize;
    for c in line.chars() {
        match c {
            '\\' => backslashes += 1,
            '%' if backslashes % 2 == 0 => return true,
            _ => backslashes = 0,
        }
    }
    false
}

fn lookup_member<'a>(members: &BTreeMap<&str, &'a str>, target: &str) -> Option<&'a str> {
    if let Some(t) = members.get(target) {
        return Some(t);
    }
    let with_ext = format!("{target}.tex");
    members.get(with_ext.as_str()).copied()
}
