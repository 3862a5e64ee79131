//! Character counting shared by every module.
//!
//! All indices in this crate (label positions, entity offsets, window
//! boundaries) count extended grapheme clusters, not bytes or code points.

use unicode_segmentation::UnicodeSegmentation;

/// Number of user-perceived characters in `text`.
pub fn char_count(text: &str) -> usize {
    text.graphemes(true).count()
}

/// Splits `text` into its user-perceived characters.
pub fn chars(text: &str) -> Vec<&str> {
    text.graphemes(true).collect()
}

/// Returns the substring covering characters `start..end`.
pub fn slice(text: &str, start: usize, end: usize) -> String {
    text.graphemes(true).skip(start).take(end.saturating_sub(start)).collect()
}
