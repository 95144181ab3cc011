//! Removal of `[** ... **]` de-identification placeholders.

const OPEN: &str = "[**";
const CLOSE: &str = "**]";

/// Removes every de-identification placeholder from `text`.
///
/// A placeholder runs from `[**` to the next `**]` on the same line. An
/// unclosed `[**` is stripped up to the end of its line. The whitespace run
/// around each removal site collapses to one space, or to the newlines it
/// contained, and disappears entirely at the start or end of the text.
pub fn strip_deid(text: &str) -> String {
    let mut current = text.to_owned();
    // Removal can splice together a fresh `[**`, so repeat until none is left.
    while current.contains(OPEN) {
        current = strip_pass(&current);
    }
    current
}

fn strip_pass(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find(OPEN) {
        out.push_str(&rest[..start]);
        let after_open = &rest[start + OPEN.len()..];
        let line_end = after_open.find('\n').unwrap_or(after_open.len());
        let skip = match after_open[..line_end].find(CLOSE) {
            Some(close) => close + CLOSE.len(),
            None => line_end,
        };
        rest = &after_open[skip..];

        // Collapse the whitespace on both sides of the removed span.
        let left_ws = out.len() - out.trim_end().len();
        let left_run = out.split_off(out.len() - left_ws);
        let right_ws = rest.len() - rest.trim_start().len();
        let right_run = &rest[..right_ws];
        rest = &rest[right_ws..];

        let newlines: String = left_run
            .chars()
            .chain(right_run.chars())
            .filter(|&c| c == '\n')
            .collect();
        let at_edge = out.is_empty() || rest.is_empty();
        if at_edge {
            if !out.is_empty() || !rest.is_empty() {
                // keep line structure even at an edge
                out.push_str(&newlines);
            }
        } else if !newlines.is_empty() {
            out.push_str(&newlines);
        } else if left_ws + right_ws > 0 || needs_separator(&out, rest) {
            out.push(' ');
        }
    }
    out.push_str(rest);
    out
}

fn needs_separator(left: &str, right: &str) -> bool {
    let l = left.chars().next_back();
    let r = right.chars().next();
    matches!((l, r), (Some(a), Some(b)) if a.is_alphanumeric() && b.is_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn removes_date_placeholder() {
        assert_eq!(strip_deid("admitted on [**2101-5-12**] by"), "admitted on by");
    }

    #[test]
    fn identity_without_placeholders() {
        assert_eq!(strip_deid("no placeholders here"), "no placeholders here");
    }

    #[test]
    fn keeps_newline_after_removed_name() {
        assert_eq!(
            strip_deid("Dr. [**Last Name (un) 4524**]\nfollow up"),
            "Dr.\nfollow up"
        );
    }

    #[test]
    fn unclosed_placeholder_strips_to_end_of_line() {
        assert_eq!(
            strip_deid("seen by [**Doctor First Name\nnext line stays"),
            "seen by\nnext line stays"
        );
    }

    #[test]
    fn placeholder_at_edges() {
        assert_eq!(strip_deid("[**Name**] is here"), "is here");
        assert_eq!(strip_deid("call [**Telephone/Fax 123**]"), "call");
        assert_eq!(strip_deid("[**Only**]"), "");
    }

    #[test]
    fn nested_brackets_do_not_survive() {
        let out = strip_deid("a [[**x**]**y**] b");
        assert!(!out.contains("[**"), "{out}");
    }

    #[test]
    fn blank_lines_survive_removal() {
        assert_eq!(strip_deid("end. [**Name**]\n\nPlan: go"), "end.\n\nPlan: go");
    }

    proptest! {
        #[test]
        fn output_has_no_open_marker_and_is_idempotent(
            s in "([a-z ]{0,6}|\\[\\*\\*|\\*\\*\\]|\n|[0-9]{1,3}){0,20}"
        ) {
            let once = strip_deid(&s);
            prop_assert!(!once.contains("[**"));
            prop_assert_eq!(strip_deid(&once), once.clone());
        }
    }
}
