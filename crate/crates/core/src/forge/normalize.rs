//! Surface-format alignment of a generated negative with its positive.
//!
//! Only layout changes: terminal punctuation, interior spacing, blank-line
//! runs and the case of the first letter. Words are never edited.

const TERMINALS: [char; 3] = ['.', '!', '?'];

fn max_newline_run(s: &str) -> usize {
    let mut best = 0;
    let mut run = 0;
    for c in s.chars() {
        if c == '\n' {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Collapses interior runs of spaces/tabs to one space, keeping each line's
/// indentation, and strips trailing blanks.
fn collapse_spaces(line: &str) -> String {
    let indent_len = line.len() - line.trim_start_matches([' ', '\t']).len();
    let (indent, body) = line.split_at(indent_len);
    let mut out = String::from(indent);
    let mut prev_blank = false;
    for c in body.chars() {
        if c == ' ' || c == '\t' {
            if !prev_blank {
                out.push(' ');
            }
            prev_blank = true;
        } else {
            out.push(c);
            prev_blank = false;
        }
    }
    out.trim_end().to_string()
}

fn limit_newline_runs(s: &str, max_run: usize) -> String {
    let mut out = String::with_capacity(s.len());
    let mut run = 0;
    for c in s.chars() {
        if c == '\n' {
            run += 1;
            if run > max_run {
                continue;
            }
        } else {
            run = 0;
        }
        out.push(c);
    }
    out
}

fn first_alpha_case(s: &str) -> Option<bool> {
    s.chars().find(|c| c.is_alphabetic()).map(char::is_uppercase)
}

fn set_first_alpha_case(s: &str, upper: bool) -> String {
    let mut done = false;
    s.chars()
        .flat_map(|c| {
            if !done && c.is_alphabetic() {
                done = true;
                if upper {
                    c.to_uppercase().collect::<Vec<_>>()
                } else {
                    c.to_lowercase().collect::<Vec<_>>()
                }
            } else {
                vec![c]
            }
        })
        .collect()
}

/// Returns `negative` reformatted to follow `positive`'s conventions.
/// Idempotent: `normalize_negative(p, &normalize_negative(p, n))` equals
/// `normalize_negative(p, n)`.
pub fn normalize_negative(positive: &str, negative: &str) -> String {
    let pos = positive.trim();
    let neg = negative.trim().replace("\r\n", "\n");

    let pos_interior_runs = pos
        .lines()
        .any(|l| l.trim_start_matches([' ', '\t']).contains("  "));
    let mut lines: Vec<String> = if pos_interior_runs {
        neg.lines().map(|l| l.trim_end().to_string()).collect()
    } else {
        neg.lines().map(collapse_spaces).collect()
    };
    if lines.is_empty() {
        return String::new();
    }
    let mut text = lines.join("\n");
    text = limit_newline_runs(&text, max_newline_run(pos).max(1));

    if let (Some(p_up), Some(n_up)) = (first_alpha_case(pos), first_alpha_case(&text)) {
        if p_up != n_up {
            let cased = set_first_alpha_case(&text, p_up);
            // Some letters have no single-letter case mapping; keep those.
            if first_alpha_case(&cased) == Some(p_up) {
                text = cased;
            }
        }
    }

    let body = text.trim_end_matches(TERMINALS);
    match pos.chars().last().filter(|c| TERMINALS.contains(c)) {
        Some(p) => {
            if !body.is_empty() {
                text = format!("{body}{p}");
            }
        }
        None => text = body.to_string(),
    }
    lines = text.lines().map(str::to_string).collect();
    lines.join("\n").trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_terminal_period() {
        assert_eq!(
            normalize_negative("The answer is 94.", "The answer is 104"),
            "The answer is 104."
        );
    }

    #[test]
    fn replaces_or_removes_terminal_mark() {
        assert_eq!(normalize_negative("It rains.", "It snows!!"), "It snows.");
        assert_eq!(normalize_negative("Paris", "London."), "London");
    }

    #[test]
    fn identical_formatting_is_unchanged() {
        let p = "Karlee has <<3/5*100=60>>60 strawberries.\nThe final answer is 94.";
        assert_eq!(normalize_negative(p, p), p);
        let n = "Karlee has <<3/5*100=60>>60 strawberries.\nThe final answer is 86.";
        assert_eq!(normalize_negative(p, n), n);
    }

    #[test]
    fn double_spacing_collapses() {
        assert_eq!(
            normalize_negative("One two.\nThree.", "One  two.\n\n\nFour."),
            "One two.\nFour."
        );
        assert_eq!(
            normalize_negative("Para one.\n\nPara two.", "Para one.\n\n\n\nPara three."),
            "Para one.\n\nPara three."
        );
    }

    #[test]
    fn indentation_survives() {
        let p = "def f(x):\n    return x";
        let n = "def f(x):\n    return  x + 1";
        assert_eq!(normalize_negative(p, n), "def f(x):\n    return x + 1");
    }

    #[test]
    fn sentence_case_follows_positive() {
        assert_eq!(normalize_negative("Sunny.", "raining"), "Raining.");
        assert_eq!(normalize_negative("sunny", "Raining"), "raining");
        assert_eq!(normalize_negative("42 apples.", "17 Apples"), "17 apples.");
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(normalize_negative("Yes.", "   "), "");
        assert_eq!(normalize_negative("Yes", "?!"), "");
        assert_eq!(normalize_negative("Yes.", "."), ".");
    }
}
