//! Incremental delimiter/indentation scanner for partially generated code.
//!
//! Self-contained stand-in for a host-language tokenizer: a bracket stack
//! plus an indent-consistency rule. Violations on a prefix may be fixed by
//! later steps, which is why the `last` aggregation is used for code tasks.

/// Returns true when the code-so-far has mismatched delimiters, an
/// unterminated string, or inconsistent indentation.
pub fn code_has_violation(code: &str) -> bool {
    let mut brackets: Vec<char> = Vec::new();
    let mut indents: Vec<usize> = vec![0];

    for line in code.split('\n') {
        if line.trim().is_empty() {
            continue;
        }
        // Indentation only counts on logical lines, not bracket continuations.
        if brackets.is_empty() {
            let indent = indent_width(line);
            if indent > *indents.last().unwrap() {
                indents.push(indent);
            } else {
                while *indents.last().unwrap() > indent {
                    indents.pop();
                }
                if *indents.last().unwrap() != indent {
                    return true; // dedent to a level that was never opened
                }
            }
        }

        let mut chars = line.chars().peekable();
        let mut in_string: Option<char> = None;
        while let Some(c) = chars.next() {
            match in_string {
                Some(quote) => {
                    if c == '\\' {
                        chars.next();
                    } else if c == quote {
                        in_string = None;
                    }
                }
                None => match c {
                    '\'' | '"' => in_string = Some(c),
                    '(' | '[' | '{' => brackets.push(c),
                    ')' | ']' | '}' => {
                        let expected = match c {
                            ')' => '(',
                            ']' => '[',
                            _ => '{',
                        };
                        if brackets.pop() != Some(expected) {
                            return true;
                        }
                    }
                    '#' => break, // comment to end of line
                    _ => {}
                },
            }
        }
        if in_string.is_some() {
            return true; // string never closed before end of line
        }
    }

    !brackets.is_empty()
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            _ => break,
        }
    }
    width
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_code_is_clean() {
        assert!(!code_has_violation("def f(x):\n    return (x + 1) * 2"));
        assert!(!code_has_violation(""));
        assert!(!code_has_violation("xs = [1, 2, 3]\nprint(xs)"));
    }

    #[test]
    fn unclosed_parenthesis_is_flagged() {
        assert!(code_has_violation("print((1 + 2)"));
        assert!(code_has_violation("xs = [1, 2"));
    }

    #[test]
    fn mismatched_closer_is_flagged() {
        assert!(code_has_violation("f(]"));
        assert!(code_has_violation(")"));
    }

    #[test]
    fn strings_shield_brackets() {
        assert!(!code_has_violation("s = \"(((\""));
        assert!(!code_has_violation("s = '])'"));
        assert!(code_has_violation("s = \"unterminated"));
    }

    #[test]
    fn escaped_quotes_stay_in_string() {
        assert!(!code_has_violation(r#"s = "quote \" inside""#));
    }

    #[test]
    fn dedent_to_unknown_level_is_flagged() {
        assert!(code_has_violation("def f():\n        x = 1\n    y = 2"));
        assert!(!code_has_violation("def f():\n    x = 1\n    y = 2\nz = 3"));
    }

    #[test]
    fn continuation_lines_inside_brackets_ignore_indent() {
        assert!(!code_has_violation("f(1,\n          2,\n  3)"));
    }

    #[test]
    fn violation_fixed_by_a_later_step() {
        // The prefix is penalized, the completed form is clean.
        assert!(code_has_violation("f(a, b"));
        assert!(!code_has_violation("f(a, b)"));
    }
}
