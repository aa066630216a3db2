//! Ground-truth answer predicates.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::MdpError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected: String,
}

/// Deterministic verdict on an extracted answer.
///
/// Execution faults (a runner that cannot start) are `CheckerFailure`
/// errors, never a 0 verdict, so infrastructure problems cannot silently
/// turn into training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerChecker {
    /// Compares numerals numerically ("42" matches "42.0"), falling back to
    /// exact string comparison for non-numeric answers.
    ExactNumericMatch { expected: String },
    /// Runs `command` once per case with the candidate body on stdin and the
    /// case input as the final argument; a case passes when trimmed stdout
    /// equals the expected output.
    TestCaseRunner { command: Vec<String>, cases: Vec<TestCase> },
    /// Exact string match against the environment's unique correct answer.
    EnvOracle { expected: String },
}

impl AnswerChecker {
    pub fn check(&self, answer: &str) -> Result<bool, MdpError> {
        match self {
            AnswerChecker::ExactNumericMatch { expected } => {
                Ok(numeric_eq(answer.trim(), expected.trim()))
            }
            AnswerChecker::EnvOracle { expected } => Ok(answer.trim() == expected.trim()),
            AnswerChecker::TestCaseRunner { command, cases } => run_cases(command, cases, answer),
        }
    }
}

fn numeric_eq(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn run_cases(command: &[String], cases: &[TestCase], body: &str) -> Result<bool, MdpError> {
    let program = command
        .first()
        .ok_or_else(|| MdpError::CheckerFailure("empty runner command".into()))?;
    for case in cases {
        let mut child = Command::new(program)
            .args(&command[1..])
            .arg(&case.input)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| MdpError::CheckerFailure(format!("spawn {program}: {e}")))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(body.as_bytes())
            .map_err(|e| MdpError::CheckerFailure(format!("write stdin: {e}")))?;
        let output = child
            .wait_with_output()
            .map_err(|e| MdpError::CheckerFailure(format!("wait: {e}")))?;
        if !output.status.success() {
            return Ok(false);
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        if stdout.trim() != case.expected.trim() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_match_tolerates_representations() {
        let c = AnswerChecker::ExactNumericMatch { expected: "42".into() };
        assert!(c.check("42").unwrap());
        assert!(c.check(" 42.0 ").unwrap());
        assert!(!c.check("41").unwrap());
        let c = AnswerChecker::ExactNumericMatch { expected: "ab".into() };
        assert!(c.check("ab").unwrap());
        assert!(!c.check("ba").unwrap());
    }

    #[test]
    fn env_oracle_is_exact() {
        let c = AnswerChecker::EnvOracle { expected: "7".into() };
        assert!(c.check("7").unwrap());
        assert!(!c.check("70").unwrap());
    }

    #[cfg(unix)]
    #[test]
    fn runner_passes_and_fails_cases() {
        // `cat -` echoes the body; the case input arg is ignored by cat only
        // if we use sh to drop it, so use sh explicitly.
        let c = AnswerChecker::TestCaseRunner {
            command: vec!["sh".into(), "-c".into(), "cat".into(), "runner".into()],
            cases: vec![TestCase { input: "unused".into(), expected: "hello".into() }],
        };
        assert!(c.check("hello").unwrap());
        assert!(!c.check("goodbye").unwrap());
    }

    #[cfg(unix)]
    #[test]
    fn missing_runner_is_a_failure_not_a_verdict() {
        let c = AnswerChecker::TestCaseRunner {
            command: vec!["definitely-not-a-real-binary-4242".into()],
            cases: vec![TestCase { input: "x".into(), expected: "y".into() }],
        };
        let err = c.check("body").unwrap_err();
        assert!(matches!(err, MdpError::CheckerFailure(_)));
    }
}
