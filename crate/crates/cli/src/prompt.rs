//! Answering gates at the terminal.

use std::io::{BufRead, Write};

use harness_core::pipeline::{GateAnswer, GateResponder, GateVerdict, HumanGate};

/// Shows each gate and reads `approve|reject|modify [note]`. An empty line,
/// `skip` or end of input leaves the gate pending.
pub struct PromptResponder<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> PromptResponder<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

/// `approve looks good` → (Approve, Some("looks good")).
pub fn parse_answer(line: &str) -> Result<Option<GateAnswer>, String> {
    let line = line.trim();
    let (word, note) = match line.split_once(char::is_whitespace) {
        Some((w, n)) => (w, Some(n.trim()).filter(|n| !n.is_empty())),
        None => (line, None),
    };
    if word.is_empty() || word == "skip" {
        return Ok(None);
    }
    let verdict: GateVerdict = word.parse()?;
    Ok(Some(GateAnswer::new(verdict, note)))
}

impl<R: BufRead, W: Write> GateResponder for PromptResponder<R, W> {
    fn respond(&mut self, gate: &HumanGate) -> Option<GateAnswer> {
        let _ = writeln!(self.output, "gate {} [{}] at {}: {}", gate.id, gate.kind, gate.stage, gate.subject);
        let _ = writeln!(self.output, "{}", serde_json::to_string_pretty(&gate.payload).unwrap_or_default());
        loop {
            let _ = write!(self.output, "approve | reject | modify [note], or skip: ");
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return None,
                Ok(_) => {}
            }
            match parse_answer(&line) {
                Ok(answer) => return answer,
                Err(e) => {
                    let _ = writeln!(self.output, "{e}");
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers() {
        let a = parse_answer("approve  use the API key \n").unwrap().unwrap();
        assert_eq!(a.verdict, GateVerdict::Approve);
        assert_eq!(a.note.as_deref(), Some("use the API key"));
        assert_eq!(parse_answer("reject").unwrap().unwrap().verdict, GateVerdict::Reject);
        assert!(parse_answer("").unwrap().is_none());
        assert!(parse_answer("skip").unwrap().is_none());
        assert!(parse_answer("maybe").is_err());
    }
}
