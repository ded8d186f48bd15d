//! Line-oriented task-set files.
//!
//! ```text
//! taskset v1
//! # id  T    C    crit  [alpha] [CL]
//! 1     10   5    LC    1/2
//! 2     10   4    HC    -       2
//! ```
//!
//! Numbers are integers, `p/q` rationals, or exact decimals. `-` stands for an
//! absent alpha (HC tasks). Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::ratio::{self, Exact};
use crate::taskmodel::{Criticality, McTask, ModelError, TaskSet};

pub const HEADER: &str = "taskset v1";

#[derive(Debug, thiserror::Error)]
pub enum TaskFileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Model { line: usize, source: ModelError },
    #[error(transparent)]
    Set(ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse(text: &str) -> Result<TaskSet, TaskFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((line, other)) => {
            return Err(TaskFileError::Syntax {
                line,
                msg: format!("expected header `{HEADER}`, found `{other}`"),
            })
        }
        None => {
            return Err(TaskFileError::Syntax {
                line: 1,
                msg: "missing header".into(),
            })
        }
    }
    let mut tasks = Vec::new();
    for (line, content) in lines {
        tasks.push(parse_task(line, content)?);
    }
    TaskSet::new(tasks).map_err(TaskFileError::Set)
}

fn parse_task(line: usize, content: &str) -> Result<McTask, TaskFileError> {
    let syntax = |msg: String| TaskFileError::Syntax { line, msg };
    let fields: Vec<&str> = content.split_whitespace().collect();
    if !(4..=6).contains(&fields.len()) {
        return Err(syntax(format!(
            "expected 4 to 6 fields, found {}",
            fields.len()
        )));
    }
    let id: usize = fields[0]
        .parse()
        .map_err(|_| syntax(format!("bad task id `{}`", fields[0])))?;
    let num =
        |s: &str, what: &str| ratio::parse(s).map_err(|_| syntax(format!("bad {what} `{s}`")));
    let period = num(fields[1], "period")?;
    let wcet = num(fields[2], "WCET")?;
    let crit = match fields[3] {
        "LC" | "lc" => Criticality::Lc,
        "HC" | "hc" => Criticality::Hc,
        other => {
            return Err(syntax(format!(
                "criticality must be LC or HC, found `{other}`"
            )))
        }
    };
    let model = |source| TaskFileError::Model { line, source };
    let mut task = McTask::new(id, period, wcet, crit).map_err(model)?;
    if let Some(alpha) = fields.get(4).filter(|s| **s != "-") {
        task = task.with_alpha(num(alpha, "alpha")?).map_err(model)?;
    }
    if let Some(cl) = fields.get(5) {
        task = task.with_lc_estimate(num(cl, "C^L")?).map_err(model)?;
    }
    Ok(task)
}

pub fn format(ts: &TaskSet) -> String {
    let mut out = format!("{HEADER}\n# id T C crit alpha CL\n");
    for t in ts.tasks() {
        let _ = write!(
            out,
            "{} {} {} {}",
            t.id(),
            Exact(t.period()),
            Exact(t.wcet()),
            t.criticality()
        );
        let alpha = if t.is_lc() {
            ratio::format(t.alpha())
        } else {
            "-".to_string()
        };
        match t.lc_estimate() {
            Some(cl) => {
                let _ = write!(out, " {alpha} {}", Exact(cl));
            }
            None if t.is_lc() => {
                let _ = write!(out, " {alpha}");
            }
            None => {}
        }
        out.push('\n');
    }
    out
}

pub fn read(path: &Path) -> Result<TaskSet, TaskFileError> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn write(path: &Path, ts: &TaskSet) -> Result<(), TaskFileError> {
    std::fs::write(path, format(ts))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, q};

    #[test]
    fn parses_example_file() {
        let ts = parse(
            "# generated\ntaskset v1\n1 10 5 LC 1/2\n\n2 10 4 HC - 2  # static estimate\n3 25/2 0.5 HC\n",
        )
        .unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.get(1).unwrap().alpha(), &q(1, 2));
        assert_eq!(ts.get(2).unwrap().lc_estimate(), Some(&int(2)));
        assert_eq!(ts.get(3).unwrap().period(), &q(25, 2));
        assert_eq!(ts.get(3).unwrap().wcet(), &q(1, 2));
    }

    #[test]
    fn roundtrip() {
        let ts =
            parse("taskset v1\n0 7 3/2 LC 1/3 1\n1 9 4 HC - 3\n2 11 2 HC\n3 5 1 LC 1\n").unwrap();
        assert_eq!(parse(&format(&ts)).unwrap(), ts);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("taskset v1\n1 10 5 LC\n2 10 x HC\n").unwrap_err();
        assert!(
            matches!(err, TaskFileError::Syntax { line: 3, .. }),
            "{err}"
        );
        let err = parse("taskset v1\n1 10 11 LC\n").unwrap_err();
        assert!(matches!(err, TaskFileError::Model { line: 2, .. }), "{err}");
        let err = parse("taskset v1\n1 10 5 MID\n").unwrap_err();
        assert!(matches!(err, TaskFileError::Syntax { line: 2, .. }));
        let err = parse("taskset v2\n").unwrap_err();
        assert!(matches!(err, TaskFileError::Syntax { line: 1, .. }));
        assert!(matches!(
            parse("").unwrap_err(),
            TaskFileError::Syntax { .. }
        ));
        assert!(matches!(
            parse("taskset v1\n1 10 5\n").unwrap_err(),
            TaskFileError::Syntax { line: 2, .. }
        ));
        assert!(matches!(
            parse("taskset v1\n1 10 5 LC\n1 10 5 LC\n").unwrap_err(),
            TaskFileError::Set(ModelError::DuplicateId(1))
        ));
    }
}
