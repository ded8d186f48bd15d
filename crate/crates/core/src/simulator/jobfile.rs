//! Job sequences as CSV: `task,release,demand` with a header row.

use std::io;

use super::JobSequence;
use crate::ratio::{self, Exact};

#[derive(Debug, thiserror::Error)]
pub enum JobFileError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

pub fn read<R: io::Read>(input: R) -> Result<JobSequence, JobFileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut items = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let field = |k: usize, what: &str| -> Result<&str, JobFileError> {
            rec.get(k).ok_or_else(|| JobFileError::Row {
                row,
                msg: format!("missing {what}"),
            })
        };
        let task = field(0, "task")?
            .parse::<usize>()
            .map_err(|_| JobFileError::Row {
                row,
                msg: "bad task id".into(),
            })?;
        let num = |s: &str, what: &str| {
            ratio::parse(s).map_err(|_| JobFileError::Row {
                row,
                msg: format!("bad {what} `{s}`"),
            })
        };
        let release = num(field(1, "release")?, "release")?;
        let demand = num(field(2, "demand")?, "demand")?;
        items.push((task, release, demand));
    }
    Ok(JobSequence::from_releases(items))
}

pub fn write<W: io::Write>(jobs: &JobSequence, out: W) -> Result<(), JobFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "release", "demand"])?;
    for j in jobs.jobs() {
        w.write_record([
            j.task.to_string(),
            Exact(&j.release).to_string(),
            Exact(&j.demand).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
