use std::collections::BTreeMap;
use std::fmt;
use std::io;

use crate::meba::Mode;
use crate::ratio::{self, Exact, Frac, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobRef {
    pub task: usize,
    pub seq: usize,
}

impl fmt::Display for JobRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.task, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A job starts or resumes; HC jobs in LC mode carry their budget.
    Dispatch {
        budget: Option<Time>,
    },
    Preempt,
    Complete,
    /// An LC job crossed its guaranteed share and now competes with its real deadline.
    DeadlineChange,
    /// LC to HC. Carries `e_max` per HC task for MEBA runs.
    ModeSwitch {
        e_max: BTreeMap<usize, Time>,
    },
    Idle,
    /// The job's remaining demand is discarded.
    Drop,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Dispatch { .. } => "dispatch",
            EventKind::Preempt => "preempt",
            EventKind::Complete => "complete",
            EventKind::DeadlineChange => "deadline_change",
            EventKind::ModeSwitch { .. } => "mode_switch",
            EventKind::Idle => "idle",
            EventKind::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Time,
    pub kind: EventKind,
    pub job: Option<JobRef>,
    /// Mode after the event.
    pub mode: Mode,
    /// MEBA's reserved load `Σ e_max / T` after the event (MEBA runs only).
    pub reserved_load: Option<Frac>,
}

/// A maximal interval during which one job ran without interruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub job: JobRef,
    pub start: Time,
    pub end: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScheduleTrace {
    pub events: Vec<TraceEvent>,
    pub segments: Vec<Segment>,
    /// The shared LC-mode budget `beta* U_H` (MEBA runs only).
    pub beta_budget: Option<Frac>,
}

impl ScheduleTrace {
    pub fn mode_switches(&self) -> impl Iterator<Item = (&Time, &TraceEvent)> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ModeSwitch { .. }))
            .map(|e| (&e.time, e))
    }

    /// HC-mode episodes `[t*, end)`; `end` is the next idle instant, or `None`
    /// if the run ended in HC mode.
    pub fn hc_episodes(&self) -> Vec<(Time, Option<Time>)> {
        let mut out = Vec::new();
        let mut open: Option<Time> = None;
        for e in &self.events {
            match e.kind {
                EventKind::ModeSwitch { .. } => open = Some(e.time.clone()),
                EventKind::Idle => {
                    if let Some(s) = open.take() {
                        out.push((s, Some(e.time.clone())));
                    }
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            out.push((s, None));
        }
        out
    }

    /// Idle instants in order.
    pub fn idle_instants(&self) -> impl Iterator<Item = &Time> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Idle)
            .map(|e| &e.time)
    }

    /// Total execution received by each job.
    pub fn service(&self) -> BTreeMap<JobRef, Time> {
        let mut out: BTreeMap<JobRef, Time> = BTreeMap::new();
        for s in &self.segments {
            *out.entry(s.job).or_default() += &s.end - &s.start;
        }
        out
    }

    /// Segments with back-to-back pieces of the same job merged.
    pub fn merged_segments(&self) -> Vec<Segment> {
        merge_segments(self.segments.iter().cloned())
    }

    /// Writes `time,event,task,job,detail`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event", "task", "job", "detail"])?;
        for e in &self.events {
            let (task, job) = match e.job {
                Some(j) => (j.task.to_string(), j.seq.to_string()),
                None => (String::new(), String::new()),
            };
            let mut detail = format!("mode={}", e.mode);
            if let Some(load) = &e.reserved_load {
                detail.push_str(&format!(";load={}", Exact(load)));
            }
            match &e.kind {
                EventKind::Dispatch { budget: Some(b) } => {
                    detail.push_str(&format!(";budget={}", Exact(b)))
                }
                EventKind::ModeSwitch { e_max } => {
                    for (id, v) in e_max {
                        detail.push_str(&format!(";e_max[{id}]={}", Exact(v)));
                    }
                }
                _ => {}
            }
            w.write_record([
                ratio::format(&e.time),
                e.kind.name().to_string(),
                task,
                job,
                detail,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn merge_segments(segments: impl IntoIterator<Item = Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for s in segments {
        if let Some(last) = out.last_mut() {
            if last.job == s.job && last.end == s.start {
                last.end = s.end;
                continue;
            }
        }
        out.push(s);
    }
    out
}
