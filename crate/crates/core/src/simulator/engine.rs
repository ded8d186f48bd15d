use std::collections::BTreeMap;

use num_traits::Zero;

use super::trace::{EventKind, JobRef, ScheduleTrace, Segment, TraceEvent};
use super::{Budgeting, JobSequence, SimTask};
use crate::meba::Mode;
use crate::ratio::Time;
use crate::taskmodel::Criticality;

#[derive(Debug)]
struct Active {
    job: JobRef,
    task: usize,
    release: Time,
    demand: Time,
    /// Demand after HC-mode capping.
    allowed: Time,
    consumed: Time,
    /// Budget assigned at the latest LC-mode dispatch (HC jobs).
    budget: Option<Time>,
}

enum Next {
    Complete,
    Exhaust,
    Threshold,
}

struct Engine<'a> {
    tasks: Vec<SimTask>,
    budgeting: Budgeting,
    jobs: &'a JobSequence,
    mode: Mode,
    now: Time,
    active: Vec<Active>,
    running: Option<JobRef>,
    segment_start: Time,
    trace: ScheduleTrace,
}

pub(super) fn run(
    tasks: Vec<SimTask>,
    budgeting: Budgeting,
    jobs: &JobSequence,
    horizon: Option<&Time>,
) -> ScheduleTrace {
    let beta_budget = match &budgeting {
        Budgeting::Meba(m) => Some(m.beta_budget().clone()),
        Budgeting::Fixed(_) => None,
    };
    let mut e = Engine {
        tasks,
        budgeting,
        jobs,
        mode: Mode::Lc,
        now: Time::zero(),
        active: Vec::new(),
        running: None,
        segment_start: Time::zero(),
        trace: ScheduleTrace {
            beta_budget,
            ..Default::default()
        },
    };
    e.run(horizon);
    e.trace
}

impl Engine<'_> {
    fn task(&self, id: usize) -> &SimTask {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .expect("job of unknown task")
    }

    /// Scheduling key `(effective deadline, task id, seq)`.
    fn key(&self, a: &Active) -> (Time, usize, usize) {
        let t = self.task(a.task);
        let virtual_phase = self.mode == Mode::Lc
            && match t.criticality {
                Criticality::Hc => true,
                Criticality::Lc => a.consumed < t.virtual_share,
            };
        let rel = if virtual_phase {
            &t.virtual_deadline
        } else {
            &t.period
        };
        (&a.release + rel, a.task, a.job.seq)
    }

    fn emit(&mut self, kind: EventKind, job: Option<JobRef>) {
        let reserved_load = match &self.budgeting {
            Budgeting::Meba(m) => Some(m.reserved_load()),
            Budgeting::Fixed(_) => None,
        };
        self.trace.events.push(TraceEvent {
            time: self.now.clone(),
            kind,
            job,
            mode: self.mode,
            reserved_load,
        });
    }

    fn close_segment(&mut self, job: JobRef) {
        if self.segment_start < self.now {
            self.trace.segments.push(Segment {
                job,
                start: self.segment_start.clone(),
                end: self.now.clone(),
            });
        }
    }

    fn idx(&self, job: JobRef) -> usize {
        self.active
            .iter()
            .position(|a| a.job == job)
            .expect("inactive job")
    }

    fn admit(&mut self, job: &super::Job) {
        let t = self.task(job.task);
        let lc = t.criticality == Criticality::Lc;
        let allowed = if lc && self.mode == Mode::Hc {
            std::cmp::min(job.demand.clone(), t.hc_cap.clone())
        } else {
            job.demand.clone()
        };
        if allowed.is_zero() {
            self.emit(EventKind::Drop, Some(job.reference()));
            return;
        }
        self.active.push(Active {
            job: job.reference(),
            task: job.task,
            release: job.release.clone(),
            demand: job.demand.clone(),
            allowed,
            consumed: Time::zero(),
            budget: None,
        });
    }

    /// HC-job hooks for the budgeting strategy in LC mode.
    fn on_stop(&mut self, task: usize, consumed: &Time) {
        if self.mode != Mode::Lc || self.task(task).criticality != Criticality::Hc {
            return;
        }
        if let Budgeting::Meba(m) = &mut self.budgeting {
            m.on_preempt_or_complete(task, consumed)
                .expect("consumption within MEBA budget");
        }
    }

    fn dispatch_budget(&mut self, task: usize) -> Time {
        match &mut self.budgeting {
            Budgeting::Meba(m) => m.on_dispatch(task).expect("LC-mode dispatch of an HC task"),
            Budgeting::Fixed(b) => b.get(&task).cloned().unwrap_or_else(Time::zero),
        }
    }

    fn switch_mode(&mut self, job: JobRef) {
        let e_max = match &mut self.budgeting {
            Budgeting::Meba(m) => {
                m.on_budget_exhausted(job.task, self.now.clone())
                    .expect("LC mode")
                    .e_max
            }
            Budgeting::Fixed(_) => BTreeMap::new(),
        };
        self.mode = Mode::Hc;
        self.emit(EventKind::ModeSwitch { e_max }, Some(job));
        // Pending LC jobs keep at most their guaranteed share.
        let mut dropped = Vec::new();
        for a in &mut self.active {
            let t = self.tasks.iter().find(|t| t.id == a.task).expect("task");
            if t.criticality != Criticality::Lc {
                continue;
            }
            if a.consumed >= t.hc_cap {
                dropped.push(a.job);
            } else if a.allowed > t.hc_cap {
                a.allowed = t.hc_cap.clone();
            }
        }
        for j in dropped {
            // The running job is the HC job that triggered the switch.
            debug_assert_ne!(Some(j), self.running);
            let i = self.idx(j);
            self.active.remove(i);
            self.emit(EventKind::Drop, Some(j));
        }
    }

    fn go_idle(&mut self) {
        self.emit(EventKind::Idle, None);
        self.mode = Mode::Lc;
        if let Budgeting::Meba(m) = &mut self.budgeting {
            m.on_idle();
        }
    }

    fn run(&mut self, horizon: Option<&Time>) {
        let jobs = self.jobs.jobs();
        let mut next = 0;
        let mut busy = false;
        loop {
            if horizon.is_some_and(|h| self.now >= *h) {
                break;
            }
            // An instant with no pending work is idle even if a release follows
            // at the same time; the reset comes before that release is admitted.
            if self.active.is_empty() && busy {
                self.go_idle();
                busy = false;
            }
            while next < jobs.len() && jobs[next].release <= self.now {
                if horizon.is_none_or(|h| jobs[next].release < *h) {
                    self.admit(&jobs[next]);
                }
                next += 1;
            }
            if self.active.is_empty() {
                match jobs.get(next) {
                    Some(j) => {
                        self.now = j.release.clone();
                        continue;
                    }
                    None => break,
                }
            }
            busy = true;

            let best = self
                .active
                .iter()
                .min_by(|a, b| self.key(a).cmp(&self.key(b)))
                .map(|a| a.job)
                .expect("non-empty");
            if self.running != Some(best) {
                if let Some(prev) = self.running.take() {
                    self.close_segment(prev);
                    let consumed = self.active[self.idx(prev)].consumed.clone();
                    self.on_stop(prev.task, &consumed);
                    self.emit(EventKind::Preempt, Some(prev));
                }
                let task = best.task;
                let budget = (self.mode == Mode::Lc
                    && self.task(task).criticality == Criticality::Hc)
                    .then(|| self.dispatch_budget(task));
                let i = self.idx(best);
                self.active[i].budget = budget.clone();
                self.running = Some(best);
                self.segment_start = self.now.clone();
                self.emit(EventKind::Dispatch { budget }, Some(best));
            }

            let i = self.idx(best);
            let a = &self.active[i];
            let task = self.task(a.task);
            let mut step = &a.allowed - &a.consumed;
            let mut what = Next::Complete;
            if self.mode == Mode::Lc {
                if let Some(b) = &a.budget {
                    let left = if *b > a.consumed {
                        b - &a.consumed
                    } else {
                        Time::zero()
                    };
                    if left < step {
                        step = left;
                        what = Next::Exhaust;
                    }
                }
                if task.criticality == Criticality::Lc && a.consumed < task.virtual_share {
                    let left = &task.virtual_share - &a.consumed;
                    if left < step {
                        step = left;
                        what = Next::Threshold;
                    }
                }
            }
            let mut limit = jobs.get(next).map(|j| &j.release - &self.now);
            if let Some(h) = horizon {
                let to_h = h - &self.now;
                if limit.as_ref().is_none_or(|l| to_h < *l) {
                    limit = Some(to_h);
                }
            }
            if let Some(l) = limit {
                // A job reaching its budget exactly at a release switches the mode
                // only if it is still selected afterwards.
                if l < step || (l == step && matches!(what, Next::Exhaust)) {
                    // A release (or the horizon) comes first; the running job just advances.
                    self.active[i].consumed += &l;
                    self.now += l;
                    if horizon.is_some_and(|h| self.now >= *h) {
                        self.close_segment(best);
                        break;
                    }
                    continue;
                }
            }

            self.active[i].consumed += &step;
            self.now += step;
            match what {
                Next::Complete => {
                    self.close_segment(best);
                    let done = self.active.remove(i);
                    self.running = None;
                    let kind = if done.allowed < done.demand {
                        EventKind::Drop
                    } else {
                        EventKind::Complete
                    };
                    self.on_stop(done.task, &done.consumed);
                    self.emit(kind, Some(best));
                }
                Next::Exhaust => self.switch_mode(best),
                Next::Threshold => self.emit(EventKind::DeadlineChange, Some(best)),
            }
        }
    }
}
