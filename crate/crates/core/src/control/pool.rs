//! Executes the per-cycle command on every sub-system and joins the results.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;

use super::subsystem::{ControlSubsystem, CycleCommand, SubsystemError, SubsystemReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// All sub-systems run in turn on the caller's thread.
    Sequential,
    /// One persistent thread per sub-system, joined every cycle.
    Threaded,
}

type Outcome = Result<SubsystemReport, SubsystemError>;

struct Worker {
    jobs: Sender<CycleCommand>,
    handle: JoinHandle<()>,
}

enum Members {
    Local(Vec<Box<dyn ControlSubsystem>>),
    Threads {
        workers: Vec<Worker>,
        results: Receiver<(usize, Outcome)>,
    },
}

pub struct SubsystemPool {
    names: Vec<String>,
    members: Members,
}

fn run_one(sub: &mut dyn ControlSubsystem, cmd: &CycleCommand) -> Outcome {
    match catch_unwind(AssertUnwindSafe(|| sub.execute_cycle_orders(cmd))) {
        Ok(r) => r,
        Err(p) => {
            let reason = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(SubsystemError::Failed {
                name: sub.name().to_string(),
                reason,
            })
        }
    }
}

impl SubsystemPool {
    pub fn new(members: Vec<Box<dyn ControlSubsystem>>, mode: PoolMode) -> Self {
        let names = members.iter().map(|m| m.name().to_string()).collect();
        let members = match mode {
            PoolMode::Sequential => Members::Local(members),
            PoolMode::Threaded => {
                let (res_tx, results) = channel();
                let workers = members
                    .into_iter()
                    .enumerate()
                    .map(|(idx, mut sub)| {
                        let (jobs, rx) = channel::<CycleCommand>();
                        let res_tx = res_tx.clone();
                        let handle = std::thread::Builder::new()
                            .name(sub.name().to_string())
                            .spawn(move || {
                                for cmd in rx {
                                    let out = run_one(sub.as_mut(), &cmd);
                                    if res_tx.send((idx, out)).is_err() {
                                        break;
                                    }
                                }
                            })
                            .expect("spawning sub-system thread");
                        Worker { jobs, handle }
                    })
                    .collect();
                Members::Threads { workers, results }
            }
        };
        Self { names, members }
    }

    pub fn mode(&self) -> PoolMode {
        match self.members {
            Members::Local(_) => PoolMode::Sequential,
            Members::Threads { .. } => PoolMode::Threaded,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Direct access to the members; only available in sequential mode.
    pub fn members_mut(&mut self) -> Option<&mut [Box<dyn ControlSubsystem>]> {
        match &mut self.members {
            Members::Local(m) => Some(m),
            Members::Threads { .. } => None,
        }
    }

    /// Runs `cmd` on every member and returns once all have finished.
    /// Results are in member order.
    pub fn run_cycle(&mut self, cmd: &CycleCommand) -> Vec<Outcome> {
        match &mut self.members {
            Members::Local(m) => m.iter_mut().map(|s| run_one(s.as_mut(), cmd)).collect(),
            Members::Threads { workers, results } => {
                let mut out: Vec<Option<Outcome>> = vec![None; workers.len()];
                let mut pending = 0;
                for (idx, w) in workers.iter().enumerate() {
                    if w.jobs.send(*cmd).is_ok() {
                        pending += 1;
                    } else {
                        out[idx] = Some(Err(SubsystemError::Failed {
                            name: self.names[idx].clone(),
                            reason: "worker gone".into(),
                        }));
                    }
                }
                for _ in 0..pending {
                    match results.recv() {
                        Ok((idx, r)) => out[idx] = Some(r),
                        Err(_) => break,
                    }
                }
                out.into_iter()
                    .enumerate()
                    .map(|(idx, r)| {
                        r.unwrap_or_else(|| {
                            Err(SubsystemError::Failed {
                                name: self.names[idx].clone(),
                                reason: "no result".into(),
                            })
                        })
                    })
                    .collect()
            }
        }
    }
}

impl Drop for SubsystemPool {
    fn drop(&mut self) {
        if let Members::Threads { workers, .. } = std::mem::replace(&mut self.members, Members::Local(Vec::new())) {
            for w in workers {
                drop(w.jobs);
                let _ = w.handle.join();
            }
        }
    }
}
