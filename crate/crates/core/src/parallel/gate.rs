//! Phase gate between the coordinator and the workers.
//!
//! Workers block here only between snapshot phases, never while touching
//! the shared iterate.

use std::sync::{Condvar, Mutex, MutexGuard};

#[derive(Default)]
struct State {
    phase: u64,
    finished: usize,
    stop: bool,
}

#[derive(Default)]
pub struct Gate {
    state: Mutex<State>,
    cv: Condvar,
}

impl Gate {
    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking worker poisons the lock; the scope re-raises the panic
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Blocks until a phase after `seen` starts; `None` once stopped.
    pub fn await_phase(&self, seen: u64) -> Option<u64> {
        let mut st = self.lock();
        while st.phase == seen && !st.stop {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        (!st.stop).then_some(st.phase)
    }

    pub fn finish(&self) {
        let mut st = self.lock();
        st.finished += 1;
        self.cv.notify_all();
    }

    pub fn start_phase(&self) {
        let mut st = self.lock();
        st.finished = 0;
        st.phase += 1;
        self.cv.notify_all();
    }

    pub fn wait_finished(&self, workers: usize) {
        let mut st = self.lock();
        while st.finished < workers {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn stop(&self) {
        let mut st = self.lock();
        st.stop = true;
        self.cv.notify_all();
    }
}
