//! A shared FIFO of jobs drained by a fixed set of worker threads. Each job
//! is handed out exactly once; results land in an append-only sink and come
//! back in queue order.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;

pub struct JobQueue<J> {
    pending: Mutex<VecDeque<(usize, J)>>,
    len: usize,
}

impl<J: Send> JobQueue<J> {
    pub fn new(jobs: Vec<J>) -> Self {
        let len = jobs.len();
        JobQueue {
            pending: Mutex::new(jobs.into_iter().enumerate().collect()),
            len,
        }
    }

    /// Jobs ever enqueued.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn take(&self) -> Option<(usize, J)> {
        self.pending.lock().expect("queue lock").pop_front()
    }

    /// Runs `work` on every job with `workers` threads pulling from the
    /// queue until it is empty. `work` also receives the worker index.
    ///
    /// # Panics
    /// If a job is lost or handed out twice, or if `work` panics.
    pub fn drain<R: Send>(self, workers: usize, work: impl Fn(usize, J) -> R + Sync) -> Vec<R> {
        let sink: Mutex<Vec<(usize, usize, R)>> = Mutex::new(Vec::with_capacity(self.len));
        thread::scope(|s| {
            for w in 0..workers.max(1) {
                let (queue, sink, work) = (&self, &sink, &work);
                s.spawn(move || {
                    while let Some((i, job)) = queue.take() {
                        let r = work(w, job);
                        sink.lock().expect("sink lock").push((i, w, r));
                    }
                });
            }
        });
        let mut done = sink.into_inner().expect("sink lock");
        done.sort_by_key(|(i, _, _)| *i);
        assert_eq!(done.len(), self.len, "every job runs once");
        assert!(done.iter().enumerate().all(|(k, (i, _, _))| k == *i), "no job runs twice");
        done.into_iter().map(|(_, _, r)| r).collect()
    }
}
