//! Bounded display queue that discards its oldest entry when full.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct Inner<T> {
    buf: VecDeque<T>,
    dropped: u64,
    pushed: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct DropOldestQueue<T> {
    inner: Mutex<Inner<T>>,
    ready: Condvar,
    capacity: usize,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            inner: Mutex::new(Inner {
                buf: VecDeque::with_capacity(capacity),
                dropped: 0,
                pushed: 0,
                closed: false,
            }),
            ready: Condvar::new(),
            capacity,
        }
    }

    /// Never blocks. Returns true if an older entry was discarded.
    pub fn push(&self, item: T) -> bool {
        let mut g = self.inner.lock().unwrap();
        if g.closed {
            return false;
        }
        let mut evicted = false;
        if g.buf.len() == self.capacity {
            g.buf.pop_front();
            g.dropped += 1;
            evicted = true;
        }
        g.buf.push_back(item);
        g.pushed += 1;
        drop(g);
        self.ready.notify_one();
        evicted
    }

    pub fn try_recv(&self) -> Option<T> {
        self.inner.lock().unwrap().buf.pop_front()
    }

    /// Blocks until an entry arrives; `None` once closed and drained.
    pub fn recv(&self) -> Option<T> {
        let mut g = self.inner.lock().unwrap();
        loop {
            if let Some(v) = g.buf.pop_front() {
                return Some(v);
            }
            if g.closed {
                return None;
            }
            g = self.ready.wait(g).unwrap();
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<T, RecvTimeout> {
        let deadline = Instant::now() + timeout;
        let mut g = self.inner.lock().unwrap();
        loop {
            if let Some(v) = g.buf.pop_front() {
                return Ok(v);
            }
            if g.closed {
                return Err(RecvTimeout::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RecvTimeout::Timeout);
            }
            g = self.ready.wait_timeout(g, deadline - now).unwrap().0;
        }
    }

    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().unwrap().closed
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }

    pub fn pushed(&self) -> u64 {
        self.inner.lock().unwrap().pushed
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecvTimeout {
    Timeout,
    Closed,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn keeps_newest_entries() {
        let q = DropOldestQueue::new(3);
        for i in 0..10 {
            q.push(i);
        }
        assert_eq!(q.dropped(), 7);
        assert_eq!(q.pushed(), 10);
        let got: Vec<i32> = std::iter::from_fn(|| q.try_recv()).collect();
        assert_eq!(got, vec![7, 8, 9]);
    }

    #[test]
    fn close_wakes_receiver() {
        let q = Arc::new(DropOldestQueue::<u8>::new(2));
        let q2 = q.clone();
        let h = std::thread::spawn(move || q2.recv());
        std::thread::sleep(Duration::from_millis(20));
        q.close();
        assert_eq!(h.join().unwrap(), None);
        assert!(!q.push(1));
    }

    #[test]
    fn timeout() {
        let q = DropOldestQueue::<u8>::new(1);
        assert_eq!(q.recv_timeout(Duration::from_millis(5)), Err(RecvTimeout::Timeout));
        q.push(4);
        assert_eq!(q.recv_timeout(Duration::from_millis(5)), Ok(4));
    }
}
