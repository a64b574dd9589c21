//! Counting semaphore bounding the number of in-flight requests.

use std::sync::{Condvar, Mutex};

pub struct InFlightLimiter {
    available: Mutex<usize>,
    signal: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(capacity: usize) -> Self {
        InFlightLimiter {
            available: Mutex::new(capacity.max(1)),
            signal: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().expect("limiter mutex poisoned");
        while *available == 0 {
            available = self.signal.wait(available).expect("limiter mutex poisoned");
        }
        *available -= 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self
            .limiter
            .available
            .lock()
            .expect("limiter mutex poisoned");
        *available += 1;
        self.limiter.signal.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permits_are_released_on_drop() {
        let limiter = InFlightLimiter::new(1);
        {
            let _p = limiter.acquire();
        }
        let _p2 = limiter.acquire(); // would deadlock if the permit leaked
    }
}
